#include "iid/train.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>

#include "json.hpp"

#include "iid/checkpoint.hpp"
#include "iid/synth.hpp"

namespace iid {

namespace fs = std::filesystem;

std::string loss_mode_name(LossMode mode) {
  switch (mode) {
    case LossMode::kIiw: return "iiw";
    case LossMode::kDense: return "dense";
    default: return "joint";
  }
}

LossMode loss_mode_from_name(const std::string& name) {
  if (name == "iiw") return LossMode::kIiw;
  if (name == "dense") return LossMode::kDense;
  if (name == "joint") return LossMode::kJoint;
  throw std::invalid_argument("unknown loss mode '" + name + "'");
}

namespace {

nlohmann::ordered_json net_to_json(const NetConfig& n) {
  return {{"front-layers", n.front_layers},
          {"residual-blocks", n.residual_blocks},
          {"channels", n.channels},
          {"dilation", n.dilation},
          {"tail-layers", n.tail_layers},
          {"output-mode", n.output_mode == OutputMode::kScalarReflectance ? "scalar" : "dual"},
          {"branch-split-block", n.branch_split_block}};
}

NetConfig net_from_json(const nlohmann::json& j) {
  NetConfig n;
  n.front_layers = j.at("front-layers").get<int>();
  n.residual_blocks = j.at("residual-blocks").get<int>();
  n.channels = j.at("channels").get<int>();
  n.dilation = j.at("dilation").get<int>();
  n.tail_layers = j.at("tail-layers").get<int>();
  const std::string mode = j.at("output-mode").get<std::string>();
  if (mode == "scalar") {
    n.output_mode = OutputMode::kScalarReflectance;
  } else if (mode == "dual") {
    n.output_mode = OutputMode::kDualBranch;
  } else {
    throw std::invalid_argument("net config: unknown output mode '" + mode + "'");
  }
  n.branch_split_block = j.at("branch-split-block").get<int>();
  return n;
}

}  // namespace

std::string pipeline_config_to_json(const PipelineConfig& cfg, LossMode mode) {
  nlohmann::ordered_json j;
  j["net"] = net_to_json(cfg.net);
  j["guidance"] = {{"layers", cfg.guidance.layers},
                   {"channels", cfg.guidance.channels},
                   {"dilation", cfg.guidance.dilation}};
  j["filter"] = {{"sigma-s", cfg.filter.sigma_s},
                 {"sigma-r", cfg.filter.sigma_r},
                 {"iterations", cfg.filter.iterations}};
  j["loss-mode"] = loss_mode_name(mode);
  return j.dump(2);
}

void pipeline_config_from_json(const std::string& json_text, PipelineConfig* cfg, LossMode* mode) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("pipeline config: malformed JSON: ") + e.what());
  }
  if (cfg) {
    cfg->net = net_from_json(j.at("net"));
    cfg->guidance.layers = j.at("guidance").at("layers").get<int>();
    cfg->guidance.channels = j.at("guidance").at("channels").get<int>();
    cfg->guidance.dilation = j.at("guidance").at("dilation").get<int>();
    cfg->filter.sigma_s = j.at("filter").at("sigma-s").get<float>();
    cfg->filter.sigma_r = j.at("filter").at("sigma-r").get<float>();
    cfg->filter.iterations = j.at("filter").at("iterations").get<int>();
  }
  if (mode) *mode = loss_mode_from_name(j.at("loss-mode").get<std::string>());
}

IndexSplit split_dataset_indices(int count, bool holdout) {
  IndexSplit split;
  if (!holdout) {
    split.train.resize(count);
    for (int i = 0; i < count; ++i) split.train[i] = i;
    return split;
  }
  std::vector<int64_t> ids(count);
  for (int i = 0; i < count; ++i) ids[i] = i;
  const IiwSplit s = iiw_split(std::move(ids));
  for (int64_t i : s.train_ids) split.train.push_back(static_cast<int>(i));
  for (int64_t i : s.test_ids) split.test.push_back(static_cast<int>(i));
  return split;
}

PipelineOutputs run_inference(ParamStore& store, const PipelineConfig& cfg,
                              const ImageTensor& image) {
  Tape tape;
  ParamBinder<float> binder(tape, store, /*trainable=*/false);
  const auto nodes = build_pipeline(binder, cfg.net, cfg.guidance, cfg.filter, image);
  PipelineOutputs out;
  if (nodes.scalar_r >= 0) out.scalar_r = tape.value(nodes.scalar_r);
  out.albedo = tape.value(nodes.albedo);
  out.shading = tape.value(nodes.shading);
  out.guidance = tape.value(nodes.guidance_pred);
  out.filtered_albedo = tape.value(nodes.filtered_albedo);
  return out;
}

namespace {

constexpr const char* kAdamMPrefix = "adam.m.";
constexpr const char* kAdamVPrefix = "adam.v.";
constexpr const char* kMetaStep = "meta.step";

bool is_meta_array(const std::string& name) {
  return name.rfind(kAdamMPrefix, 0) == 0 || name.rfind(kAdamVPrefix, 0) == 0 ||
         name == kMetaStep;
}

void write_checkpoint_file(const std::string& path, const ParamStore& store,
                           AdamOptimizer<float>& opt, const std::string& config_json) {
  Checkpoint ckpt;
  ckpt.config_json = config_json;
  for (const auto& [name, tensor] : store.items()) ckpt.arrays.emplace_back(name, tensor);
  for (const auto& [name, tensor] : store.items()) {
    auto it = opt.states().find(name);
    if (it == opt.states().end() || it->second.m.empty()) continue;
    ckpt.arrays.emplace_back(kAdamMPrefix + name, it->second.m);
    ckpt.arrays.emplace_back(kAdamVPrefix + name, it->second.v);
  }
  ckpt.arrays.emplace_back(kMetaStep, ImageTensor::scalar(static_cast<float>(opt.step())));
  save_checkpoint(ckpt, path);
}

}  // namespace

void restore_from_checkpoint(const std::string& path, ParamStore& store,
                             AdamOptimizer<float>* optimizer, PipelineConfig* cfg,
                             LossMode* mode) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (cfg || mode) pipeline_config_from_json(ckpt.config_json, cfg, mode);
  for (const auto& [name, tensor] : ckpt.arrays) {
    if (is_meta_array(name)) continue;
    store.insert_loaded(name, tensor);
  }
  if (optimizer) {
    for (const auto& [name, tensor] : ckpt.arrays) {
      if (name.rfind(kAdamMPrefix, 0) == 0) {
        optimizer->states()[name.substr(std::string(kAdamMPrefix).size())].m = tensor;
      } else if (name.rfind(kAdamVPrefix, 0) == 0) {
        optimizer->states()[name.substr(std::string(kAdamVPrefix).size())].v = tensor;
      } else if (name == kMetaStep) {
        optimizer->set_step(static_cast<int64_t>(tensor.data[0]));
      }
    }
  }
}

namespace {

// Stateless per-step sample pick; resuming from a checkpoint therefore
// continues the exact sample sequence.
int pick_index(uint64_t seed, int64_t step, uint64_t stream, int count) {
  Rng rng(seed ^ (0xD1B54A32D192ED03ull * (stream + 1)), static_cast<uint64_t>(step));
  return static_cast<int>(rng.below(static_cast<uint64_t>(count)));
}

struct StepSample {
  const DecompositionSample* sample = nullptr;
  DecompositionSample cropped;  // backing storage when cropping

  const DecompositionSample& get() const { return sample ? *sample : cropped; }
};

struct LossValues {
  double total = 0, di = 0, g = 0, df = 0;
};

LossValues read_loss(const Tape& tape, const LossNodes& nodes) {
  LossValues v;
  v.total = tape.value(nodes.total).data[0];
  v.di = tape.value(nodes.di).data[0];
  v.g = tape.value(nodes.g).data[0];
  v.df = tape.value(nodes.df).data[0];
  return v;
}

}  // namespace

TrainResult train_run(const TrainOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  options.pipeline.net.validate();
  options.pipeline.guidance.validate();
  options.pipeline.filter.validate();
  options.weights_iiw.validate();
  options.weights_dense.validate();
  if (options.steps < 1) throw std::invalid_argument("train: steps must be >= 1");
  const bool needs_scalar = options.loss_mode != LossMode::kDense;
  if (needs_scalar && options.pipeline.net.output_mode != OutputMode::kScalarReflectance) {
    throw std::invalid_argument("train: " + loss_mode_name(options.loss_mode) +
                                " loss requires scalar-reflectance mode");
  }

  const auto samples = load_dataset(options.dataset_dir);
  if (samples.empty()) throw std::invalid_argument("train: dataset is empty");
  const IndexSplit split = split_dataset_indices(static_cast<int>(samples.size()),
                                                 options.holdout_split);
  if (split.train.empty()) throw std::invalid_argument("train: no training samples after split");

  const bool needs_judgements = options.loss_mode != LossMode::kDense;
  const bool needs_dense = options.loss_mode != LossMode::kIiw;
  for (int idx : split.train) {
    const auto& s = samples[idx];
    if (needs_judgements && (!s.judgements || s.judgements->comparisons.empty())) {
      throw std::invalid_argument("train: sample " + std::to_string(idx) +
                                  " has no judgements (required by " +
                                  loss_mode_name(options.loss_mode) + " loss)");
    }
    if (needs_dense && (s.albedo_gt.empty() || s.shading_gt.empty())) {
      throw std::invalid_argument("train: sample " + std::to_string(idx) +
                                  " has no dense ground truth (required by " +
                                  loss_mode_name(options.loss_mode) + " loss)");
    }
  }

  fs::create_directories(options.out_dir);
  const std::string config_json = pipeline_config_to_json(options.pipeline, options.loss_mode);
  {
    std::ofstream cfg_out(fs::path(options.out_dir) / "pipeline.json");
    cfg_out << config_json << "\n";
  }
  if (options.crop > 0) {
    std::ofstream sidecar(fs::path(options.out_dir) / "crops.json");
    sidecar << nlohmann::ordered_json{{"crop-size", options.crop}, {"seed", options.seed}}.dump(2)
            << "\n";
  }

  ParamStore store(options.seed);
  AdamOptimizer<float> opt(options.adam);
  if (!options.resume_checkpoint.empty()) {
    PipelineConfig stored_cfg;
    LossMode stored_mode;
    restore_from_checkpoint(options.resume_checkpoint, store, &opt, &stored_cfg, &stored_mode);
    if (pipeline_config_to_json(stored_cfg, stored_mode) != config_json) {
      throw std::invalid_argument("train: resume checkpoint config does not match this run");
    }
  }
  const int64_t start_step = opt.step();
  if (start_step >= options.steps) {
    throw std::invalid_argument("train: checkpoint already at or past the requested step count");
  }

  // Guidance targets, cached per sample when training on full images.
  std::vector<std::optional<ImageTensor>> proxy_target_cache(samples.size());
  std::vector<std::optional<ImageTensor>> gt_target_cache(samples.size());
  auto iiw_guidance_target = [&](int idx, const DecompositionSample& s) -> ImageTensor {
    if (options.crop == 0 && proxy_target_cache[idx]) return *proxy_target_cache[idx];
    ImageTensor target = edge_map(guidance_proxy(s.input, options.pipeline.filter));
    if (options.crop == 0) proxy_target_cache[idx] = target;
    return target;
  };
  auto dense_guidance_target = [&](int idx, const DecompositionSample& s) -> ImageTensor {
    if (options.crop == 0 && gt_target_cache[idx]) return *gt_target_cache[idx];
    ImageTensor target = edge_map(s.albedo_gt);
    if (options.crop == 0) gt_target_cache[idx] = target;
    return target;
  };

  auto fetch = [&](int idx, int64_t step, uint64_t stream) -> StepSample {
    StepSample out;
    if (options.crop == 0) {
      out.sample = &samples[idx];
      return out;
    }
    Rng rng(options.seed ^ (0x9E3779B97F4A7C15ull * (stream + 7)), static_cast<uint64_t>(step));
    out.cropped = random_crops(samples[idx], options.crop, 1, rng).front();
    return out;
  };

  const std::string csv_path = (fs::path(options.out_dir) / "loss.csv").string();
  std::ofstream csv(csv_path, start_step > 0 ? std::ios::app : std::ios::out);
  if (!csv) throw std::runtime_error("train: cannot write " + csv_path);
  if (start_step == 0) {
    csv << (options.loss_mode == LossMode::kJoint
                ? "step,total,iiw,dense,iiw_di,iiw_g,iiw_df,dense_di,dense_g,dense_df"
                : "step,total,di,g,df")
        << "\n";
  }
  csv.precision(10);

  const std::string ckpt_path = (fs::path(options.out_dir) / "checkpoint.bin").string();
  TrainResult result;
  result.csv_path = csv_path;
  result.checkpoint_path = ckpt_path;

  const int n_train = static_cast<int>(split.train.size());
  for (int64_t step = start_step + 1; step <= options.steps; ++step) {
    Tape tape;
    ParamBinder<float> binder(tape, store);
    double total_value = 0.0;

    if (options.loss_mode == LossMode::kJoint) {
      const int ia = split.train[pick_index(options.seed, step, 0x11, n_train)];
      const int ib = split.train[pick_index(options.seed, step, 0x22, n_train)];
      const StepSample sa = fetch(ia, step, 0x11);
      const StepSample sb = fetch(ib, step, 0x22);
      const auto nodes_a = build_pipeline(binder, options.pipeline.net, options.pipeline.guidance,
                                          options.pipeline.filter, sa.get().input);
      const auto comps = map_judgements_to_pixels(*sa.get().judgements, sa.get().input.height,
                                                  sa.get().input.width);
      const LossNodes iiw = loss_iiw(tape, nodes_a.scalar_r, nodes_a.filtered_albedo,
                                     nodes_a.guidance_pred, iiw_guidance_target(ia, sa.get()),
                                     comps, options.weights_iiw);
      const auto nodes_b = build_pipeline(binder, options.pipeline.net, options.pipeline.guidance,
                                          options.pipeline.filter, sb.get().input);
      const LossNodes dense = loss_dense(tape, nodes_b.albedo, nodes_b.shading,
                                         nodes_b.filtered_albedo, nodes_b.guidance_pred,
                                         sb.get().albedo_gt, sb.get().shading_gt,
                                         dense_guidance_target(ib, sb.get()), sb.get().mask,
                                         options.weights_dense);
      const int total =
          loss_joint(tape, iiw.total, dense.total, options.weights_iiw.joint_scale);
      tape.backward(total);
      const LossValues li = read_loss(tape, iiw);
      const LossValues ld = read_loss(tape, dense);
      total_value = tape.value(total).data[0];
      csv << step << "," << total_value << "," << li.total << "," << ld.total << "," << li.di
          << "," << li.g << "," << li.df << "," << ld.di << "," << ld.g << "," << ld.df << "\n";
    } else {
      const int idx = split.train[pick_index(options.seed, step, 0x11, n_train)];
      const StepSample ss = fetch(idx, step, 0x11);
      const DecompositionSample& s = ss.get();
      const auto nodes = build_pipeline(binder, options.pipeline.net, options.pipeline.guidance,
                                        options.pipeline.filter, s.input);
      LossNodes loss;
      if (options.loss_mode == LossMode::kIiw) {
        const auto comps = map_judgements_to_pixels(*s.judgements, s.input.height, s.input.width);
        loss = loss_iiw(tape, nodes.scalar_r, nodes.filtered_albedo, nodes.guidance_pred,
                        iiw_guidance_target(idx, s), comps, options.weights_iiw);
      } else {
        loss = loss_dense(tape, nodes.albedo, nodes.shading, nodes.filtered_albedo,
                          nodes.guidance_pred, s.albedo_gt, s.shading_gt,
                          dense_guidance_target(idx, s), s.mask, options.weights_dense);
      }
      tape.backward(loss.total);
      const LossValues lv = read_loss(tape, loss);
      total_value = lv.total;
      csv << step << "," << lv.total << "," << lv.di << "," << lv.g << "," << lv.df << "\n";
    }

    opt.begin_step();
    for (const auto& [name, node_id] : binder.bound()) {
      opt.update(name, store.at(name), tape.grad(node_id));
    }

    if (step == start_step + 1) result.first_total = total_value;
    result.last_total = total_value;
    ++result.steps_run;
    if ((options.checkpoint_every > 0 && step % options.checkpoint_every == 0) ||
        step == options.steps) {
      write_checkpoint_file(ckpt_path, store, opt, config_json);
    }
  }

  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace iid
