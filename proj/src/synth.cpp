#include "iid/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "iid/image_io.hpp"
#include "iid/losses.hpp"

namespace iid {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (image_size < 16) throw std::invalid_argument("synth: image size must be >= 16");
  if (region_count < 2) throw std::invalid_argument("synth: region count must be >= 2");
  if (shading_bumps < 0 || judgement_pairs < 0) {
    throw std::invalid_argument("synth: counts must be nonnegative");
  }
  if (!(shading_amplitude >= 0.0) || shading_amplitude >= 1.0) {
    throw std::invalid_argument("synth: shading amplitude must be in [0, 1)");
  }
}

DecompositionSample generate_sample(const SynthConfig& config, uint64_t sample_index) {
  config.validate();
  Rng rng(config.seed, sample_index);
  const int n = config.image_size;

  // Piecewise-constant Voronoi albedo with per-region random colors.
  struct Seed {
    double x, y;
    float color[3];
  };
  std::vector<Seed> seeds(config.region_count);
  for (auto& s : seeds) {
    s.x = rng.uniform(0.0, n);
    s.y = rng.uniform(0.0, n);
    for (auto& c : s.color) c = static_cast<float>(rng.uniform(0.1, 0.9));
  }
  ImageTensor albedo(3, n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double best = 1e30;
      const Seed* best_seed = &seeds[0];
      for (const auto& s : seeds) {
        const double dx = x + 0.5 - s.x, dy = y + 0.5 - s.y;
        const double d = dx * dx + dy * dy;
        if (d < best) {
          best = d;
          best_seed = &s;
        }
      }
      for (int c = 0; c < 3; ++c) albedo.at(c, y, x) = best_seed->color[c];
    }
  }

  // Smooth grayscale shading: one minus a sum of random Gaussian bumps,
  // clamped to [0.1, 1]. Stored expanded to three equal channels.
  struct Bump {
    double cx, cy, sigma, amp;
  };
  std::vector<Bump> bumps(config.shading_bumps);
  for (auto& b : bumps) {
    b.cx = rng.uniform(0.0, n);
    b.cy = rng.uniform(0.0, n);
    b.sigma = rng.uniform(n / 8.0, n / 3.0);
    b.amp = config.shading_amplitude * rng.uniform(0.3, 1.0);
  }
  ImageTensor shading(3, n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double s = 1.0;
      for (const auto& b : bumps) {
        const double dx = x + 0.5 - b.cx, dy = y + 0.5 - b.cy;
        s -= b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
      }
      const float v = static_cast<float>(std::clamp(s, 0.1, 1.0));
      for (int c = 0; c < 3; ++c) shading.at(c, y, x) = v;
    }
  }

  DecompositionSample sample;
  sample.albedo_gt = albedo;
  sample.shading_gt = shading;
  sample.input = ImageTensor(3, n, n);
  for (size_t i = 0; i < sample.input.data.size(); ++i) {
    sample.input.data[i] = albedo.data[i] * shading.data[i];
  }

  // Pairwise judgements labeled from the true albedo at delta = 0.1.
  JudgementSet js;
  for (int k = 0; k < config.judgement_pairs; ++k) {
    int x1, y1, x2, y2;
    do {
      x1 = static_cast<int>(rng.below(n));
      y1 = static_cast<int>(rng.below(n));
      x2 = static_cast<int>(rng.below(n));
      y2 = static_cast<int>(rng.below(n));
    } while (x1 == x2 && y1 == y2);
    auto mean_at = [&](int x, int y) {
      double acc = 0.0;
      for (int c = 0; c < 3; ++c) acc += albedo.at(c, y, x);
      return acc / 3.0;
    };
    JudgementSet::Point p1{2 * k, n > 1 ? static_cast<double>(x1) / (n - 1) : 0.0,
                           n > 1 ? static_cast<double>(y1) / (n - 1) : 0.0};
    JudgementSet::Point p2{2 * k + 1, n > 1 ? static_cast<double>(x2) / (n - 1) : 0.0,
                           n > 1 ? static_cast<double>(y2) / (n - 1) : 0.0};
    JudgementSet::Comparison cmp;
    cmp.point1 = p1.id;
    cmp.point2 = p2.id;
    cmp.darker = classify_pair(mean_at(x1, y1), mean_at(x2, y2), 0.1);
    cmp.weight = 1.0;
    js.points.push_back(p1);
    js.points.push_back(p2);
    js.comparisons.push_back(cmp);
  }
  sample.judgements = std::move(js);
  sample.validate();
  return sample;
}

std::vector<DecompositionSample> generate_dataset(const SynthConfig& config, int count) {
  std::vector<DecompositionSample> out(count);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < count; ++i) out[i] = generate_sample(config, i);
  return out;
}

namespace {

std::string sample_dir_name(size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu", index);
  return buf;
}

nlohmann::ordered_json config_to_json(const SynthConfig& c) {
  return {{"image-size", c.image_size},
          {"region-count", c.region_count},
          {"shading-bumps", c.shading_bumps},
          {"shading-amplitude", c.shading_amplitude},
          {"judgement-pairs", c.judgement_pairs},
          {"seed", c.seed}};
}

}  // namespace

std::string export_dataset(const std::vector<DecompositionSample>& samples,
                           const SynthConfig& config, const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["version"] = 1;
  manifest["config"] = config_to_json(config);
  manifest["count"] = samples.size();
  manifest["samples"] = nlohmann::json::array();
  for (size_t i = 0; i < samples.size(); ++i) {
    const std::string name = sample_dir_name(i);
    const fs::path sdir = fs::path(dir) / name;
    fs::create_directories(sdir);
    save_image(samples[i].input, (sdir / "input.png").string(), 16);
    save_image(samples[i].albedo_gt, (sdir / "albedo.png").string(), 16);
    save_image(samples[i].shading_gt, (sdir / "shading.png").string(), 16);
    if (samples[i].judgements) {
      save_judgements(*samples[i].judgements, (sdir / "judgements.json").string());
    }
    manifest["samples"].push_back({{"dir", name},
                                   {"input", name + "/input.png"},
                                   {"albedo", name + "/albedo.png"},
                                   {"shading", name + "/shading.png"},
                                   {"judgements", samples[i].judgements
                                                      ? nlohmann::json(name + "/judgements.json")
                                                      : nlohmann::json(nullptr)},
                                   {"sample-seed", config.seed},
                                   {"sample-index", i}});
  }
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::ofstream out(manifest_path);
  if (!out) throw std::runtime_error("export_dataset: cannot write " + manifest_path);
  out << manifest.dump(2) << "\n";
  return manifest_path;
}

std::vector<DecompositionSample> load_dataset(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw std::invalid_argument("load_dataset: cannot open " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("load_dataset: malformed manifest: " + std::string(e.what()));
  }
  std::vector<DecompositionSample> samples;
  for (const auto& entry : manifest.at("samples")) {
    DecompositionSample s;
    s.input = load_image((fs::path(dir) / entry.at("input").get<std::string>()).string());
    s.albedo_gt = load_image((fs::path(dir) / entry.at("albedo").get<std::string>()).string());
    s.shading_gt = load_image((fs::path(dir) / entry.at("shading").get<std::string>()).string());
    if (entry.contains("judgements") && !entry.at("judgements").is_null()) {
      s.judgements =
          load_judgements((fs::path(dir) / entry.at("judgements").get<std::string>()).string());
    }
    s.validate();
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace iid
