#include "iid/gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <functional>

#include "iid/losses.hpp"
#include "iid/pipeline.hpp"

namespace iid {

namespace {

using DT = TensorT<double>;
using DTape = TapeT<double>;

struct BuildResult {
  int loss = -1;
  std::vector<int> leaves;  // one per harness input, same order
};
using BuildFn = std::function<BuildResult(DTape&, const std::vector<DT>&)>;

double eval_loss(const BuildFn& build, const std::vector<DT>& inputs) {
  DTape tape;
  const BuildResult br = build(tape, inputs);
  return tape.value(br.loss).data[0];
}

std::vector<DT> analytic_grads(const BuildFn& build, const std::vector<DT>& inputs,
                               bool corrupt) {
  DTape tape;
  if (corrupt) tape.set_relu_backward_scale_for_tests(1.01);
  const BuildResult br = build(tape, inputs);
  tape.backward(br.loss);
  std::vector<DT> grads;
  grads.reserve(br.leaves.size());
  for (int id : br.leaves) grads.push_back(tape.grad(id));
  return grads;
}

struct Harness {
  uint64_t seed;
  double tolerance;
  bool corrupt;
  GradcheckReport* report;

  void check(const std::string& name, const std::vector<DT>& inputs, const BuildFn& build,
             int coords_per_input = 10) {
    const auto grads = analytic_grads(build, inputs, corrupt);
    Rng rng(seed ^ std::hash<std::string>{}(name));
    double max_rel = 0.0;
    int done = 0;
    for (size_t i = 0; i < inputs.size(); ++i) {
      if (inputs[i].numel() == 0) continue;
      for (int k = 0; k < coords_per_input; ++k) {
        const size_t j = rng.below(inputs[i].numel());
        const double x0 = inputs[i].data[j];
        const double h = 1e-5 * std::max(1.0, std::abs(x0));
        std::vector<DT> shifted = inputs;
        shifted[i].data[j] = x0 + h;
        const double f_plus = eval_loss(build, shifted);
        shifted[i].data[j] = x0 - h;
        const double f_minus = eval_loss(build, shifted);
        const double fd = (f_plus - f_minus) / (2.0 * h);
        const double an = grads[i].data[j];
        const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-4});
        max_rel = std::max(max_rel, rel);
        ++done;
      }
    }
    report->entries.push_back({name, max_rel, done, max_rel < tolerance});
  }
};

// Scalar readout of an arbitrary tensor node with fixed random weights so
// the upstream gradient is non-uniform.
int weighted_readout(DTape& tape, int node, Rng& rng) {
  DT w(tape.value(node).channels, tape.value(node).height, tape.value(node).width);
  for (auto& v : w.data) v = rng.uniform(-1.0, 1.0);
  return tape.sum_all(tape.mul(node, tape.leaf(std::move(w))));
}

DT rand_tensor(Rng& rng, int c, int h, int w, double lo, double hi) {
  DT t(c, h, w);
  rng.fill_uniform(t, lo, hi);
  return t;
}

// magnitudes in [0.1, 1], sign random: keeps relu inputs away from the kink
DT rand_signed_away_from_zero(Rng& rng, int c, int h, int w) {
  DT t(c, h, w);
  for (auto& v : t.data) v = rng.uniform(0.1, 1.0) * (rng.below(2) ? 1.0 : -1.0);
  return t;
}

void check_primitive_ops(Harness& hx) {
  Rng rng(hx.seed + 1);

  {
    std::vector<DT> in = {rand_tensor(rng, 2, 8, 8, -1, 1), rand_tensor(rng, 6, 3, 3, -0.5, 0.5),
                          rand_tensor(rng, 3, 1, 1, -0.2, 0.2)};
    uint64_t s = hx.seed + 101;
    hx.check("conv2d", in, [s](DTape& t, const std::vector<DT>& v) {
      const int x = t.leaf(v[0], true), w = t.leaf(v[1], true), b = t.leaf(v[2], true);
      Rng r(s);
      return BuildResult{weighted_readout(t, t.conv2d(x, w, b, 1, 2), r), {x, w, b}};
    });
  }
  {
    std::vector<DT> in = {rand_tensor(rng, 2, 6, 6, -1, 1), rand_tensor(rng, 6, 3, 3, -0.5, 0.5),
                          rand_tensor(rng, 3, 1, 1, -0.2, 0.2)};
    uint64_t s = hx.seed + 102;
    hx.check("conv2d-stride2", in, [s](DTape& t, const std::vector<DT>& v) {
      const int x = t.leaf(v[0], true), w = t.leaf(v[1], true), b = t.leaf(v[2], true);
      Rng r(s);
      return BuildResult{weighted_readout(t, t.conv2d(x, w, b, 2, 1), r), {x, w, b}};
    });
  }
  {
    std::vector<DT> in = {rand_signed_away_from_zero(rng, 2, 6, 6)};
    uint64_t s = hx.seed + 103;
    hx.check("relu", in, [s](DTape& t, const std::vector<DT>& v) {
      const int x = t.leaf(v[0], true);
      Rng r(s);
      return BuildResult{weighted_readout(t, t.relu(x), r), {x}};
    });
  }
  {
    std::vector<DT> in = {rand_tensor(rng, 2, 6, 6, -2, 2)};
    uint64_t s = hx.seed + 104;
    hx.check("softplus", in, [s](DTape& t, const std::vector<DT>& v) {
      const int x = t.leaf(v[0], true);
      Rng r(s);
      return BuildResult{weighted_readout(t, t.softplus(x), r), {x}};
    });
  }
  {
    // keep values away from the clamp floor at 0.5
    DT x(2, 5, 5);
    for (auto& v : x.data) {
      v = rng.uniform(0.0, 1.0);
      if (v > 0.4 && v < 0.6) v += 0.3;
    }
    uint64_t s = hx.seed + 105;
    hx.check("clamp-min", {x}, [s](DTape& t, const std::vector<DT>& v) {
      const int x2 = t.leaf(v[0], true);
      Rng r(s);
      return BuildResult{weighted_readout(t, t.clamp_min(x2, 0.5), r), {x2}};
    });
  }
  {
    std::vector<DT> in = {rand_tensor(rng, 3, 6, 6, -1, 1), rand_tensor(rng, 3, 1, 1, 0.5, 1.5),
                          rand_tensor(rng, 3, 1, 1, -0.5, 0.5)};
    uint64_t s = hx.seed + 106;
    hx.check("channel-norm", in, [s](DTape& t, const std::vector<DT>& v) {
      const int x = t.leaf(v[0], true), g = t.leaf(v[1], true), b = t.leaf(v[2], true);
      Rng r(s);
      return BuildResult{weighted_readout(t, t.channel_norm(x, g, b, 1e-5), r), {x, g, b}};
    });
  }
  {
    std::vector<DT> in = {rand_tensor(rng, 2, 5, 5, -1, 1), rand_tensor(rng, 2, 5, 5, -1, 1)};
    uint64_t s = hx.seed + 107;
    hx.check("residual-add", in, [s](DTape& t, const std::vector<DT>& v) {
      const int a = t.leaf(v[0], true), b = t.leaf(v[1], true);
      Rng r(s);
      return BuildResult{weighted_readout(t, t.add(a, b), r), {a, b}};
    });
  }
  {
    std::vector<DT> in = {rand_tensor(rng, 1, 5, 5, 0.2, 1.0), rand_tensor(rng, 3, 5, 5, -1, 1)};
    uint64_t s = hx.seed + 108;
    hx.check("mul-broadcast", in, [s](DTape& t, const std::vector<DT>& v) {
      const int a = t.leaf(v[0], true), b = t.leaf(v[1], true);
      Rng r(s);
      return BuildResult{weighted_readout(t, t.mul(a, b), r), {a, b}};
    });
  }
  {
    std::vector<DT> in = {rand_tensor(rng, 3, 5, 5, -1, 1), rand_tensor(rng, 1, 5, 5, 0.5, 1.5)};
    uint64_t s = hx.seed + 109;
    hx.check("div-broadcast", in, [s](DTape& t, const std::vector<DT>& v) {
      const int a = t.leaf(v[0], true), b = t.leaf(v[1], true);
      Rng r(s);
      return BuildResult{weighted_readout(t, t.div(a, b), r), {a, b}};
    });
  }
  {
    std::vector<DT> in = {rand_tensor(rng, 3, 5, 5, -1, 1)};
    uint64_t s = hx.seed + 110;
    hx.check("channel-mean", in, [s](DTape& t, const std::vector<DT>& v) {
      const int x = t.leaf(v[0], true);
      Rng r(s);
      return BuildResult{weighted_readout(t, t.channel_mean(x), r), {x}};
    });
  }
  {
    std::vector<DT> in = {rand_tensor(rng, 1, 4, 4, -1, 1)};
    uint64_t s = hx.seed + 111;
    hx.check("broadcast-channels", in, [s](DTape& t, const std::vector<DT>& v) {
      const int x = t.leaf(v[0], true);
      Rng r(s);
      return BuildResult{weighted_readout(t, t.broadcast_channels(x, 3), r), {x}};
    });
  }
  {
    std::vector<DT> in = {rand_tensor(rng, 3, 5, 5, -1, 1), rand_tensor(rng, 1, 5, 5, -1, 1)};
    uint64_t s = hx.seed + 112;
    hx.check("concat-channels", in, [s](DTape& t, const std::vector<DT>& v) {
      const int a = t.leaf(v[0], true), b = t.leaf(v[1], true);
      Rng r(s);
      return BuildResult{weighted_readout(t, t.concat_channels(a, b), r), {a, b}};
    });
  }
  {
    std::vector<DT> in = {rand_tensor(rng, 2, 5, 7, -1, 1)};
    uint64_t s = hx.seed + 113;
    hx.check("upsample2x", in, [s](DTape& t, const std::vector<DT>& v) {
      const int x = t.leaf(v[0], true);
      Rng r(s);
      return BuildResult{weighted_readout(t, t.upsample2x(x), r), {x}};
    });
  }
  {
    std::vector<DT> in = {rand_tensor(rng, 2, 5, 5, -1, 1)};
    uint64_t s = hx.seed + 114;
    hx.check("pad-edge-crop", in, [s](DTape& t, const std::vector<DT>& v) {
      const int x = t.leaf(v[0], true);
      Rng r(s);
      const int padded = t.pad_edge(x, 1, 1);
      return BuildResult{weighted_readout(t, t.crop_to(padded, 4, 4), r), {x}};
    });
  }
  {
    std::vector<DT> in = {rand_tensor(rng, 2, 5, 5, -1, 1)};
    uint64_t s = hx.seed + 115;
    hx.check("forward-diff", in, [s](DTape& t, const std::vector<DT>& v) {
      const int x = t.leaf(v[0], true);
      Rng r(s);
      const int lx = weighted_readout(t, t.forward_diff(x, 0), r);
      const int ly = weighted_readout(t, t.forward_diff(x, 1), r);
      return BuildResult{t.add(lx, ly), {x}};
    });
  }
  {
    DT target = rand_tensor(rng, 2, 5, 5, 0, 1);
    DT mask(1, 5, 5);
    for (auto& v : mask.data) v = rng.below(4) ? 1.0 : 0.0;
    std::vector<DT> in = {rand_tensor(rng, 2, 5, 5, 0, 1)};
    hx.check("mse-to-target", in, [target, mask](DTape& t, const std::vector<DT>& v) {
      const int x = t.leaf(v[0], true);
      return BuildResult{t.mse_to_target(x, target, mask), {x}};
    });
  }
  {
    std::vector<DT> in = {rand_tensor(rng, 1, 6, 6, 0.2, 1.5), rand_tensor(rng, 3, 6, 6, 0.05, 1.0)};
    uint64_t s = hx.seed + 116;
    hx.check("achromatic-reconstruct", in, [s](DTape& t, const std::vector<DT>& v) {
      const int rr = t.leaf(v[0], true), img = t.leaf(v[1], true);
      Rng r(s);
      const auto [albedo, shading] = achromatic_reconstruct(t, rr, img);
      return BuildResult{t.add(weighted_readout(t, albedo, r), weighted_readout(t, shading, r)),
                         {rr, img}};
    });
  }
}

void check_domain_filter(Harness& hx) {
  Rng rng(hx.seed + 2);
  for (int inst = 0; inst < 5; ++inst) {
    std::vector<DT> in = {rand_tensor(rng, 2, 8, 8, 0.0, 1.0), rand_tensor(rng, 1, 8, 8, 0.0, 0.5)};
    FilterParamsT<double> fp;  // defaults: 60 / 0.4 / 3
    uint64_t s = hx.seed + 200 + inst;
    hx.check("domain-filter[" + std::to_string(inst) + "]", in,
             [fp, s](DTape& t, const std::vector<DT>& v) {
               const int sig = t.leaf(v[0], true), guide = t.leaf(v[1], true);
               Rng r(s);
               return BuildResult{
                   weighted_readout(t, domain_filter_node(t, sig, guide, fp), r), {sig, guide}};
             });
  }
}

std::vector<PixelComparison> kink_safe_comparisons(Rng& rng, const DT& albedo, int count,
                                                   double delta, double xi) {
  std::vector<PixelComparison> comps;
  const int plane = albedo.plane();
  auto mean_at = [&](int idx) {
    double acc = 0.0;
    for (int c = 0; c < albedo.channels; ++c) acc += albedo.data[c * plane + idx];
    return acc / albedo.channels;
  };
  int guard = 0;
  while (static_cast<int>(comps.size()) < count && guard++ < 10000) {
    PixelComparison pc;
    pc.idx1 = static_cast<int>(rng.below(plane));
    pc.idx2 = static_cast<int>(rng.below(plane));
    if (pc.idx1 == pc.idx2) continue;
    const double r1 = mean_at(pc.idx1), r2 = mean_at(pc.idx2);
    const double rho = std::max(r1 / r2, r2 / r1);
    // stay clear of both hinge kinks so finite differences are valid
    if (std::abs(rho - (1.0 + delta + xi)) < 5e-3 || std::abs(rho - (1.0 + delta - xi)) < 5e-3) {
      continue;
    }
    const int pick = static_cast<int>(rng.below(3));
    pc.darker = pick == 0 ? Darker::kPoint1 : (pick == 1 ? Darker::kPoint2 : Darker::kEqual);
    pc.weight = rng.uniform(0.2, 1.0);
    comps.push_back(pc);
  }
  return comps;
}

void check_losses(Harness& hx) {
  Rng rng(hx.seed + 3);
  LossWeights weights;

  {
    DT albedo = rand_tensor(rng, 3, 6, 6, 0.3, 1.5);
    const auto comps = kink_safe_comparisons(rng, albedo, 8, weights.delta, weights.xi);
    hx.check("hinge-mu", {albedo}, [comps, weights](DTape& t, const std::vector<DT>& v) {
      const int x = t.leaf(v[0], true);
      return BuildResult{judgement_hinge_node(t, x, comps, weights.delta, weights.xi), {x}};
    });
  }
  {
    DT r = rand_tensor(rng, 1, 6, 6, 0.3, 1.5);
    DT filtered = rand_tensor(rng, 3, 6, 6, 0.3, 1.5);
    DT guide = rand_tensor(rng, 1, 6, 6, 0.0, 1.0);
    DT target = rand_tensor(rng, 1, 6, 6, 0.0, 1.0);
    const auto comps_r = kink_safe_comparisons(rng, r, 6, weights.delta, weights.xi);
    // the same pairs must be kink-safe on the filtered map too
    DT merged = filtered;
    const auto comps = [&] {
      auto c = comps_r;
      auto safe = kink_safe_comparisons(rng, merged, 6, weights.delta, weights.xi);
      c.insert(c.end(), safe.begin(), safe.end());
      return c;
    }();
    hx.check("loss-iiw", {r, filtered, guide},
             [comps, target, weights](DTape& t, const std::vector<DT>& v) {
               const int r2 = t.leaf(v[0], true);
               const int f2 = t.leaf(v[1], true);
               const int g2 = t.leaf(v[2], true);
               const LossNodes ln = loss_iiw(t, r2, f2, g2, target, comps, weights);
               return BuildResult{ln.total, {r2, f2, g2}};
             });
  }
  {
    LossWeights dense_w = weights;
    dense_w.lambda2 = 0.2;
    DT rp = rand_tensor(rng, 3, 6, 6, 0.0, 1.0);
    DT sp = rand_tensor(rng, 3, 6, 6, 0.0, 1.0);
    DT filt = rand_tensor(rng, 3, 6, 6, 0.0, 1.0);
    DT guide = rand_tensor(rng, 1, 6, 6, 0.0, 1.0);
    DT r_gt = rand_tensor(rng, 3, 6, 6, 0.0, 1.0);
    DT s_gt = rand_tensor(rng, 3, 6, 6, 0.0, 1.0);
    DT e_gt = rand_tensor(rng, 1, 6, 6, 0.0, 1.0);
    DT mask(1, 6, 6);
    for (auto& v : mask.data) v = rng.below(5) ? 1.0 : 0.0;
    hx.check("loss-dense", {rp, sp, filt, guide},
             [=](DTape& t, const std::vector<DT>& v) {
               const int a = t.leaf(v[0], true);
               const int s = t.leaf(v[1], true);
               const int f = t.leaf(v[2], true);
               const int g = t.leaf(v[3], true);
               const LossNodes ln = loss_dense(t, a, s, f, g, r_gt, s_gt, e_gt, mask, dense_w);
               return BuildResult{ln.total, {a, s, f, g}};
             });
  }
}

// Full pipelines at toy scale, differentiated with respect to every network
// parameter (a few coordinates each).
void check_pipelines(Harness& hx) {
  Rng rng(hx.seed + 4);

  NetConfig scalar_cfg;
  scalar_cfg.front_layers = 2;
  scalar_cfg.residual_blocks = 2;
  scalar_cfg.channels = 6;
  scalar_cfg.tail_layers = 2;
  GuidanceConfig guide_cfg;
  guide_cfg.layers = 4;
  guide_cfg.channels = 6;
  FilterParamsT<double> fp;
  LossWeights weights;

  const DT image = rand_tensor(rng, 3, 12, 12, 0.05, 1.0);
  const DT guidance_target = edge_map(guidance_proxy(image, fp));

  auto snapshot_params = [&](const NetConfig& net_cfg, auto&& builder) {
    std::vector<std::string> names;
    std::vector<DT> values;
    ParamStoreT<double> store(hx.seed + 40);
    DTape tape;
    ParamBinder<double> binder(tape, store, true);
    builder(binder);
    for (const auto& [n, tv] : store.items()) {
      names.push_back(n);
      values.push_back(tv);
    }
    (void)net_cfg;
    return std::make_pair(names, values);
  };

  {
    auto [names, params] = snapshot_params(scalar_cfg, [&](ParamBinder<double>& b) {
      build_pipeline(b, scalar_cfg, guide_cfg, fp, image);
    });
    // comparisons chosen on the initial prediction, away from hinge kinks
    std::vector<PixelComparison> comps;
    {
      ParamStoreT<double> store(hx.seed + 40);
      DTape tape;
      ParamBinder<double> binder(tape, store, true);
      const auto nodes = build_pipeline(binder, scalar_cfg, guide_cfg, fp, image);
      Rng crng(hx.seed + 41);
      comps = kink_safe_comparisons(crng, tape.value(nodes.scalar_r), 6, weights.delta, weights.xi);
    }
    hx.check(
        "pipeline-iiw", params,
        [=](DTape& t, const std::vector<DT>& v) {
          ParamStoreT<double> store(0);
          for (size_t i = 0; i < names.size(); ++i) store.insert_loaded(names[i], v[i]);
          ParamBinder<double> binder(t, store, true);
          const auto nodes = build_pipeline(binder, scalar_cfg, guide_cfg, fp, image);
          const LossNodes ln = loss_iiw(t, nodes.scalar_r, nodes.filtered_albedo,
                                        nodes.guidance_pred, guidance_target, comps, weights);
          std::vector<int> leaves;
          for (const auto& [n, id] : binder.bound()) leaves.push_back(id);
          return BuildResult{ln.total, leaves};
        },
        /*coords_per_input=*/1);
  }
  {
    NetConfig dual_cfg = scalar_cfg;
    dual_cfg.output_mode = OutputMode::kDualBranch;
    dual_cfg.branch_split_block = 1;
    LossWeights dense_w = weights;
    dense_w.lambda2 = 0.2;
    const DT albedo_gt = rand_tensor(rng, 3, 12, 12, 0.1, 0.9);
    const DT shading_gt = rand_tensor(rng, 3, 12, 12, 0.1, 1.0);
    const DT e_gt = edge_map(albedo_gt);
    auto [names, params] = snapshot_params(dual_cfg, [&](ParamBinder<double>& b) {
      build_pipeline(b, dual_cfg, guide_cfg, fp, image);
    });
    hx.check(
        "pipeline-dense", params,
        [=](DTape& t, const std::vector<DT>& v) {
          ParamStoreT<double> store(0);
          for (size_t i = 0; i < names.size(); ++i) store.insert_loaded(names[i], v[i]);
          ParamBinder<double> binder(t, store, true);
          const auto nodes = build_pipeline(binder, dual_cfg, guide_cfg, fp, image);
          const LossNodes ln = loss_dense(t, nodes.albedo, nodes.shading, nodes.filtered_albedo,
                                          nodes.guidance_pred, albedo_gt, shading_gt, e_gt, DT(),
                                          dense_w);
          std::vector<int> leaves;
          for (const auto& [n, id] : binder.bound()) leaves.push_back(id);
          return BuildResult{ln.total, leaves};
        },
        /*coords_per_input=*/1);
  }
}

}  // namespace

GradcheckReport run_gradcheck(uint64_t seed, double tolerance, bool corrupt_relu_adjoint) {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckReport report;
  report.tolerance = tolerance;
  Harness hx{seed, tolerance, corrupt_relu_adjoint, &report};
  check_primitive_ops(hx);
  check_domain_filter(hx);
  check_losses(hx);
  check_pipelines(hx);
  report.all_pass = true;
  for (const auto& e : report.entries) {
    report.max_rel_err = std::max(report.max_rel_err, e.max_rel_err);
    report.all_pass = report.all_pass && e.pass;
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace iid
