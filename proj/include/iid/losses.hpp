#ifndef IID_LOSSES_HPP_
#define IID_LOSSES_HPP_

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "iid/judgements.hpp"
#include "iid/tape.hpp"
#include "iid/tensor.hpp"

namespace iid {

struct LossWeights {
  double lambda1 = 0.35;
  double lambda2 = 0.1;      // 0.1 for pairwise supervision, 0.2 for dense
  double delta = 0.1;        // significance threshold on reflectance ratios
  double xi = 0.05;          // margin between neighboring classes
  double joint_scale = 2.0;  // pairwise loss scale when combined with dense

  void validate() const {
    if (!(delta > 0.0) || xi < 0.0 || lambda1 < 0.0 || lambda2 < 0.0) {
      throw std::invalid_argument("loss weights: delta > 0, xi >= 0, lambdas >= 0 required");
    }
  }
};

inline constexpr double kRatioFloor = 1e-4;

// Classification of a reflectance pair by relative difference; branches
// evaluated in fixed order (darker-1, darker-2, equal).
template <typename T>
Darker classify_pair(T r1, T r2, double delta) {
  const double a = std::max(static_cast<double>(r1), kRatioFloor);
  const double b = std::max(static_cast<double>(r2), kRatioFloor);
  if (b / a > 1.0 + delta) return Darker::kPoint1;
  if (a / b > 1.0 + delta) return Darker::kPoint2;
  return Darker::kEqual;
}

// Margin surrogate for the pair classification rule: hinge on the
// reflectance ratio for unequal labels, epsilon-insensitive band for equal
// ones. Zero subgradient at the kinks.
template <typename T>
T hinge_mu(Darker label, T r1, T r2, double delta, double xi) {
  const T margin_hi = static_cast<T>(1.0 + delta + xi);
  const T margin_lo = static_cast<T>(1.0 + delta - xi);
  switch (label) {
    case Darker::kPoint1: return std::max(T(0), margin_hi - r2 / r1);
    case Darker::kPoint2: return std::max(T(0), margin_hi - r1 / r2);
    default: {
      const T rho = std::max(r1 / r2, r2 / r1);
      return std::max(T(0), rho - margin_lo);
    }
  }
}

template <typename T>
void hinge_mu_grad(Darker label, T r1, T r2, double delta, double xi, T& d1, T& d2) {
  const T margin_hi = static_cast<T>(1.0 + delta + xi);
  const T margin_lo = static_cast<T>(1.0 + delta - xi);
  d1 = T(0);
  d2 = T(0);
  switch (label) {
    case Darker::kPoint1:
      if (margin_hi - r2 / r1 > T(0)) {
        d1 = r2 / (r1 * r1);
        d2 = -T(1) / r1;
      }
      break;
    case Darker::kPoint2:
      if (margin_hi - r1 / r2 > T(0)) {
        d1 = -T(1) / r2;
        d2 = r1 / (r2 * r2);
      }
      break;
    default:
      if (std::max(r1 / r2, r2 / r1) - margin_lo > T(0)) {
        if (r1 >= r2) {
          d1 = T(1) / r2;
          d2 = -r1 / (r2 * r2);
        } else {
          d2 = T(1) / r1;
          d1 = -r2 / (r1 * r1);
        }
      }
      break;
  }
}

// A judgement resolved to flat pixel indices of a concrete image.
struct PixelComparison {
  int idx1 = 0;
  int idx2 = 0;
  Darker darker = Darker::kEqual;
  double weight = 1.0;
};

// Point coordinates map to pixels by round(x * (W-1)), round(y * (H-1)).
inline int judgement_pixel_index(double frac_x, double frac_y, int height, int width) {
  const int px = static_cast<int>(std::lround(frac_x * (width - 1)));
  const int py = static_cast<int>(std::lround(frac_y * (height - 1)));
  return std::clamp(py, 0, height - 1) * width + std::clamp(px, 0, width - 1);
}

std::vector<PixelComparison> map_judgements_to_pixels(const JudgementSet& set, int height,
                                                      int width);

struct WhdrResult {
  double value = 0.0;
  bool zero_weight_warning = false;
};

// Weighted human disagreement rate of an albedo prediction against a
// judgement set. Samples the channel mean at each point (or the mean over a
// disk of the given pixel radius). Empty sets score 0 by convention.
WhdrResult whdr(const ImageTensor& albedo, const JudgementSet& judgements, double delta,
                int radius = 0);

template <typename T>
bool mean_floored(const TensorT<T>& t, int idx, int plane) {
  T acc = T(0);
  for (int c = 0; c < t.channels; ++c) acc += t.data[static_cast<size_t>(c) * plane + idx];
  return acc / static_cast<T>(t.channels) <= static_cast<T>(kRatioFloor);
}

// Sum_k w_k mu(J_k, rbar_k1, rbar_k2) over the channel mean of `albedo` at
// the comparison pixels, as a differentiable tape node. Ratios are floored
// at kRatioFloor with zero gradient where the floor engages.
template <typename T>
int judgement_hinge_node(TapeT<T>& tape, int albedo,
                         const std::vector<PixelComparison>& comparisons, double delta,
                         double xi) {
  const TensorT<T>& a = tape.value(albedo);
  const int plane = a.plane();
  auto comps = std::make_shared<std::vector<PixelComparison>>(comparisons);
  auto mean_at = [plane](const TensorT<T>& t, int idx) {
    T acc = T(0);
    for (int c = 0; c < t.channels; ++c) acc += t.data[static_cast<size_t>(c) * plane + idx];
    return std::max(acc / static_cast<T>(t.channels), static_cast<T>(kRatioFloor));
  };
  T total = T(0);
  for (const auto& cmp : *comps) {
    const T r1 = mean_at(a, cmp.idx1);
    const T r2 = mean_at(a, cmp.idx2);
    total += static_cast<T>(cmp.weight) * hinge_mu(cmp.darker, r1, r2, delta, xi);
  }
  return tape.custom(
      "judgement_hinge", {albedo}, TensorT<T>::scalar(total),
      [comps, mean_at, delta, xi](TapeT<T>& t, int self) {
        const auto& n = t.node(self);
        const TensorT<T>& av = t.value(n.parents[0]);
        TensorT<T>& da = t.grad(n.parents[0]);
        const T up = n.grad.data[0];
        const int plane2 = av.plane();
        const T inv_c = T(1) / static_cast<T>(av.channels);
        for (const auto& cmp : *comps) {
          const T r1 = mean_at(av, cmp.idx1);
          const T r2 = mean_at(av, cmp.idx2);
          T d1, d2;
          hinge_mu_grad(cmp.darker, r1, r2, delta, xi, d1, d2);
          const T w = static_cast<T>(cmp.weight) * up;
          // zero subgradient where the ratio floor engaged
          const bool floored1 = mean_floored(av, cmp.idx1, plane2);
          const bool floored2 = mean_floored(av, cmp.idx2, plane2);
          for (int c = 0; c < av.channels; ++c) {
            if (!floored1) da.data[static_cast<size_t>(c) * plane2 + cmp.idx1] += w * d1 * inv_c;
            if (!floored2) da.data[static_cast<size_t>(c) * plane2 + cmp.idx2] += w * d2 * inv_c;
          }
        }
      });
}

struct LossNodes {
  int total = -1;
  int di = -1;  // direct-output supervision
  int g = -1;   // guidance supervision
  int df = -1;  // filtered-output supervision
};

// Pairwise-supervised loss: L = L_di + lambda1 L_g + lambda2 L_df with
// weighted hinge sums over the direct reflectance and the filtered albedo
// and a mean-squared guidance term against a fixed target edge map.
template <typename T>
LossNodes loss_iiw(TapeT<T>& tape, int scalar_r, int filtered_albedo, int guidance_pred,
                   const TensorT<T>& guidance_target,
                   const std::vector<PixelComparison>& comparisons, const LossWeights& w) {
  w.validate();
  LossNodes out;
  out.di = judgement_hinge_node(tape, scalar_r, comparisons, w.delta, w.xi);
  out.df = judgement_hinge_node(tape, filtered_albedo, comparisons, w.delta, w.xi);
  out.g = tape.mse_to_target(guidance_pred, guidance_target);
  out.total = tape.add(out.di, tape.add(tape.scale(out.g, static_cast<T>(w.lambda1)),
                                        tape.scale(out.df, static_cast<T>(w.lambda2))));
  return out;
}

// Plain (non-tape) forward difference used to precompute dense targets.
template <typename T>
TensorT<T> forward_diff_tensor(const TensorT<T>& t, int axis) {
  const int oh = axis == 1 ? t.height - 1 : t.height;
  const int ow = axis == 0 ? t.width - 1 : t.width;
  TensorT<T> out(t.channels, oh, ow);
  for (int c = 0; c < t.channels; ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        out.at(c, y, x) = axis == 0 ? t.at(c, y, x + 1) - t.at(c, y, x)
                                    : t.at(c, y + 1, x) - t.at(c, y, x);
      }
    }
  }
  return out;
}

// Mask restricted to difference elements whose two source pixels are both
// included.
template <typename T>
TensorT<T> diff_mask(const TensorT<T>& mask, int axis) {
  const int oh = axis == 1 ? mask.height - 1 : mask.height;
  const int ow = axis == 0 ? mask.width - 1 : mask.width;
  TensorT<T> out(1, oh, ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const T a = mask.at(0, y, x);
      const T b = axis == 0 ? mask.at(0, y, x + 1) : mask.at(0, y + 1, x);
      out.at(0, y, x) = a * b;
    }
  }
  return out;
}

// Densely supervised loss:
//   L_df = ||R - R*||^2
//   L_di = lambda2 (||R' - R*||^2 + ||S - S*||^2)
//        + lambda1 (x/y forward-difference terms of R' and S)
//   L_g  = ||E' - E(R*)||^2
//   L    = L_di + lambda1 L_g + lambda2 L_df
// All norms are masked means per element.
template <typename T>
LossNodes loss_dense(TapeT<T>& tape, int albedo_direct, int shading_direct, int filtered_albedo,
                     int guidance_pred, const TensorT<T>& albedo_gt, const TensorT<T>& shading_gt,
                     const TensorT<T>& guidance_target, const TensorT<T>& mask,
                     const LossWeights& w) {
  w.validate();
  const bool has_mask = !mask.empty();
  const TensorT<T> mask_x = has_mask ? diff_mask(mask, 0) : TensorT<T>();
  const TensorT<T> mask_y = has_mask ? diff_mask(mask, 1) : TensorT<T>();

  LossNodes out;
  out.df = tape.mse_to_target(filtered_albedo, albedo_gt, mask);

  const int value_terms = tape.add(tape.mse_to_target(albedo_direct, albedo_gt, mask),
                                   tape.mse_to_target(shading_direct, shading_gt, mask));
  int grad_terms =
      tape.add(tape.mse_to_target(tape.forward_diff(albedo_direct, 0),
                                  forward_diff_tensor(albedo_gt, 0), mask_x),
               tape.mse_to_target(tape.forward_diff(albedo_direct, 1),
                                  forward_diff_tensor(albedo_gt, 1), mask_y));
  grad_terms = tape.add(grad_terms,
                        tape.add(tape.mse_to_target(tape.forward_diff(shading_direct, 0),
                                                    forward_diff_tensor(shading_gt, 0), mask_x),
                                 tape.mse_to_target(tape.forward_diff(shading_direct, 1),
                                                    forward_diff_tensor(shading_gt, 1), mask_y)));
  out.di = tape.add(tape.scale(value_terms, static_cast<T>(w.lambda2)),
                    tape.scale(grad_terms, static_cast<T>(w.lambda1)));
  out.g = tape.mse_to_target(guidance_pred, guidance_target);
  out.total = tape.add(out.di, tape.add(tape.scale(out.g, static_cast<T>(w.lambda1)),
                                        tape.scale(out.df, static_cast<T>(w.lambda2))));
  return out;
}

// Multi-source combination: joint_scale * pairwise-loss + dense-loss.
template <typename T>
int loss_joint(TapeT<T>& tape, int iiw_total, int dense_total, double joint_scale) {
  return tape.add(tape.scale(iiw_total, static_cast<T>(joint_scale)), dense_total);
}

}  // namespace iid

#endif  // IID_LOSSES_HPP_
