#ifndef IID_METRICS_HPP_
#define IID_METRICS_HPP_

#include <optional>
#include <string>

#include "iid/tensor.hpp"

namespace iid {

// Evaluation summary; unset fields serialize as null. Key names in the
// JSON form are fixed (whdr, mse-albedo, ..., dssim-average).
struct MetricsReport {
  std::optional<double> whdr;
  bool whdr_zero_weight = false;
  std::optional<double> mse_albedo, mse_shading, mse_average;
  std::optional<double> lmse_albedo, lmse_shading, lmse_average;
  std::optional<double> dssim_albedo, dssim_shading, dssim_average;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& json_text);
};

// Mean squared error over unmasked pixels. With scale_invariant, pred is
// first rescaled by the least-squares optimal alpha = <pred,gt>/<pred,pred>
// (alpha = 0 when pred is identically zero).
double mse_scaled(const ImageTensor& pred, const ImageTensor& gt, const ImageTensor& mask,
                  bool scale_invariant);

// Local scale-invariant MSE over half-overlapping windows (positions 0,
// step, 2*step, ... plus a final flush-to-border window on each axis):
//   sum_w min_alpha ||alpha pred_w - gt_w||^2 / sum_w ||gt_w||^2.
// Masked pixels are excluded per window; empty windows are skipped.
// Returns nullopt when gt is identically zero over the mask.
std::optional<double> lmse(const ImageTensor& pred, const ImageTensor& gt,
                           const ImageTensor& mask, int window = 20, int step = 10);

// Structural dissimilarity (1 - SSIM) / 2 with an 11x11 Gaussian window
// (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1, averaged over
// channels on the valid (unpadded) interior.
double dssim(const ImageTensor& pred, const ImageTensor& gt);

}  // namespace iid

#endif  // IID_METRICS_HPP_
