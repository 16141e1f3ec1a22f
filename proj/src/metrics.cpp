#include "iid/metrics.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace iid {

namespace {

// Mask lookup: empty mask includes everything; a 1-channel mask gates all
// channels of the metric inputs.
inline bool included(const ImageTensor& mask, int y, int x) {
  return mask.empty() || mask.at(0, y, x) != 0.0f;
}

void check_metric_inputs(const ImageTensor& pred, const ImageTensor& gt,
                         const ImageTensor& mask) {
  check_same_shape(pred, gt, "metric");
  if (!mask.empty() && (mask.height != pred.height || mask.width != pred.width)) {
    throw std::invalid_argument("metric: mask spatial shape mismatch");
  }
}

}  // namespace

double mse_scaled(const ImageTensor& pred, const ImageTensor& gt, const ImageTensor& mask,
                  bool scale_invariant) {
  check_metric_inputs(pred, gt, mask);
  double alpha = 1.0;
  if (scale_invariant) {
    double num = 0.0, den = 0.0;
    for (int c = 0; c < pred.channels; ++c) {
      for (int y = 0; y < pred.height; ++y) {
        for (int x = 0; x < pred.width; ++x) {
          if (!included(mask, y, x)) continue;
          const double p = pred.at(c, y, x);
          num += p * static_cast<double>(gt.at(c, y, x));
          den += p * p;
        }
      }
    }
    alpha = den > 0.0 ? num / den : 0.0;
  }
  double acc = 0.0;
  size_t count = 0;
  for (int c = 0; c < pred.channels; ++c) {
    for (int y = 0; y < pred.height; ++y) {
      for (int x = 0; x < pred.width; ++x) {
        if (!included(mask, y, x)) continue;
        const double d = alpha * pred.at(c, y, x) - gt.at(c, y, x);
        acc += d * d;
        ++count;
      }
    }
  }
  return count > 0 ? acc / static_cast<double>(count) : 0.0;
}

namespace {

// Window origins 0, step, 2*step, ... plus a final flush-to-border origin
// so every pixel is covered.
std::vector<int> window_positions(int dim, int window, int step) {
  std::vector<int> pos;
  for (int p = 0; p + window <= dim; p += step) pos.push_back(p);
  if (pos.empty() || pos.back() != dim - window) pos.push_back(dim - window);
  return pos;
}

}  // namespace

std::optional<double> lmse(const ImageTensor& pred, const ImageTensor& gt,
                           const ImageTensor& mask, int window, int step) {
  check_metric_inputs(pred, gt, mask);
  if (window < 1 || step < 1) throw std::invalid_argument("lmse: window and step must be >= 1");
  if (window > pred.height || window > pred.width) {
    throw std::invalid_argument("lmse: window larger than image");
  }
  const auto ys = window_positions(pred.height, window, step);
  const auto xs = window_positions(pred.width, window, step);
  double err_sum = 0.0;
  double gt_sum = 0.0;
  for (int y0 : ys) {
    for (int x0 : xs) {
      double pg = 0.0, pp = 0.0, gg = 0.0;
      size_t count = 0;
      for (int c = 0; c < pred.channels; ++c) {
        for (int y = y0; y < y0 + window; ++y) {
          for (int x = x0; x < x0 + window; ++x) {
            if (!included(mask, y, x)) continue;
            const double p = pred.at(c, y, x);
            const double g = gt.at(c, y, x);
            pg += p * g;
            pp += p * p;
            gg += g * g;
            ++count;
          }
        }
      }
      if (count == 0) continue;
      const double alpha = pp > 0.0 ? pg / pp : 0.0;
      double err = 0.0;
      for (int c = 0; c < pred.channels; ++c) {
        for (int y = y0; y < y0 + window; ++y) {
          for (int x = x0; x < x0 + window; ++x) {
            if (!included(mask, y, x)) continue;
            const double d = alpha * pred.at(c, y, x) - gt.at(c, y, x);
            err += d * d;
          }
        }
      }
      err_sum += err;
      gt_sum += gg;
    }
  }
  if (gt_sum <= 0.0) return std::nullopt;
  return err_sum / gt_sum;
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimK1 = 0.01;
constexpr double kSsimK2 = 0.03;

std::array<double, kSsimWindow> gaussian_taps() {
  std::array<double, kSsimWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - (kSsimWindow - 1) / 2.0;
    w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Valid-mode separable Gaussian filtering of one channel plane.
std::vector<double> gaussian_valid(const std::vector<double>& img, int h, int w, int& oh,
                                   int& ow) {
  const auto taps = gaussian_taps();
  ow = w - kSsimWindow + 1;
  oh = h - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += taps[k] * img[static_cast<size_t>(y) * w + x + k];
      tmp[static_cast<size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += taps[k] * tmp[static_cast<size_t>(y + k) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double dssim(const ImageTensor& pred, const ImageTensor& gt) {
  check_same_shape(pred, gt, "dssim");
  if (pred.height < kSsimWindow || pred.width < kSsimWindow) {
    throw std::invalid_argument("dssim: image smaller than the 11x11 window");
  }
  const double c1 = kSsimK1 * kSsimK1;  // dynamic range 1.0
  const double c2 = kSsimK2 * kSsimK2;
  const int h = pred.height, w = pred.width;
  const size_t plane = static_cast<size_t>(h) * w;
  double ssim_total = 0.0;
  for (int c = 0; c < pred.channels; ++c) {
    std::vector<double> p(plane), g(plane), pp(plane), gg(plane), pg(plane);
    for (size_t i = 0; i < plane; ++i) {
      p[i] = pred.data[c * plane + i];
      g[i] = gt.data[c * plane + i];
      pp[i] = p[i] * p[i];
      gg[i] = g[i] * g[i];
      pg[i] = p[i] * g[i];
    }
    int oh = 0, ow = 0;
    const auto mu_p = gaussian_valid(p, h, w, oh, ow);
    const auto mu_g = gaussian_valid(g, h, w, oh, ow);
    const auto e_pp = gaussian_valid(pp, h, w, oh, ow);
    const auto e_gg = gaussian_valid(gg, h, w, oh, ow);
    const auto e_pg = gaussian_valid(pg, h, w, oh, ow);
    double acc = 0.0;
    for (size_t i = 0; i < mu_p.size(); ++i) {
      const double var_p = e_pp[i] - mu_p[i] * mu_p[i];
      const double var_g = e_gg[i] - mu_g[i] * mu_g[i];
      const double cov = e_pg[i] - mu_p[i] * mu_g[i];
      const double num = (2.0 * mu_p[i] * mu_g[i] + c1) * (2.0 * cov + c2);
      const double den = (mu_p[i] * mu_p[i] + mu_g[i] * mu_g[i] + c1) * (var_p + var_g + c2);
      acc += num / den;
    }
    ssim_total += acc / static_cast<double>(mu_p.size());
  }
  const double ssim = ssim_total / pred.channels;
  return (1.0 - ssim) / 2.0;
}

namespace {

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  if (v.has_value()) return *v;
  return nullptr;
}

std::optional<double> json_opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["whdr"] = opt_json(whdr);
  j["whdr-zero-weight"] = whdr_zero_weight;
  j["mse-albedo"] = opt_json(mse_albedo);
  j["mse-shading"] = opt_json(mse_shading);
  j["mse-average"] = opt_json(mse_average);
  j["lmse-albedo"] = opt_json(lmse_albedo);
  j["lmse-shading"] = opt_json(lmse_shading);
  j["lmse-average"] = opt_json(lmse_average);
  j["dssim-albedo"] = opt_json(dssim_albedo);
  j["dssim-shading"] = opt_json(dssim_shading);
  j["dssim-average"] = opt_json(dssim_average);
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("metrics report: malformed JSON: ") + e.what());
  }
  MetricsReport r;
  r.whdr = json_opt(j, "whdr");
  r.whdr_zero_weight = j.value("whdr-zero-weight", false);
  r.mse_albedo = json_opt(j, "mse-albedo");
  r.mse_shading = json_opt(j, "mse-shading");
  r.mse_average = json_opt(j, "mse-average");
  r.lmse_albedo = json_opt(j, "lmse-albedo");
  r.lmse_shading = json_opt(j, "lmse-shading");
  r.lmse_average = json_opt(j, "lmse-average");
  r.dssim_albedo = json_opt(j, "dssim-albedo");
  r.dssim_shading = json_opt(j, "dssim-shading");
  r.dssim_average = json_opt(j, "dssim-average");
  return r;
}

}  // namespace iid
