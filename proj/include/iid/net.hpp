#ifndef IID_NET_HPP_
#define IID_NET_HPP_

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "iid/filter.hpp"
#include "iid/kernels.hpp"
#include "iid/rng.hpp"
#include "iid/tape.hpp"
#include "iid/tensor.hpp"

namespace iid {

inline constexpr float kReflectanceFloor = 1e-4f;  // positivity floor for r
inline constexpr float kIntensityFloor = 1e-4f;    // floor on channel-mean of I

enum class OutputMode { kScalarReflectance, kDualBranch };

// Direct intrinsic network shape. Front convolutions downscale once by 2
// (the stride-2 conv is the last front layer); the tail upsamples back
// before its final convolution. Residual blocks hold two dilated
// convolutions each.
struct NetConfig {
  int front_layers = 3;
  int residual_blocks = 4;   // paper-scale 10 (26 layers) or 18 (42 layers)
  int channels = 16;         // paper-scale 32 or 64
  int dilation = 2;
  int tail_layers = 3;
  OutputMode output_mode = OutputMode::kScalarReflectance;
  int branch_split_block = -1;  // dual-branch only; -1 = residual_blocks / 2

  int split_block() const {
    return branch_split_block >= 0 ? branch_split_block : residual_blocks / 2;
  }

  void validate() const {
    if (front_layers < 1 || tail_layers < 1) {
      throw std::invalid_argument("net config: front and tail layers must be >= 1");
    }
    if (residual_blocks < 1 || channels < 1 || dilation < 1) {
      throw std::invalid_argument("net config: residual_blocks, channels, dilation must be >= 1");
    }
    if (output_mode == OutputMode::kDualBranch &&
        (split_block() < 0 || split_block() > residual_blocks)) {
      throw std::invalid_argument("net config: branch split outside [0, residual_blocks]");
    }
  }
};

// Guidance network shape: full-resolution, dilated residual blocks between
// a fused front convolution over [image, edge-map] and a 1-channel head.
struct GuidanceConfig {
  int layers = 6;     // paper-scale 18
  int channels = 16;  // paper-scale 64
  int dilation = 2;

  void validate() const {
    if (layers < 2 || channels < 1 || dilation < 1) {
      throw std::invalid_argument("guidance config: layers >= 2, channels and dilation >= 1");
    }
  }
};

enum class ParamInit { kConvWeight, kZero, kOne };

// Named parameter tensors, created deterministically on first use in
// forward-walk order. The walk order is fixed, so a given seed always
// produces the same initialization.
template <typename T>
class ParamStoreT {
 public:
  explicit ParamStoreT(uint64_t seed) : rng_(seed) {}

  TensorT<T>& get_or_create(const std::string& name, int c, int h, int w, ParamInit init) {
    auto it = index_.find(name);
    if (it != index_.end()) {
      TensorT<T>& t = items_[it->second].second;
      if (t.channels != c || t.height != h || t.width != w) {
        throw std::invalid_argument("param '" + name + "' shape mismatch: stored " +
                                    t.shape_str() + ", requested " +
                                    TensorT<T>(c, h, w).shape_str());
      }
      return t;
    }
    TensorT<T> t(c, h, w);
    if (init == ParamInit::kOne) {
      t.fill(T(1));
    } else if (init == ParamInit::kConvWeight) {
      rng_.fill_normal(t, 0.0, he_std_);
    }
    index_.emplace(name, items_.size());
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
  }

  // Scale used for the next kConvWeight creation; set by the binder which
  // knows the fan-in.
  void set_he_std(double s) { he_std_ = s; }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  TensorT<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown param '" + name + "'");
    return items_[it->second].second;
  }

  const std::vector<std::pair<std::string, TensorT<T>>>& items() const { return items_; }
  std::vector<std::pair<std::string, TensorT<T>>>& items() { return items_; }

  void insert_loaded(const std::string& name, TensorT<T> t) {
    if (index_.count(name)) throw std::invalid_argument("duplicate param '" + name + "'");
    index_.emplace(name, items_.size());
    items_.emplace_back(name, std::move(t));
  }

 private:
  Rng rng_;
  double he_std_ = 0.05;
  std::vector<std::pair<std::string, TensorT<T>>> items_;
  std::map<std::string, size_t> index_;
};

using ParamStore = ParamStoreT<float>;

// Registers store parameters as tape leaves (once per tape) and remembers
// name -> node id so gradients can be read back after backward().
template <typename T>
class ParamBinder {
 public:
  ParamBinder(TapeT<T>& tape, ParamStoreT<T>& store, bool trainable = true)
      : tape_(tape), store_(store), trainable_(trainable) {}

  int conv_weight(const std::string& name, int k_out, int k_in, int kh, int kw) {
    store_.set_he_std(std::sqrt(2.0 / (static_cast<double>(k_in) * kh * kw)));
    return bind(name, k_out * k_in, kh, kw, ParamInit::kConvWeight);
  }
  int conv_bias(const std::string& name, int k_out) {
    return bind(name, k_out, 1, 1, ParamInit::kZero);
  }
  int norm_gamma(const std::string& name, int c) { return bind(name, c, 1, 1, ParamInit::kOne); }
  int norm_beta(const std::string& name, int c) { return bind(name, c, 1, 1, ParamInit::kZero); }

  const std::vector<std::pair<std::string, int>>& bound() const { return bound_; }
  TapeT<T>& tape() { return tape_; }

 private:
  int bind(const std::string& name, int c, int h, int w, ParamInit init) {
    auto it = node_of_.find(name);
    if (it != node_of_.end()) return it->second;
    TensorT<T>& t = store_.get_or_create(name, c, h, w, init);
    const int id = tape_.leaf(t, trainable_);
    node_of_.emplace(name, id);
    bound_.emplace_back(name, id);
    return id;
  }

  TapeT<T>& tape_;
  ParamStoreT<T>& store_;
  bool trainable_;
  std::map<std::string, int> node_of_;
  std::vector<std::pair<std::string, int>> bound_;
};

namespace detail {

constexpr float kNormEpsilon = 1e-5f;

// conv + per-channel norm + relu
template <typename T>
int conv_block(ParamBinder<T>& pb, const std::string& name, int x, int k_out, int stride,
               int dilation, bool norm_relu) {
  TapeT<T>& t = pb.tape();
  const int k_in = t.value(x).channels;
  const int w = pb.conv_weight(name + ".w", k_out, k_in, 3, 3);
  const int b = pb.conv_bias(name + ".b", k_out);
  int y = t.conv2d(x, w, b, stride, dilation);
  if (norm_relu) {
    const int ga = pb.norm_gamma(name + ".gamma", k_out);
    const int be = pb.norm_beta(name + ".beta", k_out);
    y = t.channel_norm(y, ga, be, T(kNormEpsilon));
    y = t.relu(y);
  }
  return y;
}

template <typename T>
int residual_block(ParamBinder<T>& pb, const std::string& name, int x, int channels,
                   int dilation) {
  int y = conv_block(pb, name + ".conv0", x, channels, 1, dilation, true);
  y = conv_block(pb, name + ".conv1", y, channels, 1, dilation, true);
  return pb.tape().add(x, y);
}

// Tail: (tail_layers - 1) conv+norm+relu at half resolution, bilinear x2,
// then the final convolution (no norm/relu) producing out_channels.
template <typename T>
int tail(ParamBinder<T>& pb, const std::string& prefix, int x, int channels, int out_channels,
         int tail_layers) {
  TapeT<T>& t = pb.tape();
  int y = x;
  for (int i = 0; i + 1 < tail_layers; ++i) {
    y = conv_block(pb, prefix + ".tail" + std::to_string(i), y, channels, 1, 1, true);
  }
  y = t.upsample2x(y);
  const int k_in = t.value(y).channels;
  const int w = pb.conv_weight(prefix + ".head.w", out_channels, k_in, 3, 3);
  const int b = pb.conv_bias(prefix + ".head.b", out_channels);
  return t.conv2d(y, w, b, 1, 1);
}

}  // namespace detail

template <typename T>
struct DirectNetOut {
  int scalar_r = -1;  // 1 x H x W, >= kReflectanceFloor (scalar mode)
  int albedo = -1;    // 3 x H x W (dual mode)
  int shading = -1;   // 3 x H x W (dual mode)
};

// Direct Intrinsic Network. Output spatial size always equals the input
// size; odd inputs are edge-padded to even internally and cropped back.
template <typename T>
DirectNetOut<T> direct_net_forward(ParamBinder<T>& pb, const NetConfig& cfg, int input) {
  cfg.validate();
  TapeT<T>& t = pb.tape();
  const int in_h = t.value(input).height;
  const int in_w = t.value(input).width;
  int x = input;
  if (in_h % 2 != 0 || in_w % 2 != 0) {
    x = t.pad_edge(x, in_h % 2, in_w % 2);
  }

  for (int i = 0; i < cfg.front_layers; ++i) {
    const int stride = (i + 1 == cfg.front_layers) ? 2 : 1;
    x = detail::conv_block(pb, "direct.front" + std::to_string(i), x, cfg.channels, stride, 1,
                           true);
  }

  const int split = cfg.output_mode == OutputMode::kDualBranch ? cfg.split_block()
                                                               : cfg.residual_blocks;
  for (int i = 0; i < split; ++i) {
    x = detail::residual_block(pb, "direct.block" + std::to_string(i), x, cfg.channels,
                               cfg.dilation);
  }

  auto finish = [&](int node) {
    node = t.softplus(node);
    node = t.clamp_min(node, T(kReflectanceFloor));
    if (in_h % 2 != 0 || in_w % 2 != 0) node = t.crop_to(node, in_h, in_w);
    return node;
  };

  DirectNetOut<T> out;
  if (cfg.output_mode == OutputMode::kScalarReflectance) {
    out.scalar_r = finish(detail::tail(pb, "direct", x, cfg.channels, 1, cfg.tail_layers));
    return out;
  }
  int xa = x, xs = x;
  for (int i = split; i < cfg.residual_blocks; ++i) {
    xa = detail::residual_block(pb, "direct.albedo.block" + std::to_string(i), xa, cfg.channels,
                                cfg.dilation);
    xs = detail::residual_block(pb, "direct.shading.block" + std::to_string(i), xs, cfg.channels,
                                cfg.dilation);
  }
  out.albedo = finish(detail::tail(pb, "direct.albedo", xa, cfg.channels, 3, cfg.tail_layers));
  out.shading = finish(detail::tail(pb, "direct.shading", xs, cfg.channels, 3, cfg.tail_layers));
  return out;
}

// Achromatic expansion of a scalar reflectance intensity map:
//   R'_i = r_i / max(mean_c I_i, floor) * I_i
//   S_i  = max(mean_c I_i, floor) / r_i  on every channel
// so that R' o S reproduces I exactly wherever the floor is inactive.
// The caller guarantees r >= kReflectanceFloor.
template <typename T>
std::pair<int, int> achromatic_reconstruct(TapeT<T>& tape, int r, int input) {
  // note: value() references are invalidated by op appends; copy the shape
  const int r_channels = tape.value(r).channels;
  const int in_channels = tape.value(input).channels;
  const bool spatial_ok = tape.value(r).height == tape.value(input).height &&
                          tape.value(r).width == tape.value(input).width;
  if (r_channels != 1 || !spatial_ok) {
    throw std::invalid_argument("achromatic_reconstruct: r must be 1 x H x W matching the image");
  }
  const int mean = tape.clamp_min(tape.channel_mean(input), T(kIntensityFloor));
  const int albedo = tape.mul(tape.div(r, mean), input);
  const int shading = tape.broadcast_channels(tape.div(mean, r), in_channels);
  return {albedo, shading};
}

// Scalar edge map of a (possibly multi-channel) image; plain function, not
// recorded on any tape.
template <typename T>
TensorT<T> edge_map(const TensorT<T>& img) {
  TensorT<T> out;
  kernels::edge_map(img, out);
  return out;
}

// Guidance Network: concatenates the image with its own edge map and
// predicts the salient-edge map E' (nonnegative via softplus). Full
// resolution throughout.
template <typename T>
int guidance_net_forward(ParamBinder<T>& pb, const GuidanceConfig& cfg, int input, int input_edges) {
  cfg.validate();
  TapeT<T>& t = pb.tape();
  int x = t.concat_channels(input, input_edges);
  x = detail::conv_block(pb, "guidance.front", x, cfg.channels, 1, 1, true);
  int remaining = cfg.layers - 2;
  int block = 0;
  for (; remaining >= 2; remaining -= 2, ++block) {
    x = detail::residual_block(pb, "guidance.block" + std::to_string(block), x, cfg.channels,
                               cfg.dilation);
  }
  if (remaining == 1) {
    x = detail::conv_block(pb, "guidance.extra", x, cfg.channels, 1, 1, true);
  }
  const int w = pb.conv_weight("guidance.head.w", 1, cfg.channels, 3, 3);
  const int b = pb.conv_bias("guidance.head.b", 1);
  x = t.conv2d(x, w, b, 1, 1);
  return t.softplus(x);
}

// Flattened stand-in for the unavailable ground-truth guidance filter:
// iterated self-guided domain filtering, recomputing the edge map from the
// current iterate each round.
template <typename T>
TensorT<T> guidance_proxy(const TensorT<T>& image, const FilterParamsT<T>& params,
                          int outer_iterations = 3) {
  TensorT<T> g = image;
  for (int i = 0; i < outer_iterations; ++i) {
    TensorT<T> e = edge_map(g);
    g = domain_filter_2d(g, e, params);
  }
  return g;
}

}  // namespace iid

#endif  // IID_NET_HPP_
