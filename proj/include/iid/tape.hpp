#ifndef IID_TAPE_HPP_
#define IID_TAPE_HPP_

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "iid/kernels.hpp"
#include "iid/tensor.hpp"

namespace iid {

// Reverse-mode tape. Ops append nodes in topological order (parent ids are
// always smaller than the new node's id); backward() runs one reverse sweep
// with a deterministic accumulation order. Values are computed eagerly at
// record time; each op captures what its adjoint needs.
//
// The tape is single-writer. It may be moved between threads, never
// mutated concurrently; individual kernels parallelize internally.
template <typename T>
class TapeT {
 public:
  using Tensor = TensorT<T>;

  struct Node {
    int id = -1;
    const char* op = "leaf";
    std::vector<int> parents;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(TapeT&, int)> backward_fn;  // null for leaves
  };

  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int id) const { return nodes_.at(id); }
  Tensor& value(int id) { return nodes_.at(id).value; }
  const Tensor& value(int id) const { return nodes_.at(id).value; }
  Tensor& grad(int id) { return nodes_.at(id).grad; }
  const Tensor& grad(int id) const { return nodes_.at(id).grad; }

  int leaf(Tensor v, bool requires_grad = false) {
    return append("leaf", {}, std::move(v), requires_grad, nullptr);
  }

  // Generic extension point: filter and loss layers register fused ops
  // through this with their own adjoints.
  int custom(const char* op, std::vector<int> parents, Tensor value,
             std::function<void(TapeT&, int)> backward_fn) {
    bool req = false;
    for (int p : parents) req = req || nodes_.at(p).requires_grad;
    return append(op, std::move(parents), std::move(value), req, std::move(backward_fn));
  }

  // ---- elementwise ----

  int relu(int x) {
    Tensor v = value(x);
    for (auto& e : v.data) e = e > T(0) ? e : T(0);
    return custom("relu", {x}, std::move(v), [](TapeT& t, int self) {
      const Node& n = t.node(self);
      const Tensor& xin = t.value(n.parents[0]);
      Tensor& dx = t.grad(n.parents[0]);
      const T s = t.relu_backward_scale_;
      for (size_t i = 0; i < xin.data.size(); ++i) {
        if (xin.data[i] > T(0)) dx.data[i] += s * n.grad.data[i];
      }
    });
  }

  int softplus(int x) {
    Tensor v = value(x);
    for (auto& e : v.data) {
      e = e > T(0) ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    }
    return custom("softplus", {x}, std::move(v), [](TapeT& t, int self) {
      const Node& n = t.node(self);
      const Tensor& xin = t.value(n.parents[0]);
      Tensor& dx = t.grad(n.parents[0]);
      for (size_t i = 0; i < xin.data.size(); ++i) {
        const T sig = T(1) / (T(1) + std::exp(-xin.data[i]));
        dx.data[i] += sig * n.grad.data[i];
      }
    });
  }

  // max(x, floor); subgradient 0 where the floor is active.
  int clamp_min(int x, T floor) {
    Tensor v = value(x);
    for (auto& e : v.data) e = e > floor ? e : floor;
    return custom("clamp_min", {x}, std::move(v), [floor](TapeT& t, int self) {
      const Node& n = t.node(self);
      const Tensor& xin = t.value(n.parents[0]);
      Tensor& dx = t.grad(n.parents[0]);
      for (size_t i = 0; i < xin.data.size(); ++i) {
        if (xin.data[i] > floor) dx.data[i] += n.grad.data[i];
      }
    });
  }

  int add(int a, int b) {
    check_same_shape(value(a), value(b), "add");
    Tensor v = value(a);
    const Tensor& vb = value(b);
    for (size_t i = 0; i < v.data.size(); ++i) v.data[i] += vb.data[i];
    return custom("add", {a, b}, std::move(v), [](TapeT& t, int self) {
      const Node& n = t.node(self);
      for (int k = 0; k < 2; ++k) {
        Tensor& dp = t.grad(n.parents[k]);
        for (size_t i = 0; i < dp.data.size(); ++i) dp.data[i] += n.grad.data[i];
      }
    });
  }

  int sub(int a, int b) {
    check_same_shape(value(a), value(b), "sub");
    Tensor v = value(a);
    const Tensor& vb = value(b);
    for (size_t i = 0; i < v.data.size(); ++i) v.data[i] -= vb.data[i];
    return custom("sub", {a, b}, std::move(v), [](TapeT& t, int self) {
      const Node& n = t.node(self);
      Tensor& da = t.grad(n.parents[0]);
      Tensor& db = t.grad(n.parents[1]);
      for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += n.grad.data[i];
      for (size_t i = 0; i < db.data.size(); ++i) db.data[i] -= n.grad.data[i];
    });
  }

  // Elementwise product. A 1-channel operand broadcasts across the other
  // operand's channels (same H x W required).
  int mul(int a, int b) { return mul_div(a, b, /*is_div=*/false); }
  int div(int a, int b) { return mul_div(a, b, /*is_div=*/true); }

  int scale(int x, T s) {
    Tensor v = value(x);
    for (auto& e : v.data) e *= s;
    return custom("scale", {x}, std::move(v), [s](TapeT& t, int self) {
      const Node& n = t.node(self);
      Tensor& dx = t.grad(n.parents[0]);
      for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += s * n.grad.data[i];
    });
  }

  // ---- shape ops ----

  int channel_mean(int x) {
    const Tensor& in = value(x);
    Tensor v(1, in.height, in.width);
    const T inv_c = T(1) / static_cast<T>(in.channels);
    for (int c = 0; c < in.channels; ++c) {
      for (int i = 0; i < in.plane(); ++i) v.data[i] += in.row(c, 0)[i];
    }
    for (auto& e : v.data) e *= inv_c;
    return custom("channel_mean", {x}, std::move(v), [inv_c](TapeT& t, int self) {
      const Node& n = t.node(self);
      Tensor& dx = t.grad(n.parents[0]);
      const int plane = dx.plane();
      for (int c = 0; c < dx.channels; ++c) {
        T* d = dx.row(c, 0);
        for (int i = 0; i < plane; ++i) d[i] += inv_c * n.grad.data[i];
      }
    });
  }

  int broadcast_channels(int x, int channels) {
    const Tensor& in = value(x);
    if (in.channels != 1) throw std::invalid_argument("broadcast_channels: input must be 1-channel");
    Tensor v(channels, in.height, in.width);
    for (int c = 0; c < channels; ++c) {
      std::copy(in.data.begin(), in.data.end(), v.data.begin() + static_cast<size_t>(c) * in.plane());
    }
    return custom("broadcast_channels", {x}, std::move(v), [](TapeT& t, int self) {
      const Node& n = t.node(self);
      Tensor& dx = t.grad(n.parents[0]);
      const int plane = dx.plane();
      for (int c = 0; c < n.grad.channels; ++c) {
        const T* up = n.grad.row(c, 0);
        for (int i = 0; i < plane; ++i) dx.data[i] += up[i];
      }
    });
  }

  int concat_channels(int a, int b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.height != vb.height || va.width != vb.width) {
      throw std::invalid_argument("concat_channels: spatial shape mismatch");
    }
    Tensor v(va.channels + vb.channels, va.height, va.width);
    std::copy(va.data.begin(), va.data.end(), v.data.begin());
    std::copy(vb.data.begin(), vb.data.end(), v.data.begin() + va.data.size());
    const int ca = va.channels;
    return custom("concat_channels", {a, b}, std::move(v), [ca](TapeT& t, int self) {
      const Node& n = t.node(self);
      Tensor& da = t.grad(n.parents[0]);
      Tensor& db = t.grad(n.parents[1]);
      for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += n.grad.data[i];
      const size_t off = static_cast<size_t>(ca) * n.grad.plane();
      for (size_t i = 0; i < db.data.size(); ++i) db.data[i] += n.grad.data[off + i];
    });
  }

  // Replicate-pad at the bottom/right edges (used to make odd extents even).
  int pad_edge(int x, int pad_bottom, int pad_right) {
    const Tensor& in = value(x);
    Tensor v(in.channels, in.height + pad_bottom, in.width + pad_right);
    for (int c = 0; c < v.channels; ++c) {
      for (int y = 0; y < v.height; ++y) {
        const int sy = std::min(y, in.height - 1);
        for (int x2 = 0; x2 < v.width; ++x2) {
          v.at(c, y, x2) = in.at(c, sy, std::min(x2, in.width - 1));
        }
      }
    }
    return custom("pad_edge", {x}, std::move(v), [](TapeT& t, int self) {
      const Node& n = t.node(self);
      Tensor& dx = t.grad(n.parents[0]);
      for (int c = 0; c < n.grad.channels; ++c) {
        for (int y = 0; y < n.grad.height; ++y) {
          const int sy = std::min(y, dx.height - 1);
          for (int x2 = 0; x2 < n.grad.width; ++x2) {
            dx.at(c, sy, std::min(x2, dx.width - 1)) += n.grad.at(c, y, x2);
          }
        }
      }
    });
  }

  int crop_to(int x, int h, int w) {
    const Tensor& in = value(x);
    if (h > in.height || w > in.width) throw std::invalid_argument("crop_to: target too large");
    Tensor v(in.channels, h, w);
    for (int c = 0; c < in.channels; ++c) {
      for (int y = 0; y < h; ++y) {
        std::copy(in.row(c, y), in.row(c, y) + w, v.row(c, y));
      }
    }
    return custom("crop_to", {x}, std::move(v), [](TapeT& t, int self) {
      const Node& n = t.node(self);
      Tensor& dx = t.grad(n.parents[0]);
      for (int c = 0; c < n.grad.channels; ++c) {
        for (int y = 0; y < n.grad.height; ++y) {
          const T* up = n.grad.row(c, y);
          T* d = dx.row(c, y);
          for (int x2 = 0; x2 < n.grad.width; ++x2) d[x2] += up[x2];
        }
      }
    });
  }

  // Forward difference along x (axis=0) or y (axis=1); the trailing
  // column/row is dropped.
  int forward_diff(int x, int axis) {
    const Tensor& in = value(x);
    const int oh = axis == 1 ? in.height - 1 : in.height;
    const int ow = axis == 0 ? in.width - 1 : in.width;
    if (oh < 1 || ow < 1) throw std::invalid_argument("forward_diff: input too small");
    Tensor v(in.channels, oh, ow);
    for (int c = 0; c < in.channels; ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int x2 = 0; x2 < ow; ++x2) {
          v.at(c, y, x2) = axis == 0 ? in.at(c, y, x2 + 1) - in.at(c, y, x2)
                                     : in.at(c, y + 1, x2) - in.at(c, y, x2);
        }
      }
    }
    return custom("forward_diff", {x}, std::move(v), [axis](TapeT& t, int self) {
      const Node& n = t.node(self);
      Tensor& dx = t.grad(n.parents[0]);
      for (int c = 0; c < n.grad.channels; ++c) {
        for (int y = 0; y < n.grad.height; ++y) {
          for (int x2 = 0; x2 < n.grad.width; ++x2) {
            const T up = n.grad.at(c, y, x2);
            if (axis == 0) {
              dx.at(c, y, x2 + 1) += up;
              dx.at(c, y, x2) -= up;
            } else {
              dx.at(c, y + 1, x2) += up;
              dx.at(c, y, x2) -= up;
            }
          }
        }
      }
    });
  }

  // ---- reductions ----

  int sum_all(int x) {
    const Tensor& in = value(x);
    T acc = T(0);
    for (T e : in.data) acc += e;
    return custom("sum_all", {x}, Tensor::scalar(acc), [](TapeT& t, int self) {
      const Node& n = t.node(self);
      Tensor& dx = t.grad(n.parents[0]);
      const T up = n.grad.data[0];
      for (auto& e : dx.data) e += up;
    });
  }

  // Mean squared difference to a fixed target over unmasked elements. A
  // 1-channel mask applies to every channel; normalization is by the
  // number of included elements.
  int mse_to_target(int x, Tensor target, Tensor mask = Tensor()) {
    const Tensor& in = value(x);
    check_same_shape(in, target, "mse_to_target");
    const bool masked = !mask.empty();
    if (masked && (mask.height != in.height || mask.width != in.width)) {
      throw std::invalid_argument("mse_to_target: mask spatial shape mismatch");
    }
    auto tgt = std::make_shared<Tensor>(std::move(target));
    auto msk = std::make_shared<Tensor>(std::move(mask));
    double acc = 0.0;
    size_t count = 0;
    for (int c = 0; c < in.channels; ++c) {
      const T* p = in.row(c, 0);
      const T* q = tgt->row(c, 0);
      const T* m = masked ? msk->row(msk->channels == 1 ? 0 : c, 0) : nullptr;
      for (int i = 0; i < in.plane(); ++i) {
        if (m && m[i] == T(0)) continue;
        const double d = static_cast<double>(p[i]) - static_cast<double>(q[i]);
        acc += d * d;
        ++count;
      }
    }
    const T val = count > 0 ? static_cast<T>(acc / static_cast<double>(count)) : T(0);
    const T inv_count = count > 0 ? T(1) / static_cast<T>(count) : T(0);
    return custom("mse_to_target", {x}, Tensor::scalar(val),
                  [tgt, msk, inv_count, masked](TapeT& t, int self) {
                    const Node& n = t.node(self);
                    const Tensor& xin = t.value(n.parents[0]);
                    Tensor& dx = t.grad(n.parents[0]);
                    const T up = n.grad.data[0];
                    for (int c = 0; c < xin.channels; ++c) {
                      const T* p = xin.row(c, 0);
                      const T* q = tgt->row(c, 0);
                      const T* m = masked ? msk->row(msk->channels == 1 ? 0 : c, 0) : nullptr;
                      T* d = dx.row(c, 0);
                      for (int i = 0; i < xin.plane(); ++i) {
                        if (m && m[i] == T(0)) continue;
                        d[i] += up * T(2) * (p[i] - q[i]) * inv_count;
                      }
                    }
                  });
  }

  // ---- structured ops ----

  int conv2d(int x, int weight, int bias, int stride, int dilation) {
    const Tensor& in = value(x);
    const Tensor& w = value(weight);
    const Tensor& b = value(bias);
    if (w.channels % in.channels != 0) {
      throw std::invalid_argument("conv2d: weight channels not a multiple of input channels");
    }
    const int k_in = in.channels;
    const int k_out = w.channels / k_in;
    if (b.channels != k_out || b.height != 1 || b.width != 1) {
      throw std::invalid_argument("conv2d: bias must be k_out x 1 x 1");
    }
    const auto geo = kernels::ConvGeometry::make(k_out, k_in, w.height, w.width, stride, dilation);
    Tensor out;
    kernels::conv2d_forward(in, w, b, geo, out);
    return custom("conv2d", {x, weight, bias}, std::move(out), [geo](TapeT& t, int self) {
      const Node& n = t.node(self);
      const Tensor& in2 = t.value(n.parents[0]);
      const Tensor& w2 = t.value(n.parents[1]);
      if (t.node(n.parents[0]).requires_grad) {
        Tensor d_in;
        kernels::conv2d_backward_input(w2, n.grad, geo, in2.height, in2.width, d_in);
        accumulate(t.grad(n.parents[0]), d_in);
      }
      if (t.node(n.parents[1]).requires_grad) {
        Tensor d_w;
        kernels::conv2d_backward_weight(in2, n.grad, geo, d_w);
        accumulate(t.grad(n.parents[1]), d_w);
      }
      if (t.node(n.parents[2]).requires_grad) {
        Tensor d_b;
        kernels::conv2d_backward_bias(n.grad, d_b);
        accumulate(t.grad(n.parents[2]), d_b);
      }
    });
  }

  int channel_norm(int x, int gamma, int beta, T epsilon) {
    const Tensor& in = value(x);
    const Tensor& ga = value(gamma);
    const Tensor& be = value(beta);
    if (epsilon <= T(0)) throw std::invalid_argument("channel_norm: epsilon must be positive");
    if (ga.channels != in.channels || be.channels != in.channels) {
      throw std::invalid_argument("channel_norm: gamma/beta must have one entry per channel");
    }
    auto stats = std::make_shared<kernels::ChannelNormStats<T>>();
    Tensor out;
    kernels::channel_norm_forward(in, ga, be, epsilon, out, *stats);
    return custom("channel_norm", {x, gamma, beta}, std::move(out), [stats](TapeT& t, int self) {
      const Node& n = t.node(self);
      Tensor d_in, d_gamma, d_beta;
      kernels::channel_norm_backward(t.value(n.parents[0]), t.value(n.parents[1]), *stats, n.grad,
                                     d_in, d_gamma, d_beta);
      if (t.node(n.parents[0]).requires_grad) accumulate(t.grad(n.parents[0]), d_in);
      if (t.node(n.parents[1]).requires_grad) accumulate(t.grad(n.parents[1]), d_gamma);
      if (t.node(n.parents[2]).requires_grad) accumulate(t.grad(n.parents[2]), d_beta);
    });
  }

  int upsample2x(int x) {
    const Tensor& in = value(x);
    Tensor out;
    kernels::upsample2x_forward(in, out);
    return custom("upsample2x", {x}, std::move(out), [](TapeT& t, int self) {
      const Node& n = t.node(self);
      const Tensor& in2 = t.value(n.parents[0]);
      Tensor d_in;
      kernels::upsample2x_backward(n.grad, in2.height, in2.width, d_in);
      accumulate(t.grad(n.parents[0]), d_in);
    });
  }

  // ---- backward ----

  // Reverse sweep from a scalar loss. Populates grad for every node that
  // participates in a differentiable path. Callable repeatedly; grads
  // accumulate unless zero_grad() is called in between.
  void backward(int loss_id) {
    const Tensor& lv = value(loss_id);
    if (lv.channels != 1 || lv.height != 1 || lv.width != 1) {
      throw std::invalid_argument("backward: loss node must be 1x1x1, got " + lv.shape_str());
    }
    for (auto& n : nodes_) {
      if (n.grad.empty()) n.grad = Tensor(n.value.channels, n.value.height, n.value.width);
    }
    nodes_[loss_id].grad.data[0] += T(1);
    for (int id = loss_id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.backward_fn && n.requires_grad) n.backward_fn(*this, id);
    }
  }

  void zero_grad() {
    for (auto& n : nodes_) {
      if (!n.grad.empty()) n.grad.fill(T(0));
    }
  }

  // Test hook for the gradient-check negative control: scales the relu
  // adjoint so a deliberately wrong gradient is observable end to end.
  void set_relu_backward_scale_for_tests(T s) { relu_backward_scale_ = s; }

 private:
  static void accumulate(Tensor& dst, const Tensor& src) {
    for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
  }

  int mul_div(int a, int b, bool is_div) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.height != vb.height || va.width != vb.width) {
      throw std::invalid_argument("mul/div: spatial shape mismatch");
    }
    if (va.channels != vb.channels && va.channels != 1 && vb.channels != 1) {
      throw std::invalid_argument("mul/div: channel counts must match or broadcast from 1");
    }
    const int out_c = std::max(va.channels, vb.channels);
    Tensor v(out_c, va.height, va.width);
    const int plane = va.plane();
    for (int c = 0; c < out_c; ++c) {
      const T* pa = va.row(va.channels == 1 ? 0 : c, 0);
      const T* pb = vb.row(vb.channels == 1 ? 0 : c, 0);
      T* pv = v.row(c, 0);
      if (is_div) {
        for (int i = 0; i < plane; ++i) pv[i] = pa[i] / pb[i];
      } else {
        for (int i = 0; i < plane; ++i) pv[i] = pa[i] * pb[i];
      }
    }
    return custom(is_div ? "div" : "mul", {a, b}, std::move(v), [is_div](TapeT& t, int self) {
      const Node& n = t.node(self);
      const Tensor& va2 = t.value(n.parents[0]);
      const Tensor& vb2 = t.value(n.parents[1]);
      Tensor& da = t.grad(n.parents[0]);
      Tensor& db = t.grad(n.parents[1]);
      const int plane = va2.plane();
      for (int c = 0; c < n.grad.channels; ++c) {
        const T* up = n.grad.row(c, 0);
        const T* pa = va2.row(va2.channels == 1 ? 0 : c, 0);
        const T* pb = vb2.row(vb2.channels == 1 ? 0 : c, 0);
        T* ga = da.row(va2.channels == 1 ? 0 : c, 0);
        T* gb = db.row(vb2.channels == 1 ? 0 : c, 0);
        if (is_div) {
          for (int i = 0; i < plane; ++i) {
            ga[i] += up[i] / pb[i];
            gb[i] -= up[i] * pa[i] / (pb[i] * pb[i]);
          }
        } else {
          for (int i = 0; i < plane; ++i) {
            ga[i] += up[i] * pb[i];
            gb[i] += up[i] * pa[i];
          }
        }
      }
    });
  }

  int append(const char* op, std::vector<int> parents, Tensor value, bool requires_grad,
             std::function<void(TapeT&, int)> backward_fn) {
    Node n;
    n.id = static_cast<int>(nodes_.size());
    n.op = op;
    n.parents = std::move(parents);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward_fn = std::move(backward_fn);
    nodes_.push_back(std::move(n));
    return nodes_.back().id;
  }

  std::vector<Node> nodes_;
  T relu_backward_scale_ = T(1);
};

using Tape = TapeT<float>;

}  // namespace iid

#endif  // IID_TAPE_HPP_
