#ifndef IID_FILTER_HPP_
#define IID_FILTER_HPP_

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "iid/tape.hpp"
#include "iid/tensor.hpp"

// Guided 1-D recursive edge-preserving filter, run as separable passes over
// rows and columns: per iteration left->right, right->left, top->bottom,
// bottom->top. The recursion is evaluated as Y_i = X_i + g_i (Y_{i-1} - X_i),
// algebraically equal to (1-g_i) X_i + g_i Y_{i-1} but exactly
// constant-preserving and exactly the identity at g = 0 in floating point.

namespace iid {

template <typename T>
struct FilterParamsT {
  T sigma_s = T(60);   // spatial scale, pixels
  T sigma_r = T(0.4);  // range scale, intensity units
  int iterations = 3;

  void validate() const {
    if (!(sigma_s > T(0)) || !(sigma_r > T(0)) || iterations < 1) {
      throw std::invalid_argument("filter params: sigma_s, sigma_r must be > 0 and iterations >= 1");
    }
  }
};

using FilterParams = FilterParamsT<float>;

// Feedback base for iteration k (1-based): a_k = exp(-sqrt(2)/sigma_H_k)
// with the per-iteration sigma halving schedule.
template <typename T>
T filter_log_feedback(const FilterParamsT<T>& p, int k) {
  const double n = p.iterations;
  const double sigma_h = static_cast<double>(p.sigma_s) * std::sqrt(3.0) *
                         std::pow(2.0, n - k) / std::sqrt(std::pow(4.0, n) - 1.0);
  return static_cast<T>(-std::sqrt(2.0) / sigma_h);
}

// Diffusion coefficients for iteration k: g_i = a_k^{d_i} with
// d_i = 1 + (sigma_s / sigma_r) * E_i. Strong edges drive g toward 0.
template <typename T>
TensorT<T> filter_coefficients(const TensorT<T>& guidance, const FilterParamsT<T>& p, int k) {
  p.validate();
  if (guidance.channels != 1) throw std::invalid_argument("filter_coefficients: guidance must be 1-channel");
  const T log_a = filter_log_feedback(p, k);
  const T ratio = p.sigma_s / p.sigma_r;
  TensorT<T> g(1, guidance.height, guidance.width);
  for (size_t i = 0; i < g.data.size(); ++i) {
    const T d = T(1) + ratio * guidance.data[i];
    g.data[i] = std::exp(log_a * d);
  }
  return g;
}

enum class PassDirection { kForward, kBackward };

// Single 1-D recursive pass; exposed directly for tests and small tools.
template <typename T>
std::vector<T> recursive_pass_1d(const std::vector<T>& x, const std::vector<T>& g,
                                 PassDirection dir) {
  if (x.empty() || x.size() != g.size()) {
    throw std::invalid_argument("recursive_pass_1d: signal and coefficients must be same nonzero length");
  }
  const int n = static_cast<int>(x.size());
  std::vector<T> y(x.size());
  if (dir == PassDirection::kForward) {
    y[0] = x[0];
    for (int i = 1; i < n; ++i) y[i] = x[i] + g[i] * (y[i - 1] - x[i]);
  } else {
    y[n - 1] = x[n - 1];
    for (int i = n - 2; i >= 0; --i) y[i] = x[i] + g[i] * (y[i + 1] - x[i]);
  }
  return y;
}

namespace detail {

// pass index within an iteration: 0 LR, 1 RL, 2 TB, 3 BT
template <typename T>
void filter_pass(const TensorT<T>& in, const TensorT<T>& g, int pass, TensorT<T>& out) {
  const int h = in.height, w = in.width, cc = in.channels;
  out = TensorT<T>(cc, h, w);
  if (pass == 0 || pass == 1) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int c = 0; c < cc; ++c) {
      for (int y = 0; y < h; ++y) {
        const T* xr = in.row(c, y);
        const T* gr = g.row(0, y);
        T* yr = out.row(c, y);
        if (pass == 0) {
          yr[0] = xr[0];
          for (int x = 1; x < w; ++x) yr[x] = xr[x] + gr[x] * (yr[x - 1] - xr[x]);
        } else {
          yr[w - 1] = xr[w - 1];
          for (int x = w - 2; x >= 0; --x) yr[x] = xr[x] + gr[x] * (yr[x + 1] - xr[x]);
        }
      }
    }
  } else {
#pragma omp parallel for collapse(2) schedule(static)
    for (int c = 0; c < cc; ++c) {
      for (int x = 0; x < w; ++x) {
        if (pass == 2) {
          out.at(c, 0, x) = in.at(c, 0, x);
          for (int y = 1; y < h; ++y) {
            const T xi = in.at(c, y, x);
            out.at(c, y, x) = xi + g.at(0, y, x) * (out.at(c, y - 1, x) - xi);
          }
        } else {
          out.at(c, h - 1, x) = in.at(c, h - 1, x);
          for (int y = h - 2; y >= 0; --y) {
            const T xi = in.at(c, y, x);
            out.at(c, y, x) = xi + g.at(0, y, x) * (out.at(c, y + 1, x) - xi);
          }
        }
      }
    }
  }
}

// Adjoint of one pass. delta is dL/dY; writes dL/dX and accumulates dL/dg.
// With ghat_i = delta_i + g_{i+1} ghat_{i+1} along the sweep direction:
// dL/dX_i = (1 - g_i) ghat_i (first element: ghat alone) and
// dL/dg_i = ghat_i (Y_{i-1} - X_i).
template <typename T>
void filter_pass_adjoint(const TensorT<T>& x_in, const TensorT<T>& y_out, const TensorT<T>& g,
                         const TensorT<T>& delta, int pass, TensorT<T>& d_in, TensorT<T>& d_g) {
  const int h = x_in.height, w = x_in.width, cc = x_in.channels;
  d_in = TensorT<T>(cc, h, w);
  if (pass == 0 || pass == 1) {
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
      const T* gr = g.row(0, y);
      T* dgr = d_g.row(0, y);
      for (int c = 0; c < cc; ++c) {
        const T* xr = x_in.row(c, y);
        const T* yr = y_out.row(c, y);
        const T* dr = delta.row(c, y);
        T* dxr = d_in.row(c, y);
        if (pass == 0) {
          T ghat = dr[w - 1];
          for (int i = w - 1; i >= 1; --i) {
            dxr[i] = (T(1) - gr[i]) * ghat;
            dgr[i] += ghat * (yr[i - 1] - xr[i]);
            ghat = dr[i - 1] + gr[i] * ghat;
          }
          dxr[0] = ghat;
        } else {
          T ghat = dr[0];
          for (int i = 0; i <= w - 2; ++i) {
            dxr[i] = (T(1) - gr[i]) * ghat;
            dgr[i] += ghat * (yr[i + 1] - xr[i]);
            ghat = dr[i + 1] + gr[i] * ghat;
          }
          dxr[w - 1] = ghat;
        }
      }
    }
  } else {
#pragma omp parallel for schedule(static)
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < cc; ++c) {
        if (pass == 2) {
          T ghat = delta.at(c, h - 1, x);
          for (int i = h - 1; i >= 1; --i) {
            d_in.at(c, i, x) = (T(1) - g.at(0, i, x)) * ghat;
            d_g.at(0, i, x) += ghat * (y_out.at(c, i - 1, x) - x_in.at(c, i, x));
            ghat = delta.at(c, i - 1, x) + g.at(0, i, x) * ghat;
          }
          d_in.at(c, 0, x) = ghat;
        } else {
          T ghat = delta.at(c, 0, x);
          for (int i = 0; i <= h - 2; ++i) {
            d_in.at(c, i, x) = (T(1) - g.at(0, i, x)) * ghat;
            d_g.at(0, i, x) += ghat * (y_out.at(c, i + 1, x) - x_in.at(c, i, x));
            ghat = delta.at(c, i + 1, x) + g.at(0, i, x) * ghat;
          }
          d_in.at(c, h - 1, x) = ghat;
        }
      }
    }
  }
}

}  // namespace detail

// Forward state retained for the analytic backward pass: the input of every
// one of the 4N passes plus the final output (states[p] feeds pass p).
template <typename T>
struct FilterForward {
  std::vector<TensorT<T>> states;   // size 4N + 1
  std::vector<TensorT<T>> g_iter;   // coefficient image per iteration
  FilterParamsT<T> params;

  const TensorT<T>& output() const { return states.back(); }
};

// One full iteration with a caller-supplied coefficient image; test entry
// point for exact g-level invariants.
template <typename T>
TensorT<T> filter_iteration_with_coefficients(const TensorT<T>& signal, const TensorT<T>& g) {
  TensorT<T> cur = signal, next;
  for (int pass = 0; pass < 4; ++pass) {
    detail::filter_pass(cur, g, pass, next);
    cur = std::move(next);
  }
  return cur;
}

template <typename T>
FilterForward<T> domain_filter_2d_forward(const TensorT<T>& signal, const TensorT<T>& guidance,
                                          const FilterParamsT<T>& p) {
  p.validate();
  if (guidance.channels != 1 || guidance.height != signal.height ||
      guidance.width != signal.width) {
    throw std::invalid_argument("domain_filter_2d: guidance must be 1 x H x W matching the signal");
  }
  FilterForward<T> fwd;
  fwd.params = p;
  fwd.states.reserve(4 * p.iterations + 1);
  fwd.states.push_back(signal);
  for (int k = 1; k <= p.iterations; ++k) {
    fwd.g_iter.push_back(filter_coefficients(guidance, p, k));
    for (int pass = 0; pass < 4; ++pass) {
      TensorT<T> next;
      detail::filter_pass(fwd.states.back(), fwd.g_iter.back(), pass, next);
      fwd.states.push_back(std::move(next));
    }
  }
  return fwd;
}

template <typename T>
TensorT<T> domain_filter_2d(const TensorT<T>& signal, const TensorT<T>& guidance,
                            const FilterParamsT<T>& p) {
  return domain_filter_2d_forward(signal, guidance, p).output();
}

// Analytic backward through all 4N passes and the coefficient mapping.
template <typename T>
void domain_filter_2d_backward(const FilterForward<T>& fwd, const TensorT<T>& guidance,
                               const TensorT<T>& upstream, TensorT<T>& d_signal,
                               TensorT<T>& d_guidance) {
  const FilterParamsT<T>& p = fwd.params;
  const int n_pass = 4 * p.iterations;
  TensorT<T> delta = upstream;
  std::vector<TensorT<T>> d_g_iter(p.iterations);
  for (int k = 0; k < p.iterations; ++k) {
    d_g_iter[k] = TensorT<T>(1, guidance.height, guidance.width);
  }
  for (int pidx = n_pass - 1; pidx >= 0; --pidx) {
    const int k = pidx / 4;
    const int pass = pidx % 4;
    TensorT<T> d_in;
    detail::filter_pass_adjoint(fwd.states[pidx], fwd.states[pidx + 1], fwd.g_iter[k], delta, pass,
                                d_in, d_g_iter[k]);
    delta = std::move(d_in);
  }
  d_signal = std::move(delta);
  // chain rule through g = exp(log_a * d), d = 1 + (sigma_s/sigma_r) E
  d_guidance = TensorT<T>(1, guidance.height, guidance.width);
  const T ratio = p.sigma_s / p.sigma_r;
  for (int k = 0; k < p.iterations; ++k) {
    const T log_a = filter_log_feedback(p, k + 1);
    const T* gv = fwd.g_iter[k].data.data();
    const T* dg = d_g_iter[k].data.data();
    for (size_t i = 0; i < d_guidance.data.size(); ++i) {
      d_guidance.data[i] += dg[i] * gv[i] * log_a * ratio;
    }
  }
}

// Tape op: filtered = domain_filter(signal, guidance_edges).
template <typename T>
int domain_filter_node(TapeT<T>& tape, int signal, int guidance, const FilterParamsT<T>& p) {
  auto fwd = std::make_shared<FilterForward<T>>(
      domain_filter_2d_forward(tape.value(signal), tape.value(guidance), p));
  TensorT<T> out = fwd->output();
  return tape.custom("domain_filter", {signal, guidance}, std::move(out),
                     [fwd](TapeT<T>& t, int self) {
                       const auto& n = t.node(self);
                       TensorT<T> d_sig, d_guide;
                       domain_filter_2d_backward(*fwd, t.value(n.parents[1]), n.grad, d_sig,
                                                 d_guide);
                       if (t.node(n.parents[0]).requires_grad) {
                         auto& g0 = t.grad(n.parents[0]);
                         for (size_t i = 0; i < g0.data.size(); ++i) g0.data[i] += d_sig.data[i];
                       }
                       if (t.node(n.parents[1]).requires_grad) {
                         auto& g1 = t.grad(n.parents[1]);
                         for (size_t i = 0; i < g1.data.size(); ++i) g1.data[i] += d_guide.data[i];
                       }
                     });
}

}  // namespace iid

#endif  // IID_FILTER_HPP_
