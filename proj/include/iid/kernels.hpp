#ifndef IID_KERNELS_HPP_
#define IID_KERNELS_HPP_

#include <stdexcept>

#include "iid/tensor.hpp"

// Data-parallel kernels behind the tape ops. Every kernel is written in
// gather form: each output element is produced by exactly one loop
// iteration with a fixed serial reduction order, so results are
// bit-identical for any OpenMP thread count. Serial mirrors of these live
// in iid/ref/kernels.hpp and are compared in the parity tests.

namespace iid {
namespace kernels {

struct ConvGeometry {
  int k_out = 0, k_in = 0, kh = 0, kw = 0;
  int stride = 1, dilation = 1;
  int pad_y = 0, pad_x = 0;

  static ConvGeometry make(int k_out, int k_in, int kh, int kw, int stride, int dilation) {
    if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
    if (dilation < 1) throw std::invalid_argument("conv2d: dilation must be >= 1");
    if (kh < 1 || kw < 1 || kh % 2 == 0 || kw % 2 == 0) {
      throw std::invalid_argument("conv2d: kernel extents must be odd and positive");
    }
    ConvGeometry g;
    g.k_out = k_out;
    g.k_in = k_in;
    g.kh = kh;
    g.kw = kw;
    g.stride = stride;
    g.dilation = dilation;
    // Zero padding sized so stride-1 output matches the input extent.
    g.pad_y = dilation * (kh - 1) / 2;
    g.pad_x = dilation * (kw - 1) / 2;
    return g;
  }

  int out_h(int h) const { return (h + 2 * pad_y - dilation * (kh - 1) - 1) / stride + 1; }
  int out_w(int w) const { return (w + 2 * pad_x - dilation * (kw - 1) - 1) / stride + 1; }
};

// weight layout: channels = k_out * k_in (outer index k_out), height = kh, width = kw.
template <typename T>
void conv2d_forward(const TensorT<T>& in, const TensorT<T>& weight, const TensorT<T>& bias,
                    const ConvGeometry& g, TensorT<T>& out) {
  const int oh = g.out_h(in.height), ow = g.out_w(in.width);
  out = TensorT<T>(g.k_out, oh, ow);
#pragma omp parallel for collapse(2) schedule(static)
  for (int oc = 0; oc < g.k_out; ++oc) {
    for (int oy = 0; oy < oh; ++oy) {
      T* out_row = out.row(oc, oy);
      const T b = bias.data[oc];
      for (int ox = 0; ox < ow; ++ox) out_row[ox] = b;
      for (int ic = 0; ic < g.k_in; ++ic) {
        for (int ky = 0; ky < g.kh; ++ky) {
          const int iy = oy * g.stride - g.pad_y + ky * g.dilation;
          if (iy < 0 || iy >= in.height) continue;
          const T* in_row = in.row(ic, iy);
          const T* w_row = weight.row(oc * g.k_in + ic, ky);
          for (int kx = 0; kx < g.kw; ++kx) {
            const T wv = w_row[kx];
            const int off = -g.pad_x + kx * g.dilation;
            // ox range with ix = ox*stride + off inside [0, W)
            int lo = 0, hi = ow;
            if (off < 0) lo = (-off + g.stride - 1) / g.stride;
            const int max_ix = in.width - 1 - off;
            if (max_ix < 0) continue;
            hi = std::min(hi, max_ix / g.stride + 1);
            const T* src = in_row + off;
            for (int ox = lo; ox < hi; ++ox) out_row[ox] += wv * src[ox * g.stride];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const TensorT<T>& weight, const TensorT<T>& upstream,
                           const ConvGeometry& g, int in_h, int in_w, TensorT<T>& d_in) {
  d_in = TensorT<T>(g.k_in, in_h, in_w);
  const int oh = upstream.height, ow = upstream.width;
#pragma omp parallel for collapse(2) schedule(static)
  for (int ic = 0; ic < g.k_in; ++ic) {
    for (int iy = 0; iy < in_h; ++iy) {
      T* d_row = d_in.row(ic, iy);
      for (int oc = 0; oc < g.k_out; ++oc) {
        for (int ky = 0; ky < g.kh; ++ky) {
          const int num = iy + g.pad_y - ky * g.dilation;
          if (num < 0 || num % g.stride != 0) continue;
          const int oy = num / g.stride;
          if (oy >= oh) continue;
          const T* up_row = upstream.row(oc, oy);
          const T* w_row = weight.row(oc * g.k_in + ic, ky);
          for (int kx = 0; kx < g.kw; ++kx) {
            const T wv = w_row[kx];
            const int off = -g.pad_x + kx * g.dilation;
            int lo = 0, hi = ow;
            if (off < 0) lo = (-off + g.stride - 1) / g.stride;
            const int max_ix = in_w - 1 - off;
            if (max_ix < 0) continue;
            hi = std::min(hi, max_ix / g.stride + 1);
            for (int ox = lo; ox < hi; ++ox) d_row[ox * g.stride + off] += wv * up_row[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const TensorT<T>& in, const TensorT<T>& upstream,
                            const ConvGeometry& g, TensorT<T>& d_weight) {
  d_weight = TensorT<T>(g.k_out * g.k_in, g.kh, g.kw);
  const int oh = upstream.height, ow = upstream.width;
#pragma omp parallel for collapse(2) schedule(static)
  for (int oc = 0; oc < g.k_out; ++oc) {
    for (int ic = 0; ic < g.k_in; ++ic) {
      for (int ky = 0; ky < g.kh; ++ky) {
        for (int kx = 0; kx < g.kw; ++kx) {
          T acc = T(0);
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * g.stride - g.pad_y + ky * g.dilation;
            if (iy < 0 || iy >= in.height) continue;
            const T* up_row = upstream.row(oc, oy);
            const T* in_row = in.row(ic, iy);
            const int off = -g.pad_x + kx * g.dilation;
            int lo = 0, hi = ow;
            if (off < 0) lo = (-off + g.stride - 1) / g.stride;
            const int max_ix = in.width - 1 - off;
            if (max_ix < 0) continue;
            hi = std::min(hi, max_ix / g.stride + 1);
            const T* src = in_row + off;
            for (int ox = lo; ox < hi; ++ox) acc += up_row[ox] * src[ox * g.stride];
          }
          d_weight.at(oc * g.k_in + ic, ky, kx) = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_bias(const TensorT<T>& upstream, TensorT<T>& d_bias) {
  d_bias = TensorT<T>(upstream.channels, 1, 1);
#pragma omp parallel for schedule(static)
  for (int oc = 0; oc < upstream.channels; ++oc) {
    T acc = T(0);
    const T* p = upstream.row(oc, 0);
    const size_t n = static_cast<size_t>(upstream.plane());
    for (size_t i = 0; i < n; ++i) acc += p[i];
    d_bias.data[oc] = acc;
  }
}

// Bilinear x2 upsampling with half-pixel centers (align-corners false).
template <typename T>
void upsample2x_forward(const TensorT<T>& in, TensorT<T>& out) {
  const int oh = in.height * 2, ow = in.width * 2;
  out = TensorT<T>(in.channels, oh, ow);
#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < in.channels; ++c) {
    for (int oy = 0; oy < oh; ++oy) {
      const double sy = (oy + 0.5) / 2.0 - 0.5;
      int y0 = static_cast<int>(std::floor(sy));
      const T wy = static_cast<T>(sy - y0);
      const int y0c = std::clamp(y0, 0, in.height - 1);
      const int y1c = std::clamp(y0 + 1, 0, in.height - 1);
      const T* r0 = in.row(c, y0c);
      const T* r1 = in.row(c, y1c);
      T* out_row = out.row(c, oy);
      for (int ox = 0; ox < ow; ++ox) {
        const double sx = (ox + 0.5) / 2.0 - 0.5;
        int x0 = static_cast<int>(std::floor(sx));
        const T wx = static_cast<T>(sx - x0);
        const int x0c = std::clamp(x0, 0, in.width - 1);
        const int x1c = std::clamp(x0 + 1, 0, in.width - 1);
        const T top = r0[x0c] + wx * (r0[x1c] - r0[x0c]);
        const T bot = r1[x0c] + wx * (r1[x1c] - r1[x0c]);
        out_row[ox] = top + wy * (bot - top);
      }
    }
  }
}

// Transpose of the interpolation weights, gathered per source element.
template <typename T>
void upsample2x_backward(const TensorT<T>& upstream, int in_h, int in_w, TensorT<T>& d_in) {
  d_in = TensorT<T>(upstream.channels, in_h, in_w);
  const int oh = upstream.height, ow = upstream.width;
#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < upstream.channels; ++c) {
    for (int y = 0; y < in_h; ++y) {
      T* d_row = d_in.row(c, y);
      const int oy_lo = std::max(0, 2 * y - 3), oy_hi = std::min(oh - 1, 2 * y + 4);
      for (int x = 0; x < in_w; ++x) {
        T acc = T(0);
        for (int oy = oy_lo; oy <= oy_hi; ++oy) {
          const double sy = (oy + 0.5) / 2.0 - 0.5;
          int y0 = static_cast<int>(std::floor(sy));
          const T wy = static_cast<T>(sy - y0);
          const int y0c = std::clamp(y0, 0, in_h - 1);
          const int y1c = std::clamp(y0 + 1, 0, in_h - 1);
          T wy_here = T(0);
          if (y0c == y) wy_here += T(1) - wy;
          if (y1c == y) wy_here += wy;
          if (wy_here == T(0)) continue;
          const T* up_row = upstream.row(c, oy);
          const int ox_lo = std::max(0, 2 * x - 3), ox_hi = std::min(ow - 1, 2 * x + 4);
          for (int ox = ox_lo; ox <= ox_hi; ++ox) {
            const double sx = (ox + 0.5) / 2.0 - 0.5;
            int x0 = static_cast<int>(std::floor(sx));
            const T wx = static_cast<T>(sx - x0);
            const int x0c = std::clamp(x0, 0, in_w - 1);
            const int x1c = std::clamp(x0 + 1, 0, in_w - 1);
            T wx_here = T(0);
            if (x0c == x) wx_here += T(1) - wx;
            if (x1c == x) wx_here += wx;
            if (wx_here != T(0)) acc += wy_here * wx_here * up_row[ox];
          }
        }
        d_row[x] = acc;
      }
    }
  }
}

// Per-channel normalization over the H x W plane (statistics of this
// sample only; no running averages).
template <typename T>
struct ChannelNormStats {
  std::vector<T> mean, inv_std;  // per channel
};

template <typename T>
void channel_norm_forward(const TensorT<T>& in, const TensorT<T>& gamma, const TensorT<T>& beta,
                          T epsilon, TensorT<T>& out, ChannelNormStats<T>& stats) {
  out = TensorT<T>(in.channels, in.height, in.width);
  stats.mean.assign(in.channels, T(0));
  stats.inv_std.assign(in.channels, T(0));
  const size_t n = static_cast<size_t>(in.plane());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < in.channels; ++c) {
    const T* p = in.row(c, 0);
    T mean = T(0);
    for (size_t i = 0; i < n; ++i) mean += p[i];
    mean /= static_cast<T>(n);
    T var = T(0);
    for (size_t i = 0; i < n; ++i) {
      const T d = p[i] - mean;
      var += d * d;
    }
    var /= static_cast<T>(n);
    const T inv_std = T(1) / std::sqrt(var + epsilon);
    stats.mean[c] = mean;
    stats.inv_std[c] = inv_std;
    const T gc = gamma.data[c], bc = beta.data[c];
    T* q = out.row(c, 0);
    for (size_t i = 0; i < n; ++i) q[i] = (p[i] - mean) * inv_std * gc + bc;
  }
}

template <typename T>
void channel_norm_backward(const TensorT<T>& in, const TensorT<T>& gamma,
                           const ChannelNormStats<T>& stats, const TensorT<T>& upstream,
                           TensorT<T>& d_in, TensorT<T>& d_gamma, TensorT<T>& d_beta) {
  d_in = TensorT<T>(in.channels, in.height, in.width);
  d_gamma = TensorT<T>(in.channels, 1, 1);
  d_beta = TensorT<T>(in.channels, 1, 1);
  const size_t n = static_cast<size_t>(in.plane());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < in.channels; ++c) {
    const T* p = in.row(c, 0);
    const T* up = upstream.row(c, 0);
    const T mean = stats.mean[c], inv_std = stats.inv_std[c];
    T sum_up = T(0), sum_up_xhat = T(0);
    for (size_t i = 0; i < n; ++i) {
      const T xhat = (p[i] - mean) * inv_std;
      sum_up += up[i];
      sum_up_xhat += up[i] * xhat;
    }
    d_beta.data[c] = sum_up;
    d_gamma.data[c] = sum_up_xhat;
    const T gc = gamma.data[c];
    const T inv_n = T(1) / static_cast<T>(n);
    T* d = d_in.row(c, 0);
    for (size_t i = 0; i < n; ++i) {
      const T xhat = (p[i] - mean) * inv_std;
      d[i] = gc * inv_std * (up[i] - sum_up * inv_n - xhat * sum_up_xhat * inv_n);
    }
  }
}

// Scalar edge map: per pixel, sum of |channel-summed differences| to every
// neighbor within Chebyshev distance 2, divided by the actual neighbor
// count so border pixels are on the same scale as interior ones.
template <typename T>
void edge_map(const TensorT<T>& img, TensorT<T>& out) {
  out = TensorT<T>(1, img.height, img.width);
  const int h = img.height, w = img.width, cc = img.channels;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    T* out_row = out.row(0, y);
    for (int x = 0; x < w; ++x) {
      T acc = T(0);
      int count = 0;
      for (int dy = -2; dy <= 2; ++dy) {
        const int ny = y + dy;
        if (ny < 0 || ny >= h) continue;
        for (int dx = -2; dx <= 2; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int nx = x + dx;
          if (nx < 0 || nx >= w) continue;
          T diff = T(0);
          for (int c = 0; c < cc; ++c) diff += img.at(c, y, x) - img.at(c, ny, nx);
          acc += std::abs(diff);
          ++count;
        }
      }
      out_row[x] = count > 0 ? acc / static_cast<T>(count) : T(0);
    }
  }
}

}  // namespace kernels
}  // namespace iid

#endif  // IID_KERNELS_HPP_
