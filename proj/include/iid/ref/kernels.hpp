#ifndef IID_REF_KERNELS_HPP_
#define IID_REF_KERNELS_HPP_

#include "iid/kernels.hpp"
#include "iid/tensor.hpp"

// Serial reference implementations: the plainest possible loops, kept as
// the ground truth the OpenMP kernels are tested and benchmarked against.

namespace iid {
namespace ref {

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& in, const TensorT<T>& weight, const TensorT<T>& bias,
                          const kernels::ConvGeometry& g) {
  TensorT<T> out(g.k_out, g.out_h(in.height), g.out_w(in.width));
  for (int oc = 0; oc < g.k_out; ++oc) {
    for (int oy = 0; oy < out.height; ++oy) {
      for (int ox = 0; ox < out.width; ++ox) {
        T acc = bias.data[oc];
        for (int ic = 0; ic < g.k_in; ++ic) {
          for (int ky = 0; ky < g.kh; ++ky) {
            for (int kx = 0; kx < g.kw; ++kx) {
              const int iy = oy * g.stride - g.pad_y + ky * g.dilation;
              const int ix = ox * g.stride - g.pad_x + kx * g.dilation;
              if (iy < 0 || iy >= in.height || ix < 0 || ix >= in.width) continue;
              acc += weight.at(oc * g.k_in + ic, ky, kx) * in.at(ic, iy, ix);
            }
          }
        }
        out.at(oc, oy, ox) = acc;
      }
    }
  }
  return out;
}

template <typename T>
TensorT<T> edge_map(const TensorT<T>& img) {
  TensorT<T> out(1, img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      T acc = T(0);
      int count = 0;
      for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= img.height || nx < 0 || nx >= img.width) continue;
          T diff = T(0);
          for (int c = 0; c < img.channels; ++c) diff += img.at(c, y, x) - img.at(c, ny, nx);
          acc += std::abs(diff);
          ++count;
        }
      }
      out.at(0, y, x) = count > 0 ? acc / static_cast<T>(count) : T(0);
    }
  }
  return out;
}

// One full filtering iteration (LR, RL, TB, BT) with a fixed coefficient
// image, serial over rows and columns.
template <typename T>
TensorT<T> filter_iteration(const TensorT<T>& in, const TensorT<T>& g) {
  TensorT<T> a = in;
  TensorT<T> b(in.channels, in.height, in.width);
  const int h = in.height, w = in.width;
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      b.at(c, y, 0) = a.at(c, y, 0);
      for (int x = 1; x < w; ++x) {
        const T xi = a.at(c, y, x);
        b.at(c, y, x) = xi + g.at(0, y, x) * (b.at(c, y, x - 1) - xi);
      }
    }
  }
  a = b;
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      b.at(c, y, w - 1) = a.at(c, y, w - 1);
      for (int x = w - 2; x >= 0; --x) {
        const T xi = a.at(c, y, x);
        b.at(c, y, x) = xi + g.at(0, y, x) * (b.at(c, y, x + 1) - xi);
      }
    }
  }
  a = b;
  for (int c = 0; c < in.channels; ++c) {
    for (int x = 0; x < w; ++x) {
      b.at(c, 0, x) = a.at(c, 0, x);
      for (int y = 1; y < h; ++y) {
        const T xi = a.at(c, y, x);
        b.at(c, y, x) = xi + g.at(0, y, x) * (b.at(c, y - 1, x) - xi);
      }
    }
  }
  a = b;
  for (int c = 0; c < in.channels; ++c) {
    for (int x = 0; x < w; ++x) {
      b.at(c, h - 1, x) = a.at(c, h - 1, x);
      for (int y = h - 2; y >= 0; --y) {
        const T xi = a.at(c, y, x);
        b.at(c, y, x) = xi + g.at(0, y, x) * (b.at(c, y + 1, x) - xi);
      }
    }
  }
  return b;
}

}  // namespace ref
}  // namespace iid

#endif  // IID_REF_KERNELS_HPP_
