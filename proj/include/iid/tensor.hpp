#ifndef IID_TENSOR_HPP_
#define IID_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace iid {

// Dense C x H x W value array, row-major with channel outermost.
// Carrier for images, feature maps and gradients.
template <typename T>
struct TensorT {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  TensorT() = default;
  TensorT(int c, int h, int w) : channels(c), height(h), width(w) {
    if (c < 0 || h < 0 || w < 0) {
      throw std::invalid_argument("tensor dimensions must be nonnegative");
    }
    data.assign(static_cast<size_t>(c) * h * w, T(0));
  }

  static TensorT zeros(int c, int h, int w) { return TensorT(c, h, w); }

  static TensorT full(int c, int h, int w, T v) {
    TensorT t(c, h, w);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static TensorT scalar(T v) { return full(1, 1, 1, v); }

  size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }
  int plane() const { return height * width; }

  T& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  T at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }

  T* row(int c, int y) { return data.data() + (static_cast<size_t>(c) * height + y) * width; }
  const T* row(int c, int y) const {
    return data.data() + (static_cast<size_t>(c) * height + y) * width;
  }

  bool same_shape(const TensorT& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  std::string shape_str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" +
           std::to_string(width);
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool all_finite() const {
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  T min_value() const { return *std::min_element(data.begin(), data.end()); }
  T max_value() const { return *std::max_element(data.begin(), data.end()); }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out(channels, height, width);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using ImageTensor = TensorT<float>;

template <typename T>
inline void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
  }
}

}  // namespace iid

#endif  // IID_TENSOR_HPP_
