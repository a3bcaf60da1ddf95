#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ihp {

/// Dense NCHW float tensor.
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, float fill = 0.0f)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t item_size() const { return plane() * c; }
  std::size_t size() const { return data.size(); }

  float* item(int b) { return data.data() + item_size() * b; }
  const float* item(int b) const { return data.data() + item_size() * b; }
  float& at(int b, int ch, int y, int x) { return data[((static_cast<std::size_t>(b) * c + ch) * h + y) * w + x]; }
  float at(int b, int ch, int y, int x) const {
    return data[((static_cast<std::size_t>(b) * c + ch) * h + y) * w + x];
  }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

}  // namespace ihp
