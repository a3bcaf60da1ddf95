#include "ihp/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "ihp/common.hpp"

namespace ihp::kernels {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void check_weights(const Tensor& in, std::span<const float> weight, int out_channels, const ConvGeometry& g) {
  const std::size_t expected = static_cast<std::size_t>(out_channels) * in.c * g.kernel * g.kernel;
  if (weight.size() != expected) fail(ErrorKind::invalid_argument, "conv weight size does not match geometry");
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

void im2col(const float* in, int channels, int h, int w, const ConvGeometry& g, int out_h, int out_w, float* col) {
  const int k = g.kernel;
  const std::size_t p = static_cast<std::size_t>(out_h) * out_w;
  for (int ci = 0; ci < channels; ++ci) {
    const float* src = in + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* dst = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * p;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky * g.dilation;
          float* row = dst + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + out_w, 0.0f);
            continue;
          }
          const float* src_row = src + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx * g.dilation;
            row[ox] = (ix >= 0 && ix < w) ? src_row[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const float* col, int channels, int h, int w, const ConvGeometry& g, int out_h, int out_w, float* out) {
  const int k = g.kernel;
  const std::size_t p = static_cast<std::size_t>(out_h) * out_w;
  std::fill(out, out + static_cast<std::size_t>(channels) * h * w, 0.0f);
  for (int ci = 0; ci < channels; ++ci) {
    float* dst = out + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* src = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * p;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky * g.dilation;
          if (iy < 0 || iy >= h) continue;
          float* dst_row = dst + static_cast<std::size_t>(iy) * w;
          const float* src_row = src + static_cast<std::size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx * g.dilation;
            if (ix >= 0 && ix < w) dst_row[ix] += src_row[ox];
          }
        }
      }
    }
  }
}

// Source taps for one output coordinate of a half-pixel-centred bilinear resize.
struct Tap {
  int lo;
  int hi;
  float frac;
};

std::vector<Tap> bilinear_taps(int in_size, int out_size) {
  std::vector<Tap> taps(out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int lo = static_cast<int>(std::floor(src));
    lo = std::min(lo, in_size - 1);
    const int hi = std::min(lo + 1, in_size - 1);
    taps[o] = Tap{lo, hi, static_cast<float>(src - lo)};
  }
  return taps;
}

}  // namespace

void conv2d_forward(const Tensor& in, std::span<const float> weight, std::span<const float> bias, int out_channels,
                    const ConvGeometry& g, Tensor& out) {
  check_weights(in, weight, out_channels, g);
  const int out_h = g.output_size(in.h);
  const int out_w = g.output_size(in.w);
  out = Tensor(in.n, out_channels, out_h, out_w);
  const int k_rows = in.c * g.kernel * g.kernel;
  const std::size_t p = static_cast<std::size_t>(out_h) * out_w;
  const ConstMatrixMap wmat(weight.data(), out_channels, k_rows);
  const bool pointwise = is_pointwise(g);

#pragma omp parallel
  {
    std::vector<float> col(pointwise ? 0 : static_cast<std::size_t>(k_rows) * p);
#pragma omp for schedule(static)
    for (int b = 0; b < in.n; ++b) {
      const float* src = in.item(b);
      if (!pointwise) {
        im2col(src, in.c, in.h, in.w, g, out_h, out_w, col.data());
        src = col.data();
      }
      MatrixMap omat(out.item(b), out_channels, static_cast<Eigen::Index>(p));
      omat.noalias() = wmat * ConstMatrixMap(src, k_rows, static_cast<Eigen::Index>(p));
      if (!bias.empty())
        for (int co = 0; co < out_channels; ++co) omat.row(co).array() += bias[co];
    }
  }
}

void conv2d_backward(const Tensor& in, std::span<const float> weight, int out_channels, const ConvGeometry& g,
                     const Tensor& dout, Tensor* din, std::span<float> dweight, std::span<float> dbias) {
  check_weights(in, weight, out_channels, g);
  const int out_h = dout.h;
  const int out_w = dout.w;
  const int k_rows = in.c * g.kernel * g.kernel;
  const std::size_t p = static_cast<std::size_t>(out_h) * out_w;
  const ConstMatrixMap wmat(weight.data(), out_channels, k_rows);
  const bool pointwise = is_pointwise(g);
  if (din) *din = Tensor(in.n, in.c, in.h, in.w);

  // Per-item weight gradients are reduced in item order so the result does
  // not depend on the thread count.
  std::vector<float> item_dw(static_cast<std::size_t>(in.n) * weight.size());

#pragma omp parallel
  {
    std::vector<float> col(pointwise ? 0 : static_cast<std::size_t>(k_rows) * p);
    std::vector<float> dcol(pointwise ? 0 : static_cast<std::size_t>(k_rows) * p);
#pragma omp for schedule(static)
    for (int b = 0; b < in.n; ++b) {
      const float* src = in.item(b);
      if (!pointwise) {
        im2col(src, in.c, in.h, in.w, g, out_h, out_w, col.data());
        src = col.data();
      }
      const ConstMatrixMap dmat(dout.item(b), out_channels, static_cast<Eigen::Index>(p));
      MatrixMap dw(item_dw.data() + weight.size() * b, out_channels, k_rows);
      dw.noalias() = dmat * ConstMatrixMap(src, k_rows, static_cast<Eigen::Index>(p)).transpose();
      if (din) {
        if (pointwise) {
          MatrixMap(din->item(b), k_rows, static_cast<Eigen::Index>(p)).noalias() = wmat.transpose() * dmat;
        } else {
          MatrixMap(dcol.data(), k_rows, static_cast<Eigen::Index>(p)).noalias() = wmat.transpose() * dmat;
          col2im(dcol.data(), in.c, in.h, in.w, g, out_h, out_w, din->item(b));
        }
      }
    }
  }
  for (int b = 0; b < in.n; ++b) {
    const float* src = item_dw.data() + weight.size() * b;
    for (std::size_t i = 0; i < weight.size(); ++i) dweight[i] += src[i];
  }
  if (!dbias.empty()) {
    for (int b = 0; b < in.n; ++b)
      for (int co = 0; co < out_channels; ++co) {
        const float* d = dout.item(b) + static_cast<std::size_t>(co) * p;
        float s = 0.0f;
        for (std::size_t i = 0; i < p; ++i) s += d[i];
        dbias[co] += s;
      }
  }
}

void resize_bilinear(const Tensor& in, int out_h, int out_w, Tensor& out) {
  out = Tensor(in.n, in.c, out_h, out_w);
  const std::vector<Tap> ty = bilinear_taps(in.h, out_h);
  const std::vector<Tap> tx = bilinear_taps(in.w, out_w);
  const int planes = in.n * in.c;
#pragma omp parallel for schedule(static)
  for (int pl = 0; pl < planes; ++pl) {
    const float* src = in.data.data() + in.plane() * pl;
    float* dst = out.data.data() + out.plane() * pl;
    for (int y = 0; y < out_h; ++y) {
      const float* r0 = src + static_cast<std::size_t>(ty[y].lo) * in.w;
      const float* r1 = src + static_cast<std::size_t>(ty[y].hi) * in.w;
      const float fy = ty[y].frac;
      for (int x = 0; x < out_w; ++x) {
        const Tap& t = tx[x];
        const float top = r0[t.lo] + (r0[t.hi] - r0[t.lo]) * t.frac;
        const float bot = r1[t.lo] + (r1[t.hi] - r1[t.lo]) * t.frac;
        dst[static_cast<std::size_t>(y) * out_w + x] = top + (bot - top) * fy;
      }
    }
  }
}

void resize_bilinear_backward(const Tensor& dout, int in_h, int in_w, Tensor& din) {
  din = Tensor(dout.n, dout.c, in_h, in_w);
  const std::vector<Tap> ty = bilinear_taps(in_h, dout.h);
  const std::vector<Tap> tx = bilinear_taps(in_w, dout.w);
  const int planes = dout.n * dout.c;
#pragma omp parallel for schedule(static)
  for (int pl = 0; pl < planes; ++pl) {
    const float* src = dout.data.data() + dout.plane() * pl;
    float* dst = din.data.data() + din.plane() * pl;
    for (int y = 0; y < dout.h; ++y) {
      float* r0 = dst + static_cast<std::size_t>(ty[y].lo) * in_w;
      float* r1 = dst + static_cast<std::size_t>(ty[y].hi) * in_w;
      const float fy = ty[y].frac;
      for (int x = 0; x < dout.w; ++x) {
        const Tap& t = tx[x];
        const float g = src[static_cast<std::size_t>(y) * dout.w + x];
        const float gt = g * (1.0f - fy);
        const float gb = g * fy;
        r0[t.lo] += gt * (1.0f - t.frac);
        r0[t.hi] += gt * t.frac;
        r1[t.lo] += gb * (1.0f - t.frac);
        r1[t.hi] += gb * t.frac;
      }
    }
  }
}

void relu_inplace(Tensor& t) {
  float* d = t.data.data();
  const std::size_t n = t.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) d[i] = d[i] > 0.0f ? d[i] : 0.0f;
}

void relu_backward(const Tensor& activated, Tensor& grad) {
  const float* a = activated.data.data();
  float* g = grad.data.data();
  const std::size_t n = grad.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i)
    if (a[i] <= 0.0f) g[i] = 0.0f;
}

namespace reference {

void conv2d_forward(const Tensor& in, std::span<const float> weight, std::span<const float> bias, int out_channels,
                    const ConvGeometry& g, Tensor& out) {
  check_weights(in, weight, out_channels, g);
  const int k = g.kernel;
  out = Tensor(in.n, out_channels, g.output_size(in.h), g.output_size(in.w));
  for (int b = 0; b < in.n; ++b)
    for (int co = 0; co < out_channels; ++co)
      for (int oy = 0; oy < out.h; ++oy)
        for (int ox = 0; ox < out.w; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (int ci = 0; ci < in.c; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * g.stride - g.pad + ky * g.dilation;
                const int ix = ox * g.stride - g.pad + kx * g.dilation;
                if (iy < 0 || ix < 0 || iy >= in.h || ix >= in.w) continue;
                acc += static_cast<double>(weight[((static_cast<std::size_t>(co) * in.c + ci) * k + ky) * k + kx]) *
                       in.at(b, ci, iy, ix);
              }
          out.at(b, co, oy, ox) = static_cast<float>(acc);
        }
}

void conv2d_backward(const Tensor& in, std::span<const float> weight, int out_channels, const ConvGeometry& g,
                     const Tensor& dout, Tensor* din, std::span<float> dweight, std::span<float> dbias) {
  check_weights(in, weight, out_channels, g);
  const int k = g.kernel;
  if (din) *din = Tensor(in.n, in.c, in.h, in.w);
  for (int b = 0; b < in.n; ++b)
    for (int co = 0; co < out_channels; ++co)
      for (int oy = 0; oy < dout.h; ++oy)
        for (int ox = 0; ox < dout.w; ++ox) {
          const float d = dout.at(b, co, oy, ox);
          if (!dbias.empty()) dbias[co] += d;
          for (int ci = 0; ci < in.c; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * g.stride - g.pad + ky * g.dilation;
                const int ix = ox * g.stride - g.pad + kx * g.dilation;
                if (iy < 0 || ix < 0 || iy >= in.h || ix >= in.w) continue;
                const std::size_t wi = ((static_cast<std::size_t>(co) * in.c + ci) * k + ky) * k + kx;
                dweight[wi] += d * in.at(b, ci, iy, ix);
                if (din) din->at(b, ci, iy, ix) += d * weight[wi];
              }
        }
}

void resize_bilinear(const Tensor& in, int out_h, int out_w, Tensor& out) {
  out = Tensor(in.n, in.c, out_h, out_w);
  const double sy = static_cast<double>(in.h) / out_h;
  const double sx = static_cast<double>(in.w) / out_w;
  for (int b = 0; b < in.n; ++b)
    for (int ch = 0; ch < in.c; ++ch)
      for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
          const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
          const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
          const int y0 = std::min(static_cast<int>(fy), in.h - 1);
          const int x0 = std::min(static_cast<int>(fx), in.w - 1);
          const int y1 = std::min(y0 + 1, in.h - 1);
          const int x1 = std::min(x0 + 1, in.w - 1);
          const double ly = fy - y0;
          const double lx = fx - x0;
          out.at(b, ch, y, x) = static_cast<float>(
              (1 - ly) * ((1 - lx) * in.at(b, ch, y0, x0) + lx * in.at(b, ch, y0, x1)) +
              ly * ((1 - lx) * in.at(b, ch, y1, x0) + lx * in.at(b, ch, y1, x1)));
        }
}

void resize_bilinear_backward(const Tensor& dout, int in_h, int in_w, Tensor& din) {
  din = Tensor(dout.n, dout.c, in_h, in_w);
  const double sy = static_cast<double>(in_h) / dout.h;
  const double sx = static_cast<double>(in_w) / dout.w;
  for (int b = 0; b < dout.n; ++b)
    for (int ch = 0; ch < dout.c; ++ch)
      for (int y = 0; y < dout.h; ++y)
        for (int x = 0; x < dout.w; ++x) {
          const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
          const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
          const int y0 = std::min(static_cast<int>(fy), in_h - 1);
          const int x0 = std::min(static_cast<int>(fx), in_w - 1);
          const int y1 = std::min(y0 + 1, in_h - 1);
          const int x1 = std::min(x0 + 1, in_w - 1);
          const double ly = fy - y0;
          const double lx = fx - x0;
          const double g = dout.at(b, ch, y, x);
          din.at(b, ch, y0, x0) += static_cast<float>(g * (1 - ly) * (1 - lx));
          din.at(b, ch, y0, x1) += static_cast<float>(g * (1 - ly) * lx);
          din.at(b, ch, y1, x0) += static_cast<float>(g * ly * (1 - lx));
          din.at(b, ch, y1, x1) += static_cast<float>(g * ly * lx);
        }
}

}  // namespace reference

}  // namespace ihp::kernels
