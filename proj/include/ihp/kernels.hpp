#pragma once

#include <span>

#include "ihp/tensor.hpp"

/// Dense network kernels. The top-level functions are OpenMP-parallel across
/// batch items (or channel planes) and use im2col + GEMM; the
/// `reference` namespace holds direct serial loops that the tests and the
/// benchmark compare against.
namespace ihp::kernels {

struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  int dilation = 1;

  int output_size(int input) const { return (input + 2 * pad - dilation * (kernel - 1) - 1) / stride + 1; }
};

/// out = conv(in, weight) + bias. weight is [out][in][k][k], bias [out].
void conv2d_forward(const Tensor& in, std::span<const float> weight, std::span<const float> bias, int out_channels,
                    const ConvGeometry& g, Tensor& out);

/// Accumulates into dweight/dbias; writes din when non-null.
void conv2d_backward(const Tensor& in, std::span<const float> weight, int out_channels, const ConvGeometry& g,
                     const Tensor& dout, Tensor* din, std::span<float> dweight, std::span<float> dbias);

/// Bilinear resize, half-pixel centres (align_corners = false).
void resize_bilinear(const Tensor& in, int out_h, int out_w, Tensor& out);
void resize_bilinear_backward(const Tensor& dout, int in_h, int in_w, Tensor& din);

void relu_inplace(Tensor& t);
/// grad *= (activated > 0)
void relu_backward(const Tensor& activated, Tensor& grad);

namespace reference {

void conv2d_forward(const Tensor& in, std::span<const float> weight, std::span<const float> bias, int out_channels,
                    const ConvGeometry& g, Tensor& out);
void conv2d_backward(const Tensor& in, std::span<const float> weight, int out_channels, const ConvGeometry& g,
                     const Tensor& dout, Tensor* din, std::span<float> dweight, std::span<float> dbias);
void resize_bilinear(const Tensor& in, int out_h, int out_w, Tensor& out);
void resize_bilinear_backward(const Tensor& dout, int in_h, int in_w, Tensor& din);

}  // namespace reference

}  // namespace ihp::kernels
