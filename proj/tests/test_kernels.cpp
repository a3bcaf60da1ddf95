#include <gtest/gtest.h>

#include "ihp/common.hpp"
#include "ihp/kernels.hpp"

using namespace ihp;
namespace k = ihp::kernels;

namespace {

Tensor random_tensor(int n, int c, int h, int w, Rng& rng) {
  Tensor t(n, c, h, w);
  for (float& v : t.data) v = static_cast<float>(rng.uniform01() * 2.0 - 1.0);
  return t;
}

std::vector<float> random_vec(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform01() * 2.0 - 1.0);
  return v;
}

void expect_close(const std::vector<float>& a, const std::vector<float>& b, float tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol) << "at " << i;
}

struct Case {
  int n, c_in, c_out, h, w;
  k::ConvGeometry g;
};

const Case kCases[] = {
    {2, 3, 4, 9, 7, {3, 1, 1, 1}}, {3, 5, 2, 11, 10, {7, 2, 3, 1}}, {1, 4, 4, 12, 12, {3, 1, 2, 2}},
    {2, 4, 3, 13, 9, {3, 1, 4, 4}}, {2, 6, 5, 8, 8, {1, 1, 0, 1}},   {1, 3, 3, 10, 6, {3, 2, 1, 1}},
};

}  // namespace

TEST(ConvKernel, ForwardMatchesReference) {
  Rng rng(1);
  for (const Case& cs : kCases) {
    const Tensor in = random_tensor(cs.n, cs.c_in, cs.h, cs.w, rng);
    const auto w = random_vec(static_cast<std::size_t>(cs.c_out) * cs.c_in * cs.g.kernel * cs.g.kernel, rng);
    const auto b = random_vec(cs.c_out, rng);
    Tensor fast, ref;
    k::conv2d_forward(in, w, b, cs.c_out, cs.g, fast);
    k::reference::conv2d_forward(in, w, b, cs.c_out, cs.g, ref);
    ASSERT_TRUE(fast.same_shape(ref));
    EXPECT_EQ(fast.h, cs.g.output_size(cs.h));
    expect_close(fast.data, ref.data, 1e-4f);
  }
}

TEST(ConvKernel, BackwardMatchesReference) {
  Rng rng(2);
  for (const Case& cs : kCases) {
    const Tensor in = random_tensor(cs.n, cs.c_in, cs.h, cs.w, rng);
    const auto w = random_vec(static_cast<std::size_t>(cs.c_out) * cs.c_in * cs.g.kernel * cs.g.kernel, rng);
    const Tensor dout = random_tensor(cs.n, cs.c_out, cs.g.output_size(cs.h), cs.g.output_size(cs.w), rng);
    Tensor din_fast, din_ref;
    std::vector<float> dw_fast(w.size(), 0.5f), dw_ref(w.size(), 0.5f);
    std::vector<float> db_fast(cs.c_out, 0.25f), db_ref(cs.c_out, 0.25f);
    k::conv2d_backward(in, w, cs.c_out, cs.g, dout, &din_fast, dw_fast, db_fast);
    k::reference::conv2d_backward(in, w, cs.c_out, cs.g, dout, &din_ref, dw_ref, db_ref);
    expect_close(din_fast.data, din_ref.data, 1e-4f);
    expect_close(dw_fast, dw_ref, 1e-3f);
    expect_close(db_fast, db_ref, 1e-3f);
  }
}

TEST(ConvKernel, BackwardIsAdjointOfForward) {
  // <conv(x), y> == <x, conv^T(y)> for the bias-free operator.
  Rng rng(3);
  for (const Case& cs : kCases) {
    const Tensor x = random_tensor(cs.n, cs.c_in, cs.h, cs.w, rng);
    const auto w = random_vec(static_cast<std::size_t>(cs.c_out) * cs.c_in * cs.g.kernel * cs.g.kernel, rng);
    const std::vector<float> zero_bias(cs.c_out, 0.0f);
    Tensor y;
    k::reference::conv2d_forward(x, w, zero_bias, cs.c_out, cs.g, y);
    const Tensor r = random_tensor(y.n, y.c, y.h, y.w, rng);
    Tensor xt;
    std::vector<float> dw(w.size()), db(cs.c_out);
    k::reference::conv2d_backward(x, w, cs.c_out, cs.g, r, &xt, dw, db);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += static_cast<double>(y.data[i]) * r.data[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += static_cast<double>(x.data[i]) * xt.data[i];
    EXPECT_NEAR(lhs, rhs, 1e-3 * (1.0 + std::abs(lhs)));
  }
}

TEST(ConvKernel, RejectsWrongWeightSize) {
  Tensor in(1, 2, 4, 4), out;
  std::vector<float> w(5), b(1);
  EXPECT_THROW(k::conv2d_forward(in, w, b, 1, {3, 1, 1, 1}, out), Error);
}

TEST(Resize, MatchesReference) {
  Rng rng(4);
  const int shapes[][4] = {{5, 7, 10, 14}, {8, 8, 64, 64}, {9, 6, 4, 3}, {16, 16, 32, 32}, {3, 3, 3, 3}};
  for (const auto& s : shapes) {
    const Tensor in = random_tensor(2, 3, s[0], s[1], rng);
    Tensor fast, ref;
    k::resize_bilinear(in, s[2], s[3], fast);
    k::reference::resize_bilinear(in, s[2], s[3], ref);
    expect_close(fast.data, ref.data, 1e-5f);
    const Tensor dout = random_tensor(2, 3, s[2], s[3], rng);
    Tensor dfast, dref;
    k::resize_bilinear_backward(dout, s[0], s[1], dfast);
    k::reference::resize_bilinear_backward(dout, s[0], s[1], dref);
    expect_close(dfast.data, dref.data, 1e-4f);
  }
}

TEST(Resize, SameSizeIsIdentity) {
  Rng rng(5);
  const Tensor in = random_tensor(1, 2, 6, 5, rng);
  Tensor out;
  k::resize_bilinear(in, 6, 5, out);
  expect_close(out.data, in.data, 1e-6f);
}

TEST(Resize, UpsampleHalfPixelCentres) {
  Tensor in(1, 1, 1, 2);
  in.data = {0.0f, 1.0f};
  Tensor out;
  k::resize_bilinear(in, 1, 4, out);
  // Output centres map to -0.25, 0.25, 0.75, 1.25 and clamp at the edges.
  EXPECT_FLOAT_EQ(out.data[0], 0.0f);
  EXPECT_FLOAT_EQ(out.data[1], 0.25f);
  EXPECT_FLOAT_EQ(out.data[2], 0.75f);
  EXPECT_FLOAT_EQ(out.data[3], 1.0f);
}

TEST(Relu, ForwardAndBackward) {
  Tensor t(1, 1, 1, 4);
  t.data = {-1.0f, 0.0f, 2.0f, -3.0f};
  k::relu_inplace(t);
  EXPECT_EQ(t.data, (std::vector<float>{0.0f, 0.0f, 2.0f, 0.0f}));
  Tensor g(1, 1, 1, 4, 1.0f);
  k::relu_backward(t, g);
  EXPECT_EQ(g.data, (std::vector<float>{0.0f, 0.0f, 1.0f, 0.0f}));
}
