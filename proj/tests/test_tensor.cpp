#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "unicorn/errors.hpp"
#include "unicorn/tensor.hpp"

using namespace unicorn;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Plain nested-loop convolution written independently of ops::conv3d.
double reference_conv_voxel(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t o, std::size_t ox,
                            std::size_t oy, std::size_t oz) {
  const auto& xs = x.shape();
  double acc = b.data()[o];
  for (std::size_t c = 0; c < xs[0]; ++c)
    for (int kx = 0; kx < 3; ++kx)
      for (int ky = 0; ky < 3; ++ky)
        for (int kz = 0; kz < 3; ++kz) {
          const long ix = 2L * ox - 1 + kx, iy = 2L * oy - 1 + ky, iz = 2L * oz - 1 + kz;
          if (ix < 0 || iy < 0 || iz < 0 || ix >= long(xs[1]) || iy >= long(xs[2]) || iz >= long(xs[3])) continue;
          acc += w.data()[(((o * xs[0] + c) * 3 + kx) * 3 + ky) * 3 + kz] *
                 x.data()[((c * xs[1] + ix) * xs[2] + iy) * xs[3] + iz];
        }
  return acc;
}

}  // namespace

TEST_CASE("matmul matches hand computation") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = ops::matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c.data()[0] == 58);
  CHECK(c.data()[1] == 64);
  CHECK(c.data()[2] == 139);
  CHECK(c.data()[3] == 154);
  CHECK_THROWS_AS(ops::matmul(a, a), ShapeError);
}

TEST_CASE("conv3d agrees with a direct nested-loop reference") {
  Rng rng(3);
  Tensor x = random_tensor({2, 5, 4, 3}, rng, false);
  Tensor w = random_tensor({3, 2, 3, 3, 3}, rng, false);
  Tensor b = random_tensor({3}, rng, false);
  Tensor y = ops::conv3d(x, w, b, ConvGeometry{});
  REQUIRE(y.shape() == Shape{3, 3, 2, 2});
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t k = 0; k < 2; ++k)
          CHECK(y.data()[((o * 3 + i) * 2 + j) * 2 + k] == doctest::Approx(reference_conv_voxel(x, w, b, o, i, j, k)));
}

TEST_CASE("conv_transpose3d is the adjoint of conv3d") {
  // <conv(x), y> == <x, convT(y)> with zero biases.
  Rng rng(5);
  Tensor x = random_tensor({2, 6, 5, 4}, rng, false);
  Tensor w = random_tensor({3, 2, 3, 3, 3}, rng, false);
  Tensor zero3 = Tensor::zeros({3}), zero2 = Tensor::zeros({2});
  Tensor cx = ops::conv3d(x, w, zero3, ConvGeometry{});
  Tensor y = random_tensor(cx.shape(), rng, false);
  // conv weight [O=3, C=2, ...] doubles as transposed weight [C_in=3, O=2, ...].
  Tensor ty = ops::conv_transpose3d(y, w, zero2, ConvGeometry{}, {6, 5, 4});
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < cx.size(); ++i) lhs += cx.data()[i] * y.data()[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x.data()[i] * ty.data()[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("elementary op gradients match finite differences") {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 5}, rng);
  Tensor gamma = random_tensor({5}, rng);
  Tensor beta = random_tensor({5}, rng);
  Tensor bias = random_tensor({5}, rng);
  std::vector<std::size_t> targets{1, 0, 4};
  auto loss = [&] {
    Tensor h = ops::add_bias(ops::matmul(a, b), bias);
    h = ops::layer_norm(ops::gelu(h), gamma, beta);
    Tensor attn = ops::softmax_rows(ops::matmul_nt(h, h), true);
    Tensor mixed = ops::matmul(attn, h);
    Tensor logits = ops::concat_cols({ops::slice_cols(mixed, 0, 2), ops::slice_cols(mixed, 2, 3)});
    return ops::add(ops::cross_entropy_sum(logits, targets, 99), ops::mae(mixed, ops::scale(h, 0.5)));
  };
  auto result = testing::check_gradients(loss, {{"a", a}, {"b", b}, {"gamma", gamma}, {"beta", beta}, {"bias", bias}},
                                         20, 1e-5, 1);
  CHECK(result.max_relative_error < 1e-5);
}

TEST_CASE("conv gradients match finite differences") {
  Rng rng(13);
  Tensor x = random_tensor({2, 5, 4, 4}, rng);
  Tensor w = random_tensor({3, 2, 3, 3, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  Tensor wt = random_tensor({3, 2, 3, 3, 3}, rng);
  Tensor bt = random_tensor({2}, rng);
  auto loss = [&] {
    Tensor h = ops::conv3d(x, w, b, ConvGeometry{});
    Tensor back = ops::conv_transpose3d(h, wt, bt, ConvGeometry{}, {5, 4, 4});
    return ops::sum(ops::mul(back, back));
  };
  auto result = testing::check_gradients(loss, {{"x", x}, {"w", w}, {"b", b}, {"wt", wt}, {"bt", bt}}, 30, 1e-5, 2);
  CHECK(result.max_relative_error < 1e-6);
}

TEST_CASE("no-grad guard suppresses graph recording") {
  Tensor a = Tensor::from({1}, {2.0}, true);
  {
    NoGradGuard guard;
    Tensor b = ops::scale(a, 3.0);
    CHECK_FALSE(b.requires_grad());
  }
  Tensor c = ops::scale(a, 3.0);
  CHECK(c.requires_grad());
  c.backward();
  CHECK(a.grad()[0] == 3.0);
}
