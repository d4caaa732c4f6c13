#include <doctest.h>

#include <cmath>

#include "cseg/gradcheck.hpp"
#include "cseg/layers.hpp"
#include "unit/oracles.hpp"

using namespace cseg;

namespace {

template <class T>
std::span<const T> view(const std::vector<T>& v) {
  return std::span<const T>(v);
}

template <class T>
std::vector<T> zeros(int n) {
  return std::vector<T>(n, T{});
}

double max_abs_diff(const Tensor5<double>& a, const Tensor5<double>& b) {
  REQUIRE(a.shape == b.shape);
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

}  // namespace

TEST_SUITE("layers") {
  TEST_CASE("identity and all-ones convolutions") {
    const auto x = oracle::random_tensor<double>({1, 1, 3, 4, 5}, 1);
    Tensor5<double> w({1, 1, 1, 1, 1}, 1.0);
    std::vector<double> b{0.0};
    CHECK(conv3d_forward<double>(x, w, view(b)).values == x.values);

    Tensor5<double> ones({1, 1, 3, 3, 3}, 1.0);
    const auto y = conv3d_forward<double>(ones, ones, view(b));
    CHECK(y.shape == Shape5{1, 1, 1, 1, 1});
    CHECK(y.values[0] == 27.0);
  }

  TEST_CASE("convolution matches the direct loop") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto x = oracle::random_tensor<double>({2, 3, 6, 5, 7}, s);
      const auto w = oracle::random_tensor<double>({4, 3, 3, 3, 3}, 50 + s);
      const std::vector<double> b{0.1, -0.2, 0.3, 0.0};
      const auto y = conv3d_forward<double>(x, w, view(b));
      CHECK(y.shape == Shape5{2, 4, 4, 3, 5});
      CHECK(max_abs_diff(y, oracle::conv3d(x, w, b)) < 1e-12);
    }
    Tensor5<double> wrong({4, 2, 3, 3, 3});
    CHECK_THROWS_AS(conv3d_forward<double>(Tensor5<double>({1, 3, 5, 5, 5}), wrong, zeros<double>(4)), ShapeError);
  }

  TEST_CASE("two valid 3x3x3 convolutions shrink each axis by four") {
    const auto x = oracle::random_tensor<float>({1, 1, 10, 9, 8}, 2);
    const auto w = oracle::random_tensor<float>({1, 1, 3, 3, 3}, 3);
    const auto y = conv3d_forward<float>(conv3d_forward<float>(x, w, zeros<float>(1)), w, zeros<float>(1));
    CHECK(y.shape == Shape5{1, 1, 6, 5, 4});
  }

  TEST_CASE("relu") {
    Tensor5<double> x({1, 1, 1, 1, 3});
    x.values = {-1.0, 0.0, 2.0};
    CHECK(relu_forward<double>(x).values == std::vector<double>{0.0, 0.0, 2.0});
    Tensor5<double> g({1, 1, 1, 1, 3}, 1.0);
    CHECK(relu_backward<double>(x, g).values == std::vector<double>{0.0, 0.0, 1.0});
  }

  TEST_CASE("max pooling") {
    Tensor5<double> block({1, 1, 2, 2, 2});
    for (int i = 0; i < 8; ++i) block.values[i] = i + 1;
    CHECK(maxpool2_forward<double>(block).output.values[0] == 8.0);
    const auto c = maxpool2_forward<double>(Tensor5<double>({1, 2, 4, 4, 4}, 3.0));
    CHECK(c.output.shape == Shape5{1, 2, 2, 2, 2});
    for (double v : c.output.values) CHECK(v == 3.0);
    CHECK_THROWS_AS(maxpool2_forward<double>(Tensor5<double>({1, 1, 3, 4, 4})), ShapeError);

    const auto x = oracle::random_tensor<double>({2, 3, 4, 6, 8}, 4);
    CHECK(maxpool2_forward<double>(x).output.values == oracle::maxpool2(x).values);
  }

  TEST_CASE("max pooling routes tied gradients to the first voxel") {
    Tensor5<double> x({1, 1, 2, 2, 2}, 1.0);
    const auto p = maxpool2_forward<double>(x);
    Tensor5<double> g({1, 1, 1, 1, 1}, 1.0);
    const auto gx = maxpool2_backward<double>(x.shape, p.argmax, g);
    CHECK(gx.values[0] == 1.0);
    for (int i = 1; i < 8; ++i) CHECK(gx.values[i] == 0.0);
  }

  TEST_CASE("up-convolution") {
    Tensor5<double> x({1, 1, 1, 1, 1}, 2.5);
    Tensor5<double> w({1, 1, 2, 2, 2}, 1.0);
    const auto y = upconv2_forward<double>(x, w, zeros<double>(1));
    CHECK(y.shape == Shape5{1, 1, 2, 2, 2});
    for (double v : y.values) CHECK(v == 2.5);

    const auto xr = oracle::random_tensor<double>({2, 3, 3, 2, 4}, 5);
    const auto wr = oracle::random_tensor<double>({3, 2, 2, 2, 2}, 6);
    const std::vector<double> b{0.5, -0.5};
    const auto yr = upconv2_forward<double>(xr, wr, view(b));
    CHECK(yr.shape == Shape5{2, 2, 6, 4, 8});
    CHECK(max_abs_diff(yr, oracle::upconv2(xr, wr, b)) < 1e-12);
  }

  TEST_CASE("pooling undoes replication by an all-ones up-convolution") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto x = oracle::random_tensor<double>({1, 1, 2, 3, 2}, 10 + s);
      Tensor5<double> w({1, 1, 2, 2, 2}, 1.0);
      CHECK(maxpool2_forward<double>(upconv2_forward<double>(x, w, zeros<double>(1))).output.values == x.values);
    }
  }

  TEST_CASE("batch norm statistics") {
    const auto x = oracle::random_tensor<double>({2, 3, 4, 5, 6}, 7, -3.0, 5.0);
    std::vector<double> gamma(3, 1.0), beta(3, 0.0), rm(3, 0.0), rv(3, 1.0);
    BatchNormCache<double> cache;
    const auto y = batchnorm_forward<double>(x, view(gamma), view(beta), rm, rv, NormMode::Train, {}, &cache);
    const std::size_t per = 2 * 4 * 5 * 6;
    for (int c = 0; c < 3; ++c) {
      double m = 0, v = 0, xm = 0, xv = 0;
      for (int n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < y.spatial(); ++i) {
          const std::size_t off = (static_cast<std::size_t>(n) * 3 + c) * y.spatial() + i;
          m += y.values[off];
          xm += x.values[off];
        }
      m /= per;
      xm /= per;
      for (int n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < y.spatial(); ++i) {
          const std::size_t off = (static_cast<std::size_t>(n) * 3 + c) * y.spatial() + i;
          v += (y.values[off] - m) * (y.values[off] - m);
          xv += (x.values[off] - xm) * (x.values[off] - xm);
        }
      v /= per;
      CHECK(std::abs(m) < 1e-6);
      CHECK(std::abs(v - 1.0) < 1e-3);
      CHECK(rm[c] == doctest::Approx(0.1 * xm).epsilon(1e-9));
      CHECK(rv[c] == doctest::Approx(0.9 + 0.1 * xv / (per - 1)).epsilon(1e-9));
    }

    const Tensor5<double> flat({1, 2, 3, 3, 3}, 4.0);
    std::vector<double> g2(2, 1.0), b2(2, 0.0), m2(2, 0.0), v2(2, 1.0);
    const auto z = batchnorm_forward<double>(flat, view(g2), view(b2), m2, v2, NormMode::Train, {}, nullptr);
    for (double val : z.values) CHECK(std::abs(val) < 1e-3);
  }

  TEST_CASE("batch norm eval uses running estimates and leaves them alone") {
    const auto x = oracle::random_tensor<double>({1, 2, 2, 2, 2}, 8);
    std::vector<double> gamma{2.0, 1.0}, beta{0.5, 0.0}, rm{1.0, -1.0}, rv{4.0, 0.25};
    const auto y = batchnorm_forward<double>(x, view(gamma), view(beta), rm, rv, NormMode::Eval, {}, nullptr);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(y.values[i] == doctest::Approx(2.0 * (x.values[i] - 1.0) / std::sqrt(4.0 + 1e-5) + 0.5));
      CHECK(y.values[8 + i] == doctest::Approx((x.values[8 + i] + 1.0) / std::sqrt(0.25 + 1e-5)));
    }
    CHECK(rm == std::vector<double>{1.0, -1.0});
    CHECK(rv == std::vector<double>{4.0, 0.25});
  }

  TEST_CASE("concatenation with centre crop") {
    const auto skip = oracle::random_tensor<double>({1, 2, 6, 6, 6}, 9);
    const auto up = oracle::random_tensor<double>({1, 3, 4, 4, 4}, 10);
    const auto y = concat_crop_forward<double>(skip, up);
    CHECK(y.shape == Shape5{1, 5, 4, 4, 4});
    CHECK(y.at(0, 0, 0, 0, 0) == skip.at(0, 0, 1, 1, 1));
    CHECK(y.at(0, 1, 3, 2, 1) == skip.at(0, 1, 4, 3, 2));
    CHECK(y.at(0, 2, 3, 2, 1) == up.at(0, 0, 3, 2, 1));

    const auto same = oracle::random_tensor<double>({1, 1, 4, 4, 4}, 11);
    const auto cat = concat_crop_forward<double>(same, up);
    for (std::size_t i = 0; i < same.size(); ++i) CHECK(cat.values[i] == same.values[i]);
    CHECK_THROWS_AS(concat_crop_forward<double>(Tensor5<double>({1, 1, 5, 6, 6}), up), ShapeError);
  }

  TEST_CASE("forward passes are deterministic") {
    const auto x = oracle::random_tensor<float>({1, 2, 8, 8, 8}, 12);
    const auto w = oracle::random_tensor<float>({3, 2, 3, 3, 3}, 13);
    CHECK(conv3d_forward<float>(x, w, zeros<float>(3)).values == conv3d_forward<float>(x, w, zeros<float>(3)).values);
  }

  TEST_CASE("every layer passes the finite-difference check on 20 seeds") {
    for (LayerKind k : all_layer_kinds()) {
      double worst = 0;
      for (std::uint64_t s = 0; s < 20; ++s) worst = std::max(worst, gradcheck(make_layer_case(k, s), s).max_rel_error);
      INFO(layer_name(k));
      CHECK(worst < 1e-5);
    }
  }

  TEST_CASE("gradient check is exact for a linear layer") {
    for (std::uint64_t s = 0; s < 5; ++s) CHECK(gradcheck(make_layer_case(LayerKind::Pointwise, s), s).max_rel_error < 1e-8);
  }

  TEST_CASE("gradient check catches a corrupted backward pass") {
    for (LayerKind k : all_layer_kinds()) {
      INFO(layer_name(k));
      CHECK(gradcheck(make_layer_case(k, 3, true), 3).max_rel_error > 1e-2);
    }
  }

  TEST_CASE("float and double paths agree") {
    const auto xd = oracle::random_tensor<double>({1, 2, 6, 6, 6}, 14);
    const auto wd = oracle::random_tensor<double>({2, 2, 3, 3, 3}, 15);
    const auto yf = conv3d_forward<float>(tensor_cast<float>(xd), tensor_cast<float>(wd), zeros<float>(2));
    const auto yd = conv3d_forward<double>(xd, wd, zeros<double>(2));
    for (std::size_t i = 0; i < yd.size(); ++i) CHECK(yf.values[i] == doctest::Approx(yd.values[i]).epsilon(1e-5));
  }
}
