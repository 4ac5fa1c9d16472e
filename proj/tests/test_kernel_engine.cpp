#include <cmath>

#include "doctest.h"
#include "fnf/graph.h"
#include "fnf/kernel_engine.h"
#include "test_util.h"

using namespace fnf;

namespace {

template <typename T>
KernelBasisT<T> random_basis(Rng& rng, int j, int k, int d, bool use_b = true) {
  KernelBasisT<T> basis;
  basis.a = test::random_tensor<T>(rng, {j, k, k, 3}, -0.5, 0.5);
  basis.b = test::random_tensor<T>(rng, {j, k, k, 3}, -0.5, 0.5);
  basis.upsample = d;
  basis.use_b = use_b;
  return basis;
}

template <typename T>
Tensor<T> delta_kernel_stack(int j, int k) {
  Tensor<T> a({j, k, k, 3});
  for (int jj = 0; jj < j; ++jj)
    for (int c = 0; c < 3; ++c) a.at(jj, k / 2, k / 2, c) = T(1);
  return a;
}

}  // namespace

TEST_CASE("upsample_kernel: identity at d=1, tent from a delta, 57x57 footprint") {
  Rng rng(30);
  Tensor<float> b = test::random_tensor<float>(rng, {5, 5, 3}, -1, 1);
  CHECK(upsample_kernel(b, 1) == b);

  Tensor<float> delta({3, 3, 3});
  for (int c = 0; c < 3; ++c) delta.at(1, 1, c) = 1.0f;
  Tensor<float> up = upsample_kernel(delta, 4);
  REQUIRE(up.shape() == std::vector<int>({9, 9, 3}));
  for (int u = 0; u < 9; ++u)
    for (int v = 0; v < 9; ++v) {
      // center tap sits at (4,4); bilinear of a delta is the separable tent
      float expected = std::max(0.0f, 1.0f - std::abs(u - 4) / 4.0f) *
                       std::max(0.0f, 1.0f - std::abs(v - 4) / 4.0f);
      CHECK(up.at(u, v, 0) == doctest::Approx(expected).epsilon(1e-6));
    }

  Tensor<float> big = test::random_tensor<float>(rng, {15, 15, 3}, -1, 1);
  CHECK(upsample_kernel(big, 4).shape() == std::vector<int>({57, 57, 3}));
}

TEST_CASE("upsample preserves original taps (align-corners)") {
  Rng rng(31);
  Tensor<float> b = test::random_tensor<float>(rng, {5, 5, 3}, -1, 1);
  Tensor<float> up = upsample_kernel(b, 3);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x)
      for (int c = 0; c < 3; ++c) CHECK(up.at(3 * y, 3 * x, c) == b.at(y, x, c));
}

TEST_CASE("effective_kernel composition") {
  Rng rng(32);
  auto basis = random_basis<float>(rng, 2, 5, 2);

  SUBCASE("zero A leaves the upsampled B") {
    basis.a.fill(0.0f);
    Tensor<float> bj({5, 5, 3});
    std::memcpy(bj.data(), basis.b.data(), sizeof(float) * bj.size());
    CHECK(effective_kernel(basis, 0) == upsample_kernel(bj, 2));
  }
  SUBCASE("zero B leaves centered zero-padded A") {
    basis.b.fill(0.0f);
    Tensor<float> eff = effective_kernel(basis, 1);
    REQUIRE(eff.shape() == std::vector<int>({9, 9, 3}));
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 9; ++x)
        for (int c = 0; c < 3; ++c) {
          float expected = (y >= 2 && y < 7 && x >= 2 && x < 7) ? basis.a.at(1, y - 2, x - 2, c)
                                                                : 0.0f;
          CHECK(eff.at(y, x, c) == expected);
        }
  }
  SUBCASE("center tap is the sum of both center taps") {
    Tensor<float> eff = effective_kernel(basis, 0);
    for (int c = 0; c < 3; ++c)
      CHECK(eff.at(4, 4, c) == doctest::Approx(basis.a.at(0, 2, 2, c) + basis.b.at(0, 2, 2, c)));
  }
}

TEST_CASE("filter_direct basics") {
  Rng rng(33);
  Image x = test::random_image(rng, 24, 24);

  KernelBasisT<float> basis;
  basis.a = delta_kernel_stack<float>(1, 3);
  basis.b = Tensor<float>({1, 3, 3, 3});
  basis.upsample = 2;
  Tensor<float> ones({24, 24, 1});
  ones.fill(1.0f);

  SUBCASE("identity kernel reproduces the input") {
    Image out = filter_direct(x, basis, ones);
    CHECK(test::max_abs_diff(out, x) == 0.0);
  }
  SUBCASE("zero coefficients give zero output") {
    Tensor<float> zeros({24, 24, 1});
    Image out = filter_direct(x, basis, zeros);
    CHECK(test::max_abs(out) == 0.0);
  }
  SUBCASE("linearity over basis elements") {
    KernelBasisT<float> two;
    two.a = delta_kernel_stack<float>(2, 3);
    for (int c = 0; c < 3; ++c) two.a.at(1, 1, 1, c) = 2.0f;  // second element: 2x delta
    two.b = Tensor<float>({2, 3, 3, 3});
    two.upsample = 1;
    Tensor<float> coeffs({24, 24, 2});
    for (int64_t i = 0; i < 24 * 24; ++i) {
      coeffs.data()[i * 2] = 0.3f;
      coeffs.data()[i * 2 + 1] = 0.25f;
    }
    Image out = filter_direct(x, two, coeffs);
    // alpha + 2 beta = 0.8
    for (int64_t i = 0; i < x.size(); ++i)
      CHECK(out.data()[i] == doctest::Approx(0.8f * x.data()[i]).epsilon(1e-5));
  }
}

TEST_CASE("fast path degenerate cases share the dense code path") {
  Rng rng(34);
  Image x = test::random_image(rng, 20, 20);
  Tensor<float> coeffs = test::random_tensor<float>(rng, {20, 20, 3}, -1, 1);

  SUBCASE("d = 1") {
    auto basis = random_basis<float>(rng, 3, 3, 1);
    CHECK(filter_fast(x, basis, coeffs) == filter_direct(x, basis, coeffs));
  }
  SUBCASE("zero B") {
    auto basis = random_basis<float>(rng, 3, 3, 2);
    basis.b.fill(0.0f);
    CHECK(filter_fast(x, basis, coeffs) == filter_direct(x, basis, coeffs));
  }
  SUBCASE("use_b off") {
    auto basis = random_basis<float>(rng, 3, 3, 2, /*use_b=*/false);
    CHECK(filter_fast(x, basis, coeffs) == filter_direct(x, basis, coeffs));
  }
}

TEST_CASE("fast path equals the dense reference, boundaries included") {
  SUBCASE("single precision") {
    Rng rng(35);
    Image x = test::random_image(rng, 64, 64);
    auto basis = random_basis<float>(rng, 4, 5, 2);
    Tensor<float> coeffs = test::random_tensor<float>(rng, {64, 64, 4}, -1, 1);
    double err = test::max_rel_diff(filter_fast(x, basis, coeffs),
                                    filter_direct(x, basis, coeffs));
    CHECK(err <= 1e-4);
  }
  SUBCASE("double precision") {
    Rng rng(36);
    Tensor<double> x = test::random_tensor<double>(rng, {64, 64, 3}, 0, 1);
    auto basis = random_basis<double>(rng, 4, 5, 2);
    Tensor<double> coeffs = test::random_tensor<double>(rng, {64, 64, 4}, -1, 1);
    double err = test::max_rel_diff(filter_fast(x, basis, coeffs),
                                    filter_direct(x, basis, coeffs));
    CHECK(err <= 1e-10);
  }
  SUBCASE("several random geometries") {
    for (int trial = 0; trial < 6; ++trial) {
      Rng rng(mix64(37, trial));
      const int j = trial % 2 ? 4 : 8;
      const int k = trial % 2 ? 5 : 3;
      const int d = 1 + trial % 3;
      Image x = test::random_image(rng, 40, 40);
      auto basis = random_basis<float>(rng, j, k, d);
      Tensor<float> coeffs = test::random_tensor<float>(rng, {40, 40, j}, -1, 1);
      CHECK(test::max_rel_diff(filter_fast(x, basis, coeffs),
                               filter_direct(x, basis, coeffs)) <= 1e-4);
    }
  }
}

TEST_CASE("filtering is linear in the image") {
  Rng rng(38);
  Image x = test::random_image(rng, 32, 32);
  Image y = test::random_image(rng, 32, 32);
  auto basis = random_basis<float>(rng, 4, 5, 2);
  Tensor<float> coeffs = test::random_tensor<float>(rng, {32, 32, 4}, -1, 1);

  const float alpha = 0.7f, beta = -1.3f;
  Image mix({32, 32, 3});
  for (int64_t i = 0; i < mix.size(); ++i)
    mix.data()[i] = alpha * x.data()[i] + beta * y.data()[i];

  Image lhs = filter_fast(mix, basis, coeffs);
  Image fx = filter_fast(x, basis, coeffs);
  Image fy = filter_fast(y, basis, coeffs);
  Image rhs({32, 32, 3});
  for (int64_t i = 0; i < rhs.size(); ++i)
    rhs.data()[i] = alpha * fx.data()[i] + beta * fy.data()[i];
  CHECK(test::max_rel_diff(lhs, rhs) <= 1e-6);
}

TEST_CASE("impulse response stays inside the effective footprint") {
  Rng rng(39);
  const int k = 5, d = 4;  // footprint 17
  const int e = (k - 1) * d + 1;
  auto basis = random_basis<float>(rng, 1, k, d);
  Image impulse({64, 64, 3});
  for (int c = 0; c < 3; ++c) impulse.at(32, 32, c) = 1.0f;
  Tensor<float> ones({64, 64, 1});
  ones.fill(1.0f);
  Image out = filter_fast(impulse, basis, ones);
  const int half = e / 2;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      if (std::abs(y - 32) <= half && std::abs(x - 32) <= half) continue;
      for (int c = 0; c < 3; ++c) CHECK(out.at(y, x, c) == 0.0f);
    }
}

TEST_CASE("apply_scale_map") {
  Rng rng(40);
  Image f = test::random_image(rng, 16, 16);
  Image ones({16, 16, 3});
  ones.fill(1.0f);
  CHECK(apply_scale_map(f, ones) == f);

  Image zeros({16, 16, 3});
  CHECK(test::max_abs(apply_scale_map(f, zeros)) == 0.0);

  Image g({16, 16, 3});
  Image constant({16, 16, 3});
  constant.fill(0.2f);
  for (int64_t i = 0; i < g.size() / 3; ++i) {
    g.data()[i * 3] = 1.0f;
    g.data()[i * 3 + 1] = 2.0f;
    g.data()[i * 3 + 2] = 3.0f;
  }
  Image out = apply_scale_map(constant, g);
  CHECK(out.at(0, 0, 0) == doctest::Approx(0.2f));
  CHECK(out.at(0, 0, 1) == doctest::Approx(0.4f));
  CHECK(out.at(0, 0, 2) == doctest::Approx(0.6f));

  SUBCASE("commutes with channel permutation") {
    auto permute = [](const Image& img) {
      Image out = img;
      for (int64_t i = 0; i < img.size() / 3; ++i) {
        out.data()[i * 3] = img.data()[i * 3 + 1];
        out.data()[i * 3 + 1] = img.data()[i * 3 + 2];
        out.data()[i * 3 + 2] = img.data()[i * 3];
      }
      return out;
    };
    Image g2 = test::random_image(rng, 16, 16, -1.0f, 2.0f);
    CHECK(permute(apply_scale_map(f, g2)) == apply_scale_map(permute(f), permute(g2)));
  }
}

TEST_CASE("analytic gradients through filtering match finite differences") {
  // 16x16 image, J=2, K=3, d=2, double precision, full loss on top
  Rng rng(41);
  Tensor<double> x = test::random_tensor<double>(rng, {16, 16, 3}, 0, 1);
  Tensor<double> target = test::random_tensor<double>(rng, {16, 16, 3}, 0, 1);
  Tensor<double> a0 = test::random_tensor<double>(rng, {2, 3, 3, 3}, -0.3, 0.3);
  Tensor<double> b0 = test::random_tensor<double>(rng, {2, 3, 3, 3}, -0.3, 0.3);
  Tensor<double> c0 = test::random_tensor<double>(rng, {16, 16, 2}, -0.5, 0.5);
  Tensor<double> g0 = test::random_tensor<double>(rng, {16, 16, 3}, 0.4, 1.2);
  RenderParams rp;
  rp.gain = 1.0f;

  auto eval_loss = [&](const Tensor<double>& a, const Tensor<double>& b,
                       const Tensor<double>& c, const Tensor<double>& g) {
    Graph<double> graph;
    auto av = graph.param(a);
    auto bv = graph.param(b);
    auto cv = graph.param(c);
    auto gv = graph.param(g);
    auto filtered = graph.basis_filter(x, av, bv, 2, true, cv);
    auto out = graph.mul(filtered, gv);
    auto loss = graph.render_loss(out, target, rp, 1.0);
    return graph.val(loss).at(0);
  };

  Graph<double> graph;
  auto av = graph.param(a0);
  auto bv = graph.param(b0);
  auto cv = graph.param(c0);
  auto gv = graph.param(g0);
  auto filtered = graph.basis_filter(x, av, bv, 2, true, cv);
  auto out = graph.mul(filtered, gv);
  auto loss = graph.render_loss(out, target, rp, 1.0);
  graph.backward(loss);

  const double h = 1e-6;
  auto check_subset = [&](Tensor<double>& tensor, const Tensor<double>& grad, int stride) {
    for (int64_t i = 0; i < tensor.size(); i += stride) {
      const double orig = tensor.data()[i];
      tensor.data()[i] = orig + h;
      double up = eval_loss(a0, b0, c0, g0);
      tensor.data()[i] = orig - h;
      double down = eval_loss(a0, b0, c0, g0);
      tensor.data()[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grad.data()[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      CHECK(std::abs(numeric - analytic) / denom <= 1e-3);
    }
  };
  check_subset(a0, graph.grad(av), 13);
  check_subset(b0, graph.grad(bv), 13);
  check_subset(c0, graph.grad(cv), 47);
  check_subset(g0, graph.grad(gv), 71);
}
