#include <cmath>
#include <functional>

#include "doctest.h"
#include "fnf/graph.h"
#include "fnf/loss.h"
#include "test_util.h"

using namespace fnf;

namespace {

// central-difference check of d(loss)/d(leaf) for a scalar-valued builder
using Builder = std::function<Value<double>(Graph<double>&, const std::vector<Tensor<double>>&)>;

void check_gradients(std::vector<Tensor<double>> leaves, const Builder& build,
                     double tol = 1e-6, int stride = 1) {
  Graph<double> graph;
  Value<double> loss = build(graph, leaves);
  graph.backward(loss);

  // leaf params are the first nodes, in order
  std::vector<Tensor<double>> analytic;
  for (size_t i = 0; i < leaves.size(); ++i)
    analytic.push_back(graph.grad(Value<double>{static_cast<int>(i)}));

  const double h = 1e-6;
  for (size_t li = 0; li < leaves.size(); ++li) {
    for (int64_t i = 0; i < leaves[li].size(); i += stride) {
      const double orig = leaves[li].data()[i];
      leaves[li].data()[i] = orig + h;
      Graph<double> gp;
      double up = gp.val(build(gp, leaves)).at(0);
      leaves[li].data()[i] = orig - h;
      Graph<double> gm;
      double down = gm.val(build(gm, leaves)).at(0);
      leaves[li].data()[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[li].data()[i];
      const double denom = std::max({std::abs(numeric), std::abs(a), 1e-4});
      INFO("leaf ", li, " index ", i, " numeric ", numeric, " analytic ", a);
      CHECK(std::abs(numeric - a) / denom <= tol);
    }
  }
}

// sum of squares of all elements, as a differentiable scalar
Value<double> sq_sum(Graph<double>& g, Value<double> x) {
  auto y = g.mul(x, x);
  auto pooled = g.global_avg_pool(y);
  // reduce channels with a 1x1 conv of ones
  const int c = g.val(pooled).dim(2);
  Tensor<double> w({1, 1, c, 1});
  w.fill(1.0);
  Tensor<double> b({1});
  auto wv = g.input(w);
  auto bv = g.input(b);
  return g.conv2d(pooled, wv, bv);
}

Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w,
                          const Tensor<double>& bias, bool same, int dil) {
  const int h = x.dim(0), wd = x.dim(1), ci = x.dim(2);
  const int kh = w.dim(0), kw = w.dim(1), co = w.dim(3);
  const int pad_y = same ? ((kh - 1) * dil) / 2 : 0;
  const int pad_x = same ? ((kw - 1) * dil) / 2 : 0;
  const int oh = same ? h : h - kh + 1;
  const int ow = same ? wd : wd - kw + 1;
  Tensor<double> out({oh, ow, co});
  for (int y = 0; y < oh; ++y)
    for (int x2 = 0; x2 < ow; ++x2)
      for (int o = 0; o < co; ++o) {
        double acc = bias.at(o);
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            const int sy = y + ky * dil - pad_y;
            const int sx = x2 + kx * dil - pad_x;
            if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
            for (int i = 0; i < ci; ++i) acc += x.at(sy, sx, i) * w.at(ky, kx, i, o);
          }
        out.at(y, x2, o) = acc;
      }
  return out;
}

}  // namespace

TEST_CASE("conv2d forward matches a naive reference") {
  Rng rng(50);
  Tensor<double> x = test::random_tensor<double>(rng, {9, 11, 4}, -1, 1);
  Tensor<double> w = test::random_tensor<double>(rng, {3, 3, 4, 5}, -1, 1);
  Tensor<double> b = test::random_tensor<double>(rng, {5}, -1, 1);

  SUBCASE("same padding") {
    Graph<double> g;
    auto out = g.conv2d(g.input(x), g.input(w), g.input(b), true);
    CHECK(test::max_abs_diff(g.val(out), naive_conv(x, w, b, true, 1)) < 1e-12);
  }
  SUBCASE("valid 2x2") {
    Tensor<double> w2 = test::random_tensor<double>(rng, {2, 2, 4, 3}, -1, 1);
    Tensor<double> b2 = test::random_tensor<double>(rng, {3}, -1, 1);
    Graph<double> g;
    auto out = g.conv2d(g.input(x), g.input(w2), g.input(b2), false);
    CHECK(g.val(out).dim(0) == 8);
    CHECK(g.val(out).dim(1) == 10);
    CHECK(test::max_abs_diff(g.val(out), naive_conv(x, w2, b2, false, 1)) < 1e-12);
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(51);
  std::vector<Tensor<double>> leaves = {
      test::random_tensor<double>(rng, {6, 7, 2}, -1, 1),     // x
      test::random_tensor<double>(rng, {3, 3, 2, 3}, -1, 1),  // w
      test::random_tensor<double>(rng, {3}, -1, 1),           // b
  };
  check_gradients(leaves, [](Graph<double>& g, const std::vector<Tensor<double>>& l) {
    auto x = g.param(l[0]);
    auto w = g.param(l[1]);
    auto b = g.param(l[2]);
    return sq_sum(g, g.conv2d(x, w, b, true));
  });
}

TEST_CASE("valid conv gradients match finite differences") {
  Rng rng(52);
  std::vector<Tensor<double>> leaves = {
      test::random_tensor<double>(rng, {5, 5, 2}, -1, 1),
      test::random_tensor<double>(rng, {2, 2, 2, 2}, -1, 1),
      test::random_tensor<double>(rng, {2}, -1, 1),
  };
  check_gradients(leaves, [](Graph<double>& g, const std::vector<Tensor<double>>& l) {
    return sq_sum(g, g.conv2d(g.param(l[0]), g.param(l[1]), g.param(l[2]), false));
  });
}

TEST_CASE("pool, upsample, pooling-broadcast and relu gradients") {
  Rng rng(53);
  std::vector<Tensor<double>> leaves = {test::random_tensor<double>(rng, {8, 8, 3}, -1, 1)};
  check_gradients(leaves, [](Graph<double>& g, const std::vector<Tensor<double>>& l) {
    auto x = g.param(l[0]);
    auto a = g.relu(g.maxpool2(x));          // 4x4
    auto b = g.upsample2(a);                 // 8x8
    auto pooled = g.global_avg_pool(b);      // 1x1
    auto wide = g.replicate_spatial(pooled, 8, 8);
    return sq_sum(g, g.mul(b, wide));
  });
}

TEST_CASE("concat and slice gradients") {
  Rng rng(54);
  std::vector<Tensor<double>> leaves = {
      test::random_tensor<double>(rng, {4, 4, 2}, -1, 1),
      test::random_tensor<double>(rng, {4, 4, 3}, -1, 1),
  };
  check_gradients(leaves, [](Graph<double>& g, const std::vector<Tensor<double>>& l) {
    auto cat = g.concat(g.param(l[0]), g.param(l[1]));
    auto left = g.slice_channels(cat, 0, 2);
    auto right = g.slice_channels(cat, 2, 5);
    return g.add(sq_sum(g, left), sq_sum(g, right));
  });
}

TEST_CASE("upsample2 interpolates with half-pixel centers") {
  Tensor<float> x({1, 2, 1});
  x.at(0, 0, 0) = 0.0f;
  x.at(0, 1, 0) = 1.0f;
  Graph<float> g;
  auto out = g.upsample2(g.input(x));
  const Tensor<float>& v = g.val(out);
  REQUIRE(v.shape() == std::vector<int>({2, 4, 1}));
  CHECK(v.at(0, 0, 0) == doctest::Approx(0.0f));
  CHECK(v.at(0, 1, 0) == doctest::Approx(0.25f));
  CHECK(v.at(0, 2, 0) == doctest::Approx(0.75f));
  CHECK(v.at(0, 3, 0) == doctest::Approx(1.0f));
}

TEST_CASE("local_filter with a delta kernel is the identity") {
  Rng rng(55);
  Tensor<float> x = test::random_image(rng, 10, 10);
  Tensor<float> kernels({10, 10, 75});
  const int center = (2 * 5 + 2) * 3;  // tap (2,2) of a 5x5 kernel
  for (int64_t i = 0; i < 100; ++i)
    for (int c = 0; c < 3; ++c) kernels.data()[i * 75 + center + c] = 1.0f;
  Graph<float> g;
  auto out = g.local_filter(x, g.input(kernels), 5);
  CHECK(g.val(out) == x);
}

TEST_CASE("local_filter kernel gradients match finite differences") {
  Rng rng(56);
  Tensor<double> x = test::random_tensor<double>(rng, {6, 6, 3}, 0, 1);
  std::vector<Tensor<double>> leaves = {test::random_tensor<double>(rng, {6, 6, 27}, -1, 1)};
  check_gradients(
      leaves,
      [&x](Graph<double>& g, const std::vector<Tensor<double>>& l) {
        return sq_sum(g, g.local_filter(x, g.param(l[0]), 3));
      },
      1e-6, 7);
}

TEST_CASE("render_loss value and gradient") {
  Rng rng(57);
  Tensor<double> target = test::random_tensor<double>(rng, {6, 6, 3}, 0.1, 0.8);
  RenderParams rp;
  rp.gain = 2.0f;
  rp.color_matrix = {0.8f, 0.1f, 0.1f, 0.05f, 0.9f, 0.05f, 0.1f, 0.1f, 0.8f};

  SUBCASE("zero for identical inputs") {
    Graph<double> g;
    auto pred = g.param(target);
    auto loss = g.render_loss(pred, target, rp, 1.0);
    CHECK(g.val(loss).at(0) == doctest::Approx(0.0));
  }
  SUBCASE("constant offset under identity rendering is pure MSE") {
    RenderParams ident = RenderParams::linear_identity();
    Tensor<double> pred = target;
    for (int64_t i = 0; i < pred.size(); ++i) pred.data()[i] += 0.05;
    Graph<double> g;
    auto loss = g.render_loss(g.param(pred), target, ident, 1.0);
    CHECK(g.val(loss).at(0) == doctest::Approx(0.05 * 0.05).epsilon(1e-9));
  }
  SUBCASE("gradient matches finite differences") {
    std::vector<Tensor<double>> leaves = {
        test::random_tensor<double>(rng, {6, 6, 3}, 0.05, 0.45)};
    check_gradients(
        leaves,
        [&](Graph<double>& g, const std::vector<Tensor<double>>& l) {
          return g.render_loss(g.param(l[0]), target, rp, 0.7);
        },
        1e-5, 3);
  }
}

TEST_CASE("pair_loss eta=0 equals an independent MSE in rendered space") {
  Rng rng(58);
  Image pred = test::random_image(rng, 16, 16);
  Image target = test::random_image(rng, 16, 16);
  RenderParams rp;
  rp.gain = 1.5f;
  float loss = pair_loss<float>(pred, target, rp, 0.0f);

  Image rp_img = render_srgb(pred, rp);
  Image rt_img = render_srgb(target, rp);
  double mse = 0.0;
  for (int64_t i = 0; i < rp_img.size(); ++i) {
    double d = static_cast<double>(rp_img.data()[i]) - rt_img.data()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(rp_img.size());
  CHECK(loss == doctest::Approx(mse).epsilon(1e-5));
}

TEST_CASE("loss is invariant to a shared channel permutation") {
  Rng rng(59);
  Image pred = test::random_image(rng, 12, 12);
  Image target = test::random_image(rng, 12, 12);
  RenderParams rp;
  rp.gain = 1.2f;
  rp.color_matrix = {0.9f, 0.05f, 0.05f, 0.1f, 0.85f, 0.05f, 0.02f, 0.08f, 0.9f};
  float base = pair_loss<float>(pred, target, rp, 1.0f);

  auto permute_img = [](const Image& img) {
    Image out = img;
    for (int64_t i = 0; i < img.size() / 3; ++i) {
      out.data()[i * 3] = img.data()[i * 3 + 2];
      out.data()[i * 3 + 1] = img.data()[i * 3];
      out.data()[i * 3 + 2] = img.data()[i * 3 + 1];
    }
    return out;
  };
  // permute channels of the inputs and the columns of C to match, and the
  // rows so the rendered output is permuted identically
  RenderParams prp = rp;
  auto& m = prp.color_matrix;
  std::array<float, 9> src = rp.color_matrix;
  // row r -> row perm(r), column c -> column perm(c) with perm = (2,0,1)
  const int perm[3] = {2, 0, 1};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m[r * 3 + c] = src[perm[r] * 3 + perm[c]];
  float permuted = pair_loss<float>(permute_img(pred), permute_img(target), prp, 1.0f);
  CHECK(permuted == doctest::Approx(base).epsilon(1e-6));
}

TEST_CASE("backward rejects non-scalar targets and inputs without parameters") {
  Rng rng(60);
  Graph<float> g;
  auto x = g.input(test::random_image(rng, 4, 4));
  CHECK_THROWS_AS(g.backward(x), std::invalid_argument);
}
