#include <cmath>

#include "doctest.h"
#include "fnf/image.h"
#include "fnf/simulation.h"
#include "test_util.h"

using namespace fnf;

namespace {

Image ramp_image(int h, int w) {
  Image img({h, w, 3});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<float>(x + y * 0.5 + c * 0.1) / (h + w);
  return img;
}

Homography translation(double tx, double ty) {
  Homography h;
  h.m = {1, 0, tx, 0, 1, ty, 0, 0, 1};
  h.translation_px = {tx, ty};
  return h;
}

// smooth image so resampling error stays small under composed warps
Image bandlimited_image(int h, int w) {
  Image img({h, w, 3});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = 0.5f + 0.4f * std::sin(0.11f * x + 0.07f * y + c);
  return img;
}

}  // namespace

TEST_CASE("warp with identity homography is bit-exact") {
  Rng rng(1);
  Image img = test::random_image(rng, 16, 24);
  Image out = warp_image(img, Homography::identity());
  CHECK(out == img);
}

TEST_CASE("warping a constant image preserves the constant") {
  Image img({20, 20, 3});
  img.fill(0.37f);
  Rng rng(2);
  Homography h = sample_homography(rng, 20, 20, ShakeRanges{2.0, 0.9, 1.1, 5.0});
  Image out = warp_image(img, h);
  for (int64_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == doctest::Approx(0.37f).epsilon(1e-6));
}

TEST_CASE("integer translation shifts columns exactly") {
  Image img = ramp_image(8, 8);
  Image out = warp_image(img, translation(1.0, 0.0));
  // output column x samples input column x-1; interior columns bit-exact
  for (int y = 0; y < 8; ++y)
    for (int x = 1; x < 8; ++x)
      for (int c = 0; c < 3; ++c) CHECK(out.at(y, x, c) == img.at(y, x - 1, c));
}

TEST_CASE("degenerate homography is rejected") {
  Homography h;
  h.m = {1, 0, 0, 2, 0, 0, 0, 0, 1};  // rank 2
  h.m[4] = 0;
  h.m[0] = 0;
  h.m[1] = 0;
  CHECK_THROWS_WITH_AS(warp_image(Image({8, 8, 3}), h), doctest::Contains("degenerate"),
                       std::invalid_argument);
}

TEST_CASE("warp composition consistency on smooth images") {
  Image img = bandlimited_image(64, 64);
  Rng rng(3);
  Homography h = sample_homography(rng, 64, 64, ShakeRanges{});
  Homography g = sample_homography(rng, 64, 64, ShakeRanges{});
  Image two_step = warp_image(warp_image(img, h), g);
  Image one_step = warp_image(img, compose(g, h));
  double worst = 0.0;
  for (int y = 8; y < 56; ++y)
    for (int x = 8; x < 56; ++x)
      for (int c = 0; c < 3; ++c)
        worst = std::max(worst, std::abs(static_cast<double>(two_step.at(y, x, c)) -
                                         one_step.at(y, x, c)));
  CHECK(worst <= 0.01);
}

TEST_CASE("mean displacement basics") {
  CHECK(mean_displacement(Homography::identity(), 64, 48) == 0.0);
  CHECK(mean_displacement(translation(2.0, 0.0), 33, 77) == doctest::Approx(2.0));
  CHECK(mean_displacement(translation(0.0, 2.0), 440, 440) == doctest::Approx(2.0));
}

TEST_CASE("sampled homographies stay within the stated displacement budget") {
  for (int i = 0; i < 300; ++i) {
    Rng rng(mix64(99, i));
    Homography h = sample_homography(rng, 440, 440, ShakeRanges{});
    double d = mean_displacement(h, 440, 440);
    CHECK(d >= 0.0);
    CHECK(d <= 20.0);
  }
}

TEST_CASE("render_srgb endpoint and midpoint values") {
  RenderParams rp;
  Image zeros({4, 4, 3});
  Image rendered = render_srgb(zeros, rp);
  for (int64_t i = 0; i < rendered.size(); ++i) CHECK(rendered.data()[i] == 0.0f);

  Image ones({4, 4, 3});
  ones.fill(1.0f);
  rendered = render_srgb(ones, rp);
  for (int64_t i = 0; i < rendered.size(); ++i)
    CHECK(rendered.data()[i] == doctest::Approx(1.0f).epsilon(1e-6));

  Image half({4, 4, 3});
  half.fill(0.5f);
  rendered = render_srgb(half, rp);
  CHECK(rendered.at(0, 0, 0) == doctest::Approx(0.735357).epsilon(1e-4));
}

TEST_CASE("render_srgb with linear gamma and unit params is the clipped identity") {
  Rng rng(4);
  Image img = test::random_image(rng, 8, 8, -0.5f, 1.5f);
  Image rendered = render_srgb(img, RenderParams::linear_identity());
  for (int64_t i = 0; i < img.size(); ++i)
    CHECK(rendered.data()[i] == std::clamp(img.data()[i], 0.0f, 1.0f));
}

TEST_CASE("render_srgb is monotone in gain") {
  Rng rng(5);
  Image img = test::random_image(rng, 8, 8);
  RenderParams lo_rp, hi_rp;
  lo_rp.gain = 0.7f;
  hi_rp.gain = 1.9f;
  Image lo = render_srgb(img, lo_rp);
  Image hi = render_srgb(img, hi_rp);
  for (int64_t i = 0; i < img.size(); ++i) CHECK(hi.data()[i] >= lo.data()[i]);
}

TEST_CASE("psnr examples and MSE oracle") {
  Rng rng(6);
  Image a = test::random_image(rng, 16, 16, 0.0f, 0.85f);
  CHECK(std::isinf(psnr(a, a)));

  Image b = a;
  for (int64_t i = 0; i < b.size(); ++i) b.data()[i] += 0.1f;
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));

  Image c = test::random_image(rng, 16, 16);
  double mse = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    double d = static_cast<double>(a.data()[i]) - c.data()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  CHECK(psnr(a, c) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-9));
}

TEST_CASE("psnr and ssim are symmetric") {
  Rng rng(7);
  Image a = test::random_image(rng, 24, 24);
  Image b = test::random_image(rng, 24, 24);
  CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)).epsilon(1e-12));
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-9));
}

TEST_CASE("psnr decreases as noise grows") {
  Rng scene_rng(8);
  Image clean = test::random_image(scene_rng, 32, 32, 0.2f, 0.8f);
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {0.01, 0.05, 0.1}) {
    double mean_psnr = 0.0;
    for (int seed = 0; seed < 10; ++seed) {
      Rng rng(mix64(1234, static_cast<uint64_t>(sigma * 1000) + seed));
      Image noisy = clean;
      for (int64_t i = 0; i < noisy.size(); ++i)
        noisy.data()[i] += static_cast<float>(sigma * rng.normal());
      mean_psnr += psnr(clean, noisy);
    }
    mean_psnr /= 10.0;
    CHECK(mean_psnr < prev);
    prev = mean_psnr;
  }
}

TEST_CASE("ssim identities and extremes") {
  Rng rng(9);
  Image a = test::random_image(rng, 32, 32);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));

  Image zeros({16, 16, 3});
  Image ones({16, 16, 3});
  ones.fill(1.0f);
  // constant images: closed form C1 / (1 + C1)
  const double c1 = 1e-4;
  double expected = c1 / (1.0 + c1);
  CHECK(ssim(zeros, ones) == doctest::Approx(expected).epsilon(1e-6));
  CHECK(ssim(zeros, ones) < 0.01);

  Image perturbed = a;
  Rng nrng(10);
  for (int64_t i = 0; i < perturbed.size(); ++i)
    perturbed.data()[i] += static_cast<float>(1e-4 * nrng.normal());
  CHECK(ssim(a, perturbed) > 0.99);
}

TEST_CASE("ssim rejects images smaller than the window") {
  Image tiny({8, 8, 3});
  CHECK_THROWS_AS(ssim(tiny, tiny), std::invalid_argument);
}
