#include <cmath>

#include "doctest.h"
#include "fnf/simulation.h"
#include "test_util.h"

using namespace fnf;

TEST_CASE("scene generation is deterministic and in range") {
  Image a1, f1, a2, f2;
  generate_scene(5, 64, 64, a1, f1);
  generate_scene(5, 64, 64, a2, f2);
  CHECK(a1 == a2);
  CHECK(f1 == f2);

  for (uint64_t seed = 0; seed < 100; ++seed) {
    Image ambient, flash_only;
    generate_scene(seed, 32, 32, ambient, flash_only);
    for (int64_t i = 0; i < ambient.size(); ++i) {
      CHECK(ambient.data()[i] >= 0.0f);
      CHECK(ambient.data()[i] <= 1.0f);
      CHECK(flash_only.data()[i] >= 0.0f);
      CHECK(flash_only.data()[i] <= 1.0f);
    }
  }
}

TEST_CASE("ambient and flash share albedo: the log ratio is smoother than log ambient") {
  int pass = 0, total = 0;
  for (uint64_t seed = 40; seed < 44; ++seed) {
    Image ambient, flash_only;
    generate_scene(seed, 96, 96, ambient, flash_only);
    const int h = 96, w = 96;
    auto log_at = [](const Image& img, int y, int x) {
      double m = 0.0;
      for (int c = 0; c < 3; ++c) m += std::max(1e-5f, img.at(y, x, c));
      return std::log(m / 3.0);
    };
    for (int y = 0; y + 1 < h; ++y)
      for (int x = 0; x + 1 < w; ++x) {
        double ratio_here = log_at(ambient, y, x) - log_at(flash_only, y, x);
        double ratio_dx = (log_at(ambient, y, x + 1) - log_at(flash_only, y, x + 1)) - ratio_here;
        double ratio_dy = (log_at(ambient, y + 1, x) - log_at(flash_only, y + 1, x)) - ratio_here;
        double amb_dx = log_at(ambient, y, x + 1) - log_at(ambient, y, x);
        double amb_dy = log_at(ambient, y + 1, x) - log_at(ambient, y, x);
        double tv_ratio = std::abs(ratio_dx) + std::abs(ratio_dy);
        double tv_ambient = std::abs(amb_dx) + std::abs(amb_dy);
        if (tv_ratio <= tv_ambient + 1e-9) ++pass;
        ++total;
      }
  }
  CHECK(static_cast<double>(pass) / total >= 0.9);
}

TEST_CASE("compose_pair arithmetic") {
  Image ambient({32, 32, 3});
  ambient.fill(0.5f);
  Image flash({32, 32, 3});
  Image nf, f;

  compose_pair(ambient, flash, 1.0, nf, f);
  CHECK(nf == ambient);
  CHECK(f == ambient);  // dim 1, flash 0

  compose_pair(ambient, flash, 50.0, nf, f);
  for (int64_t i = 0; i < nf.size(); ++i) CHECK(nf.data()[i] == doctest::Approx(0.01f));

  ambient.fill(0.4f);
  flash.fill(0.3f);
  compose_pair(ambient, flash, 2.0, nf, f);
  for (int64_t i = 0; i < nf.size(); ++i) {
    CHECK(nf.data()[i] == doctest::Approx(0.2f));
    CHECK(f.data()[i] == doctest::Approx(0.8f));
  }
}

TEST_CASE("degenerate shake ranges give the identity homography") {
  Rng rng(16);
  Homography h = sample_homography(rng, 64, 64, ShakeRanges{0.0, 1.0, 1.0, 0.0});
  for (int i = 0; i < 9; ++i)
    CHECK(h.m[i] == doctest::Approx(i % 4 == 0 ? 1.0 : 0.0).epsilon(1e-12));
  CHECK(mean_displacement(h, 64, 64) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("noise is unbiased with the stated variance") {
  const double x = 0.25, sigma_r = 0.01, sigma_s = 0.05;
  Image img({512, 512, 3});
  img.fill(static_cast<float>(x));
  Rng rng(17);
  Image noisy = add_noise(img, NoiseParams(sigma_r, sigma_s), rng);

  const int64_t n = noisy.size();  // ~786k draws
  double mean = 0.0;
  for (int64_t i = 0; i < n; ++i) mean += noisy.data()[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = noisy.data()[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n - 1);

  const double expected_var = sigma_r * sigma_r + sigma_s * sigma_s * x;
  const double se = std::sqrt(expected_var / n);
  CHECK(std::abs(mean - x) <= 3.0 * se);
  CHECK(std::abs(var - expected_var) / expected_var <= 0.02);
}

TEST_CASE("degenerate noise leaves the image unchanged") {
  Rng rng(18);
  Image img = test::random_image(rng, 16, 16);
  Image noisy = add_noise(img, NoiseParams(1e-12, 0.0), rng);
  CHECK(test::max_abs_diff(img, noisy) <= 1e-10);
}

TEST_CASE("noise rejects negative inputs") {
  Image img({32, 32, 3});
  img.fill(-0.1f);
  Rng rng(19);
  CHECK_THROWS_AS(add_noise(img, NoiseParams(0.01, 0.0), rng), std::invalid_argument);
}

TEST_CASE("noise stddev map formula with clamping") {
  Image img({1, 3, 3});
  img.at(0, 0, 0) = -0.3f;
  img.at(0, 1, 0) = 0.0f;
  img.at(0, 2, 0) = 1.0f;
  Image map = noise_stddev_map(img, NoiseParams(0.01, 0.1));
  CHECK(map.at(0, 0, 0) == doctest::Approx(0.01));   // clamp at zero
  CHECK(map.at(0, 1, 0) == doctest::Approx(0.01));
  CHECK(map.at(0, 2, 0) == doctest::Approx(std::sqrt(0.0001 + 0.01)));

  // monotone in the pixel value, never below sigma_r
  Rng rng(20);
  Image noisy = test::random_image(rng, 16, 16, -0.5f, 1.5f);
  Image m = noise_stddev_map(noisy, NoiseParams(0.004, 0.02));
  for (int64_t i = 0; i < m.size(); ++i) CHECK(m.data()[i] >= 0.004f);
}

TEST_CASE("make_sample degenerate case collapses to the clean scene") {
  Image ambient({32, 32, 3});
  for (int64_t i = 0; i < ambient.size(); ++i)
    ambient.data()[i] = 0.25f + 0.001f * static_cast<float>(i % 17);
  Image flash({32, 32, 3});  // zero flash
  Rng rng(21);
  SamplePair s = make_sample(ambient, flash, 1.0, NoiseParams(1e-12, 0.0),
                             Homography::identity(), Reference::noflash, rng);
  CHECK(test::max_abs_diff(s.x_f, s.x_nf) <= 1e-9);
  CHECK(test::max_abs_diff(s.x_nf, s.y) <= 1e-9);
  CHECK(s.render.gain == doctest::Approx(1.0f));
}

TEST_CASE("reference selects which input is misaligned and moves the ground truth") {
  Image ambient, flash_only;
  generate_scene(31, 64, 64, ambient, flash_only);
  Rng rng(22);
  Homography h = sample_homography(rng, 64, 64, ShakeRanges{});
  NoiseParams np(1e-9, 0.0);

  Rng rng_nf(23), rng_f(23);
  SamplePair nf_ref = make_sample(ambient, flash_only, 4.0, np, h, Reference::noflash, rng_nf);
  SamplePair f_ref = make_sample(ambient, flash_only, 4.0, np, h, Reference::flash, rng_f);

  // no-flash reference: x_nf matches the unwarped dimmed ambient
  CHECK(test::max_abs_diff(nf_ref.x_nf, nf_ref.y) <= 1e-6);
  // the warped flash content really moved
  Image clean_nf, clean_f;
  compose_pair(ambient, flash_only, 4.0, clean_nf, clean_f);
  CHECK(test::max_abs_diff(nf_ref.x_f, clean_f) > 1e-3);

  // the two reference choices give ground truths related by exactly h
  Image warped_y = warp_image(nf_ref.y, h);
  CHECK(test::max_abs_diff(f_ref.y, warped_y) <= 1e-6);

  // flash reference: the no-flash input is the misaligned one
  CHECK(test::max_abs_diff(f_ref.x_nf, clean_nf) <= 1e-6);
  CHECK(test::max_abs_diff(f_ref.x_nf, f_ref.y) > 1e-3);
}

TEST_CASE("flash dominance at low light") {
  for (uint64_t seed = 60; seed < 64; ++seed) {
    Image ambient, flash_only;
    generate_scene(seed, 64, 64, ambient, flash_only);
    Image nf, f;
    compose_pair(ambient, flash_only, 12.5, nf, f);
    double mean_nf = 0.0, mean_f = 0.0;
    for (int64_t i = 0; i < nf.size(); ++i) {
      mean_nf += nf.data()[i];
      mean_f += f.data()[i];
    }
    CHECK(mean_f / mean_nf > 5.0);
  }
}

TEST_CASE("training draws follow the configured ranges") {
  SimConfig config;  // defaults: dim [2,50], log10 sigma_r [-3,-2], log10 sigma_s [-4,-2.6]
  Image ambient, flash_only;
  generate_scene(77, 32, 32, ambient, flash_only);

  // chi-square uniformity of log(dim) over 16 bins
  const int n = 20000, bins = 16;
  std::vector<int> hist(bins, 0);
  const double lo = std::log(config.dim_lo), hi = std::log(config.dim_hi);
  Rng rng(24);
  for (int i = 0; i < n; ++i) {
    double dim = rng.log_uniform(config.dim_lo, config.dim_hi);
    CHECK(dim >= config.dim_lo);
    CHECK(dim <= config.dim_hi);
    int bin = std::min(bins - 1, static_cast<int>((std::log(dim) - lo) / (hi - lo) * bins));
    ++hist[bin];
  }
  double chi2 = 0.0;
  const double expected = static_cast<double>(n) / bins;
  for (int b = 0; b < bins; ++b) {
    double d = hist[b] - expected;
    chi2 += d * d / expected;
  }
  CHECK(chi2 < 30.58);  // chi-square critical value, 15 dof, 1%

  // sigma ranges respected by the full sampler
  for (int i = 0; i < 50; ++i) {
    Rng draw_rng(mix64(25, i));
    SamplePair s = draw_sample(ambient, flash_only, config, draw_rng);
    CHECK(std::log10(s.noise.sigma_r) >= -3.0 - 1e-9);
    CHECK(std::log10(s.noise.sigma_r) <= -2.0 + 1e-9);
    CHECK(std::log10(s.noise.sigma_s) >= -4.0 - 1e-9);
    CHECK(std::log10(s.noise.sigma_s) <= -2.6 + 1e-9);
    CHECK(s.dim_factor >= 2.0);
    CHECK(s.dim_factor <= 50.0);
  }
}

TEST_CASE("sampling is bit-for-bit reproducible") {
  Image ambient, flash_only;
  generate_scene(88, 32, 32, ambient, flash_only);
  SimConfig config;
  Rng r1(26), r2(26);
  SamplePair s1 = draw_sample(ambient, flash_only, config, r1);
  SamplePair s2 = draw_sample(ambient, flash_only, config, r2);
  CHECK(s1.x_f == s2.x_f);
  CHECK(s1.x_nf == s2.x_nf);
  CHECK(s1.y == s2.y);
  CHECK(s1.dim_factor == s2.dim_factor);
  for (int i = 0; i < 9; ++i) CHECK(s1.homography.m[i] == s2.homography.m[i]);
}

TEST_CASE("validate_sample flags broken packaging") {
  Image ambient, flash_only;
  generate_scene(99, 32, 32, ambient, flash_only);
  Rng rng(27);
  SamplePair s = draw_sample(ambient, flash_only, SimConfig{}, rng);
  CHECK(validate_sample(s).empty());

  SamplePair broken = s;
  broken.render.gain = 1.0f;  // no longer undoes the dimming
  CHECK(!validate_sample(broken).empty());

  broken = s;
  broken.y.data()[5] = -0.5f;
  CHECK(!validate_sample(broken).empty());
}
