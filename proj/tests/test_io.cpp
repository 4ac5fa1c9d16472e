#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "fnf/io.h"
#include "fnf/kernel_engine.h"
#include "fnf/simulation.h"
#include "test_util.h"

using namespace fnf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("fnf_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

}  // namespace

TEST_CASE("16-bit png roundtrip is exact to quantization") {
  TempDir tmp;
  Rng rng(11);

  Image zeros({32, 16, 3});
  save_png(tmp.file("zeros.png"), zeros);
  CHECK(load_png(tmp.file("zeros.png")) == zeros);

  Image ones({16, 32, 3});
  ones.fill(1.0f);
  save_png(tmp.file("ones.png"), ones);
  CHECK(load_png(tmp.file("ones.png")) == ones);

  Image img = test::random_image(rng, 40, 24);
  save_png(tmp.file("rand.png"), img);
  Image back = load_png(tmp.file("rand.png"));
  CHECK(test::max_abs_diff(img, back) <= 1.0 / 65535.0 + 1e-9);
}

TEST_CASE("sidecar roundtrip carries rendering and capture metadata") {
  TempDir tmp;
  Rng rng(12);
  Image img = test::random_image(rng, 32, 32);

  ImageMeta meta;
  meta.render.gain = 25.0f;
  meta.render.color_matrix = {0.9f, 0.05f, 0.05f, 0.1f, 0.8f, 0.1f, 0.0f, 0.2f, 0.8f};
  meta.render.gamma = Gamma::srgb;
  meta.sigma_r = 0.0025;
  meta.sigma_s = 0.0003;
  meta.homography = sample_homography(rng, 32, 32, ShakeRanges{});

  save_image(tmp.file("img.png"), img, meta);
  auto [back, loaded] = load_image(tmp.file("img.png"));
  CHECK(back.same_shape(img));
  CHECK(loaded.render.gain == doctest::Approx(25.0f));
  CHECK(loaded.sigma_r == doctest::Approx(0.0025));
  CHECK(loaded.sigma_s == doctest::Approx(0.0003));
  for (int i = 0; i < 9; ++i) {
    CHECK(loaded.render.color_matrix[i] == doctest::Approx(meta.render.color_matrix[i]));
    CHECK(loaded.homography.m[i] == doctest::Approx(meta.homography.m[i]).epsilon(1e-12));
  }
}

TEST_CASE("missing sidecar falls back to defaults") {
  TempDir tmp;
  Image img({32, 32, 3});
  save_png(tmp.file("plain.png"), img);
  auto [back, meta] = load_image(tmp.file("plain.png"));
  CHECK(meta.render.gain == 1.0f);
  CHECK(meta.render.gamma == Gamma::srgb);
  CHECK(meta.homography.is_identity());
}

TEST_CASE("container roundtrip across dtypes") {
  TempDir tmp;
  Rng rng(13);

  Container c;
  c.put("floats", test::random_tensor<float>(rng, {3, 4, 5}, -2, 2));
  c.put("doubles", test::random_tensor<double>(rng, {7}, -1, 1));
  Tensor<int32_t> ints({2, 2});
  ints.at(0, 0) = -5;
  ints.at(1, 1) = 42;
  c.put("ints", ints);
  c.put_scalar("answer", 42.5);
  c.save(tmp.file("blob.bin"));

  Container back = Container::load(tmp.file("blob.bin"));
  CHECK(back.names() == c.names());
  CHECK(back.get_f32("floats") == c.get_f32("floats"));
  CHECK(back.get_f64("doubles") == c.get_f64("doubles"));
  CHECK(back.get_i32("ints") == ints);
  CHECK(back.get_scalar("answer") == 42.5);
  CHECK_THROWS(back.get_f32("missing"));
  CHECK_THROWS(back.get_f32("doubles"));  // dtype mismatch
}

TEST_CASE("sample cache roundtrip is bit-exact") {
  TempDir tmp;
  Image ambient, flash_only;
  generate_scene(21, 32, 32, ambient, flash_only);
  Rng rng(14);
  Homography h = sample_homography(rng, 32, 32, ShakeRanges{});
  SamplePair s = make_sample(ambient, flash_only, 12.5, NoiseParams(0.004, 0.0008), h,
                             Reference::flash, rng);

  save_sample(tmp.file("sample_1.npzlike"), s);
  SamplePair back = load_sample(tmp.file("sample_1.npzlike"));
  CHECK(back.x_f == s.x_f);
  CHECK(back.x_nf == s.x_nf);
  CHECK(back.noise_map_f == s.noise_map_f);
  CHECK(back.y == s.y);
  CHECK(back.dim_factor == s.dim_factor);
  CHECK(back.noise.sigma_r == s.noise.sigma_r);
  CHECK(back.reference == Reference::flash);
  for (int i = 0; i < 9; ++i) CHECK(back.homography.m[i] == s.homography.m[i]);
  CHECK(validate_sample(back).empty());
}

TEST_CASE("git-style blob hash matches the reference value") {
  // `echo hello | git hash-object --stdin`
  CHECK(blob_hash_bytes("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(sha1_hex("abc", 3) == "a9993e364706816aba3e25717850c26c9cd0d89d");
}

TEST_CASE("kernel field dump roundtrip") {
  TempDir tmp;
  Rng rng(15);
  KernelBasis basis;
  basis.a = test::random_tensor<float>(rng, {3, 5, 5, 3}, -1, 1);
  basis.b = test::random_tensor<float>(rng, {3, 5, 5, 3}, -1, 1);
  basis.upsample = 2;
  Tensor<float> coeffs = test::random_tensor<float>(rng, {16, 12, 3}, -1, 1);

  save_kernel_field(tmp.file("field.kdump"), basis, coeffs);
  KernelBasis basis2;
  Tensor<float> coeffs2;
  load_kernel_field(tmp.file("field.kdump"), basis2, coeffs2);
  CHECK(basis2.a == basis.a);
  CHECK(basis2.b == basis.b);
  CHECK(basis2.upsample == 2);
  CHECK(coeffs2 == coeffs);
}
