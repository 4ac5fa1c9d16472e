#include "fnf/simulation.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fnf {

NoiseParams::NoiseParams(double r, double s) : sigma_r(r), sigma_s(s) {
  if (!(sigma_r > 0.0)) throw std::invalid_argument("sigma_r must be positive");
  if (sigma_s < 0.0) throw std::invalid_argument("sigma_s must be nonnegative");
}

std::string to_string(Reference r) {
  return r == Reference::noflash ? "noflash" : "flash";
}

Reference reference_from_string(const std::string& s) {
  if (s == "noflash") return Reference::noflash;
  if (s == "flash") return Reference::flash;
  throw std::invalid_argument("reference must be 'noflash' or 'flash', got '" + s + "'");
}

// ---------------------------------------------------------------------------
// Procedural scenes

namespace {

double hash_unit(uint64_t salt, int64_t cx, int64_t cy) {
  uint64_t k = mix64(salt, (static_cast<uint64_t>(static_cast<uint32_t>(cx)) << 32) |
                               static_cast<uint32_t>(cy));
  return static_cast<double>(k >> 11) * 0x1.0p-53;
}

double smooth01(double t) { return t * t * (3.0 - 2.0 * t); }

// Lattice value noise in [0,1], C1-smooth, deterministic in (salt, position).
double value_noise(uint64_t salt, double x, double y, double cell) {
  double fx = x / cell, fy = y / cell;
  double x0 = std::floor(fx), y0 = std::floor(fy);
  double tx = smooth01(fx - x0), ty = smooth01(fy - y0);
  int64_t ix = static_cast<int64_t>(x0), iy = static_cast<int64_t>(y0);
  double v00 = hash_unit(salt, ix, iy), v01 = hash_unit(salt, ix + 1, iy);
  double v10 = hash_unit(salt, ix, iy + 1), v11 = hash_unit(salt, ix + 1, iy + 1);
  double top = v00 + (v01 - v00) * tx;
  double bot = v10 + (v11 - v10) * tx;
  return top + (bot - top) * ty;
}

struct Shape {
  bool ellipse;
  double cx, cy, ax, ay, theta;

  bool contains(double x, double y) const {
    double dx = x - cx, dy = y - cy;
    double u = dx * std::cos(theta) + dy * std::sin(theta);
    double v = -dx * std::sin(theta) + dy * std::cos(theta);
    if (ellipse) return (u * u) / (ax * ax) + (v * v) / (ay * ay) <= 1.0;
    return std::abs(u) <= ax && std::abs(v) <= ay;
  }
};

}  // namespace

void generate_scene(uint64_t seed, int height, int width, Image& ambient,
                    Image& flash_only) {
  if (height < 32 || width < 32 || height % 32 != 0 || width % 32 != 0)
    throw std::invalid_argument("scene dimensions must be >= 32 and divisible by 32");

  Rng rng(mix64(seed, 0x5ce7e5ull));
  const double diag = std::min(height, width);

  // Base albedo: three random colors blended by two low-frequency noise fields.
  std::array<std::array<double, 3>, 3> base_colors;
  for (auto& col : base_colors)
    for (auto& v : col) v = rng.uniform(0.15, 0.95);
  uint64_t salt_blend_a = rng.next_u64();
  uint64_t salt_blend_b = rng.next_u64();
  double blend_cell = diag * rng.uniform(0.4, 0.8);

  // Textured shapes with their own colors.
  int n_shapes = 4 + rng.uniform_int(5);
  std::vector<Shape> shapes;
  std::vector<std::array<double, 3>> shape_colors;
  std::vector<double> shape_tex_amp;
  std::vector<uint64_t> shape_tex_salt;
  std::vector<double> shape_tex_cell;
  for (int i = 0; i < n_shapes; ++i) {
    Shape s;
    s.ellipse = rng.uniform() < 0.5;
    s.cx = rng.uniform(0.1, 0.9) * width;
    s.cy = rng.uniform(0.1, 0.9) * height;
    s.ax = rng.uniform(0.06, 0.22) * diag;
    s.ay = rng.uniform(0.06, 0.22) * diag;
    s.theta = rng.uniform(0.0, 3.14159265358979323846);
    shapes.push_back(s);
    shape_colors.push_back({rng.uniform(0.1, 0.95), rng.uniform(0.1, 0.95),
                            rng.uniform(0.1, 0.95)});
    shape_tex_amp.push_back(rng.uniform(0.05, 0.25));
    shape_tex_salt.push_back(rng.next_u64());
    shape_tex_cell.push_back(rng.uniform(2.0, 6.0));
  }

  // Fine shared texture over everything.
  uint64_t salt_hf = rng.next_u64();
  double hf_cell = rng.uniform(2.0, 4.0);
  double hf_amp = rng.uniform(0.08, 0.18);
  uint64_t salt_speckle = rng.next_u64();
  double speckle_amp = rng.uniform(0.02, 0.05);

  // Ambient shading: low-frequency field with a color cast.
  std::array<double, 3> cast;
  for (auto& v : cast) v = rng.uniform(0.45, 0.9);
  uint64_t salt_amb = rng.next_u64();
  double amb_cell = diag * rng.uniform(0.5, 1.0);
  double amb_lo = rng.uniform(0.25, 0.4);

  // Flash shading: falloff from a point near the image center plus shadows.
  double fx0 = width * rng.uniform(0.35, 0.65);
  double fy0 = height * rng.uniform(0.35, 0.65);
  double r0 = diag * rng.uniform(0.5, 0.9);
  double falloff_pow = rng.uniform(1.0, 2.0);
  double flash_gain = rng.uniform(0.75, 0.95);
  // Each shape may cast one hard shadow, offset away from the flash.
  std::vector<int> shadow_of;
  std::vector<std::array<double, 2>> shadow_offset;
  for (int i = 0; i < n_shapes; ++i) {
    bool casts = rng.uniform() < 0.6;
    double ox = rng.uniform(0.3, 0.8) * shapes[i].ax;
    double oy = rng.uniform(0.3, 0.8) * shapes[i].ay;
    if (!casts) continue;
    double dx = shapes[i].cx - fx0, dy = shapes[i].cy - fy0;
    double len = std::hypot(dx, dy);
    if (len < 1.0) { dx = 1.0; dy = 0.0; len = 1.0; }
    shadow_of.push_back(i);
    shadow_offset.push_back({dx / len * (ox + 2.0), dy / len * (oy + 2.0)});
  }
  double shadow_dim = rng.uniform(0.12, 0.25);

  ambient = Image({height, width, 3});
  flash_only = Image({height, width, 3});

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double px = x, py = y;
      // albedo
      double wa = value_noise(salt_blend_a, px, py, blend_cell);
      double wb = value_noise(salt_blend_b, px, py, blend_cell);
      std::array<double, 3> albedo;
      for (int c = 0; c < 3; ++c)
        albedo[c] = base_colors[0][c] * (1.0 - wa) + base_colors[1][c] * wa;
      for (int c = 0; c < 3; ++c)
        albedo[c] = albedo[c] * (1.0 - wb * 0.5) + base_colors[2][c] * (wb * 0.5);
      for (size_t i = 0; i < shapes.size(); ++i) {
        if (!shapes[i].contains(px, py)) continue;
        double t = 1.0 + shape_tex_amp[i] *
                             (2.0 * value_noise(shape_tex_salt[i], px, py, shape_tex_cell[i]) - 1.0);
        for (int c = 0; c < 3; ++c) albedo[c] = shape_colors[i][c] * t;
      }
      double hf = 1.0 + hf_amp * (2.0 * value_noise(salt_hf, px, py, hf_cell) - 1.0);
      double sp = 1.0 + speckle_amp * (2.0 * hash_unit(salt_speckle, x, y) - 1.0);
      for (int c = 0; c < 3; ++c)
        albedo[c] = std::clamp(albedo[c] * hf * sp, 0.04, 1.0);

      // ambient shading
      double amb = amb_lo + (0.95 - amb_lo) * value_noise(salt_amb, px, py, amb_cell);
      for (int c = 0; c < 3; ++c)
        ambient.at(y, x, c) =
            static_cast<float>(std::clamp(albedo[c] * amb * cast[c], 0.0, 1.0));

      // flash shading
      double rx = (px - fx0) / r0, ry = (py - fy0) / r0;
      double fall = flash_gain / std::pow(1.0 + rx * rx + ry * ry, falloff_pow);
      bool in_shadow = false;
      for (size_t i = 0; i < shadow_of.size(); ++i) {
        int si = shadow_of[i];
        if (shapes[si].contains(px - shadow_offset[i][0], py - shadow_offset[i][1]) &&
            !shapes[si].contains(px, py)) {
          in_shadow = true;
          break;
        }
      }
      double fl = std::max(fall * (in_shadow ? shadow_dim : 1.0), 0.02);
      for (int c = 0; c < 3; ++c)
        flash_only.at(y, x, c) = static_cast<float>(std::clamp(albedo[c] * fl, 0.0, 1.0));
    }
  }
}

// ---------------------------------------------------------------------------

void compose_pair(const Image& ambient, const Image& flash_only, double dim_factor,
                  Image& clean_nf, Image& clean_f) {
  require_hw3(ambient, "compose_pair");
  if (!ambient.same_shape(flash_only))
    throw std::invalid_argument("compose_pair: shape mismatch");
  if (dim_factor < 1.0) throw std::invalid_argument("dim_factor must be >= 1");
  clean_nf = Image({ambient.dim(0), ambient.dim(1), 3});
  clean_f = Image({ambient.dim(0), ambient.dim(1), 3});
  const float inv = static_cast<float>(1.0 / dim_factor);
  for (int64_t i = 0; i < ambient.size(); ++i) {
    float nf = ambient.data()[i] * inv;
    clean_nf.data()[i] = nf;
    clean_f.data()[i] = 2.0f * flash_only.data()[i] + nf;
  }
}

Homography sample_homography(Rng& rng, int height, int width, const ShakeRanges& ranges) {
  const double deg = 3.14159265358979323846 / 180.0;
  double rx = rng.uniform(-ranges.rot_deg, ranges.rot_deg);
  double ry = rng.uniform(-ranges.rot_deg, ranges.rot_deg);
  double rz = rng.uniform(-ranges.rot_deg, ranges.rot_deg);
  double s = rng.uniform(ranges.scale_lo, ranges.scale_hi);
  double tx = rng.uniform(0.0, ranges.trans_px) * rng.sign();
  double ty = rng.uniform(0.0, ranges.trans_px) * rng.sign();

  // 90-degree horizontal FOV intrinsics, principal point at the image center.
  const double f = width / 2.0;
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;

  auto matmul = [](const std::array<double, 9>& a, const std::array<double, 9>& b) {
    std::array<double, 9> p{};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        p[r * 3 + c] = a[r * 3] * b[c] + a[r * 3 + 1] * b[3 + c] + a[r * 3 + 2] * b[6 + c];
    return p;
  };

  double ax = rx * deg, ay = ry * deg, az = rz * deg;
  std::array<double, 9> rot_x{1, 0, 0, 0, std::cos(ax), -std::sin(ax),
                              0, std::sin(ax), std::cos(ax)};
  std::array<double, 9> rot_y{std::cos(ay), 0, std::sin(ay), 0, 1, 0,
                              -std::sin(ay), 0, std::cos(ay)};
  std::array<double, 9> rot_z{std::cos(az), -std::sin(az), 0, std::sin(az), std::cos(az), 0,
                              0, 0, 1};
  std::array<double, 9> rot = matmul(rot_z, matmul(rot_y, rot_x));

  std::array<double, 9> intr{f, 0, cx, 0, f, cy, 0, 0, 1};
  std::array<double, 9> intr_inv{1.0 / f, 0, -cx / f, 0, 1.0 / f, -cy / f, 0, 0, 1};
  std::array<double, 9> cam = matmul(intr, matmul(rot, intr_inv));

  // scale about the image center, then translate
  std::array<double, 9> scale_m{s, 0, cx * (1.0 - s), 0, s, cy * (1.0 - s), 0, 0, 1};
  std::array<double, 9> trans_m{1, 0, tx, 0, 1, ty, 0, 0, 1};
  Homography h = Homography::from_matrix(matmul(trans_m, matmul(scale_m, cam)));
  h.rotation_deg = {rx, ry, rz};
  h.scale = s;
  h.translation_px = {tx, ty};
  return h;
}

Image add_noise(const Image& img, const NoiseParams& np, Rng& rng) {
  require_hw3(img, "add_noise");
  Image out({img.dim(0), img.dim(1), 3});
  const float* in = img.data();
  float* o = out.data();
  const double var_r = np.sigma_r * np.sigma_r;
  const double var_s = np.sigma_s * np.sigma_s;
  for (int64_t i = 0; i < img.size(); ++i) {
    double x = in[i];
    if (x < 0.0) throw std::invalid_argument("add_noise: noise-free input must be nonnegative");
    double sd = std::sqrt(var_r + var_s * x);
    o[i] = static_cast<float>(x + sd * rng.normal());
  }
  return out;
}

Image noise_stddev_map(const Image& noisy_img, const NoiseParams& np) {
  require_hw3(noisy_img, "noise_stddev_map");
  Image out({noisy_img.dim(0), noisy_img.dim(1), 3});
  for (int64_t i = 0; i < noisy_img.size(); ++i)
    out.data()[i] = static_cast<float>(np.stddev(noisy_img.data()[i]));
  return out;
}

SamplePair make_sample(const Image& ambient, const Image& flash_only, double dim_factor,
                       const NoiseParams& np, const Homography& h, Reference reference,
                       Rng& rng, const RenderParams* render_base) {
  Image clean_nf, clean_f;
  compose_pair(ambient, flash_only, dim_factor, clean_nf, clean_f);

  SamplePair s;
  s.noise = np;
  s.homography = h;
  s.reference = reference;
  s.dim_factor = dim_factor;

  // The flash-side content carries the warp. With the flash as reference the
  // ground truth lives in the warped frame, so it is warped along with it.
  Image warped_f = h.is_identity() ? clean_f : warp_image(clean_f, h);
  if (reference == Reference::noflash) {
    s.y = clean_nf;
  } else {
    s.y = h.is_identity() ? clean_nf : warp_image(clean_nf, h);
  }
  s.x_nf = add_noise(clean_nf, np, rng);
  s.x_f = add_noise(warped_f, np, rng);
  s.noise_map_nf = noise_stddev_map(s.x_nf, np);
  s.noise_map_f = noise_stddev_map(s.x_f, np);

  if (render_base) s.render = *render_base;
  s.render.gain = static_cast<float>(dim_factor);
  return s;
}

SamplePair draw_sample(const Image& ambient, const Image& flash_only,
                       const SimConfig& config, Rng& rng, const RenderParams* render_base) {
  double dim = rng.log_uniform(config.dim_lo, config.dim_hi);
  double sr = std::pow(10.0, rng.uniform(config.log10_sigma_r_lo, config.log10_sigma_r_hi));
  double ss = std::pow(10.0, rng.uniform(config.log10_sigma_s_lo, config.log10_sigma_s_hi));
  Homography h = sample_homography(rng, ambient.dim(0), ambient.dim(1), config.shake);
  return make_sample(ambient, flash_only, dim, NoiseParams(sr, ss), h, config.reference,
                     rng, render_base);
}

// ---------------------------------------------------------------------------
// Sample cache

Container sample_to_container(const SamplePair& s) {
  Container c;
  c.put("x_f", s.x_f);
  c.put("x_nf", s.x_nf);
  c.put("noise_map_f", s.noise_map_f);
  c.put("noise_map_nf", s.noise_map_nf);
  c.put("y", s.y);
  c.put_scalar("dim_factor", s.dim_factor);
  c.put_scalar("sigma_r", s.noise.sigma_r);
  c.put_scalar("sigma_s", s.noise.sigma_s);
  c.put_scalar("gain", s.render.gain);
  Tensor<float> cm({9});
  std::copy(s.render.color_matrix.begin(), s.render.color_matrix.end(), cm.data());
  c.put("color_matrix", cm);
  Tensor<int32_t> gamma({1});
  gamma.at(0) = s.render.gamma == Gamma::srgb ? 0 : 1;
  c.put("gamma", gamma);
  Tensor<double> hm({9});
  std::copy(s.homography.m.begin(), s.homography.m.end(), hm.data());
  c.put("homography", hm);
  Tensor<int32_t> ref({1});
  ref.at(0) = s.reference == Reference::noflash ? 0 : 1;
  c.put("reference", ref);
  return c;
}

SamplePair sample_from_container(const Container& c) {
  SamplePair s;
  s.x_f = c.get_f32("x_f");
  s.x_nf = c.get_f32("x_nf");
  s.noise_map_f = c.get_f32("noise_map_f");
  s.noise_map_nf = c.get_f32("noise_map_nf");
  s.y = c.get_f32("y");
  s.dim_factor = c.get_scalar("dim_factor");
  s.noise = NoiseParams(c.get_scalar("sigma_r"), c.get_scalar("sigma_s"));
  s.render.gain = static_cast<float>(c.get_scalar("gain"));
  auto cm = c.get_f32("color_matrix");
  std::copy(cm.data(), cm.data() + 9, s.render.color_matrix.begin());
  s.render.gamma = c.get_i32("gamma").at(0) == 0 ? Gamma::srgb : Gamma::linear;
  auto hm = c.get_f64("homography");
  std::array<double, 9> m;
  std::copy(hm.data(), hm.data() + 9, m.begin());
  s.homography = Homography::from_matrix(m);
  s.reference = c.get_i32("reference").at(0) == 0 ? Reference::noflash : Reference::flash;
  return s;
}

void save_sample(const std::string& path, const SamplePair& s) {
  sample_to_container(s).save(path);
}

SamplePair load_sample(const std::string& path) {
  return sample_from_container(Container::load(path));
}

std::vector<std::string> validate_sample(const SamplePair& s) {
  std::vector<std::string> problems;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  };
  check(s.x_f.ndim() == 3 && s.x_f.dim(2) == 3, "x_f is not HxWx3");
  check(s.x_f.same_shape(s.x_nf) && s.x_f.same_shape(s.y), "image shapes disagree");
  check(s.x_f.same_shape(s.noise_map_f) && s.x_nf.same_shape(s.noise_map_nf),
        "noise map shapes disagree");
  if (!problems.empty()) return problems;

  check(s.x_f.dim(0) >= 32 && s.x_f.dim(0) % 32 == 0 && s.x_f.dim(1) >= 32 &&
            s.x_f.dim(1) % 32 == 0,
        "dimensions must be >= 32 and divisible by 32");
  check(s.noise.sigma_r > 0.0, "sigma_r must be positive");
  check(s.dim_factor >= 1.0, "dim_factor must be >= 1");
  check(std::abs(s.render.gain - s.dim_factor) <= 1e-6 * s.dim_factor,
        "render gain must undo the dimming");

  bool y_nonneg = true;
  for (int64_t i = 0; i < s.y.size(); ++i)
    if (s.y.data()[i] < 0.0f) y_nonneg = false;
  check(y_nonneg, "ground truth must be noise-free (nonnegative)");

  const float sigma_r = static_cast<float>(s.noise.sigma_r);
  bool maps_ok = true;
  for (int64_t i = 0; i < s.noise_map_f.size(); ++i)
    if (s.noise_map_f.data()[i] < sigma_r * (1.0f - 1e-6f) ||
        s.noise_map_nf.data()[i] < sigma_r * (1.0f - 1e-6f))
      maps_ok = false;
  check(maps_ok, "noise maps must be >= sigma_r everywhere");
  return problems;
}

}  // namespace fnf
