#include "fnf/evaluation.h"

#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "fnf/io.h"

namespace fnf {

namespace {
constexpr uint64_t kShakeTag = 0x5a4b3ull;
}  // namespace

Homography sweep_homography(const EvalProtocol& protocol, int image_index, int height,
                            int width) {
  Rng rng(mix64(mix64(protocol.seed, kShakeTag), static_cast<uint64_t>(image_index)));
  return sample_homography(rng, height, width, ShakeRanges{});
}

SamplePair sweep_sample(const EvalProtocol& protocol, const Dataset& scenes,
                        int image_index, int dim_index, double dim_factor) {
  const auto& pool = scenes.scenes();
  if (pool.empty()) throw std::invalid_argument("evaluation needs a scene dataset");
  const auto& [ambient, flash_only] = pool[static_cast<size_t>(image_index) % pool.size()];
  Homography h = sweep_homography(protocol, image_index, ambient.dim(0), ambient.dim(1));
  Rng noise_rng(mix64(mix64(mix64(protocol.seed, 0x4015eull), static_cast<uint64_t>(image_index)),
                      static_cast<uint64_t>(dim_index)));
  return make_sample(ambient, flash_only, dim_factor, protocol.noise(), h,
                     protocol.reference, noise_rng);
}

MethodResult eval_sweep(const Model& model, const EvalProtocol& protocol,
                        const Dataset& scenes, const std::string& name) {
  MethodResult result;
  result.name = name.empty() ? to_string(model.config().variant) : name;
  for (size_t di = 0; di < protocol.dim_factors.size(); ++di) {
    const double dim = protocol.dim_factors[di];
    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (int i = 0; i < protocol.n_images; ++i) {
      SamplePair sample = sweep_sample(protocol, scenes, i, static_cast<int>(di), dim);
      Image out = model.denoise(sample);
      Image sp = render_srgb(out, sample.render);
      Image st = render_srgb(sample.y, sample.render);
      psnr_sum += psnr(sp, st);
      ssim_sum += ssim(sp, st);
    }
    result.cells.push_back(
        {dim, psnr_sum / protocol.n_images, ssim_sum / protocol.n_images});
  }
  return result;
}

std::vector<MethodResult> compare_methods(const std::vector<const Model*>& models,
                                          const EvalProtocol& protocol, const Dataset& scenes) {
  std::vector<MethodResult> rows;
  rows.reserve(models.size());
  for (const Model* m : models) rows.push_back(eval_sweep(*m, protocol, scenes));
  return rows;
}

// ---------------------------------------------------------------------------
// Misalignment sweep

namespace {

Homography bin_homography(const EvalProtocol& protocol, int bin_index, int image_index,
                          double scale, int height, int width) {
  Rng rng(mix64(mix64(mix64(protocol.seed, 0x8153a11ull), static_cast<uint64_t>(bin_index)),
                static_cast<uint64_t>(image_index)));
  return sample_homography(rng, height, width, ShakeRanges{}.scaled(scale));
}

double bin_mean_displacement(const EvalProtocol& protocol, int bin_index, double scale,
                             int height, int width) {
  double total = 0.0;
  for (int i = 0; i < protocol.n_images; ++i)
    total += mean_displacement(bin_homography(protocol, bin_index, i, scale, height, width),
                               height, width);
  return total / protocol.n_images;
}

}  // namespace

double calibrate_shake_scale(const EvalProtocol& protocol, double target, int bin_index,
                             int height, int width, double tolerance) {
  if (target <= 0.0) return 0.0;
  double lo = 0.0, hi = 1.0;
  double f_hi = bin_mean_displacement(protocol, bin_index, hi, height, width);
  while (f_hi < target) {
    hi *= 2.0;
    if (hi > 256.0)
      throw std::runtime_error("displacement target unreachable: " + std::to_string(target));
    f_hi = bin_mean_displacement(protocol, bin_index, hi, height, width);
  }
  for (int iter = 0; iter < 60; ++iter) {
    double mid = 0.5 * (lo + hi);
    double f = bin_mean_displacement(protocol, bin_index, mid, height, width);
    if (std::abs(f - target) <= tolerance * target) return mid;
    if (f < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<MisalignPoint> eval_misalignment(const Model& model, const EvalProtocol& protocol,
                                             const Dataset& scenes) {
  const auto& pool = scenes.scenes();
  if (pool.empty()) throw std::invalid_argument("evaluation needs a scene dataset");
  const int height = pool[0].first.dim(0), width = pool[0].first.dim(1);

  std::vector<MisalignPoint> points;
  for (size_t bi = 0; bi < protocol.displacement_bins.size(); ++bi) {
    const double target = protocol.displacement_bins[bi];
    const double scale =
        calibrate_shake_scale(protocol, target, static_cast<int>(bi), height, width);

    double psnr_sum = 0.0, achieved_sum = 0.0;
    for (int i = 0; i < protocol.n_images; ++i) {
      const auto& [ambient, flash_only] = pool[static_cast<size_t>(i) % pool.size()];
      Homography h = scale == 0.0
                         ? Homography::identity()
                         : bin_homography(protocol, static_cast<int>(bi), i, scale, height, width);
      achieved_sum += mean_displacement(h, height, width);
      Rng noise_rng(mix64(mix64(mix64(protocol.seed, 0x8a0135ull), bi),
                          static_cast<uint64_t>(i)));
      SamplePair sample = make_sample(ambient, flash_only, protocol.misalignment_dim,
                                      protocol.noise(), h, protocol.reference, noise_rng);
      Image out = model.denoise(sample);
      psnr_sum += psnr(render_srgb(out, sample.render), render_srgb(sample.y, sample.render));
    }
    points.push_back({target, achieved_sum / protocol.n_images, psnr_sum / protocol.n_images});
  }
  return points;
}

// ---------------------------------------------------------------------------
// Serialization

std::string methods_csv(const std::vector<MethodResult>& rows) {
  std::ostringstream os;
  os << "method";
  if (!rows.empty())
    for (const auto& cell : rows[0].cells)
      os << ",psnr_" << cell.dim_factor << "x,ssim_" << cell.dim_factor << "x";
  os << "\n";
  for (const auto& row : rows) {
    os << row.name;
    for (const auto& cell : row.cells) {
      os << "," << (std::isfinite(cell.mean_psnr) ? std::to_string(cell.mean_psnr) : "inf")
         << "," << cell.mean_ssim;
    }
    os << "\n";
  }
  return os.str();
}

std::string methods_markdown(const std::vector<MethodResult>& rows) {
  std::ostringstream os;
  os << "| Method |";
  if (!rows.empty())
    for (const auto& cell : rows[0].cells)
      os << " " << cell.dim_factor << "x PSNR | " << cell.dim_factor << "x SSIM |";
  os << "\n|---|";
  if (!rows.empty())
    for (size_t i = 0; i < rows[0].cells.size(); ++i) os << "---|---|";
  os << "\n";

  // best per column gets bolded
  const size_t ncol = rows.empty() ? 0 : rows[0].cells.size();
  std::vector<size_t> best_psnr(ncol, 0), best_ssim(ncol, 0);
  for (size_t c = 0; c < ncol; ++c)
    for (size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].cells[c].mean_psnr > rows[best_psnr[c]].cells[c].mean_psnr) best_psnr[c] = r;
      if (rows[r].cells[c].mean_ssim > rows[best_ssim[c]].cells[c].mean_ssim) best_ssim[c] = r;
    }
  for (size_t r = 0; r < rows.size(); ++r) {
    os << "| " << rows[r].name << " |";
    for (size_t c = 0; c < ncol; ++c) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.2f dB", rows[r].cells[c].mean_psnr);
      os << (best_psnr[c] == r ? " **" : " ") << buf << (best_psnr[c] == r ? "** |" : " |");
      std::snprintf(buf, sizeof(buf), "%.4f", rows[r].cells[c].mean_ssim);
      os << (best_ssim[c] == r ? " **" : " ") << buf << (best_ssim[c] == r ? "** |" : " |");
    }
    os << "\n";
  }
  return os.str();
}

std::string curve_csv(const std::vector<MisalignPoint>& points) {
  std::ostringstream os;
  os << "target_displacement,achieved_displacement,mean_psnr\n";
  for (const auto& p : points)
    os << p.target << "," << p.achieved << "," << p.mean_psnr << "\n";
  return os.str();
}

void save_triptychs(const std::string& dir, const Model& model, const EvalProtocol& protocol,
                    const Dataset& scenes, int count) {
  std::filesystem::create_directories(dir);
  // locate the misalignment dimming in the sweep, else use it directly
  int dim_index = 0;
  for (size_t i = 0; i < protocol.dim_factors.size(); ++i)
    if (protocol.dim_factors[i] == protocol.misalignment_dim) dim_index = static_cast<int>(i);

  for (int i = 0; i < count; ++i) {
    SamplePair s = sweep_sample(protocol, scenes, i, dim_index, protocol.misalignment_dim);
    Image out = model.denoise(s);
    const Image panels[4] = {render_srgb(s.x_nf, s.render), render_srgb(s.x_f, s.render),
                             render_srgb(out, s.render), render_srgb(s.y, s.render)};
    const int h = s.y.dim(0), w = s.y.dim(1);
    Image strip({h, 4 * w, 3});
    for (int p = 0; p < 4; ++p)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < 3; ++c) strip.at(y, p * w + x, c) = panels[p].at(y, x, c);
    char name[64];
    std::snprintf(name, sizeof(name), "/triptych_%03d.png", i);
    save_png(dir + name, strip, 8);
  }
}

}  // namespace fnf
