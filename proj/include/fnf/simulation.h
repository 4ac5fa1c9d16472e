#pragma once

#include <string>

#include "fnf/image.h"
#include "fnf/io.h"
#include "fnf/rng.h"
#include "fnf/tensor.h"

namespace fnf {

// Read/shot noise levels in linear intensity units; per-pixel variance is
// sigma_r^2 + sigma_s^2 * x.
struct NoiseParams {
  double sigma_r = 1e-3;
  double sigma_s = 0.0;

  NoiseParams() = default;
  NoiseParams(double r, double s);

  double stddev(double x) const {
    return std::sqrt(sigma_r * sigma_r + sigma_s * sigma_s * std::max(0.0, x));
  }
};

enum class Reference { noflash, flash };

std::string to_string(Reference r);
Reference reference_from_string(const std::string& s);

// One training/evaluation example. y is noise-free and aligned with the
// reference input; the other input is misaligned by `homography`.
struct SamplePair {
  Image x_f, x_nf;                    // noisy inputs (not clipped)
  Image noise_map_f, noise_map_nf;    // per-pixel noise stddev of each input
  Image y;                            // clean dimmed ambient, reference frame
  RenderParams render;
  NoiseParams noise;
  Homography homography;
  Reference reference = Reference::noflash;
  double dim_factor = 1.0;
};

// Sampling ranges for the synthetic camera shake between the two captures.
struct ShakeRanges {
  double rot_deg = 0.5;        // 3D rotation, +/- per axis
  double scale_lo = 0.98;
  double scale_hi = 1.02;
  double trans_px = 2.0;       // per-axis translation magnitude in [0, trans_px]

  ShakeRanges scaled(double f) const {
    return {rot_deg * f, 1.0 - (1.0 - scale_lo) * f, 1.0 + (scale_hi - 1.0) * f,
            trans_px * f};
  }
};

struct SimConfig {
  double dim_lo = 2.0, dim_hi = 50.0;                       // log-uniform
  double log10_sigma_r_lo = -3.0, log10_sigma_r_hi = -2.0;  // log10 sigma_r
  double log10_sigma_s_lo = -4.0, log10_sigma_s_hi = -2.6;  // log10 sigma_s
  ShakeRanges shake;
  Reference reference = Reference::noflash;
  int crop = 440;
};

// Procedural stand-in for captured ambient / flash-only pairs: a shared
// albedo field (smooth gradients, textured rectangles and ellipses,
// high-frequency texture) under (a) a colored low-frequency ambient shading
// field and (b) a bright center-weighted flash falloff with hard cast
// shadows. Both outputs are in [0, 1] and deterministic given the seed.
void generate_scene(uint64_t seed, int height, int width, Image& ambient,
                    Image& flash_only);

// clean_nf = ambient / dim_factor; clean_f = 2 * flash_only + clean_nf.
void compose_pair(const Image& ambient, const Image& flash_only, double dim_factor,
                  Image& clean_nf, Image& clean_f);

// Random projective warp from a 90-degree-FOV camera: 3D rotation uniform in
// +/- rot_deg per axis (applied about the optical axis through the image
// center), then 2D scale about the center, then 2D translation with per-axis
// magnitude uniform in [0, trans_px] and random sign.
Homography sample_homography(Rng& rng, int height, int width, const ShakeRanges& ranges);

// Heteroscedastic Gaussian noise with variance sigma_r^2 + sigma_s^2 * x,
// using the clean intensities. Output is not clipped. Throws if the input has
// negative pixels.
Image add_noise(const Image& img, const NoiseParams& np, Rng& rng);

// sqrt(sigma_r^2 + sigma_s^2 * max(0, x)) from observed (noisy) intensities.
Image noise_stddev_map(const Image& noisy_img, const NoiseParams& np);

// Full synthesis pipeline: compose, warp, corrupt, package. The flash-side
// content carries the warp; with reference=flash the ground truth is warped
// along with it so it stays aligned to the reference input, and the no-flash
// input is the misaligned one.
SamplePair make_sample(const Image& ambient, const Image& flash_only, double dim_factor,
                       const NoiseParams& np, const Homography& h, Reference reference,
                       Rng& rng, const RenderParams* render_base = nullptr);

// Draws (dim, noise, shake) from config ranges and assembles a sample.
SamplePair draw_sample(const Image& ambient, const Image& flash_only,
                       const SimConfig& config, Rng& rng,
                       const RenderParams* render_base = nullptr);

// Sample cache container (sample_<seed>.npzlike files).
Container sample_to_container(const SamplePair& s);
SamplePair sample_from_container(const Container& c);
void save_sample(const std::string& path, const SamplePair& s);
SamplePair load_sample(const std::string& path);

// Checks the packaging contracts of a sample; returns a human-readable list
// of violations (empty when valid).
std::vector<std::string> validate_sample(const SamplePair& s);

}  // namespace fnf
