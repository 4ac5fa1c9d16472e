#pragma once

#include <string>
#include <vector>

#include "fnf/network.h"
#include "fnf/training.h"

namespace fnf {

// Benchmark protocol: dimming sweep at a fixed noise level, misalignment
// sweep, and side-by-side method comparison. All draws derive from `seed`,
// so results are deterministic given (weights, protocol).
struct EvalProtocol {
  std::vector<double> dim_factors{100.0, 50.0, 25.0, 12.5};
  double log10_sigma_r = -2.6;
  double log10_sigma_s = -3.6;
  int n_images = 64;
  std::vector<double> displacement_bins{0, 2, 5, 10, 15, 20};
  Reference reference = Reference::noflash;
  uint64_t seed = 1;
  int crop = 128;
  double misalignment_dim = 50.0;  // dimming used for the misalignment sweep

  NoiseParams noise() const {
    return NoiseParams(std::pow(10.0, log10_sigma_r), std::pow(10.0, log10_sigma_s));
  }
};

struct SweepCell {
  double dim_factor;
  double mean_psnr;
  double mean_ssim;
};

struct MethodResult {
  std::string name;
  std::vector<SweepCell> cells;  // aligned with protocol.dim_factors
};

struct MisalignPoint {
  double target;    // requested mean Manhattan displacement
  double achieved;  // measured over the homographies actually used
  double mean_psnr;
};

// Per-image homography used by the dimming sweep (shared across models and
// dim factors so comparisons see identical inputs).
Homography sweep_homography(const EvalProtocol& protocol, int image_index, int height,
                            int width);

// Assembles the evaluation sample for one (image, dim factor) cell.
SamplePair sweep_sample(const EvalProtocol& protocol, const Dataset& scenes,
                        int image_index, int dim_index, double dim_factor);

// PSNR/SSIM averaged over the eval set, per dimming factor.
MethodResult eval_sweep(const Model& model, const EvalProtocol& protocol,
                        const Dataset& scenes, const std::string& name = "");

// Runs the dimming sweep for several models on identical draws.
std::vector<MethodResult> compare_methods(const std::vector<const Model*>& models,
                                          const EvalProtocol& protocol, const Dataset& scenes);

// PSNR as a function of mean displacement. Shake ranges are rescaled per bin
// to hit each requested mean displacement within 10%.
std::vector<MisalignPoint> eval_misalignment(const Model& model, const EvalProtocol& protocol,
                                             const Dataset& scenes);

// Finds the range-scale factor whose mean displacement over the bin's
// homography draws matches `target`.
double calibrate_shake_scale(const EvalProtocol& protocol, double target, int bin_index,
                             int height, int width, double tolerance = 0.01);

std::string methods_csv(const std::vector<MethodResult>& rows);
std::string methods_markdown(const std::vector<MethodResult>& rows);
std::string curve_csv(const std::vector<MisalignPoint>& points);

// Qualitative strips [x_nf | x_f | output | ground truth], rendered, for the
// first `count` eval images at the protocol's misalignment dimming.
void save_triptychs(const std::string& dir, const Model& model, const EvalProtocol& protocol,
                    const Dataset& scenes, int count);

}  // namespace fnf
