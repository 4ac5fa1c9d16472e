#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fnf/graph.h"
#include "fnf/kernel_engine.h"
#include "fnf/simulation.h"
#include "fnf/tensor.h"

namespace fnf {

enum class Variant { ours, single_image, direct_prediction, kpn };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

// Architecture hyperparameters. The encoder downsamples by 32, so inputs
// must have both dimensions >= 32 and divisible by 32.
struct NetworkConfig {
  int basis_count = 90;   // J
  int kernel_size = 15;   // K
  int upsample = 4;       // d
  int base_channels = 64;
  Variant variant = Variant::ours;
  Reference reference = Reference::noflash;
  bool use_basis_b = true;

  int input_channels() const { return variant == Variant::single_image ? 6 : 12; }
  bool has_basis() const {
    return variant == Variant::ours || variant == Variant::single_image;
  }
  int head_channels() const;
  void validate() const;
};

// Name-indexed float32 parameter collection. Entry order is the canonical
// parameter order used by the optimizer and checkpoints.
struct ModelWeights {
  std::vector<std::pair<std::string, Tensor<float>>> entries;

  int64_t param_count() const;
  Tensor<float>& find(const std::string& name);
  const Tensor<float>& find(const std::string& name) const;
};

// Handles into a built forward graph. `params` is aligned with
// ModelWeights::entries.
template <typename T>
struct ForwardHandles {
  std::vector<Value<T>> params;
  Value<T> output;                 // (H, W, 3) denoised linear estimate
  Value<T> basis_a, basis_b;       // (J, K, K, 3); invalid without a basis head
  Value<T> coeffs, scale_map;      // per-pixel fields; invalid when unused
};

// Network inputs as plain tensors: the stacked per-pixel encoding fed to the
// encoder, plus the raw noisy images consumed by the filtering stage.
template <typename T>
struct NetInputs {
  Tensor<T> stacked;  // (H, W, 12) pair variants, (H, W, 6) single image
  Tensor<T> x_nf;
  Tensor<T> x_f;
};

// Channel order: [x_nf rgb, x_f rgb, noise_nf rgb, noise_f rgb]; the single
// image variant keeps only [x_nf rgb, noise_nf rgb].
Tensor<float> build_input(const SamplePair& s, const NetworkConfig& cfg);

template <typename T>
NetInputs<T> net_inputs(const SamplePair& s, const NetworkConfig& cfg);

class Model {
 public:
  Model(NetworkConfig cfg, uint64_t init_seed);

  const NetworkConfig& config() const { return config_; }
  ModelWeights& weights() { return weights_; }
  const ModelWeights& weights() const { return weights_; }
  int64_t param_count() const { return weights_.param_count(); }

  // Builds the forward pass for one sample. Weight values are copied into
  // the graph, so a graph outlives any later weight updates.
  template <typename T>
  ForwardHandles<T> build(Graph<T>& graph, const NetInputs<T>& in) const;

  Image denoise(const SamplePair& s) const;

  // variant=ours only: the predicted basis and per-pixel fields.
  std::pair<KernelBasis, PredictionFields> predict_fields(const SamplePair& s) const;

  // Checkpoint directory: config.json plus params.bin (name-indexed f32
  // container). extra_json, when nonempty, is merged into config.json.
  void save(const std::string& dir, const std::string& extra_json = "") const;
  static Model load(const std::string& dir);

 private:
  struct NoInit {};
  Model(NetworkConfig cfg, NoInit);

  NetworkConfig config_;
  ModelWeights weights_;
};

}  // namespace fnf
