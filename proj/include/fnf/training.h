#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fnf/loss.h"
#include "fnf/network.h"
#include "fnf/simulation.h"

namespace fnf {

// Loss between prediction and target, both rendered to display space first.
inline float compute_loss(const Image& pred, const Image& target, const RenderParams& rp,
                          float eta) {
  return pair_loss<float>(pred, target, rp, eta);
}

struct TrainConfig {
  double lr_init = 1e-4;
  double lr_drop_factor = 0.1;
  int max_drops = 2;
  double eta = 1.0;
  int batch_size = 1;
  int max_steps = 20000;
  int val_interval = 500;  // steps between validations; 0 disables validation
  int patience = 3;        // validations without improvement before an lr drop
  uint64_t seed = 0;
  int checkpoint_interval = 5000;

  void validate() const;
};

// Training/validation data. Either a pool of clean scene pairs with per-step
// random (dim, noise, shake) draws, or a fixed set of materialized samples
// (single-sample overfit runs, regression tests).
class Dataset {
 public:
  static Dataset procedural(int n_scenes, uint64_t seed, int crop, SimConfig sim);
  static Dataset from_scenes(std::vector<std::pair<Image, Image>> scenes, SimConfig sim);
  static Dataset fixed(std::vector<SamplePair> samples);

  bool is_fixed() const { return !fixed_.empty(); }
  size_t size() const { return is_fixed() ? fixed_.size() : scenes_.size(); }
  const SimConfig& sim() const { return sim_; }
  const std::vector<std::pair<Image, Image>>& scenes() const { return scenes_; }

  // Deterministic draw: the stream id fully determines the sample.
  SamplePair sample(uint64_t stream) const;

 private:
  std::vector<std::pair<Image, Image>> scenes_;  // (ambient, flash_only)
  std::vector<SamplePair> fixed_;
  SimConfig sim_;
};

struct HistoryEntry {
  int64_t step;  // number of completed updates
  double lr;
  double train_loss;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double val_psnr = std::numeric_limits<double>::quiet_NaN();
};

struct TrainState {
  int64_t step = 0;
  double lr = 1e-4;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int patience_count = 0;
  int drops_done = 0;
};

struct TrainResult {
  std::vector<HistoryEntry> history;
  TrainState final_state;
};

// Adam training with validation-driven learning-rate drops. Deterministic
// given (weights seed, TrainConfig::seed, thread count): sample streams are
// derived from (seed, step), so runs and resumed runs are bit-reproducible.
class Trainer {
 public:
  Trainer(Model& model, TrainConfig tc);

  // Resumes optimizer state and step counter from a checkpoint directory.
  void load_state(const std::string& checkpoint_dir);
  void save_checkpoint(const std::string& dir) const;

  const TrainState& state() const { return state_; }

  // Runs until TrainConfig::max_steps. When out_dir is nonempty, writes a
  // JSON-lines log (log.jsonl) and periodic checkpoints there. Aborts with a
  // diagnostic checkpoint on a non-finite loss.
  TrainResult run(const Dataset& train_data, const Dataset& val_data,
                  const std::string& out_dir = "");

 private:
  double step_once(const Dataset& train_data);  // one optimizer update
  std::pair<double, double> validate(const std::vector<SamplePair>& val_samples) const;

  Model& model_;
  TrainConfig tc_;
  TrainState state_;
  std::vector<Tensor<float>> adam_m_, adam_v_;
};

}  // namespace fnf
