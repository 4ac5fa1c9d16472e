#include "fnf/training.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "fnf/io.h"
#include "json.hpp"

namespace fnf {

namespace {
constexpr uint64_t kTrainTag = 0x7261117ull;
constexpr uint64_t kValTag = 0x0a11daull;
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
}  // namespace

void TrainConfig::validate() const {
  if (!(lr_init > 0)) throw std::invalid_argument("lr_init must be positive");
  if (!(lr_drop_factor > 0 && lr_drop_factor < 1))
    throw std::invalid_argument("lr_drop_factor must be in (0, 1)");
  if (max_drops < 0) throw std::invalid_argument("max_drops must be >= 0");
  if (eta < 0) throw std::invalid_argument("eta must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_steps < 0) throw std::invalid_argument("max_steps must be >= 0");
  if (val_interval < 0) throw std::invalid_argument("val_interval must be >= 0");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
}

// ---------------------------------------------------------------------------
// Dataset

Dataset Dataset::procedural(int n_scenes, uint64_t seed, int crop, SimConfig sim) {
  Dataset ds;
  ds.sim_ = sim;
  ds.sim_.crop = crop;
  ds.scenes_.reserve(static_cast<size_t>(n_scenes));
  for (int i = 0; i < n_scenes; ++i) {
    Image ambient, flash_only;
    generate_scene(mix64(seed, static_cast<uint64_t>(i)), crop, crop, ambient, flash_only);
    ds.scenes_.emplace_back(std::move(ambient), std::move(flash_only));
  }
  return ds;
}

Dataset Dataset::from_scenes(std::vector<std::pair<Image, Image>> scenes, SimConfig sim) {
  if (scenes.empty()) throw std::invalid_argument("dataset needs at least one scene");
  Dataset ds;
  ds.scenes_ = std::move(scenes);
  ds.sim_ = sim;
  return ds;
}

Dataset Dataset::fixed(std::vector<SamplePair> samples) {
  if (samples.empty()) throw std::invalid_argument("dataset needs at least one sample");
  Dataset ds;
  ds.fixed_ = std::move(samples);
  return ds;
}

SamplePair Dataset::sample(uint64_t stream) const {
  Rng rng(stream);
  if (is_fixed()) return fixed_[static_cast<size_t>(rng.uniform_int(static_cast<int>(fixed_.size())))];
  const auto& [ambient, flash_only] =
      scenes_[static_cast<size_t>(rng.uniform_int(static_cast<int>(scenes_.size())))];
  return draw_sample(ambient, flash_only, sim_, rng);
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(Model& model, TrainConfig tc) : model_(model), tc_(tc) {
  tc_.validate();
  state_.lr = tc_.lr_init;
  adam_m_.reserve(model_.weights().entries.size());
  adam_v_.reserve(model_.weights().entries.size());
  for (const auto& [name, t] : model_.weights().entries) {
    adam_m_.push_back(Tensor<float>::zeros_like(t));
    adam_v_.push_back(Tensor<float>::zeros_like(t));
  }
}

double Trainer::step_once(const Dataset& train_data) {
  auto& entries = model_.weights().entries;
  std::vector<Tensor<float>> grads;
  grads.reserve(entries.size());
  for (const auto& [name, t] : entries) grads.push_back(Tensor<float>::zeros_like(t));

  double loss_sum = 0.0;
  for (int b = 0; b < tc_.batch_size; ++b) {
    const uint64_t stream = mix64(mix64(tc_.seed, kTrainTag),
                                  static_cast<uint64_t>(state_.step) * tc_.batch_size + b);
    SamplePair sample = train_data.sample(stream);
    RenderParams rp = sample.render;

    Graph<float> graph;
    auto handles = model_.build(graph, net_inputs<float>(sample, model_.config()));
    Value<float> loss = graph.render_loss(handles.output, sample.y.cast<float>(), rp,
                                          static_cast<float>(tc_.eta));
    loss_sum += graph.val(loss).at(0);
    graph.backward(loss);
    for (size_t i = 0; i < entries.size(); ++i) {
      const Tensor<float>& g = graph.grad(handles.params[i]);
      float* acc = grads[i].data();
      for (int64_t k = 0; k < g.size(); ++k) acc[k] += g.data()[k];
    }
  }

  const double mean_loss = loss_sum / tc_.batch_size;
  if (!std::isfinite(mean_loss)) return mean_loss;

  // Adam update, bias-corrected
  const float inv_batch = 1.0f / static_cast<float>(tc_.batch_size);
  const int64_t t = state_.step + 1;
  const double corr1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
  const double corr2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
  const float lr_t = static_cast<float>(state_.lr * std::sqrt(corr2) / corr1);
  for (size_t i = 0; i < entries.size(); ++i) {
    float* w = entries[i].second.data();
    float* m = adam_m_[i].data();
    float* v = adam_v_[i].data();
    const float* g = grads[i].data();
    const int64_t n = entries[i].second.size();
    for (int64_t k = 0; k < n; ++k) {
      const float gk = g[k] * inv_batch;
      m[k] = static_cast<float>(kBeta1) * m[k] + static_cast<float>(1.0 - kBeta1) * gk;
      v[k] = static_cast<float>(kBeta2) * v[k] + static_cast<float>(1.0 - kBeta2) * gk * gk;
      w[k] -= lr_t * m[k] / (std::sqrt(v[k]) + static_cast<float>(kEps));
    }
  }
  return mean_loss;
}

std::pair<double, double> Trainer::validate(const std::vector<SamplePair>& val_samples) const {
  double loss_sum = 0.0, psnr_sum = 0.0;
  for (const auto& sample : val_samples) {
    Image pred = model_.denoise(sample);
    loss_sum += compute_loss(pred, sample.y, sample.render, static_cast<float>(tc_.eta));
    psnr_sum += psnr(render_srgb(pred, sample.render), render_srgb(sample.y, sample.render));
  }
  const double n = static_cast<double>(val_samples.size());
  return {loss_sum / n, psnr_sum / n};
}

TrainResult Trainer::run(const Dataset& train_data, const Dataset& val_data,
                         const std::string& out_dir) {
  std::ofstream log;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log.open(out_dir + "/log.jsonl", state_.step > 0 ? std::ios::app : std::ios::out);
  }

  // fixed validation draws, identical at every validation pass
  std::vector<SamplePair> val_samples;
  if (tc_.val_interval > 0) {
    for (size_t i = 0; i < val_data.size(); ++i)
      val_samples.push_back(val_data.sample(mix64(mix64(tc_.seed, kValTag), i)));
  }

  TrainResult result;
  result.final_state = state_;
  while (state_.step < tc_.max_steps) {
    const double loss = step_once(train_data);
    if (!std::isfinite(loss)) {
      if (!out_dir.empty()) save_checkpoint(out_dir + "/checkpoint_diverged");
      throw std::runtime_error("training aborted: non-finite loss at step " +
                               std::to_string(state_.step) +
                               (out_dir.empty() ? "" : "; diagnostic checkpoint written"));
    }
    ++state_.step;

    HistoryEntry entry;
    entry.step = state_.step;
    entry.lr = state_.lr;
    entry.train_loss = loss;

    const bool do_val = tc_.val_interval > 0 && !val_samples.empty() &&
                        (state_.step % tc_.val_interval == 0 || state_.step == tc_.max_steps);
    if (do_val) {
      auto [val_loss, val_psnr] = validate(val_samples);
      entry.val_loss = val_loss;
      entry.val_psnr = val_psnr;
      if (val_loss < state_.best_val_loss) {
        state_.best_val_loss = val_loss;
        state_.patience_count = 0;
      } else {
        ++state_.patience_count;
        if (state_.patience_count >= tc_.patience && state_.drops_done < tc_.max_drops) {
          state_.lr *= tc_.lr_drop_factor;
          ++state_.drops_done;
          state_.patience_count = 0;
        }
      }
    }
    result.history.push_back(entry);

    if (log.is_open()) {
      nlohmann::json j;
      j["step"] = entry.step;
      j["lr"] = entry.lr;
      j["train_loss"] = entry.train_loss;
      if (do_val) {
        j["val_loss"] = entry.val_loss;
        j["val_psnr"] = entry.val_psnr;
      }
      log << j.dump() << "\n";
      log.flush();
    }
    if (!out_dir.empty() && tc_.checkpoint_interval > 0 &&
        state_.step % tc_.checkpoint_interval == 0)
      save_checkpoint(out_dir + "/checkpoint");
  }

  if (!out_dir.empty()) save_checkpoint(out_dir + "/checkpoint");
  result.final_state = state_;
  return result;
}

void Trainer::save_checkpoint(const std::string& dir) const {
  nlohmann::json st;
  st["step"] = state_.step;
  st["lr"] = state_.lr;
  st["best_val_loss"] = std::isfinite(state_.best_val_loss)
                            ? nlohmann::json(state_.best_val_loss)
                            : nlohmann::json("inf");
  st["patience_count"] = state_.patience_count;
  st["drops_done"] = state_.drops_done;
  nlohmann::json extra;
  extra["training_state"] = st;
  model_.save(dir, extra.dump());

  Container adam;
  const auto& entries = model_.weights().entries;
  for (size_t i = 0; i < entries.size(); ++i) {
    adam.put("m." + entries[i].first, adam_m_[i]);
    adam.put("v." + entries[i].first, adam_v_[i]);
  }
  adam.save(dir + "/adam.bin");
}

void Trainer::load_state(const std::string& checkpoint_dir) {
  std::ifstream is(checkpoint_dir + "/config.json");
  if (!is) throw std::runtime_error("cannot read " + checkpoint_dir + "/config.json");
  nlohmann::json j = nlohmann::json::parse(is);
  if (!j.contains("training_state"))
    throw std::runtime_error(checkpoint_dir + " has no training state to resume from");
  const auto& st = j["training_state"];
  state_.step = st.at("step").get<int64_t>();
  state_.lr = st.at("lr").get<double>();
  state_.best_val_loss = st.at("best_val_loss").is_string()
                             ? std::numeric_limits<double>::infinity()
                             : st.at("best_val_loss").get<double>();
  state_.patience_count = st.at("patience_count").get<int>();
  state_.drops_done = st.at("drops_done").get<int>();

  Container adam = Container::load(checkpoint_dir + "/adam.bin");
  const auto& entries = model_.weights().entries;
  for (size_t i = 0; i < entries.size(); ++i) {
    adam_m_[i] = adam.get_f32("m." + entries[i].first);
    adam_v_[i] = adam.get_f32("v." + entries[i].first);
    if (!adam_m_[i].same_shape(entries[i].second))
      throw std::runtime_error("optimizer state does not match model parameters");
  }
}

}  // namespace fnf
