#include <Eigen/Core>
#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "fnf/config.h"
#include "fnf/evaluation.h"
#include "fnf/io.h"
#include "fnf/manifest.h"
#include "fnf/network.h"
#include "fnf/simulation.h"
#include "fnf/training.h"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace fnf;

namespace {

constexpr uint64_t kSimTag = 0x51e7a9ull;

struct CommonOpts {
  std::string config_path;
  std::string preset;
  int threads = 0;
};

AppConfig resolve_config(const CommonOpts& common) {
  AppConfig cfg = common.preset.empty() ? AppConfig{} : make_preset(common.preset);
  if (!common.config_path.empty()) cfg = load_app_config(common.config_path, cfg);
  return cfg;
}

std::string format_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d", i);
  return buf;
}

Image center_crop(const Image& img, int crop) {
  const int h = img.dim(0), w = img.dim(1);
  if (h < crop || w < crop)
    throw UsageError("image " + std::to_string(w) + "x" + std::to_string(h) +
                     " is smaller than the configured crop " + std::to_string(crop));
  if (h == crop && w == crop) return img;
  const int y0 = (h - crop) / 2, x0 = (w - crop) / 2;
  Image out({crop, crop, 3});
  for (int y = 0; y < crop; ++y)
    for (int x = 0; x < crop; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

Dataset load_scene_dataset(const std::string& dir, const SimConfig& sim) {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) ids.push_back(entry.path().filename().string());
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw UsageError("no scene directories under " + dir);

  std::vector<std::pair<Image, Image>> scenes;
  scenes.reserve(ids.size());
  for (const auto& id : ids) {
    const std::string base = dir + "/" + id;
    Image ambient = center_crop(load_png(base + "/ambient.png"), sim.crop);
    Image flash_only = center_crop(load_png(base + "/flash_only.png"), sim.crop);
    scenes.emplace_back(std::move(ambient), std::move(flash_only));
  }
  return Dataset::from_scenes(std::move(scenes), sim);
}

// ---------------------------------------------------------------------------

int run_simulate(const CommonOpts& common, const std::string& out_dir,
                 const std::string& split, int n, uint64_t seed) {
  AppConfig cfg = resolve_config(common);
  RunManifest manifest;
  manifest.command = "simulate";
  manifest.config_json = app_config_json(cfg);
  manifest.seed = seed;
  manifest.started_at = iso8601_utc_now();

  const std::string split_dir = out_dir + "/" + split;
  fs::create_directories(split_dir);
  for (int i = 0; i < n; ++i) {
    const uint64_t scene_seed = mix64(seed, static_cast<uint64_t>(i));
    const uint64_t stream = mix64(mix64(seed, kSimTag), static_cast<uint64_t>(i));
    Image ambient, flash_only;
    generate_scene(scene_seed, cfg.sim.crop, cfg.sim.crop, ambient, flash_only);

    Rng rng(stream);
    SamplePair sample = draw_sample(ambient, flash_only, cfg.sim, rng);

    const std::string id_dir = split_dir + "/" + format_id(i);
    fs::create_directories(id_dir);
    ImageMeta scene_meta;  // clean, unwarped, identity rendering
    save_image(id_dir + "/ambient.png", ambient, scene_meta);
    save_image(id_dir + "/flash_only.png", flash_only, scene_meta);
    save_sample(id_dir + "/sample_" + std::to_string(stream) + ".npzlike", sample);

    nlohmann::json meta;
    meta["id"] = i;
    meta["scene_seed"] = scene_seed;
    meta["sample_stream"] = stream;
    meta["dim_factor"] = sample.dim_factor;
    meta["sigma_r"] = sample.noise.sigma_r;
    meta["sigma_s"] = sample.noise.sigma_s;
    meta["reference"] = to_string(sample.reference);
    meta["gain"] = sample.render.gain;
    meta["homography"] = sample.homography.m;
    std::ofstream os(id_dir + "/meta.json");
    os << meta.dump(2) << "\n";
  }

  manifest.finished_at = iso8601_utc_now();
  write_manifest(out_dir + "/manifest.json", manifest);
  std::cout << "wrote " << n << " samples to " << split_dir << "\n";
  return 0;
}

int run_validate(const std::string& dir) {
  int checked = 0, bad = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("sample_", 0) != 0 || entry.path().extension() != ".npzlike") continue;
    ++checked;
    SamplePair sample = load_sample(entry.path().string());
    auto problems = validate_sample(sample);
    if (!problems.empty()) {
      ++bad;
      for (const auto& p : problems)
        std::cerr << entry.path().string() << ": " << p << "\n";
    }
  }
  if (checked == 0) throw UsageError("no sample_*.npzlike files under " + dir);
  std::cout << "validated " << checked << " samples, " << bad << " invalid\n";
  if (bad > 0) throw std::runtime_error("dataset validation failed");
  return 0;
}

// ---------------------------------------------------------------------------

int run_train(AppConfig cfg, const std::string& data_dir, const std::string& out_dir,
              const std::string& resume_dir, int fixed_samples, bool procedural) {
  cfg.sim.reference = cfg.network.reference;  // one switch drives both

  Dataset train_data = [&] {
    if (procedural)
      return Dataset::procedural(cfg.n_train_scenes, mix64(cfg.train.seed, 0xda7a11ull),
                                 cfg.sim.crop, cfg.sim);
    return load_scene_dataset(data_dir + "/train", cfg.sim);
  }();
  Dataset val_data = [&]() -> Dataset {
    if (procedural)
      return Dataset::procedural(cfg.n_val_scenes, mix64(cfg.train.seed, 0x7a1da7aull),
                                 cfg.sim.crop, cfg.sim);
    if (fs::exists(data_dir + "/val")) return load_scene_dataset(data_dir + "/val", cfg.sim);
    std::cerr << "warning: no val split under " << data_dir
              << ", validating on training scenes\n";
    return load_scene_dataset(data_dir + "/train", cfg.sim);
  }();

  if (fixed_samples > 0) {
    std::vector<SamplePair> samples;
    for (int i = 0; i < fixed_samples; ++i)
      samples.push_back(train_data.sample(mix64(mix64(cfg.train.seed, 0xf17edull),
                                                static_cast<uint64_t>(i))));
    train_data = Dataset::fixed(std::move(samples));
  }

  RunManifest manifest;
  manifest.command = "train";
  manifest.config_json = app_config_json(cfg);
  manifest.seed = cfg.train.seed;
  manifest.started_at = iso8601_utc_now();
  fs::create_directories(out_dir);

  Model model = resume_dir.empty() ? Model(cfg.network, cfg.train.seed)
                                   : Model::load(resume_dir);
  Trainer trainer(model, cfg.train);
  if (!resume_dir.empty()) {
    trainer.load_state(resume_dir);
    std::cout << "resuming from step " << trainer.state().step << "\n";
  }
  std::cout << "training variant=" << to_string(model.config().variant)
            << " params=" << model.param_count() << " steps=" << cfg.train.max_steps << "\n";
  TrainResult result = trainer.run(train_data, val_data, out_dir);

  manifest.finished_at = iso8601_utc_now();
  write_manifest(out_dir + "/manifest.json", manifest);
  if (!result.history.empty())
    std::cout << "final train loss " << result.history.back().train_loss << " after "
              << result.final_state.step << " steps\n";
  return 0;
}

// ---------------------------------------------------------------------------

int run_denoise(const std::string& weights_dir, const std::string& flash_path,
                const std::string& noflash_path, const std::string& out_path, double sigma_r,
                double sigma_s, double gain, bool dump_intermediates) {
  Model model = Model::load(weights_dir);

  auto [x_f, meta_f] = load_image(flash_path);
  auto [x_nf, meta_nf] = load_image(noflash_path);
  if (!x_f.same_shape(x_nf)) throw UsageError("flash and no-flash images differ in size");
  const int h = x_nf.dim(0), w = x_nf.dim(1);
  if (h < 32 || w < 32 || h % 32 != 0 || w % 32 != 0)
    throw UsageError("image dimensions must be >= 32 and divisible by 32");

  if (sigma_r <= 0) sigma_r = meta_nf.sigma_r;
  if (sigma_s < 0) sigma_s = meta_nf.sigma_s;
  if (sigma_r <= 0)
    throw UsageError("sigma_r unknown: pass --sigma-r or provide it in the sidecar");
  NoiseParams np(sigma_r, sigma_s);

  SamplePair sample;
  sample.x_f = std::move(x_f);
  sample.x_nf = std::move(x_nf);
  sample.noise_map_f = noise_stddev_map(sample.x_f, np);
  sample.noise_map_nf = noise_stddev_map(sample.x_nf, np);
  sample.y = Image({h, w, 3});
  sample.noise = np;
  sample.render = meta_nf.render;
  if (gain > 0) sample.render.gain = static_cast<float>(gain);
  sample.dim_factor = sample.render.gain;

  Image linear_out;
  if (dump_intermediates) {
    if (model.config().variant != Variant::ours)
      throw UsageError("--dump-intermediates requires a two-decoder (ours) checkpoint");
    auto [basis, fields] = model.predict_fields(sample);
    Image filtered = filter_fast(sample.x_nf, basis, fields.coeffs);
    linear_out = apply_scale_map(filtered, fields.scale_map);

    const std::string stem = out_path.substr(0, out_path.rfind('.'));
    Container dump_f, dump_g;
    dump_f.put("filtered", filtered);
    dump_f.save(stem + "_filtered.npzlike");
    dump_g.put("scale_map", fields.scale_map);
    dump_g.save(stem + "_scale_map.npzlike");
    save_png(stem + "_filtered.png", render_srgb(filtered, sample.render), 8);
    Image scale_vis = fields.scale_map;
    for (int64_t i = 0; i < scale_vis.size(); ++i) scale_vis.data()[i] *= 0.5f;
    save_png(stem + "_scale_map.png", scale_vis, 8);
  } else {
    linear_out = model.denoise(sample);
  }

  Image rendered = render_srgb(linear_out, sample.render);
  ImageMeta out_meta;
  out_meta.render = sample.render;
  out_meta.sigma_r = sigma_r;
  out_meta.sigma_s = sigma_s;
  save_image(out_path, rendered, out_meta);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int run_benchmark(const CommonOpts& common, const std::vector<std::string>& weight_dirs,
                  const std::string& out_dir, const std::string& protocol_path,
                  bool misalignment, bool reference_ablation, int triptychs,
                  const std::string& data_dir, int64_t seed_override) {
  EvalProtocol protocol;
  if (!protocol_path.empty()) protocol = load_protocol(protocol_path, protocol);
  if (seed_override >= 0) protocol.seed = static_cast<uint64_t>(seed_override);

  std::vector<Model> models;
  models.reserve(weight_dirs.size());
  for (const auto& dir : weight_dirs) models.push_back(Model::load(dir));

  // run id from the effective protocol and the weight blobs
  std::string hash_src = protocol_json(protocol);
  for (const auto& dir : weight_dirs) hash_src += blob_hash(dir + "/params.bin");
  const std::string run_id = sha1_hex(hash_src.data(), hash_src.size()).substr(0, 12);
  const std::string run_dir = out_dir + "/" + run_id;
  fs::create_directories(run_dir);

  RunManifest manifest;
  manifest.command = "benchmark";
  manifest.config_json = protocol_json(protocol);
  manifest.seed = protocol.seed;
  for (const auto& dir : weight_dirs)
    manifest.inputs.emplace_back(dir + "/params.bin", blob_hash(dir + "/params.bin"));
  manifest.started_at = iso8601_utc_now();

  SimConfig eval_sim;
  eval_sim.crop = protocol.crop;
  Dataset scenes = data_dir.empty()
                       ? Dataset::procedural(protocol.n_images,
                                             mix64(protocol.seed, 0x7e57ull), protocol.crop,
                                             eval_sim)
                       : load_scene_dataset(data_dir + "/test", eval_sim);

  auto write_text = [](const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << text;
  };

  if (reference_ablation) {
    if (models.size() != 2 ||
        models[0].config().reference == models[1].config().reference)
      throw UsageError(
          "--reference-ablation needs two checkpoints, one per reference frame");
    std::vector<MethodResult> rows;
    for (const Model& m : models) {
      EvalProtocol p = protocol;
      p.reference = m.config().reference;
      rows.push_back(eval_sweep(m, p, scenes, to_string(m.config().reference) + "_reference"));
    }
    write_text(run_dir + "/reference_ablation.csv", methods_csv(rows));
    write_text(run_dir + "/reference_ablation.md", methods_markdown(rows));
  }

  std::vector<const Model*> model_ptrs;
  for (const auto& m : models) model_ptrs.push_back(&m);
  std::vector<MethodResult> rows = compare_methods(model_ptrs, protocol, scenes);
  write_text(run_dir + "/table.csv", methods_csv(rows));
  write_text(run_dir + "/table.md", methods_markdown(rows));

  if (misalignment) {
    auto curve = eval_misalignment(models[0], protocol, scenes);
    write_text(run_dir + "/curve.csv", curve_csv(curve));
  }
  if (triptychs > 0) save_triptychs(run_dir, models[0], protocol, scenes, triptychs);

  manifest.finished_at = iso8601_utc_now();
  write_manifest(run_dir + "/manifest.json", manifest);
  std::cout << methods_markdown(rows) << "\nresults in " << run_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int run_export_kernels(const std::string& weights_dir, const std::string& sample_path,
                       const std::string& out_dir, const std::vector<std::string>& pixels) {
  Model model = Model::load(weights_dir);
  if (model.config().variant != Variant::ours)
    throw UsageError("kernel export requires a two-decoder (ours) checkpoint");
  SamplePair sample = load_sample(sample_path);
  auto [basis, fields] = model.predict_fields(sample);

  fs::create_directories(out_dir);
  save_kernel_field(out_dir + "/kernels.kdump", basis, fields.coeffs);

  for (const auto& spec : pixels) {
    int px = 0, py = 0;
    if (std::sscanf(spec.c_str(), "%d,%d", &px, &py) != 2)
      throw UsageError("--pixel expects 'x,y', got '" + spec + "'");
    if (px < 0 || px >= fields.coeffs.dim(1) || py < 0 || py >= fields.coeffs.dim(0))
      throw UsageError("--pixel " + spec + " outside the image");

    const int e = basis.footprint();
    Tensor<float> combined({e, e, 3});
    for (int j = 0; j < basis.count(); ++j) {
      Tensor<float> eff = effective_kernel(basis, j);
      const float c = fields.coeffs.at(py, px, j);
      for (int64_t i = 0; i < combined.size(); ++i)
        combined.data()[i] += c * eff.data()[i];
    }
    float lo = combined.data()[0], hi = combined.data()[0];
    for (int64_t i = 0; i < combined.size(); ++i) {
      lo = std::min(lo, combined.data()[i]);
      hi = std::max(hi, combined.data()[i]);
    }
    const float range = hi - lo > 0 ? hi - lo : 1.0f;
    for (int64_t i = 0; i < combined.size(); ++i)
      combined.data()[i] = (combined.data()[i] - lo) / range;
    save_png(out_dir + "/kernel_x" + std::to_string(px) + "_y" + std::to_string(py) + ".png",
             combined, 8);
  }
  std::cout << "kernel field written to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flash/no-flash pair denoising toolkit"};
  app.require_subcommand(1);
  CommonOpts common;
  app.add_option("--threads", common.threads, "worker threads (default: all cores)");

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "JSON config file");
    cmd->add_option("--preset", common.preset, "config preset: desk or paper");
  };

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "generate synthetic training data");
  std::string out_dir, split = "train";
  int n = 8;
  uint64_t seed = 0;
  add_common(sim_cmd);
  sim_cmd->add_option("--out", out_dir, "output dataset directory")->required();
  sim_cmd->add_option("--split", split, "dataset split subdirectory");
  sim_cmd->add_option("--n", n, "number of samples");
  sim_cmd->add_option("--seed", seed, "master seed");

  // validate
  auto* val_cmd = app.add_subcommand("validate", "check dataset samples against their contracts");
  std::string val_dir;
  val_cmd->add_option("--dir", val_dir, "dataset directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  std::string data_dir, train_out, resume_dir, variant_flag, reference_flag;
  int fixed_samples = 0, steps_flag = -1, batch_flag = -1;
  int64_t seed_flag = -1;
  bool no_basis_b = false, procedural = false;
  add_common(train_cmd);
  train_cmd->add_option("--data", data_dir, "dataset directory (from `fnf simulate`)");
  train_cmd->add_flag("--procedural", procedural, "generate training scenes on the fly");
  train_cmd->add_option("--out", train_out, "run output directory")->required();
  train_cmd->add_option("--resume", resume_dir, "checkpoint directory to resume from");
  train_cmd->add_option("--variant", variant_flag, "ours|single_image|direct_prediction|kpn");
  train_cmd->add_option("--reference", reference_flag, "geometric reference: noflash|flash");
  train_cmd->add_flag("--no-basis-b", no_basis_b, "disable the coarse kernel term");
  train_cmd->add_option("--steps", steps_flag, "override train.max_steps");
  train_cmd->add_option("--batch-size", batch_flag, "override train.batch_size");
  train_cmd->add_option("--seed", seed_flag, "override train.seed");
  train_cmd->add_option("--fixed-samples", fixed_samples,
                        "train on N materialized samples without re-augmentation");

  // denoise
  auto* den_cmd = app.add_subcommand("denoise", "denoise one flash/no-flash pair");
  std::string weights_dir, flash_path, noflash_path, den_out;
  double sigma_r = -1, sigma_s = -1, gain = -1;
  bool dump_intermediates = false;
  den_cmd->add_option("--weights", weights_dir, "checkpoint directory")->required();
  den_cmd->add_option("--flash", flash_path, "flash PNG")->required();
  den_cmd->add_option("--noflash", noflash_path, "no-flash PNG")->required();
  den_cmd->add_option("--out", den_out, "output PNG")->required();
  den_cmd->add_option("--sigma-r", sigma_r, "read noise stddev (default: sidecar)");
  den_cmd->add_option("--sigma-s", sigma_s, "shot noise factor (default: sidecar)");
  den_cmd->add_option("--gain", gain, "render gain (default: sidecar)");
  den_cmd->add_flag("--dump-intermediates", dump_intermediates,
                    "also write the filtered image and scale map");

  // benchmark
  auto* bench_cmd = app.add_subcommand("benchmark", "evaluate checkpoints");
  std::vector<std::string> bench_weights;
  std::string bench_out, protocol_path, bench_data;
  bool misalignment = false, reference_ablation = false;
  int triptychs = 0;
  int64_t bench_seed = -1;
  bench_cmd->add_option("--weights", bench_weights, "checkpoint directories")->required();
  bench_cmd->add_option("--out", bench_out, "results directory")->required();
  bench_cmd->add_option("--protocol", protocol_path, "protocol JSON");
  bench_cmd->add_option("--data", bench_data, "dataset directory (test split)");
  bench_cmd->add_option("--seed", bench_seed, "override protocol seed");
  bench_cmd->add_flag("--misalignment", misalignment, "also run the displacement sweep");
  bench_cmd->add_flag("--reference-ablation", reference_ablation,
                      "two checkpoints: flash- vs noflash-reference comparison");
  bench_cmd->add_option("--triptychs", triptychs, "write N qualitative strips");

  // export-kernels
  auto* kern_cmd = app.add_subcommand("export-kernels", "dump the predicted kernel field");
  std::string kern_weights, kern_sample, kern_out;
  std::vector<std::string> kern_pixels;
  kern_cmd->add_option("--weights", kern_weights, "checkpoint directory")->required();
  kern_cmd->add_option("--sample", kern_sample, "sample_*.npzlike input")->required();
  kern_cmd->add_option("--out", kern_out, "output directory")->required();
  kern_cmd->add_option("--pixel", kern_pixels, "x,y pixel to visualize (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (common.threads > 0) {
    omp_set_num_threads(common.threads);
    Eigen::setNbThreads(common.threads);
  }

  try {
    if (*sim_cmd) return run_simulate(common, out_dir, split, n, seed);
    if (*val_cmd) return run_validate(val_dir);
    if (*train_cmd) {
      if (data_dir.empty() && !procedural)
        throw UsageError("train needs --data DIR or --procedural");
      // flags layer on top of preset and config file
      AppConfig cfg = resolve_config(common);
      nlohmann::json j;
      if (!variant_flag.empty()) j["network"]["variant"] = variant_flag;
      if (!reference_flag.empty()) j["network"]["reference"] = reference_flag;
      if (no_basis_b) j["network"]["use_basis_b"] = false;
      if (steps_flag >= 0) j["train"]["max_steps"] = steps_flag;
      if (batch_flag > 0) j["train"]["batch_size"] = batch_flag;
      if (seed_flag >= 0) j["train"]["seed"] = seed_flag;
      if (!j.empty()) merge_app_config_json(cfg, j.dump(), "flags");
      return run_train(cfg, data_dir, train_out, resume_dir, fixed_samples, procedural);
    }
    if (*den_cmd)
      return run_denoise(weights_dir, flash_path, noflash_path, den_out, sigma_r, sigma_s,
                         gain, dump_intermediates);
    if (*bench_cmd)
      return run_benchmark(common, bench_weights, bench_out, protocol_path, misalignment,
                           reference_ablation, triptychs, bench_data, bench_seed);
    if (*kern_cmd) return run_export_kernels(kern_weights, kern_sample, kern_out, kern_pixels);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
