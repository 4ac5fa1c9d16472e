#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fnf/config.h"
#include "fnf/evaluation.h"
#include "fnf/kernel_engine.h"
#include "fnf/network.h"
#include "fnf/simulation.h"
#include "fnf/training.h"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace fnf;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const FloatArray& arr) {
  std::vector<int> shape;
  for (py::ssize_t i = 0; i < arr.ndim(); ++i)
    shape.push_back(static_cast<int>(arr.shape(i)));
  Tensor<float> t(shape);
  std::memcpy(t.data(), arr.data(), sizeof(float) * static_cast<size_t>(t.size()));
  return t;
}

py::array_t<float> to_array(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> arr(shape);
  std::memcpy(arr.mutable_data(), t.data(), sizeof(float) * static_cast<size_t>(t.size()));
  return arr;
}

Homography homography_from_array(const py::array_t<double>& m) {
  if (m.ndim() != 2 || m.shape(0) != 3 || m.shape(1) != 3)
    throw std::invalid_argument("homography must be a 3x3 matrix");
  std::array<double, 9> vals;
  auto r = m.unchecked<2>();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) vals[static_cast<size_t>(i * 3 + j)] = r(i, j);
  return Homography::from_matrix(vals);
}

py::array_t<double> homography_to_array(const Homography& h) {
  py::array_t<double> m({3, 3});
  auto w = m.mutable_unchecked<2>();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) w(i, j) = h.m[static_cast<size_t>(i * 3 + j)];
  return m;
}

RenderParams render_params(float gain, std::optional<FloatArray> color_matrix,
                           const std::string& gamma) {
  RenderParams rp;
  rp.gain = gain;
  if (color_matrix) {
    if (color_matrix->size() != 9) throw std::invalid_argument("color_matrix needs 9 floats");
    std::memcpy(rp.color_matrix.data(), color_matrix->data(), 9 * sizeof(float));
  }
  if (gamma == "srgb")
    rp.gamma = Gamma::srgb;
  else if (gamma == "linear")
    rp.gamma = Gamma::linear;
  else
    throw std::invalid_argument("gamma must be 'srgb' or 'linear'");
  return rp;
}

KernelBasis basis_from_arrays(const FloatArray& a, const FloatArray& b, int upsample,
                              bool use_b) {
  KernelBasis basis;
  basis.a = to_tensor(a);
  basis.b = to_tensor(b);
  basis.upsample = upsample;
  basis.use_b = use_b;
  basis.validate();
  return basis;
}

py::dict sample_to_dict(const SamplePair& s) {
  py::dict d;
  d["x_f"] = to_array(s.x_f);
  d["x_nf"] = to_array(s.x_nf);
  d["noise_map_f"] = to_array(s.noise_map_f);
  d["noise_map_nf"] = to_array(s.noise_map_nf);
  d["y"] = to_array(s.y);
  d["gain"] = s.render.gain;
  d["sigma_r"] = s.noise.sigma_r;
  d["sigma_s"] = s.noise.sigma_s;
  d["dim_factor"] = s.dim_factor;
  d["reference"] = to_string(s.reference);
  d["homography"] = homography_to_array(s.homography);
  return d;
}

SamplePair sample_from_dict(const py::dict& d) {
  SamplePair s;
  s.x_f = to_tensor(d["x_f"].cast<FloatArray>());
  s.x_nf = to_tensor(d["x_nf"].cast<FloatArray>());
  s.noise_map_f = to_tensor(d["noise_map_f"].cast<FloatArray>());
  s.noise_map_nf = to_tensor(d["noise_map_nf"].cast<FloatArray>());
  s.y = to_tensor(d["y"].cast<FloatArray>());
  s.render.gain = d["gain"].cast<float>();
  s.noise = NoiseParams(d["sigma_r"].cast<double>(), d["sigma_s"].cast<double>());
  s.dim_factor = d["dim_factor"].cast<double>();
  s.reference = reference_from_string(d["reference"].cast<std::string>());
  if (d.contains("homography"))
    s.homography = homography_from_array(d["homography"].cast<py::array_t<double>>());
  return s;
}

NetworkConfig config_from_kwargs(int basis_count, int kernel_size, int upsample,
                                 int base_channels, const std::string& variant,
                                 const std::string& reference, bool use_basis_b) {
  NetworkConfig cfg;
  cfg.basis_count = basis_count;
  cfg.kernel_size = kernel_size;
  cfg.upsample = upsample;
  cfg.base_channels = base_channels;
  cfg.variant = variant_from_string(variant);
  cfg.reference = reference_from_string(reference);
  cfg.use_basis_b = use_basis_b;
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "flash/no-flash pair denoising core";
  m.attr("__version__") = "0.1.0";

  // simulation
  m.def(
      "generate_scene",
      [](uint64_t seed, int height, int width) {
        Image ambient, flash_only;
        generate_scene(seed, height, width, ambient, flash_only);
        return py::make_tuple(to_array(ambient), to_array(flash_only));
      },
      "seed"_a, "height"_a, "width"_a,
      "Procedural ambient / flash-only scene pair, deterministic in the seed.");
  m.def(
      "compose_pair",
      [](const FloatArray& ambient, const FloatArray& flash_only, double dim_factor) {
        Image nf, f;
        compose_pair(to_tensor(ambient), to_tensor(flash_only), dim_factor, nf, f);
        return py::make_tuple(to_array(nf), to_array(f));
      },
      "ambient"_a, "flash_only"_a, "dim_factor"_a);
  m.def(
      "sample_homography",
      [](uint64_t seed, int height, int width, double rot_deg, double scale_lo,
         double scale_hi, double trans_px) {
        Rng rng(seed);
        ShakeRanges ranges{rot_deg, scale_lo, scale_hi, trans_px};
        return homography_to_array(sample_homography(rng, height, width, ranges));
      },
      "seed"_a, "height"_a, "width"_a, "rot_deg"_a = 0.5, "scale_lo"_a = 0.98,
      "scale_hi"_a = 1.02, "trans_px"_a = 2.0);
  m.def(
      "add_noise",
      [](const FloatArray& img, double sigma_r, double sigma_s, uint64_t seed) {
        Rng rng(seed);
        return to_array(add_noise(to_tensor(img), NoiseParams(sigma_r, sigma_s), rng));
      },
      "img"_a, "sigma_r"_a, "sigma_s"_a, "seed"_a);
  m.def(
      "noise_stddev_map",
      [](const FloatArray& img, double sigma_r, double sigma_s) {
        return to_array(noise_stddev_map(to_tensor(img), NoiseParams(sigma_r, sigma_s)));
      },
      "img"_a, "sigma_r"_a, "sigma_s"_a);
  m.def(
      "make_sample",
      [](const FloatArray& ambient, const FloatArray& flash_only, double dim_factor,
         double sigma_r, double sigma_s, py::array_t<double> homography,
         const std::string& reference, uint64_t seed) {
        Rng rng(seed);
        SamplePair s = make_sample(to_tensor(ambient), to_tensor(flash_only), dim_factor,
                                   NoiseParams(sigma_r, sigma_s),
                                   homography_from_array(homography),
                                   reference_from_string(reference), rng);
        return sample_to_dict(s);
      },
      "ambient"_a, "flash_only"_a, "dim_factor"_a, "sigma_r"_a, "sigma_s"_a, "homography"_a,
      "reference"_a = "noflash", "seed"_a = 0);

  // imaging
  m.def(
      "warp_image",
      [](const FloatArray& img, const py::array_t<double>& h) {
        return to_array(warp_image(to_tensor(img), homography_from_array(h)));
      },
      "img"_a, "homography"_a);
  m.def(
      "mean_displacement",
      [](const py::array_t<double>& h, int height, int width) {
        return mean_displacement(homography_from_array(h), height, width);
      },
      "homography"_a, "height"_a, "width"_a);
  m.def(
      "render_srgb",
      [](const FloatArray& img, float gain, std::optional<FloatArray> color_matrix,
         const std::string& gamma) {
        return to_array(render_srgb(to_tensor(img), render_params(gain, color_matrix, gamma)));
      },
      "img"_a, "gain"_a = 1.0f, "color_matrix"_a = py::none(), "gamma"_a = "srgb");
  m.def(
      "psnr",
      [](const FloatArray& a, const FloatArray& b) { return psnr(to_tensor(a), to_tensor(b)); },
      "a"_a, "b"_a);
  m.def(
      "ssim",
      [](const FloatArray& a, const FloatArray& b) { return ssim(to_tensor(a), to_tensor(b)); },
      "a"_a, "b"_a);
  m.def(
      "compute_loss",
      [](const FloatArray& pred, const FloatArray& target, float gain,
         std::optional<FloatArray> color_matrix, const std::string& gamma, float eta) {
        return compute_loss(to_tensor(pred), to_tensor(target),
                            render_params(gain, color_matrix, gamma), eta);
      },
      "pred"_a, "target"_a, "gain"_a = 1.0f, "color_matrix"_a = py::none(),
      "gamma"_a = "srgb", "eta"_a = 1.0f);

  // kernel engine
  m.def(
      "upsample_kernel",
      [](const FloatArray& b, int d) { return to_array(upsample_kernel(to_tensor(b), d)); },
      "kernel"_a, "d"_a);
  m.def(
      "effective_kernel",
      [](const FloatArray& a, const FloatArray& b, int upsample, bool use_b, int j) {
        return to_array(effective_kernel(basis_from_arrays(a, b, upsample, use_b), j));
      },
      "a"_a, "b"_a, "upsample"_a, "use_b"_a, "j"_a);
  m.def(
      "filter_direct",
      [](const FloatArray& x, const FloatArray& a, const FloatArray& b, int upsample,
         bool use_b, const FloatArray& coeffs) {
        return to_array(
            filter_direct(to_tensor(x), basis_from_arrays(a, b, upsample, use_b), to_tensor(coeffs)));
      },
      "x"_a, "a"_a, "b"_a, "upsample"_a, "use_b"_a, "coeffs"_a);
  m.def(
      "filter_fast",
      [](const FloatArray& x, const FloatArray& a, const FloatArray& b, int upsample,
         bool use_b, const FloatArray& coeffs) {
        return to_array(
            filter_fast(to_tensor(x), basis_from_arrays(a, b, upsample, use_b), to_tensor(coeffs)));
      },
      "x"_a, "a"_a, "b"_a, "upsample"_a, "use_b"_a, "coeffs"_a);
  m.def(
      "apply_scale_map",
      [](const FloatArray& f, const FloatArray& g) {
        return to_array(apply_scale_map(to_tensor(f), to_tensor(g)));
      },
      "filtered"_a, "scale_map"_a);

  // model
  py::class_<Model>(m, "Model")
      .def(py::init([](int basis_count, int kernel_size, int upsample, int base_channels,
                       const std::string& variant, const std::string& reference,
                       bool use_basis_b, uint64_t seed) {
             return Model(config_from_kwargs(basis_count, kernel_size, upsample, base_channels,
                                             variant, reference, use_basis_b),
                          seed);
           }),
           "basis_count"_a = 8, "kernel_size"_a = 5, "upsample"_a = 2, "base_channels"_a = 16,
           "variant"_a = "ours", "reference"_a = "noflash", "use_basis_b"_a = true,
           "seed"_a = 0)
      .def_property_readonly("param_count", &Model::param_count)
      .def_property_readonly("variant",
                             [](const Model& m) { return to_string(m.config().variant); })
      .def("denoise",
           [](const Model& model, const py::dict& sample) {
             return to_array(model.denoise(sample_from_dict(sample)));
           })
      .def("predict_fields",
           [](const Model& model, const py::dict& sample) {
             auto [basis, fields] = model.predict_fields(sample_from_dict(sample));
             py::dict d;
             d["a"] = to_array(basis.a);
             d["b"] = to_array(basis.b);
             d["upsample"] = basis.upsample;
             d["use_b"] = basis.use_b;
             d["coeffs"] = to_array(fields.coeffs);
             d["scale_map"] = to_array(fields.scale_map);
             return d;
           })
      .def("save", [](const Model& model, const std::string& dir) { model.save(dir); })
      .def_static("load", &Model::load);

  m.def(
      "train_procedural",
      [](Model& model, int max_steps, uint64_t seed, int crop, int n_scenes, int n_val,
         int batch_size, double lr_init, double eta, int val_interval) {
        SimConfig sim;
        sim.crop = crop;
        sim.reference = model.config().reference;
        Dataset train_data = Dataset::procedural(n_scenes, mix64(seed, 0xda7a11ull), crop, sim);
        Dataset val_data = Dataset::procedural(n_val, mix64(seed, 0x7a1da7aull), crop, sim);
        TrainConfig tc;
        tc.max_steps = max_steps;
        tc.seed = seed;
        tc.batch_size = batch_size;
        tc.lr_init = lr_init;
        tc.eta = eta;
        tc.val_interval = val_interval;
        Trainer trainer(model, tc);
        TrainResult result = trainer.run(train_data, val_data);
        std::vector<std::pair<int64_t, double>> history;
        history.reserve(result.history.size());
        for (const auto& e : result.history) history.emplace_back(e.step, e.train_loss);
        return history;
      },
      "model"_a, "max_steps"_a, "seed"_a = 0, "crop"_a = 64, "n_scenes"_a = 4, "n_val"_a = 2,
      "batch_size"_a = 1, "lr_init"_a = 1e-4, "eta"_a = 1.0, "val_interval"_a = 0,
      "Short procedural training run; returns (step, train_loss) history.");
}
