#include "fnf/network.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "fnf/io.h"
#include "fnf/rng.h"
#include "json.hpp"

namespace fnf {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::ours: return "ours";
    case Variant::single_image: return "single_image";
    case Variant::direct_prediction: return "direct_prediction";
    case Variant::kpn: return "kpn";
  }
  return "ours";
}

Variant variant_from_string(const std::string& s) {
  if (s == "ours") return Variant::ours;
  if (s == "single_image") return Variant::single_image;
  if (s == "direct_prediction") return Variant::direct_prediction;
  if (s == "kpn") return Variant::kpn;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

int NetworkConfig::head_channels() const {
  switch (variant) {
    case Variant::ours: return basis_count + 3;
    case Variant::single_image: return basis_count;
    case Variant::direct_prediction: return 3;
    case Variant::kpn: return 2 * 5 * 5 * 3;  // two 5x5 kernels per color channel
  }
  return 3;
}

void NetworkConfig::validate() const {
  if (basis_count < 1) throw std::invalid_argument("basis_count must be >= 1");
  if (kernel_size < 3 || kernel_size > 15 || kernel_size % 2 == 0)
    throw std::invalid_argument("kernel_size must be odd and in [3, 15]");
  if (upsample < 1) throw std::invalid_argument("upsample must be >= 1");
  if (base_channels < 4) throw std::invalid_argument("base_channels must be >= 4");
}

int64_t ModelWeights::param_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : entries) n += t.size();
  return n;
}

Tensor<float>& ModelWeights::find(const std::string& name) {
  for (auto& [n, t] : entries)
    if (n == name) return t;
  throw std::runtime_error("unknown parameter '" + name + "'");
}

const Tensor<float>& ModelWeights::find(const std::string& name) const {
  return const_cast<ModelWeights*>(this)->find(name);
}

// ---------------------------------------------------------------------------
// Layer enumeration. This single list drives initialization, checkpoint
// layout and graph wiring, so the three can never drift apart.

namespace {

struct ConvDef {
  std::string name;
  int kh, kw, ci, co;
};

// Number of global-decoder upsampling stages: enough doublings from 1x1 to
// cover the K x K basis head, which is then cut to size by a valid conv.
int gdec_levels(int kernel_size) {
  int l = 0;
  while ((1 << l) < kernel_size + 1) ++l;
  return l;
}

std::vector<ConvDef> conv_defs(const NetworkConfig& cfg) {
  const int b = cfg.base_channels;
  const int in_ch = cfg.input_channels();
  std::vector<ConvDef> defs;
  auto c3 = [&](const std::string& name, int ci, int co) {
    defs.push_back({name, 3, 3, ci, co});
  };

  c3("enc0", in_ch, b);
  c3("enc1a", b, b);
  c3("enc1b", b, b);
  c3("enc2a", b, 2 * b);
  c3("enc2b", 2 * b, 2 * b);
  c3("enc3a", 2 * b, 4 * b);
  c3("enc3b", 4 * b, 4 * b);
  c3("enc4a", 4 * b, 8 * b);
  c3("enc4b", 8 * b, 8 * b);
  c3("enc5a", 8 * b, 16 * b);
  c3("enc5b", 16 * b, 16 * b);
  c3("encf", 16 * b, 16 * b);
  c3("encout", 16 * b, 16 * b);

  if (cfg.has_basis()) {
    const int levels = gdec_levels(cfg.kernel_size);
    const int all_widths[4] = {8 * b, 4 * b, 4 * b, 2 * b};
    const int skip_ch[4] = {16 * b, 8 * b, 4 * b, 2 * b};
    int prev = 16 * b;
    for (int i = 0; i < levels; ++i) {
      const int w = all_widths[4 - levels + i];
      const std::string base = "gdec" + std::to_string(i + 1);
      c3(base + "a", prev, w);
      c3(base + "b", w + skip_ch[i], w);
      c3(base + "c", w, w);
      prev = w;
    }
    const int valid_k = (1 << levels) - cfg.kernel_size + 1;
    defs.push_back({"gdecfa", valid_k, valid_k, prev, prev});
    c3("gdecfb", prev, prev);
    c3("gdec_head", prev, (cfg.use_basis_b ? 6 : 3) * cfg.basis_count);
  }

  c3("pdec5a", 16 * b, 8 * b);
  c3("pdec5b", 8 * b + 16 * b, 8 * b);
  c3("pdec5c", 8 * b, 8 * b);
  c3("pdec4a", 8 * b, 4 * b);
  c3("pdec4b", 4 * b + 8 * b, 4 * b);
  c3("pdec4c", 4 * b, 4 * b);
  c3("pdec3a", 4 * b, 2 * b);
  c3("pdec3b", 2 * b + 4 * b, 2 * b);
  c3("pdec3c", 2 * b, 2 * b);
  c3("pdec2a", 2 * b, b);
  c3("pdec2b", b + 2 * b, b);
  c3("pdec2c", b, b);
  c3("pdec1a", b, b);
  c3("pdec1b", b + b, b);
  c3("pdec1c", b, b);
  c3("pdecf0", b, b);
  c3("pdecf1", b, b);
  c3("pdec_head", b, cfg.head_channels());
  return defs;
}

}  // namespace

Model::Model(NetworkConfig cfg, NoInit) : config_(cfg) { config_.validate(); }

Model::Model(NetworkConfig cfg, uint64_t init_seed) : config_(cfg) {
  config_.validate();
  Rng rng(mix64(init_seed, 0x1417ull));
  for (const auto& def : conv_defs(config_)) {
    Tensor<float> w({def.kh, def.kw, def.ci, def.co});
    const double limit = std::sqrt(6.0 / (def.kh * def.kw * def.ci));
    for (int64_t i = 0; i < w.size(); ++i)
      w.data()[i] = static_cast<float>(rng.uniform(-limit, limit));
    Tensor<float> bias({def.co});
    weights_.entries.emplace_back(def.name + ".w", std::move(w));
    weights_.entries.emplace_back(def.name + ".b", std::move(bias));
  }
  if (config_.variant == Variant::ours) {
    // unit scale map at init, so the model starts out as pure filtering
    Tensor<float>& head_bias = weights_.find("pdec_head.b");
    for (int c = 0; c < 3; ++c) head_bias.at(config_.basis_count + c) = 1.0f;
  }
}

Tensor<float> build_input(const SamplePair& s, const NetworkConfig& cfg) {
  require_hw3(s.x_nf, "build_input");
  const int h = s.x_nf.dim(0), w = s.x_nf.dim(1);
  const bool single = cfg.variant == Variant::single_image;
  Tensor<float> out({h, w, single ? 6 : 12});
  const int64_t npix = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < npix; ++i) {
    float* o = out.data() + i * (single ? 6 : 12);
    const float* nf = s.x_nf.data() + i * 3;
    const float* mn = s.noise_map_nf.data() + i * 3;
    if (single) {
      for (int c = 0; c < 3; ++c) o[c] = nf[c];
      for (int c = 0; c < 3; ++c) o[3 + c] = mn[c];
    } else {
      const float* f = s.x_f.data() + i * 3;
      const float* mf = s.noise_map_f.data() + i * 3;
      for (int c = 0; c < 3; ++c) o[c] = nf[c];
      for (int c = 0; c < 3; ++c) o[3 + c] = f[c];
      for (int c = 0; c < 3; ++c) o[6 + c] = mn[c];
      for (int c = 0; c < 3; ++c) o[9 + c] = mf[c];
    }
  }
  return out;
}

template <typename T>
NetInputs<T> net_inputs(const SamplePair& s, const NetworkConfig& cfg) {
  NetInputs<T> in;
  in.stacked = build_input(s, cfg).template cast<T>();
  in.x_nf = s.x_nf.cast<T>();
  in.x_f = s.x_f.cast<T>();
  return in;
}

template NetInputs<float> net_inputs(const SamplePair&, const NetworkConfig&);
template NetInputs<double> net_inputs(const SamplePair&, const NetworkConfig&);

template <typename T>
ForwardHandles<T> Model::build(Graph<T>& graph, const NetInputs<T>& in) const {
  const auto& cfg = config_;
  const int h = in.stacked.dim(0), w = in.stacked.dim(1);
  if (h < 32 || w < 32 || h % 32 != 0 || w % 32 != 0)
    throw std::invalid_argument("network input dims must be >= 32 and divisible by 32");
  if (in.stacked.dim(2) != cfg.input_channels())
    throw std::invalid_argument("network input has wrong channel count");

  ForwardHandles<T> out;
  out.params.reserve(weights_.entries.size());
  std::unordered_map<std::string, size_t> index;
  for (const auto& [name, tensor] : weights_.entries) {
    index.emplace(name, out.params.size());
    out.params.push_back(graph.param(tensor.template cast<T>()));
  }
  auto wv = [&](const std::string& layer) { return out.params[index.at(layer + ".w")]; };
  auto bv = [&](const std::string& layer) { return out.params[index.at(layer + ".b")]; };
  auto conv = [&](const std::string& layer, Value<T> x, bool same = true) {
    return graph.conv2d(x, wv(layer), bv(layer), same);
  };
  auto conv_relu = [&](const std::string& layer, Value<T> x, bool same = true) {
    return graph.relu(conv(layer, x, same));
  };

  // encoder
  Value<T> x = graph.input(in.stacked);
  Value<T> e0 = conv_relu("enc0", x);
  Value<T> s1 = conv_relu("enc1b", conv_relu("enc1a", e0));
  Value<T> s2 = conv_relu("enc2b", conv_relu("enc2a", graph.maxpool2(s1)));
  Value<T> s3 = conv_relu("enc3b", conv_relu("enc3a", graph.maxpool2(s2)));
  Value<T> s4 = conv_relu("enc4b", conv_relu("enc4a", graph.maxpool2(s3)));
  Value<T> s5 = conv_relu("enc5b", conv_relu("enc5a", graph.maxpool2(s4)));
  Value<T> enc_out = conv_relu("encout", conv_relu("encf", graph.maxpool2(s5)));

  // global decoder: basis prediction from globally pooled features
  if (cfg.has_basis()) {
    const int levels = gdec_levels(cfg.kernel_size);
    const Value<T> skips[4] = {s5, s4, s3, s2};
    Value<T> cur = graph.upsample2(graph.global_avg_pool(enc_out));
    for (int i = 0; i < levels; ++i) {
      if (i > 0) cur = graph.upsample2(cur);
      const std::string base = "gdec" + std::to_string(i + 1);
      cur = conv_relu(base + "a", cur);
      const int sz = graph.val(cur).dim(0);
      Value<T> pooled = graph.replicate_spatial(graph.global_avg_pool(skips[i]), sz, sz);
      cur = conv_relu(base + "b", graph.concat(cur, pooled));
      cur = conv_relu(base + "c", cur);
    }
    cur = conv_relu("gdecfa", cur, /*same=*/false);
    cur = conv_relu("gdecfb", cur);
    Value<T> basis_head = conv("gdec_head", cur);  // linear head
    out.basis_a = graph.basis_part(basis_head, cfg.basis_count, 0);
    if (cfg.use_basis_b) out.basis_b = graph.basis_part(basis_head, cfg.basis_count, 1);
  }

  // per-pixel decoder
  Value<T> p = conv_relu("pdec5a", graph.upsample2(enc_out));
  p = conv_relu("pdec5c", conv_relu("pdec5b", graph.concat(p, s5)));
  p = conv_relu("pdec4a", graph.upsample2(p));
  p = conv_relu("pdec4c", conv_relu("pdec4b", graph.concat(p, s4)));
  p = conv_relu("pdec3a", graph.upsample2(p));
  p = conv_relu("pdec3c", conv_relu("pdec3b", graph.concat(p, s3)));
  p = conv_relu("pdec2a", graph.upsample2(p));
  p = conv_relu("pdec2c", conv_relu("pdec2b", graph.concat(p, s2)));
  p = conv_relu("pdec1a", graph.upsample2(p));
  p = conv_relu("pdec1c", conv_relu("pdec1b", graph.concat(p, s1)));
  p = conv_relu("pdecf1", conv_relu("pdecf0", p));
  Value<T> head = conv("pdec_head", p);  // linear head

  switch (cfg.variant) {
    case Variant::ours: {
      out.coeffs = graph.slice_channels(head, 0, cfg.basis_count);
      out.scale_map = graph.slice_channels(head, cfg.basis_count, cfg.basis_count + 3);
      Value<T> filtered = graph.basis_filter(in.x_nf, out.basis_a, out.basis_b,
                                             cfg.upsample, cfg.use_basis_b, out.coeffs);
      out.output = graph.mul(filtered, out.scale_map);
      break;
    }
    case Variant::single_image: {
      out.coeffs = head;
      out.output = graph.basis_filter(in.x_nf, out.basis_a, out.basis_b, cfg.upsample,
                                      cfg.use_basis_b, out.coeffs);
      break;
    }
    case Variant::direct_prediction: {
      // the head is a residual on the noisy no-flash input
      out.output = graph.add_const(head, in.x_nf);
      break;
    }
    case Variant::kpn: {
      Value<T> k_nf = graph.slice_channels(head, 0, 75);
      Value<T> k_f = graph.slice_channels(head, 75, 150);
      out.output = graph.add(graph.local_filter(in.x_nf, k_nf, 5),
                             graph.local_filter(in.x_f, k_f, 5));
      break;
    }
  }
  return out;
}

template ForwardHandles<float> Model::build(Graph<float>&, const NetInputs<float>&) const;
template ForwardHandles<double> Model::build(Graph<double>&, const NetInputs<double>&) const;

Image Model::denoise(const SamplePair& s) const {
  Graph<float> graph;
  auto handles = build(graph, net_inputs<float>(s, config_));
  return graph.val(handles.output);
}

std::pair<KernelBasis, PredictionFields> Model::predict_fields(const SamplePair& s) const {
  if (config_.variant != Variant::ours)
    throw std::logic_error("predict_fields requires the full two-decoder variant");
  Graph<float> graph;
  auto handles = build(graph, net_inputs<float>(s, config_));
  KernelBasis basis;
  basis.a = graph.val(handles.basis_a);
  basis.b = config_.use_basis_b ? graph.val(handles.basis_b)
                                : Tensor<float>::zeros_like(basis.a);
  basis.upsample = config_.upsample;
  basis.use_b = config_.use_basis_b;
  PredictionFields fields;
  fields.coeffs = graph.val(handles.coeffs);
  fields.scale_map = graph.val(handles.scale_map);
  return {std::move(basis), std::move(fields)};
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
using nlohmann::json;

json config_to_json(const NetworkConfig& cfg) {
  json j;
  j["basis_count"] = cfg.basis_count;
  j["kernel_size"] = cfg.kernel_size;
  j["upsample"] = cfg.upsample;
  j["base_channels"] = cfg.base_channels;
  j["variant"] = to_string(cfg.variant);
  j["reference"] = to_string(cfg.reference);
  j["use_basis_b"] = cfg.use_basis_b;
  return j;
}

NetworkConfig config_from_json(const json& j) {
  NetworkConfig cfg;
  cfg.basis_count = j.at("basis_count").get<int>();
  cfg.kernel_size = j.at("kernel_size").get<int>();
  cfg.upsample = j.at("upsample").get<int>();
  cfg.base_channels = j.at("base_channels").get<int>();
  cfg.variant = variant_from_string(j.at("variant").get<std::string>());
  cfg.reference = reference_from_string(j.at("reference").get<std::string>());
  cfg.use_basis_b = j.at("use_basis_b").get<bool>();
  return cfg;
}

}  // namespace

void Model::save(const std::string& dir, const std::string& extra_json) const {
  std::filesystem::create_directories(dir);
  json j;
  j["network"] = config_to_json(config_);
  if (!extra_json.empty()) {
    json extra = json::parse(extra_json);
    for (auto& [key, value] : extra.items()) j[key] = value;
  }
  std::ofstream os(dir + "/config.json");
  if (!os) throw std::runtime_error("cannot write " + dir + "/config.json");
  os << j.dump(2) << "\n";

  Container params;
  for (const auto& [name, tensor] : weights_.entries) params.put(name, tensor);
  params.save(dir + "/params.bin");
}

Model Model::load(const std::string& dir) {
  std::ifstream is(dir + "/config.json");
  if (!is) throw std::runtime_error("cannot read " + dir + "/config.json");
  json j = json::parse(is);
  Model model(config_from_json(j.at("network")), NoInit{});

  Container params = Container::load(dir + "/params.bin");
  for (const auto& def : conv_defs(model.config_)) {
    for (const char* suffix : {".w", ".b"}) {
      std::string name = def.name + suffix;
      Tensor<float> t = params.get_f32(name);
      model.weights_.entries.emplace_back(name, std::move(t));
    }
  }
  // shape sanity against the config
  for (const auto& def : conv_defs(model.config_)) {
    const Tensor<float>& w = model.weights_.find(def.name + ".w");
    if (w.dim(0) != def.kh || w.dim(1) != def.kw || w.dim(2) != def.ci || w.dim(3) != def.co)
      throw std::runtime_error("checkpoint parameter '" + def.name +
                               "' does not match the stored network config");
  }
  return model;
}

}  // namespace fnf
