#include "fnf/io.h"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "json.hpp"

namespace fnf {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

void save_png(const std::string& path, const Image& img, int bit_depth) {
  require_hw3(img, "save_png");
  if (bit_depth != 8 && bit_depth != 16)
    throw std::invalid_argument("save_png: bit depth must be 8 or 16");

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("save_png: cannot open " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("save_png: png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("save_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("save_png: libpng error writing " + path);
  }

  const int height = img.dim(0), width = img.dim(1);
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, bit_depth, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const float scale = bit_depth == 16 ? 65535.0f : 255.0f;
  if (bit_depth == 16) {
    std::vector<uint16_t> row(static_cast<size_t>(width) * 3);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c)
          row[static_cast<size_t>(x) * 3 + c] = static_cast<uint16_t>(
              std::lround(detail::clip01(img.at(y, x, c)) * scale));
      // PNG stores 16-bit samples big-endian
      std::vector<uint8_t> be(row.size() * 2);
      for (size_t i = 0; i < row.size(); ++i) {
        be[i * 2] = static_cast<uint8_t>(row[i] >> 8);
        be[i * 2 + 1] = static_cast<uint8_t>(row[i] & 0xff);
      }
      png_write_row(png, be.data());
    }
  } else {
    std::vector<uint8_t> row(static_cast<size_t>(width) * 3);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c)
          row[static_cast<size_t>(x) * 3 + c] = static_cast<uint8_t>(
              std::lround(detail::clip01(img.at(y, x, c)) * scale));
      png_write_row(png, row.data());
    }
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("load_png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("load_png: png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("load_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("load_png: libpng error reading " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);

  // Normalize to RGB
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (bit_depth < 8) png_set_expand(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int out_depth = png_get_bit_depth(png, info);
  const float scale = out_depth == 16 ? 65535.0f : 255.0f;
  const size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<uint8_t> row(row_bytes);

  Image img({height, width, 3});
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    if (out_depth == 16) {
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c) {
          size_t i = (static_cast<size_t>(x) * 3 + c) * 2;
          uint16_t v = static_cast<uint16_t>((row[i] << 8) | row[i + 1]);
          img.at(y, x, c) = static_cast<float>(v) / scale;
        }
    } else {
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c)
          img.at(y, x, c) = static_cast<float>(row[static_cast<size_t>(x) * 3 + c]) / scale;
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

std::string sidecar_path(const std::string& png_path) {
  auto dot = png_path.rfind('.');
  auto base = dot == std::string::npos ? png_path : png_path.substr(0, dot);
  return base + ".json";
}

namespace {

using nlohmann::json;

json meta_to_json(const ImageMeta& meta) {
  json j;
  j["gain"] = meta.render.gain;
  j["color_matrix"] = meta.render.color_matrix;
  j["gamma"] = meta.render.gamma == Gamma::srgb ? "srgb" : "linear";
  j["sigma_r"] = meta.sigma_r;
  j["sigma_s"] = meta.sigma_s;
  j["homography"] = meta.homography.m;
  return j;
}

ImageMeta meta_from_json(const json& j) {
  ImageMeta meta;
  if (j.contains("gain")) meta.render.gain = j["gain"].get<float>();
  if (j.contains("color_matrix")) {
    auto v = j["color_matrix"].get<std::vector<float>>();
    if (v.size() != 9) throw std::runtime_error("sidecar color_matrix needs 9 floats");
    std::copy(v.begin(), v.end(), meta.render.color_matrix.begin());
  }
  if (j.contains("gamma")) {
    auto g = j["gamma"].get<std::string>();
    if (g == "srgb")
      meta.render.gamma = Gamma::srgb;
    else if (g == "linear")
      meta.render.gamma = Gamma::linear;
    else
      throw std::runtime_error("sidecar gamma must be 'srgb' or 'linear'");
  }
  if (j.contains("sigma_r")) meta.sigma_r = j["sigma_r"].get<double>();
  if (j.contains("sigma_s")) meta.sigma_s = j["sigma_s"].get<double>();
  if (j.contains("homography")) {
    auto v = j["homography"].get<std::vector<double>>();
    if (v.size() != 9) throw std::runtime_error("sidecar homography needs 9 floats");
    std::array<double, 9> m;
    std::copy(v.begin(), v.end(), m.begin());
    meta.homography = Homography::from_matrix(m);
  }
  return meta;
}

}  // namespace

void save_sidecar(const std::string& png_path, const ImageMeta& meta) {
  std::ofstream os(sidecar_path(png_path));
  if (!os) throw std::runtime_error("cannot write sidecar for " + png_path);
  os << meta_to_json(meta).dump(2) << "\n";
}

std::optional<ImageMeta> load_sidecar(const std::string& png_path) {
  std::ifstream is(sidecar_path(png_path));
  if (!is) return std::nullopt;
  json j = json::parse(is);
  return meta_from_json(j);
}

void save_image(const std::string& path, const Image& img, const ImageMeta& meta,
                int bit_depth) {
  save_png(path, img, bit_depth);
  save_sidecar(path, meta);
}

std::pair<Image, ImageMeta> load_image(const std::string& path) {
  Image img = load_png(path);
  auto meta = load_sidecar(path);
  if (!meta) {
    std::cerr << "warning: missing sidecar " << sidecar_path(path)
              << ", using defaults (gain 1, identity matrix, srgb)\n";
    return {std::move(img), ImageMeta{}};
  }
  return {std::move(img), *meta};
}

// ---------------------------------------------------------------------------
// Container

namespace {

constexpr char kMagic[4] = {'F', 'N', 'F', 'C'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

template <typename T>
std::vector<char> to_raw(const Tensor<T>& t) {
  std::vector<char> raw(t.size() * sizeof(T));
  std::memcpy(raw.data(), t.data(), raw.size());
  return raw;
}

template <typename T>
Tensor<T> from_raw(const std::vector<int>& shape, const std::vector<char>& raw) {
  Tensor<T> t(shape);
  if (raw.size() != static_cast<size_t>(t.size()) * sizeof(T))
    throw std::runtime_error("container entry size mismatch");
  std::memcpy(t.data(), raw.data(), raw.size());
  return t;
}

}  // namespace

void Container::put(const std::string& name, const Tensor<float>& t) {
  entries_.push_back({name, 0, t.shape(), to_raw(t)});
}
void Container::put(const std::string& name, const Tensor<double>& t) {
  entries_.push_back({name, 1, t.shape(), to_raw(t)});
}
void Container::put(const std::string& name, const Tensor<int32_t>& t) {
  entries_.push_back({name, 2, t.shape(), to_raw(t)});
}
void Container::put_scalar(const std::string& name, double v) {
  Tensor<double> t({1});
  t.at(0) = v;
  put(name, t);
}

bool Container::has(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

std::vector<std::string> Container::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

const Container::Entry& Container::find(const std::string& name, uint8_t dtype) const {
  for (const auto& e : entries_) {
    if (e.name == name) {
      if (e.dtype != dtype)
        throw std::runtime_error("container entry '" + name + "' has a different dtype");
      return e;
    }
  }
  throw std::runtime_error("container entry '" + name + "' not found");
}

Tensor<float> Container::get_f32(const std::string& name) const {
  const auto& e = find(name, 0);
  return from_raw<float>(e.shape, e.raw);
}
Tensor<double> Container::get_f64(const std::string& name) const {
  const auto& e = find(name, 1);
  return from_raw<double>(e.shape, e.raw);
}
Tensor<int32_t> Container::get_i32(const std::string& name) const {
  const auto& e = find(name, 2);
  return from_raw<int32_t>(e.shape, e.raw);
}
double Container::get_scalar(const std::string& name) const {
  auto t = get_f64(name);
  if (t.size() != 1) throw std::runtime_error("container entry '" + name + "' is not a scalar");
  return t.at(0);
}

void Container::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os.write(kMagic, 4);
  write_le(os, kVersion);
  write_le(os, static_cast<uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    write_le(os, static_cast<uint16_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_le(os, e.dtype);
    write_le(os, static_cast<uint8_t>(e.shape.size()));
    for (int d : e.shape) write_le(os, static_cast<uint32_t>(d));
    os.write(e.raw.data(), static_cast<std::streamsize>(e.raw.size()));
  }
  if (!os) throw std::runtime_error("short write to " + path);
}

Container Container::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error(path + " is not a container file");
  auto version = read_le<uint32_t>(is);
  if (version != kVersion) throw std::runtime_error("unsupported container version");
  auto count = read_le<uint32_t>(is);
  Container c;
  for (uint32_t i = 0; i < count; ++i) {
    Entry e;
    auto name_len = read_le<uint16_t>(is);
    e.name.resize(name_len);
    is.read(e.name.data(), name_len);
    e.dtype = read_le<uint8_t>(is);
    auto ndim = read_le<uint8_t>(is);
    int64_t n = 1;
    for (int d = 0; d < ndim; ++d) {
      int v = static_cast<int>(read_le<uint32_t>(is));
      e.shape.push_back(v);
      n *= v;
    }
    size_t elem = e.dtype == 1 ? 8 : 4;
    e.raw.resize(static_cast<size_t>(n) * elem);
    is.read(e.raw.data(), static_cast<std::streamsize>(e.raw.size()));
    if (!is) throw std::runtime_error("truncated container " + path);
    c.entries_.push_back(std::move(e));
  }
  return c;
}

// ---------------------------------------------------------------------------
// SHA-1 (for git-style blob hashes in run manifests)

namespace {

struct Sha1 {
  uint32_t h[5] = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};
  uint64_t total = 0;
  uint8_t buf[64];
  size_t fill = 0;

  static uint32_t rol(uint32_t v, int s) { return (v << s) | (v >> (32 - s)); }

  void block(const uint8_t* p) {
    uint32_t w[80];
    for (int i = 0; i < 16; ++i)
      w[i] = (uint32_t(p[i * 4]) << 24) | (uint32_t(p[i * 4 + 1]) << 16) |
             (uint32_t(p[i * 4 + 2]) << 8) | uint32_t(p[i * 4 + 3]);
    for (int i = 16; i < 80; ++i) w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
    uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
    for (int i = 0; i < 80; ++i) {
      uint32_t f, k;
      if (i < 20) {
        f = (b & c) | (~b & d);
        k = 0x5A827999u;
      } else if (i < 40) {
        f = b ^ c ^ d;
        k = 0x6ED9EBA1u;
      } else if (i < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8F1BBCDCu;
      } else {
        f = b ^ c ^ d;
        k = 0xCA62C1D6u;
      }
      uint32_t t = rol(a, 5) + f + e + k + w[i];
      e = d;
      d = c;
      c = rol(b, 30);
      b = a;
      a = t;
    }
    h[0] += a; h[1] += b; h[2] += c; h[3] += d; h[4] += e;
  }

  void update(const void* data, size_t len) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    total += len;
    while (len > 0) {
      size_t take = std::min(len, sizeof(buf) - fill);
      std::memcpy(buf + fill, p, take);
      fill += take;
      p += take;
      len -= take;
      if (fill == sizeof(buf)) {
        block(buf);
        fill = 0;
      }
    }
  }

  std::string hex() {
    uint64_t bits = total * 8;
    uint8_t pad = 0x80;
    update(&pad, 1);
    uint8_t zero = 0;
    while (fill != 56) update(&zero, 1);
    uint8_t len_be[8];
    for (int i = 0; i < 8; ++i) len_be[i] = static_cast<uint8_t>(bits >> (56 - 8 * i));
    update(len_be, 8);
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (uint32_t v : h)
      for (int i = 28; i >= 0; i -= 4) out += digits[(v >> i) & 0xf];
    return out;
  }
};

}  // namespace

std::string sha1_hex(const void* data, size_t len) {
  Sha1 s;
  s.update(data, len);
  return s.hex();
}

std::string blob_hash_bytes(const std::string& bytes) {
  Sha1 s;
  std::string header = "blob " + std::to_string(bytes.size());
  s.update(header.data(), header.size() + 1);  // includes the trailing NUL
  s.update(bytes.data(), bytes.size());
  return s.hex();
}

std::string blob_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot hash missing file " + path);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return blob_hash_bytes(bytes);
}

}  // namespace fnf
