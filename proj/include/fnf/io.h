#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fnf/image.h"
#include "fnf/tensor.h"

namespace fnf {

// Sidecar metadata stored next to every PNG as `<name>.json`.
// Keys: gain, color_matrix (row-major 9 floats), gamma, sigma_r, sigma_s,
// homography (row-major 9 floats).
struct ImageMeta {
  RenderParams render;
  double sigma_r = 0.0;
  double sigma_s = 0.0;
  Homography homography;
};

// Linear images interchange as 16-bit RGB PNG with the fixed scale
// value = round(clip(x, 0, 1) * 65535). bit_depth 8 is accepted for
// visualization dumps (scale 255).
void save_png(const std::string& path, const Image& img, int bit_depth = 16);
Image load_png(const std::string& path);

void save_image(const std::string& path, const Image& img, const ImageMeta& meta,
                int bit_depth = 16);
// Missing sidecar falls back to defaults (gain 1, identity matrix, srgb)
// and warns on stderr.
std::pair<Image, ImageMeta> load_image(const std::string& path);

std::string sidecar_path(const std::string& png_path);
void save_sidecar(const std::string& png_path, const ImageMeta& meta);
std::optional<ImageMeta> load_sidecar(const std::string& png_path);

// Little-endian binary container for named arrays (sample caches, weight
// blobs). Layout:
//   magic "FNFC" | u32 version | u32 count
//   per entry: u16 name_len | name | u8 dtype | u8 ndim | u32 dims[ndim] | raw
// dtype: 0 = f32, 1 = f64, 2 = i32.
class Container {
 public:
  void put(const std::string& name, const Tensor<float>& t);
  void put(const std::string& name, const Tensor<double>& t);
  void put(const std::string& name, const Tensor<int32_t>& t);
  void put_scalar(const std::string& name, double v);

  bool has(const std::string& name) const;
  std::vector<std::string> names() const;

  Tensor<float> get_f32(const std::string& name) const;
  Tensor<double> get_f64(const std::string& name) const;
  Tensor<int32_t> get_i32(const std::string& name) const;
  double get_scalar(const std::string& name) const;

  void save(const std::string& path) const;
  static Container load(const std::string& path);

 private:
  struct Entry {
    std::string name;
    uint8_t dtype;
    std::vector<int> shape;
    std::vector<char> raw;
  };
  const Entry& find(const std::string& name, uint8_t dtype) const;
  std::vector<Entry> entries_;
};

// Git-style content hash: sha1 over "blob <len>\0" + bytes.
std::string sha1_hex(const void* data, size_t len);
std::string blob_hash(const std::string& path);
std::string blob_hash_bytes(const std::string& bytes);

}  // namespace fnf
