#include "fnf/kernel_engine.h"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "conv_util.h"

namespace fnf {

template <typename T>
void KernelBasisT<T>::validate() const {
  if (a.ndim() != 4 || a.dim(3) != 3)
    throw std::invalid_argument("kernel basis A must be (J, K, K, 3)");
  if (!a.same_shape(b)) throw std::invalid_argument("kernel basis A/B shapes differ");
  if (a.dim(1) != a.dim(2)) throw std::invalid_argument("kernels must be square");
  if (a.dim(1) % 2 == 0) throw std::invalid_argument("kernel size must be odd");
  if (upsample < 1) throw std::invalid_argument("upsample factor must be >= 1");
}

template <typename T>
Tensor<T> upsample_kernel(const Tensor<T>& b, int d) {
  if (b.ndim() != 3 || b.dim(2) != 3 || b.dim(0) != b.dim(1))
    throw std::invalid_argument("upsample_kernel expects (K, K, 3)");
  const int k = b.dim(0);
  if (k % 2 == 0) throw std::invalid_argument("kernel size must be odd");
  if (d < 1) throw std::invalid_argument("upsample factor must be >= 1");
  if (d == 1) return b;

  const int e = (k - 1) * d + 1;
  Tensor<T> out({e, e, 3});
  for (int u = 0; u < e; ++u) {
    const int ty = u / d, ry = u % d;
    const T wy0 = T(d - ry) / T(d), wy1 = T(ry) / T(d);
    for (int v = 0; v < e; ++v) {
      const int tx = v / d, rx = v % d;
      const T wx0 = T(d - rx) / T(d), wx1 = T(rx) / T(d);
      for (int c = 0; c < 3; ++c) {
        T acc = wy0 * wx0 * b.at(ty, tx, c);
        if (rx > 0) acc += wy0 * wx1 * b.at(ty, tx + 1, c);
        if (ry > 0) acc += wy1 * wx0 * b.at(ty + 1, tx, c);
        if (rx > 0 && ry > 0) acc += wy1 * wx1 * b.at(ty + 1, tx + 1, c);
        out.at(u, v, c) = acc;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> effective_kernel(const KernelBasisT<T>& basis, int j) {
  basis.validate();
  const int k = basis.base_size();
  const int d = basis.upsample;
  const int e = basis.footprint();
  const int off = (e - k) / 2;

  Tensor<T> out({e, e, 3});
  if (basis.use_b) {
    Tensor<T> bj({k, k, 3});
    std::memcpy(bj.data(), basis.b.data() + static_cast<size_t>(j) * k * k * 3,
                sizeof(T) * k * k * 3);
    out = upsample_kernel(bj, d);
  }
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x)
      for (int c = 0; c < 3; ++c) out.at(y + off, x + off, c) += basis.a.at(j, y, x, c);
  return out;
}

template <typename T>
Tensor<T> tent_prefilter(const Tensor<T>& x, int d) {
  require_hw3(x, "tent_prefilter");
  if (d < 1) throw std::invalid_argument("tent factor must be >= 1");
  if (d == 1) return x;

  const int h = x.dim(0), w = x.dim(1);
  std::vector<T> taps(static_cast<size_t>(2 * d - 1));
  for (int i = -(d - 1); i <= d - 1; ++i)
    taps[static_cast<size_t>(i + d - 1)] = T(d - std::abs(i)) / T(d);

  // horizontal then vertical, zero padded
  Tensor<T> tmp({h, w, 3});
  for (int y = 0; y < h; ++y) {
    for (int xo = 0; xo < w; ++xo) {
      T acc[3] = {T(0), T(0), T(0)};
      for (int i = -(d - 1); i <= d - 1; ++i) {
        const int sx = xo + i;
        if (sx < 0 || sx >= w) continue;
        const T t = taps[static_cast<size_t>(i + d - 1)];
        for (int c = 0; c < 3; ++c) acc[c] += t * x.at(y, sx, c);
      }
      for (int c = 0; c < 3; ++c) tmp.at(y, xo, c) = acc[c];
    }
  }
  Tensor<T> out({h, w, 3});
  for (int y = 0; y < h; ++y) {
    for (int xo = 0; xo < w; ++xo) {
      T acc[3] = {T(0), T(0), T(0)};
      for (int i = -(d - 1); i <= d - 1; ++i) {
        const int sy = y + i;
        if (sy < 0 || sy >= h) continue;
        const T t = taps[static_cast<size_t>(i + d - 1)];
        for (int c = 0; c < 3; ++c) acc[c] += t * tmp.at(sy, xo, c);
      }
      for (int c = 0; c < 3; ++c) out.at(y, xo, c) = acc[c];
    }
  }
  return out;
}

namespace {

// channel plane extraction for the per-channel GEMM formulation
template <typename T>
void extract_plane(const Tensor<T>& img, int c, T* plane) {
  const int64_t n = img.size() / 3;
  const T* src = img.data();
  for (int64_t i = 0; i < n; ++i) plane[i] = src[i * 3 + c];
}

// weights (K*K x J) for channel c from a (J, K, K, 3) kernel stack
template <typename T>
void kernel_matrix(const Tensor<T>& kernels, int c, T* out) {
  const int j_count = kernels.dim(0);
  const int k = kernels.dim(1);
  for (int j = 0; j < j_count; ++j)
    for (int t = 0; t < k * k; ++t)
      out[static_cast<size_t>(t) * j_count + j] =
          kernels.data()[(static_cast<size_t>(j) * k * k + t) * 3 + c];
}

// Prefiltered planes for the dilated coarse-kernel path. Align-corners
// upsampling cuts the interpolation tent at the outermost taps, so those
// taps must see one-sided tents or the fast path would pick up tail terms
// the dense effective kernel does not have. Planes carry a (d-1) halo
// because the zero-padded prefilter is nonzero slightly outside the image.
//
// Side index: 0 -> taps in [-(d-1), 0], 1 -> full tent, 2 -> taps in [0, d-1].
template <typename T>
struct TentPlanes {
  int h = 0, w = 0, d = 1, margin = 0, hp = 0, wp = 0;
  std::vector<T> plane[3][3];  // [side_y][side_x], hp x wp, single channel

  const T* at(int side_y, int side_x) const { return plane[side_y][side_x].data(); }
};

template <typename T>
void build_tent_planes(const T* x, int h, int w, int d, TentPlanes<T>& out) {
  const int m = d - 1;
  out.h = h;
  out.w = w;
  out.d = d;
  out.margin = m;
  out.hp = h + 2 * m;
  out.wp = w + 2 * m;
  const size_t canvas = static_cast<size_t>(out.hp) * out.wp;

  auto tent = [d](int v) { return T(d - std::abs(v)) / T(d); };
  const int lo[3] = {-m, -m, 0};
  const int hi[3] = {0, m, m};

  // horizontal pass on the zero-extended image
  std::vector<T> rowpass[3];
  for (int s = 0; s < 3; ++s) rowpass[s].assign(canvas, T(0));
  for (int y = 0; y < h; ++y) {
    const T* src = x + static_cast<size_t>(y) * w;
    for (int s = 0; s < 3; ++s) {
      T* dst = rowpass[s].data() + static_cast<size_t>(y + m) * out.wp;
      for (int px = 0; px < out.wp; ++px) {
        const int ix = px - m;
        T acc = 0;
        for (int v = lo[s]; v <= hi[s]; ++v) {
          const int sx = ix + v;
          if (sx < 0 || sx >= w) continue;
          acc += tent(v) * src[sx];
        }
        dst[px] = acc;
      }
    }
  }
  // vertical pass
  for (int sy = 0; sy < 3; ++sy)
    for (int sx = 0; sx < 3; ++sx) {
      auto& dst = out.plane[sy][sx];
      dst.assign(canvas, T(0));
      for (int py = 0; py < out.hp; ++py) {
        const int iy = py - m;
        for (int v = lo[sy]; v <= hi[sy]; ++v) {
          const int sy_img = iy + v;
          if (sy_img < 0 || sy_img >= h) continue;
          const T t = tent(v);
          const T* srow = rowpass[sx].data() + static_cast<size_t>(sy_img + m) * out.wp;
          T* drow = dst.data() + static_cast<size_t>(py) * out.wp;
          for (int px = 0; px < out.wp; ++px) drow[px] += t * srow[px];
        }
      }
    }
}

inline int tap_side(int t, int k) { return t == 0 ? 2 : (t == k - 1 ? 0 : 1); }

// patch matrix (h*w rows, k*k cols) for the dilated conv where each tap reads
// its side-matched plane
template <typename T>
void im2col_tent(const TentPlanes<T>& planes, int k, T* out) {
  const int h = planes.h, w = planes.w, d = planes.d, m = planes.margin;
  const int half = (k - 1) / 2;
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < h; ++oy) {
    T* row = out + static_cast<size_t>(oy) * w * k * k;
    for (int ox = 0; ox < w; ++ox) {
      for (int ty = 0; ty < k; ++ty) {
        const int py = oy + (ty - half) * d + m;
        const bool y_ok = py >= 0 && py < planes.hp;
        for (int tx = 0; tx < k; ++tx) {
          const int px = ox + (tx - half) * d + m;
          T v = 0;
          if (y_ok && px >= 0 && px < planes.wp)
            v = planes.at(tap_side(ty, k), tap_side(tx, k))
                    [static_cast<size_t>(py) * planes.wp + px];
          *row++ = v;
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> basis_responses(const Tensor<T>& x, const KernelBasisT<T>& basis, bool fast) {
  basis.validate();
  require_hw3(x, "basis_responses");
  const int h = x.dim(0), w = x.dim(1);
  const int j_count = basis.count();
  const int k = basis.base_size();
  const int d = basis.upsample;
  const int64_t npix = static_cast<int64_t>(h) * w;

  Tensor<T> responses({h, w, j_count, 3});

  if (!fast) {
    // dense reference path: realize each effective kernel and correlate
    const int e = basis.footprint();
    const int half = e / 2;
    std::vector<Tensor<T>> eff;
    eff.reserve(static_cast<size_t>(j_count));
    for (int j = 0; j < j_count; ++j) eff.push_back(effective_kernel(basis, j));
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
      for (int xo = 0; xo < w; ++xo) {
        for (int j = 0; j < j_count; ++j) {
          T acc[3] = {T(0), T(0), T(0)};
          for (int ky = 0; ky < e; ++ky) {
            const int sy = y + ky - half;
            if (sy < 0 || sy >= h) continue;
            for (int kx = 0; kx < e; ++kx) {
              const int sx = xo + kx - half;
              if (sx < 0 || sx >= w) continue;
              for (int c = 0; c < 3; ++c) acc[c] += eff[j].at(ky, kx, c) * x.at(sy, sx, c);
            }
          }
          for (int c = 0; c < 3; ++c) responses.at(y, xo, j, c) = acc[c];
        }
      }
    }
    return responses;
  }

  // Degenerate geometries where the coarse term is a plain dense kernel.
  const bool coarse_dense = d == 1 || k == 1;

  auto& plane = conv::scratch<T>(static_cast<size_t>(npix), 0);
  auto& patches = conv::scratch<T>(static_cast<size_t>(npix) * k * k, 1);
  auto& coarse_patches = conv::scratch<T>(static_cast<size_t>(npix) * k * k, 2);
  std::vector<T> weights(static_cast<size_t>(k) * k * j_count);
  std::vector<T> mixed(static_cast<size_t>(npix) * j_count);

  const auto dense = conv::same_geom(h, w, k, 1);
  TentPlanes<T> planes;

  for (int c = 0; c < 3; ++c) {
    extract_plane(x, c, plane.data());
    conv::im2col(plane.data(), h, w, 1, dense, patches.data());
    kernel_matrix(basis.a, c, weights.data());
    conv::gemm(patches.data(), weights.data(), mixed.data(), npix, k * k, j_count);
    if (basis.use_b) {
      kernel_matrix(basis.b, c, weights.data());
      if (coarse_dense) {
        conv::gemm_acc(patches.data(), weights.data(), mixed.data(), npix, k * k, j_count);
      } else {
        build_tent_planes(plane.data(), h, w, d, planes);
        im2col_tent(planes, k, coarse_patches.data());
        conv::gemm_acc(coarse_patches.data(), weights.data(), mixed.data(), npix, k * k,
                       j_count);
      }
    }
    T* out = responses.data();
    for (int64_t i = 0; i < npix; ++i)
      for (int j = 0; j < j_count; ++j)
        out[(i * j_count + j) * 3 + c] = mixed[static_cast<size_t>(i) * j_count + j];
  }
  return responses;
}

template <typename T>
void basis_responses_grad(const Tensor<T>& x, const KernelBasisT<T>& basis,
                          const Tensor<T>& d_responses, Tensor<T>& d_a, Tensor<T>& d_b) {
  basis.validate();
  const int h = x.dim(0), w = x.dim(1);
  const int j_count = basis.count();
  const int k = basis.base_size();
  const int d = basis.upsample;
  const int64_t npix = static_cast<int64_t>(h) * w;

  d_a = Tensor<T>::zeros_like(basis.a);
  d_b = Tensor<T>::zeros_like(basis.b);

  const bool coarse_dense = d == 1 || k == 1;

  auto& plane = conv::scratch<T>(static_cast<size_t>(npix), 0);
  auto& patches = conv::scratch<T>(static_cast<size_t>(npix) * k * k, 1);
  auto& coarse_patches = conv::scratch<T>(static_cast<size_t>(npix) * k * k, 2);
  std::vector<T> d_mixed(static_cast<size_t>(npix) * j_count);
  std::vector<T> d_weights(static_cast<size_t>(k) * k * j_count);

  const auto dense = conv::same_geom(h, w, k, 1);
  TentPlanes<T> planes;

  for (int c = 0; c < 3; ++c) {
    const T* dr = d_responses.data();
    for (int64_t i = 0; i < npix; ++i)
      for (int j = 0; j < j_count; ++j)
        d_mixed[static_cast<size_t>(i) * j_count + j] = dr[(i * j_count + j) * 3 + c];

    extract_plane(x, c, plane.data());
    conv::im2col(plane.data(), h, w, 1, dense, patches.data());
    conv::gemm_tn(patches.data(), d_mixed.data(), d_weights.data(), npix, k * k, j_count);
    for (int j = 0; j < j_count; ++j)
      for (int t = 0; t < k * k; ++t)
        d_a.data()[(static_cast<size_t>(j) * k * k + t) * 3 + c] =
            d_weights[static_cast<size_t>(t) * j_count + j];

    if (basis.use_b) {
      const T* coarse_src = patches.data();
      if (!coarse_dense) {
        build_tent_planes(plane.data(), h, w, d, planes);
        im2col_tent(planes, k, coarse_patches.data());
        coarse_src = coarse_patches.data();
      }
      conv::gemm_tn(coarse_src, d_mixed.data(), d_weights.data(), npix, k * k, j_count);
      for (int j = 0; j < j_count; ++j)
        for (int t = 0; t < k * k; ++t)
          d_b.data()[(static_cast<size_t>(j) * k * k + t) * 3 + c] =
              d_weights[static_cast<size_t>(t) * j_count + j];
    }
  }
}

template <typename T>
Tensor<T> coeff_mix(const Tensor<T>& responses, const Tensor<T>& coeffs) {
  if (responses.ndim() != 4 || coeffs.ndim() != 3 || responses.dim(0) != coeffs.dim(0) ||
      responses.dim(1) != coeffs.dim(1) || responses.dim(2) != coeffs.dim(2))
    throw std::invalid_argument("coeff_mix: field dimensions disagree");
  const int64_t npix = static_cast<int64_t>(responses.dim(0)) * responses.dim(1);
  const int j_count = responses.dim(2);

  Tensor<T> out({responses.dim(0), responses.dim(1), 3});
  const T* r = responses.data();
  const T* cf = coeffs.data();
  T* o = out.data();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < npix; ++i) {
    T acc0 = 0, acc1 = 0, acc2 = 0;
    const T* ri = r + i * j_count * 3;
    const T* ci = cf + i * j_count;
    for (int j = 0; j < j_count; ++j) {
      const T cj = ci[j];
      acc0 += cj * ri[j * 3];
      acc1 += cj * ri[j * 3 + 1];
      acc2 += cj * ri[j * 3 + 2];
    }
    o[i * 3] = acc0;
    o[i * 3 + 1] = acc1;
    o[i * 3 + 2] = acc2;
  }
  return out;
}

template <typename T>
void coeff_mix_grad(const Tensor<T>& responses, const Tensor<T>& coeffs,
                    const Tensor<T>& d_out, Tensor<T>& d_responses, Tensor<T>& d_coeffs) {
  const int64_t npix = static_cast<int64_t>(responses.dim(0)) * responses.dim(1);
  const int j_count = responses.dim(2);
  d_responses = Tensor<T>::zeros_like(responses);
  d_coeffs = Tensor<T>::zeros_like(coeffs);

  const T* r = responses.data();
  const T* cf = coeffs.data();
  const T* g = d_out.data();
  T* dr = d_responses.data();
  T* dc = d_coeffs.data();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < npix; ++i) {
    const T* ri = r + i * j_count * 3;
    const T* ci = cf + i * j_count;
    const T* gi = g + i * 3;
    T* dri = dr + i * j_count * 3;
    T* dci = dc + i * j_count;
    for (int j = 0; j < j_count; ++j) {
      dri[j * 3] = ci[j] * gi[0];
      dri[j * 3 + 1] = ci[j] * gi[1];
      dri[j * 3 + 2] = ci[j] * gi[2];
      dci[j] = ri[j * 3] * gi[0] + ri[j * 3 + 1] * gi[1] + ri[j * 3 + 2] * gi[2];
    }
  }
}

template <typename T>
Tensor<T> filter_direct(const Tensor<T>& x, const KernelBasisT<T>& basis,
                        const Tensor<T>& coeffs) {
  return coeff_mix(basis_responses(x, basis, /*fast=*/false), coeffs);
}

template <typename T>
Tensor<T> filter_fast(const Tensor<T>& x, const KernelBasisT<T>& basis,
                      const Tensor<T>& coeffs) {
  // cases where the two-scale decomposition collapses to the dense path
  auto coarse_term_vanishes = [&] {
    if (!basis.use_b) return true;
    for (int64_t i = 0; i < basis.b.size(); ++i)
      if (basis.b.data()[i] != T(0)) return false;
    return true;
  };
  if (basis.upsample == 1 || coarse_term_vanishes()) return filter_direct(x, basis, coeffs);
  return coeff_mix(basis_responses(x, basis, /*fast=*/true), coeffs);
}

template <typename T>
Tensor<T> apply_scale_map(const Tensor<T>& filtered, const Tensor<T>& scale_map) {
  if (!filtered.same_shape(scale_map))
    throw std::invalid_argument("apply_scale_map: shape mismatch");
  Tensor<T> out = filtered;
  const T* g = scale_map.data();
  T* o = out.data();
  for (int64_t i = 0; i < out.size(); ++i) o[i] *= g[i];
  return out;
}

// ---------------------------------------------------------------------------
// Kernel-field debug dump

namespace {
constexpr char kKernelMagic[4] = {'F', 'N', 'F', 'K'};
constexpr uint32_t kKernelVersion = 1;
}  // namespace

void save_kernel_field(const std::string& path, const KernelBasis& basis,
                       const Tensor<float>& coeffs) {
  basis.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os.write(kKernelMagic, 4);
  os.write(reinterpret_cast<const char*>(&kKernelVersion), 4);
  int32_t header[5] = {basis.count(), basis.base_size(), basis.upsample, coeffs.dim(0),
                       coeffs.dim(1)};
  os.write(reinterpret_cast<const char*>(header), sizeof(header));
  os.write(reinterpret_cast<const char*>(basis.a.data()),
           static_cast<std::streamsize>(basis.a.size() * sizeof(float)));
  os.write(reinterpret_cast<const char*>(basis.b.data()),
           static_cast<std::streamsize>(basis.b.size() * sizeof(float)));
  os.write(reinterpret_cast<const char*>(coeffs.data()),
           static_cast<std::streamsize>(coeffs.size() * sizeof(float)));
  if (!os) throw std::runtime_error("short write to " + path);
}

void load_kernel_field(const std::string& path, KernelBasis& basis, Tensor<float>& coeffs) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  char magic[4];
  is.read(magic, 4);
  uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), 4);
  if (!is || std::memcmp(magic, kKernelMagic, 4) != 0 || version != kKernelVersion)
    throw std::runtime_error(path + " is not a kernel field dump");
  int32_t header[5];
  is.read(reinterpret_cast<char*>(header), sizeof(header));
  const int j = header[0], k = header[1], d = header[2], h = header[3], w = header[4];
  basis.a = Tensor<float>({j, k, k, 3});
  basis.b = Tensor<float>({j, k, k, 3});
  basis.upsample = d;
  basis.use_b = true;
  coeffs = Tensor<float>({h, w, j});
  is.read(reinterpret_cast<char*>(basis.a.data()),
          static_cast<std::streamsize>(basis.a.size() * sizeof(float)));
  is.read(reinterpret_cast<char*>(basis.b.data()),
          static_cast<std::streamsize>(basis.b.size() * sizeof(float)));
  is.read(reinterpret_cast<char*>(coeffs.data()),
          static_cast<std::streamsize>(coeffs.size() * sizeof(float)));
  if (!is) throw std::runtime_error("truncated kernel field dump " + path);
}

// explicit instantiations
template struct KernelBasisT<float>;
template struct KernelBasisT<double>;
template Tensor<float> upsample_kernel(const Tensor<float>&, int);
template Tensor<double> upsample_kernel(const Tensor<double>&, int);
template Tensor<float> effective_kernel(const KernelBasisT<float>&, int);
template Tensor<double> effective_kernel(const KernelBasisT<double>&, int);
template Tensor<float> tent_prefilter(const Tensor<float>&, int);
template Tensor<double> tent_prefilter(const Tensor<double>&, int);
template Tensor<float> basis_responses(const Tensor<float>&, const KernelBasisT<float>&, bool);
template Tensor<double> basis_responses(const Tensor<double>&, const KernelBasisT<double>&, bool);
template void basis_responses_grad(const Tensor<float>&, const KernelBasisT<float>&,
                                   const Tensor<float>&, Tensor<float>&, Tensor<float>&);
template void basis_responses_grad(const Tensor<double>&, const KernelBasisT<double>&,
                                   const Tensor<double>&, Tensor<double>&, Tensor<double>&);
template Tensor<float> coeff_mix(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> coeff_mix(const Tensor<double>&, const Tensor<double>&);
template void coeff_mix_grad(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                             Tensor<float>&, Tensor<float>&);
template void coeff_mix_grad(const Tensor<double>&, const Tensor<double>&,
                             const Tensor<double>&, Tensor<double>&, Tensor<double>&);
template Tensor<float> filter_direct(const Tensor<float>&, const KernelBasisT<float>&,
                                     const Tensor<float>&);
template Tensor<double> filter_direct(const Tensor<double>&, const KernelBasisT<double>&,
                                      const Tensor<double>&);
template Tensor<float> filter_fast(const Tensor<float>&, const KernelBasisT<float>&,
                                   const Tensor<float>&);
template Tensor<double> filter_fast(const Tensor<double>&, const KernelBasisT<double>&,
                                    const Tensor<double>&);
template Tensor<float> apply_scale_map(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> apply_scale_map(const Tensor<double>&, const Tensor<double>&);

}  // namespace fnf
