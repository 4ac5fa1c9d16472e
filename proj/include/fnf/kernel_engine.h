#pragma once

#include <string>

#include "fnf/tensor.h"

namespace fnf {

// A global set of J two-scale kernel pairs. `a` holds the fine full-resolution
// terms, `b` the coarse terms that are bilinearly upsampled by `upsample`
// before use, giving each basis element an effective footprint of
// (K-1)*upsample + 1. Values are unconstrained reals. `use_b` disables the
// coarse term (kernel footprint ablation).
template <typename T>
struct KernelBasisT {
  Tensor<T> a;  // (J, K, K, 3)
  Tensor<T> b;  // (J, K, K, 3)
  int upsample = 1;
  bool use_b = true;

  int count() const { return a.dim(0); }
  int base_size() const { return a.dim(1); }
  int footprint() const { return (base_size() - 1) * upsample + 1; }

  void validate() const;
};

using KernelBasis = KernelBasisT<float>;

// Per-pixel outputs of the prediction network.
template <typename T>
struct PredictionFieldsT {
  Tensor<T> coeffs;     // (H, W, J)
  Tensor<T> scale_map;  // (H, W, 3)
};

using PredictionFields = PredictionFieldsT<float>;

// Bilinear upsampling of a K x K x 3 kernel by factor d with align-corners
// semantics: original taps land unchanged at stride-d positions and the
// output footprint is exactly (K-1)*d + 1.
template <typename T>
Tensor<T> upsample_kernel(const Tensor<T>& b, int d);

// A_j zero-padded to the full footprint, centered, plus the upsampled B_j.
// With use_b off, returns the centered A_j alone.
template <typename T>
Tensor<T> effective_kernel(const KernelBasisT<T>& basis, int j);

// Separable tent prefilter with 1D taps (d - |i|)/d for |i| < d, zero padded.
template <typename T>
Tensor<T> tent_prefilter(const Tensor<T>& x, int d);

// Per-basis, per-channel responses P[n, j, c]. All convolutions are
// cross-correlations with zero padding and "same" output size.
// fast=false realizes each effective kernel densely (the reference path);
// fast=true uses the dense fine term plus a dilated convolution of the
// tent-prefiltered image (the production path). The two agree up to
// floating-point rounding, boundaries included.
template <typename T>
Tensor<T> basis_responses(const Tensor<T>& x, const KernelBasisT<T>& basis, bool fast);

// Gradients of the fast-path responses with respect to the basis tensors.
template <typename T>
void basis_responses_grad(const Tensor<T>& x, const KernelBasisT<T>& basis,
                          const Tensor<T>& d_responses, Tensor<T>& d_a, Tensor<T>& d_b);

// F[n, c] = sum_j coeffs[n, j] * responses[n, j, c]
template <typename T>
Tensor<T> coeff_mix(const Tensor<T>& responses, const Tensor<T>& coeffs);

template <typename T>
void coeff_mix_grad(const Tensor<T>& responses, const Tensor<T>& coeffs,
                    const Tensor<T>& d_out, Tensor<T>& d_responses, Tensor<T>& d_coeffs);

// Reference filtering: per-pixel mixtures of dense effective kernels.
template <typename T>
Tensor<T> filter_direct(const Tensor<T>& x, const KernelBasisT<T>& basis,
                        const Tensor<T>& coeffs);

// Production filtering: dense fine kernels plus dilated coarse kernels on the
// tent-prefiltered image. Falls back to filter_direct when upsample == 1.
template <typename T>
Tensor<T> filter_fast(const Tensor<T>& x, const KernelBasisT<T>& basis,
                      const Tensor<T>& coeffs);

// Elementwise product per channel.
template <typename T>
Tensor<T> apply_scale_map(const Tensor<T>& filtered, const Tensor<T>& scale_map);

// Debug dump: magic "FNFK" | u32 version | i32 J, K, d, H, W | A | B | coeffs,
// all little-endian 32-bit floats.
void save_kernel_field(const std::string& path, const KernelBasis& basis,
                       const Tensor<float>& coeffs);
void load_kernel_field(const std::string& path, KernelBasis& basis, Tensor<float>& coeffs);

}  // namespace fnf
