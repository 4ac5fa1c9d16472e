#pragma once

#include <functional>
#include <vector>

#include "fnf/image.h"
#include "fnf/kernel_engine.h"
#include "fnf/tensor.h"

namespace fnf {

// Reverse-mode tape. One Graph instance holds every tensor of one forward
// pass; ops append nodes and record their backward closures. Creation order
// is the topological order, so backward() is a single reverse sweep.
//
// Building and backward run on one thread; the heavy inner kernels (GEMMs)
// are internally threaded. Instantiated for float (training/inference) and
// double (gradient checks).

template <typename T>
struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves. Inputs never receive gradients; params do.
  Value<T> input(Tensor<T> v);
  Value<T> param(Tensor<T> v);

  const Tensor<T>& val(Value<T> v) const { return node(v.id).val; }
  const Tensor<T>& grad(Value<T> v) const;

  // x: (H, W, Ci), w: (kh, kw, Ci, Co), bias: (Co). Stride-1 cross
  // correlation, zero padded to "same" size or unpadded ("valid").
  Value<T> conv2d(Value<T> x, Value<T> w, Value<T> bias, bool same_pad = true, int dil = 1);
  Value<T> relu(Value<T> x);
  Value<T> maxpool2(Value<T> x);            // 2x2, stride 2; dims must be even
  Value<T> upsample2(Value<T> x);           // bilinear x2, half-pixel centers
  Value<T> global_avg_pool(Value<T> x);     // (H, W, C) -> (1, 1, C)
  Value<T> replicate_spatial(Value<T> x, int h, int w);  // (1,1,C) -> (h,w,C)
  Value<T> concat(Value<T> a, Value<T> b);  // along channels
  Value<T> slice_channels(Value<T> x, int c0, int c1);
  Value<T> add(Value<T> a, Value<T> b);
  Value<T> add_const(Value<T> a, Tensor<T> c);
  Value<T> mul(Value<T> a, Value<T> b);     // elementwise

  // Basis head (K, K, 6J) -> (J, K, K, 3); which = 0 selects the fine
  // kernels, 1 the coarse ones. Channel layout: j*6 + which*3 + rgb.
  Value<T> basis_part(Value<T> head, int j_count, int which);

  // Filters a fixed image with per-pixel mixtures of the two-scale basis
  // (fast path: dense fine term + dilated coarse term on the tent-prefiltered
  // image). b may be invalid when use_b is false.
  Value<T> basis_filter(const Tensor<T>& x, Value<T> a, Value<T> b, int upsample,
                        bool use_b, Value<T> coeffs);

  // Per-pixel kernels applied to a fixed image; kernels: (H, W, ks*ks*3) with
  // channel layout (ky*ks + kx)*3 + rgb, zero padding.
  Value<T> local_filter(const Tensor<T>& x, Value<T> kernels, int ksize);

  // Scalar training objective in rendered space (see loss.h).
  Value<T> render_loss(Value<T> pred, const Tensor<T>& target, const RenderParams& rp, T eta);

  void backward(Value<T> loss);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> val;
    Tensor<T> grad;
    bool needs_grad = false;
    std::function<void()> back;
  };

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  Value<T> make(Tensor<T> val, bool needs_grad, std::function<void()> back = nullptr);
  bool wants(Value<T> v) const { return v.valid() && node(v.id).needs_grad; }
  Tensor<T>& g(int id) { return nodes_[static_cast<size_t>(id)].grad; }
  const Tensor<T>& v(int id) const { return nodes_[static_cast<size_t>(id)].val; }

  std::vector<Node> nodes_;
};

}  // namespace fnf
