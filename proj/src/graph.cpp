#include "fnf/graph.h"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "conv_util.h"
#include "fnf/loss.h"

namespace fnf {

template <typename T>
Value<T> Graph<T>::make(Tensor<T> val, bool needs_grad, std::function<void()> back) {
  nodes_.push_back(Node{std::move(val), Tensor<T>(), needs_grad, std::move(back)});
  return Value<T>{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Value<T> Graph<T>::input(Tensor<T> v) {
  return make(std::move(v), false);
}

template <typename T>
Value<T> Graph<T>::param(Tensor<T> v) {
  return make(std::move(v), true);
}

template <typename T>
const Tensor<T>& Graph<T>::grad(Value<T> v) const {
  const Node& n = node(v.id);
  if (!n.needs_grad || n.grad.empty())
    throw std::logic_error("gradient not available; run backward first");
  return n.grad;
}

template <typename T>
void Graph<T>::backward(Value<T> loss) {
  if (v(loss.id).size() != 1) throw std::invalid_argument("backward target must be scalar");
  if (!node(loss.id).needs_grad)
    throw std::invalid_argument("backward target does not depend on any parameter");
  for (auto& n : nodes_)
    if (n.needs_grad) n.grad = Tensor<T>::zeros_like(n.val);
  node(loss.id).grad.data()[0] = T(1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = node(i);
    if (n.back && n.needs_grad) n.back();
  }
}

// ---------------------------------------------------------------------------

template <typename T>
Value<T> Graph<T>::conv2d(Value<T> x, Value<T> w, Value<T> bias, bool same_pad, int dil) {
  const Tensor<T>& xv = v(x.id);
  const Tensor<T>& wv = v(w.id);
  const Tensor<T>& bv = v(bias.id);
  if (xv.ndim() != 3 || wv.ndim() != 4 || bv.ndim() != 1)
    throw std::invalid_argument("conv2d: bad ranks");
  const int h = xv.dim(0), wd = xv.dim(1), ci = xv.dim(2);
  const int kh = wv.dim(0), kw = wv.dim(1), co = wv.dim(3);
  if (wv.dim(2) != ci || bv.dim(0) != co) throw std::invalid_argument("conv2d: shape mismatch");
  if (same_pad && (kh % 2 == 0 || kw % 2 == 0))
    throw std::invalid_argument("conv2d: same padding needs odd kernels");

  const conv::Geom geom = same_pad ? conv::same_geom(h, wd, kh, dil) : conv::valid_geom(h, wd, kh, kw);
  const int64_t npatch = static_cast<int64_t>(geom.out_h) * geom.out_w;
  const int64_t cols = static_cast<int64_t>(kh) * kw * ci;

  auto& patches = conv::scratch<T>(static_cast<size_t>(npatch * cols), 0);
  conv::im2col(xv.data(), h, wd, ci, geom, patches.data());

  Tensor<T> out({geom.out_h, geom.out_w, co});
  conv::gemm(patches.data(), wv.data(), out.data(), npatch, cols, co);
  T* o = out.data();
  const T* bp = bv.data();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < npatch; ++i)
    for (int c = 0; c < co; ++c) o[i * co + c] += bp[c];

  bool needs = wants(x) || wants(w) || wants(bias);
  Value<T> outv = make(std::move(out), needs);
  if (!needs) return outv;

  int xid = x.id, wid = w.id, bid = bias.id, oid = outv.id;
  auto back = [this, xid, wid, bid, oid, geom, h, wd, ci, kh, kw, co, npatch, cols]() {
    const Tensor<T>& dout = g(oid);
    if (node(bid).needs_grad) {
      T* db = g(bid).data();
      const T* dp = dout.data();
      for (int64_t i = 0; i < npatch; ++i)
        for (int c = 0; c < co; ++c) db[c] += dp[i * co + c];
    }
    if (node(wid).needs_grad) {
      auto& patches = conv::scratch<T>(static_cast<size_t>(npatch * cols), 0);
      conv::im2col(v(xid).data(), h, wd, ci, geom, patches.data());
      auto& dw = conv::scratch<T>(static_cast<size_t>(cols) * co, 1);
      conv::gemm_tn(patches.data(), dout.data(), dw.data(), npatch, cols, co);
      T* gw = g(wid).data();
      for (int64_t i = 0; i < static_cast<int64_t>(cols) * co; ++i) gw[i] += dw[i];
    }
    if (node(xid).needs_grad) {
      // dX = dout correlated with the flipped kernel, in/out channels swapped
      Tensor<T> wf({kh, kw, co, ci});
      const Tensor<T>& wv2 = v(wid);
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx)
          for (int i = 0; i < ci; ++i)
            for (int c = 0; c < co; ++c)
              wf.at(ky, kx, c, i) = wv2.at(kh - 1 - ky, kw - 1 - kx, i, c);
      conv::Geom gb;
      gb.kh = kh;
      gb.kw = kw;
      gb.dil = geom.dil;
      gb.pad_y = (kh - 1) * geom.dil - geom.pad_y;
      gb.pad_x = (kw - 1) * geom.dil - geom.pad_x;
      gb.out_h = h;
      gb.out_w = wd;
      const int64_t n2 = static_cast<int64_t>(h) * wd;
      const int64_t cols2 = static_cast<int64_t>(kh) * kw * co;
      auto& patches = conv::scratch<T>(static_cast<size_t>(n2 * cols2), 0);
      conv::im2col(dout.data(), geom.out_h, geom.out_w, co, gb, patches.data());
      auto& dx = conv::scratch<T>(static_cast<size_t>(n2) * ci, 1);
      conv::gemm(patches.data(), wf.data(), dx.data(), n2, cols2, ci);
      T* gx = g(xid).data();
      for (int64_t i = 0; i < n2 * ci; ++i) gx[i] += dx[i];
    }
  };
  node(oid).back = std::move(back);
  return outv;
}

template <typename T>
Value<T> Graph<T>::relu(Value<T> x) {
  const Tensor<T>& xv = v(x.id);
  Tensor<T> out = xv;
  for (int64_t i = 0; i < out.size(); ++i)
    if (out.data()[i] < T(0)) out.data()[i] = T(0);
  bool needs = wants(x);
  Value<T> outv = make(std::move(out), needs);
  if (!needs) return outv;
  int xid = x.id, oid = outv.id;
  node(oid).back = [this, xid, oid]() {
    const Tensor<T>& dout = g(oid);
    const Tensor<T>& xv2 = v(xid);
    T* gx = g(xid).data();
    for (int64_t i = 0; i < dout.size(); ++i)
      if (xv2.data()[i] > T(0)) gx[i] += dout.data()[i];
  };
  return outv;
}

template <typename T>
Value<T> Graph<T>::maxpool2(Value<T> x) {
  const Tensor<T>& xv = v(x.id);
  const int h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
  if (h % 2 || w % 2) throw std::invalid_argument("maxpool2: dims must be even");
  const int oh = h / 2, ow = w / 2;
  Tensor<T> out({oh, ow, c});
  auto idx = std::make_shared<std::vector<int64_t>>(out.size());
  for (int y = 0; y < oh; ++y)
    for (int xo = 0; xo < ow; ++xo)
      for (int ch = 0; ch < c; ++ch) {
        T best = -std::numeric_limits<T>::infinity();
        int64_t best_i = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            int64_t i = (static_cast<int64_t>(2 * y + dy) * w + (2 * xo + dx)) * c + ch;
            if (xv.data()[i] > best) {
              best = xv.data()[i];
              best_i = i;
            }
          }
        out.at(y, xo, ch) = best;
        (*idx)[(static_cast<int64_t>(y) * ow + xo) * c + ch] = best_i;
      }
  bool needs = wants(x);
  Value<T> outv = make(std::move(out), needs);
  if (!needs) return outv;
  int xid = x.id, oid = outv.id;
  node(oid).back = [this, xid, oid, idx]() {
    const Tensor<T>& dout = g(oid);
    T* gx = g(xid).data();
    for (int64_t i = 0; i < dout.size(); ++i) gx[(*idx)[i]] += dout.data()[i];
  };
  return outv;
}

namespace {

// half-pixel bilinear taps for factor-2 upsampling
struct UpTaps {
  std::vector<int> i0, i1;
  std::vector<float> w1;  // weight of i1; weight of i0 is 1 - w1
};

inline UpTaps up2_taps(int n) {
  UpTaps t;
  const int m = 2 * n;
  t.i0.resize(m);
  t.i1.resize(m);
  t.w1.resize(m);
  for (int o = 0; o < m; ++o) {
    double src = (o + 0.5) / 2.0 - 0.5;
    double f = std::floor(src);
    double w1 = src - f;
    int i0 = static_cast<int>(f);
    int i1 = i0 + 1;
    if (i0 < 0) { i0 = 0; }
    if (i1 > n - 1) { i1 = n - 1; }
    if (i0 > n - 1) { i0 = n - 1; }
    t.i0[o] = i0;
    t.i1[o] = i1;
    t.w1[o] = static_cast<float>(w1);
  }
  return t;
}

}  // namespace

template <typename T>
Value<T> Graph<T>::upsample2(Value<T> x) {
  const Tensor<T>& xv = v(x.id);
  const int h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
  const int oh = 2 * h, ow = 2 * w;
  auto ty = std::make_shared<UpTaps>(up2_taps(h));
  auto tx = std::make_shared<UpTaps>(up2_taps(w));

  Tensor<T> out({oh, ow, c});
#pragma omp parallel for schedule(static)
  for (int y = 0; y < oh; ++y) {
    const T wy1 = static_cast<T>(ty->w1[y]);
    const T* row0 = xv.data() + static_cast<size_t>(ty->i0[y]) * w * c;
    const T* row1 = xv.data() + static_cast<size_t>(ty->i1[y]) * w * c;
    T* orow = out.data() + static_cast<size_t>(y) * ow * c;
    for (int xo = 0; xo < ow; ++xo) {
      const T wx1 = static_cast<T>(tx->w1[xo]);
      const T* p00 = row0 + static_cast<size_t>(tx->i0[xo]) * c;
      const T* p01 = row0 + static_cast<size_t>(tx->i1[xo]) * c;
      const T* p10 = row1 + static_cast<size_t>(tx->i0[xo]) * c;
      const T* p11 = row1 + static_cast<size_t>(tx->i1[xo]) * c;
      for (int ch = 0; ch < c; ++ch) {
        T top = (T(1) - wx1) * p00[ch] + wx1 * p01[ch];
        T bot = (T(1) - wx1) * p10[ch] + wx1 * p11[ch];
        orow[static_cast<size_t>(xo) * c + ch] = (T(1) - wy1) * top + wy1 * bot;
      }
    }
  }
  bool needs = wants(x);
  Value<T> outv = make(std::move(out), needs);
  if (!needs) return outv;
  int xid = x.id, oid = outv.id;
  node(oid).back = [this, xid, oid, ty, tx, h, w, c, oh, ow]() {
    const Tensor<T>& dout = g(oid);
    T* gx = g(xid).data();
    for (int y = 0; y < oh; ++y) {
      const T wy1 = static_cast<T>(ty->w1[y]);
      T* grow0 = gx + static_cast<size_t>(ty->i0[y]) * w * c;
      T* grow1 = gx + static_cast<size_t>(ty->i1[y]) * w * c;
      const T* drow = dout.data() + static_cast<size_t>(y) * ow * c;
      for (int xo = 0; xo < ow; ++xo) {
        const T wx1 = static_cast<T>(tx->w1[xo]);
        for (int ch = 0; ch < c; ++ch) {
          T d = drow[static_cast<size_t>(xo) * c + ch];
          grow0[static_cast<size_t>(tx->i0[xo]) * c + ch] += (T(1) - wy1) * (T(1) - wx1) * d;
          grow0[static_cast<size_t>(tx->i1[xo]) * c + ch] += (T(1) - wy1) * wx1 * d;
          grow1[static_cast<size_t>(tx->i0[xo]) * c + ch] += wy1 * (T(1) - wx1) * d;
          grow1[static_cast<size_t>(tx->i1[xo]) * c + ch] += wy1 * wx1 * d;
        }
      }
    }
  };
  return outv;
}

template <typename T>
Value<T> Graph<T>::global_avg_pool(Value<T> x) {
  const Tensor<T>& xv = v(x.id);
  const int h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
  const int64_t npix = static_cast<int64_t>(h) * w;
  Tensor<T> out({1, 1, c});
  for (int64_t i = 0; i < npix; ++i)
    for (int ch = 0; ch < c; ++ch) out.data()[ch] += xv.data()[i * c + ch];
  for (int ch = 0; ch < c; ++ch) out.data()[ch] /= static_cast<T>(npix);
  bool needs = wants(x);
  Value<T> outv = make(std::move(out), needs);
  if (!needs) return outv;
  int xid = x.id, oid = outv.id;
  node(oid).back = [this, xid, oid, npix, c]() {
    const Tensor<T>& dout = g(oid);
    T* gx = g(xid).data();
    for (int64_t i = 0; i < npix; ++i)
      for (int ch = 0; ch < c; ++ch)
        gx[i * c + ch] += dout.data()[ch] / static_cast<T>(npix);
  };
  return outv;
}

template <typename T>
Value<T> Graph<T>::replicate_spatial(Value<T> x, int h, int w) {
  const Tensor<T>& xv = v(x.id);
  if (xv.ndim() != 3 || xv.dim(0) != 1 || xv.dim(1) != 1)
    throw std::invalid_argument("replicate_spatial expects (1,1,C)");
  const int c = xv.dim(2);
  Tensor<T> out({h, w, c});
  const int64_t npix = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < npix; ++i)
    std::memcpy(out.data() + i * c, xv.data(), sizeof(T) * c);
  bool needs = wants(x);
  Value<T> outv = make(std::move(out), needs);
  if (!needs) return outv;
  int xid = x.id, oid = outv.id;
  node(oid).back = [this, xid, oid, npix, c]() {
    const Tensor<T>& dout = g(oid);
    T* gx = g(xid).data();
    for (int64_t i = 0; i < npix; ++i)
      for (int ch = 0; ch < c; ++ch) gx[ch] += dout.data()[i * c + ch];
  };
  return outv;
}

template <typename T>
Value<T> Graph<T>::concat(Value<T> a, Value<T> b) {
  const Tensor<T>& av = v(a.id);
  const Tensor<T>& bv = v(b.id);
  if (av.dim(0) != bv.dim(0) || av.dim(1) != bv.dim(1))
    throw std::invalid_argument("concat: spatial dims differ");
  const int h = av.dim(0), w = av.dim(1), ca = av.dim(2), cb = bv.dim(2);
  Tensor<T> out({h, w, ca + cb});
  const int64_t npix = static_cast<int64_t>(h) * w;
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < npix; ++i) {
    std::memcpy(out.data() + i * (ca + cb), av.data() + i * ca, sizeof(T) * ca);
    std::memcpy(out.data() + i * (ca + cb) + ca, bv.data() + i * cb, sizeof(T) * cb);
  }
  bool needs = wants(a) || wants(b);
  Value<T> outv = make(std::move(out), needs);
  if (!needs) return outv;
  int aid = a.id, bid = b.id, oid = outv.id;
  node(oid).back = [this, aid, bid, oid, npix, ca, cb]() {
    const Tensor<T>& dout = g(oid);
    if (node(aid).needs_grad) {
      T* ga = g(aid).data();
      for (int64_t i = 0; i < npix; ++i)
        for (int ch = 0; ch < ca; ++ch) ga[i * ca + ch] += dout.data()[i * (ca + cb) + ch];
    }
    if (node(bid).needs_grad) {
      T* gb = g(bid).data();
      for (int64_t i = 0; i < npix; ++i)
        for (int ch = 0; ch < cb; ++ch)
          gb[i * cb + ch] += dout.data()[i * (ca + cb) + ca + ch];
    }
  };
  return outv;
}

template <typename T>
Value<T> Graph<T>::slice_channels(Value<T> x, int c0, int c1) {
  const Tensor<T>& xv = v(x.id);
  const int h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
  if (c0 < 0 || c1 > c || c0 >= c1) throw std::invalid_argument("slice_channels: bad range");
  const int cs = c1 - c0;
  const int64_t npix = static_cast<int64_t>(h) * w;
  Tensor<T> out({h, w, cs});
  for (int64_t i = 0; i < npix; ++i)
    std::memcpy(out.data() + i * cs, xv.data() + i * c + c0, sizeof(T) * cs);
  bool needs = wants(x);
  Value<T> outv = make(std::move(out), needs);
  if (!needs) return outv;
  int xid = x.id, oid = outv.id;
  node(oid).back = [this, xid, oid, npix, c, c0, cs]() {
    const Tensor<T>& dout = g(oid);
    T* gx = g(xid).data();
    for (int64_t i = 0; i < npix; ++i)
      for (int ch = 0; ch < cs; ++ch) gx[i * c + c0 + ch] += dout.data()[i * cs + ch];
  };
  return outv;
}

template <typename T>
Value<T> Graph<T>::add(Value<T> a, Value<T> b) {
  const Tensor<T>& av = v(a.id);
  const Tensor<T>& bv = v(b.id);
  if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
  Tensor<T> out = av;
  for (int64_t i = 0; i < out.size(); ++i) out.data()[i] += bv.data()[i];
  bool needs = wants(a) || wants(b);
  Value<T> outv = make(std::move(out), needs);
  if (!needs) return outv;
  int aid = a.id, bid = b.id, oid = outv.id;
  node(oid).back = [this, aid, bid, oid]() {
    const Tensor<T>& dout = g(oid);
    if (node(aid).needs_grad) {
      T* ga = g(aid).data();
      for (int64_t i = 0; i < dout.size(); ++i) ga[i] += dout.data()[i];
    }
    if (node(bid).needs_grad) {
      T* gb = g(bid).data();
      for (int64_t i = 0; i < dout.size(); ++i) gb[i] += dout.data()[i];
    }
  };
  return outv;
}

template <typename T>
Value<T> Graph<T>::add_const(Value<T> a, Tensor<T> c) {
  return add(a, input(std::move(c)));
}

template <typename T>
Value<T> Graph<T>::mul(Value<T> a, Value<T> b) {
  const Tensor<T>& av = v(a.id);
  const Tensor<T>& bv = v(b.id);
  if (!av.same_shape(bv)) throw std::invalid_argument("mul: shape mismatch");
  Tensor<T> out = av;
  for (int64_t i = 0; i < out.size(); ++i) out.data()[i] *= bv.data()[i];
  bool needs = wants(a) || wants(b);
  Value<T> outv = make(std::move(out), needs);
  if (!needs) return outv;
  int aid = a.id, bid = b.id, oid = outv.id;
  node(oid).back = [this, aid, bid, oid]() {
    const Tensor<T>& dout = g(oid);
    if (node(aid).needs_grad) {
      T* ga = g(aid).data();
      const T* bv2 = v(bid).data();
      for (int64_t i = 0; i < dout.size(); ++i) ga[i] += dout.data()[i] * bv2[i];
    }
    if (node(bid).needs_grad) {
      T* gb = g(bid).data();
      const T* av2 = v(aid).data();
      for (int64_t i = 0; i < dout.size(); ++i) gb[i] += dout.data()[i] * av2[i];
    }
  };
  return outv;
}

template <typename T>
Value<T> Graph<T>::basis_part(Value<T> head, int j_count, int which) {
  const Tensor<T>& hv = v(head.id);
  const int k = hv.dim(0);
  if (hv.dim(1) != k) throw std::invalid_argument("basis_part: head must be square");
  const int stride = hv.dim(2) / j_count;  // 6 with both kernel sets, 3 with one
  if (hv.dim(2) % j_count != 0 || which * 3 + 3 > stride)
    throw std::invalid_argument("basis_part: head channels do not match basis layout");
  Tensor<T> out({j_count, k, k, 3});
  for (int j = 0; j < j_count; ++j)
    for (int y = 0; y < k; ++y)
      for (int x = 0; x < k; ++x)
        for (int c = 0; c < 3; ++c)
          out.at(j, y, x, c) = hv.at(y, x, j * stride + which * 3 + c);
  bool needs = wants(head);
  Value<T> outv = make(std::move(out), needs);
  if (!needs) return outv;
  int hid = head.id, oid = outv.id;
  node(oid).back = [this, hid, oid, j_count, k, stride, which]() {
    const Tensor<T>& dout = g(oid);
    Tensor<T>& gh = g(hid);
    for (int j = 0; j < j_count; ++j)
      for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x)
          for (int c = 0; c < 3; ++c)
            gh.at(y, x, j * stride + which * 3 + c) += dout.at(j, y, x, c);
  };
  return outv;
}

template <typename T>
Value<T> Graph<T>::basis_filter(const Tensor<T>& x, Value<T> a, Value<T> b, int upsample,
                                bool use_b, Value<T> coeffs) {
  KernelBasisT<T> basis;
  basis.a = v(a.id);
  basis.b = use_b && b.valid() ? v(b.id) : Tensor<T>::zeros_like(v(a.id));
  basis.upsample = upsample;
  basis.use_b = use_b;
  basis.validate();

  auto responses =
      std::make_shared<Tensor<T>>(basis_responses(x, basis, /*fast=*/true));
  Tensor<T> out = coeff_mix(*responses, v(coeffs.id));

  bool needs = wants(a) || (use_b && wants(b)) || wants(coeffs);
  Value<T> outv = make(std::move(out), needs);
  if (!needs) return outv;
  int aid = a.id, bid = b.valid() ? b.id : -1, cid = coeffs.id, oid = outv.id;
  auto xcopy = std::make_shared<Tensor<T>>(x);
  node(oid).back = [this, aid, bid, cid, oid, xcopy, responses, upsample, use_b]() {
    const Tensor<T>& dout = g(oid);
    Tensor<T> d_resp, d_coeffs;
    coeff_mix_grad(*responses, v(cid), dout, d_resp, d_coeffs);
    if (node(cid).needs_grad) {
      T* gc = g(cid).data();
      for (int64_t i = 0; i < d_coeffs.size(); ++i) gc[i] += d_coeffs.data()[i];
    }
    KernelBasisT<T> basis;
    basis.a = v(aid);
    basis.b = use_b && bid >= 0 ? v(bid) : Tensor<T>::zeros_like(v(aid));
    basis.upsample = upsample;
    basis.use_b = use_b;
    Tensor<T> d_a, d_b;
    basis_responses_grad(*xcopy, basis, d_resp, d_a, d_b);
    if (node(aid).needs_grad) {
      T* ga = g(aid).data();
      for (int64_t i = 0; i < d_a.size(); ++i) ga[i] += d_a.data()[i];
    }
    if (use_b && bid >= 0 && node(bid).needs_grad) {
      T* gb = g(bid).data();
      for (int64_t i = 0; i < d_b.size(); ++i) gb[i] += d_b.data()[i];
    }
  };
  return outv;
}

template <typename T>
Value<T> Graph<T>::local_filter(const Tensor<T>& x, Value<T> kernels, int ksize) {
  require_hw3(x, "local_filter");
  const Tensor<T>& kv = v(kernels.id);
  const int h = x.dim(0), w = x.dim(1);
  if (ksize % 2 == 0) throw std::invalid_argument("local_filter: kernel size must be odd");
  if (kv.dim(0) != h || kv.dim(1) != w || kv.dim(2) != ksize * ksize * 3)
    throw std::invalid_argument("local_filter: kernel field shape mismatch");
  const int half = ksize / 2;

  Tensor<T> out({h, w, 3});
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int xo = 0; xo < w; ++xo) {
      T acc[3] = {T(0), T(0), T(0)};
      for (int ky = 0; ky < ksize; ++ky) {
        const int sy = y + ky - half;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < ksize; ++kx) {
          const int sx = xo + kx - half;
          if (sx < 0 || sx >= w) continue;
          const int t = ky * ksize + kx;
          for (int c = 0; c < 3; ++c)
            acc[c] += kv.at(y, xo, t * 3 + c) * x.at(sy, sx, c);
        }
      }
      for (int c = 0; c < 3; ++c) out.at(y, xo, c) = acc[c];
    }
  }
  bool needs = wants(kernels);
  Value<T> outv = make(std::move(out), needs);
  if (!needs) return outv;
  int kid = kernels.id, oid = outv.id;
  auto xcopy = std::make_shared<Tensor<T>>(x);
  node(oid).back = [this, kid, oid, xcopy, ksize, h, w, half]() {
    const Tensor<T>& dout = g(oid);
    Tensor<T>& gk = g(kid);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
      for (int xo = 0; xo < w; ++xo) {
        for (int ky = 0; ky < ksize; ++ky) {
          const int sy = y + ky - half;
          if (sy < 0 || sy >= h) continue;
          for (int kx = 0; kx < ksize; ++kx) {
            const int sx = xo + kx - half;
            if (sx < 0 || sx >= w) continue;
            const int t = ky * ksize + kx;
            for (int c = 0; c < 3; ++c)
              gk.at(y, xo, t * 3 + c) += xcopy->at(sy, sx, c) * dout.at(y, xo, c);
          }
        }
      }
    }
  };
  return outv;
}

template <typename T>
Value<T> Graph<T>::render_loss(Value<T> pred, const Tensor<T>& target, const RenderParams& rp,
                               T eta) {
  auto d_pred = std::make_shared<Tensor<T>>();
  T loss = pair_loss_grad(v(pred.id), target, rp, eta, *d_pred);
  Tensor<T> out({1});
  out.at(0) = loss;
  bool needs = wants(pred);
  Value<T> outv = make(std::move(out), needs);
  if (!needs) return outv;
  int pid = pred.id, oid = outv.id;
  node(oid).back = [this, pid, oid, d_pred]() {
    const T scale = g(oid).data()[0];
    T* gp = g(pid).data();
    for (int64_t i = 0; i < d_pred->size(); ++i) gp[i] += scale * d_pred->data()[i];
  };
  return outv;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace fnf
