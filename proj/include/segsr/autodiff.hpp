#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "segsr/gemm.hpp"
#include "segsr/tensor.hpp"

namespace segsr {

// ---------------------------------------------------------------------------
// Reverse-mode tape. One tape per sample per step; ids are ints into the node
// vector, so reverse id order is a valid backward order. Templated on the
// scalar so gradient checks can run the identical graph in double.
// ---------------------------------------------------------------------------

// Scratch buffers reused across conv calls on the same thread; writing every
// element (zeros included) avoids re-zeroing multi-MB buffers per call.
template <class T>
std::vector<T>& conv_scratch(int which) {
  static thread_local std::vector<T> bufs[2];
  return bufs[size_t(which)];
}

template <class T>
void im2col(const Tensor<T>& x, int kh, int kw, int stride, int pad, int Ho, int Wo,
            std::vector<T>& cols) {
  const int C = x.shape[0], H = x.shape[1], W = x.shape[2];
  const int64_t plane = int64_t(Ho) * Wo;
  if (int64_t(cols.size()) < int64_t(C) * kh * kw * plane)
    cols.resize(size_t(C) * kh * kw * plane);
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        T* dst = cols.data() + (int64_t(c) * kh * kw + int64_t(ky) * kw + kx) * plane;
        for (int oy = 0; oy < Ho; ++oy, dst += Wo) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            for (int ox = 0; ox < Wo; ++ox) dst[ox] = T(0);
            continue;
          }
          const T* src = x.data() + (int64_t(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
}

template <class T>
void col2im_add(const std::vector<T>& cols, int C, int H, int W, int kh, int kw, int stride,
                int pad, int Ho, int Wo, Tensor<T>& dx) {
  const int64_t plane = int64_t(Ho) * Wo;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const T* src = cols.data() + (int64_t(c) * kh * kw + int64_t(ky) * kw + kx) * plane;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          T* dst = dx.data() + (int64_t(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += src[int64_t(oy) * Wo + ox];
          }
        }
      }
}

template <class T>
class Tape {
 public:
  struct Node {
    Tensor<T> val;
    Tensor<T> grad;  // empty until touched by backward
    bool rg = false;
    std::function<void(Tape&)> back;  // null for leaves
  };

  bool grad_enabled = true;

  int leaf(Tensor<T> v, bool requires_grad = false) {
    Node n;
    n.val = std::move(v);
    n.rg = requires_grad && grad_enabled;
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
  }

  const Tensor<T>& val(int id) const { return nodes_[size_t(id)].val; }
  bool rg(int id) const { return nodes_[size_t(id)].rg; }
  size_t size() const { return nodes_.size(); }

  Tensor<T>& grad_ref(int id) {
    Node& n = nodes_[size_t(id)];
    if (n.grad.v.empty()) n.grad = Tensor<T>::zeros(n.val.shape);
    return n.grad;
  }
  // grad after backward(); zeros if the node was never reached
  const Tensor<T>& grad(int id) { return grad_ref(id); }

  void backward(int loss_id) {
    require(nodes_[size_t(loss_id)].val.numel() == 1, "backward needs a scalar loss");
    grad_ref(loss_id).v[0] = T(1);
    for (int id = loss_id; id >= 0; --id) {
      Node& n = nodes_[size_t(id)];
      if (n.back && n.rg && !n.grad.v.empty()) n.back(*this);
    }
  }

  // ---- ops -----------------------------------------------------------------

  int add(int a, int b) {
    const auto& av = val(a);
    const auto& bv = val(b);
    require(av.same_shape(bv), "add: shape mismatch " + shape_str(av) + " vs " + shape_str(bv));
    Tensor<T> out = av;
    for (int64_t i = 0; i < out.numel(); ++i) out.v[size_t(i)] += bv.v[size_t(i)];
    return make(std::move(out), {a, b}, [a, b](Tape& t) {
      const Tensor<T>& g = t.nodes_[t.cur_].grad;
      if (t.rg(a)) t.accum(a, g);
      if (t.rg(b)) t.accum(b, g);
    });
  }

  int scale(int x, T c) {
    Tensor<T> out = val(x);
    for (auto& v : out.v) v *= c;
    return make(std::move(out), {x}, [x, c](Tape& t) {
      if (!t.rg(x)) return;
      const Tensor<T>& g = t.nodes_[t.cur_].grad;
      Tensor<T>& gx = t.grad_ref(x);
      for (int64_t i = 0; i < g.numel(); ++i) gx.v[size_t(i)] += c * g.v[size_t(i)];
    });
  }

  // x[C,H,W] + bias[C] broadcast over H,W (time-embedding injection)
  int add_channel_bias(int x, int bias) {
    const auto& xv = val(x);
    const auto& bv = val(bias);
    require(xv.shape.size() == 3 && bv.shape == std::vector<int>{xv.shape[0]},
            "add_channel_bias: bias must be [C]");
    const int C = xv.shape[0];
    const int64_t hw = int64_t(xv.shape[1]) * xv.shape[2];
    Tensor<T> out = xv;
    for (int c = 0; c < C; ++c) {
      const T b = bv.v[size_t(c)];
      T* p = out.data() + int64_t(c) * hw;
      for (int64_t i = 0; i < hw; ++i) p[i] += b;
    }
    return make(std::move(out), {x, bias}, [x, bias, C, hw](Tape& t) {
      const Tensor<T>& g = t.nodes_[t.cur_].grad;
      if (t.rg(x)) t.accum(x, g);
      if (t.rg(bias)) {
        Tensor<T>& gb = t.grad_ref(bias);
        for (int c = 0; c < C; ++c) {
          T acc = 0;
          const T* p = g.data() + int64_t(c) * hw;
          for (int64_t i = 0; i < hw; ++i) acc += p[i];
          gb.v[size_t(c)] += acc;
        }
      }
    });
  }

  int silu(int x) {
    const auto& xv = val(x);
    Tensor<T> out;
    out.shape = xv.shape;
    out.v.resize(xv.v.size());
    for (size_t i = 0; i < xv.v.size(); ++i) {
      const T s = T(1) / (T(1) + std::exp(-xv.v[i]));
      out.v[i] = xv.v[i] * s;
    }
    return make(std::move(out), {x}, [x](Tape& t) {
      if (!t.rg(x)) return;
      const Tensor<T>& g = t.nodes_[t.cur_].grad;
      const Tensor<T>& xv = t.val(x);
      Tensor<T>& gx = t.grad_ref(x);
      for (size_t i = 0; i < xv.v.size(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-xv.v[i]));
        gx.v[i] += g.v[i] * s * (T(1) + xv.v[i] * (T(1) - s));
      }
    });
  }

  // feat * (1 + gamma) + beta, all same shape
  int sft(int feat, int gamma, int beta) {
    const auto& f = val(feat);
    require(f.same_shape(val(gamma)) && f.same_shape(val(beta)), "sft: shape mismatch");
    Tensor<T> out;
    out.shape = f.shape;
    out.v.resize(f.v.size());
    const auto& gv = val(gamma);
    const auto& bv = val(beta);
    for (size_t i = 0; i < f.v.size(); ++i) out.v[i] = f.v[i] * (T(1) + gv.v[i]) + bv.v[i];
    return make(std::move(out), {feat, gamma, beta}, [feat, gamma, beta](Tape& t) {
      const Tensor<T>& g = t.nodes_[t.cur_].grad;
      const Tensor<T>& f = t.val(feat);
      const Tensor<T>& gv = t.val(gamma);
      if (t.rg(feat)) {
        Tensor<T>& gf = t.grad_ref(feat);
        for (size_t i = 0; i < g.v.size(); ++i) gf.v[i] += g.v[i] * (T(1) + gv.v[i]);
      }
      if (t.rg(gamma)) {
        Tensor<T>& gg = t.grad_ref(gamma);
        for (size_t i = 0; i < g.v.size(); ++i) gg.v[i] += g.v[i] * f.v[i];
      }
      if (t.rg(beta)) t.accum(beta, g);
    });
  }

  int concat_ch(int a, int b) {
    const auto& av = val(a);
    const auto& bv = val(b);
    require(av.shape.size() == 3 && bv.shape.size() == 3 && av.shape[1] == bv.shape[1] &&
                av.shape[2] == bv.shape[2],
            "concat_ch: spatial mismatch");
    const int Ca = av.shape[0], Cb = bv.shape[0];
    Tensor<T> out({Ca + Cb, av.shape[1], av.shape[2]});
    std::copy(av.v.begin(), av.v.end(), out.v.begin());
    std::copy(bv.v.begin(), bv.v.end(), out.v.begin() + av.v.size());
    return make(std::move(out), {a, b}, [a, b](Tape& t) {
      const Tensor<T>& g = t.nodes_[t.cur_].grad;
      const int64_t na = t.val(a).numel();
      if (t.rg(a)) {
        Tensor<T>& ga = t.grad_ref(a);
        for (int64_t i = 0; i < na; ++i) ga.v[size_t(i)] += g.v[size_t(i)];
      }
      if (t.rg(b)) {
        Tensor<T>& gb = t.grad_ref(b);
        for (int64_t i = 0; i < t.val(b).numel(); ++i) gb.v[size_t(i)] += g.v[size_t(na + i)];
      }
    });
  }

  int upsample_nearest(int x, int factor) {
    const auto& xv = val(x);
    require(xv.shape.size() == 3 && factor >= 1, "upsample_nearest: bad input");
    const int C = xv.shape[0], H = xv.shape[1], W = xv.shape[2];
    Tensor<T> out({C, H * factor, W * factor});
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H * factor; ++y) {
        const T* src = xv.data() + (int64_t(c) * H + y / factor) * W;
        T* dst = out.data() + (int64_t(c) * H * factor + y) * (int64_t(W) * factor);
        for (int xo = 0; xo < W * factor; ++xo) dst[xo] = src[xo / factor];
      }
    return make(std::move(out), {x}, [x, factor, C, H, W](Tape& t) {
      if (!t.rg(x)) return;
      const Tensor<T>& g = t.nodes_[t.cur_].grad;
      Tensor<T>& gx = t.grad_ref(x);
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < H * factor; ++y) {
          const T* src = g.data() + (int64_t(c) * H * factor + y) * (int64_t(W) * factor);
          T* dst = gx.data() + (int64_t(c) * H + y / factor) * W;
          for (int xo = 0; xo < W * factor; ++xo) dst[xo / factor] += src[xo];
        }
    });
  }

  // y[Co,Ho,Wo] = w[Co,Ci,kh,kw] * x[Ci,H,W] (+ b[Co]); pad = same-style int
  int conv2d(int x, int w, int b, int stride, int pad) {
    const auto& xv = val(x);
    const auto& wv = val(w);
    require(xv.shape.size() == 3 && wv.shape.size() == 4, "conv2d: bad ranks");
    require(wv.shape[1] == xv.shape[0], "conv2d: in-channel mismatch, x " + shape_str(xv) +
                                            " vs w " + shape_str(wv));
    const int Ci = xv.shape[0], H = xv.shape[1], W = xv.shape[2];
    const int Co = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3];
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    require(Ho >= 1 && Wo >= 1, "conv2d: empty output");
    const int64_t plane = int64_t(Ho) * Wo;
    const int Kdim = Ci * kh * kw;

    Tensor<T> out({Co, Ho, Wo});
    if (kh == 1 && kw == 1 && stride == 1 && pad == 0) {
      gemm(Co, int(plane), Ci, T(1), wv.data(), false, xv.data(), false, T(0), out.data());
    } else {
      std::vector<T>& cols = conv_scratch<T>(0);
      im2col(xv, kh, kw, stride, pad, Ho, Wo, cols);
      gemm(Co, int(plane), Kdim, T(1), wv.data(), false, cols.data(), false, T(0), out.data());
    }
    if (b >= 0) {
      const auto& bv = val(b);
      require(bv.shape == std::vector<int>{Co}, "conv2d: bias must be [Co]");
      for (int c = 0; c < Co; ++c) {
        const T bb = bv.v[size_t(c)];
        T* p = out.data() + int64_t(c) * plane;
        for (int64_t i = 0; i < plane; ++i) p[i] += bb;
      }
    }

    std::vector<int> ins = b >= 0 ? std::vector<int>{x, w, b} : std::vector<int>{x, w};
    return make(std::move(out), ins,
                [x, w, b, stride, pad, Ci, H, W, Co, kh, kw, Ho, Wo, Kdim, plane](Tape& t) {
      const Tensor<T>& g = t.nodes_[t.cur_].grad;
      const bool onebyone = kh == 1 && kw == 1 && stride == 1 && pad == 0;
      if (b >= 0 && t.rg(b)) {
        Tensor<T>& gb = t.grad_ref(b);
        for (int c = 0; c < Co; ++c) {
          T acc = 0;
          const T* p = g.data() + int64_t(c) * plane;
          for (int64_t i = 0; i < plane; ++i) acc += p[i];
          gb.v[size_t(c)] += acc;
        }
      }
      std::vector<T>& cols = conv_scratch<T>(0);
      if (!onebyone && (t.rg(w) || t.rg(x)))
        im2col(t.val(x), kh, kw, stride, pad, Ho, Wo, cols);  // recomputed, not stored
      if (t.rg(w)) {
        Tensor<T>& gw = t.grad_ref(w);
        const T* colp = onebyone ? t.val(x).data() : cols.data();
        gemm(Co, Kdim, int(plane), T(1), g.data(), false, colp, true, T(1), gw.data());
      }
      if (t.rg(x)) {
        Tensor<T>& gx = t.grad_ref(x);
        if (onebyone) {
          gemm(Ci, int(plane), Co, T(1), t.val(w).data(), true, g.data(), false, T(1), gx.data());
        } else {
          std::vector<T>& dcols = conv_scratch<T>(1);
          if (int64_t(dcols.size()) < int64_t(Kdim) * plane) dcols.resize(size_t(Kdim) * plane);
          gemm(Kdim, int(plane), Co, T(1), t.val(w).data(), true, g.data(), false, T(0),
               dcols.data());
          col2im_add(dcols, Ci, H, W, kh, kw, stride, pad, Ho, Wo, gx);
        }
      }
    });
  }

  // y[m] = w[m,n] x[n] + b[m]
  int linear(int x, int w, int b) {
    const auto& xv = val(x);
    const auto& wv = val(w);
    require(xv.shape.size() == 1 && wv.shape.size() == 2 && wv.shape[1] == xv.shape[0],
            "linear: shape mismatch");
    const int m = wv.shape[0], n = wv.shape[1];
    Tensor<T> out({m});
    gemm(m, 1, n, T(1), wv.data(), false, xv.data(), false, T(0), out.data());
    if (b >= 0) {
      const auto& bv = val(b);
      require(bv.shape == std::vector<int>{m}, "linear: bias must be [m]");
      for (int i = 0; i < m; ++i) out.v[size_t(i)] += bv.v[size_t(i)];
    }
    std::vector<int> ins = b >= 0 ? std::vector<int>{x, w, b} : std::vector<int>{x, w};
    return make(std::move(out), ins, [x, w, b, m, n](Tape& t) {
      const Tensor<T>& g = t.nodes_[t.cur_].grad;
      if (b >= 0 && t.rg(b)) t.accum(b, g);
      if (t.rg(w)) {
        Tensor<T>& gw = t.grad_ref(w);
        const Tensor<T>& xv = t.val(x);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) gw.v[size_t(i) * n + j] += g.v[size_t(i)] * xv.v[size_t(j)];
      }
      if (t.rg(x)) {
        Tensor<T>& gx = t.grad_ref(x);
        gemm(n, 1, m, T(1), t.val(w).data(), true, g.data(), false, T(1), gx.data());
      }
    });
  }

  // GroupNorm over x[C,H,W] with affine gamma[C], beta[C]
  int group_norm(int x, int gamma, int beta, int groups, T eps = T(1e-5)) {
    const auto& xv = val(x);
    require(xv.shape.size() == 3 && xv.shape[0] % groups == 0, "group_norm: bad groups");
    const int C = xv.shape[0];
    const int64_t hw = int64_t(xv.shape[1]) * xv.shape[2];
    const int cg = C / groups;
    const int64_t gn = int64_t(cg) * hw;
    const auto& gv = val(gamma);
    const auto& bv = val(beta);
    require(gv.shape == std::vector<int>{C} && bv.shape == std::vector<int>{C},
            "group_norm: affine must be [C]");

    auto stats = std::make_shared<std::vector<T>>(size_t(groups) * 2);  // mean, invstd per group
    Tensor<T> out;
    out.shape = xv.shape;
    out.v.resize(xv.v.size());
    for (int g = 0; g < groups; ++g) {
      const T* p = xv.data() + int64_t(g) * gn;
      T mean = 0;
      for (int64_t i = 0; i < gn; ++i) mean += p[i];
      mean /= T(gn);
      T var = 0;
      for (int64_t i = 0; i < gn; ++i) {
        const T d = p[i] - mean;
        var += d * d;
      }
      var /= T(gn);
      const T invstd = T(1) / std::sqrt(var + eps);
      (*stats)[size_t(g) * 2] = mean;
      (*stats)[size_t(g) * 2 + 1] = invstd;
      for (int c = 0; c < cg; ++c) {
        const int ch = g * cg + c;
        const T ga = gv.v[size_t(ch)], be = bv.v[size_t(ch)];
        const T* src = xv.data() + int64_t(ch) * hw;
        T* dst = out.data() + int64_t(ch) * hw;
        for (int64_t i = 0; i < hw; ++i) dst[i] = (src[i] - mean) * invstd * ga + be;
      }
    }
    return make(std::move(out), {x, gamma, beta},
                [x, gamma, beta, groups, C, hw, cg, gn, stats](Tape& t) {
      const Tensor<T>& g = t.nodes_[t.cur_].grad;
      const Tensor<T>& xv = t.val(x);
      const Tensor<T>& gv = t.val(gamma);
      const bool need_x = t.rg(x);
      Tensor<T>* gx = need_x ? &t.grad_ref(x) : nullptr;
      Tensor<T>* gga = t.rg(gamma) ? &t.grad_ref(gamma) : nullptr;
      Tensor<T>* gbe = t.rg(beta) ? &t.grad_ref(beta) : nullptr;
      for (int grp = 0; grp < groups; ++grp) {
        const T mean = (*stats)[size_t(grp) * 2];
        const T invstd = (*stats)[size_t(grp) * 2 + 1];
        // dxhat aggregates for the group
        T sum_dxh = 0, sum_dxh_xh = 0;
        for (int c = 0; c < cg; ++c) {
          const int ch = grp * cg + c;
          const T ga = gv.v[size_t(ch)];
          const T* xp = xv.data() + int64_t(ch) * hw;
          const T* gp = g.data() + int64_t(ch) * hw;
          T s_g = 0, s_gxh = 0;
          for (int64_t i = 0; i < hw; ++i) {
            const T xh = (xp[i] - mean) * invstd;
            s_g += gp[i];
            s_gxh += gp[i] * xh;
          }
          if (gbe) gbe->v[size_t(ch)] += s_g;
          if (gga) gga->v[size_t(ch)] += s_gxh;
          sum_dxh += ga * s_g;
          sum_dxh_xh += ga * s_gxh;
        }
        if (!need_x) continue;
        const T m_dxh = sum_dxh / T(gn);
        const T m_dxh_xh = sum_dxh_xh / T(gn);
        for (int c = 0; c < cg; ++c) {
          const int ch = grp * cg + c;
          const T ga = gv.v[size_t(ch)];
          const T* xp = xv.data() + int64_t(ch) * hw;
          const T* gp = g.data() + int64_t(ch) * hw;
          T* dst = gx->data() + int64_t(ch) * hw;
          for (int64_t i = 0; i < hw; ++i) {
            const T xh = (xp[i] - mean) * invstd;
            dst[i] += invstd * (ga * gp[i] - m_dxh - xh * m_dxh_xh);
          }
        }
      }
    });
  }

  // mean((x - target)^2) against a constant target
  int mse(int x, Tensor<T> target) {
    const auto& xv = val(x);
    require(xv.same_shape(target), "mse: target shape mismatch");
    const int64_t n = xv.numel();
    T acc = 0;
    for (int64_t i = 0; i < n; ++i) {
      const T d = xv.v[size_t(i)] - target.v[size_t(i)];
      acc += d * d;
    }
    Tensor<T> out = Tensor<T>::scalar(acc / T(n));
    auto tgt = std::make_shared<Tensor<T>>(std::move(target));
    return make(std::move(out), {x}, [x, tgt, n](Tape& t) {
      if (!t.rg(x)) return;
      const T go = t.nodes_[t.cur_].grad.v[0];
      const Tensor<T>& xv = t.val(x);
      Tensor<T>& gx = t.grad_ref(x);
      const T c = T(2) * go / T(n);
      for (int64_t i = 0; i < n; ++i) gx.v[size_t(i)] += c * (xv.v[size_t(i)] - tgt->v[size_t(i)]);
    });
  }

  // mean per-pixel cross-entropy of logits[K,H,W] against integer labels[H,W]
  int softmax_ce(int logits, const IntField& labels) {
    const auto& lv = val(logits);
    require(lv.shape.size() == 3, "softmax_ce: logits must be [K,H,W]");
    const int K = lv.shape[0];
    require(labels.h == lv.shape[1] && labels.w == lv.shape[2], "softmax_ce: label geometry");
    const int64_t hw = int64_t(labels.h) * labels.w;
    auto probs = std::make_shared<Tensor<T>>(lv.shape);
    double loss = 0.0;
    for (int64_t p = 0; p < hw; ++p) {
      T mx = lv.v[size_t(p)];
      for (int k = 1; k < K; ++k) mx = std::max(mx, lv.v[size_t(k) * hw + p]);
      T z = 0;
      for (int k = 0; k < K; ++k) {
        const T e = std::exp(lv.v[size_t(k) * hw + p] - mx);
        probs->v[size_t(k) * hw + p] = e;
        z += e;
      }
      const int32_t y = labels.v[size_t(p)];
      require(y >= 0 && y < K, "softmax_ce: label out of range");
      for (int k = 0; k < K; ++k) probs->v[size_t(k) * hw + p] /= z;
      loss -= std::log(std::max(double(probs->v[size_t(y) * hw + p]), 1e-30));
    }
    Tensor<T> out = Tensor<T>::scalar(T(loss / double(hw)));
    auto lab = std::make_shared<IntField>(labels);
    return make(std::move(out), {logits}, [logits, probs, lab, K, hw](Tape& t) {
      if (!t.rg(logits)) return;
      const T go = t.nodes_[t.cur_].grad.v[0];
      Tensor<T>& gl = t.grad_ref(logits);
      const T c = go / T(hw);
      for (int64_t p = 0; p < hw; ++p) {
        const int32_t y = lab->v[size_t(p)];
        for (int k = 0; k < K; ++k) {
          T d = probs->v[size_t(k) * hw + p];
          if (k == y) d -= T(1);
          gl.v[size_t(k) * hw + p] += c * d;
        }
      }
    });
  }

  // dot(x, weights) with constant weights -> scalar
  int dot_const(int x, Tensor<T> weights) {
    const auto& xv = val(x);
    require(xv.same_shape(weights), "dot_const: shape mismatch");
    T acc = 0;
    for (int64_t i = 0; i < xv.numel(); ++i) acc += xv.v[size_t(i)] * weights.v[size_t(i)];
    auto wts = std::make_shared<Tensor<T>>(std::move(weights));
    return make(Tensor<T>::scalar(acc), {x}, [x, wts](Tape& t) {
      if (!t.rg(x)) return;
      const T go = t.nodes_[t.cur_].grad.v[0];
      Tensor<T>& gx = t.grad_ref(x);
      for (int64_t i = 0; i < gx.numel(); ++i) gx.v[size_t(i)] += go * wts->v[size_t(i)];
    });
  }

  int sum(int x) {
    const auto& xv = val(x);
    T acc = 0;
    for (T v : xv.v) acc += v;
    return make(Tensor<T>::scalar(acc), {x}, [x](Tape& t) {
      if (!t.rg(x)) return;
      const T go = t.nodes_[t.cur_].grad.v[0];
      Tensor<T>& gx = t.grad_ref(x);
      for (auto& v : gx.v) v += go;
    });
  }

 private:
  std::vector<Node> nodes_;
  size_t cur_ = 0;  // id of the node whose back() is running

  int make(Tensor<T> out, const std::vector<int>& inputs, std::function<void(Tape&)> back) {
    Node n;
    n.val = std::move(out);
    bool any = false;
    for (int i : inputs) any = any || nodes_[size_t(i)].rg;
    n.rg = any && grad_enabled;
    if (n.rg) {
      const int id = int(nodes_.size());
      n.back = [id, fn = std::move(back)](Tape& t) {
        t.cur_ = size_t(id);
        fn(t);
      };
    }
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
  }

  void accum(int id, const Tensor<T>& g) {
    Tensor<T>& dst = grad_ref(id);
    for (int64_t i = 0; i < g.numel(); ++i) dst.v[size_t(i)] += g.v[size_t(i)];
  }
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace segsr
