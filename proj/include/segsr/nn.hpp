#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "segsr/autodiff.hpp"
#include "segsr/rng.hpp"
#include "segsr/tensor.hpp"

namespace segsr {

enum class Role { img_denoiser, img_controller, seg_backbone, seg_denoiser, seg_controller, img_aided };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::img_denoiser: return "img_denoiser";
    case Role::img_controller: return "img_controller";
    case Role::seg_backbone: return "seg_backbone";
    case Role::seg_denoiser: return "seg_denoiser";
    case Role::seg_controller: return "seg_controller";
    case Role::img_aided: return "img_aided";
  }
  return "?";
}

inline Role role_from_name(const std::string& s) {
  for (Role r : {Role::img_denoiser, Role::img_controller, Role::seg_backbone, Role::seg_denoiser,
                 Role::seg_controller, Role::img_aided})
    if (s == role_name(r)) return r;
  fail_validation("unknown model role: " + s);
}

constexpr int kNumRoles = 6;
inline const std::vector<Role>& all_roles() {
  static const std::vector<Role> roles = {Role::img_denoiser,  Role::img_controller,
                                          Role::seg_backbone,  Role::seg_denoiser,
                                          Role::seg_controller, Role::img_aided};
  return roles;
}

// Ordered named tensor map for one network role. Order is the construction
// order, which fixes init streams, checkpoint layout and optimizer state.
struct ParamStore {
  Role role = Role::img_denoiser;
  std::vector<std::pair<std::string, TensorF>> params;
  std::unordered_map<std::string, int> index;

  void add(const std::string& name, TensorF t) {
    require(!index.count(name), "duplicate parameter name: " + name);
    index.emplace(name, int(params.size()));
    params.emplace_back(name, std::move(t));
  }
  bool has(const std::string& name) const { return index.count(name) != 0; }
  int find(const std::string& name) const {
    auto it = index.find(name);
    require(it != index.end(),
            std::string(role_name(role)) + ": missing parameter " + name);
    return it->second;
  }
  TensorF& at(const std::string& name) { return params[size_t(find(name))].second; }
  const TensorF& at(const std::string& name) const { return params[size_t(find(name))].second; }
  int64_t total() const {
    int64_t n = 0;
    for (auto& p : params) n += p.second.numel();
    return n;
  }
};

// truncated normal: redraw outside +-2 sigma
inline TensorF trunc_normal(Rng& rng, std::vector<int> shape, double sigma) {
  TensorF t(std::move(shape));
  for (auto& v : t.v) {
    double x = rng.normal();
    while (std::abs(x) > 2.0) x = rng.normal();
    v = float(x * sigma);
  }
  return t;
}

// Declares parameters with the layer naming scheme used by the forwards below.
struct ParamBuilder {
  ParamStore& ps;
  Rng& rng;
  double sigma = 0.02;

  void conv(const std::string& name, int co, int ci, int k, bool zero_init = false) {
    ps.add(name + ".w", zero_init ? TensorF::zeros({co, ci, k, k})
                                  : trunc_normal(rng, {co, ci, k, k}, sigma));
    ps.add(name + ".b", TensorF::zeros({co}));
  }
  void lin(const std::string& name, int m, int n, bool zero_init = false) {
    ps.add(name + ".w", zero_init ? TensorF::zeros({m, n}) : trunc_normal(rng, {m, n}, sigma));
    ps.add(name + ".b", TensorF::zeros({m}));
  }
  void gn(const std::string& name, int c) {
    ps.add(name + ".g", TensorF::full({c}, 1.0f));
    ps.add(name + ".b", TensorF::zeros({c}));
  }
  // residual block: gn1 -> silu -> conv3x3 -> +time bias -> gn2 -> silu -> conv1x1, skip 1x1
  void res_block(const std::string& p, int ci, int co, int temb_dim) {
    gn(p + ".n1", ci);
    conv(p + ".c1", co, ci, 3);
    lin(p + ".t", co, temb_dim);
    gn(p + ".n2", co);
    conv(p + ".c2", co, co, 1);
    if (ci != co) conv(p + ".s", co, ci, 1);
  }
};

// Per-tape view of a ParamStore: binds tensors as leaves on first use (cast to
// the tape scalar) and remembers ids so gradients can be read back.
template <class T>
struct Bound {
  Tape<T>* tape = nullptr;
  const ParamStore* ps = nullptr;
  bool trainable = false;
  std::vector<int> ids;
  // optional replacement values aligned with ps->params (gradient checks run
  // the graph from an independently perturbed double copy)
  const std::vector<Tensor<T>>* values = nullptr;

  Bound() = default;
  Bound(Tape<T>& t, const ParamStore& p, bool train, const std::vector<Tensor<T>>* vals = nullptr)
      : tape(&t), ps(&p), trainable(train), ids(p.params.size(), -1), values(vals) {}

  int operator()(const std::string& name) {
    const int i = ps->find(name);
    if (ids[size_t(i)] < 0) {
      if (values) {
        ids[size_t(i)] = tape->leaf((*values)[size_t(i)], trainable);
      } else if constexpr (std::is_same_v<T, float>) {
        ids[size_t(i)] = tape->leaf(ps->params[size_t(i)].second, trainable);
      } else {
        ids[size_t(i)] = tape->leaf(ps->params[size_t(i)].second.template cast<T>(), trainable);
      }
    }
    return ids[size_t(i)];
  }
  bool bound(int param_idx) const { return ids[size_t(param_idx)] >= 0; }
};

template <class T>
inline std::vector<Tensor<T>> param_values(const ParamStore& ps) {
  std::vector<Tensor<T>> out;
  out.reserve(ps.params.size());
  for (const auto& p : ps.params) out.push_back(p.second.template cast<T>());
  return out;
}

// sin/cos features over dim/2 geometric frequencies spanning [1, 1e4]
template <class T>
Tensor<T> time_embedding(int t, int dim) {
  require(dim >= 2 && dim % 2 == 0, "time embedding dim must be even and >= 2");
  const int half = dim / 2;
  Tensor<T> out({dim});
  for (int k = 0; k < half; ++k) {
    const double om = half == 1 ? 1.0 : std::pow(10000.0, double(k) / double(half - 1));
    out.v[size_t(k)] = T(std::sin(double(t) / om));
    out.v[size_t(half + k)] = T(std::cos(double(t) / om));
  }
  return out;
}

// ---- layer application helpers --------------------------------------------

template <class T>
int conv_layer(Tape<T>& tp, Bound<T>& p, const std::string& name, int x, int stride, int pad) {
  return tp.conv2d(x, p(name + ".w"), p(name + ".b"), stride, pad);
}

template <class T>
int linear_layer(Tape<T>& tp, Bound<T>& p, const std::string& name, int x) {
  return tp.linear(x, p(name + ".w"), p(name + ".b"));
}

template <class T>
int gn_layer(Tape<T>& tp, Bound<T>& p, const std::string& name, int x, int groups) {
  return tp.group_norm(x, p(name + ".g"), p(name + ".b"), groups);
}

template <class T>
int res_block_fwd(Tape<T>& tp, Bound<T>& p, const std::string& prefix, int x, int temb,
                  int ci, int co, int groups) {
  int h = gn_layer(tp, p, prefix + ".n1", x, groups);
  h = tp.silu(h);
  h = conv_layer(tp, p, prefix + ".c1", h, 1, 1);
  int tb = linear_layer(tp, p, prefix + ".t", temb);
  h = tp.add_channel_bias(h, tb);
  h = gn_layer(tp, p, prefix + ".n2", h, groups);
  h = tp.silu(h);
  h = conv_layer(tp, p, prefix + ".c2", h, 1, 0);
  int skip = ci == co ? x : conv_layer(tp, p, prefix + ".s", x, 1, 0);
  return tp.add(h, skip);
}

// no-grad channel softmax (sampler-side)
inline TensorF softmax_channels(const TensorF& logits) {
  require(logits.shape.size() == 3, "softmax_channels expects [K,H,W]");
  const int K = logits.shape[0];
  const int64_t hw = int64_t(logits.shape[1]) * logits.shape[2];
  TensorF out;
  out.shape = logits.shape;
  out.v.resize(logits.v.size());
  for (int64_t p = 0; p < hw; ++p) {
    float mx = logits.v[size_t(p)];
    for (int k = 1; k < K; ++k) mx = std::max(mx, logits.v[size_t(k) * hw + p]);
    float z = 0;
    for (int k = 0; k < K; ++k) {
      const float e = std::exp(logits.v[size_t(k) * hw + p] - mx);
      out.v[size_t(k) * hw + p] = e;
      z += e;
    }
    for (int k = 0; k < K; ++k) out.v[size_t(k) * hw + p] /= z;
  }
  return out;
}

}  // namespace segsr
