#pragma once

// Shared fixtures and independent oracles for the test suite. Oracles here
// deliberately avoid the library's derived quantities (Q_bar, alpha_bars,
// ddim_step) so they stay independent of the paths they check.

#include <cmath>
#include <functional>
#include <set>

#include "segsr/losses.hpp"
#include "segsr/models.hpp"

namespace segsr::testutil {

inline NetConfig tiny_net(int K = 3) {
  NetConfig n;
  n.hq = 16;
  n.lq = 4;
  n.mask = 4;
  n.K = K;
  n.width = 8;
  n.temb = 8;
  n.tmlp = 16;
  n.gn_groups = 4;
  return n;
}

inline ModelSet make_models(const NetConfig& net, uint64_t seed) {
  ModelSet m;
  m.net = net;
  m.at(Role::img_denoiser) = init_img_denoiser(net, seed);
  m.at(Role::img_controller) = init_img_controller(net, seed);
  m.at(Role::seg_backbone) = init_seg_backbone(net, seed);
  m.at(Role::seg_denoiser) = init_seg_denoiser(net, seed);
  m.at(Role::seg_controller) = init_seg_controller(net, m.at(Role::img_denoiser), seed);
  m.at(Role::img_aided) = init_img_aided(net, seed);
  return m;
}

inline TensorF random_tensor(std::vector<int> shape, Rng& rng, float scale = 1.0f) {
  TensorF t(std::move(shape));
  for (auto& v : t.v) v = float(rng.normal()) * scale;
  return t;
}

inline TensorF random_unit01(std::vector<int> shape, Rng& rng) {
  TensorF t(std::move(shape));
  for (auto& v : t.v) v = float(rng.uniform());
  return t;
}

inline IntField random_mask(int h, int w, int K, Rng& rng) {
  IntField f(h, w);
  for (auto& v : f.v) v = int32_t(rng.below(uint64_t(K)));
  return f;
}

// Brute-force Bayes posterior q(s_{t-1} = j | s_t = k, s_0 = i) built from
// single-step matrices only (reachability by repeated multiplication).
inline std::vector<double> brute_posterior(const DiscreteSchedule& d, int i, int k, int t) {
  const int K = d.K;
  std::vector<double> reach(size_t(K), 0.0);
  reach[size_t(i)] = 1.0;
  for (int step = 1; step <= t - 1; ++step) {
    std::vector<double> nxt(size_t(K), 0.0);
    for (int a = 0; a < K; ++a)
      for (int b = 0; b < K; ++b) nxt[size_t(b)] += reach[size_t(a)] * d.q(step)[size_t(a) * K + b];
    reach = nxt;
  }
  std::vector<double> post(static_cast<size_t>(K));
  double z = 0.0;
  for (int j = 0; j < K; ++j) {
    post[size_t(j)] = reach[size_t(j)] * d.q(t)[size_t(j) * K + k];
    z += post[size_t(j)];
  }
  for (auto& v : post) v /= z;
  return post;
}

// Ho et al. ancestral DDPM chain on a scalar, driven by a caller-provided
// eps_hat function; no noise on the final transition into t = 0.
inline double ancestral_chain(const GaussianSchedule& g,
                              const std::function<double(double, int)>& eps_hat, double z_init,
                              Rng& rng) {
  double z = z_init;
  for (int t = g.T - 1; t >= 1; --t) {
    const double beta = g.betas[size_t(t)];
    const double ab = g.alpha_bars[size_t(t)];
    const double ab_prev = g.alpha_bars[size_t(t - 1)];
    const double eh = eps_hat(z, t);
    const double mean = (z - beta / std::sqrt(1.0 - ab) * eh) / std::sqrt(1.0 - beta);
    if (t > 1) {
      const double var = (1.0 - ab_prev) / (1.0 - ab) * beta;
      z = mean + std::sqrt(var) * rng.normal();
    } else {
      z = mean;
    }
  }
  return z;
}

// central finite differences over every coordinate of every parameter.
// norm_rel_err compares the gradient vectors (restricted to the checked
// coordinates): ||fd - an|| / max(||fd||, ||an||). The per-coordinate max is
// kept for diagnostics; at h = 1e-3 it carries the O(h^2) truncation error of
// small-magnitude coordinates.
struct GradCheckResult {
  double norm_rel_err = 0.0;
  double max_rel_err = 0.0;
  int checked = 0;
};

inline GradCheckResult gradcheck_all(const ParamStore& ps,
                                     const std::function<int(TapeD&, Bound<double>&)>& build,
                                     double h = 1e-3, int64_t max_coords = -1,
                                     uint64_t pick_seed = 1234) {
  auto vals = param_values<double>(ps);
  auto eval = [&](const std::vector<TensorD>& use) {
    TapeD tp;
    tp.grad_enabled = false;
    Bound<double> b(tp, ps, false, &use);
    return double(tp.val(build(tp, b)).v[0]);
  };

  std::vector<std::vector<double>> analytic;
  {
    TapeD tp;
    Bound<double> b(tp, ps, true, &vals);
    const int loss = build(tp, b);
    tp.backward(loss);
    for (size_t i = 0; i < ps.params.size(); ++i) {
      if (b.bound(int(i)))
        analytic.push_back(tp.grad(b.ids[i]).v);
      else
        analytic.push_back(std::vector<double>(size_t(ps.params[i].second.numel()), 0.0));
    }
  }

  GradCheckResult res;
  std::vector<std::pair<size_t, size_t>> coords;
  for (size_t pi = 0; pi < vals.size(); ++pi)
    for (size_t ei = 0; ei < vals[pi].v.size(); ++ei) coords.emplace_back(pi, ei);
  if (max_coords > 0 && int64_t(coords.size()) > max_coords) {
    Rng rng(pick_seed);
    std::vector<std::pair<size_t, size_t>> chosen;
    for (int64_t c = 0; c < max_coords; ++c)
      chosen.push_back(coords[size_t(rng.below(coords.size()))]);
    coords = chosen;
  }

  double sq_diff = 0.0, sq_fd = 0.0, sq_an = 0.0;
  for (auto [pi, ei] : coords) {
    std::vector<TensorD> pert = vals;
    pert[pi].v[ei] = vals[pi].v[ei] + h;
    const double up = eval(pert);
    pert[pi].v[ei] = vals[pi].v[ei] - h;
    const double dn = eval(pert);
    const double fd = (up - dn) / (2.0 * h);
    const double an = analytic[pi][ei];
    ++res.checked;
    sq_diff += (fd - an) * (fd - an);
    sq_fd += fd * fd;
    sq_an += an * an;
    if (std::abs(fd) < 1e-9 && std::abs(an) < 1e-9) continue;
    res.max_rel_err = std::max(res.max_rel_err,
                               std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
  }
  res.norm_rel_err = std::sqrt(sq_diff) / std::max({std::sqrt(sq_fd), std::sqrt(sq_an), 1e-12});
  return res;
}

}  // namespace segsr::testutil
