#pragma once

#include <optional>
#include <vector>

#include "segsr/rng.hpp"
#include "segsr/tensor.hpp"

namespace segsr {

// ---------------------------------------------------------------------------
// Diffusion chains. All schedule math is double; network tensors stay f32.
//
// Continuous chain: 0-indexed, t in [0, T). alpha_bars[t] = prod_{i<=t} alphas[i].
// Discrete chain: transitions are 1-indexed (state t reached after t
// transitions), Qbar(0) = identity, t in [0, T].
// ---------------------------------------------------------------------------

struct GaussianSchedule {
  int T = 0;
  std::vector<double> betas;       // [T]
  std::vector<double> alphas;      // [T]
  std::vector<double> alpha_bars;  // [T]

  // alpha_bar with the t = -1 convention (== 1) used by the final DDIM step.
  double alpha_bar(int t) const;
};

struct DiscreteSchedule {
  int T = 0;
  int K = 0;
  std::vector<double> betas;       // beta(t), t = 1..T, stored at [t-1]
  std::vector<double> alpha_bars;  // prod_{i<=t} (1-beta_i), t = 1..T, stored at [t-1]
  std::vector<std::vector<double>> Q;      // K*K row-major, step t at [t-1]
  std::vector<std::vector<double>> Q_bar;  // K*K row-major, cumulative, t at [t-1]

  double beta(int t) const;                  // t in [1, T]
  const std::vector<double>& q(int t) const;  // single-step matrix, t in [1, T]
  // cumulative matrix rows; t = 0 yields the identity
  std::vector<double> q_bar(int t) const;
  double alpha_bar(int t) const;  // t in [0, T], t = 0 -> 1
};

struct LatentState {
  TensorF data;  // [C, H, W]
  int t = 0;
};

struct MaskState {
  IntField classes;  // [h_s, w_s], values in [0, K)
  int t = 0;
};

GaussianSchedule build_gaussian_schedule(int T, double beta_start, double beta_end,
                                         const std::string& kind = "linear");
DiscreteSchedule build_discrete_schedule(int T, int K, double beta_start, double beta_end);

// sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps, t in [0, T)
TensorF q_sample_continuous(const GaussianSchedule& s, const TensorF& z0, int t,
                            const TensorF& eps);

// One spaced DDIM transition t -> t_prev (t_prev = -1 allowed, abar(-1) = 1).
// noise must be supplied iff eta > 0 and t_prev > 0.
TensorF ddim_step(const GaussianSchedule& s, const TensorF& z_t, const TensorF& eps_hat, int t,
                  int t_prev, double eta, const TensorF* noise);

// Pixelwise draw from row s0 of Q_bar[t]; result carries timestep t.
MaskState q_sample_discrete(const DiscreteSchedule& s, const MaskState& s0, int t, Rng& rng);

// Per-pixel posterior over s_{t-1}: sum_i s0_probs[i] q(s_{t-1} | s_t, s_0 = i).
// s0_probs is [K, h, w] with rows (over K) summing to 1.
TensorF discrete_posterior(const DiscreteSchedule& s, const MaskState& s_t,
                           const TensorF& s0_probs, int t);

// Same posterior with the spaced pair (t -> t_prev) treated as adjacent under
// the uniform-kernel closed form Q_spaced = Qbar(t_prev)^-1 Qbar(t).
TensorF discrete_posterior_spaced(const DiscreteSchedule& s, const MaskState& s_t,
                                  const TensorF& s0_probs, int t, int t_prev);

// `steps` strictly decreasing indices over [0, T): stride floor(T/steps),
// i.e. [(steps-1)*stride, ..., stride, 0]. The caller appends the final
// t_prev = -1 transition.
std::vector<int> timestep_spacing(int T, int steps);

}  // namespace segsr
