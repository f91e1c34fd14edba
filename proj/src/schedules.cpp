#include "segsr/schedules.hpp"

#include <cmath>

#include "segsr/errors.hpp"

namespace segsr {

double GaussianSchedule::alpha_bar(int t) const {
  if (t < 0) return 1.0;
  require(t < T, "gaussian timestep out of range: " + std::to_string(t));
  return alpha_bars[size_t(t)];
}

double DiscreteSchedule::beta(int t) const {
  require(t >= 1 && t <= T, "discrete timestep out of range: " + std::to_string(t));
  return betas[size_t(t - 1)];
}

const std::vector<double>& DiscreteSchedule::q(int t) const {
  require(t >= 1 && t <= T, "discrete timestep out of range: " + std::to_string(t));
  return Q[size_t(t - 1)];
}

std::vector<double> DiscreteSchedule::q_bar(int t) const {
  require(t >= 0 && t <= T, "discrete timestep out of range: " + std::to_string(t));
  if (t == 0) {
    std::vector<double> id(size_t(K) * K, 0.0);
    for (int i = 0; i < K; ++i) id[size_t(i) * K + i] = 1.0;
    return id;
  }
  return Q_bar[size_t(t - 1)];
}

double DiscreteSchedule::alpha_bar(int t) const {
  require(t >= 0 && t <= T, "discrete timestep out of range: " + std::to_string(t));
  return t == 0 ? 1.0 : alpha_bars[size_t(t - 1)];
}

static std::vector<double> linear_betas(int T, double beta_start, double beta_end) {
  require(T >= 1, "schedule length must be >= 1");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "betas must satisfy 0 < beta_start <= beta_end < 1");
  std::vector<double> b(static_cast<size_t>(T));
  if (T == 1) {
    b[0] = beta_start;
  } else {
    for (int t = 0; t < T; ++t) b[size_t(t)] = beta_start + (beta_end - beta_start) * double(t) / double(T - 1);
  }
  return b;
}

GaussianSchedule build_gaussian_schedule(int T, double beta_start, double beta_end,
                                         const std::string& kind) {
  require(kind == "linear", "unknown gaussian schedule kind: " + kind);
  GaussianSchedule s;
  s.T = T;
  s.betas = linear_betas(T, beta_start, beta_end);
  s.alphas.resize(size_t(T));
  s.alpha_bars.resize(size_t(T));
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    s.alphas[size_t(t)] = 1.0 - s.betas[size_t(t)];
    prod *= s.alphas[size_t(t)];
    s.alpha_bars[size_t(t)] = prod;
  }
  return s;
}

DiscreteSchedule build_discrete_schedule(int T, int K, double beta_start, double beta_end) {
  require(K >= 2, "discrete schedule needs K >= 2");
  DiscreteSchedule s;
  s.T = T;
  s.K = K;
  s.betas = linear_betas(T, beta_start, beta_end);
  s.alpha_bars.resize(size_t(T));
  s.Q.resize(size_t(T));
  s.Q_bar.resize(size_t(T));

  const size_t KK = size_t(K) * K;
  std::vector<double> cum(KK, 0.0);
  for (int i = 0; i < K; ++i) cum[size_t(i) * K + i] = 1.0;

  double abar = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double b = s.betas[size_t(t - 1)];
    abar *= 1.0 - b;
    s.alpha_bars[size_t(t - 1)] = abar;

    // Q[t] = (1-b) I + (b/K) 11^T
    std::vector<double> q(KK, b / double(K));
    for (int i = 0; i < K; ++i) q[size_t(i) * K + i] += 1.0 - b;
    s.Q[size_t(t - 1)] = q;

    // Q_bar[t] = Q_bar[t-1] * Q[t]
    std::vector<double> next(KK, 0.0);
    for (int i = 0; i < K; ++i)
      for (int k = 0; k < K; ++k) {
        double acc = 0.0;
        for (int j = 0; j < K; ++j) acc += cum[size_t(i) * K + j] * q[size_t(j) * K + k];
        next[size_t(i) * K + k] = acc;
      }
    cum = next;
    s.Q_bar[size_t(t - 1)] = cum;
  }
  return s;
}

TensorF q_sample_continuous(const GaussianSchedule& s, const TensorF& z0, int t,
                            const TensorF& eps) {
  require(t >= 0 && t < s.T, "q_sample timestep out of range");
  require(z0.same_shape(eps), "q_sample: eps shape " + shape_str(eps) + " != z0 shape " + shape_str(z0));
  const double ab = s.alpha_bar(t);
  const float a = float(std::sqrt(ab));
  const float b = float(std::sqrt(1.0 - ab));
  TensorF out;
  out.shape = z0.shape;
  out.v.resize(z0.v.size());
  for (size_t i = 0; i < z0.v.size(); ++i) out.v[i] = a * z0.v[i] + b * eps.v[i];
  return out;
}

TensorF ddim_step(const GaussianSchedule& s, const TensorF& z_t, const TensorF& eps_hat, int t,
                  int t_prev, double eta, const TensorF* noise) {
  require(t_prev < t, "ddim_step requires t_prev < t");
  require(t >= 0 && t < s.T, "ddim_step timestep out of range");
  require(eta >= 0.0 && eta <= 1.0, "eta must be in [0,1]");
  require(z_t.same_shape(eps_hat), "ddim_step: eps_hat shape mismatch");
  const bool wants_noise = eta > 0.0 && t_prev > 0;
  require(wants_noise == (noise != nullptr),
          wants_noise ? "ddim_step: noise required for eta > 0 and t_prev > 0"
                      : "ddim_step: noise must be absent");
  if (noise) require(z_t.same_shape(*noise), "ddim_step: noise shape mismatch");

  const double ab_t = s.alpha_bar(t);
  const double ab_p = s.alpha_bar(t_prev);
  // sigma enters the mean even when the noise term itself is dropped
  // (t_prev <= 0); at t_prev = -1 it vanishes through alpha_bar = 1
  const double sigma =
      eta * std::sqrt((1.0 - ab_p) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_p);

  const float c_z0 = float(std::sqrt(ab_p) / std::sqrt(ab_t));
  const float c_eh = float(std::sqrt(std::max(0.0, 1.0 - ab_p - sigma * sigma)) -
                           std::sqrt(ab_p) * std::sqrt(1.0 - ab_t) / std::sqrt(ab_t));
  const float c_n = float(sigma);

  // sqrt(ab_p) * z0_hat + sqrt(1 - ab_p - sigma^2) * eps_hat + sigma * noise,
  // with z0_hat = (z_t - sqrt(1-ab_t) eps_hat) / sqrt(ab_t), folded per element.
  TensorF out;
  out.shape = z_t.shape;
  out.v.resize(z_t.v.size());
  for (size_t i = 0; i < z_t.v.size(); ++i) {
    float x = c_z0 * z_t.v[i] + c_eh * eps_hat.v[i];
    if (noise) x += c_n * noise->v[i];
    out.v[i] = x;
  }
  return out;
}

MaskState q_sample_discrete(const DiscreteSchedule& s, const MaskState& s0, int t, Rng& rng) {
  require(s0.t == 0, "q_sample_discrete expects a clean (t = 0) mask state");
  const auto qb = s.q_bar(t);
  MaskState out;
  out.classes = IntField(s0.classes.h, s0.classes.w);
  out.t = t;
  for (int64_t i = 0; i < s0.classes.numel(); ++i) {
    const int32_t c = s0.classes.v[size_t(i)];
    require(c >= 0 && c < s.K, "mask class out of range");
    std::span<const double> row(qb.data() + size_t(c) * s.K, size_t(s.K));
    out.classes.v[size_t(i)] = rng.categorical(row);
  }
  return out;
}

static TensorF posterior_impl(const DiscreteSchedule& s, const MaskState& s_t,
                              const TensorF& s0_probs, const std::vector<double>& q_step,
                              const std::vector<double>& qb_prev, const std::vector<double>& qb_t) {
  const int K = s.K;
  const int h = s_t.classes.h, w = s_t.classes.w;
  require(s0_probs.shape == std::vector<int>({K, h, w}), "s0_probs shape mismatch");
  const int64_t hw = int64_t(h) * w;

  TensorF out({K, h, w});
  std::vector<double> wi(static_cast<size_t>(K));
  for (int64_t p = 0; p < hw; ++p) {
    const int k = s_t.classes.v[size_t(p)];
    require(k >= 0 && k < K, "mask class out of range");
    for (int i = 0; i < K; ++i) {
      const double pi = double(s0_probs.v[size_t(i) * hw + p]);
      const double denom = qb_t[size_t(i) * K + k];
      if (pi > 0.0 && denom <= 0.0)
        fail_runtime("degenerate discrete posterior: q_bar[t][i,k] = 0");
      wi[size_t(i)] = denom > 0.0 ? pi / denom : 0.0;
    }
    double total = 0.0;
    for (int j = 0; j < K; ++j) {
      double inner = 0.0;
      for (int i = 0; i < K; ++i) inner += wi[size_t(i)] * qb_prev[size_t(i) * K + j];
      const double val = q_step[size_t(j) * K + k] * inner;
      out.v[size_t(j) * hw + p] = float(val);
      total += val;
    }
    // normalize away the mixture's fp residue so rows sum to 1
    if (total > 0.0) {
      const float inv = float(1.0 / total);
      for (int j = 0; j < K; ++j) out.v[size_t(j) * hw + p] *= inv;
    }
  }
  return out;
}

TensorF discrete_posterior(const DiscreteSchedule& s, const MaskState& s_t,
                           const TensorF& s0_probs, int t) {
  require(t >= 1 && t <= s.T, "discrete_posterior needs t >= 1");
  require(s_t.t == t, "mask state timestep does not match t");
  return posterior_impl(s, s_t, s0_probs, s.q(t), s.q_bar(t - 1), s.q_bar(t));
}

TensorF discrete_posterior_spaced(const DiscreteSchedule& s, const MaskState& s_t,
                                  const TensorF& s0_probs, int t, int t_prev) {
  require(t_prev >= 0 && t_prev < t && t <= s.T, "invalid spaced pair");
  require(s_t.t == t, "mask state timestep does not match t");
  // uniform-kernel closed form for the t_prev -> t block transition
  const double ratio = s.alpha_bar(t) / s.alpha_bar(t_prev);
  const size_t KK = size_t(s.K) * s.K;
  std::vector<double> q_sp(KK, (1.0 - ratio) / double(s.K));
  for (int i = 0; i < s.K; ++i) q_sp[size_t(i) * s.K + i] += ratio;
  return posterior_impl(s, s_t, s0_probs, q_sp, s.q_bar(t_prev), s.q_bar(t));
}

std::vector<int> timestep_spacing(int T, int steps) {
  require(steps >= 1 && steps <= T, "timestep_spacing needs 1 <= steps <= T");
  const int stride = T / steps;
  std::vector<int> out(static_cast<size_t>(steps));
  for (int i = 0; i < steps; ++i) out[size_t(i)] = (steps - 1 - i) * stride;
  return out;
}

}  // namespace segsr
