#include "segsr/losses.hpp"

namespace segsr {

int loss_seg2img_node(BoundModels& bm, const Schedules& s, const TensorF& z0, const MaskState& s0,
                      int t, const TensorF& eps, Rng& rng) {
  TapeF& tp = *bm.tape;
  const NetConfig& net = bm.models->net;
  TensorF z_t = q_sample_continuous(s.g, z0, t, eps);
  MaskState s_t = q_sample_discrete(s.d, s0, t, rng);

  int z_id = tp.leaf(std::move(z_t));
  int srep = tp.leaf(one_hot(s_t.classes, net.K));
  auto C = seg_controller_fwd(tp, bm.at(Role::seg_controller), srep, z_id, t, net);
  int eps_hat = img_denoiser_fwd<float>(tp, bm.at(Role::img_denoiser), z_id, t, net, nullptr, &C);
  return tp.mse(eps_hat, eps);
}

int loss_sr_node(BoundModels& bm, const Schedules& s, const TensorF& z0, const MaskState& s0,
                 const TensorF& z_lq_up, int t, const TensorF& eps, Rng& rng) {
  TapeF& tp = *bm.tape;
  const NetConfig& net = bm.models->net;
  TensorF z_t = q_sample_continuous(s.g, z0, t, eps);
  MaskState s_t = q_sample_discrete(s.d, s0, t, rng);

  int z_id = tp.leaf(std::move(z_t));
  int srep = tp.leaf(one_hot(s_t.classes, net.K));
  auto C = seg_controller_fwd(tp, bm.at(Role::seg_controller), srep, z_id, t, net);
  auto sft = img_controller_fwd(tp, bm.at(Role::img_controller), tp.leaf(z_lq_up), net);
  int eps_hat = img_denoiser_fwd(tp, bm.at(Role::img_denoiser), z_id, t, net, &sft, &C);
  return tp.mse(eps_hat, eps);
}

double loss_seg2img(const ModelSet& m, const Schedules& s, const TensorF& z0, const MaskState& s0,
                    int t, const TensorF& eps, Rng& rng) {
  TapeF tp;
  tp.grad_enabled = false;
  BoundModels bm(tp, m, {});
  const int id = loss_seg2img_node(bm, s, z0, s0, t, eps, rng);
  return double(tp.val(id).v[0]);
}

double loss_sr(const ModelSet& m, const Schedules& s, const TensorF& z0, const MaskState& s0,
               const TensorF& z_lq_up, int t, const TensorF& eps, Rng& rng) {
  TapeF tp;
  tp.grad_enabled = false;
  BoundModels bm(tp, m, {});
  const int id = loss_sr_node(bm, s, z0, s0, z_lq_up, t, eps, rng);
  return double(tp.val(id).v[0]);
}

SftValues eval_img_controller(const ModelSet& m, const TensorF& z_lq_up) {
  TapeF tp;
  tp.grad_enabled = false;
  BoundModels bm(tp, m, {});
  auto sft = img_controller_fwd(tp, bm.at(Role::img_controller), tp.leaf(z_lq_up), m.net);
  SftValues out;
  for (int i = 0; i < 3; ++i)
    out.gamma_beta[size_t(i)] = {tp.val(sft.gamma_beta[size_t(i)].first),
                                 tp.val(sft.gamma_beta[size_t(i)].second)};
  return out;
}

TensorF srdm_reverse_step(const ModelSet& m, const GaussianSchedule& g, const TensorF& z_t, int t,
                          int t_prev, const TensorF& z_lq_up, const MaskState& s_t, double eta,
                          Rng& rng) {
  require(s_t.t == t, "srdm_reverse_step: mask state timestep mismatch");
  TapeF tp;
  tp.grad_enabled = false;
  BoundModels bm(tp, m, {});
  int z_id = tp.leaf(z_t);
  int srep = tp.leaf(one_hot(s_t.classes, m.net.K));
  auto C = seg_controller_fwd(tp, bm.at(Role::seg_controller), srep, z_id, t, m.net);
  auto sft = img_controller_fwd(tp, bm.at(Role::img_controller), tp.leaf(z_lq_up), m.net);
  int eps_hat = img_denoiser_fwd(tp, bm.at(Role::img_denoiser), z_id, t, m.net, &sft, &C);

  const bool wants_noise = eta > 0.0 && t_prev > 0;
  TensorF noise;
  if (wants_noise) {
    noise = TensorF(z_t.shape);
    for (auto& v : noise.v) v = float(rng.normal());
  }
  return ddim_step(g, z_t, tp.val(eps_hat), t, t_prev, eta, wants_noise ? &noise : nullptr);
}

}  // namespace segsr
