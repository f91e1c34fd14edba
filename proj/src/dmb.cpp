#include "segsr/losses.hpp"

namespace segsr {

JointNodes loss_joint_node(BoundModels& bm, const Schedules& s, const TensorF& z0,
                           const MaskState& s0, const TensorF& z_lq_up, const TensorF& lq, int t,
                           const TensorF& eps, double lambda, Rng& rng) {
  TapeF& tp = *bm.tape;
  const NetConfig& net = bm.models->net;
  require(lambda >= 0.0, "lambda must be >= 0");
  require(t >= 1 && t < s.g.T && t <= s.d.T, "loss_joint: t must satisfy both chains");

  // shared corruption draws for both parts
  TensorF z_t = q_sample_continuous(s.g, z0, t, eps);
  MaskState s_t = q_sample_discrete(s.d, s0, t, rng);
  int z_id = tp.leaf(std::move(z_t));
  int srep = tp.leaf(one_hot(s_t.classes, net.K));

  // L_SR
  auto C = seg_controller_fwd(tp, bm.at(Role::seg_controller), srep, z_id, t, net);
  auto sft = img_controller_fwd(tp, bm.at(Role::img_controller), tp.leaf(z_lq_up), net);
  int eps_hat = img_denoiser_fwd(tp, bm.at(Role::img_denoiser), z_id, t, net, &sft, &C);
  int sr = tp.mse(eps_hat, eps);

  // L_IAC (SegDM weights are bound frozen by the caller's trainable set)
  auto bb = seg_backbone_fwd(tp, bm.at(Role::seg_backbone), tp.leaf(lq), net);
  auto I = img_aided_fwd(tp, bm.at(Role::img_aided), z_id, t, net);
  int logits = seg_denoiser_fwd(tp, bm.at(Role::seg_denoiser), srep, t, bb, net, &I);
  int iac = tp.softmax_ce(logits, s0.classes);

  JointNodes out;
  out.sr = sr;
  out.iac = iac;
  out.total = lambda == 0.0 ? sr : tp.add(sr, tp.scale(iac, float(lambda)));
  return out;
}

JointLoss loss_joint(const ModelSet& m, const Schedules& s, const TensorF& z0, const MaskState& s0,
                     const TensorF& z_lq_up, const TensorF& lq, int t, const TensorF& eps,
                     double lambda, Rng& rng) {
  TapeF tp;
  tp.grad_enabled = false;
  BoundModels bm(tp, m, {});
  JointNodes n = loss_joint_node(bm, s, z0, s0, z_lq_up, lq, t, eps, lambda, rng);
  return {double(tp.val(n.total).v[0]), double(tp.val(n.sr).v[0]), double(tp.val(n.iac).v[0])};
}

BridgeConditions bridge_conditions(const ModelSet& m, const LatentState& z, const MaskState& s) {
  require(z.t == s.t, "bridge_conditions: state timesteps differ (" + std::to_string(z.t) + " vs " +
                          std::to_string(s.t) + ")");
  TapeF tp;
  tp.grad_enabled = false;
  BoundModels bm(tp, m, {});
  int z_id = tp.leaf(z.data);
  int srep = tp.leaf(one_hot(s.classes, m.net.K));
  auto C = seg_controller_fwd(tp, bm.at(Role::seg_controller), srep, z_id, z.t, m.net);
  auto I = img_aided_fwd(tp, bm.at(Role::img_aided), z_id, z.t, m.net);
  BridgeConditions out;
  for (int i = 0; i < 3; ++i) {
    out.C[size_t(i)] = tp.val(C[size_t(i)]);
    out.I[size_t(i)] = tp.val(I[size_t(i)]);
  }
  return out;
}

}  // namespace segsr
