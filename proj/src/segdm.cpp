#include "segsr/losses.hpp"

namespace segsr {

namespace {

// re-leaf precomputed backbone values onto the current tape
BackboneOut<float> leaf_backbone(TapeF& tp, const BackboneValues& F) {
  BackboneOut<float> out;
  for (int i = 0; i < 3; ++i) out.F[size_t(i)] = tp.leaf(F.F[size_t(i)]);
  out.init_logits = tp.leaf(F.init_logits);
  return out;
}

}  // namespace

int loss_backbone_node(BoundModels& bm, const TensorF& lq, const MaskState& gt) {
  TapeF& tp = *bm.tape;
  auto bb = seg_backbone_fwd(tp, bm.at(Role::seg_backbone), tp.leaf(lq), bm.models->net);
  return tp.softmax_ce(bb.init_logits, gt.classes);
}

int loss_segdm_node(BoundModels& bm, const DiscreteSchedule& d, const MaskState& s0,
                    const TensorF& lq, int t, Rng& rng, const TensorF* z_t) {
  TapeF& tp = *bm.tape;
  const NetConfig& net = bm.models->net;
  require(t >= 1 && t <= d.T, "loss_segdm: t must be in [1, T]");
  MaskState s_t = q_sample_discrete(d, s0, t, rng);

  auto bb = seg_backbone_fwd(tp, bm.at(Role::seg_backbone), tp.leaf(lq), net);
  std::array<int, 3> I{};
  if (z_t) I = img_aided_fwd(tp, bm.at(Role::img_aided), tp.leaf(*z_t), t, net);
  int logits = seg_denoiser_fwd(tp, bm.at(Role::seg_denoiser), tp.leaf(one_hot(s_t.classes, net.K)),
                                t, bb, net, z_t ? &I : nullptr);
  return tp.softmax_ce(logits, s0.classes);
}

double loss_backbone(const ModelSet& m, const TensorF& lq, const MaskState& gt) {
  TapeF tp;
  tp.grad_enabled = false;
  BoundModels bm(tp, m, {});
  return double(tp.val(loss_backbone_node(bm, lq, gt)).v[0]);
}

double loss_segdm(const ModelSet& m, const DiscreteSchedule& d, const MaskState& s0,
                  const TensorF& lq, int t, Rng& rng, const TensorF* z_t) {
  TapeF tp;
  tp.grad_enabled = false;
  BoundModels bm(tp, m, {});
  return double(tp.val(loss_segdm_node(bm, d, s0, lq, t, rng, z_t)).v[0]);
}

BackboneValues eval_backbone(const ModelSet& m, const TensorF& lq) {
  TapeF tp;
  tp.grad_enabled = false;
  BoundModels bm(tp, m, {});
  auto bb = seg_backbone_fwd(tp, bm.at(Role::seg_backbone), tp.leaf(lq), m.net);
  BackboneValues out;
  for (int i = 0; i < 3; ++i) out.F[size_t(i)] = tp.val(bb.F[size_t(i)]);
  out.init_logits = tp.val(bb.init_logits);
  return out;
}

MaskState segdm_posterior_sample(const DiscreteSchedule& d, const MaskState& s_t,
                                 const TensorF& s0_probs, int t, int t_prev, Rng& rng) {
  require(s_t.t == t, "segdm_posterior_sample: state timestep mismatch");
  require(t >= 1 || t_prev == -1, "segdm_posterior_sample: t must be >= 1 for a sampled transition");
  const int K = s0_probs.shape[0];
  const int64_t hw = int64_t(s_t.classes.h) * s_t.classes.w;

  MaskState out;
  out.classes = IntField(s_t.classes.h, s_t.classes.w);
  out.t = t_prev < 0 ? 0 : t_prev;
  if (t_prev < 0) {
    for (int64_t p = 0; p < hw; ++p) {
      int best = 0;
      float bv = s0_probs.v[size_t(p)];
      for (int k = 1; k < K; ++k)
        if (s0_probs.v[size_t(k) * hw + p] > bv) {
          bv = s0_probs.v[size_t(k) * hw + p];
          best = k;
        }
      out.classes.v[size_t(p)] = best;
    }
    return out;
  }

  TensorF post = discrete_posterior_spaced(d, s_t, s0_probs, t, t_prev);
  std::vector<float> row(static_cast<size_t>(K));
  for (int64_t p = 0; p < hw; ++p) {
    for (int k = 0; k < K; ++k) row[size_t(k)] = post.v[size_t(k) * hw + p];
    out.classes.v[size_t(p)] = rng.categorical(std::span<const float>(row));
  }
  return out;
}

MaskState segdm_reverse_step(const ModelSet& m, const DiscreteSchedule& d, const MaskState& s_t,
                             int t, int t_prev, const BackboneValues& F, const TensorF* z_t,
                             Rng& rng) {
  require(s_t.t == t, "segdm_reverse_step: state timestep mismatch");
  const NetConfig& net = m.net;

  TapeF tp;
  tp.grad_enabled = false;
  BoundModels bm(tp, m, {});
  auto bb = leaf_backbone(tp, F);
  std::array<int, 3> I{};
  if (z_t) I = img_aided_fwd(tp, bm.at(Role::img_aided), tp.leaf(*z_t), t, net);
  int logits = seg_denoiser_fwd(tp, bm.at(Role::seg_denoiser), tp.leaf(one_hot(s_t.classes, net.K)),
                                t, bb, net, z_t ? &I : nullptr);
  return segdm_posterior_sample(d, s_t, softmax_channels(tp.val(logits)), t, t_prev, rng);
}

}  // namespace segsr
