#pragma once

#include <array>
#include <set>

#include "segsr/mask_codec.hpp"
#include "segsr/models.hpp"
#include "segsr/schedules.hpp"

namespace segsr {

struct Schedules {
  GaussianSchedule g;
  DiscreteSchedule d;
};

// Per-tape binding of the full model set; roles in `trainable` get gradients.
struct BoundModels {
  TapeF* tape = nullptr;
  const ModelSet* models = nullptr;
  std::array<Bound<float>, kNumRoles> bound;

  BoundModels(TapeF& tp, const ModelSet& m, const std::set<Role>& trainable) : tape(&tp), models(&m) {
    for (Role r : all_roles())
      bound[size_t(r)] = Bound<float>(tp, m.at(r), trainable.count(r) > 0);
  }
  Bound<float>& at(Role r) { return bound[size_t(r)]; }
};

// Bridge conditions for a (z, s) state pair at a shared timestep.
struct BridgeConditions {
  std::array<TensorF, 3> C;  // seg -> image residuals, per decoder skip site
  std::array<TensorF, 3> I;  // image -> seg residuals, per encoder site
};

// ---- tape-level loss graphs (used by the trainer) ---------------------------

// || eps - eps_theta1(Z_t, t, S_t) ||^2, no LQ/SFT condition
int loss_seg2img_node(BoundModels& bm, const Schedules& s, const TensorF& z0, const MaskState& s0,
                      int t, const TensorF& eps, Rng& rng);

// || eps - eps_theta2(Z_t, t, S_t, Z_lq) ||^2
int loss_sr_node(BoundModels& bm, const Schedules& s, const TensorF& z0, const MaskState& s0,
                 const TensorF& z_lq_up, int t, const TensorF& eps, Rng& rng);

// mean per-pixel CE of the backbone's init logits
int loss_backbone_node(BoundModels& bm, const TensorF& lq, const MaskState& gt);

// -log p(S_0 | S_t, F_lq [, Z_t]); z_t = nullptr gives the plain SegDM loss,
// otherwise the ImgAided variant
int loss_segdm_node(BoundModels& bm, const DiscreteSchedule& d, const MaskState& s0,
                    const TensorF& lq, int t, Rng& rng, const TensorF* z_t);

struct JointNodes {
  int total, sr, iac;
};
// L_SR + lambda * L_IAC at a shared t (and shared corruption draws)
JointNodes loss_joint_node(BoundModels& bm, const Schedules& s, const TensorF& z0,
                           const MaskState& s0, const TensorF& z_lq_up, const TensorF& lq, int t,
                           const TensorF& eps, double lambda, Rng& rng);

// ---- value-level entry points (spec operations) -----------------------------

double loss_seg2img(const ModelSet& m, const Schedules& s, const TensorF& z0, const MaskState& s0,
                    int t, const TensorF& eps, Rng& rng);
double loss_sr(const ModelSet& m, const Schedules& s, const TensorF& z0, const MaskState& s0,
               const TensorF& z_lq_up, int t, const TensorF& eps, Rng& rng);
double loss_backbone(const ModelSet& m, const TensorF& lq, const MaskState& gt);
double loss_segdm(const ModelSet& m, const DiscreteSchedule& d, const MaskState& s0,
                  const TensorF& lq, int t, Rng& rng, const TensorF* z_t);
struct JointLoss {
  double total, sr, iac;
};
JointLoss loss_joint(const ModelSet& m, const Schedules& s, const TensorF& z0, const MaskState& s0,
                     const TensorF& z_lq_up, const TensorF& lq, int t, const TensorF& eps,
                     double lambda, Rng& rng);

BridgeConditions bridge_conditions(const ModelSet& m, const LatentState& z, const MaskState& s);

// ---- reverse steps ----------------------------------------------------------

// Backbone features evaluated once per image and re-leafed per step.
struct BackboneValues {
  std::array<TensorF, 3> F;
  TensorF init_logits;
};
BackboneValues eval_backbone(const ModelSet& m, const TensorF& lq);

// precomputed (gamma, beta) value pairs from the img controller
struct SftValues {
  std::array<std::pair<TensorF, TensorF>, 3> gamma_beta;
};
SftValues eval_img_controller(const ModelSet& m, const TensorF& z_lq_up);

// One SRDM transition t -> t_prev conditioned on z_lq (SFT) and s_t (bridge).
TensorF srdm_reverse_step(const ModelSet& m, const GaussianSchedule& g, const TensorF& z_t, int t,
                          int t_prev, const TensorF& z_lq_up, const MaskState& s_t, double eta,
                          Rng& rng);

// One SegDM transition; z_t = nullptr drops the ImgAided condition.
// t_prev = -1 returns the argmax of the predicted s0 distribution (at t = 0).
MaskState segdm_reverse_step(const ModelSet& m, const DiscreteSchedule& d, const MaskState& s_t,
                             int t, int t_prev, const BackboneValues& F, const TensorF* z_t,
                             Rng& rng);

// The sampling tail of segdm_reverse_step, driven by an explicit per-pixel s0
// distribution (softmaxed logits, or an oracle).
MaskState segdm_posterior_sample(const DiscreteSchedule& d, const MaskState& s_t,
                                 const TensorF& s0_probs, int t, int t_prev, Rng& rng);

}  // namespace segsr
