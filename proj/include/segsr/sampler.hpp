#pragma once

#include "segsr/losses.hpp"

namespace segsr {

enum class MaskSource { none, backbone_argmax, zero_mask, gt_mask, segdm, coupled };

MaskSource mask_source_from_name(const std::string& s);
const char* mask_source_name(MaskSource m);

struct SampleOptions {
  int steps = 50;
  double eta = 1.0;
  uint64_t seed = 0;
  bool capture_trajectory = false;
  int trajectory_every = 5;
};

struct SampleResult {
  TensorF image;      // [3,hq,hq] in [0,1]
  IntField mask;      // final / guiding mask decoded to [hq,hq]
  IntField mask_small;  // working resolution [mask,mask]
  std::vector<TensorF> traj_images;
  std::vector<IntField> traj_masks;  // working resolution
};

// nearest x4 upsample of the LQ image, mapped to the z domain [-1,1]
TensorF lq_to_z_geometry(const TensorF& lq01, const NetConfig& net);

// Full coupled reverse loop (Jacobi: both branches step from the pre-update
// (Z_t, S_t) pair).
SampleResult coupled_sample(const ModelSet& m, const Schedules& s, const TensorF& lq01,
                            const SampleOptions& opt);

// Single-branch ablation variants. gt_mask_hq is required for
// MaskSource::gt_mask and must be the scene's full-resolution ground truth.
SampleResult srdm_only_sample(const ModelSet& m, const Schedules& s, const TensorF& lq01,
                              MaskSource source, const IntField* gt_mask_hq,
                              const SampleOptions& opt);

}  // namespace segsr
