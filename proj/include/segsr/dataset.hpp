#pragma once

#include "segsr/data_synth.hpp"
#include "segsr/mask_codec.hpp"
#include "segsr/models.hpp"

namespace segsr {

// One dataset scene preloaded for training/eval: PNGs decoded, z-domain and
// working-resolution derivatives precomputed.
struct SceneData {
  int id = 0;
  uint64_t seed = 0;
  bool val = false;
  TensorF hq01;      // [3,hq,hq] in [0,1]
  TensorF lq01;      // [3,lq,lq]
  IntField mask_hq;  // [hq,hq]
  MaskState mask_s;  // encoded to [mask,mask], t = 0
  TensorF z0;        // 2*hq01 - 1
  TensorF z_lq_up;   // LQ upsampled to HQ geometry, z domain
};

struct DatasetCache {
  int K = 0;
  std::vector<SceneData> scenes;
  std::vector<int> train_idx, val_idx;
};

DatasetCache load_dataset(const std::string& dir, const NetConfig& net);

}  // namespace segsr
