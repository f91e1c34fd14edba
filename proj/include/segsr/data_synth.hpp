#pragma once

#include <string>
#include <vector>

#include "segsr/tensor.hpp"

namespace segsr {

// Toy class set: background is always index 0.
struct SegClassSet {
  std::vector<std::string> names;
  int K() const { return int(names.size()); }
  static SegClassSet toy(int k);
};

struct DegradationParams {
  double blur_sigma = 0.2;   // [0.2, 3.0]
  double noise_sigma = 0.0;  // [0, 0.1]
  int quant_levels = 256;    // {32, 64, 128, 256}
};

// Procedural scene: sky gradient, striped ground and 1-3 textured shapes over
// a flat background. hq is a pure function of (mask, pixel), so an accurate
// mask is a genuine restoration oracle.
void gen_scene(uint64_t seed, int K, TensorF& hq, IntField& mask, int side = 64);

// class -> RGB at a pixel (the scene renderer)
void class_color(int cls, int x, int y, int side, float rgb[3]);

// blur -> 4x area downsample -> additive noise -> quantize -> clamp
TensorF degrade_with_params(const TensorF& hq01, const DegradationParams& p, uint64_t noise_seed);
std::pair<TensorF, DegradationParams> degrade(const TensorF& hq01, uint64_t seed);

struct SceneRecord {
  int id = 0;
  uint64_t seed = 0;
  bool val = false;
  DegradationParams deg;
};

struct DatasetManifest {
  int version = 1;
  int K = 6;
  uint64_t seed = 0;
  std::vector<SceneRecord> scenes;
};

// Writes manifest.json plus hq/lq/mask PNG triples under out_dir.
DatasetManifest build_dataset(int n_scenes, uint64_t seed, int K, const std::string& out_dir,
                              int side = 64);

DatasetManifest load_manifest(const std::string& dir);

}  // namespace segsr
