#include "segsr/dataset.hpp"

#include <cstdio>

#include "segsr/image_io.hpp"
#include "segsr/sampler.hpp"

namespace segsr {

DatasetCache load_dataset(const std::string& dir, const NetConfig& net) {
  DatasetManifest man = load_manifest(dir);
  require(man.K == net.K, "dataset K=" + std::to_string(man.K) + " does not match config K=" +
                              std::to_string(net.K));
  DatasetCache ds;
  ds.K = man.K;
  ds.scenes.reserve(man.scenes.size());
  for (const auto& rec : man.scenes) {
    char name[16];
    std::snprintf(name, sizeof name, "%06d", rec.id);
    SceneData sc;
    sc.id = rec.id;
    sc.seed = rec.seed;
    sc.val = rec.val;
    sc.hq01 = read_png_rgb(dir + "/hq/" + name + ".png");
    sc.lq01 = read_png_rgb(dir + "/lq/" + name + ".png");
    sc.mask_hq = read_png_gray(dir + "/mask/" + name + ".png");
    require(sc.hq01.shape == std::vector<int>({3, net.hq, net.hq}),
            "dataset hq geometry mismatch for scene " + std::string(name));
    require(sc.lq01.shape == std::vector<int>({3, net.lq, net.lq}),
            "dataset lq geometry mismatch for scene " + std::string(name));
    require(sc.mask_hq.h == net.hq && sc.mask_hq.w == net.hq,
            "dataset mask geometry mismatch for scene " + std::string(name));
    sc.mask_s = resize_codec_encode(sc.mask_hq, net.mask, net.mask, net.K);
    sc.z0 = sc.hq01;
    for (auto& v : sc.z0.v) v = 2.0f * v - 1.0f;
    sc.z_lq_up = lq_to_z_geometry(sc.lq01, net);
    if (sc.val)
      ds.val_idx.push_back(int(ds.scenes.size()));
    else
      ds.train_idx.push_back(int(ds.scenes.size()));
    ds.scenes.push_back(std::move(sc));
  }
  require(!ds.train_idx.empty(), "dataset has no training scenes");
  return ds;
}

}  // namespace segsr
