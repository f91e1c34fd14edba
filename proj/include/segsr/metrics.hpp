#pragma once

#include "segsr/dataset.hpp"
#include "segsr/sampler.hpp"

namespace segsr {

// 10 log10(max^2 / MSE) over all channels; MSE = 0 returns the 99 dB cap.
double psnr(const TensorF& a, const TensorF& b, double max_val = 1.0);

// Windowed SSIM on the channel-mean grayscale image, 8x8 uniform windows,
// stride 1, C1 = (0.01 max)^2, C2 = (0.03 max)^2.
double ssim(const TensorF& a, const TensorF& b, double max_val = 1.0);

struct SegScore {
  double pixel_acc = 0.0;
  double miou = 0.0;
};
// mIoU averages over the classes present in gt.
SegScore seg_accuracy(const IntField& pred, const IntField& gt);

struct AblationRecord {
  std::string mode;
  int scene_id = 0;
  uint64_t sample_seed = 0;
  double psnr = 0.0, ssim = 0.0, acc = 0.0, miou = 0.0;
};

struct AblationRow {
  std::string mode;
  double psnr = 0.0, ssim = 0.0, acc = 0.0, miou = 0.0;
  int n = 0;
};

// Runs every (mode, validation scene, seed) triple. Sampling seeds are shared
// across modes so per-scene comparisons are paired.
std::vector<AblationRecord> ablation_run_detailed(const ModelSet& m, const Schedules& s,
                                                  const DatasetCache& ds,
                                                  const std::vector<std::string>& modes,
                                                  const std::vector<uint64_t>& seeds,
                                                  const SampleOptions& base);

std::vector<AblationRow> ablation_aggregate(const std::vector<AblationRecord>& records,
                                            const std::vector<std::string>& modes);

std::vector<AblationRow> ablation_run(const ModelSet& m, const Schedules& s,
                                      const DatasetCache& ds,
                                      const std::vector<std::string>& modes,
                                      const std::vector<uint64_t>& seeds,
                                      const SampleOptions& base);

// UTF-8 TSV with header mode\tpsnr\tssim\tacc\tmiou\tn
std::string ablation_tsv(const std::vector<AblationRow>& rows);
// human-readable table mirroring the Exp.(1)-(5) layout
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace segsr
