#include "segsr/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>

namespace segsr {

double psnr(const TensorF& a, const TensorF& b, double max_val) {
  require(a.same_shape(b), "psnr: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  double mse = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = double(a.v[size_t(i)]) - double(b.v[size_t(i)]);
    mse += d * d;
  }
  mse /= double(a.numel());
  if (mse == 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(max_val * max_val / mse));
}

namespace {

std::vector<double> gray(const TensorF& img) {
  const int C = img.shape[0];
  const int64_t hw = int64_t(img.shape[1]) * img.shape[2];
  std::vector<double> g(size_t(hw), 0.0);
  for (int c = 0; c < C; ++c)
    for (int64_t p = 0; p < hw; ++p) g[size_t(p)] += double(img.v[size_t(c) * hw + p]);
  for (auto& v : g) v /= double(C);
  return g;
}

}  // namespace

double ssim(const TensorF& a, const TensorF& b, double max_val) {
  require(a.same_shape(b), "ssim: shape mismatch");
  require(a.shape.size() == 3, "ssim expects [C,H,W]");
  const int H = a.shape[1], W = a.shape[2];
  const int win = 8;
  require(H >= win && W >= win, "ssim: image smaller than the 8x8 window");
  const double C1 = (0.01 * max_val) * (0.01 * max_val);
  const double C2 = (0.03 * max_val) * (0.03 * max_val);
  const std::vector<double> ga = gray(a), gb = gray(b);

  double total = 0.0;
  int64_t count = 0;
  const double n = double(win) * win;
  for (int y = 0; y + win <= H; ++y)
    for (int x = 0; x + win <= W; ++x) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = 0; dy < win; ++dy)
        for (int dx = 0; dx < win; ++dx) {
          const double va = ga[size_t((y + dy) * W + x + dx)];
          const double vb = gb[size_t((y + dy) * W + x + dx)];
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      const double mua = sa / n, mub = sb / n;
      const double vara = saa / n - mua * mua;
      const double varb = sbb / n - mub * mub;
      const double cov = sab / n - mua * mub;
      total += ((2 * mua * mub + C1) * (2 * cov + C2)) /
               ((mua * mua + mub * mub + C1) * (vara + varb + C2));
      ++count;
    }
  return total / double(count);
}

SegScore seg_accuracy(const IntField& pred, const IntField& gt) {
  require(pred.h == gt.h && pred.w == gt.w, "seg_accuracy: geometry mismatch");
  int64_t correct = 0;
  std::map<int32_t, std::array<int64_t, 3>> per_class;  // class -> {inter, pred_count, gt_count}
  for (int64_t i = 0; i < gt.numel(); ++i) {
    const int32_t p = pred.v[size_t(i)], g = gt.v[size_t(i)];
    require(p >= 0 && g >= 0, "seg_accuracy: negative class");
    if (p == g) ++correct;
    per_class[g][2]++;
    per_class[p][1]++;
    if (p == g) per_class[g][0]++;
  }
  SegScore out;
  out.pixel_acc = double(correct) / double(gt.numel());
  double iou_sum = 0.0;
  int present = 0;
  for (const auto& [cls, c] : per_class) {
    if (c[2] == 0) continue;  // absent from gt
    const int64_t uni = c[1] + c[2] - c[0];
    iou_sum += uni > 0 ? double(c[0]) / double(uni) : 0.0;
    ++present;
  }
  out.miou = present > 0 ? iou_sum / double(present) : 0.0;
  return out;
}

std::vector<AblationRecord> ablation_run_detailed(const ModelSet& m, const Schedules& s,
                                                  const DatasetCache& ds,
                                                  const std::vector<std::string>& modes,
                                                  const std::vector<uint64_t>& seeds,
                                                  const SampleOptions& base) {
  require(!modes.empty() && !seeds.empty(), "ablation needs at least one mode and seed");
  require(!ds.val_idx.empty(), "ablation needs a validation split");

  struct Job {
    size_t mode_i, seed_i;
    int scene_idx;
  };
  std::vector<Job> jobs;
  for (size_t mi = 0; mi < modes.size(); ++mi)
    for (size_t si = 0; si < seeds.size(); ++si)
      for (int sc : ds.val_idx) jobs.push_back({mi, si, sc});

  std::vector<AblationRecord> records(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (int64_t j = 0; j < int64_t(jobs.size()); ++j) {
    const Job& job = jobs[size_t(j)];
    const SceneData& sc = ds.scenes[size_t(job.scene_idx)];
    const MaskSource src = mask_source_from_name(modes[job.mode_i]);
    SampleOptions opt = base;
    opt.seed = mix64(seeds[job.seed_i], uint64_t(sc.id));
    opt.capture_trajectory = false;
    SampleResult r = srdm_only_sample(m, s, sc.lq01, src, &sc.mask_hq, opt);
    AblationRecord rec;
    rec.mode = modes[job.mode_i];
    rec.scene_id = sc.id;
    rec.sample_seed = opt.seed;
    rec.psnr = psnr(r.image, sc.hq01);
    rec.ssim = ssim(r.image, sc.hq01);
    const SegScore seg = seg_accuracy(r.mask, sc.mask_hq);
    rec.acc = seg.pixel_acc;
    rec.miou = seg.miou;
    records[size_t(j)] = rec;
  }
  return records;
}

std::vector<AblationRow> ablation_aggregate(const std::vector<AblationRecord>& records,
                                            const std::vector<std::string>& modes) {
  std::vector<AblationRow> rows;
  for (const auto& mode : modes) {
    AblationRow row;
    row.mode = mode;
    for (const auto& r : records) {
      if (r.mode != mode) continue;
      row.psnr += r.psnr;
      row.ssim += r.ssim;
      row.acc += r.acc;
      row.miou += r.miou;
      row.n++;
    }
    if (row.n > 0) {
      row.psnr /= row.n;
      row.ssim /= row.n;
      row.acc /= row.n;
      row.miou /= row.n;
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<AblationRow> ablation_run(const ModelSet& m, const Schedules& s,
                                      const DatasetCache& ds,
                                      const std::vector<std::string>& modes,
                                      const std::vector<uint64_t>& seeds,
                                      const SampleOptions& base) {
  return ablation_aggregate(ablation_run_detailed(m, s, ds, modes, seeds, base), modes);
}

std::string ablation_tsv(const std::vector<AblationRow>& rows) {
  std::string out = "mode\tpsnr\tssim\tacc\tmiou\tn\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s\t%.6f\t%.6f\t%.6f\t%.6f\t%d\n", r.mode.c_str(), r.psnr,
                  r.ssim, r.acc, r.miou, r.n);
    out += buf;
  }
  return out;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::string out;
  out += "+----------+--------+--------+--------+--------+------+\n";
  out += "| mode     |  PSNR  |  SSIM  |  ACC   |  mIoU  |  n   |\n";
  out += "+----------+--------+--------+--------+--------+------+\n";
  char buf[160];
  for (const auto& r : rows) {
    std::string label = r.mode;
    if (label.size() == 1 && label[0] >= '1' && label[0] <= '5') label = "Exp.(" + label + ")";
    std::snprintf(buf, sizeof buf, "| %-8s | %6.2f | %6.4f | %6.4f | %6.4f | %4d |\n",
                  label.c_str(), r.psnr, r.ssim, r.acc, r.miou, r.n);
    out += buf;
  }
  out += "+----------+--------+--------+--------+--------+------+\n";
  return out;
}

}  // namespace segsr
