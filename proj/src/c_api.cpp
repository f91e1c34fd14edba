#include "segsr/segsr.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "segsr/image_io.hpp"
#include "segsr/metrics.hpp"
#include "segsr/selftest.hpp"
#include "segsr/trainer.hpp"

using namespace segsr;

struct segsr_session {
  RunConfig cfg;
};

namespace {

thread_local std::string t_last_error;

segsr_status set_error(const error& e) {
  t_last_error = e.what();
  return e.kind() == errc::validation ? SEGSR_ERR_VALIDATION : SEGSR_ERR_RUNTIME;
}

template <class Fn>
segsr_status guarded(Fn&& fn) {
  try {
    t_last_error.clear();
    fn();
    return SEGSR_OK;
  } catch (const error& e) {
    return set_error(e);
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return SEGSR_ERR_RUNTIME;
  }
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p) std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

std::string pick_dir(const char* arg, const std::string& from_cfg, const char* what) {
  if (arg && *arg) return arg;
  if (!from_cfg.empty()) return from_cfg;
  fail_validation(std::string("no ") + what + " directory given (flag or config paths)");
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// trajectory montage: top row z0_hat estimates, bottom row mask previews
TensorF trajectory_grid(const SampleResult& r, int K) {
  const int n = int(r.traj_images.size());
  const int h = r.traj_images[0].shape[1], w = r.traj_images[0].shape[2];
  TensorF grid({3, 2 * h, n * w});
  const int64_t ghw = int64_t(2 * h) * (int64_t(n) * w);
  for (int i = 0; i < n; ++i) {
    const TensorF& im = r.traj_images[size_t(i)];
    const IntField up = resize_nearest(r.traj_masks[size_t(i)], h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c)
          grid.v[size_t(c) * ghw + int64_t(y) * (int64_t(n) * w) + int64_t(i) * w + x] =
              im.v[size_t((int64_t(c) * h + y) * w + x)];
        float rgb[3];
        class_color(int(up.at(y, x)), x, y, h, rgb);
        for (int c = 0; c < 3; ++c)
          grid.v[size_t(c) * ghw + int64_t(y + h) * (int64_t(n) * w) + int64_t(i) * w + x] = rgb[c];
      }
  }
  (void)K;
  return grid;
}

}  // namespace

extern "C" {

const char* segsr_version(void) { return "1.0.0"; }

const char* segsr_last_error(void) { return t_last_error.c_str(); }

segsr_status segsr_session_open(const char* config_path, segsr_session** out) {
  return guarded([&] {
    require(out != nullptr, "null output pointer");
    auto s = std::make_unique<segsr_session>();
    s->cfg = config_path && *config_path ? load_config(config_path) : default_config();
    s->cfg.validate();
    *out = s.release();
  });
}

void segsr_session_close(segsr_session* s) { delete s; }

segsr_status segsr_session_save_config(segsr_session* s, const char* path) {
  return guarded([&] {
    require(s && path, "null argument");
    save_config(path, s->cfg);
  });
}

segsr_status segsr_gen_data(const char* out_dir, int n_scenes, uint64_t seed, int k) {
  return guarded([&] {
    require(out_dir && *out_dir, "gen_data: output directory required");
    build_dataset(n_scenes, seed, k, out_dir);
  });
}

segsr_status segsr_train(segsr_session* s, const char* stage, const char* data_dir,
                         const char* ckpt_dir, int resume) {
  return guarded([&] {
    require(s && stage, "null argument");
    const Stage st = stage_from_name(stage);
    const std::string data = pick_dir(data_dir, s->cfg.data_path, "data");
    const std::string ckpt = pick_dir(ckpt_dir, s->cfg.ckpt_path, "checkpoint");
    const DatasetCache ds = load_dataset(data, s->cfg.net());
    RunStageOptions opt;
    opt.resume = resume != 0;
    opt.quiet = false;
    run_stage(stage_plan(s->cfg, st), s->cfg, ds, ckpt, s->cfg.seed_train, opt);
  });
}

segsr_status segsr_sample(segsr_session* s, const char* ckpt_dir, const char* data_dir,
                          const char* input, const char* mode, uint64_t seed,
                          const char* out_prefix, int save_trajectory) {
  return guarded([&] {
    require(s && input && mode && out_prefix, "null argument");
    const std::string ckpt = pick_dir(ckpt_dir, s->cfg.ckpt_path, "checkpoint");
    const MaskSource src = mask_source_from_name(mode);

    TensorF lq;
    const IntField* gt = nullptr;
    IntField gt_storage;
    const bool is_index = !std::string(input).empty() &&
                          std::string(input).find_first_not_of("0123456789") == std::string::npos;
    if (is_index) {
      const std::string data = pick_dir(data_dir, s->cfg.data_path, "data");
      const DatasetCache ds = load_dataset(data, s->cfg.net());
      const int idx = std::stoi(input);
      require(idx >= 0 && idx < int(ds.scenes.size()),
              "dataset index out of range: " + std::string(input));
      lq = ds.scenes[size_t(idx)].lq01;
      gt_storage = ds.scenes[size_t(idx)].mask_hq;
      gt = &gt_storage;
    } else {
      lq = read_png_rgb(input);
      if (src == MaskSource::gt_mask)
        fail_validation("gt_mask mode needs a dataset index input: no ground-truth mask "
                        "accompanies a bare LQ image");
    }

    ModelSet m = load_models_for_modes(s->cfg, {mode}, ckpt);
    const Schedules sch = build_schedules(s->cfg);
    SampleOptions opt;
    opt.steps = s->cfg.steps;
    opt.eta = s->cfg.eta;
    opt.seed = seed;
    opt.capture_trajectory = save_trajectory != 0;
    opt.trajectory_every = s->cfg.trajectory_every;
    const SampleResult r = srdm_only_sample(m, sch, lq, src, gt, opt);

    const std::string prefix = out_prefix;
    write_png_rgb8(prefix + ".png", r.image);
    write_png_gray8(prefix + ".mask.png", r.mask);
    if (opt.capture_trajectory && !r.traj_images.empty())
      write_png_rgb8(prefix + ".traj.png", trajectory_grid(r, s->cfg.K));
  });
}

segsr_status segsr_eval(segsr_session* s, const char* ckpt_dir, const char* data_dir,
                        const char* modes_csv, const char* seeds_csv, const char* out_path,
                        char** table_out) {
  return guarded([&] {
    require(s && modes_csv && seeds_csv && out_path, "null argument");
    const std::string data = pick_dir(data_dir, s->cfg.data_path, "data");
    const std::string ckpt = pick_dir(ckpt_dir, s->cfg.ckpt_path, "checkpoint");
    const std::vector<std::string> modes = split_csv(modes_csv);
    std::vector<uint64_t> seeds;
    for (const auto& t : split_csv(seeds_csv)) seeds.push_back(std::stoull(t));
    require(!modes.empty(), "eval: no modes given");
    require(!seeds.empty(), "eval: no seeds given");

    const DatasetCache ds = load_dataset(data, s->cfg.net());
    ModelSet m = load_models_for_modes(s->cfg, modes, ckpt);
    const Schedules sch = build_schedules(s->cfg);
    SampleOptions opt;
    opt.steps = s->cfg.steps;
    opt.eta = s->cfg.eta;
    const auto rows = ablation_run(m, sch, ds, modes, seeds, opt);

    std::ofstream out(out_path, std::ios::binary);
    if (!out) fail_runtime(std::string("cannot write ") + out_path);
    out << ablation_tsv(rows);
    if (table_out) *table_out = dup_string(ablation_table(rows));
  });
}

segsr_status segsr_selftest(char** report_out) {
  std::ostringstream report;
  segsr_status rc = SEGSR_OK;
  try {
    t_last_error.clear();
    if (segsr::selftest(report) != 0) {
      t_last_error = "selftest reported failures";
      rc = SEGSR_ERR_RUNTIME;
    }
  } catch (const error& e) {
    rc = set_error(e);
  } catch (const std::exception& e) {
    t_last_error = e.what();
    rc = SEGSR_ERR_RUNTIME;
  }
  if (report_out) *report_out = dup_string(report.str());
  return rc;
}

void segsr_free(char* p) { std::free(p); }

}  // extern "C"
