#include "segsr/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "segsr/checkpoint.hpp"
#include "segsr/sampler.hpp"

namespace segsr {

namespace fs = std::filesystem;

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::seg2img_pretrain: return "seg2img_pretrain";
    case Stage::srdm_joint: return "srdm_joint";
    case Stage::backbone_pretrain: return "backbone_pretrain";
    case Stage::segdm_train: return "segdm_train";
    case Stage::imgaided_train: return "imgaided_train";
    case Stage::final_joint: return "final_joint";
  }
  return "?";
}

Stage stage_from_name(const std::string& s) {
  for (int i = 0; i < kNumStages; ++i)
    if (s == stage_name(Stage(i))) return Stage(i);
  fail_validation("unknown stage: " + s);
}

double lr_at(const LrSchedule& s, int step, int total) {
  require(step >= 0 && step < total, "lr_at: step out of range");
  switch (s.kind) {
    case LrSchedule::Kind::fixed: return s.lr0;
    case LrSchedule::Kind::poly: return s.lr0 * std::pow(1.0 - double(step) / double(total), s.power);
    case LrSchedule::Kind::halving:
      return std::max(s.floor, s.lr0 * std::pow(2.0, -double(step / s.every)));
  }
  return s.lr0;
}

std::vector<StagePlan> make_default_plan(const std::string& scale) {
  require(scale == "paper" || scale == "desk", "scale must be 'paper' or 'desk'");
  const bool desk = scale == "desk";
  const int it_div = desk ? 100 : 1;
  const int b_div = desk ? 4 : 1;

  auto fixed = [](double lr) { return LrSchedule{LrSchedule::Kind::fixed, lr, 1.0, 0, 0.0}; };

  std::vector<StagePlan> plans;
  plans.push_back({Stage::seg2img_pretrain, 160000 / it_div, 32 / b_div, fixed(1e-5),
                   {Role::seg_controller}, {Role::img_denoiser}});
  plans.push_back({Stage::srdm_joint, 160000 / it_div, 32 / b_div, fixed(5e-5),
                   {Role::img_denoiser, Role::img_controller, Role::seg_controller}, {}});
  plans.push_back({Stage::backbone_pretrain, 160000 / it_div, 16 / b_div,
                   LrSchedule{LrSchedule::Kind::poly, 6e-5, 1.0, 0, 0.0}, {Role::seg_backbone}, {}});
  plans.push_back({Stage::segdm_train, 320000 / it_div, 32 / b_div,
                   LrSchedule{LrSchedule::Kind::halving, 1.5e-4, 1.0, 20000 / it_div, 1e-6},
                   {Role::seg_denoiser}, {Role::seg_backbone}});
  plans.push_back({Stage::imgaided_train, 160000 / it_div, 32 / b_div, fixed(1e-5),
                   {Role::img_aided}, {Role::seg_backbone, Role::seg_denoiser}});
  plans.push_back({Stage::final_joint, 320000 / it_div, 32 / b_div, fixed(5e-5),
                   {Role::seg_controller, Role::img_aided, Role::img_controller},
                   {Role::img_denoiser, Role::seg_backbone, Role::seg_denoiser}});
  return plans;
}

std::vector<StagePlan> plan_from_config(const RunConfig& cfg) {
  std::vector<StagePlan> plans = make_default_plan(cfg.scale);
  for (auto& p : plans) {
    auto it = cfg.stages.find(stage_name(p.stage));
    if (it == cfg.stages.end()) continue;
    if (it->second.iterations != -1) p.iterations = it->second.iterations;
    if (it->second.batch != -1) p.batch = it->second.batch;
  }
  return plans;
}

StagePlan stage_plan(const RunConfig& cfg, Stage st) {
  for (auto& p : plan_from_config(cfg))
    if (p.stage == st) return p;
  fail_validation("no plan for stage");
}

std::string ckpt_file(const std::string& dir, Stage st, Role r) {
  return dir + "/" + stage_name(st) + "." + role_name(r) + ".sgsr";
}

std::vector<Role> stage_outputs(Stage st) {
  StagePlan p;
  for (auto& q : make_default_plan("desk"))
    if (q.stage == st) p = q;
  std::vector<Role> out = p.trainable;
  out.insert(out.end(), p.frozen.begin(), p.frozen.end());
  return out;
}

namespace {

// roles first introduced by each stage
Stage born_in(Role r) {
  switch (r) {
    case Role::img_denoiser: return Stage::seg2img_pretrain;
    case Role::seg_controller: return Stage::seg2img_pretrain;
    case Role::img_controller: return Stage::srdm_joint;
    case Role::seg_backbone: return Stage::backbone_pretrain;
    case Role::seg_denoiser: return Stage::segdm_train;
    case Role::img_aided: return Stage::imgaided_train;
  }
  return Stage::seg2img_pretrain;
}

// most recent stage index < limit whose output includes the role and whose
// file exists
int latest_provider(const std::string& dir, Role r, int limit) {
  for (int j = limit - 1; j >= 0; --j) {
    const Stage st = Stage(j);
    const auto outs = stage_outputs(st);
    if (std::find(outs.begin(), outs.end(), r) == outs.end()) continue;
    if (fs::exists(ckpt_file(dir, st, r))) return j;
  }
  return -1;
}

void check_predecessors(const RunConfig&, Stage st, const std::string& dir) {
  for (int j = 0; j < int(st); ++j)
    for (Role r : stage_outputs(Stage(j))) {
      const std::string f = ckpt_file(dir, Stage(j), r);
      if (!fs::exists(f))
        fail_validation(std::string(stage_name(st)) + " requires the " + stage_name(Stage(j)) +
                        " checkpoint; missing " + f);
    }
}

ModelSet fresh_models(const RunConfig& cfg) {
  ModelSet m;
  m.net = cfg.net();
  return m;
}

void load_or_init_role(ModelSet& m, const RunConfig& cfg, Role r, Stage st,
                       const std::string& dir) {
  const int provider = latest_provider(dir, r, int(st));
  if (provider >= 0) {
    m.at(r) = load_params(ckpt_file(dir, Stage(provider), r), r);
    return;
  }
  if (born_in(r) == st) {
    switch (r) {
      case Role::img_denoiser: m.at(r) = init_img_denoiser(m.net, cfg.seed_init); break;
      case Role::img_controller: m.at(r) = init_img_controller(m.net, cfg.seed_init); break;
      case Role::seg_backbone: m.at(r) = init_seg_backbone(m.net, cfg.seed_init); break;
      case Role::seg_denoiser: m.at(r) = init_seg_denoiser(m.net, cfg.seed_init); break;
      case Role::seg_controller:
        m.at(r) = init_seg_controller(m.net, m.at(Role::img_denoiser), cfg.seed_init);
        break;
      case Role::img_aided: m.at(r) = init_img_aided(m.net, cfg.seed_init); break;
    }
    return;
  }
  fail_validation(std::string("missing checkpoint for ") + role_name(r) + "; run stage " +
                  stage_name(born_in(r)) + " first");
}

std::vector<Role> stage_inputs(Stage st) {
  switch (st) {
    case Stage::seg2img_pretrain: return {Role::img_denoiser, Role::seg_controller};
    case Stage::srdm_joint:
      return {Role::img_denoiser, Role::seg_controller, Role::img_controller};
    case Stage::backbone_pretrain: return {Role::seg_backbone};
    case Stage::segdm_train: return {Role::seg_backbone, Role::seg_denoiser};
    case Stage::imgaided_train:
      return {Role::seg_backbone, Role::seg_denoiser, Role::img_aided};
    case Stage::final_joint:
      return {Role::img_denoiser, Role::img_controller, Role::seg_backbone, Role::seg_denoiser,
              Role::seg_controller, Role::img_aided};
  }
  return {};
}

}  // namespace

ModelSet load_models_for_stage(const RunConfig& cfg, Stage st, const std::string& dir) {
  check_predecessors(cfg, st, dir);
  ModelSet m = fresh_models(cfg);
  for (Role r : stage_inputs(st)) load_or_init_role(m, cfg, r, st, dir);
  return m;
}

ModelSet load_models_for_modes(const RunConfig& cfg, const std::vector<std::string>& modes,
                               const std::string& dir) {
  std::set<Role> needed = {Role::img_denoiser, Role::img_controller};
  for (const auto& mode : modes) {
    const MaskSource src = mask_source_from_name(mode);
    if (src != MaskSource::none) needed.insert(Role::seg_controller);
    if (src == MaskSource::backbone_argmax || src == MaskSource::segdm ||
        src == MaskSource::coupled)
      needed.insert(Role::seg_backbone);
    if (src == MaskSource::segdm || src == MaskSource::coupled) needed.insert(Role::seg_denoiser);
    if (src == MaskSource::coupled) needed.insert(Role::img_aided);
  }
  ModelSet m = fresh_models(cfg);
  for (Role r : needed) {
    const int provider = latest_provider(dir, r, kNumStages);
    if (provider < 0)
      fail_validation(std::string("missing checkpoint for ") + role_name(r) + "; run stage " +
                      stage_name(born_in(r)) + " first");
    m.at(r) = load_params(ckpt_file(dir, Stage(provider), r), r);
  }
  return m;
}

// ---------------------------------------------------------------------------
// run_stage
// ---------------------------------------------------------------------------

namespace {

struct GradSet {
  // aligned with ParamStore order, allocated only for trainable roles
  std::array<std::vector<TensorF>, kNumRoles> g;

  void init(const ModelSet& m, const std::vector<Role>& trainable) {
    for (Role r : trainable) {
      auto& vec = g[size_t(r)];
      vec.clear();
      for (const auto& p : m.at(r).params) vec.push_back(TensorF::zeros(p.second.shape));
    }
  }
  void zero(const std::vector<Role>& trainable) {
    for (Role r : trainable)
      for (auto& t : g[size_t(r)]) std::fill(t.v.begin(), t.v.end(), 0.0f);
  }
};

struct AdamState {
  std::array<std::vector<TensorF>, kNumRoles> m, v;
  int64_t step = 0;

  void init(const ModelSet& ms, const std::vector<Role>& trainable) {
    for (Role r : trainable) {
      auto& mm = m[size_t(r)];
      auto& vv = v[size_t(r)];
      mm.clear();
      vv.clear();
      for (const auto& p : ms.at(r).params) {
        mm.push_back(TensorF::zeros(p.second.shape));
        vv.push_back(TensorF::zeros(p.second.shape));
      }
    }
  }
};

struct StepNodes {
  int loss = -1, sr = -1, iac = -1;
};

StepNodes build_objective(Stage st, BoundModels& bm, const Schedules& sch, const RunConfig& cfg,
                          const SceneData& sc, Rng& rng) {
  StepNodes out;
  auto draw_eps = [&](const std::vector<int>& shape) {
    TensorF eps(shape);
    for (auto& v : eps.v) v = float(rng.normal());
    return eps;
  };
  switch (st) {
    case Stage::seg2img_pretrain: {
      const int t = int(rng.below(uint64_t(sch.g.T)));
      TensorF eps = draw_eps(sc.z0.shape);
      out.loss = loss_seg2img_node(bm, sch, sc.z0, sc.mask_s, t, eps, rng);
      break;
    }
    case Stage::srdm_joint: {
      const int t = int(rng.below(uint64_t(sch.g.T)));
      TensorF eps = draw_eps(sc.z0.shape);
      out.loss = loss_sr_node(bm, sch, sc.z0, sc.mask_s, sc.z_lq_up, t, eps, rng);
      break;
    }
    case Stage::backbone_pretrain: {
      out.loss = loss_backbone_node(bm, sc.lq01, sc.mask_s);
      break;
    }
    case Stage::segdm_train: {
      const int t = 1 + int(rng.below(uint64_t(sch.d.T)));
      out.loss = loss_segdm_node(bm, sch.d, sc.mask_s, sc.lq01, t, rng, nullptr);
      break;
    }
    case Stage::imgaided_train: {
      // t must satisfy both chains: z_t needs t < T, s_t needs t >= 1
      const int t = 1 + int(rng.below(uint64_t(std::min(sch.g.T - 1, sch.d.T))));
      TensorF eps = draw_eps(sc.z0.shape);
      TensorF z_t = q_sample_continuous(sch.g, sc.z0, t, eps);
      out.loss = loss_segdm_node(bm, sch.d, sc.mask_s, sc.lq01, t, rng, &z_t);
      break;
    }
    case Stage::final_joint: {
      const int t = 1 + int(rng.below(uint64_t(std::min(sch.g.T - 1, sch.d.T))));
      TensorF eps = draw_eps(sc.z0.shape);
      JointNodes jn = loss_joint_node(bm, sch, sc.z0, sc.mask_s, sc.z_lq_up, sc.lq01, t, eps,
                                      cfg.lambda, rng);
      out.loss = jn.total;
      out.sr = jn.sr;
      out.iac = jn.iac;
      break;
    }
  }
  return out;
}

std::string part_path(const std::string& dir, Stage st, const std::string& what) {
  return dir + "/" + stage_name(st) + ".part." + what + ".sgsr";
}

void write_snapshot(const std::string& dir, Stage st, const ModelSet& m, const AdamState& opt,
                    const std::vector<Role>& trainable, int done_steps,
                    const std::string& csv_so_far) {
  for (Role r : trainable) save_params(part_path(dir, st, role_name(r)), m.at(r));
  NamedTensors state;
  state.tag = "optimizer_state";
  state.tensors.emplace_back("step", TensorF({1}, {float(done_steps)}));
  for (Role r : trainable) {
    const auto& ps = m.at(r).params;
    for (size_t i = 0; i < ps.size(); ++i) {
      state.tensors.emplace_back(std::string("m.") + role_name(r) + "." + ps[i].first,
                                 opt.m[size_t(r)][i]);
      state.tensors.emplace_back(std::string("v.") + role_name(r) + "." + ps[i].first,
                                 opt.v[size_t(r)][i]);
    }
  }
  save_checkpoint(part_path(dir, st, "state"), state);
  std::ofstream csv(dir + "/" + stage_name(st) + ".loss.partial.csv", std::ios::binary);
  csv << csv_so_far;
}

bool load_snapshot(const std::string& dir, Stage st, ModelSet& m, AdamState& opt,
                   const std::vector<Role>& trainable, int& done_steps, std::string& csv_so_far) {
  if (!fs::exists(part_path(dir, st, "state"))) return false;
  for (Role r : trainable) m.at(r) = load_params(part_path(dir, st, role_name(r)), r);
  NamedTensors state = load_checkpoint(part_path(dir, st, "state"));
  require(state.tag == "optimizer_state", "bad snapshot state tag");
  done_steps = -1;
  for (auto& [name, t] : state.tensors) {
    if (name == "step") {
      done_steps = int(t.v.at(0));
      continue;
    }
    const bool is_m = name.rfind("m.", 0) == 0;
    const std::string rest = name.substr(2);
    const size_t dot = rest.find('.');
    require(dot != std::string::npos, "bad snapshot tensor name: " + name);
    const Role r = role_from_name(rest.substr(0, dot));
    const int idx = m.at(r).find(rest.substr(dot + 1));
    (is_m ? opt.m : opt.v)[size_t(r)][size_t(idx)] = std::move(t);
  }
  require(done_steps > 0, "snapshot lacks a step counter");
  opt.step = done_steps;
  std::ifstream csv(dir + "/" + stage_name(st) + ".loss.partial.csv", std::ios::binary);
  require(bool(csv), "snapshot lacks the partial loss log");
  csv_so_far.assign((std::istreambuf_iterator<char>(csv)), std::istreambuf_iterator<char>());
  return true;
}

}  // namespace

StageResult run_stage(const StagePlan& plan, const RunConfig& cfg, const DatasetCache& ds,
                      const std::string& ckpt_dir, uint64_t seed, const RunStageOptions& opt) {
  require(plan.iterations >= 1 && plan.batch >= 1, "empty stage plan");
  std::error_code ec;
  fs::create_directories(ckpt_dir, ec);
  const Schedules sch = build_schedules(cfg);
  const Stage st = plan.stage;

  ModelSet models = load_models_for_stage(cfg, st, ckpt_dir);

  std::set<Role> trainset(plan.trainable.begin(), plan.trainable.end());
  for (Role r : plan.frozen)
    require(!trainset.count(r), "trainable and frozen sets overlap");

  AdamState adam;
  adam.init(models, plan.trainable);

  StageResult res;
  std::string csv = "step,loss,lr";
  const bool joint = st == Stage::final_joint;
  if (joint) csv += ",part_sr,part_iac";
  csv += "\n";

  int start = 0;
  if (opt.resume) {
    if (load_snapshot(ckpt_dir, st, models, adam, plan.trainable, start, csv))
      res.start_step = start;
  }

  std::vector<GradSet> sample_grads(static_cast<size_t>(plan.batch));
  for (auto& g : sample_grads) g.init(models, plan.trainable);
  GradSet acc;
  acc.init(models, plan.trainable);

  std::vector<double> batch_losses(static_cast<size_t>(plan.batch));
  std::vector<double> batch_sr(static_cast<size_t>(plan.batch)), batch_iac(static_cast<size_t>(plan.batch));

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8, kWeightDecay = 0.01;

  for (int step = start; step < plan.iterations; ++step) {
    const double lr = lr_at(plan.lr, step, plan.iterations);

#pragma omp parallel for schedule(static, 1)
    for (int b = 0; b < plan.batch; ++b) {
      Rng rng(mix64(seed, uint64_t(st), uint64_t(step), uint64_t(b)));
      const SceneData& sc = ds.scenes[size_t(ds.train_idx[rng.below(ds.train_idx.size())])];
      TapeF tape;
      BoundModels bm(tape, models, trainset);
      StepNodes nodes = build_objective(st, bm, sch, cfg, sc, rng);
      tape.backward(nodes.loss);
      batch_losses[size_t(b)] = double(tape.val(nodes.loss).v[0]);
      if (joint) {
        batch_sr[size_t(b)] = double(tape.val(nodes.sr).v[0]);
        batch_iac[size_t(b)] = double(tape.val(nodes.iac).v[0]);
      }
      GradSet& gs = sample_grads[size_t(b)];
      for (Role r : plan.trainable) {
        Bound<float>& bound = bm.at(r);
        auto& dst = gs.g[size_t(r)];
        for (size_t i = 0; i < dst.size(); ++i) {
          if (bound.bound(int(i))) {
            dst[i] = tape.grad(bound.ids[i]);
          } else {
            std::fill(dst[i].v.begin(), dst[i].v.end(), 0.0f);
          }
        }
      }
    }

    // deterministic accumulation in batch order
    acc.zero(plan.trainable);
    for (int b = 0; b < plan.batch; ++b)
      for (Role r : plan.trainable) {
        auto& src = sample_grads[size_t(b)].g[size_t(r)];
        auto& dst = acc.g[size_t(r)];
        for (size_t i = 0; i < dst.size(); ++i)
          for (size_t k = 0; k < dst[i].v.size(); ++k) dst[i].v[k] += src[i].v[k];
      }
    const float inv_b = 1.0f / float(plan.batch);
    double sq = 0.0;
    for (Role r : plan.trainable)
      for (auto& t : acc.g[size_t(r)])
        for (auto& v : t.v) {
          v *= inv_b;
          sq += double(v) * double(v);
        }
    const double gnorm = std::sqrt(sq);
    if (gnorm > 1.0) {
      const float scale = float(1.0 / gnorm);
      for (Role r : plan.trainable)
        for (auto& t : acc.g[size_t(r)])
          for (auto& v : t.v) v *= scale;
    }

    double loss = 0.0, sr = 0.0, iac = 0.0;
    for (int b = 0; b < plan.batch; ++b) {
      loss += batch_losses[size_t(b)];
      sr += batch_sr[size_t(b)];
      iac += batch_iac[size_t(b)];
    }
    loss /= plan.batch;
    sr /= plan.batch;
    iac /= plan.batch;
    if (!std::isfinite(loss))
      fail_runtime(std::string(stage_name(st)) + ": non-finite loss at step " +
                   std::to_string(step + 1));
    res.losses.push_back(loss);
    if (joint) res.parts.emplace_back(sr, iac);

    // AdamW update
    adam.step += 1;
    const double bc1 = 1.0 - std::pow(kBeta1, double(adam.step));
    const double bc2 = 1.0 - std::pow(kBeta2, double(adam.step));
    for (Role r : plan.trainable) {
      auto& params = models.at(r).params;
      for (size_t i = 0; i < params.size(); ++i) {
        float* th = params[i].second.data();
        float* mm = adam.m[size_t(r)][i].data();
        float* vv = adam.v[size_t(r)][i].data();
        const float* gg = acc.g[size_t(r)][i].data();
        const int64_t n = params[i].second.numel();
        for (int64_t k = 0; k < n; ++k) {
          mm[k] = float(kBeta1 * mm[k] + (1.0 - kBeta1) * gg[k]);
          vv[k] = float(kBeta2 * vv[k] + (1.0 - kBeta2) * double(gg[k]) * double(gg[k]));
          const double mhat = double(mm[k]) / bc1;
          const double vhat = double(vv[k]) / bc2;
          double x = double(th[k]);
          x -= lr * kWeightDecay * x;
          x -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
          th[k] = float(x);
        }
      }
    }

    const int shown = step + 1;
    if (shown % opt.log_every == 0) {
      char line[200];
      if (joint)
        std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g\n", shown, loss, lr, sr, iac);
      else
        std::snprintf(line, sizeof line, "%d,%.9g,%.9g\n", shown, loss, lr);
      csv += line;
      if (!opt.quiet) std::fprintf(stderr, "[%s] %s", stage_name(st), line);
    }

    const bool halting = opt.halt_after > 0 && shown - start >= opt.halt_after &&
                         shown < plan.iterations;
    if (halting || (opt.snapshot_every > 0 && shown % opt.snapshot_every == 0 &&
                    shown < plan.iterations)) {
      write_snapshot(ckpt_dir, st, models, adam, plan.trainable, shown, csv);
      if (halting) {
        res.loss_csv = csv;
        return res;
      }
    }
  }

  for (Role r : stage_outputs(st)) {
    const std::string f = ckpt_file(ckpt_dir, st, r);
    save_params(f, models.at(r));
    res.written.push_back(f);
  }
  {
    std::ofstream out(ckpt_dir + "/" + std::string(stage_name(st)) + ".loss.csv",
                      std::ios::binary);
    if (!out) fail_runtime("cannot write the loss log");
    out << csv;
  }
  // clear any leftover snapshot
  for (Role r : plan.trainable) fs::remove(part_path(ckpt_dir, st, role_name(r)), ec);
  fs::remove(part_path(ckpt_dir, st, "state"), ec);
  fs::remove(ckpt_dir + "/" + std::string(stage_name(st)) + ".loss.partial.csv", ec);

  res.completed = true;
  res.loss_csv = csv;
  return res;
}

}  // namespace segsr
