#pragma once

#include "segsr/config.hpp"
#include "segsr/dataset.hpp"
#include "segsr/losses.hpp"

namespace segsr {

enum class Stage {
  seg2img_pretrain = 0,
  srdm_joint,
  backbone_pretrain,
  segdm_train,
  imgaided_train,
  final_joint
};
constexpr int kNumStages = 6;

const char* stage_name(Stage s);
Stage stage_from_name(const std::string& s);

struct LrSchedule {
  enum class Kind { fixed, poly, halving };
  Kind kind = Kind::fixed;
  double lr0 = 1e-4;
  double power = 1.0;   // poly
  int every = 0;        // halving interval (iterations)
  double floor = 0.0;   // halving floor
};

double lr_at(const LrSchedule& s, int step, int total);

struct StagePlan {
  Stage stage = Stage::seg2img_pretrain;
  int iterations = 0;
  int batch = 0;
  LrSchedule lr;
  std::vector<Role> trainable;
  std::vector<Role> frozen;
};

// paper = the supplementary numbers; desk = iterations/100, batch/4, halving
// interval /100, same lr values and shapes.
std::vector<StagePlan> make_default_plan(const std::string& scale);

// default plan for `cfg.scale` with the config's per-stage overrides applied
std::vector<StagePlan> plan_from_config(const RunConfig& cfg);
StagePlan stage_plan(const RunConfig& cfg, Stage st);

std::string ckpt_file(const std::string& ckpt_dir, Stage st, Role r);
// roles written by a stage (trainable + frozen re-serialized)
std::vector<Role> stage_outputs(Stage st);

// Loads every role a stage consumes, taking each from the most recent earlier
// stage that wrote it; roles born in `st` are freshly initialized from
// cfg.seed_init. Also enforces the predecessor-checkpoint dependency rule.
ModelSet load_models_for_stage(const RunConfig& cfg, Stage st, const std::string& ckpt_dir);

// Latest state of the roles needed by the given sampling modes; errors name
// the stage that must be run first.
ModelSet load_models_for_modes(const RunConfig& cfg, const std::vector<std::string>& modes,
                               const std::string& ckpt_dir);

struct RunStageOptions {
  bool resume = false;
  int halt_after = -1;     // stop (with a snapshot) after this many steps
  int snapshot_every = 0;  // 0 = only on halt
  int log_every = 10;
  bool quiet = true;
};

struct StageResult {
  std::vector<double> losses;                     // per executed step
  std::vector<std::pair<double, double>> parts;   // (sr, iac) for joint stages
  int start_step = 0;                             // > 0 when resumed
  bool completed = false;
  std::vector<std::string> written;
  std::string loss_csv;
};

// Adam (beta1 .9, beta2 .999, eps 1e-8, decoupled wd 0.01) over the trainable
// set, gradient clipping at global norm 1, per-step derived RNG streams.
StageResult run_stage(const StagePlan& plan, const RunConfig& cfg, const DatasetCache& ds,
                      const std::string& ckpt_dir, uint64_t seed,
                      const RunStageOptions& opt = {});

}  // namespace segsr
