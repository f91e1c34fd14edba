#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "segsr/checkpoint.hpp"
#include "segsr/trainer.hpp"
#include "test_util.hpp"

using namespace segsr;
using namespace segsr::testutil;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// tiny end-to-end training environment: 16x16 scenes, short chains
struct Env {
  std::string dir;
  RunConfig cfg;
  DatasetCache ds;

  explicit Env(const std::string& name, int K = 6) {
    dir = (fs::temp_directory_path() / name).string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    cfg = default_config();
    cfg.hq = 16;
    cfg.lq = 4;
    cfg.mask = 4;
    cfg.K = K;
    cfg.width = 8;
    cfg.temb = 8;
    cfg.tmlp = 16;
    cfg.gn_groups = 4;
    cfg.g_T = 40;
    cfg.d_T = 40;
    cfg.steps = 5;
    for (const char* st : {"seg2img_pretrain", "srdm_joint", "backbone_pretrain", "segdm_train",
                           "imgaided_train", "final_joint"})
      cfg.stages[st] = StageOverride{4, 2};
    cfg.validate();
    build_dataset(24, 99, K, dir + "/data", cfg.hq);
    ds = load_dataset(dir + "/data", cfg.net());
  }
  ~Env() { fs::remove_all(dir); }
  std::string ckpt() const { return dir + "/ckpt"; }
};

bool same_params(const ParamStore& a, const ParamStore& b) {
  if (a.params.size() != b.params.size()) return false;
  for (size_t i = 0; i < a.params.size(); ++i) {
    if (a.params[i].first != b.params[i].first) return false;
    if (a.params[i].second.shape != b.params[i].second.shape) return false;
    if (std::memcmp(a.params[i].second.data(), b.params[i].second.data(),
                    a.params[i].second.v.size() * 4) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("lr_at closed forms") {
  LrSchedule fixed{LrSchedule::Kind::fixed, 3e-4, 1.0, 0, 0.0};
  CHECK(lr_at(fixed, 0, 100) == 3e-4);
  CHECK(lr_at(fixed, 99, 100) == 3e-4);

  LrSchedule poly{LrSchedule::Kind::poly, 6e-5, 1.0, 0, 0.0};
  CHECK(lr_at(poly, 0, 1000) == doctest::Approx(6e-5));
  CHECK(lr_at(poly, 500, 1000) == doctest::Approx(3e-5));

  LrSchedule halv{LrSchedule::Kind::halving, 1.5e-4, 1.0, 20000, 1e-6};
  CHECK(lr_at(halv, 40000, 320000) == doctest::Approx(3.75e-5));
  CHECK(lr_at(halv, 0, 320000) == doctest::Approx(1.5e-4));
  CHECK(lr_at(halv, 319999, 320000) == doctest::Approx(1e-6));  // floor

  CHECK_THROWS_AS(lr_at(fixed, -1, 10), error);
  CHECK_THROWS_AS(lr_at(fixed, 10, 10), error);

  // random probes against the closed forms
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const int total = 1000 + int(rng.below(100000));
    const int step = int(rng.below(uint64_t(total)));
    const double lr0 = 1e-5 * (1.0 + rng.uniform() * 20.0);
    LrSchedule p{LrSchedule::Kind::poly, lr0, 1.0 + rng.uniform(), 0, 0.0};
    CHECK(std::abs(lr_at(p, step, total) -
                   lr0 * std::pow(1.0 - double(step) / total, p.power)) <= 1e-12 * lr0);
    const int every = 100 + int(rng.below(5000));
    LrSchedule h{LrSchedule::Kind::halving, lr0, 1.0, every, 1e-7};
    CHECK(std::abs(lr_at(h, step, total) -
                   std::max(1e-7, lr0 * std::pow(2.0, -double(step / every)))) <= 1e-12 * lr0);
  }
}

TEST_CASE("make_default_plan reproduces the published numbers") {
  auto paper = make_default_plan("paper");
  REQUIRE(paper.size() == 6);

  CHECK(paper[0].stage == Stage::seg2img_pretrain);
  CHECK(paper[0].iterations == 160000);
  CHECK(paper[0].batch == 32);
  CHECK(paper[0].lr.kind == LrSchedule::Kind::fixed);
  CHECK(paper[0].lr.lr0 == 1e-5);
  CHECK(paper[0].trainable == std::vector<Role>{Role::seg_controller});
  CHECK(paper[0].frozen == std::vector<Role>{Role::img_denoiser});

  CHECK(paper[1].lr.lr0 == 5e-5);
  CHECK(paper[1].iterations == 160000);

  CHECK(paper[2].stage == Stage::backbone_pretrain);
  CHECK(paper[2].batch == 16);
  CHECK(paper[2].lr.kind == LrSchedule::Kind::poly);
  CHECK(paper[2].lr.lr0 == 6e-5);
  CHECK(paper[2].lr.power == 1.0);

  CHECK(paper[3].stage == Stage::segdm_train);
  CHECK(paper[3].iterations == 320000);
  CHECK(paper[3].batch == 32);
  CHECK(paper[3].lr.kind == LrSchedule::Kind::halving);
  CHECK(paper[3].lr.lr0 == 1.5e-4);
  CHECK(paper[3].lr.every == 20000);
  CHECK(paper[3].lr.floor == 1e-6);

  CHECK(paper[4].lr.lr0 == 1e-5);
  CHECK(paper[5].iterations == 320000);
  CHECK(paper[5].lr.lr0 == 5e-5);
  CHECK(paper[5].frozen ==
        std::vector<Role>{Role::img_denoiser, Role::seg_backbone, Role::seg_denoiser});

  auto desk = make_default_plan("desk");
  for (size_t i = 0; i < 6; ++i) {
    CHECK(desk[i].iterations * 100 == paper[i].iterations);
    CHECK(desk[i].batch * 4 == paper[i].batch);
    CHECK(desk[i].lr.lr0 == paper[i].lr.lr0);
    CHECK(desk[i].lr.kind == paper[i].lr.kind);
    // trainable and frozen are disjoint
    for (Role r : desk[i].trainable)
      CHECK(std::find(desk[i].frozen.begin(), desk[i].frozen.end(), r) == desk[i].frozen.end());
  }
  CHECK(desk[3].lr.every == 200);
  CHECK_THROWS_AS(make_default_plan("huge"), error);
}

TEST_CASE("stage dependencies and freezing") {
  Env env("segsr_trainer_a");

  SUBCASE("later stages refuse to run without predecessors") {
    CHECK_THROWS_WITH_AS(
        run_stage(stage_plan(env.cfg, Stage::srdm_joint), env.cfg, env.ds, env.ckpt(), 1),
        doctest::Contains("seg2img_pretrain"), error);
    CHECK_THROWS_AS(load_models_for_modes(env.cfg, {"1"}, env.ckpt()), error);
  }

  SUBCASE("seg2img freezes the denoiser bitwise; files round-trip") {
    StageResult r =
        run_stage(stage_plan(env.cfg, Stage::seg2img_pretrain), env.cfg, env.ds, env.ckpt(), 1);
    CHECK(r.completed);
    CHECK(int(r.losses.size()) == 4);
    for (double l : r.losses) CHECK(std::isfinite(l));

    // the frozen denoiser equals a fresh seed-derived init, bit for bit
    ParamStore fresh = init_img_denoiser(env.cfg.net(), env.cfg.seed_init);
    ParamStore trained =
        load_params(ckpt_file(env.ckpt(), Stage::seg2img_pretrain, Role::img_denoiser),
                    Role::img_denoiser);
    CHECK(same_params(fresh, trained));

    // the controller moved away from its init
    ParamStore ctrl_fresh = init_seg_controller(env.cfg.net(), fresh, env.cfg.seed_init);
    ParamStore ctrl_trained =
        load_params(ckpt_file(env.ckpt(), Stage::seg2img_pretrain, Role::seg_controller),
                    Role::seg_controller);
    CHECK_FALSE(same_params(ctrl_fresh, ctrl_trained));

    // loss log exists with the documented header
    const std::string csv = read_file(env.ckpt() + "/seg2img_pretrain.loss.csv");
    CHECK(csv.rfind("step,loss,lr\n", 0) == 0);
  }
}

TEST_CASE("full tiny pipeline: freezing, joint log and determinism") {
  Env env("segsr_trainer_b");
  const std::array<Stage, 6> order = {Stage::seg2img_pretrain, Stage::srdm_joint,
                                      Stage::backbone_pretrain, Stage::segdm_train,
                                      Stage::imgaided_train, Stage::final_joint};
  for (Stage st : order) {
    StageResult r = run_stage(stage_plan(env.cfg, st), env.cfg, env.ds, env.ckpt(), 1);
    CHECK(r.completed);
  }

  // final_joint leaves every frozen role bitwise unchanged vs. its provider
  for (auto [role, provider] :
       std::vector<std::pair<Role, Stage>>{{Role::img_denoiser, Stage::srdm_joint},
                                           {Role::seg_backbone, Stage::imgaided_train},
                                           {Role::seg_denoiser, Stage::imgaided_train}}) {
    CHECK(read_file(ckpt_file(env.ckpt(), Stage::final_joint, role)) ==
          read_file(ckpt_file(env.ckpt(), provider, role)));
  }

  // joint loss log carries the part columns
  const std::string csv = read_file(env.ckpt() + "/final_joint.loss.csv");
  CHECK(csv.rfind("step,loss,lr,part_sr,part_iac\n", 0) == 0);

  // the model loader resolves the latest providers for every mode
  ModelSet m = load_models_for_modes(env.cfg, {"1", "2", "3", "4", "5", "zero"}, env.ckpt());
  CHECK(m.at(Role::img_aided).params.size() > 0);

  // identical reruns are byte-identical (logs and checkpoints)
  Env env2("segsr_trainer_c");
  for (Stage st : order)
    run_stage(stage_plan(env2.cfg, st), env2.cfg, env2.ds, env2.ckpt(), 1);
  for (Stage st : order) {
    for (Role r : stage_outputs(st))
      CHECK(read_file(ckpt_file(env.ckpt(), st, r)) == read_file(ckpt_file(env2.ckpt(), st, r)));
    CHECK(read_file(env.ckpt() + "/" + stage_name(st) + ".loss.csv") ==
          read_file(env2.ckpt() + "/" + stage_name(st) + ".loss.csv"));
  }
}

TEST_CASE("halt + resume reproduces the uninterrupted run exactly") {
  Env a("segsr_resume_a");
  a.cfg.stages["seg2img_pretrain"] = StageOverride{8, 2};
  StageResult full =
      run_stage(stage_plan(a.cfg, Stage::seg2img_pretrain), a.cfg, a.ds, a.ckpt(), 5);
  REQUIRE(full.completed);
  REQUIRE(int(full.losses.size()) == 8);

  Env b("segsr_resume_b");
  b.cfg.stages["seg2img_pretrain"] = StageOverride{8, 2};
  RunStageOptions halt;
  halt.halt_after = 3;
  StageResult first =
      run_stage(stage_plan(b.cfg, Stage::seg2img_pretrain), b.cfg, b.ds, b.ckpt(), 5, halt);
  CHECK_FALSE(first.completed);
  CHECK(int(first.losses.size()) == 3);

  RunStageOptions resume;
  resume.resume = true;
  StageResult rest =
      run_stage(stage_plan(b.cfg, Stage::seg2img_pretrain), b.cfg, b.ds, b.ckpt(), 5, resume);
  CHECK(rest.completed);
  CHECK(rest.start_step == 3);
  REQUIRE(int(rest.losses.size()) == 5);
  for (int i = 0; i < 5; ++i)
    CHECK(rest.losses[size_t(i)] == full.losses[size_t(3 + i)]);  // bit-identical

  // resumed checkpoint and loss log equal the uninterrupted ones, byte for byte
  CHECK(read_file(ckpt_file(a.ckpt(), Stage::seg2img_pretrain, Role::seg_controller)) ==
        read_file(ckpt_file(b.ckpt(), Stage::seg2img_pretrain, Role::seg_controller)));
  CHECK(read_file(a.ckpt() + "/seg2img_pretrain.loss.csv") ==
        read_file(b.ckpt() + "/seg2img_pretrain.loss.csv"));
}

TEST_CASE("non-finite losses abort with the step index") {
  Env env("segsr_nanabort");
  StagePlan plan = stage_plan(env.cfg, Stage::seg2img_pretrain);
  plan.lr.lr0 = 1e38;  // drives the parameters non-finite within a few steps
  CHECK_THROWS_WITH_AS(run_stage(plan, env.cfg, env.ds, env.ckpt(), 1),
                       doctest::Contains("non-finite"), error);
}
