// segsr command-line tool. Talks to the core exclusively through the C API.

#include <cinttypes>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "segsr/segsr.h"

namespace {

int finish(segsr_status rc, const char* what) {
  if (rc == SEGSR_OK) return 0;
  std::fprintf(stderr, "%s failed: %s\n", what, segsr_last_error());
  std::fprintf(stderr, "{\"error\":{\"code\":%d,\"command\":\"%s\",\"message\":\"%s\"}}\n", int(rc),
               what, segsr_last_error());
  return int(rc);
}

struct Session {
  segsr_session* s = nullptr;
  ~Session() {
    if (s) segsr_session_close(s);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SegSR: dual-diffusion super-resolution with a segmentation branch"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  int gen_n = 512, gen_k = 6;
  uint64_t gen_seed = 1;
  std::string gen_out;
  gen->add_option("--n", gen_n, "number of scenes")->default_val(512);
  gen->add_option("--seed", gen_seed, "dataset seed")->default_val(1);
  gen->add_option("--k", gen_k, "number of classes (background included)")->default_val(6);
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "run one training stage");
  std::string tr_stage, tr_config, tr_data, tr_ckpt;
  bool tr_resume = false;
  train->add_option("--stage", tr_stage, "stage name")->required();
  train->add_option("--config", tr_config, "config JSON");
  train->add_option("--data", tr_data, "dataset directory");
  train->add_option("--ckpt-dir", tr_ckpt, "checkpoint directory");
  train->add_flag("--resume", tr_resume, "resume from a stage snapshot");

  // sample
  auto* sample = app.add_subcommand("sample", "restore one image");
  std::string sm_config, sm_ckpt, sm_data, sm_input, sm_mode = "coupled", sm_out;
  uint64_t sm_seed = 0;
  bool sm_traj = false;
  sample->add_option("--config", sm_config, "config JSON");
  sample->add_option("--ckpt-dir", sm_ckpt, "checkpoint directory");
  sample->add_option("--data", sm_data, "dataset directory (for index inputs)");
  sample->add_option("--input", sm_input, "LQ png path or dataset index")->required();
  sample->add_option("--mode", sm_mode, "1..5, coupled or zero");
  sample->add_option("--seed", sm_seed, "sampling seed")->default_val(0);
  sample->add_option("--out", sm_out, "output prefix")->required();
  sample->add_flag("--trajectory", sm_traj, "also write the trajectory grid");

  // eval
  auto* eval = app.add_subcommand("eval", "ablation table over the validation split");
  std::string ev_config, ev_ckpt, ev_data, ev_modes = "1,2,3,4,5", ev_seeds = "0,1,2", ev_out;
  eval->add_option("--config", ev_config, "config JSON");
  eval->add_option("--ckpt-dir", ev_ckpt, "checkpoint directory");
  eval->add_option("--data", ev_data, "dataset directory");
  eval->add_option("--modes", ev_modes, "comma list of 1..5 / zero");
  eval->add_option("--seeds", ev_seeds, "comma list of sampling seeds");
  eval->add_option("--out", ev_out, "output TSV path")->required();

  // selftest
  app.add_subcommand("selftest", "run the built-in oracle/property checks");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed())
    return finish(segsr_gen_data(gen_out.c_str(), gen_n, gen_seed, gen_k), "gen-data");

  if (train->parsed()) {
    Session s;
    if (segsr_status rc = segsr_session_open(tr_config.empty() ? nullptr : tr_config.c_str(), &s.s))
      return finish(rc, "train");
    return finish(segsr_train(s.s, tr_stage.c_str(), tr_data.empty() ? nullptr : tr_data.c_str(),
                              tr_ckpt.empty() ? nullptr : tr_ckpt.c_str(), tr_resume ? 1 : 0),
                  "train");
  }

  if (sample->parsed()) {
    Session s;
    if (segsr_status rc = segsr_session_open(sm_config.empty() ? nullptr : sm_config.c_str(), &s.s))
      return finish(rc, "sample");
    return finish(segsr_sample(s.s, sm_ckpt.empty() ? nullptr : sm_ckpt.c_str(),
                               sm_data.empty() ? nullptr : sm_data.c_str(), sm_input.c_str(),
                               sm_mode.c_str(), sm_seed, sm_out.c_str(), sm_traj ? 1 : 0),
                  "sample");
  }

  if (eval->parsed()) {
    Session s;
    if (segsr_status rc = segsr_session_open(ev_config.empty() ? nullptr : ev_config.c_str(), &s.s))
      return finish(rc, "eval");
    char* table = nullptr;
    const segsr_status rc =
        segsr_eval(s.s, ev_ckpt.empty() ? nullptr : ev_ckpt.c_str(),
                   ev_data.empty() ? nullptr : ev_data.c_str(), ev_modes.c_str(), ev_seeds.c_str(),
                   ev_out.c_str(), &table);
    if (table) {
      std::fputs(table, stdout);
      segsr_free(table);
    }
    return finish(rc, "eval");
  }

  // selftest
  char* report = nullptr;
  const segsr_status rc = segsr_selftest(&report);
  if (report) {
    std::fputs(report, stdout);
    segsr_free(report);
  }
  return finish(rc, "selftest");
}
