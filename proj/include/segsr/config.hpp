#pragma once

#include <map>
#include <string>

#include "segsr/losses.hpp"
#include "segsr/models.hpp"

namespace segsr {

struct StageOverride {
  int iterations = -1;  // -1 keeps the plan default
  int batch = -1;
};

// Full run configuration (UTF-8 JSON on disk, unknown keys rejected).
struct RunConfig {
  int version = 1;
  std::string scale = "desk";  // paper | desk

  int hq = 64, lq = 16, mask = 16, K = 6;

  int g_T = 1000;
  double g_beta_start = 1e-4, g_beta_end = 0.02;
  std::string g_kind = "linear";

  int d_T = 1000;
  double d_beta_start = 0.02, d_beta_end = 0.5;

  int width = 32, temb = 64, tmlp = 128, gn_groups = 8;

  int steps = 50;
  double eta = 1.0;
  int trajectory_every = 5;

  double lambda = 1.0;

  uint64_t seed_init = 1234, seed_train = 5678;

  std::string data_path, ckpt_path;

  std::map<std::string, StageOverride> stages;

  NetConfig net() const;
  void validate() const;
};

RunConfig default_config();
RunConfig config_from_json_text(const std::string& text);
RunConfig load_config(const std::string& path);
std::string config_to_json_text(const RunConfig& c);  // normalized, sorted keys
void save_config(const std::string& path, const RunConfig& c);

Schedules build_schedules(const RunConfig& c);

}  // namespace segsr
