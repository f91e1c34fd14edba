#include "segsr/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace segsr {

using nlohmann::json;

NetConfig RunConfig::net() const {
  NetConfig n;
  n.hq = hq;
  n.lq = lq;
  n.mask = mask;
  n.K = K;
  n.width = width;
  n.temb = temb;
  n.tmlp = tmlp;
  n.gn_groups = gn_groups;
  return n;
}

void RunConfig::validate() const {
  require(version == 1, "unsupported config version");
  require(scale == "desk" || scale == "paper", "scale must be 'desk' or 'paper'");
  net().validate();
  require(g_T >= 1 && d_T >= 1, "schedule lengths must be >= 1");
  require(g_T == d_T, "gaussian and discrete chain lengths must match");
  require(g_beta_start > 0 && g_beta_start <= g_beta_end && g_beta_end < 1,
          "gaussian betas out of range");
  require(d_beta_start > 0 && d_beta_start <= d_beta_end && d_beta_end < 1,
          "discrete betas out of range");
  require(g_kind == "linear", "unknown gaussian schedule kind: " + g_kind);
  require(steps >= 1 && steps <= g_T, "sampler steps must be in [1, T]");
  require(eta >= 0.0 && eta <= 1.0, "eta must be in [0, 1]");
  require(trajectory_every >= 1, "trajectory_every must be >= 1");
  require(lambda >= 0.0, "lambda must be >= 0");
  static const std::set<std::string> known_stages = {"seg2img_pretrain", "srdm_joint",
                                                     "backbone_pretrain", "segdm_train",
                                                     "imgaided_train", "final_joint"};
  for (const auto& [name, ov] : stages) {
    require(known_stages.count(name), "unknown stage in config: " + name);
    require(ov.iterations == -1 || ov.iterations >= 1, name + ": iterations must be >= 1");
    require(ov.batch == -1 || ov.batch >= 1, name + ": batch must be >= 1");
  }
}

RunConfig default_config() { return RunConfig{}; }

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  require(j.is_object(), where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    require(allowed.count(it.key()), "unknown config key: " + where + "." + it.key());
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    fail_validation("config is not valid JSON: " + std::string(e.what()));
  }
  RunConfig c;
  check_keys(j, {"version", "scale", "geometry", "gaussian", "discrete", "network", "sampler",
                 "lambda", "seeds", "paths", "stages"},
             "config");
  maybe(j, "version", c.version);
  maybe(j, "scale", c.scale);
  if (j.contains("geometry")) {
    const auto& g = j.at("geometry");
    check_keys(g, {"hq", "lq", "mask", "classes"}, "geometry");
    maybe(g, "hq", c.hq);
    maybe(g, "lq", c.lq);
    maybe(g, "mask", c.mask);
    maybe(g, "classes", c.K);
  }
  if (j.contains("gaussian")) {
    const auto& g = j.at("gaussian");
    check_keys(g, {"T", "beta_start", "beta_end", "kind"}, "gaussian");
    maybe(g, "T", c.g_T);
    maybe(g, "beta_start", c.g_beta_start);
    maybe(g, "beta_end", c.g_beta_end);
    maybe(g, "kind", c.g_kind);
  }
  if (j.contains("discrete")) {
    const auto& d = j.at("discrete");
    check_keys(d, {"T", "beta_start", "beta_end"}, "discrete");
    maybe(d, "T", c.d_T);
    maybe(d, "beta_start", c.d_beta_start);
    maybe(d, "beta_end", c.d_beta_end);
  }
  if (j.contains("network")) {
    const auto& n = j.at("network");
    check_keys(n, {"width", "temb", "tmlp", "gn_groups"}, "network");
    maybe(n, "width", c.width);
    maybe(n, "temb", c.temb);
    maybe(n, "tmlp", c.tmlp);
    maybe(n, "gn_groups", c.gn_groups);
  }
  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    check_keys(s, {"steps", "eta", "trajectory_every"}, "sampler");
    maybe(s, "steps", c.steps);
    maybe(s, "eta", c.eta);
    maybe(s, "trajectory_every", c.trajectory_every);
  }
  maybe(j, "lambda", c.lambda);
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    check_keys(s, {"init", "train"}, "seeds");
    maybe(s, "init", c.seed_init);
    maybe(s, "train", c.seed_train);
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    check_keys(p, {"data", "ckpt"}, "paths");
    maybe(p, "data", c.data_path);
    maybe(p, "ckpt", c.ckpt_path);
  }
  if (j.contains("stages")) {
    for (auto it = j.at("stages").begin(); it != j.at("stages").end(); ++it) {
      check_keys(it.value(), {"iterations", "batch"}, "stages." + it.key());
      StageOverride ov;
      maybe(it.value(), "iterations", ov.iterations);
      maybe(it.value(), "batch", ov.batch);
      c.stages[it.key()] = ov;
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_validation("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json_text(text);
}

std::string config_to_json_text(const RunConfig& c) {
  json j;
  j["version"] = c.version;
  j["scale"] = c.scale;
  j["geometry"] = {{"hq", c.hq}, {"lq", c.lq}, {"mask", c.mask}, {"classes", c.K}};
  j["gaussian"] = {{"T", c.g_T},
                   {"beta_start", c.g_beta_start},
                   {"beta_end", c.g_beta_end},
                   {"kind", c.g_kind}};
  j["discrete"] = {{"T", c.d_T}, {"beta_start", c.d_beta_start}, {"beta_end", c.d_beta_end}};
  j["network"] = {{"width", c.width}, {"temb", c.temb}, {"tmlp", c.tmlp},
                  {"gn_groups", c.gn_groups}};
  j["sampler"] = {{"steps", c.steps}, {"eta", c.eta}, {"trajectory_every", c.trajectory_every}};
  j["lambda"] = c.lambda;
  j["seeds"] = {{"init", c.seed_init}, {"train", c.seed_train}};
  j["paths"] = {{"data", c.data_path}, {"ckpt", c.ckpt_path}};
  json st = json::object();
  for (const auto& [name, ov] : c.stages) {
    json o = json::object();
    if (ov.iterations != -1) o["iterations"] = ov.iterations;
    if (ov.batch != -1) o["batch"] = ov.batch;
    st[name] = o;
  }
  j["stages"] = st;
  return j.dump(2) + "\n";
}

void save_config(const std::string& path, const RunConfig& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_runtime("cannot write config: " + path);
  out << config_to_json_text(c);
}

Schedules build_schedules(const RunConfig& c) {
  Schedules s;
  s.g = build_gaussian_schedule(c.g_T, c.g_beta_start, c.g_beta_end, c.g_kind);
  s.d = build_discrete_schedule(c.d_T, c.K, c.d_beta_start, c.d_beta_end);
  return s;
}

}  // namespace segsr
