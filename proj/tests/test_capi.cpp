// Exercises the shared-library surface the CLI sits on.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "segsr/segsr.h"

namespace fs = std::filesystem;

namespace {

struct Workdir {
  std::string dir;
  explicit Workdir(const std::string& name) {
    dir = (fs::temp_directory_path() / name).string();
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
};

const char* kTinyConfig = R"({
  "geometry": {"hq": 16, "lq": 4, "mask": 4, "classes": 6},
  "gaussian": {"T": 40, "beta_start": 0.001, "beta_end": 0.05},
  "discrete": {"T": 40, "beta_start": 0.02, "beta_end": 0.5},
  "network": {"width": 8, "temb": 8, "tmlp": 16, "gn_groups": 4},
  "sampler": {"steps": 5, "eta": 1.0},
  "stages": {
    "seg2img_pretrain": {"iterations": 3, "batch": 2},
    "srdm_joint": {"iterations": 3, "batch": 2},
    "backbone_pretrain": {"iterations": 3, "batch": 2},
    "segdm_train": {"iterations": 3, "batch": 2},
    "imgaided_train": {"iterations": 3, "batch": 2},
    "final_joint": {"iterations": 3, "batch": 2}
  }
})";

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("version and error strings") {
  CHECK(std::string(segsr_version()) == "1.0.0");
  segsr_session* s = nullptr;
  CHECK(segsr_session_open("/nonexistent/config.json", &s) == SEGSR_ERR_VALIDATION);
  CHECK(std::string(segsr_last_error()).find("config") != std::string::npos);
  CHECK(s == nullptr);
}

TEST_CASE("session defaults and config normalization") {
  Workdir wd("segsr_capi_cfg");
  segsr_session* s = nullptr;
  REQUIRE(segsr_session_open(nullptr, &s) == SEGSR_OK);
  const std::string out = wd.dir + "/normalized.json";
  CHECK(segsr_session_save_config(s, out.c_str()) == SEGSR_OK);
  CHECK(read_file(out).find("\"steps\": 50") != std::string::npos);
  segsr_session_close(s);
}

TEST_CASE("full tiny workflow through the C API") {
  Workdir wd("segsr_capi_flow");
  const std::string cfg_path = wd.dir + "/config.json";
  std::ofstream(cfg_path) << kTinyConfig;

  segsr_session* s = nullptr;
  REQUIRE(segsr_session_open(cfg_path.c_str(), &s) == SEGSR_OK);

  const std::string data = wd.dir + "/data";
  const std::string ckpt = wd.dir + "/ckpt";
  // the C API builds 64x64 scenes; the tiny config needs 16x16 so go through
  // a dataset built at the config geometry via gen-data at default side, then
  // regenerate: gen_data always emits the spec's 64x64 scenes, so this tiny
  // config instead exercises validation
  CHECK(segsr_gen_data(data.c_str(), 8, 7, 6) == SEGSR_OK);
  CHECK(fs::exists(data + "/manifest.json"));
  CHECK(fs::exists(data + "/hq/000007.png"));

  // geometry mismatch is reported as a validation error
  CHECK(segsr_train(s, "seg2img_pretrain", data.c_str(), ckpt.c_str(), 0) == SEGSR_ERR_VALIDATION);
  CHECK(std::string(segsr_last_error()).find("geometry") != std::string::npos);

  // unknown stage
  CHECK(segsr_train(s, "warmup", data.c_str(), ckpt.c_str(), 0) == SEGSR_ERR_VALIDATION);

  segsr_session_close(s);
}

TEST_CASE("default-geometry workflow: train one stage, sample, eval") {
  Workdir wd("segsr_capi_full");
  // default geometry (64x64) with a small width and short chains to stay fast
  const std::string cfg_path = wd.dir + "/config.json";
  std::ofstream(cfg_path) << R"({
    "gaussian": {"T": 40, "beta_start": 0.001, "beta_end": 0.05},
    "discrete": {"T": 40, "beta_start": 0.02, "beta_end": 0.5},
    "network": {"width": 8, "temb": 8, "tmlp": 16, "gn_groups": 4},
    "sampler": {"steps": 4, "eta": 1.0},
    "stages": {
      "seg2img_pretrain": {"iterations": 2, "batch": 1},
      "srdm_joint": {"iterations": 2, "batch": 1},
      "backbone_pretrain": {"iterations": 2, "batch": 1}
    }
  })";

  segsr_session* s = nullptr;
  REQUIRE(segsr_session_open(cfg_path.c_str(), &s) == SEGSR_OK);

  const std::string data = wd.dir + "/data";
  const std::string ckpt = wd.dir + "/ckpt";
  REQUIRE(segsr_gen_data(data.c_str(), 12, 3, 6) == SEGSR_OK);

  REQUIRE(segsr_train(s, "seg2img_pretrain", data.c_str(), ckpt.c_str(), 0) == SEGSR_OK);
  REQUIRE(segsr_train(s, "srdm_joint", data.c_str(), ckpt.c_str(), 0) == SEGSR_OK);
  REQUIRE(segsr_train(s, "backbone_pretrain", data.c_str(), ckpt.c_str(), 0) == SEGSR_OK);
  CHECK(fs::exists(ckpt + "/srdm_joint.img_denoiser.sgsr"));

  // sample mode 1 from a dataset index
  const std::string out_prefix = wd.dir + "/restored";
  REQUIRE(segsr_sample(s, ckpt.c_str(), data.c_str(), "0", "1", 5, out_prefix.c_str(), 1) ==
          SEGSR_OK);
  CHECK(fs::exists(out_prefix + ".png"));
  CHECK(fs::exists(out_prefix + ".mask.png"));
  CHECK(fs::exists(out_prefix + ".traj.png"));

  // sampling from a bare LQ png works for mode 1 but refuses mode 5
  const std::string lq_path = data + "/lq/000000.png";
  REQUIRE(segsr_sample(s, ckpt.c_str(), nullptr, lq_path.c_str(), "1", 5,
                       (wd.dir + "/r2").c_str(), 0) == SEGSR_OK);
  CHECK(segsr_sample(s, ckpt.c_str(), nullptr, lq_path.c_str(), "5", 5,
                     (wd.dir + "/r3").c_str(), 0) == SEGSR_ERR_VALIDATION);
  CHECK(std::string(segsr_last_error()).find("ground-truth") != std::string::npos);

  // modes that need missing stages name the stage to run
  CHECK(segsr_sample(s, ckpt.c_str(), data.c_str(), "0", "4", 5, (wd.dir + "/r4").c_str(), 0) ==
        SEGSR_ERR_VALIDATION);
  CHECK(std::string(segsr_last_error()).find("segdm_train") != std::string::npos);

  // eval over available modes; identical invocations give identical bytes
  const std::string tsv1 = wd.dir + "/t1.tsv";
  const std::string tsv2 = wd.dir + "/t2.tsv";
  char* table = nullptr;
  REQUIRE(segsr_eval(s, ckpt.c_str(), data.c_str(), "1,2", "0,1", tsv1.c_str(), &table) ==
          SEGSR_OK);
  REQUIRE(table != nullptr);
  CHECK(std::string(table).find("mode") != std::string::npos);
  segsr_free(table);
  REQUIRE(segsr_eval(s, ckpt.c_str(), data.c_str(), "1,2", "0,1", tsv2.c_str(), nullptr) ==
          SEGSR_OK);
  CHECK(read_file(tsv1) == read_file(tsv2));
  CHECK(read_file(tsv1).rfind("mode\tpsnr\tssim\tacc\tmiou\tn\n", 0) == 0);

  segsr_session_close(s);
}

TEST_CASE("selftest runs clean") {
  char* report = nullptr;
  CHECK(segsr_selftest(&report) == SEGSR_OK);
  REQUIRE(report != nullptr);
  CHECK(std::string(report).find("all checks passed") != std::string::npos);
  segsr_free(report);
}
