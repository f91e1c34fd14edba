#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "segsr/checkpoint.hpp"
#include "segsr/config.hpp"
#include "segsr/image_io.hpp"
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
}  // namespace

TEST_CASE("checkpoint round trip is bitwise") {
  NetConfig net = tiny_net(3);
  ParamStore ps = init_img_denoiser(net, 5);
  const std::string path = (fs::temp_directory_path() / "segsr_ck.sgsr").string();
  save_params(path, ps);
  ParamStore back = load_params(path, Role::img_denoiser);
  REQUIRE(back.params.size() == ps.params.size());
  for (size_t i = 0; i < ps.params.size(); ++i) {
    CHECK(back.params[i].first == ps.params[i].first);
    CHECK(back.params[i].second.shape == ps.params[i].second.shape);
    CHECK(std::memcmp(back.params[i].second.data(), ps.params[i].second.data(),
                      ps.params[i].second.v.size() * 4) == 0);
  }
  // save -> load -> save reproduces identical bytes
  const std::string path2 = (fs::temp_directory_path() / "segsr_ck2.sgsr").string();
  save_params(path2, back);
  CHECK(read_file(path) == read_file(path2));
  fs::remove(path2);

  SUBCASE("corrupted payload is rejected with a CRC error") {
    std::string bytes = read_file(path);
    bytes[bytes.size() / 2] ^= 0x40;
    const std::string bad = (fs::temp_directory_path() / "segsr_bad.sgsr").string();
    std::ofstream(bad, std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
    CHECK_THROWS_WITH_AS(load_checkpoint(bad), doctest::Contains("CRC"), error);
    fs::remove(bad);
  }
  SUBCASE("role tag mismatch is rejected") {
    CHECK_THROWS_AS(load_params(path, Role::seg_backbone), error);
  }
  SUBCASE("missing file names the path") {
    CHECK_THROWS_WITH_AS(load_checkpoint("/nonexistent/x.sgsr"),
                         doctest::Contains("/nonexistent/x.sgsr"), error);
  }
  fs::remove(path);
}

TEST_CASE("checkpoint magic and version checks") {
  const std::string path = (fs::temp_directory_path() / "segsr_magic.sgsr").string();
  {
    NamedTensors nt;
    nt.tag = "optimizer_state";
    nt.tensors.emplace_back("step", TensorF({1}, {42.0f}));
    save_checkpoint(path, nt);
  }
  NamedTensors back = load_checkpoint(path);
  CHECK(back.tag == "optimizer_state");
  REQUIRE(back.tensors.size() == 1);
  CHECK(back.tensors[0].second.v[0] == 42.0f);

  std::string bytes = read_file(path);
  bytes[0] = 'X';
  std::ofstream(path, std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
  CHECK_THROWS_AS(load_checkpoint(path), error);  // CRC catches the magic flip too
  fs::remove(path);
}

TEST_CASE("config defaults, round trip and validation") {
  RunConfig def = default_config();
  def.validate();
  CHECK(def.g_T == 1000);
  CHECK(def.steps == 50);
  CHECK(def.eta == 1.0);
  CHECK(def.lambda == 1.0);

  // normalize -> save -> load -> save is a fixed point
  const std::string text = config_to_json_text(def);
  RunConfig re = config_from_json_text(text);
  CHECK(config_to_json_text(re) == text);

  // partial configs inherit defaults
  RunConfig partial = config_from_json_text(R"({"sampler": {"steps": 10}})");
  CHECK(partial.steps == 10);
  CHECK(partial.g_T == 1000);
  const std::string t2 = config_to_json_text(partial);
  CHECK(config_to_json_text(config_from_json_text(t2)) == t2);

  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_WITH_AS(config_from_json_text(R"({"bogus": 1})"), doctest::Contains("bogus"),
                         error);
    CHECK_THROWS_AS(config_from_json_text(R"({"sampler": {"step": 10}})"), error);
    CHECK_THROWS_AS(config_from_json_text(R"({"stages": {"warmup": {"iterations": 5}}})"), error);
  }
  SUBCASE("invalid values are rejected") {
    CHECK_THROWS_AS(config_from_json_text(R"({"sampler": {"steps": 0}})"), error);
    CHECK_THROWS_AS(config_from_json_text(R"({"sampler": {"eta": 1.5}})"), error);
    CHECK_THROWS_AS(config_from_json_text(R"({"geometry": {"classes": 1}})"), error);
    CHECK_THROWS_AS(config_from_json_text(R"({"gaussian": {"beta_end": 1.0}})"), error);
    CHECK_THROWS_AS(config_from_json_text("not json"), error);
  }
  SUBCASE("stage overrides") {
    RunConfig c = config_from_json_text(
        R"({"stages": {"seg2img_pretrain": {"iterations": 12, "batch": 2}}})");
    CHECK(c.stages.at("seg2img_pretrain").iterations == 12);
    CHECK(c.stages.at("seg2img_pretrain").batch == 2);
  }
}

TEST_CASE("png round trips") {
  const std::string dir = fs::temp_directory_path().string();
  SUBCASE("rgb8 values survive exactly") {
    TensorF img({3, 5, 7});
    Rng rng(9);
    for (auto& v : img.v) v = float(rng.below(256)) / 255.0f;  // representable values
    const std::string p = dir + "/segsr_t.png";
    write_png_rgb8(p, img);
    TensorF back = read_png_rgb(p);
    CHECK(back.shape == img.shape);
    for (int64_t i = 0; i < img.numel(); ++i)
      CHECK(back.v[size_t(i)] == doctest::Approx(img.v[size_t(i)]).epsilon(1e-6));
    fs::remove(p);
  }
  SUBCASE("gray8 mask round trip and range check") {
    Rng rng(10);
    IntField f = random_mask(6, 4, 6, rng);
    const std::string p = dir + "/segsr_m.png";
    write_png_gray8(p, f);
    CHECK(read_png_gray(p) == f);
    fs::remove(p);
    IntField bad(1, 1);
    bad.v[0] = 300;
    CHECK_THROWS_AS(write_png_gray8(p, bad), error);
  }
  SUBCASE("round-half-up scaling") {
    CHECK(to_u8(0.0f) == 0);
    CHECK(to_u8(1.0f) == 255);
    CHECK(to_u8(0.5f) == 128);              // 127.5 + 0.5 -> 128
    CHECK(to_u8(126.49f / 255.0f) == 126);
    CHECK(to_u8(126.51f / 255.0f) == 127);
  }
  SUBCASE("missing file raises a validation error") {
    CHECK_THROWS_AS(read_png_rgb("/nonexistent/zz.png"), error);
  }
}
