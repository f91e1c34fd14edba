#include "segsr/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "segsr/errors.hpp"
#include "segsr/image_io.hpp"
#include "segsr/rng.hpp"

namespace segsr {

namespace fs = std::filesystem;
using nlohmann::json;

SegClassSet SegClassSet::toy(int k) {
  require(k >= 2, "class set needs K >= 2");
  static const char* base[] = {"background", "sky", "ground", "rock", "sand", "foliage"};
  SegClassSet s;
  for (int i = 0; i < k; ++i)
    s.names.push_back(i < 6 ? base[i] : "class" + std::to_string(i));
  return s;
}

namespace {

struct StripeSpec {
  float base[3];
  float theta_deg;
  float cycles;  // periods across the scene side
  float amp;
};

// orientations are pairwise > 20 degrees apart (sky's gradient sits at 90)
StripeSpec stripe_spec(int cls) {
  switch (cls) {
    case 2: return {{0.34f, 0.52f, 0.29f}, 0.0f, 5.0f, 0.14f};
    case 3: return {{0.72f, 0.38f, 0.33f}, 35.0f, 7.0f, 0.13f};
    case 4: return {{0.80f, 0.73f, 0.38f}, 65.0f, 9.0f, 0.12f};
    case 5: return {{0.52f, 0.40f, 0.66f}, 145.0f, 6.0f, 0.15f};
    default: {
      const uint64_t h = mix64(uint64_t(cls));
      StripeSpec s;
      s.base[0] = 0.30f + 0.5f * float((h >> 0) & 0xff) / 255.0f;
      s.base[1] = 0.30f + 0.5f * float((h >> 8) & 0xff) / 255.0f;
      s.base[2] = 0.30f + 0.5f * float((h >> 16) & 0xff) / 255.0f;
      s.theta_deg = float((53 * cls) % 180);
      s.cycles = float(4 + cls % 6);
      s.amp = 0.13f;
      return s;
    }
  }
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

void class_color(int cls, int x, int y, int side, float rgb[3]) {
  if (cls == 0) {
    rgb[0] = 0.48f;
    rgb[1] = 0.47f;
    rgb[2] = 0.46f;
    return;
  }
  if (cls == 1) {
    const float t = side > 1 ? float(y) / float(side - 1) : 0.0f;
    rgb[0] = 0.42f + t * (0.74f - 0.42f);
    rgb[1] = 0.62f + t * (0.85f - 0.62f);
    rgb[2] = 0.88f + t * (0.96f - 0.88f);
    return;
  }
  const StripeSpec s = stripe_spec(cls);
  const double th = double(s.theta_deg) * kPi / 180.0;
  const double phase = 2.0 * kPi * double(s.cycles) *
                       (double(x) * std::cos(th) + double(y) * std::sin(th)) / double(side);
  const float v = s.amp * float(std::sin(phase));
  for (int c = 0; c < 3; ++c) rgb[c] = std::min(1.0f, std::max(0.0f, s.base[c] + v));
}

void gen_scene(uint64_t seed, int K, TensorF& hq, IntField& mask, int side) {
  require(K >= 2, "gen_scene: K >= 2");
  require(side >= 16, "gen_scene: side >= 16");
  Rng rng(mix64(seed, 0x5ce9eull));
  mask = IntField(side, side);

  // sky band (always) and ground band (usually): 2-5 regions total
  const int sky_end = side / 4 + int(rng.below(uint64_t(std::max(1, side / 5))));
  const bool has_ground = K >= 3 && rng.uniform() < 0.75;
  const int ground_start = (9 * side) / 16 + int(rng.below(uint64_t(std::max(1, side / 4))));
  for (int y = 0; y < sky_end; ++y)
    for (int x = 0; x < side; ++x) mask.at(y, x) = 1;
  if (has_ground)
    for (int y = ground_start; y < side; ++y)
      for (int x = 0; x < side; ++x) mask.at(y, x) = std::min(2, K - 1);

  std::vector<int> pool;
  for (int c = K > 3 ? 3 : 1; c < K; ++c) pool.push_back(c);
  for (size_t i = pool.size(); i > 1; --i)
    std::swap(pool[i - 1], pool[size_t(rng.below(uint64_t(i)))]);

  const int n_shapes = 1 + int(rng.below(3));
  for (int j = 0; j < n_shapes; ++j) {
    const int cls = pool[size_t(j) % pool.size()];
    const int kind = int(rng.below(3));
    const int margin = side / 8;
    const int cx = margin + int(rng.below(uint64_t(side - 2 * margin)));
    const int cy = margin + int(rng.below(uint64_t(side - 2 * margin)));
    const int r = side / 12 + int(rng.below(uint64_t(std::max(1, side / 8))));
    for (int y = std::max(0, cy - r); y < std::min(side, cy + r + 1); ++y)
      for (int x = std::max(0, cx - r); x < std::min(side, cx + r + 1); ++x) {
        bool in = false;
        const int dx = x - cx, dy = y - cy;
        if (kind == 0) in = dx * dx + dy * dy <= r * r;                       // circle
        else if (kind == 1) in = std::abs(dx) <= r && std::abs(dy) <= (2 * r) / 3;  // rect
        else in = dy >= -r / 2 && std::abs(dx) <= (r - (dy + r / 2)) * 2 / 3;       // triangle
        if (in) mask.at(y, x) = cls;
      }
  }

  // drop classes that ended up with fewer than 16 pixels
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<int64_t> count(size_t(K), 0);
    for (int32_t c : mask.v) count[size_t(c)]++;
    for (auto& c : mask.v)
      if (c != 0 && count[size_t(c)] > 0 && count[size_t(c)] < 16) c = 0;
    std::vector<int64_t> recount(size_t(K), 0);
    for (int32_t c : mask.v) recount[size_t(c)]++;
    if (recount[0] > 0 && recount[0] < 16) {
      const int y0 = side / 2 - 3, x0 = side / 2 - 4;
      for (int y = y0; y < y0 + 6; ++y)
        for (int x = x0; x < x0 + 8; ++x) mask.at(y, x) = 0;
      continue;
    }
    break;
  }

  hq = TensorF({3, side, side});
  const int64_t hw = int64_t(side) * side;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      float rgb[3];
      class_color(int(mask.at(y, x)), x, y, side, rgb);
      for (int c = 0; c < 3; ++c) hq.v[size_t(c) * hw + int64_t(y) * side + x] = rgb[c];
    }
}

namespace {

void gaussian_blur_inplace(TensorF& img, double sigma) {
  if (sigma <= 0.0) return;
  const int C = img.shape[0], H = img.shape[1], W = img.shape[2];
  const int r = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<float> k(size_t(r) + 1);
  double norm = 1.0;
  k[0] = 1.0f;
  for (int i = 1; i <= r; ++i) {
    k[size_t(i)] = float(std::exp(-0.5 * double(i) * double(i) / (sigma * sigma)));
    norm += 2.0 * double(k[size_t(i)]);
  }
  for (int i = 0; i <= r; ++i) k[size_t(i)] = float(double(k[size_t(i)]) / norm);
  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  std::vector<float> tmp(size_t(H) * W);
  for (int c = 0; c < C; ++c) {
    float* plane = img.data() + int64_t(c) * H * W;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        float acc = k[0] * plane[int64_t(y) * W + x];
        for (int i = 1; i <= r; ++i)
          acc += k[size_t(i)] * (plane[int64_t(y) * W + reflect(x - i, W)] +
                                 plane[int64_t(y) * W + reflect(x + i, W)]);
        tmp[size_t(y) * W + x] = acc;
      }
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        float acc = k[0] * tmp[size_t(y) * W + x];
        for (int i = 1; i <= r; ++i)
          acc += k[size_t(i)] * (tmp[size_t(reflect(y - i, H)) * W + x] +
                                 tmp[size_t(reflect(y + i, H)) * W + x]);
        plane[int64_t(y) * W + x] = acc;
      }
  }
}

}  // namespace

TensorF degrade_with_params(const TensorF& hq01, const DegradationParams& p, uint64_t noise_seed) {
  require(hq01.shape.size() == 3 && hq01.shape[1] % 4 == 0 && hq01.shape[2] % 4 == 0,
          "degrade: geometry must be divisible by 4");
  const int C = hq01.shape[0], H = hq01.shape[1], W = hq01.shape[2];
  TensorF work = hq01;
  gaussian_blur_inplace(work, p.blur_sigma);

  const int h = H / 4, w = W / 4;
  TensorF lq({C, h, w});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float acc = 0.0f;
        for (int dy = 0; dy < 4; ++dy)
          for (int dx = 0; dx < 4; ++dx)
            acc += work.v[size_t((int64_t(c) * H + 4 * y + dy) * W + 4 * x + dx)];
        lq.v[size_t((int64_t(c) * h + y) * w + x)] = acc / 16.0f;
      }

  Rng rng(noise_seed);
  if (p.noise_sigma > 0.0)
    for (auto& v : lq.v) v += float(rng.normal() * p.noise_sigma);

  const float L = float(p.quant_levels - 1);
  for (auto& v : lq.v) {
    v = std::floor(v * L + 0.5f) / L;           // round-half-up quantization
    v = std::min(1.0f, std::max(0.0f, v));
  }
  return lq;
}

std::pair<TensorF, DegradationParams> degrade(const TensorF& hq01, uint64_t seed) {
  Rng rng(mix64(seed, 0xde97adeull));
  DegradationParams p;
  p.blur_sigma = 0.2 + rng.uniform() * 2.8;
  p.noise_sigma = rng.uniform() * 0.1;
  static const int levels[4] = {32, 64, 128, 256};
  p.quant_levels = levels[rng.below(4)];
  return {degrade_with_params(hq01, p, mix64(seed, 0x401e5ull)), p};
}

namespace {

std::string scene_name(int id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", id);
  return buf;
}

}  // namespace

DatasetManifest build_dataset(int n_scenes, uint64_t seed, int K, const std::string& out_dir,
                              int side) {
  require(n_scenes >= 1, "build_dataset: need at least one scene");
  std::error_code ec;
  for (const char* sub : {"", "/hq", "/lq", "/mask"}) {
    fs::create_directories(out_dir + sub, ec);
    if (ec) fail_runtime("cannot create dataset directory " + out_dir + sub + ": " + ec.message());
  }

  DatasetManifest man;
  man.K = K;
  man.seed = seed;
  for (int i = 0; i < n_scenes; ++i) {
    SceneRecord rec;
    rec.id = i;
    rec.seed = mix64(seed, uint64_t(i));
    rec.val = mix64(rec.seed, 0x59117ull) % 10 == 0;

    TensorF hq;
    IntField mask;
    gen_scene(rec.seed, K, hq, mask, side);
    auto [lq, params] = degrade(hq, rec.seed);
    rec.deg = params;

    const std::string name = scene_name(i);
    write_png_rgb8(out_dir + "/hq/" + name + ".png", hq);
    write_png_rgb8(out_dir + "/lq/" + name + ".png", lq);
    write_png_gray8(out_dir + "/mask/" + name + ".png", mask);
    man.scenes.push_back(rec);
  }

  json j;
  j["version"] = man.version;
  j["K"] = man.K;
  j["seed"] = man.seed;
  j["side"] = side;
  json scenes = json::array();
  for (const auto& r : man.scenes) {
    json s;
    s["id"] = r.id;
    s["seed"] = r.seed;
    s["split"] = r.val ? "val" : "train";
    s["degradation"] = {{"blur_sigma", r.deg.blur_sigma},
                        {"noise_sigma", r.deg.noise_sigma},
                        {"quant_levels", r.deg.quant_levels}};
    scenes.push_back(s);
  }
  j["scenes"] = scenes;
  std::ofstream out(out_dir + "/manifest.json", std::ios::binary);
  if (!out) fail_runtime("cannot write " + out_dir + "/manifest.json");
  out << j.dump(2) << "\n";
  return man;
}

DatasetManifest load_manifest(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json", std::ios::binary);
  if (!in) fail_validation("missing dataset manifest: " + dir + "/manifest.json");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail_validation("invalid manifest JSON: " + std::string(e.what()));
  }
  DatasetManifest man;
  man.version = j.at("version").get<int>();
  require(man.version == 1, "unsupported manifest version");
  man.K = j.at("K").get<int>();
  man.seed = j.at("seed").get<uint64_t>();
  for (const auto& s : j.at("scenes")) {
    SceneRecord r;
    r.id = s.at("id").get<int>();
    r.seed = s.at("seed").get<uint64_t>();
    r.val = s.at("split").get<std::string>() == "val";
    r.deg.blur_sigma = s.at("degradation").at("blur_sigma").get<double>();
    r.deg.noise_sigma = s.at("degradation").at("noise_sigma").get<double>();
    r.deg.quant_levels = s.at("degradation").at("quant_levels").get<int>();
    man.scenes.push_back(r);
  }
  return man;
}

}  // namespace segsr
