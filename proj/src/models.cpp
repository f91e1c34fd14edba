#include "segsr/models.hpp"

namespace segsr {

void NetConfig::validate() const {
  require(hq >= 8 && hq % 4 == 0, "hq must be >= 8 and divisible by 4");
  require(lq * 4 == hq, "lq must be hq/4");
  require(mask == lq, "mask resolution must equal the LQ size");
  require(K >= 2, "K must be >= 2");
  require(width >= gn_groups && width % gn_groups == 0, "width must be a multiple of gn_groups");
  require(aided_stem_width() % gn_groups == 0, "aided stem width must be a multiple of gn_groups");
  require(temb >= 2 && temb % 2 == 0, "time embedding dim must be even");
  require(tmlp >= 1, "time mlp width must be positive");
  require(img_ch >= 1, "image channels must be positive");
}

static Rng role_rng(uint64_t seed, Role r) { return Rng(mix64(seed, uint64_t(r) + 1)); }

ParamStore init_img_denoiser(const NetConfig& net, uint64_t seed) {
  net.validate();
  ParamStore ps;
  ps.role = Role::img_denoiser;
  Rng rng = role_rng(seed, ps.role);
  ParamBuilder b{ps, rng};
  const int w = net.width;
  b.lin("temb.l1", net.tmlp, net.temb);
  b.lin("temb.l2", net.tmlp, net.tmlp);
  b.conv("stem", w, net.img_ch, 3);
  for (int s = 0; s < 3; ++s) {
    b.res_block("enc" + std::to_string(s) + ".rb0", w, w, net.tmlp);
    b.res_block("enc" + std::to_string(s) + ".rb1", w, w, net.tmlp);
    if (s < 2) b.conv("down" + std::to_string(s), w, w, 3);
  }
  for (int s = 2; s >= 0; --s) {
    b.res_block("dec" + std::to_string(s) + ".rb0", 2 * w, w, net.tmlp);
    b.res_block("dec" + std::to_string(s) + ".rb1", w, w, net.tmlp);
    if (s > 0) b.conv("up" + std::to_string(s), w, w, 1);
  }
  b.gn("head.n", w);
  b.conv("head.c", net.img_ch, w, 3);
  return ps;
}

ParamStore init_img_controller(const NetConfig& net, uint64_t seed) {
  net.validate();
  ParamStore ps;
  ps.role = Role::img_controller;
  Rng rng = role_rng(seed, ps.role);
  ParamBuilder b{ps, rng};
  const int w = net.width;
  b.conv("stem", w, net.img_ch, 3);
  for (int s = 0; s < 3; ++s) {
    b.gn("blk" + std::to_string(s) + ".n", w);
    b.conv("blk" + std::to_string(s) + ".c", w, w, 3);
    // zero-initialized heads behind a feature norm: SFT is the identity at init
    b.gn("hn" + std::to_string(s), w);
    b.conv("gamma" + std::to_string(s), w, w, 1, /*zero_init=*/true);
    b.conv("beta" + std::to_string(s), w, w, 1, /*zero_init=*/true);
    if (s < 2) b.conv("down" + std::to_string(s), w, w, 3);
  }
  return ps;
}

ParamStore init_seg_backbone(const NetConfig& net, uint64_t seed) {
  net.validate();
  ParamStore ps;
  ps.role = Role::seg_backbone;
  Rng rng = role_rng(seed, ps.role);
  ParamBuilder b{ps, rng};
  const int w = net.width;
  b.conv("stem", w, net.img_ch, 3);
  for (int s = 0; s < 3; ++s) {
    for (const char* rb : {".rb0", ".rb1"}) {
      const std::string p = "b" + std::to_string(s) + rb;
      b.gn(p + ".n1", w);
      b.conv(p + ".c1", w, w, 3);
      b.gn(p + ".n2", w);
      b.conv(p + ".c2", w, w, 1);
    }
    if (s < 2) b.conv("down" + std::to_string(s), w, w, 3);
  }
  b.gn("head.n", w);
  b.conv("head.c0", w, w, 3);
  b.gn("head.n2", w);
  b.conv("head.c", net.K, w, 1);
  return ps;
}

ParamStore init_seg_denoiser(const NetConfig& net, uint64_t seed) {
  net.validate();
  ParamStore ps;
  ps.role = Role::seg_denoiser;
  Rng rng = role_rng(seed, ps.role);
  ParamBuilder b{ps, rng};
  const int w = net.width;
  b.lin("temb.l1", net.tmlp, net.temb);
  b.lin("temb.l2", net.tmlp, net.tmlp);
  b.conv("stem", w, net.K + w + net.K, 3);
  for (int s = 0; s < 3; ++s) {
    b.res_block("enc" + std::to_string(s) + ".rb0", s == 0 ? w : 2 * w, w, net.tmlp);
    b.res_block("enc" + std::to_string(s) + ".rb1", w, w, net.tmlp);
    if (s < 2) b.conv("down" + std::to_string(s), w, w, 3);
  }
  for (int s = 2; s >= 0; --s) {
    b.res_block("dec" + std::to_string(s) + ".rb0", 2 * w, w, net.tmlp);
    b.res_block("dec" + std::to_string(s) + ".rb1", w, w, net.tmlp);
    if (s > 0) b.conv("up" + std::to_string(s), w, w, 1);
  }
  b.gn("head.n", w);
  b.conv("head.c", net.K, w, 1);
  return ps;
}

ParamStore init_seg_controller(const NetConfig& net, const ParamStore& img_denoiser,
                               uint64_t seed) {
  net.validate();
  require(img_denoiser.role == Role::img_denoiser,
          "seg_controller must be cloned from an img_denoiser store");
  ParamStore ps;
  ps.role = Role::seg_controller;
  Rng rng = role_rng(seed, ps.role);
  ParamBuilder b{ps, rng};
  const int w = net.width;

  // fresh mask-embedding stem, then the cloned encoder weights
  b.conv("mask.c1", w, net.K, 3);

  std::vector<std::string> cloned = {"temb.l1", "temb.l2", "stem"};
  for (int s = 0; s < 3; ++s) {
    for (const char* rb : {".rb0", ".rb1"}) {
      const std::string p = "enc" + std::to_string(s) + rb;
      for (const char* leafn : {".n1.g", ".n1.b", ".c1.w", ".c1.b", ".t.w", ".t.b", ".n2.g",
                                ".n2.b", ".c2.w", ".c2.b"})
        cloned.push_back(p + leafn);
    }
    if (s < 2) cloned.push_back("down" + std::to_string(s));
  }
  for (const auto& name : cloned) {
    // entries without a '.w' suffix expand to .w/.b pairs
    if (img_denoiser.has(name)) {
      ps.add(name, img_denoiser.at(name));
    } else if (img_denoiser.has(name + ".w")) {
      ps.add(name + ".w", img_denoiser.at(name + ".w"));
      ps.add(name + ".b", img_denoiser.at(name + ".b"));
    } else {
      fail_validation("clone-shape mismatch: img_denoiser lacks " + name);
    }
  }
  auto expect = [&](const char* name, std::vector<int> shape) {
    if (ps.at(name).shape != shape)
      fail_validation(std::string("clone-shape mismatch: ") + name + " is " +
                      shape_str(ps.at(name)) + ", expected a width-" + std::to_string(w) +
                      " encoder");
  };
  expect("stem.w", {w, net.img_ch, 3, 3});
  expect("enc0.rb0.c1.w", {w, w, 3, 3});
  expect("temb.l1.w", {net.tmlp, net.temb});
  for (int s = 0; s < 3; ++s) {
    b.gn("zn" + std::to_string(s), w);
    b.conv("zero" + std::to_string(s), w, w, 1, /*zero_init=*/true);
  }
  return ps;
}

ParamStore init_img_aided(const NetConfig& net, uint64_t seed) {
  net.validate();
  ParamStore ps;
  ps.role = Role::img_aided;
  Rng rng = role_rng(seed, ps.role);
  ParamBuilder b{ps, rng};
  const int w = net.width;
  const int aw = net.aided_stem_width();
  b.lin("temb.l1", net.tmlp, net.temb);
  b.lin("temb.l2", net.tmlp, net.tmlp);
  b.conv("stem0", aw, net.img_ch, 3);
  b.gn("sn", aw);
  b.conv("stem1", w, aw, 3);
  for (int s = 0; s < 3; ++s) {
    b.res_block("blk" + std::to_string(s), w, w, net.tmlp);
    b.gn("zn" + std::to_string(s), w);
    b.conv("zero" + std::to_string(s), w, w, 1, /*zero_init=*/true);
    if (s < 2) b.conv("down" + std::to_string(s), w, w, 3);
  }
  return ps;
}

TensorF one_hot(const IntField& classes, int K) {
  TensorF out({K, classes.h, classes.w});
  const int64_t hw = classes.numel();
  for (int64_t i = 0; i < hw; ++i) {
    const int32_t c = classes.v[size_t(i)];
    require(c >= 0 && c < K, "one_hot: class out of range");
    out.v[size_t(c) * hw + i] = 1.0f;
  }
  return out;
}

}  // namespace segsr
