#pragma once

#include <array>
#include <type_traits>
#include <optional>

#include "segsr/nn.hpp"
#include "segsr/schedules.hpp"

namespace segsr {

// Geometry and widths shared by all networks. Three scales everywhere:
// image branch at hq, hq/2, hq/4; segmentation branch at mask, mask/2, mask/4.
struct NetConfig {
  int hq = 64;
  int lq = 16;
  int mask = 16;
  int K = 6;
  int width = 32;
  int temb = 64;
  int tmlp = 128;
  int gn_groups = 8;
  int img_ch = 3;

  int aided_stem_width() const { return std::max(gn_groups, width / 2); }
  void validate() const;
};

struct ModelSet {
  NetConfig net;
  std::array<ParamStore, kNumRoles> roles;

  ParamStore& at(Role r) { return roles[size_t(r)]; }
  const ParamStore& at(Role r) const { return roles[size_t(r)]; }
};

// Fresh seed-derived initialization. seg_controller clones the denoiser
// encoder, so the denoiser must be initialized (or loaded) first.
ParamStore init_img_denoiser(const NetConfig& net, uint64_t seed);
ParamStore init_img_controller(const NetConfig& net, uint64_t seed);
ParamStore init_seg_backbone(const NetConfig& net, uint64_t seed);
ParamStore init_seg_denoiser(const NetConfig& net, uint64_t seed);
ParamStore init_seg_controller(const NetConfig& net, const ParamStore& img_denoiser, uint64_t seed);
ParamStore init_img_aided(const NetConfig& net, uint64_t seed);

// one-hot [K,h,w] encoding of a class field
TensorF one_hot(const IntField& classes, int K);

// ---------------------------------------------------------------------------
// Forwards (templated so gradient checks can run them in double).
// Tape ids in/out; optional conditions are null when absent.
// ---------------------------------------------------------------------------

template <class T>
struct SftConds {
  std::array<std::pair<int, int>, 3> gamma_beta;  // per encoder scale
};

template <class T>
struct BackboneOut {
  std::array<int, 3> F;  // [width, mask/2^s]
  int init_logits;       // [K, mask, mask]
};

namespace detail {

template <class T>
int temb_mlp(Tape<T>& tp, Bound<T>& p, int t, const NetConfig& net) {
  int e = tp.leaf(time_embedding<T>(t, net.temb));
  e = linear_layer(tp, p, "temb.l1", e);
  e = tp.silu(e);
  return linear_layer(tp, p, "temb.l2", e);
}

// shared encoder body of the img denoiser / seg controller clone:
// stem output -> per-scale res blocks, returning per-scale features
template <class T>
std::array<int, 3> img_encoder(Tape<T>& tp, Bound<T>& p, int x, int temb, const NetConfig& net,
                               const SftConds<T>* sft) {
  std::array<int, 3> taps{};
  for (int s = 0; s < 3; ++s) {
    x = res_block_fwd(tp, p, "enc" + std::to_string(s) + ".rb0", x, temb, net.width, net.width,
                      net.gn_groups);
    x = res_block_fwd(tp, p, "enc" + std::to_string(s) + ".rb1", x, temb, net.width, net.width,
                      net.gn_groups);
    if (sft) x = tp.sft(x, sft->gamma_beta[size_t(s)].first, sft->gamma_beta[size_t(s)].second);
    taps[size_t(s)] = x;
    if (s < 2) x = conv_layer(tp, p, "down" + std::to_string(s), x, 2, 1);
  }
  return taps;
}

}  // namespace detail

// eps prediction network. z_t [img_ch,hq,hq]; sft = LQ conditions per encoder
// scale; C = bridge residuals added to the decoder skip inputs.
template <class T>
int img_denoiser_fwd(Tape<T>& tp, Bound<T>& p, int z_t, int t, const NetConfig& net,
                     std::type_identity_t<const SftConds<T>*> sft, const std::array<int, 3>* C) {
  const auto& zs = tp.val(z_t).shape;
  require(zs == std::vector<int>({net.img_ch, net.hq, net.hq}),
          "img_denoiser: z_t geometry mismatch");
  int temb = detail::temb_mlp(tp, p, t, net);
  int x = conv_layer(tp, p, "stem", z_t, 1, 1);
  auto skips = detail::img_encoder(tp, p, x, temb, net, sft);
  x = skips[2];
  for (int s = 2; s >= 0; --s) {
    int skip = skips[size_t(s)];
    if (C) skip = tp.add(skip, (*C)[size_t(s)]);
    x = tp.concat_ch(x, skip);
    x = res_block_fwd(tp, p, "dec" + std::to_string(s) + ".rb0", x, temb, 2 * net.width, net.width,
                      net.gn_groups);
    x = res_block_fwd(tp, p, "dec" + std::to_string(s) + ".rb1", x, temb, net.width, net.width,
                      net.gn_groups);
    if (s > 0) {
      x = tp.upsample_nearest(x, 2);
      x = conv_layer(tp, p, "up" + std::to_string(s), x, 1, 0);
    }
  }
  x = gn_layer(tp, p, "head.n", x, net.gn_groups);
  x = tp.silu(x);
  return conv_layer(tp, p, "head.c", x, 1, 1);
}

// LQ-conditioned (gamma, beta) per denoiser encoder scale. Heads are
// zero-initialized so SFT starts as identity. Time-independent.
template <class T>
SftConds<T> img_controller_fwd(Tape<T>& tp, Bound<T>& p, int z_lq_up, const NetConfig& net) {
  const auto& zs = tp.val(z_lq_up).shape;
  require(zs == std::vector<int>({net.img_ch, net.hq, net.hq}),
          "img_controller: expects the LQ image upsampled to HQ geometry");
  SftConds<T> out;
  int x = conv_layer(tp, p, "stem", z_lq_up, 1, 1);
  for (int s = 0; s < 3; ++s) {
    const std::string b = "blk" + std::to_string(s);
    x = gn_layer(tp, p, b + ".n", x, net.gn_groups);
    x = tp.silu(x);
    x = conv_layer(tp, p, b + ".c", x, 1, 1);
    // normalized features feed the zero-initialized heads
    int h = gn_layer(tp, p, "hn" + std::to_string(s), x, net.gn_groups);
    out.gamma_beta[size_t(s)] = {conv_layer(tp, p, "gamma" + std::to_string(s), h, 1, 0),
                                 conv_layer(tp, p, "beta" + std::to_string(s), h, 1, 0)};
    if (s < 2) x = conv_layer(tp, p, "down" + std::to_string(s), x, 2, 1);
  }
  return out;
}

namespace detail {
// res block without time conditioning (backbone)
template <class T>
int res_block_nt(Tape<T>& tp, Bound<T>& p, const std::string& prefix, int x, int ci, int co,
                 int groups) {
  int h = gn_layer(tp, p, prefix + ".n1", x, groups);
  h = tp.silu(h);
  h = conv_layer(tp, p, prefix + ".c1", h, 1, 1);
  h = gn_layer(tp, p, prefix + ".n2", h, groups);
  h = tp.silu(h);
  h = conv_layer(tp, p, prefix + ".c2", h, 1, 0);
  int skip = ci == co ? x : conv_layer(tp, p, prefix + ".s", x, 1, 0);
  return tp.add(h, skip);
}
}  // namespace detail

// multi-scale LQ features + coarse per-pixel class logits
template <class T>
BackboneOut<T> seg_backbone_fwd(Tape<T>& tp, Bound<T>& p, int lq, const NetConfig& net) {
  const auto& ls = tp.val(lq).shape;
  require(ls == std::vector<int>({net.img_ch, net.lq, net.lq}), "seg_backbone: LQ geometry");
  BackboneOut<T> out{};
  int x = conv_layer(tp, p, "stem", lq, 1, 1);
  for (int s = 0; s < 3; ++s) {
    const std::string b = "b" + std::to_string(s);
    x = detail::res_block_nt(tp, p, b + ".rb0", x, net.width, net.width, net.gn_groups);
    x = detail::res_block_nt(tp, p, b + ".rb1", x, net.width, net.width, net.gn_groups);
    out.F[size_t(s)] = x;
    if (s < 2) x = conv_layer(tp, p, "down" + std::to_string(s), x, 2, 1);
  }
  int h = gn_layer(tp, p, "head.n", out.F[0], net.gn_groups);
  h = tp.silu(h);
  h = conv_layer(tp, p, "head.c0", h, 1, 1);
  h = gn_layer(tp, p, "head.n2", h, net.gn_groups);
  h = tp.silu(h);
  out.init_logits = conv_layer(tp, p, "head.c", h, 1, 0);
  return out;
}

// S0-logit prediction from the one-hot noisy mask. F is concatenated at each
// encoder scale (init_logits ride along at the finest); I residuals from the
// bridge are added right after each scale's merge conv.
template <class T>
int seg_denoiser_fwd(Tape<T>& tp, Bound<T>& p, int s_rep, int t, const BackboneOut<T>& F,
                     const NetConfig& net, const std::array<int, 3>* I) {
  const auto& ss = tp.val(s_rep).shape;
  require(ss == std::vector<int>({net.K, net.mask, net.mask}),
          "seg_denoiser: s_rep must be one-hot [K,mask,mask]");
  require(net.mask % 4 == 0, "seg_denoiser needs mask resolution divisible by 4");
  int temb = detail::temb_mlp(tp, p, t, net);
  int x = tp.concat_ch(tp.concat_ch(s_rep, F.F[0]), F.init_logits);
  x = conv_layer(tp, p, "stem", x, 1, 1);
  if (I) x = tp.add(x, (*I)[0]);
  std::array<int, 3> skips{};
  for (int s = 0; s < 3; ++s) {
    const std::string e = "enc" + std::to_string(s);
    if (s > 0) {
      x = conv_layer(tp, p, "down" + std::to_string(s - 1), x, 2, 1);
      x = tp.concat_ch(x, F.F[size_t(s)]);
      x = res_block_fwd(tp, p, e + ".rb0", x, temb, 2 * net.width, net.width, net.gn_groups);
      if (I) x = tp.add(x, (*I)[size_t(s)]);
    } else {
      x = res_block_fwd(tp, p, e + ".rb0", x, temb, net.width, net.width, net.gn_groups);
    }
    x = res_block_fwd(tp, p, e + ".rb1", x, temb, net.width, net.width, net.gn_groups);
    skips[size_t(s)] = x;
  }
  x = skips[2];
  for (int s = 2; s >= 0; --s) {
    x = tp.concat_ch(x, skips[size_t(s)]);
    x = res_block_fwd(tp, p, "dec" + std::to_string(s) + ".rb0", x, temb, 2 * net.width, net.width,
                      net.gn_groups);
    x = res_block_fwd(tp, p, "dec" + std::to_string(s) + ".rb1", x, temb, net.width, net.width,
                      net.gn_groups);
    if (s > 0) {
      x = tp.upsample_nearest(x, 2);
      x = conv_layer(tp, p, "up" + std::to_string(s), x, 1, 0);
    }
  }
  x = gn_layer(tp, p, "head.n", x, net.gn_groups);
  x = tp.silu(x);
  return conv_layer(tp, p, "head.c", x, 1, 0);
}

// Bridge, seg -> image: clone of the denoiser encoder fed with (embedded mask
// + z_t + t), one zero-conv residual per decoder skip site.
template <class T>
std::array<int, 3> seg_controller_fwd(Tape<T>& tp, Bound<T>& p, int s_rep, int z_t, int t,
                                      const NetConfig& net) {
  const auto& ss = tp.val(s_rep).shape;
  require(ss == std::vector<int>({net.K, net.mask, net.mask}), "seg_controller: s_rep geometry");
  require(net.hq % net.mask == 0, "seg_controller: hq must be a multiple of mask");
  int temb = detail::temb_mlp(tp, p, t, net);
  int mf = conv_layer(tp, p, "mask.c1", s_rep, 1, 1);
  mf = tp.upsample_nearest(mf, net.hq / net.mask);
  int x = conv_layer(tp, p, "stem", z_t, 1, 1);
  x = tp.add(x, mf);
  auto taps = detail::img_encoder(tp, p, x, temb, net, static_cast<const SftConds<T>*>(nullptr));
  std::array<int, 3> out{};
  for (int s = 0; s < 3; ++s) {
    int h = gn_layer(tp, p, "zn" + std::to_string(s), taps[size_t(s)], net.gn_groups);
    out[size_t(s)] = conv_layer(tp, p, "zero" + std::to_string(s), h, 1, 0);
  }
  return out;
}

// Bridge, image -> seg: lightweight encoder of z_t emitting zero-conv
// residuals shaped for the seg denoiser encoder sites.
template <class T>
std::array<int, 3> img_aided_fwd(Tape<T>& tp, Bound<T>& p, int z_t, int t, const NetConfig& net) {
  const auto& zs = tp.val(z_t).shape;
  require(zs == std::vector<int>({net.img_ch, net.hq, net.hq}), "img_aided: z_t geometry");
  require(net.hq / 4 == net.mask, "img_aided: hq/4 must equal the mask resolution");
  int temb = detail::temb_mlp(tp, p, t, net);
  int x = conv_layer(tp, p, "stem0", z_t, 2, 1);
  x = gn_layer(tp, p, "sn", x, net.gn_groups);
  x = tp.silu(x);
  x = conv_layer(tp, p, "stem1", x, 2, 1);
  std::array<int, 3> out{};
  for (int s = 0; s < 3; ++s) {
    x = res_block_fwd(tp, p, "blk" + std::to_string(s), x, temb, net.width, net.width,
                      net.gn_groups);
    int h = gn_layer(tp, p, "zn" + std::to_string(s), x, net.gn_groups);
    out[size_t(s)] = conv_layer(tp, p, "zero" + std::to_string(s), h, 1, 0);
    if (s < 2) x = conv_layer(tp, p, "down" + std::to_string(s), x, 2, 1);
  }
  return out;
}

}  // namespace segsr
