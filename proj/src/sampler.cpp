#include "segsr/sampler.hpp"

namespace segsr {

MaskSource mask_source_from_name(const std::string& s) {
  if (s == "none" || s == "1") return MaskSource::none;
  if (s == "backbone" || s == "backbone_argmax" || s == "2") return MaskSource::backbone_argmax;
  if (s == "segdm" || s == "3") return MaskSource::segdm;
  if (s == "coupled" || s == "4") return MaskSource::coupled;
  if (s == "gt" || s == "gt_mask" || s == "5") return MaskSource::gt_mask;
  if (s == "zero" || s == "zero_mask") return MaskSource::zero_mask;
  fail_validation("unknown sampling mode: " + s + " (expected 1..5, coupled or zero)");
}

const char* mask_source_name(MaskSource m) {
  switch (m) {
    case MaskSource::none: return "none";
    case MaskSource::backbone_argmax: return "backbone_argmax";
    case MaskSource::zero_mask: return "zero_mask";
    case MaskSource::gt_mask: return "gt_mask";
    case MaskSource::segdm: return "segdm";
    case MaskSource::coupled: return "coupled";
  }
  return "?";
}

TensorF lq_to_z_geometry(const TensorF& lq01, const NetConfig& net) {
  require(lq01.shape == std::vector<int>({net.img_ch, net.lq, net.lq}),
          "lq image geometry mismatch: got " + shape_str(lq01));
  const int f = net.hq / net.lq;
  TensorF out({net.img_ch, net.hq, net.hq});
  for (int c = 0; c < net.img_ch; ++c)
    for (int y = 0; y < net.hq; ++y)
      for (int x = 0; x < net.hq; ++x)
        out.v[size_t((int64_t(c) * net.hq + y) * net.hq + x)] =
            2.0f * lq01.v[size_t((int64_t(c) * net.lq + y / f) * net.lq + x / f)] - 1.0f;
  return out;
}

namespace {

TensorF decode_image(const TensorF& z) {
  TensorF out;
  out.shape = z.shape;
  out.v.resize(z.v.size());
  for (size_t i = 0; i < z.v.size(); ++i)
    out.v[i] = std::min(1.0f, std::max(0.0f, 0.5f * (z.v[i] + 1.0f)));
  return out;
}

IntField argmax_field(const TensorF& probs) {
  const int K = probs.shape[0], h = probs.shape[1], w = probs.shape[2];
  const int64_t hw = int64_t(h) * w;
  IntField out(h, w);
  for (int64_t p = 0; p < hw; ++p) {
    int best = 0;
    float bv = probs.v[size_t(p)];
    for (int k = 1; k < K; ++k)
      if (probs.v[size_t(k) * hw + p] > bv) {
        bv = probs.v[size_t(k) * hw + p];
        best = k;
      }
    out.v[size_t(p)] = best;
  }
  return out;
}

SampleResult run_sampler(const ModelSet& m, const Schedules& s, const TensorF& lq01,
                         MaskSource source, const IntField* gt_mask_hq, const SampleOptions& opt) {
  const NetConfig& net = m.net;
  require(opt.steps >= 1 && opt.steps <= s.g.T, "steps must be in [1, T]");
  require(s.g.T == s.d.T, "sampler expects matching chain lengths");
  const bool mask_evolves = source == MaskSource::segdm || source == MaskSource::coupled;
  const bool uses_bridge_c = source != MaskSource::none;
  const bool uses_backbone = mask_evolves || source == MaskSource::backbone_argmax;

  // independent streams so attaching/detaching one branch cannot shift the other
  Rng rng_img(mix64(opt.seed, 0x5eed0001ull));
  Rng rng_mask(mix64(opt.seed, 0x5eed0002ull));

  const TensorF z_lq = lq_to_z_geometry(lq01, net);
  const SftValues sft_vals = eval_img_controller(m, z_lq);
  BackboneValues F;
  if (uses_backbone) F = eval_backbone(m, lq01);

  // fixed conditioning mask for the non-evolving sources
  MaskState fixed;
  fixed.classes = IntField(net.mask, net.mask);
  if (source == MaskSource::backbone_argmax) {
    fixed.classes = argmax_field(softmax_channels(F.init_logits));
  } else if (source == MaskSource::gt_mask) {
    require(gt_mask_hq != nullptr, "gt_mask sampling requires the scene's ground-truth mask");
    fixed = resize_codec_encode(*gt_mask_hq, net.mask, net.mask, net.K);
  }
  // zero_mask / none keep the all-background field

  const std::vector<int> spacing = timestep_spacing(s.g.T, opt.steps);

  TensorF Z({net.img_ch, net.hq, net.hq});
  for (auto& v : Z.v) v = float(rng_img.normal());
  MaskState S;
  S.classes = IntField(net.mask, net.mask);
  S.t = spacing[0];
  if (mask_evolves)
    for (auto& c : S.classes.v) c = int32_t(rng_mask.below(uint64_t(net.K)));

  SampleResult res;
  TensorF last_probs;  // s0 distribution from the most recent mask step

  for (size_t i = 0; i < spacing.size(); ++i) {
    const int t = spacing[i];
    const int t_prev = i + 1 < spacing.size() ? spacing[i + 1] : -1;

    // ---- image branch (reads the pre-update S) ----
    TapeF tp;
    tp.grad_enabled = false;
    BoundModels bm(tp, m, {});
    int z_id = tp.leaf(Z);
    SftConds<float> sft;
    for (int k = 0; k < 3; ++k)
      sft.gamma_beta[size_t(k)] = {tp.leaf(sft_vals.gamma_beta[size_t(k)].first),
                                   tp.leaf(sft_vals.gamma_beta[size_t(k)].second)};
    std::array<int, 3> C{};
    if (uses_bridge_c) {
      const MaskState& cond = mask_evolves ? S : fixed;
      int srep = tp.leaf(one_hot(cond.classes, net.K));
      C = seg_controller_fwd(tp, bm.at(Role::seg_controller), srep, z_id, t, net);
    }
    int eps_id = img_denoiser_fwd(tp, bm.at(Role::img_denoiser), z_id, t, net, &sft,
                                  uses_bridge_c ? &C : nullptr);
    const TensorF& eps_hat = tp.val(eps_id);

    const bool wants_noise = opt.eta > 0.0 && t_prev > 0;
    TensorF noise;
    if (wants_noise) {
      noise = TensorF(Z.shape);
      for (auto& v : noise.v) v = float(rng_img.normal());
    }
    TensorF Z_next = ddim_step(s.g, Z, eps_hat, t, t_prev, opt.eta, wants_noise ? &noise : nullptr);
    if (!Z_next.all_finite())
      fail_runtime("non-finite latent at sampling step " + std::to_string(i) +
                   " (t=" + std::to_string(t) + ")");

    // ---- mask branch (reads the pre-update Z: Jacobi) ----
    MaskState S_next = S;
    if (mask_evolves) {
      S_next = segdm_reverse_step(m, s.d, S, t, t_prev, F,
                                  source == MaskSource::coupled ? &Z : nullptr, rng_mask);
    }

    if (opt.capture_trajectory && (i % size_t(std::max(1, opt.trajectory_every)) == 0 ||
                                   i + 1 == spacing.size())) {
      const double ab = s.g.alpha_bar(t);
      TensorF z0_hat;
      z0_hat.shape = Z.shape;
      z0_hat.v.resize(Z.v.size());
      const float ca = float(1.0 / std::sqrt(ab)), cb = float(std::sqrt(1.0 - ab) / std::sqrt(ab));
      for (size_t k = 0; k < Z.v.size(); ++k) z0_hat.v[k] = ca * Z.v[k] - cb * eps_hat.v[k];
      res.traj_images.push_back(decode_image(z0_hat));
      res.traj_masks.push_back(mask_evolves ? S_next.classes : fixed.classes);
    }

    Z = std::move(Z_next);
    S = std::move(S_next);
  }

  res.image = decode_image(Z);
  if (mask_evolves) {
    res.mask_small = S.classes;
  } else {
    // the guiding mask stands in as this mode's segmentation prediction
    res.mask_small = fixed.classes;
  }
  MaskState fin;
  fin.classes = res.mask_small;
  res.mask = resize_codec_decode(fin, net.hq, net.hq);
  return res;
}

}  // namespace

SampleResult coupled_sample(const ModelSet& m, const Schedules& s, const TensorF& lq01,
                            const SampleOptions& opt) {
  return run_sampler(m, s, lq01, MaskSource::coupled, nullptr, opt);
}

SampleResult srdm_only_sample(const ModelSet& m, const Schedules& s, const TensorF& lq01,
                              MaskSource source, const IntField* gt_mask_hq,
                              const SampleOptions& opt) {
  return run_sampler(m, s, lq01, source, gt_mask_hq, opt);
}

}  // namespace segsr
