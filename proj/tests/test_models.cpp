#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"

using namespace segsr;
using namespace segsr::testutil;

TEST_CASE("time embedding") {
  auto e = time_embedding<float>(0, 4);
  CHECK(e.v == std::vector<float>{0.0f, 0.0f, 1.0f, 1.0f});

  auto big = time_embedding<float>(977, 64);
  for (float v : big.v) {
    CHECK(v <= 1.0f);
    CHECK(v >= -1.0f);
  }
  auto a = time_embedding<float>(1, 64);
  auto b = time_embedding<float>(2, 64);
  double dist = 0;
  for (size_t i = 0; i < a.v.size(); ++i) dist += (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
  CHECK(dist > 0.0);
  CHECK_THROWS_AS(time_embedding<float>(3, 3), error);
}

TEST_CASE("forward shape contracts and determinism") {
  NetConfig net = tiny_net(3);
  ModelSet m = make_models(net, 42);
  Rng rng(9);
  TensorF z = random_tensor({3, net.hq, net.hq}, rng);
  TensorF lq = random_unit01({3, net.lq, net.lq}, rng);
  IntField mask = random_mask(net.mask, net.mask, net.K, rng);

  TapeF tp;
  tp.grad_enabled = false;
  BoundModels bm(tp, m, {});

  auto sft = img_controller_fwd(tp, bm.at(Role::img_controller), tp.leaf(z), net);
  for (int s = 0; s < 3; ++s) {
    const int side = net.hq >> s;
    CHECK(tp.val(sft.gamma_beta[size_t(s)].first).shape == std::vector<int>({net.width, side, side}));
    CHECK(tp.val(sft.gamma_beta[size_t(s)].second).shape == std::vector<int>({net.width, side, side}));
    // zero-initialized heads: gamma = beta = 0 at init
    for (float v : tp.val(sft.gamma_beta[size_t(s)].first).v) CHECK(v == 0.0f);
    for (float v : tp.val(sft.gamma_beta[size_t(s)].second).v) CHECK(v == 0.0f);
  }

  int srep = tp.leaf(one_hot(mask, net.K));
  auto C = seg_controller_fwd(tp, bm.at(Role::seg_controller), srep, tp.leaf(z), 5, net);
  for (int s = 0; s < 3; ++s) {
    const int side = net.hq >> s;
    CHECK(tp.val(C[size_t(s)]).shape == std::vector<int>({net.width, side, side}));
    for (float v : tp.val(C[size_t(s)]).v) CHECK(v == 0.0f);  // fresh bridge
  }

  int eps1 = img_denoiser_fwd(tp, bm.at(Role::img_denoiser), tp.leaf(z), 5, net, &sft, &C);
  CHECK(tp.val(eps1).shape == std::vector<int>({3, net.hq, net.hq}));

  auto bb = seg_backbone_fwd(tp, bm.at(Role::seg_backbone), tp.leaf(lq), net);
  CHECK(tp.val(bb.init_logits).shape == std::vector<int>({net.K, net.mask, net.mask}));
  for (int s = 0; s < 3; ++s) {
    const int side = net.mask >> s;
    CHECK(tp.val(bb.F[size_t(s)]).shape == std::vector<int>({net.width, side, side}));
  }
  // softmax rows sum to one
  TensorF probs = softmax_channels(tp.val(bb.init_logits));
  const int64_t hw = int64_t(net.mask) * net.mask;
  for (int64_t p = 0; p < hw; ++p) {
    double row = 0;
    for (int k = 0; k < net.K; ++k) row += double(probs.v[size_t(k) * hw + p]);
    CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
  }

  auto I = img_aided_fwd(tp, bm.at(Role::img_aided), tp.leaf(z), 5, net);
  for (int s = 0; s < 3; ++s) {
    const int side = net.mask >> s;
    CHECK(tp.val(I[size_t(s)]).shape == std::vector<int>({net.width, side, side}));
    for (float v : tp.val(I[size_t(s)]).v) CHECK(v == 0.0f);
  }

  int logits = seg_denoiser_fwd(tp, bm.at(Role::seg_denoiser), srep, 5, bb, net, &I);
  CHECK(tp.val(logits).shape == std::vector<int>({net.K, net.mask, net.mask}));

  // bit-identical repetition on a fresh tape
  TapeF tp2;
  tp2.grad_enabled = false;
  BoundModels bm2(tp2, m, {});
  int eps2 = img_denoiser_fwd(tp2, bm2.at(Role::img_denoiser), tp2.leaf(z), 5, net, nullptr, nullptr);
  TapeF tp3;
  tp3.grad_enabled = false;
  BoundModels bm3(tp3, m, {});
  int eps3 = img_denoiser_fwd(tp3, bm3.at(Role::img_denoiser), tp3.leaf(z), 5, net, nullptr, nullptr);
  CHECK(tp2.val(eps2).v == tp3.val(eps3).v);
}

TEST_CASE("zero-init bridge transparency is exact") {
  NetConfig net = tiny_net(4);
  ModelSet m = make_models(net, 7);
  Rng rng(3);
  TensorF z = random_tensor({3, net.hq, net.hq}, rng);
  TensorF lq = random_unit01({3, net.lq, net.lq}, rng);
  IntField mask = random_mask(net.mask, net.mask, net.K, rng);

  TapeF tp;
  tp.grad_enabled = false;
  BoundModels bm(tp, m, {});
  int z_id = tp.leaf(z);
  int srep = tp.leaf(one_hot(mask, net.K));

  auto C = seg_controller_fwd(tp, bm.at(Role::seg_controller), srep, z_id, 2, net);
  int with_c = img_denoiser_fwd<float>(tp, bm.at(Role::img_denoiser), z_id, 2, net, nullptr, &C);
  int without_c = img_denoiser_fwd<float>(tp, bm.at(Role::img_denoiser), z_id, 2, net, nullptr, nullptr);
  CHECK(tp.val(with_c).v == tp.val(without_c).v);

  auto bb = seg_backbone_fwd(tp, bm.at(Role::seg_backbone), tp.leaf(lq), net);
  auto I = img_aided_fwd(tp, bm.at(Role::img_aided), z_id, 2, net);
  int with_i = seg_denoiser_fwd(tp, bm.at(Role::seg_denoiser), srep, 2, bb, net, &I);
  int without_i = seg_denoiser_fwd(tp, bm.at(Role::seg_denoiser), srep, 2, bb, net, nullptr);
  CHECK(tp.val(with_i).v == tp.val(without_i).v);
}

TEST_CASE("seg controller clones the denoiser encoder") {
  NetConfig net = tiny_net(3);
  ParamStore den = init_img_denoiser(net, 5);
  ParamStore ctrl = init_seg_controller(net, den, 5);
  for (const char* name : {"stem.w", "enc0.rb0.c1.w", "enc1.rb1.c2.w", "down0.w", "temb.l1.w"})
    CHECK(ctrl.at(name).v == den.at(name).v);
  for (int s = 0; s < 3; ++s) {
    for (float v : ctrl.at("zero" + std::to_string(s) + ".w").v) CHECK(v == 0.0f);
    for (float v : ctrl.at("zero" + std::to_string(s) + ".b").v) CHECK(v == 0.0f);
  }
  // clone-shape mismatch: denoiser built for a different width
  NetConfig other = net;
  other.width = 16;
  other.gn_groups = 4;
  ParamStore den2 = init_img_denoiser(other, 5);
  CHECK_THROWS_AS(init_seg_controller(net, den2, 5), error);
}

TEST_CASE("gradcheck: full tiny denoiser on 8x8 inputs") {
  NetConfig net;
  net.hq = 8;
  net.lq = 2;
  net.mask = 2;
  net.K = 2;
  net.width = 8;
  net.temb = 8;
  net.tmlp = 8;
  net.gn_groups = 4;
  ParamStore den = init_img_denoiser(net, 77);
  Rng rng(78);
  TensorD zin({3, 8, 8});
  for (auto& v : zin.v) v = rng.normal();
  TensorD w({3, 8, 8});
  for (auto& v : w.v) v = rng.normal();
  auto res = gradcheck_all(den, [&](TapeD& tp, Bound<double>& p) {
    return tp.dot_const(img_denoiser_fwd(tp, p, tp.leaf(zin), 3, net, nullptr, nullptr), w);
  }, 1e-3, /*max_coords=*/300, /*pick_seed=*/99);
  CHECK(res.checked == 300);
  CHECK(res.norm_rel_err < 1e-3);
}

TEST_CASE("gradients flow into the bridge encoders through their zero convs") {
  NetConfig net = tiny_net(3);
  ModelSet m = make_models(net, 11);
  Rng rng(12);
  TensorF z = random_tensor({3, net.hq, net.hq}, rng);
  TensorF lq = random_unit01({3, net.lq, net.lq}, rng);
  IntField mask = random_mask(net.mask, net.mask, net.K, rng);

  TapeF tp;
  BoundModels bm(tp, m, {Role::img_aided});
  auto bb = seg_backbone_fwd(tp, bm.at(Role::seg_backbone), tp.leaf(lq), net);
  auto I = img_aided_fwd(tp, bm.at(Role::img_aided), tp.leaf(z), 3, net);
  int logits = seg_denoiser_fwd(tp, bm.at(Role::seg_denoiser), tp.leaf(one_hot(mask, net.K)), 3,
                                bb, net, &I);
  tp.backward(tp.softmax_ce(logits, mask));

  // the zero-conv weights themselves get nonzero gradient for nonzero input
  Bound<float>& aided = bm.at(Role::img_aided);
  bool any = false;
  for (int s = 0; s < 3; ++s) {
    const int id = aided("zero" + std::to_string(s) + ".w");
    for (float v : tp.grad(id).v) any = any || v != 0.0f;
  }
  CHECK(any);
}
