#include "segsr/selftest.hpp"

#include <cmath>
#include <functional>

#include "segsr/sampler.hpp"
#include "segsr/trainer.hpp"

namespace segsr {

namespace {

struct Check {
  std::ostream& out;
  int failures = 0;

  void operator()(const std::string& name, bool ok) {
    out << (ok ? "  ok   " : "  FAIL ") << name << "\n";
    if (!ok) ++failures;
  }
};

NetConfig tiny_net() {
  NetConfig n;
  n.hq = 16;
  n.lq = 4;
  n.mask = 4;
  n.K = 3;
  n.width = 8;
  n.temb = 8;
  n.tmlp = 16;
  n.gn_groups = 4;
  return n;
}

ModelSet tiny_models(uint64_t seed) {
  ModelSet m;
  m.net = tiny_net();
  m.at(Role::img_denoiser) = init_img_denoiser(m.net, seed);
  m.at(Role::img_controller) = init_img_controller(m.net, seed);
  m.at(Role::seg_backbone) = init_seg_backbone(m.net, seed);
  m.at(Role::seg_denoiser) = init_seg_denoiser(m.net, seed);
  m.at(Role::seg_controller) = init_seg_controller(m.net, m.at(Role::img_denoiser), seed);
  m.at(Role::img_aided) = init_img_aided(m.net, seed);
  return m;
}

// central finite differences on a sampled parameter subset, all in double
double gradcheck_max_err(const ParamStore& ps, const NetConfig& net,
                         const std::function<int(TapeD&, Bound<double>&)>& build, int max_coords,
                         uint64_t seed) {
  auto vals = param_values<double>(ps);
  auto eval = [&](const std::vector<TensorD>* override_vals, TensorD* grads_out,
                  std::vector<std::vector<double>>* grad_store) {
    TapeD tp;
    Bound<double> b(tp, ps, true, override_vals ? override_vals : &vals);
    const int loss = build(tp, b);
    if (grad_store) {
      tp.backward(loss);
      grad_store->clear();
      for (size_t i = 0; i < ps.params.size(); ++i) {
        if (b.bound(int(i)))
          grad_store->push_back(tp.grad(b.ids[i]).v);
        else
          grad_store->push_back(std::vector<double>(size_t(ps.params[i].second.numel()), 0.0));
      }
    }
    (void)grads_out;
    return double(tp.val(loss).v[0]);
  };

  std::vector<std::vector<double>> analytic;
  eval(nullptr, nullptr, &analytic);

  // vector-norm relative error over a sampled coordinate subset
  Rng rng(seed);
  const double h = 1e-3;
  int64_t total = 0;
  for (const auto& p : ps.params) total += p.second.numel();
  const int coords = int(std::min<int64_t>(max_coords, total));
  double sq_diff = 0.0, sq_fd = 0.0, sq_an = 0.0;
  for (int c = 0; c < coords; ++c) {
    const size_t pi = size_t(rng.below(ps.params.size()));
    const size_t ei = size_t(rng.below(uint64_t(ps.params[pi].second.numel())));
    std::vector<TensorD> pert = vals;
    pert[pi].v[ei] += h;
    const double up = eval(&pert, nullptr, nullptr);
    pert[pi].v[ei] = vals[pi].v[ei] - h;
    const double dn = eval(&pert, nullptr, nullptr);
    const double fd = (up - dn) / (2 * h);
    const double an = analytic[pi][ei];
    sq_diff += (fd - an) * (fd - an);
    sq_fd += fd * fd;
    sq_an += an * an;
  }
  return std::sqrt(sq_diff) / std::max({std::sqrt(sq_fd), std::sqrt(sq_an), 1e-12});
}

}  // namespace

int selftest(std::ostream& out) {
  Check check{out};

  // schedule oracles
  {
    auto g = build_gaussian_schedule(2, 0.1, 0.3);
    check("gaussian alpha_bar hand product",
          std::abs(g.alpha_bars[0] - 0.9) < 1e-15 && std::abs(g.alpha_bars[1] - 0.63) < 1e-15);
    auto g2 = build_gaussian_schedule(1000, 1e-4, 0.02);
    bool dec = true;
    for (int t = 1; t < 1000; ++t) dec = dec && g2.alpha_bars[size_t(t)] < g2.alpha_bars[size_t(t - 1)];
    check("gaussian alpha_bar decreasing, tiny tail", dec && g2.alpha_bars[999] < 5e-5);
  }
  {
    auto d = build_discrete_schedule(60, 3, 0.02, 0.5);
    double worst = 0.0;
    for (int t = 1; t <= 60; ++t) {
      const auto qb = d.q_bar(t);
      const double ab = d.alpha_bar(t);
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) {
          const double closed = (i == k ? ab : 0.0) + (1.0 - ab) / 3.0;
          worst = std::max(worst, std::abs(qb[size_t(i) * 3 + k] - closed));
        }
    }
    check("discrete cumulative matches the uniform-kernel closed form", worst < 1e-10);
  }
  {
    // brute-force Bayes for K=3, T=4 against discrete_posterior
    auto d = build_discrete_schedule(4, 3, 0.2, 0.6);
    double worst = 0.0;
    for (int t = 1; t <= 4; ++t)
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) {
          // chain products from single-step matrices only
          std::vector<double> reach = {i == 0 ? 1.0 : 0.0, i == 1 ? 1.0 : 0.0, i == 2 ? 1.0 : 0.0};
          for (int step = 1; step <= t - 1; ++step) {
            std::vector<double> nxt(3, 0.0);
            for (int a = 0; a < 3; ++a)
              for (int b = 0; b < 3; ++b) nxt[size_t(b)] += reach[size_t(a)] * d.q(step)[size_t(a) * 3 + b];
            reach = nxt;
          }
          std::vector<double> post(3);
          double z = 0;
          for (int j = 0; j < 3; ++j) {
            post[size_t(j)] = reach[size_t(j)] * d.q(t)[size_t(j) * 3 + k];
            z += post[size_t(j)];
          }
          for (auto& v : post) v /= z;

          MaskState s_t;
          s_t.classes = IntField(1, 1);
          s_t.classes.v[0] = k;
          s_t.t = t;
          TensorF probs({3, 1, 1});
          probs.v[size_t(i)] = 1.0f;
          TensorF got = discrete_posterior(d, s_t, probs, t);
          for (int j = 0; j < 3; ++j) worst = std::max(worst, std::abs(double(got.v[size_t(j)]) - post[size_t(j)]));
        }
    check("discrete posterior matches brute-force Bayes (K=3, T=4)", worst < 1e-6);
  }
  {
    auto g = build_gaussian_schedule(10, 0.02, 0.2);
    TensorF z({1}, {0.8f});
    TensorF eh({1}, {0.0f});
    TensorF a = ddim_step(g, z, eh, 5, 3, 0.0, nullptr);
    TensorF b = ddim_step(g, z, eh, 5, 3, 0.0, nullptr);
    check("ddim eta=0 is pure (bit-identical)", a.v[0] == b.v[0]);
    TensorF eh2({1}, {0.3f});
    TensorF fin = ddim_step(g, z, eh2, 0, -1, 0.0, nullptr);
    const double ab = g.alpha_bar(0);
    const double z0 = (0.8 - std::sqrt(1 - ab) * 0.3) / std::sqrt(ab);
    check("ddim final step returns z0_hat", std::abs(double(fin.v[0]) - z0) < 1e-6);
  }
  {
    auto e = time_embedding<float>(0, 4);
    check("time embedding at t=0",
          e.v[0] == 0.0f && e.v[1] == 0.0f && e.v[2] == 1.0f && e.v[3] == 1.0f);
  }

  // gradient checks (double)
  {
    NetConfig net = tiny_net();
    Rng rng(7);
    ParamStore zc;
    zc.role = Role::img_aided;
    ParamBuilder pb{zc, rng};
    pb.conv("z", 4, 4, 1, true);
    TensorD x({4, 3, 3});
    for (auto& v : x.v) v = rng.normal();
    const double e1 = gradcheck_max_err(zc, net, [&](TapeD& tp, Bound<double>& b) {
      return tp.sum(tp.conv2d(tp.leaf(x), b("z.w"), b("z.b"), 1, 0));
    }, 64, 11);
    check("gradcheck zero conv", e1 < 1e-3);

    ParamStore rb;
    rb.role = Role::img_denoiser;
    ParamBuilder pb2{rb, rng};
    pb2.res_block("r", 4, 4, net.tmlp);
    TensorD x2({4, 4, 4});
    for (auto& v : x2.v) v = rng.normal();
    TensorD w2({4, 4, 4});
    for (auto& v : w2.v) v = rng.normal();
    const double e2 = gradcheck_max_err(rb, net, [&](TapeD& tp, Bound<double>& b) {
      int temb = tp.leaf(Tensor<double>::full({net.tmlp}, 0.3));
      int y = res_block_fwd(tp, b, "r", tp.leaf(x2), temb, 4, 4, 4);
      return tp.dot_const(y, w2);
    }, 160, 13);
    check("gradcheck residual block", e2 < 1e-3);
  }

  // zero-init transparency + determinism at tiny geometry
  {
    ModelSet m = tiny_models(99);
    const NetConfig& net = m.net;
    Rng rng(5);
    TensorF z({net.img_ch, net.hq, net.hq});
    for (auto& v : z.v) v = float(rng.normal());
    IntField mask(net.mask, net.mask);
    for (auto& v : mask.v) v = int32_t(rng.below(uint64_t(net.K)));

    TapeF tp;
    tp.grad_enabled = false;
    BoundModels bm(tp, m, {});
    int z_id = tp.leaf(z);
    int srep = tp.leaf(one_hot(mask, net.K));
    auto C = seg_controller_fwd(tp, bm.at(Role::seg_controller), srep, z_id, 3, net);
    int with_c = img_denoiser_fwd<float>(tp, bm.at(Role::img_denoiser), z_id, 3, net, nullptr, &C);
    int without = img_denoiser_fwd<float>(tp, bm.at(Role::img_denoiser), z_id, 3, net, nullptr,
                                          nullptr);
    float worst = 0.0f;
    for (int64_t i = 0; i < tp.val(with_c).numel(); ++i)
      worst = std::max(worst, std::abs(tp.val(with_c).v[size_t(i)] - tp.val(without).v[size_t(i)]));
    check("fresh bridge is transparent to the denoiser", worst <= 1e-7f);

    TensorF lq({net.img_ch, net.lq, net.lq});
    for (auto& v : lq.v) v = float(rng.uniform());
    SampleOptions opt;
    opt.steps = 4;
    opt.eta = 1.0;
    opt.seed = 21;
    Schedules sch;
    sch.g = build_gaussian_schedule(40, 1e-3, 0.05);
    sch.d = build_discrete_schedule(40, net.K, 0.02, 0.5);
    SampleResult coupled = coupled_sample(m, sch, lq, opt);
    SampleResult plain = srdm_only_sample(m, sch, lq, MaskSource::none, nullptr, opt);
    worst = 0.0f;
    for (int64_t i = 0; i < coupled.image.numel(); ++i)
      worst = std::max(worst, std::abs(coupled.image.v[size_t(i)] - plain.image.v[size_t(i)]));
    check("fresh bridge: coupled sampling equals unconditioned sampling", worst <= 1e-7f);

    SampleResult again = coupled_sample(m, sch, lq, opt);
    check("sampling is deterministic under a fixed seed",
          again.image.v == coupled.image.v && again.mask_small == coupled.mask_small);
  }

  out << (check.failures == 0 ? "selftest: all checks passed\n"
                              : "selftest: " + std::to_string(check.failures) + " check(s) FAILED\n");
  return check.failures;
}

}  // namespace segsr
