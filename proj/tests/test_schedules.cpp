#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"

using namespace segsr;
using namespace segsr::testutil;

TEST_CASE("gaussian schedule hand values and invariants") {
  auto one = build_gaussian_schedule(1, 0.1, 0.1);
  CHECK(one.betas == std::vector<double>{0.1});
  CHECK(one.alpha_bars[0] == doctest::Approx(0.9).epsilon(1e-15));

  auto two = build_gaussian_schedule(2, 0.1, 0.3);
  CHECK(two.alpha_bars[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(two.alpha_bars[1] == doctest::Approx(0.63).epsilon(1e-15));

  auto big = build_gaussian_schedule(1000, 1e-4, 0.02);
  double prod = 1.0;
  for (int t = 0; t < 1000; ++t) {
    CHECK(big.betas[size_t(t)] > 0.0);
    CHECK(big.betas[size_t(t)] < 1.0);
    prod *= 1.0 - big.betas[size_t(t)];
    CHECK(std::abs(big.alpha_bars[size_t(t)] - prod) <= 1e-12 * prod);
    if (t > 0) CHECK(big.alpha_bars[size_t(t)] < big.alpha_bars[size_t(t - 1)]);
  }
  CHECK(big.alpha_bars[999] < 5e-5);
  CHECK(big.betas.front() == doctest::Approx(1e-4));
  CHECK(big.betas.back() == doctest::Approx(0.02));

  CHECK_THROWS_AS(build_gaussian_schedule(0, 0.1, 0.2), error);
  CHECK_THROWS_AS(build_gaussian_schedule(10, 0.0, 0.2), error);
  CHECK_THROWS_AS(build_gaussian_schedule(10, 0.3, 0.2), error);
  CHECK_THROWS_AS(build_gaussian_schedule(10, 0.3, 1.0), error);
  CHECK_THROWS_AS(build_gaussian_schedule(10, 0.1, 0.2, "cosine"), error);
}

TEST_CASE("q_sample_continuous closed form") {
  // schedule with alpha_bar[0] = 0.25
  auto g = build_gaussian_schedule(1, 0.75, 0.75);
  TensorF z0({1}, {1.0f}), eps0({1}, {0.0f});
  CHECK(q_sample_continuous(g, z0, 0, eps0).v[0] == doctest::Approx(0.5));
  TensorF z1({1}, {0.0f}), eps1({1}, {1.0f});
  CHECK(q_sample_continuous(g, z1, 0, eps1).v[0] == doctest::Approx(std::sqrt(0.75)));

  TensorF bad({2}, {0.f, 0.f});
  CHECK_THROWS_AS(q_sample_continuous(g, z0, 0, bad), error);
  CHECK_THROWS_AS(q_sample_continuous(g, z0, 1, eps0), error);
}

TEST_CASE("q_sample_continuous monte-carlo variance") {
  // alpha_bar = 0.9 -> variance of the noise term is 0.1
  auto g = build_gaussian_schedule(1, 0.1, 0.1);
  Rng rng(42);
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  TensorF z0({1}, {0.0f});
  for (int i = 0; i < n; ++i) {
    TensorF eps({1}, {float(rng.normal())});
    const double v = q_sample_continuous(g, z0, 0, eps).v[0];
    sum += v;
    sumsq += v * v;
  }
  const double var = sumsq / n - (sum / n) * (sum / n);
  CHECK(var == doctest::Approx(0.1).epsilon(0.02));
}

TEST_CASE("marginal composition: iterated single-step corruption matches the closed form") {
  Rng meta(7);
  for (int rep = 0; rep < 3; ++rep) {
    const int T = 4 + int(meta.below(13));  // T <= 16
    const int t = int(meta.below(uint64_t(T)));
    auto g = build_gaussian_schedule(T, 0.05, 0.3);
    Rng rng(mix64(100, uint64_t(rep)));
    const double z0 = 0.7;
    const int n = 100000;
    double s1 = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      double z = z0;
      for (int step = 0; step <= t; ++step)
        z = std::sqrt(1.0 - g.betas[size_t(step)]) * z +
            std::sqrt(g.betas[size_t(step)]) * rng.normal();
      s1 += z;
      s2 += z * z;
    }
    const double mean = s1 / n;
    const double var = s2 / n - mean * mean;
    const double ab = g.alpha_bars[size_t(t)];
    CHECK(mean == doctest::Approx(std::sqrt(ab) * z0).epsilon(0.01));
    CHECK(var == doctest::Approx(1.0 - ab).epsilon(0.01));
  }
}

TEST_CASE("ddim_step trivial cases and purity") {
  auto g = build_gaussian_schedule(10, 0.02, 0.2);
  Rng rng(3);
  TensorF z({4}, {0.3f, -0.2f, 1.4f, 0.05f});
  TensorF eh_zero({4});

  SUBCASE("eps_hat = 0, eta = 0 collapses to the alpha_bar ratio") {
    TensorF out = ddim_step(g, z, eh_zero, 7, 4, 0.0, nullptr);
    const float c = float(std::sqrt(g.alpha_bar(4) / g.alpha_bar(7)));
    for (int i = 0; i < 4; ++i) CHECK(out.v[size_t(i)] == doctest::Approx(c * z.v[size_t(i)]));
  }
  SUBCASE("final step returns z0_hat") {
    TensorF eh = random_tensor({4}, rng);
    TensorF out = ddim_step(g, z, eh, 0, -1, 0.0, nullptr);
    const double ab = g.alpha_bar(0);
    for (int i = 0; i < 4; ++i)
      CHECK(out.v[size_t(i)] ==
            doctest::Approx((z.v[size_t(i)] - std::sqrt(1 - ab) * eh.v[size_t(i)]) / std::sqrt(ab)));
  }
  SUBCASE("eta = 0 is bit-identical across calls") {
    TensorF eh = random_tensor({4}, rng);
    TensorF a = ddim_step(g, z, eh, 9, 5, 0.0, nullptr);
    TensorF b = ddim_step(g, z, eh, 9, 5, 0.0, nullptr);
    CHECK(a.v == b.v);
  }
  SUBCASE("noise contract") {
    CHECK_THROWS_AS(ddim_step(g, z, eh_zero, 4, 7, 0.0, nullptr), error);  // order
    CHECK_THROWS_AS(ddim_step(g, z, eh_zero, 7, 4, 1.0, nullptr), error);  // missing noise
    TensorF noise = random_tensor({4}, rng);
    CHECK_THROWS_AS(ddim_step(g, z, eh_zero, 7, 4, 0.0, &noise), error);   // unwanted noise
    CHECK_THROWS_AS(ddim_step(g, z, eh_zero, 7, 0, 1.0, &noise), error);   // t_prev = 0 takes none
    CHECK_NOTHROW(ddim_step(g, z, eh_zero, 7, 0, 1.0, nullptr));
  }
}

TEST_CASE("eta=1 full-step DDIM matches ancestral DDPM in mean and variance") {
  auto g = build_gaussian_schedule(10, 0.02, 0.25);
  auto eps_fn = [](double z, int) { return 0.4 * z; };
  const int n = 100000;

  double sd1 = 0, sd2 = 0, sa1 = 0, sa2 = 0;
  Rng rng_d(11), rng_a(12);
  for (int i = 0; i < n; ++i) {
    // DDIM chain over every index with eta = 1
    double z = 1.0 + rng_d.normal();
    for (int t = 9; t >= 0; --t) {
      const int t_prev = t - 1 >= 0 ? t - 1 : 0;
      if (t == 0) break;
      TensorF zt({1}, {float(z)});
      TensorF eh({1}, {float(eps_fn(z, t))});
      TensorF noise({1}, {0.0f});
      const bool wants = t_prev > 0;
      if (wants) noise.v[0] = float(rng_d.normal());
      z = ddim_step(g, zt, eh, t, t_prev, 1.0, wants ? &noise : nullptr).v[0];
    }
    sd1 += z;
    sd2 += z * z;

    double za = ancestral_chain(g, eps_fn, 1.0 + rng_a.normal(), rng_a);
    sa1 += za;
    sa2 += za * za;
  }
  const double md = sd1 / n, vd = sd2 / n - md * md;
  const double ma = sa1 / n, va = sa2 / n - ma * ma;
  CHECK(std::abs(md - ma) <= 0.02 * std::max(std::sqrt(vd), std::sqrt(va)));
  CHECK(vd == doctest::Approx(va).epsilon(0.02));
}

TEST_CASE("discrete schedule structure") {
  SUBCASE("K=2 beta=0.1 single-step matrix") {
    auto d = build_discrete_schedule(1, 2, 0.1, 0.1);
    const auto& q = d.q(1);
    CHECK(q[0] == doctest::Approx(0.95).epsilon(1e-14));
    CHECK(q[1] == doctest::Approx(0.05).epsilon(1e-14));
    CHECK(q[2] == doctest::Approx(0.05).epsilon(1e-14));
    CHECK(q[3] == doctest::Approx(0.95).epsilon(1e-14));
  }
  SUBCASE("vanishing beta gives the identity kernel") {
    auto d = build_discrete_schedule(1, 5, 1e-300, 1e-300);
    const auto& q = d.q(1);
    for (int i = 0; i < 5; ++i)
      for (int k = 0; k < 5; ++k) CHECK(q[size_t(i) * 5 + k] == doctest::Approx(i == k ? 1.0 : 0.0));
  }
  SUBCASE("K=3 two-step cumulative matches an explicit product") {
    auto d = build_discrete_schedule(2, 3, 0.5, 0.5);
    const auto& q = d.q(1);
    std::vector<double> expect(9, 0.0);
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k)
        for (int j = 0; j < 3; ++j)
          expect[size_t(i) * 3 + k] += q[size_t(i) * 3 + j] * d.q(2)[size_t(j) * 3 + k];
    const auto qb = d.q_bar(2);
    for (int i = 0; i < 9; ++i) CHECK(qb[size_t(i)] == doctest::Approx(expect[size_t(i)]).epsilon(1e-12));
  }
  SUBCASE("row sums, closed form and uniform tail at defaults") {
    auto d = build_discrete_schedule(1000, 6, 0.02, 0.5);
    for (int t : {1, 7, 100, 1000}) {
      const auto qb = d.q_bar(t);
      const double ab = d.alpha_bar(t);
      for (int i = 0; i < 6; ++i) {
        double row = 0.0;
        for (int k = 0; k < 6; ++k) {
          row += qb[size_t(i) * 6 + k];
          const double closed = (i == k ? ab : 0.0) + (1.0 - ab) / 6.0;
          CHECK(std::abs(qb[size_t(i) * 6 + k] - closed) < 1e-10);
        }
        CHECK(std::abs(row - 1.0) < 1e-10);
      }
    }
    const auto last = d.q_bar(1000);
    for (double v : last) CHECK(std::abs(v - 1.0 / 6.0) < 0.05);
  }
  CHECK_THROWS_AS(build_discrete_schedule(4, 1, 0.1, 0.2), error);
}

TEST_CASE("q_sample_discrete determinism, identity and frequencies") {
  SUBCASE("near-zero betas reproduce s0") {
    auto d = build_discrete_schedule(3, 4, 1e-300, 1e-300);
    Rng rng(5);
    MaskState s0;
    s0.classes = random_mask(6, 6, 4, rng);
    Rng r1(9);
    MaskState out = q_sample_discrete(d, s0, 3, r1);
    CHECK(out.t == 3);
    CHECK(out.classes == s0.classes);
  }
  SUBCASE("same seed, same draw") {
    auto d = build_discrete_schedule(8, 3, 0.1, 0.4);
    Rng rng(5);
    MaskState s0;
    s0.classes = random_mask(8, 8, 3, rng);
    Rng r1(77), r2(77);
    CHECK(q_sample_discrete(d, s0, 5, r1).classes == q_sample_discrete(d, s0, 5, r2).classes);
    MaskState noisy = q_sample_discrete(d, s0, 5, r1);
    noisy.t = 0;  // not a clean state
    CHECK_THROWS_AS(q_sample_discrete(d, MaskState{noisy.classes, 5}, 5, r1), error);
  }
  SUBCASE("near-uniform cumulative gives ~50/50 class frequencies for K=2") {
    auto d = build_discrete_schedule(64, 2, 0.2, 0.5);
    MaskState s0;
    s0.classes = IntField(250, 400);  // 1e5 pixels, all class 0
    Rng rng(123);
    MaskState out = q_sample_discrete(d, s0, 64, rng);
    int64_t ones = 0;
    for (auto v : out.classes.v) ones += v;
    const double freq = double(ones) / double(out.classes.numel());
    CHECK(freq == doctest::Approx(0.5).epsilon(0.02));
  }
  SUBCASE("marginal composition: iterated single-step draws match Q_bar rows") {
    auto d = build_discrete_schedule(6, 3, 0.08, 0.35);
    const int t = 5;
    const int n = 100000;
    Rng rng(314);
    std::array<int64_t, 3> counts{};
    for (int i = 0; i < n; ++i) {
      int s = 1;  // start from class 1
      for (int step = 1; step <= t; ++step) {
        const auto& q = d.q(step);
        std::span<const double> row(q.data() + size_t(s) * 3, 3);
        s = int(rng.categorical(row));
      }
      counts[size_t(s)]++;
    }
    const auto qb = d.q_bar(t);
    for (int k = 0; k < 3; ++k) {
      const double got = double(counts[size_t(k)]) / n;
      CHECK(std::abs(got - qb[size_t(1) * 3 + k]) < 0.01);
    }
  }
}

TEST_CASE("discrete posterior equals brute-force Bayes for all K <= 4, T <= 10") {
  // the acceptance criterion at full breadth; cheap (matrices are tiny)
  for (int K = 2; K <= 4; ++K)
    for (int T = 2; T <= 10; ++T) {
      auto d = build_discrete_schedule(T, K, 0.07, 0.45);
      for (int t = 1; t <= T; ++t)
        for (int i = 0; i < K; ++i)
          for (int k = 0; k < K; ++k) {
            const auto expect = brute_posterior(d, i, k, t);
            MaskState s_t;
            s_t.classes = IntField(1, 1);
            s_t.classes.v[0] = k;
            s_t.t = t;
            TensorF probs({K, 1, 1});
            probs.v[size_t(i)] = 1.0f;
            TensorF got = discrete_posterior(d, s_t, probs, t);
            for (int j = 0; j < K; ++j)
              CHECK(std::abs(double(got.v[size_t(j)]) - expect[size_t(j)]) < 1e-6);
          }
    }
}

TEST_CASE("discrete posterior mixtures and edge cases") {
  auto d = build_discrete_schedule(10, 3, 0.1, 0.4);
  SUBCASE("t=1 with one-hot s0 is a delta on s0") {
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) {
        MaskState s_t;
        s_t.classes = IntField(1, 1);
        s_t.classes.v[0] = k;
        s_t.t = 1;
        TensorF probs({3, 1, 1});
        probs.v[size_t(i)] = 1.0f;
        TensorF got = discrete_posterior(d, s_t, probs, 1);
        for (int j = 0; j < 3; ++j)
          CHECK(got.v[size_t(j)] == doctest::Approx(j == i ? 1.0 : 0.0).epsilon(1e-8));
      }
  }
  SUBCASE("uniform s0 with a near-uniform kernel stays near uniform") {
    auto du = build_discrete_schedule(2, 3, 0.999, 0.999);
    MaskState s_t;
    s_t.classes = IntField(1, 1);
    s_t.classes.v[0] = 1;
    s_t.t = 2;
    TensorF probs = TensorF::full({3, 1, 1}, 1.0f / 3.0f);
    TensorF got = discrete_posterior(du, s_t, probs, 2);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(double(got.v[size_t(j)]) - 1.0 / 3.0) < 1e-3);
  }
  SUBCASE("posterior rows sum to one for random mixtures") {
    Rng rng(8);
    MaskState s_t;
    s_t.classes = random_mask(4, 4, 3, rng);
    s_t.t = 6;
    TensorF probs({3, 4, 4});
    for (int64_t p = 0; p < 16; ++p) {
      double z = 0;
      for (int k = 0; k < 3; ++k) z += (probs.v[size_t(k) * 16 + p] = float(0.05 + rng.uniform()));
      for (int k = 0; k < 3; ++k) probs.v[size_t(k) * 16 + p] /= float(z);
    }
    TensorF got = discrete_posterior(d, s_t, probs, 6);
    for (int64_t p = 0; p < 16; ++p) {
      double row = 0;
      for (int k = 0; k < 3; ++k) row += double(got.v[size_t(k) * 16 + p]);
      CHECK(std::abs(row - 1.0) < 1e-6);
    }
  }
  SUBCASE("spaced posterior agrees with the adjacent one for t_prev = t-1") {
    Rng rng(8);
    MaskState s_t;
    s_t.classes = random_mask(3, 3, 3, rng);
    s_t.t = 7;
    TensorF probs = TensorF::full({3, 3, 3}, 1.0f / 3.0f);
    TensorF a = discrete_posterior(d, s_t, probs, 7);
    TensorF b = discrete_posterior_spaced(d, s_t, probs, 7, 6);
    for (int64_t i = 0; i < a.numel(); ++i)
      CHECK(a.v[size_t(i)] == doctest::Approx(b.v[size_t(i)]).epsilon(1e-5));
  }
}

TEST_CASE("timestep spacing") {
  auto sp = timestep_spacing(1000, 50);
  REQUIRE(sp.size() == 50);
  CHECK(sp.front() == 980);
  CHECK(sp.back() == 0);
  for (size_t i = 1; i < sp.size(); ++i) CHECK(sp[i - 1] - sp[i] == 20);

  auto all = timestep_spacing(10, 10);
  for (int i = 0; i < 10; ++i) CHECK(all[size_t(i)] == 9 - i);

  auto two = timestep_spacing(10, 2);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == 5);  // stride floor(T/steps)
  CHECK(two[1] == 0);

  CHECK_THROWS_AS(timestep_spacing(10, 0), error);
  CHECK_THROWS_AS(timestep_spacing(10, 11), error);
}
