#include <doctest.h>

#include <cmath>
#include <numeric>

#include "spdelab/integrals.hpp"
#include "spdelab/rng.hpp"

using namespace spdelab;

namespace {

/// Smooth compactly supported 1-argument factor: bump in time around t0 of
/// half-width wt, times a spatial profile cos(2 pi m x).
ScalarSlot smooth_slot(double t0, double wt, int mode = 0, double amp = 1.0,
                       int power = 2) {
  ScalarSlot s;
  s.box = {t0 - wt, t0 + wt, 0.5};
  s.f = [t0, wt, mode, amp, power](const Displacement& z) {
    double u = (z.t - t0) / wt;
    if (std::fabs(u) >= 1.0) return 0.0;
    double b = std::pow(1.0 - u * u, power);
    return amp * b * std::cos(2.0 * M_PI * mode * z.x[0]);
  };
  return s;
}

ScalarSlot box_slot(double t0, double t1, double x0, double xw) {
  ScalarSlot s;
  s.box = {t0, t1, 0.5};
  s.f = [t0, t1, x0, xw](const Displacement& z) {
    double dx = z.x[0] - x0;
    dx -= std::round(dx);
    return (z.t >= t0 && z.t <= t1 && std::fabs(dx) <= xw) ? 1.0 : 0.0;
  };
  return s;
}

MartingaleField two_jump_field(const GridSpec& g) {
  std::vector<JumpRecord> jumps;
  jumps.push_back({0.3, 1, 0, 1});
  jumps.push_back({0.6, 2, 0, -1});
  return MartingaleField(NoiseSpec{}, g, std::move(jumps));
}

Contraction make_gamma(int n, std::vector<std::vector<int>> blocks,
                       std::vector<bool> flags) {
  Contraction g;
  for (int i = 0; i < n; ++i) g.vertices.push_back({0, i, 0});
  g.blocks = std::move(blocks);
  g.flagged = std::move(flags);
  g.canonicalize();
  return g;
}

}  // namespace

TEST_CASE("ito integral basics") {
  GridSpec g(1, 0.25, 1.0);
  MartingaleField M = two_jump_field(g);

  SUBCASE("zero integrand") {
    ScalarSlot z = smooth_slot(0.5, 0.2, 0, 0.0);
    GridFunction f = GridFunction::tensor({z});
    CHECK(ito_integral(M, 0, f, 1.0).value == 0.0);
  }

  SUBCASE("single jump with an indicator around it") {
    GridFunction f = GridFunction::tensor({box_slot(0.25, 0.35, 0.25, 0.05)});
    // eps^d * eps^{1-d/2} = 0.25 * 0.5
    CHECK(ito_integral(M, 0, f, 1.0).value == doctest::Approx(0.25 * 0.5));
    // before the jump the integral vanishes
    CHECK(ito_integral(M, 0, f, 0.2).value == 0.0);
  }

  SUBCASE("linearity in f") {
    GridFunction f1 = GridFunction::tensor({smooth_slot(0.4, 0.35, 1)});
    GridFunction f2 = GridFunction::tensor({smooth_slot(0.5, 0.3, 2)});
    auto comb = smooth_slot(0.4, 0.35, 1);
    auto s2 = smooth_slot(0.5, 0.3, 2);
    ScalarSlot both;
    both.box = {0.05, 0.8, 0.5};
    auto f1f = comb.f;
    auto f2f = s2.f;
    both.f = [f1f, f2f](const Displacement& z) { return 2.0 * f1f(z) - 3.0 * f2f(z); };
    GridFunction fc = GridFunction::tensor({both});
    double lhs = ito_integral(M, 0, fc, 1.0).value;
    double rhs = 2.0 * ito_integral(M, 0, f1, 1.0).value -
                 3.0 * ito_integral(M, 0, f2, 1.0).value;
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-13));
  }
}

TEST_CASE("ito isometry monte carlo") {
  GridSpec g(1, 1.0 / 8, 0.6);
  GridFunction f = GridFunction::tensor({smooth_slot(0.25, 0.2, 1)});
  const double target = l2_eps_norm(f, g);
  const int R = 4000;
  double acc = 0.0, acc2 = 0.0;
  for (int r = 0; r < R; ++r) {
    MartingaleField M = sample_field(NoiseSpec{}, g, 10000 + r);
    double v = ito_integral(M, 0, f, 0.6).value;
    acc += v * v;
    acc2 += v * v * v * v;
  }
  const double mean = acc / R;
  const double se = std::sqrt((acc2 / R - mean * mean) / R);
  CHECK(std::fabs(mean - target * target) <= 5.0 * se);
}

TEST_CASE("multiple integral on a two-jump path, hand unrolled") {
  GridSpec g(1, 0.25, 1.0);
  MartingaleField M = two_jump_field(g);
  // first factor around the earlier jump (site 1 <-> x=0.25), second around
  // the later one (site 2 <-> x=0.5).
  GridFunction f = GridFunction::tensor(
      {box_slot(0.25, 0.35, 0.25, 0.05), box_slot(0.55, 0.65, 0.5, 0.05)});
  int labels[] = {0, 0};
  double got = multiple_integral(M, std::span<const int>(labels, 2), f, 1.0).value;
  const double m = M.magnitude();
  // eps^{2d} g(z1) h(z2) dM1 dM2, one recursion branch surviving
  CHECK(got == doctest::Approx(0.25 * 0.25 * m * (-m)).epsilon(1e-13));

  SUBCASE("vanishes when supports avoid the jumps") {
    GridFunction f0 = GridFunction::tensor(
        {box_slot(0.0, 0.1, 0.25, 0.05), box_slot(0.4, 0.5, 0.5, 0.05)});
    CHECK(multiple_integral(M, std::span<const int>(labels, 2), f0, 1.0).value == 0.0);
  }

  SUBCASE("constant beyond the support of f") {
    double at_support_end =
        multiple_integral(M, std::span<const int>(labels, 2), f, 0.66).value;
    double at_horizon =
        multiple_integral(M, std::span<const int>(labels, 2), f, 1.0).value;
    CHECK(at_support_end == doctest::Approx(at_horizon));
  }
}

TEST_CASE("multiple integral DP agrees with direct enumeration") {
  GridSpec g(1, 0.25, 0.8);
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    MartingaleField M = sample_field(NoiseSpec{}, g, seed);
    GridFunction f2 = GridFunction::tensor(
        {smooth_slot(0.2, 0.2, 1), smooth_slot(0.35, 0.3, 2)});
    GridFunction f3 = GridFunction::tensor({smooth_slot(0.2, 0.2, 1),
                                            smooth_slot(0.35, 0.3, 2),
                                            smooth_slot(0.3, 0.25, 0)});
    int l2[] = {0, 0};
    int l3[] = {0, 0, 0};
    for (double t : {0.3, 0.55, 0.8}) {
      double a2 = multiple_integral(M, std::span<const int>(l2, 2), f2, t).value;
      double b2 = multiple_integral_direct(M, std::span<const int>(l2, 2), f2, t).value;
      CHECK(a2 == doctest::Approx(b2).epsilon(1e-10));
      double a3 = multiple_integral(M, std::span<const int>(l3, 3), f3, t).value;
      double b3 = multiple_integral_direct(M, std::span<const int>(l3, 3), f3, t).value;
      CHECK(a3 == doctest::Approx(b3).epsilon(1e-10));
    }
  }
}

TEST_CASE("multiple integral symmetry under simultaneous permutation") {
  GridSpec g(1, 0.25, 0.8);
  NoiseSpec spec;
  spec.components = 2;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    MartingaleField M(spec, g, seed);
    auto a = smooth_slot(0.2, 0.18, 1);
    auto b = smooth_slot(0.4, 0.3, 2);
    GridFunction fab = GridFunction::tensor({a, b});
    GridFunction fba = GridFunction::tensor({b, a});
    int lab[] = {0, 1};
    int lba[] = {1, 0};
    double va = multiple_integral(M, std::span<const int>(lab, 2), fab, 0.8).value;
    double vb = multiple_integral(M, std::span<const int>(lba, 2), fba, 0.8).value;
    CHECK(va == doctest::Approx(vb).epsilon(1e-10));
  }
}

TEST_CASE("gamma integral consistency") {
  GridSpec g(1, 0.25, 0.8);

  SUBCASE("all singletons equals the multiple integral") {
    Contraction gamma = make_gamma(2, {{0}, {1}}, {true, true});
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      MartingaleField M = sample_field(NoiseSpec{}, g, seed);
      GridFunction f = GridFunction::tensor(
          {smooth_slot(0.2, 0.2, 1), smooth_slot(0.35, 0.3, 2)});
      int l2[] = {0, 0};
      double mi = multiple_integral(M, std::span<const int>(l2, 2), f, 0.8).value;
      double gi = gamma_integral(M, gamma, f, 0.8).value;
      CHECK(gi == doctest::Approx(mi).epsilon(1e-10));
    }
  }

  SUBCASE("odd triple block reduces to eps^{|s|} times an ito integral") {
    Contraction gamma = make_gamma(3, {{0, 1, 2}}, {true});
    const int snorm = g.scaling.s_norm_order();
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      MartingaleField M = sample_field(NoiseSpec{}, g, seed);
      auto s = smooth_slot(0.3, 0.28, 1);
      GridFunction f3 = GridFunction::tensor({s, s, s});
      auto sf = s.f;
      ScalarSlot cube;
      cube.box = s.box;
      cube.f = [sf](const Displacement& z) {
        double v = sf(z);
        return v * v * v;
      };
      GridFunction diag = GridFunction::tensor({cube});
      double gi = gamma_integral(M, gamma, f3, 0.8).value;
      double ito = ito_integral(M, 0, diag, 0.8).value;
      double expect = std::pow(g.eps, snorm) * ito;
      CHECK(gi == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  SUBCASE("DP agrees with direct enumeration on bracket-only contractions") {
    Contraction pair = make_gamma(2, {{0, 1}}, {false});
    Contraction mixed = make_gamma(3, {{0, 1}, {2}}, {false, true});
    for (std::uint64_t seed = 1; seed <= 15; ++seed) {
      MartingaleField M = sample_field(NoiseSpec{}, g, seed);
      GridFunction f2 = GridFunction::tensor(
          {smooth_slot(0.25, 0.22, 1), smooth_slot(0.3, 0.27, 0)});
      GridFunction f3 = GridFunction::tensor({smooth_slot(0.25, 0.22, 1),
                                              smooth_slot(0.3, 0.27, 0),
                                              smooth_slot(0.4, 0.3, 2)});
      double a = gamma_integral(M, pair, f2, 0.8).value;
      double b = gamma_integral_direct(M, pair, f2, 0.8).value;
      CHECK(a == doctest::Approx(b).epsilon(1e-10));
      double c = gamma_integral(M, mixed, f3, 0.8).value;
      double d = gamma_integral_direct(M, mixed, f3, 0.8).value;
      CHECK(c == doctest::Approx(d).epsilon(1e-10));
    }
  }

  SUBCASE("zero kernel gives zero") {
    Contraction gamma = make_gamma(2, {{0, 1}}, {true});
    MartingaleField M = sample_field(NoiseSpec{}, g, 5);
    GridFunction f = GridFunction::tensor(
        {smooth_slot(0.3, 0.2, 0, 0.0), smooth_slot(0.3, 0.2, 0, 0.0)});
    CHECK(gamma_integral(M, gamma, f, 0.8).value == 0.0);
  }

  SUBCASE("arity mismatch rejected") {
    Contraction gamma = make_gamma(2, {{0, 1}}, {false});
    MartingaleField M = sample_field(NoiseSpec{}, g, 5);
    GridFunction f = GridFunction::tensor({smooth_slot(0.3, 0.2, 0)});
    CHECK_THROWS(gamma_integral(M, gamma, f, 0.8));
  }
}

TEST_CASE("compensated pair block: quadrature against a hand computation") {
  GridSpec g(1, 0.25, 0.6);
  Contraction gamma = make_gamma(2, {{0, 1}}, {true});  // even block in F
  // Hat factor with a lattice-aligned interior kink: the squared integrand
  // keeps a first-derivative jump, so the trapezoid error has a genuine
  // O(h^2) term and oversampling gains are observable.
  ScalarSlot s;
  s.box = {0.125, 0.5, 0.5};
  s.f = [](const Displacement& z) {
    double v = 1.0 - std::fabs(z.t - 0.3125) / 0.1875;
    return v > 0.0 ? v : 0.0;
  };
  GridFunction f = GridFunction::tensor({s, s});
  auto sf = s.f;

  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    MartingaleField M = sample_field(NoiseSpec{}, g, seed);
    const double m = M.magnitude();
    double jump_part = 0.0;
    for (const auto& j : M.all_jumps()) {
      if (std::fabs(j.time) > 0.6) continue;
      Displacement z;
      z.t = j.time;
      z.x[0] = g.wrap(g.eps * static_cast<double>(j.site));
      double v = sf(z);
      jump_part += g.eps * v * v * g.eps * m * m;
    }
    // compensator rate for a flagged pair is eps^0 = 1; int hat^2 dt has the
    // closed form 2w/3 with half-width w.
    const double comp =
        g.eps * g.site_count() * (2.0 * 0.1875 / 3.0);
    const double hand = jump_part - comp;

    QuadratureOptions q1;
    q1.time_oversample = 1;
    QuadratureOptions q8;
    q8.time_oversample = 8;
    double v1 = gamma_integral(M, gamma, f, 0.6, q1).value;
    double v8 = gamma_integral(M, gamma, f, 0.6, q8).value;
    CHECK(std::fabs(v8 - hand) < std::fabs(v1 - hand));
    // order >= 1: oversampling by 8 gains at least a factor 4
    CHECK(std::fabs(v8 - hand) <= std::fabs(v1 - hand) / 4.0);
    CHECK(v8 == doctest::Approx(hand).epsilon(5e-4));
  }
}

TEST_CASE("chaos expansion") {
  GridSpec g(1, 1.0 / 8, 0.6);

  SUBCASE("single factor is exact") {
    MartingaleField M = sample_field(NoiseSpec{}, g, 2);
    ChaosFactor f;
    f.labels = {0, 0};
    f.factors = {smooth_slot(0.2, 0.18, 1), smooth_slot(0.3, 0.25, 0)};
    auto res = chaos_expand_product(M, {f}, 0.6);
    CHECK(res.n_contractions == 1);
    CHECK(res.residual <= 1e-13);
  }

  SUBCASE("two single integrals: two contractions") {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
      MartingaleField M = sample_field(NoiseSpec{}, g, seed);
      ChaosFactor a, b;
      a.labels = {0};
      a.factors = {smooth_slot(0.2, 0.18, 1)};
      b.labels = {0};
      b.factors = {smooth_slot(0.3, 0.27, 2)};
      auto res = chaos_expand_product(M, {a, b}, 0.6);
      CHECK(res.n_contractions == 2);
      CHECK(res.residual <= 1e-9);
    }
  }

  SUBCASE("m = (2,3): thirteen contractions") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      MartingaleField M = sample_field(NoiseSpec{}, g, seed);
      ChaosFactor a, b;
      a.labels = {0, 0};
      a.factors = {smooth_slot(0.2, 0.18, 1), smooth_slot(0.28, 0.2, 0)};
      b.labels = {0, 0, 0};
      b.factors = {smooth_slot(0.25, 0.22, 2), smooth_slot(0.33, 0.28, 0),
                   smooth_slot(0.4, 0.3, 1)};
      auto res = chaos_expand_product(M, {a, b}, 0.6);
      CHECK(res.n_contractions == 13);
      CHECK(res.residual <= 1e-6);
    }
  }

  SUBCASE("n = 3 singles: five contractions") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      MartingaleField M = sample_field(NoiseSpec{}, g, seed);
      std::vector<ChaosFactor> fs(3);
      for (int i = 0; i < 3; ++i) {
        fs[i].labels = {0};
        fs[i].factors = {smooth_slot(0.2 + 0.08 * i, 0.18 + 0.03 * i, i)};
      }
      auto res = chaos_expand_product(M, fs, 0.6);
      CHECK(res.n_contractions == 5);
      CHECK(res.residual <= 1e-6);
    }
  }
}

TEST_CASE("h gamma norm") {
  GridSpec g(1, 0.25, 1.0);

  SUBCASE("zero function") {
    Contraction gamma = make_gamma(2, {{0, 1}}, {false});
    GridFunction f = GridFunction::tensor(
        {smooth_slot(0.3, 0.2, 0, 0.0), smooth_slot(0.3, 0.2, 0, 0.0)});
    CHECK(h_gamma_norm(f, gamma, g) == 0.0);
  }

  SUBCASE("singleton reduces to the L2_eps norm") {
    Contraction gamma = make_gamma(1, {{0}}, {true});
    GridFunction f = GridFunction::tensor({smooth_slot(0.3, 0.25, 1)});
    CHECK(h_gamma_norm(f, gamma, g) ==
          doctest::Approx(l2_eps_norm(f, g)).epsilon(1e-12));
  }

  SUBCASE("separable fast path equals the general recursion") {
    auto a = smooth_slot(0.25, 0.2, 1);
    auto b = smooth_slot(0.35, 0.3, 2);
    auto af = a.f;
    auto bf = b.f;
    GridFunction sep = GridFunction::tensor({a, b});
    GridFunction gen = GridFunction::general(
        2,
        [af, bf](std::span<const Displacement> z) { return af(z[0]) * bf(z[1]); },
        {a.box, b.box});
    for (bool flag : {false, true}) {
      Contraction pair = make_gamma(2, {{0, 1}}, {flag});
      CHECK(h_gamma_norm(sep, pair, g) ==
            doctest::Approx(h_gamma_norm(gen, pair, g)).epsilon(1e-10));
    }
    Contraction singles = make_gamma(2, {{0}, {1}}, {true, true});
    CHECK(h_gamma_norm(sep, singles, g) ==
          doctest::Approx(h_gamma_norm(gen, singles, g)).epsilon(1e-10));
  }

  SUBCASE("moment inequality: monte carlo ratio is order one across eps") {
    Contraction gamma = make_gamma(2, {{0}, {1}}, {true, true});
    std::vector<double> ratios;
    for (double eps : {0.25, 0.125}) {
      GridSpec ge(1, eps, 0.6);
      GridFunction f = GridFunction::tensor(
          {smooth_slot(0.2, 0.18, 1), smooth_slot(0.3, 0.25, 2)});
      double norm = h_gamma_norm(f, gamma, ge);
      double acc = 0.0;
      const int R = 400;
      for (int r = 0; r < R; ++r) {
        MartingaleField M = sample_field(NoiseSpec{}, ge, 40000 + r);
        double s = gamma_integral(M, gamma, f, 0.6).running_sup;
        acc += s * s;
      }
      ratios.push_back(std::sqrt(acc / R) / norm);
    }
    CHECK(ratios[0] > 0.0);
    CHECK(ratios[1] / ratios[0] > 0.3);
    CHECK(ratios[1] / ratios[0] < 3.0);
  }
}

TEST_CASE("BDG consistency for single integrals") {
  for (double eps : {0.25, 0.125}) {
    GridSpec g(1, eps, 0.5);
    GridFunction f = GridFunction::tensor({smooth_slot(0.2, 0.18, 1)});
    double num = 0.0, den = 0.0;
    const int R = 400;
    for (int r = 0; r < R; ++r) {
      MartingaleField M = sample_field(NoiseSpec{}, g, 7000 + r);
      auto v = ito_integral(M, 0, f, 0.5);
      num += v.running_sup * v.running_sup;
      double qv = 0.0;
      const double m = M.magnitude();
      for (const auto& j : M.all_jumps()) {
        if (std::fabs(j.time) > 0.5) continue;
        Displacement z;
        z.t = j.time;
        z.x[0] = g.wrap(g.eps * static_cast<double>(j.site));
        Displacement pt[1] = {z};
        double fv = f(std::span<const Displacement>(pt, 1), 1);
        qv += std::pow(g.eps * fv * m, 2);
      }
      den += qv;
    }
    double ratio = num / den;
    CHECK(ratio > 0.05);
    CHECK(ratio < 20.0);
  }
}
