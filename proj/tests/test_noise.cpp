#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "spdelab/noise.hpp"
#include "spdelab/rng.hpp"

using namespace spdelab;

namespace {

MartingaleField small_field(double eps = 0.25, double horizon = 1.0,
                            std::uint64_t seed = 42, int d = 1) {
  return sample_field(NoiseSpec{}, GridSpec(d, eps, horizon), seed);
}

}  // namespace

TEST_CASE("jump magnitude matches the scaling identity") {
  GridSpec g1(1, 0.25, 1.0);
  CHECK(NoiseSpec{}.jump_magnitude(g1) == doctest::Approx(0.5));  // eps^{1/2}
  GridSpec g2(2, 0.25, 1.0);
  CHECK(NoiseSpec{}.jump_magnitude(g2) == doctest::Approx(1.0));  // exponent 0
  GridSpec g3(3, 0.25, 1.0);
  CHECK(NoiseSpec{}.jump_magnitude(g3) == doctest::Approx(2.0));  // eps^{-1/2}
  // rate * magnitude^2 = eps^{-d}
  CHECK(NoiseSpec{}.jump_rate(g1) * std::pow(NoiseSpec{}.jump_magnitude(g1), 2) ==
        doctest::Approx(std::pow(g1.eps, -1)));
}

TEST_CASE("expected jump count per site") {
  // d=1, eps=1/4: rate 16 per unit time per site; average over sites/seeds.
  const double eps = 0.25, T = 1.0;
  long long total = 0;
  int streams = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    MartingaleField f = small_field(eps, T, seed);
    for (long long s = 0; s < f.grid().site_count(); ++s) {
      for (const auto& j : f.stream(0, s))
        if (j.time > 0) ++total;
      ++streams;
    }
  }
  const double mean = static_cast<double>(total) / streams;
  const double expect = 16.0;
  const double sigma = std::sqrt(expect / streams);
  CHECK(std::fabs(mean - expect) <= 3.0 * sigma + 0.05);
}

TEST_CASE("path evaluation is cadlag with the stated conventions") {
  MartingaleField f = small_field();
  Site x = Site::of(1);
  CHECK(f.evaluate(0, x, 0.0) == 0.0);

  auto s = f.stream(0, site_to_flat(x, f.grid()));
  REQUIRE(!s.empty());
  // first positive jump
  const JumpRecord* first = nullptr;
  for (const auto& j : s)
    if (j.time > 0) {
      if (!first || j.time < first->time) first = &j;
    }
  REQUIRE(first != nullptr);
  const double m = f.magnitude();
  CHECK(f.evaluate(0, x, first->time) == doctest::Approx(m * first->sign));
  CHECK(f.evaluate(0, x, first->time, MartingaleField::Limit::pre) == 0.0);
  CHECK_THROWS(f.evaluate(0, x, 10.0));
}

TEST_CASE("no two records share a clock value") {
  MartingaleField f = small_field(0.125, 1.0, 7);
  std::set<double> clocks;
  for (const auto& j : f.all_jumps()) {
    CHECK(!clocks.count(std::fabs(j.time)));
    clocks.insert(std::fabs(j.time));
  }
}

TEST_CASE("bracket identities of the parity lemma") {
  const double eps = 0.25;
  GridSpec g(1, eps, 1.0);
  const int snorm = g.scaling.s_norm_order();
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    MartingaleField f = sample_field(NoiseSpec{}, g, seed);
    Site x = Site::of(static_cast<int>(seed) % g.n_sites());
    for (double t : {0.3, 0.7, -0.5}) {
      const double m1 = f.evaluate(0, x, t);
      int two[] = {0, 0};
      const double b2 = f.bracket(std::span<const int>(two, 2), x, t);
      for (int n : {2, 3, 4, 5}) {
        std::vector<int> labels(n, 0);
        const double bn = f.bracket(labels, x, t);
        double expect;
        if (n % 2 == 1)
          expect = std::pow(eps, (n - 1) * snorm / 2.0) * m1;
        else
          expect = std::pow(eps, (n * snorm - 2.0 * snorm) / 2.0) * b2;
        if (expect == 0.0)
          CHECK(bn == 0.0);
        else
          CHECK(bn == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("mixed-label brackets vanish") {
  NoiseSpec spec;
  spec.components = 2;
  GridSpec g(1, 0.25, 1.0);
  MartingaleField f(spec, g, 3);
  int mixed[] = {0, 1};
  int triple[] = {0, 0, 1};
  Site x = Site::of(0);
  CHECK(f.bracket(std::span<const int>(mixed, 2), x, 0.9) == 0.0);
  CHECK(f.bracket(std::span<const int>(triple, 3), x, 0.9) == 0.0);
  CHECK(f.compensator(std::span<const int>(mixed, 2), x, 0.9) == 0.0);
}

TEST_CASE("bracket jump-sum value for a pair") {
  MartingaleField f = small_field();
  const GridSpec& g = f.grid();
  Site x = Site::of(2);
  double t = 0.8;
  long long count = 0;
  for (const auto& j : f.stream(0, site_to_flat(x, g)))
    if (j.time > 0 && j.time <= t) ++count;
  int two[] = {0, 0};
  // eps^d * j * eps^{2-d} = j eps^2
  CHECK(f.bracket(std::span<const int>(two, 2), x, t) ==
        doctest::Approx(count * g.eps * g.eps));
}

TEST_CASE("compensator closed forms") {
  MartingaleField f = small_field();
  Site x = Site::of(0);
  int two[] = {0, 0};
  int three[] = {0, 0, 0};
  int four[] = {0, 0, 0, 0};
  CHECK(f.compensator(std::span<const int>(two, 2), x, 0.6) == doctest::Approx(0.6));
  CHECK(f.compensator(std::span<const int>(three, 3), x, 0.6) == 0.0);
  CHECK(f.compensator(std::span<const int>(four, 4), x, 0.6) ==
        doctest::Approx(std::pow(0.25, 3) * 0.6));
  std::vector<int> empty;
  CHECK_THROWS(f.bracket(empty, x, 0.5));
}

TEST_CASE("compensated bracket is a martingale empirically") {
  // E[N_t] = 0 for K = (k,k) over replicas, within 4 standard errors.
  GridSpec g(1, 0.25, 1.0);
  const int replicas = 10000;
  int two[] = {0, 0};
  double acc = 0.0, acc2 = 0.0;
  for (int r = 0; r < replicas; ++r) {
    MartingaleField f = sample_field(NoiseSpec{}, g, 1000 + r);
    double n = f.compensated_bracket(std::span<const int>(two, 2), Site::of(1), 0.5);
    acc += n;
    acc2 += n * n;
  }
  const double mean = acc / replicas;
  const double var = acc2 / replicas - mean * mean;
  const double se = std::sqrt(var / replicas);
  CHECK(std::fabs(mean) <= 4.0 * se);
}

TEST_CASE("concatenation identity") {
  // eps^d [[M;K](x), [M;L](x)]_t = [M;K sqcup L]_t(x), pathwise exact.
  GridSpec g(1, 0.25, 1.0);
  Rng rng(17);
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    MartingaleField f = sample_field(NoiseSpec{}, g, seed);
    Site x = Site::of(static_cast<int>(rng.next_u64() % g.n_sites()));
    int nk = 1 + static_cast<int>(rng.next_u64() % 3);
    int nl = 1 + static_cast<int>(rng.next_u64() % (5 - nk > 1 ? 5 - nk - 1 : 1));
    std::vector<int> K(nk, 0), L(nl, 0), KL;
    KL.insert(KL.end(), K.begin(), K.end());
    KL.insert(KL.end(), L.begin(), L.end());
    const double t = 0.8;

    // [A,B]_t over the clock = sum of simultaneous jump products; brackets of
    // the same stream jump exactly together.
    auto stream = f.stream(0, site_to_flat(x, g));
    const double m = f.magnitude();
    double lhs = 0.0;
    for (const auto& j : stream) {
      if (std::fabs(j.time) > t || j.time < 0) continue;
      double dA = std::pow(g.eps, 1.0 * (nk - 1)) * std::pow(m * j.sign, nk);
      double dB = std::pow(g.eps, 1.0 * (nl - 1)) * std::pow(m * j.sign, nl);
      lhs += dA * dB;
    }
    lhs *= g.eps;  // eps^d
    const double rhs = f.bracket(KL, x, t);
    if (rhs == 0.0)
      CHECK(lhs == 0.0);
    else
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("quadratic covariation via the Ito product formula") {
  // [M,N]_t from M_t N_t - int M dN - int N dM equals the jump sum, for two
  // independent components at one site.
  NoiseSpec spec;
  spec.components = 2;
  GridSpec g(1, 0.25, 1.0);
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    MartingaleField f(spec, g, seed);
    Site x = Site::of(1);
    long long flat = site_to_flat(x, g);
    const double t = 0.9;

    // Merge positive-side jumps of both components at this site.
    struct Ev {
      double time;
      int comp;
      double dm;
    };
    std::vector<Ev> evs;
    for (int k = 0; k < 2; ++k)
      for (const auto& j : f.stream(k, flat))
        if (j.time > 0 && j.time <= t)
          evs.push_back({j.time, k, f.magnitude() * j.sign});
    std::sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) {
      return a.time < b.time;
    });

    double M = 0.0, N = 0.0, intMdN = 0.0, intNdM = 0.0, jumpsum = 0.0;
    for (const auto& e : evs) {
      if (e.comp == 0) {
        intNdM += N * e.dm;
        M += e.dm;
      } else {
        intMdN += M * e.dm;
        N += e.dm;
      }
      // simultaneous jumps never happen across components
    }
    const double bracket_formula = M * N - intMdN - intNdM;
    CHECK(std::fabs(bracket_formula - jumpsum) <= 1e-10 * (1.0 + std::fabs(jumpsum)));
  }
}

TEST_CASE("wiener statistics") {
  GridSpec g(1, 1.0 / 64, 1.0);
  SpatialTestFunction phi(PhiKind::bump4, 1);
  auto rep = wiener_statistics(NoiseSpec{}, g, phi, 0.5, 2000, 99);

  SUBCASE("variance matches t ||phi||^2 within 5 SE") {
    CHECK(std::fabs(rep.variance - rep.variance_target) <= 5.0 * rep.variance_std_error);
  }
  SUBCASE("kurtosis near zero") { CHECK(std::fabs(rep.excess_kurtosis) <= 0.3); }
  SUBCASE("jump bound exact") {
    CHECK(rep.jump_bound_satisfied);
    CHECK(rep.max_jump <= rep.max_jump_bound + 1e-15);
  }
  SUBCASE("zero test function gives zero variance") {
    // phi with support away from the torus points: emulate by d mismatch guard
    CHECK_THROWS(wiener_statistics(NoiseSpec{}, g, SpatialTestFunction(PhiKind::bump4, 2),
                                   0.5, 200, 1));
  }
  SUBCASE("replica floor enforced") {
    CHECK_THROWS(wiener_statistics(NoiseSpec{}, g, phi, 0.5, 10, 1));
  }
}

TEST_CASE("martingale mean is zero within monte carlo error") {
  GridSpec g(1, 0.25, 1.0);
  double acc = 0.0, acc2 = 0.0;
  const int R = 4000;
  for (int r = 0; r < R; ++r) {
    MartingaleField f = sample_field(NoiseSpec{}, g, 555 + r);
    double v = f.evaluate(0, Site::of(2), 0.7);
    acc += v;
    acc2 += v * v;
  }
  double mean = acc / R, se = std::sqrt((acc2 / R - mean * mean) / R);
  CHECK(std::fabs(mean) <= 4.0 * se);
}

TEST_CASE("jump log round trip") {
  MartingaleField f = small_field(0.25, 0.5, 13);
  std::stringstream ss;
  f.save_jump_log(ss);
  MartingaleField g = MartingaleField::load_jump_log(ss);
  REQUIRE(g.all_jumps().size() == f.all_jumps().size());
  Site x = Site::of(3);
  for (double t : {0.1, 0.3, 0.45, -0.2})
    CHECK(g.evaluate(0, x, t) == f.evaluate(0, x, t));
}
