#include "spdelab/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spdelab/rng.hpp"

namespace spdelab {

std::vector<double> discrete_laplacian(const LatticeState& state) {
  const GridSpec& g = state.grid;
  const int d = g.d();
  const int n = g.n_sites();
  const long long cells = g.site_count();
  const double inv = 1.0 / (g.eps * g.eps);
  std::vector<double> out(static_cast<std::size_t>(cells), 0.0);
  for (long long c = 0; c < cells; ++c) {
    double acc = -2.0 * d * state.values[static_cast<std::size_t>(c)];
    long long stride = 1;
    long long rest = c;
    for (int i = 0; i < d; ++i) {
      const int xi = static_cast<int>(rest % n);
      rest /= n;
      const long long up = c + stride * ((xi + 1) % n - xi);
      const long long dn = c + stride * ((xi + n - 1) % n - xi);
      acc += state.values[static_cast<std::size_t>(up)] +
             state.values[static_cast<std::size_t>(dn)];
      stride *= n;
    }
    out[static_cast<std::size_t>(c)] = acc * inv;
  }
  return out;
}

std::vector<double> discrete_gradient(const LatticeState& state) {
  const GridSpec& g = state.grid;
  if (g.d() != 1) throw std::invalid_argument("discrete_gradient: d = 1 only");
  const int n = g.n_sites();
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int x = 0; x < n; ++x)
    out[x] = (state.values[(x + 1) % n] - state.values[(x + n - 1) % n]) / (2.0 * g.eps);
  return out;
}

namespace {

std::vector<double> drift(const LatticeState& state, const SolverConfig& cfg) {
  std::vector<double> lap = discrete_laplacian(state);
  const double c_eps = cfg.renormalize ? cfg.renorm_c : 0.0;
  if (cfg.equation == EquationTag::phi4) {
    for (std::size_t i = 0; i < lap.size(); ++i) {
      const double u = state.values[i];
      lap[i] += (c_eps - cfg.a) * u - cfg.lambda * u * u * u;
    }
    return lap;
  }
  std::vector<double> grad = discrete_gradient(state);
  for (std::size_t i = 0; i < lap.size(); ++i)
    lap[i] += cfg.lambda * (grad[i] * grad[i] - c_eps);
  return lap;
}

void apply_initial(LatticeState& state, const SolverConfig& cfg,
                   const MartingaleField& noise, std::uint64_t seed) {
  const GridSpec& g = state.grid;
  switch (cfg.initial) {
    case InitialCondition::zero:
      std::fill(state.values.begin(), state.values.end(), 0.0);
      break;
    case InitialCondition::bump: {
      TestFunction phi(PhiKind::bump4, g.d());
      for (long long c = 0; c < g.site_count(); ++c) {
        Site s = flat_to_site(c, g);
        Displacement z;
        z.t = 0.0;
        for (int i = 0; i < g.d(); ++i) z.x[i] = g.wrap(g.eps * s.idx[i]) * 2.0;
        state.values[static_cast<std::size_t>(c)] = phi(z);
      }
      break;
    }
    case InitialCondition::stationary: {
      // Long linear run with an independent noise stream.
      SolverConfig lin = cfg;
      lin.lambda = 0.0;
      lin.a = 0.0;
      lin.renormalize = false;
      lin.initial = InitialCondition::zero;
      GridSpec pre = g;
      pre.horizon = cfg.stationary_burn_in;
      MartingaleField warm = sample_field(noise.spec(), pre, Rng::mix(seed, 0xB0A7ull));
      LatticeState tmp(g, cfg.equation);
      const double dt = cfg.dt(g);
      const long long steps = static_cast<long long>(std::floor(pre.horizon / dt));
      for (long long s = 0; s < steps; ++s) step(tmp, lin, warm, dt);
      state.values = tmp.values;
      break;
    }
  }
}

}  // namespace

void step(LatticeState& state, const SolverConfig& config, const MartingaleField& noise,
          double dt) {
  const GridSpec& g = state.grid;
  const double stability = g.eps * g.eps / (2.0 * g.d());
  if (dt > stability + 1e-15)
    throw std::invalid_argument("step: dt exceeds the diffusive stability bound");

  std::vector<double> f = drift(state, config);
  for (std::size_t i = 0; i < f.size(); ++i) state.values[i] += dt * f[i];

  // Exact jump injection over [t, t+dt): integrating the noise over the
  // window is exactly the sum of its jumps at each site.
  const double t0 = state.time, t1 = state.time + dt;
  for (long long c = 0; c < g.site_count(); ++c) {
    for (const auto& j : noise.stream(0, c)) {
      if (std::fabs(j.time) >= t1) break;  // streams are sorted by |time|
      if (j.time >= t0 && j.time < t1)
        state.values[static_cast<std::size_t>(c)] += noise.magnitude() * j.sign;
    }
  }
  state.time = t1;

  for (double v : state.values) {
    if (!std::isfinite(v) || std::fabs(v) > config.overflow_guard)
      throw StepError(state.time, "field overflow (blow-up) at t = " +
                                      std::to_string(state.time));
  }
}

SimulationSummary simulate(const SolverConfig& config, const GridSpec& grid,
                           const std::vector<std::uint64_t>& seeds,
                           const SimulateOptions& opt) {
  SimulationSummary out;
  out.runs.resize(seeds.size());
  const double dt = config.dt(grid);
  const long long steps = static_cast<long long>(std::ceil(opt.horizon / dt - 1e-12));

  parallel_for(seeds.size(), opt.jobs, [&](std::size_t si) {
    SeedRun& run = out.runs[si];
    run.seed = seeds[si];
    GridSpec g = grid;
    g.horizon = std::max(grid.horizon, opt.horizon + dt);
    NoiseSpec nspec;
    MartingaleField noise = sample_field(nspec, g, seeds[si]);
    LatticeState state(grid, config.equation);
    apply_initial(state, config, noise, seeds[si]);

    auto record = [&](const LatticeState& s) {
      TrajectoryPoint p;
      p.t = s.time;
      const double n = static_cast<double>(s.values.size());
      double mean = 0.0;
      for (double v : s.values) mean += v;
      mean /= n;
      double var = 0.0, sup = 0.0;
      for (double v : s.values) {
        var += (v - mean) * (v - mean);
        sup = std::max(sup, std::fabs(v));
      }
      p.mean = mean;
      p.variance = var / n;
      p.sup = sup;
      for (long long probe : opt.probes)
        p.probes.push_back(s.values[static_cast<std::size_t>(probe)]);
      run.trajectory.push_back(std::move(p));
    };

    record(state);
    try {
      for (long long s = 0; s < steps; ++s) {
        step(state, config, noise, dt);
        if ((s + 1) % opt.record_every == 0 || s + 1 == steps) record(state);
      }
    } catch (const StepError& e) {
      run.blow_up = BlowUp{e.blow_up_time, e.what()};
    }
  });

  // Aggregate over surviving seeds at the final common time.
  std::vector<double> means, second;
  for (const auto& run : out.runs) {
    if (run.blow_up) {
      ++out.blow_ups;
      continue;
    }
    const auto& last = run.trajectory.back();
    means.push_back(last.mean);
    second.push_back(last.variance + last.mean * last.mean);
  }
  auto mean_se = [](const std::vector<double>& v, double& m, double& se) {
    if (v.empty()) {
      m = se = 0.0;
      return;
    }
    m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    var /= std::max<std::size_t>(1, v.size() - 1);
    se = std::sqrt(var / v.size());
  };
  mean_se(means, out.final_mean, out.final_mean_std_error);
  mean_se(second, out.final_second_moment, out.final_second_moment_std_error);
  if (!means.empty()) {
    double acc = 0.0;
    for (const auto& run : out.runs)
      if (!run.blow_up) acc += run.trajectory.back().variance;
    out.final_variance = acc / means.size();
  }
  return out;
}

}  // namespace spdelab
