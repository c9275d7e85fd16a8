#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spdelab/domain.hpp"
#include "spdelab/noise.hpp"

namespace spdelab {

enum class EquationTag { phi4, kpz };

struct LatticeState {
  GridSpec grid;
  EquationTag equation = EquationTag::kpz;
  double time = 0.0;
  std::vector<double> values;  // flat site order

  explicit LatticeState(const GridSpec& g, EquationTag eq)
      : grid(g), equation(eq), values(static_cast<std::size_t>(g.site_count()), 0.0) {}
};

enum class InitialCondition { zero, bump, stationary };

struct SolverConfig {
  EquationTag equation = EquationTag::kpz;
  double a = 0.0;          // linear coefficient (phi4)
  double lambda = 1.0;     // nonlinearity strength
  double renorm_c = 0.0;   // C^eps; from the kernels module
  bool renormalize = true;
  double dt_safety = 0.5;  // dt = safety * eps^2 / (2d)
  double overflow_guard = 1e8;
  InitialCondition initial = InitialCondition::zero;
  double stationary_burn_in = 0.25;  // linear-run horizon for the KPZ start

  double dt(const GridSpec& g) const {
    return dt_safety * g.eps * g.eps / (2.0 * g.d());
  }
};

/// Nearest-neighbour Laplacian with periodic wrap; exact on lattice
/// quadratics away from the wrap.
std::vector<double> discrete_laplacian(const LatticeState& state);

/// Centered first difference, d = 1 only.
std::vector<double> discrete_gradient(const LatticeState& state);

struct BlowUp {
  double time = 0.0;
  std::string what;
};

/// One explicit Euler drift step followed by exact injection of the noise
/// jumps in [state.time, state.time + dt). Throws StepError carrying the
/// blow-up time when the overflow guard trips.
struct StepError : std::runtime_error {
  double blow_up_time;
  StepError(double t, const std::string& msg)
      : std::runtime_error(msg), blow_up_time(t) {}
};

void step(LatticeState& state, const SolverConfig& config, const MartingaleField& noise,
          double dt);

struct TrajectoryPoint {
  double t = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  double sup = 0.0;
  std::vector<double> probes;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<TrajectoryPoint> trajectory;
  std::optional<BlowUp> blow_up;
};

struct SimulationSummary {
  std::vector<SeedRun> runs;
  // Aggregates at the final recorded time over surviving seeds.
  double final_mean = 0.0;
  double final_mean_std_error = 0.0;
  double final_variance = 0.0;
  double final_second_moment = 0.0;
  double final_second_moment_std_error = 0.0;
  int blow_ups = 0;
};

struct SimulateOptions {
  double horizon = 0.05;
  int record_every = 1;           // record each k-th step
  std::vector<long long> probes;  // flat site indices
  unsigned jobs = 1;
};

SimulationSummary simulate(const SolverConfig& config, const GridSpec& grid,
                           const std::vector<std::uint64_t>& seeds,
                           const SimulateOptions& opt);

}  // namespace spdelab
