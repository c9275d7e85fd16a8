#pragma once

#include <optional>
#include <span>
#include <vector>

#include "spdelab/contractions.hpp"
#include "spdelab/domain.hpp"
#include "spdelab/noise.hpp"

namespace spdelab {

struct IntegralValue {
  double value = 0.0;        // value at the requested time
  double running_sup = 0.0;  // sup of |process| over the clock up to t
};

struct QuadratureOptions {
  int refine_near_jumps = 4;  // subdivisions of the eps^2 cells next to jumps
  int time_oversample = 1;    // lattice step = eps^2 / oversample
  bool use_time_lattice = true;
};

/// Single stochastic integral I^eps_k(f)_t over D_{eps,t} = [-t,t] x grid.
/// Exact pathwise jump sum; f must be a deterministic arity-1 function.
IntegralValue ito_integral(const MartingaleField& M, int k, const GridFunction& f,
                           double t);

/// Multiple stochastic integral I^eps_K(f)_t via the left-limit recursion.
/// Separable kernels run through a subset dynamic program over the jump
/// sequence; general kernels fall back to direct off-diagonal enumeration
/// (arity <= 3).
IntegralValue multiple_integral(const MartingaleField& M, std::span<const int> labels,
                                const GridFunction& f, double t);

/// gamma-indexed stochastic integral I^eps_gamma(f)_t: bracket integrators
/// for blocks outside F, compensated (N) integrators for blocks in F. The
/// absolutely continuous compensator part of even F-blocks is integrated by
/// trapezoid quadrature on the eps^2 clock grid, refined near jump times.
IntegralValue gamma_integral(const MartingaleField& M, const Contraction& gamma,
                             const GridFunction& f, double t,
                             const QuadratureOptions& quad = {});

/// Direct off-diagonal enumeration oracles; independent of the DP path.
/// Cost grows like (jumps)^arity, guarded.
IntegralValue multiple_integral_direct(const MartingaleField& M,
                                       std::span<const int> labels,
                                       const GridFunction& f, double t,
                                       long long budget = 200'000'000);
IntegralValue gamma_integral_direct(const MartingaleField& M, const Contraction& gamma,
                                    const GridFunction& f, double t,
                                    long long budget = 200'000'000);

struct ChaosFactor {
  std::vector<int> labels;          // K^(i)
  std::vector<ScalarSlot> factors;  // tensor factors of f_i, one per label
};

struct ChaosCheckResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;  // |lhs-rhs| / (1+|lhs|)
  int n_contractions = 0;
};

/// Pathwise chaos-expansion check: product of multiple integrals against the
/// sum of gamma-integrals over all product contractions.
ChaosCheckResult chaos_expand_product(const MartingaleField& M,
                                      const std::vector<ChaosFactor>& factors,
                                      double t, int cap = 8);

/// || f ||_{H_eps; gamma}: the recursive contraction norm controlling the
/// moments of I^eps_gamma(f). The picked component of the recursion is the
/// canonical first block.
double h_gamma_norm(const GridFunction& f, const Contraction& gamma, const GridSpec& g);

}  // namespace spdelab
