#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spdelab/domain.hpp"
#include "spdelab/fft.hpp"
#include "spdelab/graphs.hpp"

namespace spdelab {

/// Compactly supported space-time kernel tabulated on D_{eps^2, eps}; time
/// index m corresponds to t = (field.t0 + m) eps^2, space wraps on the torus.
struct LatticeKernel {
  GridSpec grid;
  SpaceTimeField field;
  double a = 0.0;              // singularity index of the bound
  int q = 3;                   // derivative order used in the norm
  int vanishing_moments = -1;  // declared order; -1 = none declared

  double value_index(long long m, long long flat) const;
  /// Value at a grid displacement (t must sit on the eps^2 lattice).
  double operator()(const Displacement& z) const;
  /// Centered lattice derivative D^k (time one-sided at the support ends).
  double derivative(const Displacement& z, std::span<const int> k) const;

  double sup_time() const { return (field.t0 + field.nt - 1) * grid.time_step(); }
  double min_time() const { return field.t0 * grid.time_step(); }
};

/// Heat semigroup of the nearest-neighbour Laplacian on the torus applied to
/// the rescaled lattice delta; slices for t = 0, eps^2, ..., horizon.
LatticeKernel discrete_green_function(const GridSpec& grid, double horizon = 1.0);

/// Eigenvalue of the nearest-neighbour Laplacian for the Fourier mode k.
double laplacian_eigenvalue(const GridSpec& grid, std::span<const int> mode);

struct GreenSplit {
  LatticeKernel slab;       // restriction of G to 0 <= t < c eps^2
  LatticeKernel singular;   // K: cutoff * (G - mass plateau), bound index a = d
  LatticeKernel remainder;  // R = G - slab - K
};

struct SplitOptions {
  double slab_c = 1.0;   // slab width in units of eps^2
  int q = 3;
  bool subtract_plateau = true;  // remove the torus mass mode from K
};

GreenSplit split_green(const LatticeKernel& green, const SplitOptions& opt = {});

/// Centered spatial difference of a kernel along axis 0 (d = 1 use).
LatticeKernel gradient_kernel(const LatticeKernel& k);
/// One-sided forward spatial difference along axis 0.
LatticeKernel forward_gradient_kernel(const LatticeKernel& k);

/// sup over the support of (||z||_s v eps)^{a+|k|_s} |D^k K(z)| with the
/// strict reading |k|_s < q.
double kernel_norm(const LatticeKernel& k, double a, int q);

struct DyadicDecomposition {
  std::vector<SpaceTimeField> pieces;  // n = 0..N
  int levels = 0;                      // N = -floor(log2 eps)
};

/// Smooth dyadic-annulus partition of unity applied to the kernel; piece n is
/// supported in 2^{-(n+2)} <= ||z||_s <= 2^{-n}, the last piece absorbs the
/// core below 2^{-N}.
DyadicDecomposition dyadic_decompose(const LatticeKernel& k);
double dyadic_cutoff(double rho, int n, int levels);

/// Renormalized two-point kernel for r >= 0:
/// Khat(z-, z+) = K(z+ - z-) - sum_{|k|_s < r} z+^k / k! D^k K(-z-).
double positive_renormalize(const LatticeKernel& k, int r, const Displacement& zm,
                            const Displacement& zp);

/// eps^{|s|}-weighted counting measure on a compact window.
struct GridMeasure {
  SupportBox window;
  double total_variation(const GridSpec& g) const;
};

/// Distributional pairing of e:Taylor-renormalized kernels (r < 0) with a
/// two-argument test function against two grid measures, plus the constant
/// diagonal terms.
double taylor_renormalize(const LatticeKernel& k, int r,
                          const std::function<double(const Displacement&, const Displacement&)>& phi,
                          const GridMeasure& mu_minus, const GridMeasure& mu_plus,
                          const std::map<std::vector<int>, double>& constants,
                          const GridSpec& g);

// --- generalized convolutions ----------------------------------------------

struct BoundGraph {
  const LabeledMultigraph* graph = nullptr;
  std::map<std::string, const LatticeKernel*> kernels;  // by edge kernel id
  TestFunction test;        // base test function (lambda, center baked in)
  SupportBox default_window;  // integration window for up/internal vertices
  double budget = 5e8;

  BoundGraph(const LabeledMultigraph& g, TestFunction phi)
      : graph(&g), test(std::move(phi)) {}
};

/// Nested grid sum realizing the generalized convolution at pinned noise
/// positions, with the test function recentered at center. Refuses when the
/// estimated cost exceeds the budget (the estimate is carried in the error).
double generalized_convolution(const BoundGraph& bg, const Displacement& center,
                               std::span<const Displacement> noise_positions,
                               const GridSpec& g);

// --- renormalization constants ----------------------------------------------

struct Phi4Constants {
  double c1 = 0.0;
  double c2 = 0.0;
  bool c2_computed = false;
  std::string note;
};

struct KpzConstants {
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double c_eps = 0.0;
};

/// d=3 constants. C1 is the exact kernel energy (per-mode time integration of
/// the squared Green's function without the mass mode); C2 is the five-edge
/// diagram evaluated on the lattice kernel with FFT convolutions. C2 is
/// refused below the mesh cap unless force is set.
Phi4Constants renorm_constants_phi4(const GridSpec& grid, double c2_eps_cap = 1.0 / 8.0,
                                    bool force_c2 = false);

/// d=1 constants: C1 the exact gradient-kernel energy, C2/C3 ladder and
/// five-edge diagram sums, c_eps the antisymmetry diagnostic evaluated with
/// the one-sided gradient (the centered gradient gives exactly zero).
KpzConstants renorm_constants_kpz(const GridSpec& grid);

enum class ModelSymbol { Xi, Psi, Psi2 };
enum class Equation { phi4, kpz };

ModelSymbol model_symbol_from_name(const std::string& s);
Equation equation_from_name(const std::string& s);

/// Deterministic second moment of the model at scale lambda: the exact
/// variance of the lifted symbol tested against phi^lambda, computed from the
/// Ito isometry of this noise (grid quadrature). The test function enters
/// through its cell averages, so the value saturates below the mesh scale.
double model_second_moment(ModelSymbol symbol, Equation eq, double lambda,
                           const GridSpec& grid, PhiKind phi_kind = PhiKind::bump4);

/// Exact stationary second moments of the linear (lambda = 0) explicit Euler
/// chain driven by this noise; used as solver oracles and counterterms.
double euler_chain_variance(const GridSpec& grid, double dt, double t,
                            bool gradient);

void save_kernel(const LatticeKernel& k, const std::string& path_prefix);
LatticeKernel load_kernel(const std::string& path_prefix);

}  // namespace spdelab
