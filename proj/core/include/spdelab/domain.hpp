#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spdelab {

constexpr int kMaxDim = 3;

/// Parabolic scaling of R^{d+1}: time counts twice.
struct ScalingSpec {
  int d = 1;

  ScalingSpec() = default;
  explicit ScalingSpec(int dim) : d(dim) {
    if (d < 1 || d > kMaxDim) throw std::invalid_argument("ScalingSpec: d must be in [1,3]");
  }
  int s_norm_order() const { return d + 2; }
};

/// Space-time displacement in physical units (spatial part already reduced
/// to the nearest torus representative by the caller or by GridSpec::wrap).
struct Displacement {
  double t = 0.0;
  std::array<double, kMaxDim> x{};
};

inline double parabolic_norm(const Displacement& z, const ScalingSpec& s) {
  double m = std::sqrt(std::fabs(z.t));
  for (int i = 0; i < s.d; ++i) m = std::max(m, std::fabs(z.x[i]));
  return m;
}

inline double parabolic_norm_multi(std::span<const int> k, const ScalingSpec& s) {
  // |k|_s = 2 k_0 + sum k_i for a multi-index (k_0 temporal).
  double v = 2.0 * k[0];
  for (int i = 0; i < s.d; ++i) v += k[1 + i];
  return v;
}

/// Unit torus lattice with mesh eps, 1/eps sites per spatial dimension and
/// time grid of step eps^2.
struct GridSpec {
  ScalingSpec scaling;
  double eps = 0.25;
  double horizon = 1.0;

  GridSpec() = default;
  GridSpec(int d, double eps_, double horizon_ = 1.0)
      : scaling(d), eps(eps_), horizon(horizon_) {
    validate();
  }

  void validate() const {
    if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("GridSpec: eps must be in (0,1]");
    double n = 1.0 / eps;
    if (std::fabs(n - std::round(n)) > 1e-9)
      throw std::invalid_argument("GridSpec: 1/eps must be a positive integer");
    if (!(horizon > 0.0)) throw std::invalid_argument("GridSpec: horizon must be positive");
  }

  int d() const { return scaling.d; }
  int n_sites() const { return static_cast<int>(std::llround(1.0 / eps)); }
  long long site_count() const {
    long long c = 1;
    for (int i = 0; i < d(); ++i) c *= n_sites();
    return c;
  }
  double time_step() const { return eps * eps; }
  /// Weight of one cell of D_{eps^2,eps}: eps^{|s|}.
  double cell_weight() const { return std::pow(eps, scaling.s_norm_order()); }

  /// Nearest-representative reduction of a physical spatial displacement
  /// to (-1/2, 1/2]^d.
  double wrap(double dx) const {
    double w = dx - std::round(dx);
    if (w <= -0.5) w += 1.0;
    return w;
  }
  Displacement wrap(const Displacement& z) const {
    Displacement r = z;
    for (int i = 0; i < d(); ++i) r.x[i] = wrap(r.x[i]);
    return r;
  }

  int wrap_site(long long i) const {
    int n = n_sites();
    long long m = i % n;
    if (m < 0) m += n;
    return static_cast<int>(m);
  }
};

/// A lattice site, d integer indices in [0, N).
struct Site {
  std::array<int, kMaxDim> idx{};

  static Site of(int i0, int i1 = 0, int i2 = 0) { return Site{{i0, i1, i2}}; }
  bool operator==(const Site&) const = default;
};

inline long long site_to_flat(const Site& s, const GridSpec& g) {
  long long f = 0;
  for (int i = g.d() - 1; i >= 0; --i) f = f * g.n_sites() + s.idx[i];
  return f;
}
inline Site flat_to_site(long long f, const GridSpec& g) {
  Site s;
  for (int i = 0; i < g.d(); ++i) {
    s.idx[i] = static_cast<int>(f % g.n_sites());
    f /= g.n_sites();
  }
  return s;
}

/// Space-time point: continuous time, lattice site.
struct SpaceTimePoint {
  double t = 0.0;
  Site x;

  Displacement physical(const GridSpec& g) const {
    Displacement z;
    z.t = t;
    for (int i = 0; i < g.d(); ++i) z.x[i] = g.eps * x.idx[i];
    return z;
  }
};

inline Displacement displacement(const SpaceTimePoint& a, const SpaceTimePoint& b,
                                 const GridSpec& g) {
  Displacement z;
  z.t = a.t - b.t;
  for (int i = 0; i < g.d(); ++i) z.x[i] = g.wrap(g.eps * (a.x.idx[i] - b.x.idx[i]));
  return z;
}

// ---------------------------------------------------------------------------
// Test functions
// ---------------------------------------------------------------------------

enum class PhiKind { bump2, bump4, bump6 };

std::string phi_kind_name(PhiKind k);
PhiKind phi_kind_from_name(const std::string& name);

/// Compactly supported polynomial bump phi(t,x) = (1-t^2)^m prod (1-x_i^2)^m
/// on the unit ||.||_s ball, normalized to sup-norm 1, together with its
/// rescaled-and-recentered versions phi^lambda_z. Rescaling is exact: the
/// class stores (kind, lambda, center) and evaluates the closed form.
class TestFunction {
 public:
  TestFunction(PhiKind kind, int d);

  int d() const { return d_; }
  double lambda() const { return lambda_; }
  PhiKind kind() const { return kind_; }
  const Displacement& center() const { return center_; }

  double operator()(const Displacement& z) const;
  double operator()(double t, std::span<const double> x) const;

  /// Partial derivative; k[0] is the time order, k[1..d] spatial orders.
  /// Supported up to order 2 per axis.
  double derivative(const Displacement& z, std::span<const int> k) const;

  /// Average over the grid cell centered at z (cell extent eps^2 x eps^d).
  /// Subsamples adaptively when lambda is comparable to the mesh.
  double cell_average(const Displacement& z, const GridSpec& g) const;

  /// Exact integral over R^{d+1} of the continuum function (lambda-invariant).
  double integral() const;
  /// Exact squared L^2(R^{d+1}) norm of the continuum function.
  double l2_squared() const;
  double sup_norm() const;

  /// Support: |t - z_t| <= lambda^2 * t_radius, |x_i - z_i| <= lambda * x_radius.
  double time_radius() const { return lambda_ * lambda_; }
  double space_radius() const { return lambda_; }

 private:
  friend TestFunction rescale_test_function(const TestFunction&, double, const Displacement&);

  PhiKind kind_;
  int d_;
  int m_;
  double lambda_ = 1.0;
  Displacement center_{};
};

/// phi^lambda_z per the parabolic rescaling; lambda in (0,1].
TestFunction rescale_test_function(const TestFunction& phi, double lambda,
                                   const Displacement& z);

/// Spatial-only bump (1-|x_i|^2)^m used for statistics of the noise field at
/// fixed time.
class SpatialTestFunction {
 public:
  SpatialTestFunction(PhiKind kind, int d);
  double operator()(std::span<const double> x) const;
  double l2_squared() const;  // exact integral of phi^2 over R^d
  double sup_norm() const { return 1.0; }
  int d() const { return d_; }

 private:
  PhiKind kind_;
  int d_;
  int m_;
};

// ---------------------------------------------------------------------------
// Grid functions
// ---------------------------------------------------------------------------

/// Compact space-time support box for one argument slot, physical units.
struct SupportBox {
  double t_min = 0.0;
  double t_max = 0.0;
  double x_radius = 0.5;  // |x_i| <= x_radius after torus reduction

  bool contains(const Displacement& z, int d) const {
    if (z.t < t_min - 1e-15 || z.t > t_max + 1e-15) return false;
    for (int i = 0; i < d; ++i)
      if (std::fabs(z.x[i]) > x_radius + 1e-15) return false;
    return true;
  }
  bool finite() const {
    return std::isfinite(t_min) && std::isfinite(t_max) && std::isfinite(x_radius);
  }
};

/// One-argument factor: callable on physical space-time points.
struct ScalarSlot {
  std::function<double(const Displacement&)> f;
  SupportBox box;

  double operator()(const Displacement& z, int d) const {
    return box.contains(z, d) ? f(z) : 0.0;
  }
};

/// Function of n space-time points, vanishing outside the declared per-slot
/// support boxes. Either a tensor product of 1-argument factors (the common
/// case, enabling fast evaluation paths) or a general evaluator.
class GridFunction {
 public:
  static GridFunction tensor(std::vector<ScalarSlot> factors);
  static GridFunction general(int arity,
                              std::function<double(std::span<const Displacement>)> eval,
                              std::vector<SupportBox> boxes);

  int arity() const { return arity_; }
  bool separable() const { return !factors_.empty(); }
  const std::vector<ScalarSlot>& factors() const { return factors_; }
  const SupportBox& box(int slot) const { return boxes_[slot]; }

  double operator()(std::span<const Displacement> pts, int d) const;

  /// Restriction: fix the listed slots at the given points, producing a
  /// function of the remaining slots (slot order preserved).
  GridFunction bind(std::span<const int> slots, std::span<const Displacement> pts,
                    int d) const;

 private:
  int arity_ = 0;
  std::vector<ScalarSlot> factors_;
  std::function<double(std::span<const Displacement>)> general_;
  std::vector<SupportBox> boxes_;
};

/// eps^d sum_x int u(t,x) phi(t,x) dt with composite trapezoid quadrature on
/// the eps^2 time grid. Rejects unbounded time support.
double extend_to_distribution(const GridFunction& u, const TestFunction& phi,
                              const GridSpec& g);
double extend_to_distribution(const GridFunction& u,
                              const std::function<double(const Displacement&)>& phi,
                              const GridSpec& g);

/// || f ||_{L^2_eps}: the n-fold sum over D_{eps^2,eps} with cell weight
/// eps^{|s|} per slot, square-rooted.
double l2_eps_norm(const GridFunction& f, const GridSpec& g);

/// Iterate the grid points of D_{eps^2,eps} inside a support box; fn
/// receives the physical point. Time nodes are the eps^2 lattice.
void for_each_grid_point(const SupportBox& box, const GridSpec& g,
                         const std::function<void(const Displacement&)>& fn);

}  // namespace spdelab
