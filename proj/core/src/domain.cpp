#include "spdelab/domain.hpp"

#include <algorithm>

namespace spdelab {

namespace {

int bump_exponent(PhiKind k) {
  switch (k) {
    case PhiKind::bump2: return 2;
    case PhiKind::bump4: return 4;
    case PhiKind::bump6: return 6;
  }
  throw std::logic_error("unknown PhiKind");
}

double bump1(double s, int m) {
  double u = 1.0 - s * s;
  return u > 0.0 ? std::pow(u, m) : 0.0;
}

double bump1_d1(double s, int m) {
  double u = 1.0 - s * s;
  if (u <= 0.0) return 0.0;
  return -2.0 * m * s * std::pow(u, m - 1);
}

double bump1_d2(double s, int m) {
  double u = 1.0 - s * s;
  if (u <= 0.0) return 0.0;
  double v = -2.0 * m * std::pow(u, m - 1);
  if (m >= 2) v += 4.0 * m * (m - 1) * s * s * std::pow(u, m - 2);
  return v;
}

double bump1_deriv(double s, int m, int order) {
  switch (order) {
    case 0: return bump1(s, m);
    case 1: return bump1_d1(s, m);
    case 2: return bump1_d2(s, m);
    default: throw std::invalid_argument("TestFunction: derivative order > 2 unsupported");
  }
}

// int_{-1}^{1} (1-s^2)^p ds = sqrt(pi) Gamma(p+1) / Gamma(p+3/2)
double bump1_integral(int p) {
  return std::sqrt(M_PI) * std::exp(std::lgamma(p + 1.0) - std::lgamma(p + 1.5));
}

}  // namespace

std::string phi_kind_name(PhiKind k) {
  switch (k) {
    case PhiKind::bump2: return "bump2";
    case PhiKind::bump4: return "bump4";
    case PhiKind::bump6: return "bump6";
  }
  throw std::logic_error("unknown PhiKind");
}

PhiKind phi_kind_from_name(const std::string& name) {
  if (name == "bump2") return PhiKind::bump2;
  if (name == "bump4") return PhiKind::bump4;
  if (name == "bump6") return PhiKind::bump6;
  throw std::invalid_argument("unknown phi_kind: " + name);
}

TestFunction::TestFunction(PhiKind kind, int d)
    : kind_(kind), d_(d), m_(bump_exponent(kind)) {
  if (d < 1 || d > kMaxDim) throw std::invalid_argument("TestFunction: bad dimension");
}

double TestFunction::operator()(const Displacement& z) const {
  const double li = 1.0 / lambda_;
  double v = std::pow(li, d_ + 2) * bump1(li * li * (z.t - center_.t), m_);
  for (int i = 0; i < d_ && v != 0.0; ++i) v *= bump1(li * (z.x[i] - center_.x[i]), m_);
  return v;
}

double TestFunction::operator()(double t, std::span<const double> x) const {
  Displacement z;
  z.t = t;
  for (int i = 0; i < d_; ++i) z.x[i] = x[i];
  return (*this)(z);
}

double TestFunction::derivative(const Displacement& z, std::span<const int> k) const {
  if (static_cast<int>(k.size()) != d_ + 1)
    throw std::invalid_argument("TestFunction::derivative: bad multi-index size");
  const double li = 1.0 / lambda_;
  double v = std::pow(li, d_ + 2);
  v *= bump1_deriv(li * li * (z.t - center_.t), m_, k[0]) * std::pow(li * li, k[0]);
  for (int i = 0; i < d_; ++i)
    v *= bump1_deriv(li * (z.x[i] - center_.x[i]), m_, k[1 + i]) * std::pow(li, k[1 + i]);
  return v;
}

double TestFunction::cell_average(const Displacement& z, const GridSpec& g) const {
  // When the bump is wide compared to the cell, the midpoint value is the
  // average to high order. Subsample otherwise.
  const double ratio = g.eps / lambda_;
  if (ratio <= 0.125) return (*this)(z);
  int st = std::clamp(static_cast<int>(std::ceil(8.0 * ratio * ratio)), 2, 128);
  int sx = std::clamp(static_cast<int>(std::ceil(8.0 * ratio)), 2, 64);
  const double dt = g.time_step(), dx = g.eps;
  double acc = 0.0;
  std::array<int, kMaxDim> ix{};
  long long nsp = 1;
  for (int i = 0; i < d_; ++i) nsp *= sx;
  for (int it = 0; it < st; ++it) {
    double t = z.t + dt * ((it + 0.5) / st - 0.5);
    for (long long flat = 0; flat < nsp; ++flat) {
      long long f = flat;
      Displacement p;
      p.t = t;
      for (int i = 0; i < d_; ++i) {
        ix[i] = static_cast<int>(f % sx);
        f /= sx;
        p.x[i] = z.x[i] + dx * ((ix[i] + 0.5) / sx - 0.5);
      }
      acc += (*this)(p);
    }
  }
  return acc / (static_cast<double>(st) * static_cast<double>(nsp));
}

double TestFunction::integral() const {
  double v = bump1_integral(m_);
  return std::pow(v, d_ + 1);
}

double TestFunction::l2_squared() const {
  // ||phi^lambda||^2_{L^2} = lambda^{-|s|} ||phi||^2.
  double v = bump1_integral(2 * m_);
  return std::pow(v, d_ + 1) * std::pow(lambda_, -(d_ + 2));
}

double TestFunction::sup_norm() const { return std::pow(lambda_, -(d_ + 2)); }

TestFunction rescale_test_function(const TestFunction& phi, double lambda,
                                   const Displacement& z) {
  if (!(lambda > 0.0 && lambda <= 1.0))
    throw std::invalid_argument("rescale_test_function: lambda must be in (0,1]");
  TestFunction out = phi;
  // (phi^l_c)^lambda_z(y) = (lambda l)^{-|s|} phi((lambda l)^{-2}(y_t - t'), ...)
  // with the combined center t' = c + z contribution only exact for c = 0;
  // for a recentered base the centers compose affinely below.
  out.lambda_ = phi.lambda_ * lambda;
  out.center_.t = z.t + phi.center_.t * lambda * lambda;
  for (int i = 0; i < phi.d(); ++i)
    out.center_.x[i] = z.x[i] + phi.center_.x[i] * lambda;
  return out;
}

SpatialTestFunction::SpatialTestFunction(PhiKind kind, int d)
    : kind_(kind), d_(d), m_(bump_exponent(kind)) {}

double SpatialTestFunction::operator()(std::span<const double> x) const {
  double v = 1.0;
  for (int i = 0; i < d_ && v != 0.0; ++i) v *= bump1(x[i], m_);
  return v;
}

double SpatialTestFunction::l2_squared() const {
  return std::pow(bump1_integral(2 * m_), d_);
}

GridFunction GridFunction::tensor(std::vector<ScalarSlot> factors) {
  GridFunction f;
  f.arity_ = static_cast<int>(factors.size());
  for (auto& s : factors) f.boxes_.push_back(s.box);
  f.factors_ = std::move(factors);
  return f;
}

GridFunction GridFunction::general(int arity,
                                   std::function<double(std::span<const Displacement>)> eval,
                                   std::vector<SupportBox> boxes) {
  if (static_cast<int>(boxes.size()) != arity)
    throw std::invalid_argument("GridFunction::general: one support box per slot required");
  GridFunction f;
  f.arity_ = arity;
  f.general_ = std::move(eval);
  f.boxes_ = std::move(boxes);
  return f;
}

double GridFunction::operator()(std::span<const Displacement> pts, int d) const {
  if (static_cast<int>(pts.size()) != arity_)
    throw std::invalid_argument("GridFunction: wrong number of points");
  for (int i = 0; i < arity_; ++i)
    if (!boxes_[i].contains(pts[i], d)) return 0.0;
  if (separable()) {
    double v = 1.0;
    for (int i = 0; i < arity_ && v != 0.0; ++i) v *= factors_[i].f(pts[i]);
    return v;
  }
  return general_(pts);
}

GridFunction GridFunction::bind(std::span<const int> slots,
                                std::span<const Displacement> pts, int d) const {
  if (slots.size() != pts.size()) throw std::invalid_argument("bind: size mismatch");
  std::vector<bool> bound(arity_, false);
  for (int s : slots) bound[s] = true;

  if (separable()) {
    double c = 1.0;
    for (std::size_t j = 0; j < slots.size(); ++j) {
      const auto& slot = factors_[slots[j]];
      c *= slot.box.contains(pts[j], d) ? slot.f(pts[j]) : 0.0;
    }
    std::vector<ScalarSlot> rest;
    for (int i = 0; i < arity_; ++i)
      if (!bound[i]) rest.push_back(factors_[i]);
    if (rest.empty()) {
      // Fully bound: keep a 0-ary constant as a general evaluator.
      return GridFunction::general(0, [c](std::span<const Displacement>) { return c; }, {});
    }
    // Fold the scalar into the first remaining factor.
    ScalarSlot first = rest[0];
    auto inner = first.f;
    first.f = [c, inner](const Displacement& z) { return c * inner(z); };
    rest[0] = first;
    return GridFunction::tensor(std::move(rest));
  }

  std::vector<Displacement> fixed(arity_);
  std::vector<int> free_slots;
  for (std::size_t j = 0; j < slots.size(); ++j) fixed[slots[j]] = pts[j];
  for (int i = 0; i < arity_; ++i)
    if (!bound[i]) free_slots.push_back(i);
  auto self_eval = general_;
  int n = arity_;
  std::vector<SupportBox> boxes;
  for (int i : free_slots) boxes.push_back(boxes_[i]);
  auto eval = [self_eval, fixed, free_slots, n](std::span<const Displacement> rest) {
    std::vector<Displacement> all(fixed);
    for (std::size_t j = 0; j < free_slots.size(); ++j) all[free_slots[j]] = rest[j];
    return self_eval(std::span<const Displacement>(all.data(), n));
  };
  return GridFunction::general(static_cast<int>(free_slots.size()), eval, boxes);
}

void for_each_grid_point(const SupportBox& box, const GridSpec& g,
                         const std::function<void(const Displacement&)>& fn) {
  const double dt = g.time_step();
  const long long m0 = static_cast<long long>(std::ceil(box.t_min / dt - 1e-9));
  const long long m1 = static_cast<long long>(std::floor(box.t_max / dt + 1e-9));
  const int n = g.n_sites();
  // Spatial window: sites whose wrapped displacement is within x_radius; each
  // torus site at most once, the wrap convention keeps +1/2 and drops -1/2.
  int r = static_cast<int>(std::floor(box.x_radius / g.eps + 1e-9));
  int lo = -r, hi = r;
  if (2 * r + 1 > n) {
    lo = -((n - 1) / 2);
    hi = n / 2;
  }
  const int width = hi - lo + 1;
  const int d = g.d();
  std::array<int, kMaxDim> ix{};
  for (long long m = m0; m <= m1; ++m) {
    Displacement z;
    z.t = dt * m;
    long long cells = 1;
    for (int i = 0; i < d; ++i) cells *= width;
    for (long long flat = 0; flat < cells; ++flat) {
      long long f = flat;
      for (int i = 0; i < d; ++i) {
        ix[i] = static_cast<int>(f % width) + lo;
        f /= width;
        z.x[i] = g.eps * ix[i];
      }
      fn(z);
    }
  }
}

double extend_to_distribution(const GridFunction& u,
                              const std::function<double(const Displacement&)>& phi,
                              const GridSpec& g) {
  if (u.arity() != 1) throw std::invalid_argument("extend_to_distribution: arity-1 input required");
  if (!u.box(0).finite())
    throw std::invalid_argument("extend_to_distribution: unbounded support rejected");
  const SupportBox& box = u.box(0);
  const double dt = g.time_step();
  const long long m0 = static_cast<long long>(std::floor(box.t_min / dt + 1e-9));
  const long long m1 = static_cast<long long>(std::ceil(box.t_max / dt - 1e-9));
  const int n = g.n_sites();
  const int d = g.d();
  const double wsp = std::pow(g.eps, d);
  long long cells = 1;
  for (int i = 0; i < d; ++i) cells *= n;

  double acc = 0.0;
  for (long long m = m0; m <= m1; ++m) {
    const double wt = (m == m0 || m == m1) ? 0.5 * dt : dt;
    for (long long flat = 0; flat < cells; ++flat) {
      long long f = flat;
      Displacement z;
      z.t = dt * m;
      for (int i = 0; i < d; ++i) {
        z.x[i] = g.wrap(g.eps * static_cast<int>(f % n));
        f /= n;
      }
      Displacement pt[1] = {z};
      double uv = u(std::span<const Displacement>(pt, 1), d);
      if (uv != 0.0) acc += wt * uv * phi(z);
    }
  }
  return wsp * acc;
}

double extend_to_distribution(const GridFunction& u, const TestFunction& phi,
                              const GridSpec& g) {
  return extend_to_distribution(
      u, [&phi](const Displacement& z) { return phi(z); }, g);
}

double l2_eps_norm(const GridFunction& f, const GridSpec& g) {
  const double w = g.cell_weight();
  const int d = g.d();
  if (f.separable()) {
    double prod = 1.0;
    for (int s = 0; s < f.arity(); ++s) {
      const auto& slot = f.factors()[s];
      double acc = 0.0;
      for_each_grid_point(slot.box, g, [&](const Displacement& z) {
        double v = slot.f(z);
        acc += v * v;
      });
      prod *= w * acc;
    }
    return std::sqrt(prod);
  }
  if (f.arity() > 3)
    throw std::invalid_argument("l2_eps_norm: non-separable input limited to arity <= 3");
  // Nested iteration over all slots.
  std::vector<Displacement> pts(f.arity());
  double acc = 0.0;
  std::function<void(int)> rec = [&](int slot) {
    if (slot == f.arity()) {
      double v = f(std::span<const Displacement>(pts.data(), pts.size()), d);
      acc += v * v;
      return;
    }
    for_each_grid_point(f.box(slot), g, [&](const Displacement& z) {
      pts[slot] = z;
      rec(slot + 1);
    });
  };
  rec(0);
  return std::sqrt(acc * std::pow(w, f.arity()));
}

}  // namespace spdelab
