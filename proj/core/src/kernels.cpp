#include "spdelab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <stdexcept>

#include <fftw3.h>
#include <nlohmann/json.hpp>

namespace spdelab {

namespace {

double smoothstep01(double u) {
  // C^inf transition: 0 for u <= 0, 1 for u >= 1.
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  auto f = [](double v) { return std::exp(-1.0 / v); };
  return f(u) / (f(u) + f(1.0 - u));
}

/// chi: 1 on ||z|| <= 1/2, 0 outside ||z|| <= 1.
double chi_cutoff(double rho) { return 1.0 - smoothstep01(2.0 * (rho - 0.5)); }

void for_each_mode(const GridSpec& g, const std::function<void(std::span<const int>, double)>& fn) {
  const int n = g.n_sites();
  const int d = g.d();
  std::array<int, kMaxDim> k{};
  long long total = 1;
  for (int i = 0; i < d; ++i) total *= n;
  for (long long flat = 0; flat < total; ++flat) {
    long long f = flat;
    for (int i = 0; i < d; ++i) {
      k[i] = static_cast<int>(f % n);
      f /= n;
    }
    double lam = 0.0;
    for (int i = 0; i < d; ++i)
      lam -= 2.0 / (g.eps * g.eps) * (1.0 - std::cos(2.0 * M_PI * k[i] * g.eps));
    fn(std::span<const int>(k.data(), d), lam);
  }
}

SpaceTimeField reflect(const SpaceTimeField& f) {
  SpaceTimeField out = f;
  out.t0 = -(f.t0 + f.nt - 1);
  for (long long it = 0; it < f.nt; ++it) {
    for (long long c = 0; c < f.spatial_cells(); ++c) {
      long long flat = c, rflat = 0, stride = 1;
      for (int i = 0; i < f.d; ++i) {
        long long xi = flat % f.n;
        flat /= f.n;
        rflat += ((f.n - xi) % f.n) * stride;
        stride *= f.n;
      }
      out.at(f.nt - 1 - it, rflat) = f.at(it, c);
    }
  }
  return out;
}

SpaceTimeField pointwise_square(const SpaceTimeField& f) {
  SpaceTimeField out = f;
  for (auto& v : out.data) v *= v;
  return out;
}

/// Pointwise product on the overlap of the absolute time ranges.
SpaceTimeField aligned_product(const SpaceTimeField& a, const SpaceTimeField& b) {
  if (a.n != b.n || a.d != b.d)
    throw std::invalid_argument("aligned_product: spatial shape mismatch");
  const long long lo = std::max(a.t0, b.t0);
  const long long hi = std::min(a.t0 + a.nt, b.t0 + b.nt);
  SpaceTimeField out;
  out.d = a.d;
  out.n = a.n;
  out.t0 = lo;
  out.nt = std::max<long long>(0, hi - lo);
  out.data.assign(static_cast<std::size_t>(out.nt * out.spatial_cells()), 0.0);
  for (long long it = lo; it < hi; ++it)
    for (long long c = 0; c < out.spatial_cells(); ++c)
      out.at(it - lo, c) = a.at(it - a.t0, c) * b.at(it - b.t0, c);
  return out;
}

}  // namespace

double LatticeKernel::value_index(long long m, long long flat) const {
  if (m < field.t0 || m >= field.t0 + field.nt) return 0.0;
  return field.at(m - field.t0, flat);
}

double LatticeKernel::operator()(const Displacement& z) const {
  const double dt = grid.time_step();
  const double mr = z.t / dt;
  const long long m = static_cast<long long>(std::llround(mr));
  if (std::fabs(mr - m) > 1e-6)
    throw std::invalid_argument("LatticeKernel: time not on the eps^2 lattice");
  long long flat = 0, stride = 1;
  for (int i = 0; i < grid.d(); ++i) {
    double xr = z.x[i] / grid.eps;
    long long xi = static_cast<long long>(std::llround(xr));
    if (std::fabs(xr - xi) > 1e-6)
      throw std::invalid_argument("LatticeKernel: point not on the spatial lattice");
    flat += static_cast<long long>(grid.wrap_site(xi)) * stride;
    stride *= grid.n_sites();
  }
  return value_index(m, flat);
}

double LatticeKernel::derivative(const Displacement& z, std::span<const int> k) const {
  // Recursive finite differences: centered in space, centered in time in the
  // interior and one-sided at the ends of the time support.
  int axis = -1;
  for (std::size_t i = 0; i < k.size(); ++i)
    if (k[i] > 0) {
      axis = static_cast<int>(i);
      break;
    }
  if (axis < 0) return (*this)(z);

  std::vector<int> k2(k.begin(), k.end());
  --k2[axis];
  auto sub = [&](const Displacement& p) {
    return derivative(p, std::span<const int>(k2.data(), k2.size()));
  };

  if (axis == 0) {
    const double h = grid.time_step();
    const double lo = min_time(), hi = sup_time();
    Displacement zp = z, zm = z;
    zp.t += h;
    zm.t -= h;
    if (z.t - h < lo - 1e-12) {
      Displacement z2 = z;
      z2.t += 2 * h;
      return (-3.0 * sub(z) + 4.0 * sub(zp) - sub(z2)) / (2.0 * h);
    }
    if (z.t + h > hi + 1e-12) {
      Displacement z2 = z;
      z2.t -= 2 * h;
      return (3.0 * sub(z) - 4.0 * sub(zm) + sub(z2)) / (2.0 * h);
    }
    return (sub(zp) - sub(zm)) / (2.0 * h);
  }
  const double h = grid.eps;
  Displacement zp = z, zm = z;
  zp.x[axis - 1] += h;
  zm.x[axis - 1] -= h;
  return (sub(zp) - sub(zm)) / (2.0 * h);
}

double laplacian_eigenvalue(const GridSpec& grid, std::span<const int> mode) {
  double lam = 0.0;
  for (int i = 0; i < grid.d(); ++i)
    lam -= 2.0 / (grid.eps * grid.eps) * (1.0 - std::cos(2.0 * M_PI * mode[i] * grid.eps));
  return lam;
}

LatticeKernel discrete_green_function(const GridSpec& grid, double horizon) {
  grid.validate();
  const int d = grid.d();
  const int n = grid.n_sites();
  const long long cells = grid.site_count();
  const long long slices = static_cast<long long>(std::llround(horizon / grid.time_step())) + 1;

  LatticeKernel out;
  out.grid = grid;
  out.a = d;  // heat-kernel singularity index |s| - 2
  out.field.d = d;
  out.field.n = n;
  out.field.nt = slices;
  out.field.t0 = 0;
  out.field.data.assign(static_cast<std::size_t>(slices * cells), 0.0);

  // Tabulate eigenvalues once.
  std::vector<double> lam(static_cast<std::size_t>(cells));
  {
    long long idx = 0;
    for_each_mode(grid, [&](std::span<const int>, double l) { lam[idx++] = l; });
  }

  std::vector<std::complex<double>> freq(static_cast<std::size_t>(cells));
  std::vector<std::complex<double>> spat(static_cast<std::size_t>(cells));
  std::vector<int> dims(d, n);
  std::lock_guard<std::mutex> lock(fftw_plan_lock());
  fftw_plan plan = fftw_plan_dft(d, dims.data(),
                                 reinterpret_cast<fftw_complex*>(freq.data()),
                                 reinterpret_cast<fftw_complex*>(spat.data()),
                                 FFTW_BACKWARD, FFTW_ESTIMATE);
  for (long long m = 0; m < slices; ++m) {
    const double t = m * grid.time_step();
    for (long long c = 0; c < cells; ++c) freq[c] = std::exp(lam[c] * t);
    fftw_execute(plan);
    // inverse DFT without 1/N^d: G(t,x) = sum_k e^{lam t} e^{2pi i k x}
    for (long long c = 0; c < cells; ++c) out.field.at(m, c) = spat[c].real();
  }
  fftw_destroy_plan(plan);
  return out;
}

GreenSplit split_green(const LatticeKernel& green, const SplitOptions& opt) {
  const GridSpec& g = green.grid;
  GreenSplit out;
  out.slab = green;
  out.singular = green;
  out.remainder = green;
  out.singular.q = opt.q;
  out.singular.a = g.d();

  const long long slab_slices =
      std::max<long long>(1, static_cast<long long>(std::llround(opt.slab_c)));
  const long long cells = g.site_count();
  const double plateau = opt.subtract_plateau ? 1.0 : 0.0;

  for (long long m = 0; m < green.field.nt; ++m) {
    const double t = m * g.time_step();
    for (long long c = 0; c < cells; ++c) {
      const double gv = green.field.at(m, c);
      double slab = 0.0, sing = 0.0;
      if (m < slab_slices) {
        slab = gv;
      } else {
        Site s = flat_to_site(c, g);
        Displacement z;
        z.t = t;
        for (int i = 0; i < g.d(); ++i) z.x[i] = g.wrap(g.eps * s.idx[i]);
        const double rho = parabolic_norm(z, g.scaling);
        sing = chi_cutoff(rho) * (gv - plateau);
      }
      out.slab.field.at(m, c) = slab;
      out.singular.field.at(m, c) = sing;
      out.remainder.field.at(m, c) = gv - slab - sing;
    }
  }
  return out;
}

namespace {

LatticeKernel spatial_difference(const LatticeKernel& k, bool centered) {
  if (k.grid.d() != 1)
    throw std::invalid_argument("gradient kernels are d = 1 only");
  LatticeKernel out = k;
  const int n = k.grid.n_sites();
  for (long long m = 0; m < k.field.nt; ++m) {
    for (int x = 0; x < n; ++x) {
      const double right = k.field.at(m, (x + 1) % n);
      if (centered) {
        const double left = k.field.at(m, (x + n - 1) % n);
        out.field.at(m, x) = (right - left) / (2.0 * k.grid.eps);
      } else {
        out.field.at(m, x) = (right - k.field.at(m, x)) / k.grid.eps;
      }
    }
  }
  out.a = k.a - 1.0 + 0.0;  // one more inverse power of the distance
  return out;
}

}  // namespace

LatticeKernel gradient_kernel(const LatticeKernel& k) {
  LatticeKernel out = spatial_difference(k, true);
  out.a = 2.0;  // d = 1: gradient of the heat kernel carries a = 2
  return out;
}

LatticeKernel forward_gradient_kernel(const LatticeKernel& k) {
  LatticeKernel out = spatial_difference(k, false);
  out.a = 2.0;
  return out;
}

double kernel_norm(const LatticeKernel& k, double a, int q) {
  if (q > 3) throw std::invalid_argument("kernel_norm: q <= 3 supported");
  const GridSpec& g = k.grid;
  const int d = g.d();

  // Multi-indices with |k|_s < q (strict).
  std::vector<std::vector<int>> multis;
  std::vector<int> mi(d + 1, 0);
  std::function<void(int)> gen = [&](int axis) {
    if (axis == d + 1) {
      double w = 2.0 * mi[0];
      for (int i = 1; i <= d; ++i) w += mi[i];
      if (w < q) multis.push_back(mi);
      return;
    }
    for (int v = 0; v <= 2; ++v) {
      mi[axis] = v;
      gen(axis + 1);
    }
    mi[axis] = 0;
  };
  gen(0);

  double sup = 0.0;
  const long long cells = g.site_count();
  for (long long m = 0; m < k.field.nt; ++m) {
    const double t = (k.field.t0 + m) * g.time_step();
    for (long long c = 0; c < cells; ++c) {
      if (k.field.at(m, c) == 0.0) {
        // Interior zeros dominate for compact kernels; keep support-edge
        // points where neighbours are nonzero so derivatives get probed.
        bool all_zero = true;
        for (long long mm = std::max<long long>(0, m - 2);
             mm <= std::min(k.field.nt - 1, m + 2) && all_zero; ++mm)
          if (k.field.at(mm, c) != 0.0) all_zero = false;
        if (all_zero) continue;
      }
      Site s = flat_to_site(c, g);
      Displacement z;
      z.t = t;
      for (int i = 0; i < d; ++i) z.x[i] = g.wrap(g.eps * s.idx[i]);
      const double rho = std::max(parabolic_norm(z, g.scaling), g.eps);
      for (const auto& mult : multis) {
        double kw = 2.0 * mult[0];
        for (int i = 1; i <= d; ++i) kw += mult[i];
        const double dv = k.derivative(z, std::span<const int>(mult.data(), mult.size()));
        const double val = std::pow(rho, a + kw) * std::fabs(dv);
        if (val > sup) sup = val;
      }
    }
  }
  return sup;
}

double dyadic_cutoff(double rho, int n, int levels) {
  auto u = [&](int j) {
    // u_j = 1 for rho <= 2^{-(j+1)}, 0 for rho >= 2^{-j}
    const double hi = std::ldexp(1.0, -j);
    return 1.0 - smoothstep01(2.0 * (rho / hi - 0.5));
  };
  if (n == 0) return 1.0 - u(1);
  if (n == levels) return u(levels);
  return u(n) - u(n + 1);
}

DyadicDecomposition dyadic_decompose(const LatticeKernel& k) {
  const GridSpec& g = k.grid;
  DyadicDecomposition out;
  out.levels = static_cast<int>(-std::floor(std::log2(g.eps)));
  const int N = out.levels;

  double max_rho = 0.0;
  const long long cells = g.site_count();
  for (long long m = 0; m < k.field.nt; ++m) {
    const double t = (k.field.t0 + m) * g.time_step();
    for (long long c = 0; c < cells; ++c) {
      if (k.field.at(m, c) == 0.0) continue;
      Site s = flat_to_site(c, g);
      Displacement z;
      z.t = t;
      for (int i = 0; i < g.d(); ++i) z.x[i] = g.wrap(g.eps * s.idx[i]);
      max_rho = std::max(max_rho, parabolic_norm(z, g.scaling));
    }
  }
  if (max_rho > 1.0 + 1e-9)
    throw std::invalid_argument("dyadic_decompose: kernel support exceeds the unit ball");

  for (int n = 0; n <= N; ++n) {
    SpaceTimeField piece = k.field;
    for (long long m = 0; m < k.field.nt; ++m) {
      const double t = (k.field.t0 + m) * g.time_step();
      for (long long c = 0; c < cells; ++c) {
        Site s = flat_to_site(c, g);
        Displacement z;
        z.t = t;
        for (int i = 0; i < g.d(); ++i) z.x[i] = g.wrap(g.eps * s.idx[i]);
        piece.at(m, c) = k.field.at(m, c) * dyadic_cutoff(parabolic_norm(z, g.scaling), n, N);
      }
    }
    out.pieces.push_back(std::move(piece));
  }
  return out;
}

double positive_renormalize(const LatticeKernel& k, int r, const Displacement& zm,
                            const Displacement& zp) {
  if (r < 0) throw std::invalid_argument("positive_renormalize: r >= 0 required");
  const GridSpec& g = k.grid;
  Displacement diff = zp;
  diff.t -= zm.t;
  for (int i = 0; i < g.d(); ++i) diff.x[i] = g.wrap(diff.x[i] - zm.x[i]);
  double v = k(diff);
  if (r == 0) return v;

  Displacement neg;
  neg.t = -zm.t;
  for (int i = 0; i < g.d(); ++i) neg.x[i] = g.wrap(-zm.x[i]);

  // Subtract the Taylor jet sum_{|k|_s < r} zp^k / k! D^k K(-zm).
  const int d = g.d();
  std::vector<int> mi(d + 1, 0);
  double jet = 0.0;
  std::function<void(int)> rec2 = [&](int axis) {
    if (axis == d + 1) {
      double w = 2.0 * mi[0];
      for (int i = 1; i <= d; ++i) w += mi[i];
      if (w < r) {
        double mono = 1.0, fact = 1.0;
        for (int p = 0; p < mi[0]; ++p) mono *= zp.t;
        for (int p = 2; p <= mi[0]; ++p) fact *= p;
        for (int i = 1; i <= d; ++i) {
          for (int p = 0; p < mi[i]; ++p) mono *= zp.x[i - 1];
          for (int p = 2; p <= mi[i]; ++p) fact *= p;
        }
        jet += mono / fact * k.derivative(neg, std::span<const int>(mi.data(), mi.size()));
      }
      return;
    }
    for (int v2 = 0; v2 <= 2; ++v2) {
      mi[axis] = v2;
      rec2(axis + 1);
    }
    mi[axis] = 0;
  };
  rec2(0);
  return v - jet;
}

double GridMeasure::total_variation(const GridSpec& g) const {
  long long count = 0;
  for_each_grid_point(window, g, [&](const Displacement&) { ++count; });
  return g.cell_weight() * static_cast<double>(count);
}

double taylor_renormalize(const LatticeKernel& k, int r,
                          const std::function<double(const Displacement&, const Displacement&)>& phi,
                          const GridMeasure& mu_minus, const GridMeasure& mu_plus,
                          const std::map<std::vector<int>, double>& constants,
                          const GridSpec& g) {
  if (r >= 0)
    throw std::invalid_argument("taylor_renormalize: r < 0 required (use positive_renormalize)");
  const int d = g.d();
  const double w = g.cell_weight();

  // Multi-indices with |k|_s < |r|.
  std::vector<std::vector<int>> multis;
  std::vector<int> mi(d + 1, 0);
  std::function<void(int)> gen = [&](int axis) {
    if (axis == d + 1) {
      double kw = 2.0 * mi[0];
      for (int i = 1; i <= d; ++i) kw += mi[i];
      if (kw < -r) multis.push_back(mi);
      return;
    }
    for (int v = 0; v <= 2; ++v) {
      mi[axis] = v;
      gen(axis + 1);
    }
    mi[axis] = 0;
  };
  gen(0);
  for (const auto& m : multis) {
    bool all0 = std::all_of(m.begin(), m.end(), [](int v) { return v == 0; });
    if (!all0 && !constants.count(m))
      throw std::invalid_argument("taylor_renormalize: missing I constant for a jet index");
    if (all0 && !constants.count(m))
      throw std::invalid_argument("taylor_renormalize: missing I constant for k = 0");
  }

  // Lattice finite difference of phi in its second argument.
  std::function<double(const Displacement&, const Displacement&, std::span<const int>)> d2phi =
      [&](const Displacement& zm, const Displacement& zp, std::span<const int> kk) -> double {
    int axis = -1;
    for (std::size_t i = 0; i < kk.size(); ++i)
      if (kk[i] > 0) {
        axis = static_cast<int>(i);
        break;
      }
    if (axis < 0) return phi(zm, zp);
    std::vector<int> k2(kk.begin(), kk.end());
    --k2[axis];
    Displacement zp1 = zp, zp2 = zp;
    double h;
    if (axis == 0) {
      h = g.time_step();
      zp1.t += h;
      zp2.t -= h;
    } else {
      h = g.eps;
      zp1.x[axis - 1] += h;
      zp2.x[axis - 1] -= h;
    }
    return (d2phi(zm, zp1, std::span<const int>(k2.data(), k2.size())) -
            d2phi(zm, zp2, std::span<const int>(k2.data(), k2.size()))) /
           (2.0 * h);
  };

  auto t_r_phi = [&](const Displacement& zm, const Displacement& zp) {
    double v = phi(zm, zp);
    for (const auto& kk : multis) {
      double mono = 1.0, fact = 1.0;
      for (int p = 0; p < kk[0]; ++p) mono *= (zp.t - zm.t);
      for (int p = 2; p <= kk[0]; ++p) fact *= p;
      for (int i = 1; i <= d; ++i) {
        for (int p = 0; p < kk[i]; ++p) mono *= g.wrap(zp.x[i - 1] - zm.x[i - 1]);
        for (int p = 2; p <= kk[i]; ++p) fact *= p;
      }
      v -= mono / fact * d2phi(zm, zm, std::span<const int>(kk.data(), kk.size()));
    }
    return v;
  };

  double acc = 0.0;
  for_each_grid_point(mu_minus.window, g, [&](const Displacement& zm) {
    for_each_grid_point(mu_plus.window, g, [&](const Displacement& zp) {
      Displacement diff = zp;
      diff.t -= zm.t;
      for (int i = 0; i < d; ++i) diff.x[i] = g.wrap(diff.x[i] - zm.x[i]);
      double kv;
      try {
        kv = k(diff);
      } catch (const std::invalid_argument&) {
        kv = 0.0;
      }
      if (kv != 0.0) acc += w * w * kv * t_r_phi(zm, zp);
    });
  });

  double diag = 0.0;
  for (const auto& kk : multis) {
    double fact = 1.0;
    for (int p = 2; p <= kk[0]; ++p) fact *= p;
    for (int i = 1; i <= d; ++i)
      for (int p = 2; p <= kk[i]; ++p) fact *= p;
    double ic = constants.at(kk);
    if (ic == 0.0) continue;
    double inner = 0.0;
    for_each_grid_point(mu_minus.window, g,
                        [&](const Displacement& zm) { inner += w * phi(zm, zm); });
    diag += ic / fact * inner;
  }
  return acc + diag;
}

// --- generalized convolution -------------------------------------------------

double generalized_convolution(const BoundGraph& bg, const Displacement& center,
                               std::span<const Displacement> noise_positions,
                               const GridSpec& g) {
  const LabeledMultigraph& graph = *bg.graph;
  auto noise = graph.noise_set();
  if (noise_positions.size() != noise.size())
    throw std::invalid_argument("generalized_convolution: one pinned point per noise vertex");
  const int star = graph.star_index();
  const int d = g.d();
  const double w = g.cell_weight();

  // Collect integration vertices (ups and internals).
  std::vector<int> integ;
  for (std::size_t i = 0; i < graph.vertices.size(); ++i) {
    auto role = graph.vertices[i].role;
    if (role == VertexRole::up || role == VertexRole::internal)
      integ.push_back(static_cast<int>(i));
  }

  // Budget: window cells ^ #integration vertices.
  long long window_cells = 0;
  for_each_grid_point(bg.default_window, g, [&](const Displacement&) { ++window_cells; });
  double est = 1.0;
  for (std::size_t i = 0; i < integ.size(); ++i) est *= static_cast<double>(window_cells);
  if (est > bg.budget)
    throw std::runtime_error("generalized_convolution: estimated cost " +
                             std::to_string(est) + " exceeds budget " +
                             std::to_string(bg.budget));

  std::vector<Displacement> pos(graph.vertices.size());
  if (star >= 0) pos[star] = center;
  for (std::size_t i = 0; i < noise.size(); ++i) pos[noise[i]] = noise_positions[i];

  auto edge_factor = [&](const GraphEdge& e) -> double {
    if (e.from == star) {
      // test-function edge; the phi factor is applied per up vertex below
      return 1.0;
    }
    auto it = bg.kernels.find(e.kernel);
    if (it == bg.kernels.end())
      throw std::invalid_argument("generalized_convolution: no kernel bound for id " + e.kernel);
    const LatticeKernel& k = *it->second;
    if (e.r < 0)
      throw std::invalid_argument("generalized_convolution: r < 0 edges are power-counting only");
    if (e.r == 0) {
      Displacement diff = pos[e.to];
      diff.t -= pos[e.from].t;
      for (int i = 0; i < d; ++i) diff.x[i] = g.wrap(diff.x[i] - pos[e.from].x[i]);
      return k(diff);
    }
    // recentered positive renormalization: shift all variables by center
    Displacement zm = pos[e.from], zp = pos[e.to];
    zm.t -= center.t;
    zp.t -= center.t;
    for (int i = 0; i < d; ++i) {
      zm.x[i] = g.wrap(zm.x[i] - center.x[i]);
      zp.x[i] = g.wrap(zp.x[i] - center.x[i]);
    }
    return positive_renormalize(k, e.r, zm, zp);
  };

  double total = 0.0;
  std::function<void(std::size_t, double)> rec = [&](std::size_t vi, double weight) {
    if (vi == integ.size()) {
      double prod = weight;
      for (const auto& e : graph.edges) {
        prod *= edge_factor(e);
        if (prod == 0.0) return;
      }
      total += prod;
      return;
    }
    const int v = integ[vi];
    const bool is_up = graph.vertices[v].role == VertexRole::up;
    for_each_grid_point(bg.default_window, g, [&](const Displacement& zrel) {
      Displacement z = zrel;
      z.t += center.t;
      for (int i = 0; i < d; ++i) z.x[i] = g.wrap(z.x[i] + center.x[i]);
      pos[v] = z;
      double f = w;
      if (is_up) {
        f *= bg.test(zrel);
        if (f == 0.0) return;
      }
      rec(vi + 1, weight * f);
    });
  };
  rec(0, 1.0);
  return total;
}

// --- renormalization constants ------------------------------------------------

namespace {

/// Exact per-mode time integral of the squared (gradient-)Green's function
/// over (0, horizon], mass mode excluded.
double kernel_energy(const GridSpec& g, bool gradient, double horizon) {
  double acc = 0.0;
  for_each_mode(g, [&](std::span<const int> mode, double lam) {
    bool zero = true;
    for (int i = 0; i < g.d(); ++i)
      if (mode[i] != 0) zero = false;
    if (zero) return;
    double coef = 1.0;
    if (gradient) {
      const double s = std::sin(2.0 * M_PI * mode[0] * g.eps) / g.eps;
      coef = s * s;
    }
    acc += coef * (1.0 - std::exp(2.0 * lam * horizon)) / (-2.0 * lam);
  });
  return acc;
}

}  // namespace

Phi4Constants renorm_constants_phi4(const GridSpec& grid, double c2_eps_cap, bool force_c2) {
  if (grid.d() != 3) throw std::invalid_argument("renorm_constants_phi4: d = 3 required");
  Phi4Constants out;
  out.c1 = kernel_energy(grid, false, 1.0);

  if (grid.eps < c2_eps_cap - 1e-12 && !force_c2) {
    out.c2_computed = false;
    out.note = "c2 refused: eps below the default mesh cap (cost grows like N^6); override to force";
    return out;
  }
  LatticeKernel green = discrete_green_function(grid, 1.0);
  GreenSplit split = split_green(green);
  const SpaceTimeField& K = split.singular.field;
  const double w = grid.cell_weight();

  SpaceTimeField B = correlate(K, K);          // sum_u K(w-u) K(-u)
  SpaceTimeField B2 = pointwise_square(B);
  SpaceTimeField Kref = reflect(K);            // K(-w)
  out.c2 = 2.0 * w * w * w * dot(Kref, B2);
  out.c2_computed = true;
  return out;
}

KpzConstants renorm_constants_kpz(const GridSpec& grid) {
  if (grid.d() != 1) throw std::invalid_argument("renorm_constants_kpz: d = 1 required");
  KpzConstants out;
  out.c1 = kernel_energy(grid, true, 1.0);

  LatticeKernel green = discrete_green_function(grid, 1.0);
  GreenSplit split = split_green(green);
  LatticeKernel D = gradient_kernel(split.singular);
  LatticeKernel Dp = forward_gradient_kernel(split.singular);
  const double w = grid.cell_weight();

  // c_eps: triple product diagram; exactly zero for the centered difference by
  // antisymmetry, evaluated with the one-sided gradient.
  {
    SpaceTimeField Q = correlate(Dp.field, Dp.field);
    out.c_eps = w * w * dot(Dp.field, Q);
  }
  // C2: two-rung ladder (4 internal vertices, 6 gradient kernels).
  {
    SpaceTimeField Q = correlate(D.field, D.field);
    SpaceTimeField P = pointwise_square(Q);
    SpaceTimeField E = correlate(P, D.field);
    SpaceTimeField Dref = reflect(D.field);
    out.c2 = 4.0 * w * w * w * w * dot(Dref, E);
  }
  // C3: the remaining loop diagram with the test vertex pinned at the origin.
  {
    SpaceTimeField Q = correlate(D.field, D.field);
    SpaceTimeField R = aligned_product(D.field, Q);
    SpaceTimeField conv = convolve(R, D.field);
    SpaceTimeField convref = reflect(conv);
    out.c3 = 2.0 * w * w * w * w * dot(Q, convref);
  }
  return out;
}

ModelSymbol model_symbol_from_name(const std::string& s) {
  if (s == "Xi" || s == "xi") return ModelSymbol::Xi;
  if (s == "Psi" || s == "psi") return ModelSymbol::Psi;
  if (s == "Psi2" || s == "psi2") return ModelSymbol::Psi2;
  throw std::invalid_argument("unknown model symbol: " + s);
}

Equation equation_from_name(const std::string& s) {
  if (s == "phi4") return Equation::phi4;
  if (s == "kpz") return Equation::kpz;
  throw std::invalid_argument("unknown equation: " + s);
}

double model_second_moment(ModelSymbol symbol, Equation eq, double lambda,
                           const GridSpec& grid, PhiKind phi_kind) {
  if (!(lambda > 0.0 && lambda <= 1.0))
    throw std::invalid_argument("model_second_moment: lambda in (0,1] required");
  const int d = grid.d();
  if (eq == Equation::phi4 && d != 3)
    throw std::invalid_argument("model_second_moment: phi4 symbols live in d = 3");
  if (eq == Equation::kpz && d != 1)
    throw std::invalid_argument("model_second_moment: kpz symbols live in d = 1");

  const double w = grid.cell_weight();
  const double dtstep = grid.time_step();

  // Cell-averaged rescaled test function tabulated on its support window.
  TestFunction base(phi_kind, d);
  TestFunction phi = rescale_test_function(base, lambda, {});
  const long long mt = static_cast<long long>(
      std::ceil(phi.time_radius() / dtstep + 0.5));
  SpaceTimeField A;
  A.d = d;
  A.n = grid.n_sites();
  A.nt = 2 * mt + 1;
  A.t0 = -mt;
  A.data.assign(static_cast<std::size_t>(A.nt * A.spatial_cells()), 0.0);
  for (long long m = -mt; m <= mt; ++m) {
    for (long long c = 0; c < A.spatial_cells(); ++c) {
      Site s = flat_to_site(c, grid);
      Displacement z;
      z.t = m * dtstep;
      for (int i = 0; i < d; ++i) z.x[i] = grid.wrap(grid.eps * s.idx[i]);
      if (parabolic_norm(z, grid.scaling) > 2.0 * lambda + 2.0 * grid.eps) continue;
      A.at(m + mt, c) = phi.cell_average(z, grid);
    }
  }

  if (symbol == ModelSymbol::Xi) {
    double acc = 0.0;
    for (double v : A.data) acc += v * v;
    return w * acc;
  }

  LatticeKernel green = discrete_green_function(grid, 1.0);
  GreenSplit split = split_green(green);
  LatticeKernel Kg = (eq == Equation::kpz) ? gradient_kernel(split.singular)
                                           : split.singular;

  if (symbol == ModelSymbol::Psi) {
    SpaceTimeField F = correlate(A, Kg.field);  // f_lambda / w
    return w * w * w * dot(F, F);
  }

  // Psi2: 2 ||g||^2 + eps^{|s|} * int g(z,z)^2.
  SpaceTimeField Q = correlate(Kg.field, Kg.field);
  SpaceTimeField P = pointwise_square(Q);
  SpaceTimeField PA = convolve(P, A);
  const double norm_g_sq = w * w * w * w * dot(A, PA);
  SpaceTimeField K2 = pointwise_square(Kg.field);
  SpaceTimeField Gdiag = correlate(A, K2);
  const double diag = w * w * w * w * dot(Gdiag, Gdiag);
  return 2.0 * norm_g_sq + diag;
}

double euler_chain_variance(const GridSpec& grid, double dt, double t, bool gradient) {
  const long long n = static_cast<long long>(std::llround(t / dt));
  double acc = 0.0;
  for_each_mode(grid, [&](std::span<const int> mode, double lam) {
    bool zero = true;
    for (int i = 0; i < grid.d(); ++i)
      if (mode[i] != 0) zero = false;
    double coef = 1.0;
    if (gradient) {
      if (zero) return;
      const double s = std::sin(2.0 * M_PI * mode[0] * grid.eps) / grid.eps;
      coef = s * s;
    }
    const double ahat = 1.0 + dt * lam;
    double series;
    if (zero) {
      series = static_cast<double>(n);
    } else {
      const double a2 = ahat * ahat;
      series = (1.0 - std::pow(a2, static_cast<double>(n))) / (1.0 - a2);
    }
    acc += coef * dt * series;
  });
  return acc;
}

void save_kernel(const LatticeKernel& k, const std::string& path_prefix) {
  nlohmann::json j;
  j["d"] = k.grid.d();
  j["eps"] = k.grid.eps;
  j["horizon"] = k.grid.horizon;
  j["a"] = k.a;
  j["q"] = k.q;
  j["t0"] = k.field.t0;
  j["nt"] = k.field.nt;
  j["n"] = k.field.n;
  std::ofstream hdr(path_prefix + ".json");
  hdr << j.dump(2) << "\n";
  std::ofstream bin(path_prefix + ".bin", std::ios::binary);
  bin.write(reinterpret_cast<const char*>(k.field.data.data()),
            static_cast<std::streamsize>(k.field.data.size() * sizeof(double)));
}

LatticeKernel load_kernel(const std::string& path_prefix) {
  std::ifstream hdr(path_prefix + ".json");
  if (!hdr) throw std::runtime_error("load_kernel: missing header " + path_prefix + ".json");
  nlohmann::json j;
  hdr >> j;
  LatticeKernel k;
  k.grid = GridSpec(j.at("d").get<int>(), j.at("eps").get<double>(),
                    j.at("horizon").get<double>());
  k.a = j.at("a").get<double>();
  k.q = j.at("q").get<int>();
  k.field.d = k.grid.d();
  k.field.n = j.at("n").get<int>();
  k.field.t0 = j.at("t0").get<long long>();
  k.field.nt = j.at("nt").get<long long>();
  k.field.data.resize(static_cast<std::size_t>(k.field.nt * k.field.spatial_cells()));
  std::ifstream bin(path_prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("load_kernel: missing data " + path_prefix + ".bin");
  bin.read(reinterpret_cast<char*>(k.field.data.data()),
           static_cast<std::streamsize>(k.field.data.size() * sizeof(double)));
  return k;
}

}  // namespace spdelab
