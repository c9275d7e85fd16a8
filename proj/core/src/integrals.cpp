#include "spdelab/integrals.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace spdelab {

namespace {

double support_clock(const GridFunction& f) {
  double c = 0.0;
  for (int s = 0; s < f.arity(); ++s)
    c = std::max(c, std::max(std::fabs(f.box(s).t_min), std::fabs(f.box(s).t_max)));
  return c;
}

Displacement jump_displacement(const JumpRecord& j, const GridSpec& g) {
  Displacement z;
  z.t = j.time;
  Site s = flat_to_site(j.site, g);
  for (int i = 0; i < g.d(); ++i) z.x[i] = g.wrap(g.eps * s.idx[i]);
  return z;
}

/// Clock grid shared by every process of one pathwise evaluation: all jump
/// clocks in the window, optionally the eps^2 lattice with local refinement
/// next to jumps (used for compensator quadrature).
struct ClockGrid {
  std::vector<double> clock;       // strictly increasing, clock[0] == 0
  std::vector<int> jump_at;        // index into jumps, or -1
  std::vector<JumpRecord> jumps;   // sorted by |time|
  std::vector<Displacement> jump_pos;

  ClockGrid(const MartingaleField& M, double clock_max, bool with_lattice,
            const QuadratureOptions& quad) {
    const GridSpec& g = M.grid();
    jumps = M.jumps_in_clock_window(clock_max);
    jump_pos.reserve(jumps.size());
    for (const auto& j : jumps) jump_pos.push_back(jump_displacement(j, g));

    std::vector<double> nodes;
    nodes.push_back(0.0);
    for (const auto& j : jumps) nodes.push_back(std::fabs(j.time));
    if (with_lattice) {
      const double dt = g.time_step() / std::max(1, quad.time_oversample);
      for (double u = dt; u <= clock_max + 1e-15; u += dt) nodes.push_back(u);
      const double h = dt / std::max(1, quad.refine_near_jumps);
      for (const auto& j : jumps) {
        double c = std::fabs(j.time);
        for (int r = 1; r < quad.refine_near_jumps; ++r) {
          if (c - r * h > 0.0) nodes.push_back(c - r * h);
          if (c + r * h < clock_max) nodes.push_back(c + r * h);
        }
      }
      nodes.push_back(clock_max);
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end(),
                            [](double a, double b) { return std::fabs(a - b) < 1e-15; }),
                nodes.end());

    clock = std::move(nodes);
    jump_at.assign(clock.size(), -1);
    std::size_t ji = 0;
    for (std::size_t i = 0; i < clock.size(); ++i) {
      while (ji < jumps.size() && std::fabs(jumps[ji].time) < clock[i] - 1e-15) ++ji;
      if (ji < jumps.size() && std::fabs(std::fabs(jumps[ji].time) - clock[i]) < 1e-15)
        jump_at[i] = static_cast<int>(ji++);
    }
  }

  std::size_t size() const { return clock.size(); }
};

/// Cadlag process sampled on the clock grid: pre = left limit at the node,
/// post = value at the node.
struct Process {
  std::vector<double> pre, post;

  explicit Process(std::size_t n, double init = 0.0) : pre(n, init), post(n, init) {}

  IntegralValue at(const ClockGrid& grid, double t) const {
    IntegralValue out;
    double sup = 0.0, val = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid.clock[i] > t + 1e-15) break;
      val = post[i];
      sup = std::max(sup, std::max(std::fabs(pre[i]), std::fabs(post[i])));
    }
    out.value = val;
    out.running_sup = sup;
    return out;
  }
};

struct SeparableKernel {
  std::vector<ScalarSlot> slots;

  double factor(int slot, const Displacement& z, int d) const {
    return slots[slot](z, d);
  }
};

SeparableKernel as_separable(const GridFunction& f) {
  SeparableKernel k;
  k.slots = f.factors();
  return k;
}

/// Subset DP for multiple integrals of tensor kernels.
/// state mask: set of slots still to be integrated.
class MultipleIntegralDP {
 public:
  MultipleIntegralDP(const MartingaleField& M, std::span<const int> labels,
                     const SeparableKernel& kernel, const ClockGrid& grid)
      : M_(M), labels_(labels.begin(), labels.end()), kernel_(kernel), grid_(grid) {
    const int n = static_cast<int>(labels_.size());
    const double wsp = std::pow(M_.grid().eps, M_.grid().d());
    processes_.reserve(1u << n);
    for (unsigned mask = 0; mask < (1u << n); ++mask)
      processes_.emplace_back(grid_.size(), mask == 0 ? 1.0 : 0.0);

    std::vector<unsigned> order;
    for (unsigned mask = 1; mask < (1u << n); ++mask) order.push_back(mask);
    std::sort(order.begin(), order.end(), [](unsigned a, unsigned b) {
      return __builtin_popcount(a) < __builtin_popcount(b);
    });

    for (unsigned mask : order) {
      Process& P = processes_[mask];
      double acc = 0.0;
      for (std::size_t i = 0; i < grid_.size(); ++i) {
        P.pre[i] = acc;
        int ji = grid_.jump_at[i];
        if (ji >= 0) {
          const JumpRecord& j = grid_.jumps[ji];
          const Displacement& z = grid_.jump_pos[ji];
          const double dm = M_.magnitude() * j.sign;
          for (int s = 0; s < n; ++s) {
            if (!(mask & (1u << s)) || labels_[s] != j.component) continue;
            double gv = kernel_.factor(s, z, M_.grid().d());
            if (gv == 0.0) continue;
            acc += wsp * gv * dm * processes_[mask & ~(1u << s)].pre[i];
          }
        }
        P.post[i] = acc;
      }
    }
  }

  const Process& full(int n) const { return processes_[(1u << n) - 1]; }

 private:
  const MartingaleField& M_;
  std::vector<int> labels_;
  const SeparableKernel& kernel_;
  const ClockGrid& grid_;
  std::vector<Process> processes_;
};

/// Block DP for gamma integrals of tensor kernels. state mask: set of blocks
/// still to be integrated.
class GammaIntegralDP {
 public:
  GammaIntegralDP(const MartingaleField& M, const Contraction& gamma,
                  const SeparableKernel& kernel, const ClockGrid& grid)
      : M_(M), gamma_(gamma), kernel_(kernel), grid_(grid) {
    const GridSpec& g = M_.grid();
    const int nb = gamma_.n_blocks();
    const int d = g.d();
    const double wsp = std::pow(g.eps, d);
    const int snorm = g.scaling.s_norm_order();

    // Per block: common label (or -1 when labels are mixed, making both the
    // bracket and the compensator vanish), jump weight, compensator rate.
    struct BlockInfo {
      std::vector<int> slots;
      int label = -1;
      double jump_amp = 0.0;
      double comp_rate = 0.0;  // nonzero only for even blocks in F
    };
    std::vector<BlockInfo> blocks(nb);
    for (int b = 0; b < nb; ++b) {
      BlockInfo& bi = blocks[b];
      bi.slots = gamma_.blocks[b];
      auto labels = gamma_.block_labels(b);
      bool equal = std::all_of(labels.begin(), labels.end(),
                               [&](int l) { return l == labels[0]; });
      bi.label = equal ? labels[0] : -1;
      const int m = static_cast<int>(bi.slots.size());
      bi.jump_amp = std::pow(g.eps, static_cast<double>(d) * (m - 1));
      if (gamma_.flagged[b] && m % 2 == 0 && equal)
        bi.comp_rate = std::pow(g.eps, (m / 2.0 - 1.0) * snorm);
    }

    // Sites inside the spatial window of each block's scalar factor, with the
    // per-site factor c_b((+-u, x)) evaluated lazily during the drift pass.
    processes_.reserve(1u << nb);
    for (unsigned mask = 0; mask < (1u << nb); ++mask)
      processes_.emplace_back(grid_.size(), mask == 0 ? 1.0 : 0.0);

    std::vector<unsigned> order;
    for (unsigned mask = 1; mask < (1u << nb); ++mask) order.push_back(mask);
    std::sort(order.begin(), order.end(), [](unsigned a, unsigned b) {
      return __builtin_popcount(a) < __builtin_popcount(b);
    });

    // Spatial sites of the torus, physical coordinates, for drift sums.
    const long long nsites = g.site_count();
    std::vector<Displacement> sites(static_cast<std::size_t>(nsites));
    for (long long s = 0; s < nsites; ++s) {
      Site st = flat_to_site(s, g);
      for (int i = 0; i < d; ++i)
        sites[static_cast<std::size_t>(s)].x[i] = g.wrap(g.eps * st.idx[i]);
    }

    auto block_factor = [&](const BlockInfo& bi, const Displacement& z) {
      double v = 1.0;
      for (int s : bi.slots) {
        v *= kernel_.factor(s, z, d);
        if (v == 0.0) break;
      }
      return v;
    };

    for (unsigned mask : order) {
      Process& P = processes_[mask];
      // Which blocks in this state carry a compensator drift?
      std::vector<int> drift_blocks;
      for (int b = 0; b < nb; ++b)
        if ((mask & (1u << b)) && blocks[b].comp_rate != 0.0) drift_blocks.push_back(b);

      double acc = 0.0;
      // Cache of the drift integrand at the previous node per drift block.
      std::vector<double> prev_density(drift_blocks.size(), 0.0);
      bool have_prev = false;
      for (std::size_t i = 0; i < grid_.size(); ++i) {
        if (!drift_blocks.empty() && i > 0) {
          const double du = grid_.clock[i] - grid_.clock[i - 1];
          for (std::size_t k = 0; k < drift_blocks.size(); ++k) {
            int b = drift_blocks[k];
            const Process& inner = processes_[mask & ~(1u << b)];
            // density(u) = sum_{x, side} c_b((side u, x)) * inner(u)
            double dens_new = 0.0;
            {
              Displacement z;
              for (const auto& sx : sites) {
                z = sx;
                z.t = grid_.clock[i];
                double c = block_factor(blocks[b], z);
                z.t = -grid_.clock[i];
                c += block_factor(blocks[b], z);
                dens_new += c;
              }
            }
            const double f_hi = dens_new * inner.pre[i];
            double f_lo;
            if (have_prev) {
              f_lo = prev_density[k] * inner.post[i - 1];
            } else {
              // recompute at the previous node (first drift interval)
              double dens_old = 0.0;
              Displacement z;
              for (const auto& sx : sites) {
                z = sx;
                z.t = grid_.clock[i - 1];
                double c = block_factor(blocks[b], z);
                z.t = -grid_.clock[i - 1];
                c += block_factor(blocks[b], z);
                dens_old += c;
              }
              f_lo = dens_old * inner.post[i - 1];
            }
            acc -= blocks[b].comp_rate * wsp * 0.5 * (f_lo + f_hi) * du;
            prev_density[k] = dens_new;
          }
          have_prev = true;
        } else if (!drift_blocks.empty()) {
          // prime the density cache at clock 0
          for (std::size_t k = 0; k < drift_blocks.size(); ++k) {
            int b = drift_blocks[k];
            double dens = 0.0;
            Displacement z;
            for (const auto& sx : sites) {
              z = sx;
              z.t = 0.0;
              dens += 2.0 * block_factor(blocks[b], z);
            }
            prev_density[k] = dens;
          }
          have_prev = true;
        }

        P.pre[i] = acc;
        int ji = grid_.jump_at[i];
        if (ji >= 0) {
          const JumpRecord& j = grid_.jumps[ji];
          const Displacement& z = grid_.jump_pos[ji];
          const double dm = M_.magnitude() * j.sign;
          for (int b = 0; b < nb; ++b) {
            if (!(mask & (1u << b)) || blocks[b].label != j.component) continue;
            double c = block_factor(blocks[b], z);
            if (c == 0.0) continue;
            const int m = static_cast<int>(blocks[b].slots.size());
            acc += wsp * c * blocks[b].jump_amp * std::pow(dm, m) *
                   processes_[mask & ~(1u << b)].pre[i];
          }
        }
        P.post[i] = acc;
      }
    }
  }

  const Process& full(int nb) const { return processes_[(1u << nb) - 1]; }

 private:
  const MartingaleField& M_;
  const Contraction& gamma_;
  const SeparableKernel& kernel_;
  const ClockGrid& grid_;
  std::vector<Process> processes_;
};

}  // namespace

IntegralValue ito_integral(const MartingaleField& M, int k, const GridFunction& f,
                           double t) {
  if (f.arity() != 1) throw std::invalid_argument("ito_integral: arity-1 kernel required");
  if (!f.box(0).finite())
    throw std::invalid_argument("ito_integral: compact support required");
  const GridSpec& g = M.grid();
  const double wsp = std::pow(g.eps, g.d());
  const double clock_max = std::min(std::min(t, support_clock(f)), g.horizon);

  IntegralValue out;
  double acc = 0.0, sup = 0.0;
  for (const auto& j : M.jumps_in_clock_window(clock_max)) {
    if (j.component != k) continue;
    Displacement z = jump_displacement(j, g);
    Displacement pt[1] = {z};
    double fv = f(std::span<const Displacement>(pt, 1), g.d());
    if (fv != 0.0) {
      acc += wsp * fv * M.magnitude() * j.sign;
      sup = std::max(sup, std::fabs(acc));
    }
  }
  out.value = acc;
  out.running_sup = sup;
  return out;
}

IntegralValue multiple_integral(const MartingaleField& M, std::span<const int> labels,
                                const GridFunction& f, double t) {
  const int n = static_cast<int>(labels.size());
  if (n < 1) throw std::invalid_argument("multiple_integral: empty label vector");
  if (f.arity() != n)
    throw std::invalid_argument("multiple_integral: arity does not match labels");
  if (n == 1) return ito_integral(M, labels[0], f, t);
  if (!f.separable()) return multiple_integral_direct(M, labels, f, t);

  const double clock_max = std::min(std::min(t, support_clock(f)), M.grid().horizon);
  ClockGrid grid(M, clock_max, /*with_lattice=*/false, {});
  SeparableKernel kernel = as_separable(f);
  MultipleIntegralDP dp(M, labels, kernel, grid);
  return dp.full(n).at(grid, t);
}

IntegralValue gamma_integral(const MartingaleField& M, const Contraction& gamma,
                             const GridFunction& f, double t,
                             const QuadratureOptions& quad) {
  std::string why;
  if (!gamma.valid(&why)) throw std::invalid_argument("gamma_integral: " + why);
  if (f.arity() != gamma.n_vertices())
    throw std::invalid_argument("gamma_integral: arity does not match |V|");
  bool needs_quadrature = false;
  for (int b = 0; b < gamma.n_blocks(); ++b)
    if (gamma.flagged[b] && gamma.blocks[b].size() % 2 == 0) needs_quadrature = true;
  if (!f.separable()) {
    if (needs_quadrature)
      throw std::invalid_argument(
          "gamma_integral: non-separable kernels supported only without even "
          "flagged blocks");
    return gamma_integral_direct(M, gamma, f, t);
  }

  const double clock_max = std::min(std::min(t, support_clock(f)), M.grid().horizon);
  ClockGrid grid(M, clock_max, needs_quadrature && quad.use_time_lattice, quad);
  SeparableKernel kernel = as_separable(f);
  GammaIntegralDP dp(M, gamma, kernel, grid);
  return dp.full(gamma.n_blocks()).at(grid, t);
}

IntegralValue multiple_integral_direct(const MartingaleField& M,
                                       std::span<const int> labels,
                                       const GridFunction& f, double t,
                                       long long budget) {
  const int n = static_cast<int>(labels.size());
  if (f.arity() != n) throw std::invalid_argument("multiple_integral_direct: arity mismatch");
  const GridSpec& g = M.grid();
  const double wsp = std::pow(g.eps, g.d());
  const double clock_max = std::min(std::min(t, support_clock(f)), g.horizon);
  auto jumps = M.jumps_in_clock_window(clock_max);
  const std::size_t J = jumps.size();
  double cost = 1.0;
  for (int i = 0; i < n; ++i) cost *= static_cast<double>(J);
  if (cost > static_cast<double>(budget))
    throw std::invalid_argument("multiple_integral_direct: jump budget exceeded");

  std::vector<Displacement> pos(J);
  for (std::size_t j = 0; j < J; ++j) pos[j] = jump_displacement(jumps[j], g);

  // Accumulate contributions by the latest assigned jump so that the running
  // sup can be recovered from prefix sums.
  std::vector<double> delta(J, 0.0);
  std::vector<Displacement> pts(n);
  std::vector<int> used(J, 0);
  std::function<void(int, std::size_t, double)> rec = [&](int slot, std::size_t max_j,
                                                          double weight) {
    if (slot == n) {
      double fv = f(std::span<const Displacement>(pts.data(), pts.size()), g.d());
      if (fv != 0.0) delta[max_j] += weight * fv;
      return;
    }
    for (std::size_t j = 0; j < J; ++j) {
      if (used[j] || jumps[j].component != labels[slot]) continue;
      used[j] = 1;
      pts[slot] = pos[j];
      rec(slot + 1, slot == 0 ? j : std::max(max_j, j),
          weight * wsp * M.magnitude() * jumps[j].sign);
      used[j] = 0;
    }
  };
  rec(0, 0, 1.0);

  IntegralValue out;
  double acc = 0.0, sup = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    acc += delta[j];
    sup = std::max(sup, std::fabs(acc));
  }
  out.value = acc;
  out.running_sup = sup;
  return out;
}

IntegralValue gamma_integral_direct(const MartingaleField& M, const Contraction& gamma,
                                    const GridFunction& f, double t, long long budget) {
  std::string why;
  if (!gamma.valid(&why)) throw std::invalid_argument("gamma_integral_direct: " + why);
  for (int b = 0; b < gamma.n_blocks(); ++b)
    if (gamma.flagged[b] && gamma.blocks[b].size() % 2 == 0)
      throw std::invalid_argument(
          "gamma_integral_direct: even flagged blocks carry a compensator part; "
          "use gamma_integral");
  const GridSpec& g = M.grid();
  const double wsp = std::pow(g.eps, g.d());
  const double clock_max = std::min(std::min(t, support_clock(f)), g.horizon);
  auto jumps = M.jumps_in_clock_window(clock_max);
  const std::size_t J = jumps.size();
  const int nb = gamma.n_blocks();
  double cost = 1.0;
  for (int i = 0; i < nb; ++i) cost *= static_cast<double>(J);
  if (cost > static_cast<double>(budget))
    throw std::invalid_argument("gamma_integral_direct: jump budget exceeded");

  std::vector<Displacement> pos(J);
  for (std::size_t j = 0; j < J; ++j) pos[j] = jump_displacement(jumps[j], g);

  std::vector<double> delta(J, 0.0);
  std::vector<Displacement> pts(gamma.n_vertices());
  std::vector<int> used(J, 0);
  std::function<void(int, std::size_t, double)> rec = [&](int block, std::size_t max_j,
                                                          double weight) {
    if (block == nb) {
      double fv = f(std::span<const Displacement>(pts.data(), pts.size()), g.d());
      if (fv != 0.0) delta[max_j] += weight * fv;
      return;
    }
    auto labels = gamma.block_labels(block);
    bool equal = std::all_of(labels.begin(), labels.end(),
                             [&](int l) { return l == labels[0]; });
    if (!equal) return;  // bracket of mixed labels vanishes
    const int m = static_cast<int>(gamma.blocks[block].size());
    const double amp = std::pow(g.eps, static_cast<double>(g.d()) * (m - 1));
    for (std::size_t j = 0; j < J; ++j) {
      if (used[j] || jumps[j].component != labels[0]) continue;
      used[j] = 1;
      for (int v : gamma.blocks[block]) pts[v] = pos[j];
      double dm = M.magnitude() * jumps[j].sign;
      rec(block + 1, block == 0 ? j : std::max(max_j, j),
          weight * wsp * amp * std::pow(dm, m));
      used[j] = 0;
    }
  };
  rec(0, 0, 1.0);

  IntegralValue out;
  double acc = 0.0, sup = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    acc += delta[j];
    sup = std::max(sup, std::fabs(acc));
  }
  out.value = acc;
  out.running_sup = sup;
  return out;
}

ChaosCheckResult chaos_expand_product(const MartingaleField& M,
                                      const std::vector<ChaosFactor>& factors,
                                      double t, int cap) {
  ChaosCheckResult res;
  std::vector<std::vector<int>> label_vectors;
  std::vector<ScalarSlot> all_slots;
  for (const auto& f : factors) {
    if (f.labels.size() != f.factors.size())
      throw std::invalid_argument("chaos_expand_product: labels/factors mismatch");
    label_vectors.push_back(f.labels);
    for (const auto& s : f.factors) all_slots.push_back(s);
  }

  double lhs = 1.0;
  for (const auto& f : factors) {
    GridFunction fi = GridFunction::tensor(f.factors);
    lhs *= multiple_integral(M, f.labels, fi, t).value;
  }

  auto gammas = enumerate_product_contractions(label_vectors, cap);
  GridFunction tensor = GridFunction::tensor(all_slots);
  double rhs = 0.0;
  for (const auto& gamma : gammas) rhs += gamma_integral(M, gamma, tensor, t).value;

  res.lhs = lhs;
  res.rhs = rhs;
  res.residual = std::fabs(lhs - rhs) / (1.0 + std::fabs(lhs));
  res.n_contractions = static_cast<int>(gammas.size());
  return res;
}

namespace {

double h_norm_rec(const GridFunction& f, const Contraction& gamma, const GridSpec& g) {
  const int snorm = g.scaling.s_norm_order();
  const double w = g.cell_weight();
  const int d = g.d();
  const int nb = gamma.n_blocks();
  if (nb == 0) {
    // Fully reduced: the remaining kernel is a constant.
    return std::fabs(f(std::span<const Displacement>(), d));
  }

  // Picked component: canonical first block.
  const auto& e = gamma.blocks[0];
  const bool in_f = gamma.flagged[0];
  const int m = static_cast<int>(e.size());
  const double pref_l1 = std::pow(g.eps, (m / 2.0 - 1.0) * snorm);
  const double pref_l2 = std::pow(g.eps, (m - 1.0) * snorm / 2.0);

  // Support box of the diagonal slice: intersection over block slots.
  SupportBox box = f.box(e[0]);
  for (int s : e) {
    box.t_min = std::max(box.t_min, f.box(s).t_min);
    box.t_max = std::min(box.t_max, f.box(s).t_max);
    box.x_radius = std::min(box.x_radius, f.box(s).x_radius);
  }

  Contraction rest = remove_component(gamma, 0);
  double l1 = 0.0, l2sq = 0.0;
  std::vector<Displacement> diag(m);
  std::vector<int> slots(e.begin(), e.end());
  for_each_grid_point(box, g, [&](const Displacement& z) {
    for (int i = 0; i < m; ++i) diag[i] = z;
    GridFunction inner = f.bind(std::span<const int>(slots.data(), slots.size()),
                                std::span<const Displacement>(diag.data(), diag.size()), d);
    double in_norm = h_norm_rec(inner, rest, g);
    l1 += w * in_norm;
    l2sq += w * in_norm * in_norm;
  });

  double out = pref_l2 * std::sqrt(l2sq);
  if (!in_f) out += pref_l1 * l1;
  return out;
}

}  // namespace

double h_gamma_norm(const GridFunction& f, const Contraction& gamma, const GridSpec& g) {
  std::string why;
  if (!gamma.valid(&why)) throw std::invalid_argument("h_gamma_norm: " + why);
  if (f.arity() != gamma.n_vertices())
    throw std::invalid_argument("h_gamma_norm: arity does not match |V|");

  if (f.separable()) {
    // The restricted norm factorizes: each block contributes the L1/L2 norms
    // of its own diagonal scalar factor.
    const int snorm = g.scaling.s_norm_order();
    const double w = g.cell_weight();
    const int d = g.d();
    double out = 1.0;
    for (int b = 0; b < gamma.n_blocks(); ++b) {
      const auto& e = gamma.blocks[b];
      const int m = static_cast<int>(e.size());
      SupportBox box = f.box(e[0]);
      for (int s : e) {
        box.t_min = std::max(box.t_min, f.box(s).t_min);
        box.t_max = std::min(box.t_max, f.box(s).t_max);
        box.x_radius = std::min(box.x_radius, f.box(s).x_radius);
      }
      double l1 = 0.0, l2sq = 0.0;
      for_each_grid_point(box, g, [&](const Displacement& z) {
        double c = 1.0;
        for (int s : e) c *= f.factors()[s](z, d);
        l1 += w * std::fabs(c);
        l2sq += w * c * c;
      });
      double term = std::pow(g.eps, (m - 1.0) * snorm / 2.0) * std::sqrt(l2sq);
      if (!gamma.flagged[b])
        term += std::pow(g.eps, (m / 2.0 - 1.0) * snorm) * l1;
      out *= term;
    }
    return out;
  }

  if (f.arity() > 3)
    throw std::invalid_argument("h_gamma_norm: non-separable input limited to arity <= 3");
  return h_norm_rec(f, gamma, g);
}

}  // namespace spdelab
