#include "spdelab/noise.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace spdelab {

namespace {

bool labels_all_equal(std::span<const int> labels) {
  for (std::size_t i = 1; i < labels.size(); ++i)
    if (labels[i] != labels[0]) return false;
  return true;
}

}  // namespace

MartingaleField::MartingaleField(NoiseSpec spec, GridSpec grid, std::uint64_t seed)
    : spec_(spec), grid_(grid), seed_(seed) {
  grid_.validate();
  magnitude_ = spec_.jump_magnitude(grid_);
  const double rate = spec_.jump_rate(grid_);
  const double T = grid_.horizon;
  const long long sites = grid_.site_count();

  for (long long s = 0; s < sites; ++s) {
    for (int k = 0; k < spec_.components; ++k) {
      for (int side = 0; side < 2; ++side) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(s),
                              static_cast<std::uint64_t>(k), side + 1);
        double t = 0.0;
        for (;;) {
          t += rng.exponential(rate);
          if (t > T) break;
          JumpRecord j;
          j.time = side == 0 ? t : -t;
          j.site = s;
          j.component = k;
          j.sign = rng.sign();
          jumps_.push_back(j);
        }
      }
    }
  }

  // Collision guard: jump clocks must be globally distinct (they are a.s.;
  // exact float ties are resampled inside the offending inter-jump gap).
  std::sort(jumps_.begin(), jumps_.end(), [](const JumpRecord& a, const JumpRecord& b) {
    return std::fabs(a.time) < std::fabs(b.time);
  });
  Rng guard = Rng::stream(seed, 0xC0111DEull);
  for (std::size_t i = 1; i < jumps_.size(); ++i) {
    while (std::fabs(jumps_[i].time) <= std::fabs(jumps_[i - 1].time)) {
      double lo = std::fabs(jumps_[i - 1].time);
      double hi = (i + 1 < jumps_.size()) ? std::fabs(jumps_[i + 1].time) : T;
      if (hi <= lo) hi = lo + grid_.time_step();
      double u = guard.uniform(lo, hi);
      jumps_[i].time = jumps_[i].time < 0 ? -u : u;
    }
  }

  index_streams();
}

MartingaleField::MartingaleField(NoiseSpec spec, GridSpec grid,
                                 std::vector<JumpRecord> jumps)
    : spec_(spec), grid_(grid), jumps_(std::move(jumps)) {
  grid_.validate();
  magnitude_ = spec_.jump_magnitude(grid_);
  index_streams();
}

void MartingaleField::index_streams() {
  const long long sites = grid_.site_count();
  const int r = spec_.components;
  auto stream_id = [r](const JumpRecord& j) { return j.site * r + j.component; };
  std::sort(jumps_.begin(), jumps_.end(), [&](const JumpRecord& a, const JumpRecord& b) {
    if (stream_id(a) != stream_id(b)) return stream_id(a) < stream_id(b);
    return std::fabs(a.time) < std::fabs(b.time);
  });
  stream_offsets_.assign(static_cast<std::size_t>(sites * r + 1), 0);
  for (const auto& j : jumps_) ++stream_offsets_[static_cast<std::size_t>(stream_id(j)) + 1];
  for (std::size_t i = 1; i < stream_offsets_.size(); ++i)
    stream_offsets_[i] += stream_offsets_[i - 1];

  sign_prefix_.assign(jumps_.size(), 0);
  for (long long sid = 0; sid < sites * r; ++sid) {
    long long acc = 0;
    for (std::size_t i = stream_offsets_[sid]; i < stream_offsets_[sid + 1]; ++i) {
      acc += jumps_[i].sign;
      sign_prefix_[i] = acc;
    }
  }
}

std::span<const JumpRecord> MartingaleField::stream(int k, long long site) const {
  const std::size_t sid = static_cast<std::size_t>(site * spec_.components + k);
  return {jumps_.data() + stream_offsets_[sid],
          stream_offsets_[sid + 1] - stream_offsets_[sid]};
}

double MartingaleField::evaluate(int k, const Site& x, double t, Limit lim) const {
  const double T = grid_.horizon;
  if (std::fabs(t) > T + 1e-12)
    throw std::invalid_argument("MartingaleField::evaluate: |t| beyond horizon");
  if (t == 0.0) return 0.0;
  const long long site = site_to_flat(x, grid_);
  const std::size_t sid = static_cast<std::size_t>(site * spec_.components + k);
  const std::size_t lo = stream_offsets_[sid], hi = stream_offsets_[sid + 1];
  const bool negative = t < 0.0;
  const double clock = std::fabs(t);
  // Jumps on the requested side with |time| <= clock (strict for pre).
  long long sum = 0;
  std::size_t count = 0;
  // Streams mix both sides; scan with binary search on |time| then filter side.
  // Stream sizes are modest, so a linear scan of the clock-window suffices.
  for (std::size_t i = lo; i < hi; ++i) {
    const JumpRecord& j = jumps_[i];
    double c = std::fabs(j.time);
    if (c > clock) break;
    if ((j.time < 0.0) != negative) continue;
    if (lim == Limit::pre && c >= clock) break;
    sum += j.sign;
    ++count;
  }
  (void)count;
  return magnitude_ * static_cast<double>(sum);
}

double MartingaleField::bracket(std::span<const int> labels, const Site& x,
                                double t) const {
  const int n = static_cast<int>(labels.size());
  if (n < 1) throw std::invalid_argument("bracket: empty label vector");
  if (n == 1) return evaluate(labels[0], x, t);
  if (!labels_all_equal(labels)) return 0.0;

  const long long site = site_to_flat(x, grid_);
  auto s = stream(labels[0], site);
  const bool negative = t < 0.0;
  const double clock = std::fabs(t);
  long long signed_sum = 0, count = 0;
  for (const auto& j : s) {
    double c = std::fabs(j.time);
    if (c > clock) break;
    if ((j.time < 0.0) != negative) continue;
    signed_sum += j.sign;
    ++count;
  }
  const double d = grid_.d();
  const double amp = std::pow(grid_.eps, d * (n - 1)) * std::pow(magnitude_, n);
  return amp * static_cast<double>(n % 2 == 0 ? count : signed_sum);
}

double MartingaleField::compensator(std::span<const int> labels, const Site& /*x*/,
                                    double t) const {
  const int n = static_cast<int>(labels.size());
  if (n < 1) throw std::invalid_argument("compensator: empty label vector");
  if (n % 2 == 1 || !labels_all_equal(labels)) return 0.0;
  const int snorm = grid_.scaling.s_norm_order();
  return std::pow(grid_.eps, (n / 2.0 - 1.0) * snorm) * std::fabs(t);
}

double MartingaleField::compensated_bracket(std::span<const int> labels, const Site& x,
                                            double t) const {
  return bracket(labels, x, t) - compensator(labels, x, t);
}

std::vector<JumpRecord> MartingaleField::jumps_in_clock_window(double clock_max) const {
  std::vector<JumpRecord> out;
  for (const auto& j : jumps_)
    if (std::fabs(j.time) <= clock_max) out.push_back(j);
  std::sort(out.begin(), out.end(), [](const JumpRecord& a, const JumpRecord& b) {
    return std::fabs(a.time) < std::fabs(b.time);
  });
  return out;
}

void MartingaleField::save_jump_log(std::ostream& os) const {
  nlohmann::json j;
  j["d"] = grid_.d();
  j["eps"] = grid_.eps;
  j["horizon"] = grid_.horizon;
  j["components"] = spec_.components;
  j["seed"] = seed_;
  auto& records = j["jumps"] = nlohmann::json::array();
  for (const auto& r : jumps_)
    records.push_back({r.time, r.site, r.component, r.sign});
  os << j.dump() << "\n";
}

MartingaleField MartingaleField::load_jump_log(std::istream& is) {
  nlohmann::json j;
  is >> j;
  GridSpec g(j.at("d").get<int>(), j.at("eps").get<double>(),
             j.at("horizon").get<double>());
  NoiseSpec spec;
  spec.components = j.at("components").get<int>();
  std::vector<JumpRecord> jumps;
  for (const auto& r : j.at("jumps")) {
    JumpRecord rec;
    rec.time = r.at(0).get<double>();
    rec.site = r.at(1).get<long long>();
    rec.component = r.at(2).get<int>();
    rec.sign = r.at(3).get<int>();
    jumps.push_back(rec);
  }
  MartingaleField f(spec, g, std::move(jumps));
  return f;
}

MartingaleField sample_field(const NoiseSpec& spec, const GridSpec& grid,
                             std::uint64_t seed) {
  return MartingaleField(spec, grid, seed);
}

WienerStatsReport wiener_statistics(const NoiseSpec& spec, const GridSpec& grid,
                                    const SpatialTestFunction& phi, double t,
                                    int replicas, std::uint64_t seed, unsigned jobs) {
  if (replicas < 100)
    throw std::invalid_argument("wiener_statistics: at least 100 replicas required");
  if (phi.d() != grid.d())
    throw std::invalid_argument("wiener_statistics: dimension mismatch");

  const long long sites = grid.site_count();
  const double magnitude = spec.jump_magnitude(grid);
  const double rate = spec.jump_rate(grid);
  const double wsp = std::pow(grid.eps, grid.d());
  const int d = grid.d();

  // Tabulate phi on the torus sites (nearest-representative coordinates).
  std::vector<double> phi_vals(static_cast<std::size_t>(sites));
  double sup = 0.0;
  for (long long s = 0; s < sites; ++s) {
    Site site = flat_to_site(s, grid);
    std::array<double, kMaxDim> x{};
    for (int i = 0; i < d; ++i) x[i] = grid.wrap(grid.eps * site.idx[i]);
    phi_vals[static_cast<std::size_t>(s)] = phi(std::span<const double>(x.data(), d));
    sup = std::max(sup, std::fabs(phi_vals[static_cast<std::size_t>(s)]));
  }

  std::vector<double> values(static_cast<std::size_t>(replicas), 0.0);
  std::vector<double> max_jumps(static_cast<std::size_t>(replicas), 0.0);
  const double mean_jumps = rate * t;

  parallel_for(static_cast<std::size_t>(replicas), jobs, [&](std::size_t rep) {
    double acc = 0.0, mj = 0.0;
    for (long long s = 0; s < sites; ++s) {
      Rng rng = Rng::stream(seed, rep + 1, static_cast<std::uint64_t>(s), 0xA11CEull);
      std::uint64_t n = rng.poisson(mean_jumps);
      if (n == 0) continue;
      // Sum of n fair signs, sampled exactly.
      long long pos = static_cast<long long>(rng.binomial_half(n));
      long long signed_sum = 2 * pos - static_cast<long long>(n);
      double pv = phi_vals[static_cast<std::size_t>(s)];
      acc += pv * magnitude * static_cast<double>(signed_sum);
      if (pv != 0.0) mj = std::max(mj, wsp * magnitude * std::fabs(pv));
    }
    values[rep] = wsp * acc;
    max_jumps[rep] = mj;
  });

  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= replicas;
  double m2 = 0.0, m4 = 0.0;
  for (double v : values) {
    double c = v - mean;
    m2 += c * c;
    m4 += c * c * c * c;
  }
  m2 /= replicas;
  m4 /= replicas;

  WienerStatsReport rep;
  rep.replicas = replicas;
  rep.variance = m2 * replicas / (replicas - 1.0);
  rep.variance_target = t * phi.l2_squared();
  rep.variance_std_error = rep.variance * std::sqrt(2.0 / (replicas - 1.0));
  rep.excess_kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
  rep.max_jump = *std::max_element(max_jumps.begin(), max_jumps.end());
  rep.max_jump_bound = std::pow(grid.eps, 1.0 + 0.5 * d) * phi.sup_norm();
  rep.jump_bound_satisfied = rep.max_jump <= rep.max_jump_bound + 1e-15;
  return rep;
}

}  // namespace spdelab
