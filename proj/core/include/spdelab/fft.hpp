#pragma once

#include <array>
#include <cstddef>
#include <mutex>
#include <vector>

#include "spdelab/domain.hpp"

namespace spdelab {

/// Dense space-time array over [t0, t0 + nt*dt) x torus, row-major with time
/// as the slowest axis. Spatial extent is always the full torus (cyclic).
struct SpaceTimeField {
  int d = 1;
  int n = 0;            // sites per spatial dimension
  long long nt = 0;     // time slices
  long long t0 = 0;     // first slice index (units of the time step)
  std::vector<double> data;

  long long spatial_cells() const {
    long long c = 1;
    for (int i = 0; i < d; ++i) c *= n;
    return c;
  }
  double& at(long long it, long long flat) { return data[it * spatial_cells() + flat]; }
  double at(long long it, long long flat) const { return data[it * spatial_cells() + flat]; }
  long long size() const { return nt * spatial_cells(); }
};

/// Linear convolution in time (index offsets add), cyclic in space.
/// out(t, x) = sum_{s,y} a(s, y) b(t - s, x - y); the caller applies any cell
/// weights. Implemented with FFTW over zero-padded time.
SpaceTimeField convolve(const SpaceTimeField& a, const SpaceTimeField& b);

/// Cross-correlation corr(t,x) = sum_{s,y} a(s+t, y+x) b(s, y).
SpaceTimeField correlate(const SpaceTimeField& a, const SpaceTimeField& b);

double dot(const SpaceTimeField& a, const SpaceTimeField& b);

/// FFTW planning is not thread-safe; every planner in the library holds this.
std::mutex& fftw_plan_lock();

}  // namespace spdelab
