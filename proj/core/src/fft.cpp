#include "spdelab/fft.hpp"

#include <complex>
#include <cstring>
#include <mutex>
#include <stdexcept>

#include <fftw3.h>

namespace spdelab {

std::mutex& fftw_plan_lock() {
  static std::mutex m;
  return m;
}

namespace {

long long next_pow2(long long v) {
  long long p = 1;
  while (p < v) p <<= 1;
  return p;
}

struct Complexified {
  std::vector<std::complex<double>> data;
  long long nt = 0;
  long long cells = 0;
};

/// Forward FFT of a field zero-padded in time to length nt_pad, cyclic space.
Complexified forward(const SpaceTimeField& f, long long nt_pad, bool conjugate_reverse) {
  Complexified out;
  out.nt = nt_pad;
  out.cells = f.spatial_cells();
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(nt_pad * out.cells), 0.0);
  for (long long it = 0; it < f.nt; ++it)
    for (long long c = 0; c < out.cells; ++c) {
      if (!conjugate_reverse) {
        buf[static_cast<std::size_t>(it * out.cells + c)] = f.at(it, c);
      } else {
        // time-reversed, space-reflected copy used for correlations
        long long rit = (nt_pad - it) % nt_pad;
        // reflect each spatial axis
        long long flat = c, rflat = 0, stride = 1;
        for (int i = 0; i < f.d; ++i) {
          long long xi = flat % f.n;
          flat /= f.n;
          long long rxi = (f.n - xi) % f.n;
          rflat += rxi * stride;
          stride *= f.n;
        }
        buf[static_cast<std::size_t>(rit * out.cells + rflat)] = f.at(it, c);
      }
    }

  out.data.resize(buf.size());
  int rank = 1 + f.d;
  std::vector<int> dims;
  dims.push_back(static_cast<int>(nt_pad));
  for (int i = 0; i < f.d; ++i) dims.push_back(f.n);
  {
    std::lock_guard<std::mutex> lock(fftw_plan_lock());
    fftw_plan plan = fftw_plan_dft(
        rank, dims.data(), reinterpret_cast<fftw_complex*>(buf.data()),
        reinterpret_cast<fftw_complex*>(out.data.data()), FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }
  return out;
}

SpaceTimeField inverse(Complexified freq, const SpaceTimeField& like, long long nt_out,
                       long long t0_out) {
  std::vector<std::complex<double>> buf(freq.data.size());
  int rank = 1 + like.d;
  std::vector<int> dims;
  dims.push_back(static_cast<int>(freq.nt));
  for (int i = 0; i < like.d; ++i) dims.push_back(like.n);
  {
    std::lock_guard<std::mutex> lock(fftw_plan_lock());
    fftw_plan plan = fftw_plan_dft(
        rank, dims.data(), reinterpret_cast<fftw_complex*>(freq.data.data()),
        reinterpret_cast<fftw_complex*>(buf.data()), FFTW_BACKWARD, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }
  const double scale = 1.0 / (static_cast<double>(freq.nt) * like.spatial_cells());
  SpaceTimeField out;
  out.d = like.d;
  out.n = like.n;
  out.nt = nt_out;
  out.t0 = t0_out;
  out.data.assign(static_cast<std::size_t>(nt_out * like.spatial_cells()), 0.0);
  for (long long it = 0; it < nt_out; ++it) {
    long long src = ((it + t0_out) % freq.nt + freq.nt) % freq.nt;
    for (long long c = 0; c < like.spatial_cells(); ++c)
      out.at(it, c) = buf[static_cast<std::size_t>(src * like.spatial_cells() + c)].real() * scale;
  }
  return out;
}

}  // namespace

SpaceTimeField convolve(const SpaceTimeField& a, const SpaceTimeField& b) {
  if (a.d != b.d || a.n != b.n) throw std::invalid_argument("convolve: shape mismatch");
  const long long nt_full = a.nt + b.nt - 1;
  const long long pad = next_pow2(nt_full);
  Complexified fa = forward(a, pad, false);
  Complexified fb = forward(b, pad, false);
  for (std::size_t i = 0; i < fa.data.size(); ++i) fa.data[i] *= fb.data[i];
  // output indices: t0 = a.t0 + b.t0, length nt_full; inverse() maps index
  // (it + t0_rel) where t0_rel is the offset inside the padded circular
  // buffer, which is 0 here since the forward transforms dropped t0.
  SpaceTimeField out = inverse(std::move(fa), a, nt_full, 0);
  out.t0 = a.t0 + b.t0;
  return out;
}

SpaceTimeField correlate(const SpaceTimeField& a, const SpaceTimeField& b) {
  if (a.d != b.d || a.n != b.n) throw std::invalid_argument("correlate: shape mismatch");
  // corr(t) = sum_s a(s + t) b(s) = (a * reversed(b))(t); offsets subtract.
  const long long nt_full = a.nt + b.nt - 1;
  const long long pad = next_pow2(nt_full);
  Complexified fa = forward(a, pad, false);
  Complexified fb = forward(b, pad, true);
  for (std::size_t i = 0; i < fa.data.size(); ++i) fa.data[i] *= fb.data[i];
  // Indices run from a.t0 - (b.t0 + b.nt - 1) to a.t0 + a.nt - 1 - b.t0.
  SpaceTimeField out = inverse(std::move(fa), a, nt_full, -(b.nt - 1));
  out.t0 = a.t0 - (b.t0 + b.nt - 1);
  return out;
}

double dot(const SpaceTimeField& a, const SpaceTimeField& b) {
  if (a.d != b.d || a.n != b.n) throw std::invalid_argument("dot: shape mismatch");
  // Overlap in absolute time indices.
  const long long lo = std::max(a.t0, b.t0);
  const long long hi = std::min(a.t0 + a.nt, b.t0 + b.nt);
  double acc = 0.0;
  for (long long it = lo; it < hi; ++it)
    for (long long c = 0; c < a.spatial_cells(); ++c)
      acc += a.at(it - a.t0, c) * b.at(it - b.t0, c);
  return acc;
}

}  // namespace spdelab
