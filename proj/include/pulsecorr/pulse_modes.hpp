#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "pulsecorr/fock.hpp"

// Temporal modes of a local-oscillator pulse train.
//
// Each pulse is an L2-normalized envelope riding on a common carrier omega0.
// The measurement model treats the pulses as an orthonormal mode set, which
// is only legitimate while all pairwise envelope overlaps stay below a
// tolerance; validate_train gates on exactly that.

namespace pulsecorr {

enum class EnvelopeShape { gaussian };

struct PulseEnvelope {
  double center = 0.0;   // arrival time of the pulse peak
  double sigma = 1.0;    // RMS width of |g|^2
  double omega0 = 0.0;   // carrier frequency shared by the train
  EnvelopeShape shape = EnvelopeShape::gaussian;
};

// Value of the normalized envelope at time t (O(1) closed form; the carrier
// cancels in same-carrier overlaps and is omitted here).
inline double envelope_value(const PulseEnvelope& p, double t) {
  if (!(p.sigma > 0.0)) throw std::invalid_argument("envelope sigma must be > 0");
  const double x = t - p.center;
  return std::pow(2.0 * M_PI * p.sigma * p.sigma, -0.25) *
         std::exp(-x * x / (4.0 * p.sigma * p.sigma));
}

namespace detail {

// Adaptive Simpson on [lo, hi] to absolute tolerance tol.
template <typename F>
double simpson_step(const F& f, double lo, double mid, double hi, double flo,
                    double fmid, double fhi, double whole, double tol, int depth) {
  const double lmid = 0.5 * (lo + mid), rmid = 0.5 * (mid + hi);
  const double flm = f(lmid), frm = f(rmid);
  const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
  const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson_step(f, lo, lmid, mid, flo, flm, fmid, left, tol / 2.0, depth - 1) +
         simpson_step(f, mid, rmid, hi, fmid, frm, fhi, right, tol / 2.0, depth - 1);
}

template <typename F>
double adaptive_simpson(const F& f, double lo, double hi, double tol) {
  const double mid = 0.5 * (lo + hi);
  const double flo = f(lo), fmid = f(mid), fhi = f(hi);
  const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
  return simpson_step(f, lo, mid, hi, flo, fmid, fhi, whole, tol, 48);
}

inline void check_compatible(const PulseEnvelope& a, const PulseEnvelope& b) {
  if (!(a.sigma > 0.0) || !(b.sigma > 0.0))
    throw std::invalid_argument("envelope sigma must be > 0");
  if (a.omega0 != b.omega0)
    throw std::invalid_argument("overlap requires a common carrier frequency");
}

}  // namespace detail

// Envelope overlap integral <g_a | g_b> by adaptive quadrature (tolerance
// 1e-10).  Returned as complex for interface generality; real-valued for the
// real Gaussian envelopes supported here.
inline Complex overlap_quadrature(const PulseEnvelope& a, const PulseEnvelope& b,
                                  double tol = 1e-10) {
  detail::check_compatible(a, b);
  const double smax = std::max(a.sigma, b.sigma);
  const double lo = std::min(a.center, b.center) - 12.0 * smax;
  const double hi = std::max(a.center, b.center) + 12.0 * smax;
  const double v = detail::adaptive_simpson(
      [&](double t) { return envelope_value(a, t) * envelope_value(b, t); }, lo, hi, tol);
  return Complex(v, 0.0);
}

// Overlap with the closed form for Gaussian pairs:
//   sqrt(2 s_a s_b / (s_a^2 + s_b^2)) * exp(-dt^2 / (4 (s_a^2 + s_b^2))),
// which reduces to exp(-dt^2 / (8 s^2)) at equal widths.
inline Complex overlap(const PulseEnvelope& a, const PulseEnvelope& b) {
  detail::check_compatible(a, b);
  if (a.shape == EnvelopeShape::gaussian && b.shape == EnvelopeShape::gaussian) {
    const double dt = a.center - b.center;
    const double ss = a.sigma * a.sigma + b.sigma * b.sigma;
    return Complex(std::sqrt(2.0 * a.sigma * b.sigma / ss) * std::exp(-dt * dt / (4.0 * ss)),
                   0.0);
  }
  return overlap_quadrature(a, b);
}

// A local-oscillator pulse train: envelopes plus complex amplitudes gamma_k.
// The relative magnitudes |gamma_k| / |gamma_0| are the q weights of the
// measured field sum; arg(gamma_k) are the per-pulse phases.
struct LOTrain {
  std::vector<PulseEnvelope> pulses;
  std::vector<Complex> amplitudes;
};

namespace detail {

inline void check_train(const LOTrain& train) {
  if (train.pulses.empty()) throw std::invalid_argument("train has no pulses");
  if (train.amplitudes.size() != train.pulses.size())
    throw std::invalid_argument("train amplitude count does not match pulse count");
  if (std::abs(train.amplitudes.front()) < 1e-300)
    throw std::invalid_argument("first train amplitude must be nonzero (weight normalization)");
  const double w0 = train.pulses.front().omega0;
  for (const auto& p : train.pulses) {
    if (!(p.sigma > 0.0)) throw std::invalid_argument("envelope sigma must be > 0");
    if (p.omega0 != w0)
      throw std::invalid_argument("all pulses in a train must share omega0");
  }
}

}  // namespace detail

// q_k = |gamma_k| / |gamma_0| (so q_0 == 1 by convention).
inline std::vector<double> relative_magnitudes(const LOTrain& train) {
  detail::check_train(train);
  std::vector<double> q(train.amplitudes.size());
  const double base = std::abs(train.amplitudes.front());
  for (std::size_t k = 0; k < q.size(); ++k) q[k] = std::abs(train.amplitudes[k]) / base;
  return q;
}

inline std::vector<double> pulse_phases(const LOTrain& train) {
  detail::check_train(train);
  std::vector<double> ph(train.amplitudes.size());
  for (std::size_t k = 0; k < ph.size(); ++k) ph[k] = std::arg(train.amplitudes[k]);
  return ph;
}

struct TrainReport {
  Eigen::MatrixXcd gram;   // pairwise envelope overlaps
  double max_offdiag = 0;  // largest |<g_j|g_k>|, j != k
  double tol = 0;
  bool pass = false;
};

// Gram-matrix check that the train's temporal modes are orthonormal to within
// `tol`.  Diagonal entries are 1 by construction (normalized envelopes).
inline TrainReport validate_train(const LOTrain& train, double tol = 1e-4) {
  detail::check_train(train);
  const std::size_t n = train.pulses.size();
  TrainReport rep;
  rep.tol = tol;
  rep.gram = Eigen::MatrixXcd::Zero(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      const Complex o = (j == k) ? Complex(1.0, 0.0)
                                 : overlap(train.pulses[j], train.pulses[k]);
      rep.gram(j, k) = o;
      if (j != k) rep.max_offdiag = std::max(rep.max_offdiag, std::abs(o));
    }
  }
  rep.pass = rep.max_offdiag <= tol;
  return rep;
}

// Shift the whole train by dt: centers move with the pulses and every
// amplitude picks up the carrier phase e^{i omega0 dt}.
inline LOTrain shift_phases(const LOTrain& train, double dt) {
  detail::check_train(train);
  LOTrain out = train;
  const Complex rot = std::exp(Complex(0.0, train.pulses.front().omega0 * dt));
  for (auto& p : out.pulses) p.center += dt;
  for (auto& g : out.amplitudes) g *= rot;
  return out;
}

}  // namespace pulsecorr
