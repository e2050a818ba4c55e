#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "pulsecorr/fock.hpp"

// Exact (truncated-basis) moments and correlations, used as ground truth for
// the statistical pipeline.
//
// The central objects are the two-mode quadrature correlations
//   c(a, b; dphi) = < F_0^a(phi) F_1^b(phi + dphi) >,
// either at a locked phi or averaged over phi.  A uniform phase average of a
// trigonometric polynomial of degree <= n is computed exactly by an (n+2)-
// point uniform phase grid.
//
// Detection efficiency maps ideal correlations to measured ones through a
// binomial convolution with vacuum-noise moments:
//   meas(a,b) = sum_{l,m} C(a,l) C(b,m) eta^{(a+b+l+m)/2}
//               ((1-eta)/2)^{(a+b-l-m)/2} (a-l-1)!! (b-m-1)!! ideal(l,m),
// where l runs over integers of the same parity as a and m likewise for b
// (odd noise moments vanish).  (-1)!! == 1.

namespace pulsecorr {

inline double double_factorial(int m) {
  if (m <= 0) return 1.0;  // covers (-1)!! == 1 and 0!! == 1
  double r = 1.0;
  for (int v = m; v > 1; v -= 2) r *= v;
  return r;
}

// m-th moment of a vacuum quadrature: 2^{-m/2} (m-1)!! for even m, else 0.
inline double vacuum_quadrature_moment(int m) {
  if (m < 0) throw std::invalid_argument("moment order must be >= 0");
  if (m % 2 == 1) return 0.0;
  return std::pow(2.0, -0.5 * m) * double_factorial(m - 1);
}

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * double(n - k + i) / double(i);
  return r;
}

struct MomentSpec {
  int n = 2;                   // total order
  int k = 0;                   // exponent on the second mode (0 <= k <= n)
  double dphi = 0.0;           // phase step between the pulses
  bool phase_averaged = true;  // average over the reference phase
  double phi = 0.0;            // reference phase when locked
  double eta = 1.0;            // detection efficiency (1 = ideal)
};

// All correlations c(a, b) with a + b <= n_max at one dphi.
struct CorrelationTable {
  int n_max = 0;
  bool phase_averaged = true;
  double dphi = 0.0;
  double phi = 0.0;
  double eta = 1.0;  // 1 for ideal tables
  std::vector<std::vector<double>> values;  // values[n][k] = c(n-k, k)

  double at(int n, int k) const {
    if (n < 0 || n > n_max || k < 0 || k > n)
      throw std::invalid_argument("correlation index out of range");
    return values[std::size_t(n)][std::size_t(k)];
  }
};

namespace detail {

inline Matrix mat_power(const Matrix& m, int p) {
  Matrix r = Matrix::Identity(m.rows(), m.cols());
  for (int i = 0; i < p; ++i) r = r * m;
  return r;
}

inline void check_order_cap(int n, int cutoff) {
  if (n < 0) throw std::invalid_argument("moment order must be >= 0");
  if (n > 6 && cutoff <= kDefaultCutoff)
    throw std::invalid_argument(
        "moment order " + std::to_string(n) +
        " is not reliable at cutoff <= 16; raise the cutoff explicitly");
}

// Ideal c(a, b; dphi) via single-mode quadrature powers and the two-mode
// reshape contraction.
inline double ideal_correlation(const FockState& state, int a, int b, double dphi,
                                bool phase_averaged, double phi) {
  if (state.n_modes() != 2)
    throw std::invalid_argument("correlations are defined for two-mode states");
  check_order_cap(a + b, state.cutoff());
  if (a + b == 0) return 1.0;
  const int n = a + b;
  const int points = phase_averaged ? n + 2 : 1;
  Complex acc = 0.0;
  for (int j = 0; j < points; ++j) {
    const double ph = phase_averaged ? 2.0 * M_PI * j / points : phi;
    const Matrix fa = mat_power(single_mode_quadrature(state.cutoff(), ph), a);
    const Matrix fb = mat_power(single_mode_quadrature(state.cutoff(), ph + dphi), b);
    acc += expect_kron(state, fa, fb);
  }
  acc /= double(points);
  if (std::abs(acc.imag()) > 1e-10 * std::max(1.0, std::abs(acc)))
    throw std::runtime_error("correlation has a non-negligible imaginary part");
  return acc.real();
}

}  // namespace detail

// Ideal correlation table for all orders up to n_max at one dphi.
inline CorrelationTable ideal_correlations(const FockState& state, int n_max, double dphi,
                                           bool phase_averaged = true, double phi = 0.0) {
  detail::check_order_cap(n_max, state.cutoff());
  CorrelationTable t;
  t.n_max = n_max;
  t.phase_averaged = phase_averaged;
  t.dphi = dphi;
  t.phi = phi;
  t.eta = 1.0;
  t.values.resize(std::size_t(n_max) + 1);
  for (int n = 0; n <= n_max; ++n) {
    t.values[std::size_t(n)].resize(std::size_t(n) + 1);
    for (int k = 0; k <= n; ++k)
      t.values[std::size_t(n)][std::size_t(k)] =
          detail::ideal_correlation(state, n - k, k, dphi, phase_averaged, phi);
  }
  return t;
}

// Forward efficiency map: ideal correlations -> measured correlations.
inline CorrelationTable contaminate(const CorrelationTable& ideal, double eta) {
  if (ideal.eta != 1.0)
    throw std::invalid_argument("contaminate expects an ideal (eta = 1) table");
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in (0, 1]");
  CorrelationTable out = ideal;
  out.eta = eta;
  for (int n = 0; n <= ideal.n_max; ++n) {
    for (int k = 0; k <= n; ++k) {
      const int a = n - k, b = k;
      double s = 0.0;
      for (int l = a % 2; l <= a; l += 2) {
        for (int m = b % 2; m <= b; m += 2) {
          const int e_eta = (a + b + l + m) / 2;
          const int e_loss = (a + b - l - m) / 2;
          s += binomial(a, l) * binomial(b, m) * std::pow(eta, e_eta) *
               std::pow(0.5 * (1.0 - eta), e_loss) * double_factorial(a - l - 1) *
               double_factorial(b - m - 1) * ideal.at(l + m, m);
        }
      }
      out.values[std::size_t(n)][std::size_t(k)] = s;
    }
  }
  return out;
}

// Moments of the summed field F = F_0 + q F_1 from a correlation table:
// <F^n> = sum_k C(n,k) q^k c(n-k, k).  Applied to a contaminated table this
// yields the moments of the measured variable eta*X + G.
inline double synthesize_sum_moment(const CorrelationTable& table, double q, int n) {
  if (n < 0 || n > table.n_max)
    throw std::invalid_argument("order exceeds table range");
  double s = 0.0;
  for (int k = 0; k <= n; ++k)
    s += binomial(n, k) * std::pow(q, k) * table.at(n, k);
  return s;
}

// Single exact moment; contaminated tables are built on demand when eta < 1.
inline double exact_moment(const FockState& state, const MomentSpec& spec) {
  if (spec.k < 0 || spec.k > spec.n)
    throw std::invalid_argument("need 0 <= k <= n");
  detail::check_order_cap(spec.n, state.cutoff());
  if (spec.eta == 1.0)
    return detail::ideal_correlation(state, spec.n - spec.k, spec.k, spec.dphi,
                                     spec.phase_averaged, spec.phi);
  CorrelationTable ideal =
      ideal_correlations(state, spec.n, spec.dphi, spec.phase_averaged, spec.phi);
  return contaminate(ideal, spec.eta).at(spec.n, spec.k);
}

// The physical quantities the reconstruction pipeline targets, computed
// directly from operator expectations.
struct ExactPhysics {
  double nbar1 = 0.0;           // <n_0>
  double nbar2 = 0.0;           // <n_1>
  Complex coherence;            // <a_0^dag a_1>
  Complex third1;               // <a_0^dag^2 a_0 a_1>
  Complex third2;               // <a_1^dag^2 a_1 a_0>
  Complex pair;                 // <a_0^dag^2 a_1^2>
  double photon_correlation = 0.0;  // <n_0 n_1>
};

inline ExactPhysics exact_physics(const FockState& state) {
  if (state.n_modes() != 2)
    throw std::invalid_argument("physical quantities are defined for two-mode states");
  const int c = state.cutoff();
  const Matrix a = annihilation_matrix(c);
  const Matrix ad = creation_matrix(c);
  const Matrix nm = number_matrix(c);
  const Matrix id = Matrix::Identity(c + 1, c + 1);
  ExactPhysics p;
  p.nbar1 = expect_kron(state, nm, id).real();
  p.nbar2 = expect_kron(state, id, nm).real();
  p.coherence = expect_kron(state, ad, a);
  p.third1 = expect_kron(state, ad * ad * a, a);
  p.third2 = expect_kron(state, a, ad * ad * a);
  p.pair = expect_kron(state, ad * ad, a * a);
  p.photon_correlation = expect_kron(state, nm, nm).real();
  return p;
}

}  // namespace pulsecorr
