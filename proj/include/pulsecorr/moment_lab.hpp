#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "pulsecorr/measurement.hpp"
#include "pulsecorr/oracle.hpp"
#include "pulsecorr/rng.hpp"

// Statistical reconstruction: sample moments -> two-mode correlations ->
// physical quantities.
//
// Pipeline stages (all phase-averaged unless noted):
//   1. estimate_moments   per-setting <F^n> with bootstrap standard errors;
//   2. invert_q_system    solve <F^n>(q) = sum_k C(n,k) q^k c(n-k,k) for the
//                         correlations c at each dphi (binomial-scaled
//                         Vandermonde system; least squares when the q grid
//                         is larger than n+1);
//   3. decontaminate      invert the efficiency map order by order;
//   4. extract_physics    harmonic fits in dphi give mode occupations, the
//                         complex interference amplitudes, and <n_0 n_1>.
// Standard errors are propagated to first order through every linear stage.

namespace pulsecorr {

// Chebyshev extrema ("Lobatto") nodes mapped to [0, q_max], ascending.  These
// include the endpoints and condition the q-system no worse than an
// equispaced grid of the same size.
inline std::vector<double> chebyshev_q_grid(int count, double q_max = 2.0) {
  if (count < 2) throw std::invalid_argument("q grid needs at least 2 points");
  if (!(q_max > 0.0)) throw std::invalid_argument("q_max must be > 0");
  std::vector<double> q(count);
  for (int i = 0; i < count; ++i)
    q[std::size_t(count - 1 - i)] = 0.5 * q_max * (1.0 + std::cos(M_PI * i / (count - 1)));
  for (double& v : q) {  // snap endpoint/midpoint rounding residue
    if (std::abs(v) < 1e-12) v = 0.0;
    if (std::abs(v - q_max) < 1e-12) v = q_max;
    if (std::abs(v - 0.5 * q_max) < 1e-12) v = 0.5 * q_max;
  }
  return q;
}

inline std::vector<double> uniform_dphi_grid(int count) {
  if (count < 1) throw std::invalid_argument("dphi grid needs at least 1 point");
  std::vector<double> g(count);
  for (int i = 0; i < count; ++i) g[std::size_t(i)] = 2.0 * M_PI * i / count;
  return g;
}

struct BootstrapOptions {
  int resamples = 200;
  std::uint64_t seed = 0;
  int chunks = 2048;  // resampling granularity (equal chunks of shots)
};

struct MomentEstimate {
  double value = 0.0;
  double se = 0.0;
};

struct MomentRow {
  double q = 0.0;
  double dphi = 0.0;
  std::uint64_t shots = 0;
  std::vector<MomentEstimate> moments;  // index n-1 holds <F^n>
};

struct MomentTable {
  int n_max = 0;
  PhaseMode phase_mode = PhaseMode::averaged;
  double eta = 1.0;
  std::vector<MomentRow> rows;  // sorted by (dphi, q)

  const MomentRow* find(double q, double dphi, double tol = 1e-9) const {
    for (const auto& r : rows)
      if (std::abs(r.q - q) <= tol && std::abs(r.dphi - dphi) <= tol) return &r;
    return nullptr;
  }
};

// Sample moments <F^n>, n = 1..n_max, per (q, dphi) setting, with bootstrap
// standard errors (B resamples over equal chunks of shots; deterministic
// given the bootstrap seed).
inline MomentTable estimate_moments(const std::vector<SampleBatch>& batches, int n_max,
                                    const BootstrapOptions& boot = {}) {
  if (batches.empty()) throw std::invalid_argument("no batches");
  if (n_max < 1) throw std::invalid_argument("n_max must be >= 1");
  const PhaseMode mode = batches.front().setting.phase_mode;
  const double eta = batches.front().setting.eta;
  for (const auto& b : batches) {
    if (b.setting.phase_mode != mode)
      throw std::invalid_argument("batches mix phase modes");
    if (b.setting.eta != eta) throw std::invalid_argument("batches mix efficiencies");
    if (b.outcomes.empty()) throw std::invalid_argument("empty batch");
  }
  if (mode == PhaseMode::averaged && n_max % 2 != 0)
    throw std::invalid_argument("phase-averaged tables need even n_max");

  // Group batches by setting.
  std::map<std::pair<double, double>, std::vector<const SampleBatch*>> groups;
  for (const auto& b : batches)
    groups[{b.setting.dphi, b.setting.q}].push_back(&b);

  MomentTable table;
  table.n_max = n_max;
  table.phase_mode = mode;
  table.eta = eta;

  for (const auto& [key, members] : groups) {
    std::uint64_t shots = 0;
    for (const auto* b : members) shots += b->outcomes.size();
    const int chunks = int(std::min<std::uint64_t>(std::max(boot.chunks, 1), shots));

    // Power sums per chunk (chunk c covers a contiguous index range).
    std::vector<double> sums(std::size_t(chunks) * n_max, 0.0);
    std::vector<std::uint64_t> counts(std::size_t(chunks), 0);
    const std::uint64_t base = shots / std::uint64_t(chunks);
    const std::uint64_t rem = shots % std::uint64_t(chunks);
    std::uint64_t idx = 0;
    int chunk = 0;
    std::uint64_t chunk_end = base + (rem > 0 ? 1 : 0);
    for (const auto* b : members) {
      for (double x : b->outcomes) {
        if (idx == chunk_end) {
          ++chunk;
          chunk_end += base + (std::uint64_t(chunk) < rem ? 1 : 0);
        }
        double p = 1.0;
        double* row = &sums[std::size_t(chunk) * n_max];
        for (int n = 0; n < n_max; ++n) {
          p *= x;
          row[n] += p;
        }
        ++counts[std::size_t(chunk)];
        ++idx;
      }
    }

    MomentRow row;
    row.dphi = key.first;
    row.q = key.second;
    row.shots = shots;
    row.moments.resize(std::size_t(n_max));
    for (int n = 0; n < n_max; ++n) {
      double tot = 0.0;
      for (int c = 0; c < chunks; ++c) tot += sums[std::size_t(c) * n_max + n];
      row.moments[std::size_t(n)].value = tot / double(shots);
    }

    // Bootstrap: resample chunks with replacement.
    const int B = std::max(boot.resamples, 2);
    const std::uint64_t kq = std::bit_cast<std::uint64_t>(row.q);
    const std::uint64_t kd = std::bit_cast<std::uint64_t>(row.dphi);
    std::vector<double> resampled(std::size_t(B) * n_max);
    for (int b = 0; b < B; ++b) {
      rng::Stream st(rng::derive_seed(boot.seed, kq, kd, std::uint64_t(b)));
      std::vector<double> acc(std::size_t(n_max), 0.0);
      std::uint64_t cnt = 0;
      for (int c = 0; c < chunks; ++c) {
        const std::uint64_t j = st.below(std::uint64_t(chunks));
        for (int n = 0; n < n_max; ++n) acc[std::size_t(n)] += sums[j * std::uint64_t(n_max) + std::uint64_t(n)];
        cnt += counts[std::size_t(j)];
      }
      for (int n = 0; n < n_max; ++n)
        resampled[std::size_t(b) * n_max + n] = acc[std::size_t(n)] / double(cnt);
    }
    for (int n = 0; n < n_max; ++n) {
      double mean = 0.0;
      for (int b = 0; b < B; ++b) mean += resampled[std::size_t(b) * n_max + n];
      mean /= B;
      double var = 0.0;
      for (int b = 0; b < B; ++b) {
        const double dlt = resampled[std::size_t(b) * n_max + n] - mean;
        var += dlt * dlt;
      }
      row.moments[std::size_t(n)].se = std::sqrt(var / double(B - 1));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

// Join per-setting tables (e.g. from independently processed batches) into
// one table sorted by (dphi, q).
inline MomentTable merge_tables(const std::vector<MomentTable>& parts) {
  if (parts.empty()) throw std::invalid_argument("no tables to merge");
  MomentTable out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const MomentTable& t = parts[i];
    if (t.n_max != out.n_max || t.phase_mode != out.phase_mode || t.eta != out.eta)
      throw std::invalid_argument("tables disagree on n_max, phase mode, or eta");
    out.rows.insert(out.rows.end(), t.rows.begin(), t.rows.end());
  }
  std::sort(out.rows.begin(), out.rows.end(), [](const MomentRow& a, const MomentRow& b) {
    return std::tie(a.dphi, a.q) < std::tie(b.dphi, b.q);
  });
  for (std::size_t i = 1; i < out.rows.size(); ++i)
    if (out.rows[i].q == out.rows[i - 1].q && out.rows[i].dphi == out.rows[i - 1].dphi)
      throw std::invalid_argument("duplicate (q, dphi) row in merged table");
  return out;
}

// ---------------------------------------------------------------------------

struct CorrelationEntry {
  double value = 0.0;
  double se = 0.0;
};

struct CorrelationSlice {
  double dphi = 0.0;
  std::map<int, std::vector<CorrelationEntry>> channels;  // order n -> entries k=0..n

  const CorrelationEntry& at(int n, int k) const {
    const auto it = channels.find(n);
    if (it == channels.end() || k < 0 || k > n)
      throw std::invalid_argument("correlation channel missing");
    return it->second[std::size_t(k)];
  }
};

struct CorrelationSet {
  int n_max = 0;
  bool phase_averaged = true;
  double eta = 1.0;
  bool corrected = false;
  std::vector<double> q_grid;
  std::map<int, double> condition;  // per solved order
  bool condition_warning = false;
  std::vector<CorrelationSlice> slices;  // sorted by dphi
};

inline constexpr double kConditionWarnThreshold = 1e6;

// Solve the per-order q systems for every dphi present in the table.
// Orders solved: 1..n (locked) or the even orders <= n (phase-averaged).
inline CorrelationSet invert_q_system(const MomentTable& table, int n) {
  if (n < 1 || n > table.n_max)
    throw std::invalid_argument("order must lie in [1, table n_max]");
  std::map<double, std::vector<const MomentRow*>> by_dphi;
  for (const auto& r : table.rows) by_dphi[r.dphi].push_back(&r);
  if (by_dphi.empty()) throw std::invalid_argument("empty moment table");

  // All slices must share one q grid.
  std::vector<double> qs;
  for (const auto* r : by_dphi.begin()->second) qs.push_back(r->q);
  std::sort(qs.begin(), qs.end());
  for (std::size_t i = 1; i < qs.size(); ++i)
    if (!(qs[i] > qs[i - 1]))
      throw std::invalid_argument("q grid has duplicate values");
  for (const auto& [dphi, rows] : by_dphi) {
    std::vector<double> other;
    for (const auto* r : rows) other.push_back(r->q);
    std::sort(other.begin(), other.end());
    if (other != qs)
      throw std::invalid_argument("incomplete grid: q values differ across dphi");
  }
  const int nq = int(qs.size());
  if (nq < n + 1)
    throw std::invalid_argument("need at least n+1 distinct q values, have " +
                                std::to_string(nq));

  CorrelationSet set;
  set.n_max = n;
  set.phase_averaged = (table.phase_mode == PhaseMode::averaged);
  set.eta = table.eta;
  set.corrected = false;
  set.q_grid = qs;

  std::vector<int> orders;
  for (int m = set.phase_averaged ? 2 : 1; m <= n; m += set.phase_averaged ? 2 : 1)
    orders.push_back(m);

  // Pseudo-inverses depend only on the grid; compute once per order.
  std::map<int, Eigen::MatrixXd> pinv;
  for (int m : orders) {
    Eigen::MatrixXd A(nq, m + 1);
    for (int j = 0; j < nq; ++j)
      for (int k = 0; k <= m; ++k)
        A(j, k) = binomial(m, k) * std::pow(qs[std::size_t(j)], k);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
    const auto& sv = svd.singularValues();
    set.condition[m] = sv(0) / sv(sv.size() - 1);
    if (set.condition[m] > kConditionWarnThreshold) set.condition_warning = true;
    pinv[m] = A.completeOrthogonalDecomposition().pseudoInverse();
  }

  for (const auto& [dphi, rows] : by_dphi) {
    CorrelationSlice slice;
    slice.dphi = dphi;
    std::vector<const MomentRow*> sorted = rows;
    std::sort(sorted.begin(), sorted.end(),
              [](const MomentRow* a, const MomentRow* b) { return a->q < b->q; });
    for (int m : orders) {
      Eigen::VectorXd y(nq), yv(nq);
      for (int j = 0; j < nq; ++j) {
        y(j) = sorted[std::size_t(j)]->moments[std::size_t(m - 1)].value;
        const double se = sorted[std::size_t(j)]->moments[std::size_t(m - 1)].se;
        yv(j) = se * se;
      }
      const Eigen::MatrixXd& P = pinv[m];
      const Eigen::VectorXd c = P * y;
      std::vector<CorrelationEntry> entries(std::size_t(m) + 1);
      for (int k = 0; k <= m; ++k) {
        entries[std::size_t(k)].value = c(k);
        double var = 0.0;
        for (int j = 0; j < nq; ++j) var += P(k, j) * P(k, j) * yv(j);
        entries[std::size_t(k)].se = std::sqrt(var);
      }
      slice.channels[m] = std::move(entries);
    }
    set.slices.push_back(std::move(slice));
  }
  return set;
}

// Invert the efficiency map order by order (low to high).  The leading term
// of the forward map is eta^n * ideal(n-k, k), so each corrected channel is
// the measured one minus lower-order feed-through, divided by eta^n.
// Standard errors propagate linearly through the same recursion.
inline CorrelationSet decontaminate(const CorrelationSet& in, double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in (0, 1]");
  CorrelationSet out = in;
  out.corrected = true;
  if (eta == 1.0) return out;
  for (std::size_t s = 0; s < in.slices.size(); ++s) {
    const CorrelationSlice& meas = in.slices[s];
    CorrelationSlice& corr = out.slices[s];
    for (auto& [order, entries] : corr.channels) {
      for (int k = 0; k <= order; ++k) {
        const int a = order - k, b = k;
        double shift = 0.0, var = 0.0;
        for (int l = a % 2; l <= a; l += 2) {
          for (int m = b % 2; m <= b; m += 2) {
            if (l == a && m == b) continue;
            const double coef = binomial(a, l) * binomial(b, m) *
                                std::pow(eta, (a + b + l + m) / 2) *
                                std::pow(0.5 * (1.0 - eta), (a + b - l - m) / 2) *
                                double_factorial(a - l - 1) * double_factorial(b - m - 1);
            // lower channels are already corrected (orders ascend in the map)
            const double lower = (l + m == 0) ? 1.0 : corr.at(l + m, m).value;
            const double lower_se = (l + m == 0) ? 0.0 : corr.at(l + m, m).se;
            shift += coef * lower;
            var += coef * coef * lower_se * lower_se;
          }
        }
        const double scale = std::pow(eta, a + b);
        const CorrelationEntry& e = meas.at(order, k);
        entries[std::size_t(k)].value = (e.value - shift) / scale;
        entries[std::size_t(k)].se = std::sqrt(e.se * e.se + var) / scale;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct HarmonicFit {
  Eigen::VectorXd coeff;  // [dc, cos, sin, cos2, sin2, ...]
  Eigen::VectorXd se;
  double max_residual_ratio = 0.0;  // max |residual| / SE over grid points
  bool alias_warning = false;
};

// Least-squares fit of y(dphi) onto {1, cos(h*dphi), sin(h*dphi)}_{h<=H} with
// first-order error propagation.  Residuals far above the propagated SEs
// indicate harmonic content beyond H (aliasing) and set a warning flag.
inline HarmonicFit fit_harmonics(const std::vector<double>& dphi,
                                 const std::vector<double>& y,
                                 const std::vector<double>& yse, int max_harmonic) {
  const int m = int(dphi.size());
  const int p = 2 * max_harmonic + 1;
  if (int(y.size()) != m || int(yse.size()) != m)
    throw std::invalid_argument("inconsistent fit input lengths");
  if (m < p)
    throw std::invalid_argument("phase grid too coarse: " + std::to_string(m) +
                                " points for " + std::to_string(p) + " harmonics");
  Eigen::MatrixXd X(m, p);
  for (int j = 0; j < m; ++j) {
    X(j, 0) = 1.0;
    for (int h = 1; h <= max_harmonic; ++h) {
      X(j, 2 * h - 1) = std::cos(h * dphi[std::size_t(j)]);
      X(j, 2 * h) = std::sin(h * dphi[std::size_t(j)]);
    }
  }
  const Eigen::MatrixXd P = X.completeOrthogonalDecomposition().pseudoInverse();
  Eigen::Map<const Eigen::VectorXd> yv(y.data(), m);
  HarmonicFit fit;
  fit.coeff = P * yv;
  fit.se.resize(p);
  for (int i = 0; i < p; ++i) {
    double var = 0.0;
    for (int j = 0; j < m; ++j)
      var += P(i, j) * P(i, j) * yse[std::size_t(j)] * yse[std::size_t(j)];
    fit.se(i) = std::sqrt(var);
  }
  const Eigen::VectorXd r = yv - X * fit.coeff;
  for (int j = 0; j < m; ++j) {
    const double floor = std::max(yse[std::size_t(j)], 1e-14);
    fit.max_residual_ratio = std::max(fit.max_residual_ratio, std::abs(r(j)) / floor);
  }
  fit.alias_warning = fit.max_residual_ratio > 5.0;
  return fit;
}

struct ValueWithError {
  double value = 0.0;
  double se = 0.0;
};

struct ComplexWithError {
  Complex value;
  double se_re = 0.0;
  double se_im = 0.0;
};

struct PhysicalQuantities {
  ValueWithError nbar1;               // <n_0>
  ValueWithError nbar2;               // <n_1>
  ComplexWithError coherence;         // <a_0^dag a_1>
  ComplexWithError third1;            // <a_0^dag^2 a_0 a_1>
  ComplexWithError third2;            // <a_1^dag^2 a_1 a_0>
  ComplexWithError pair;              // <a_0^dag^2 a_1^2>
  ValueWithError photon_correlation;  // <n_0 n_1>
  bool fourth_order = false;          // third*/pair/photon filled?
  double max_residual_ratio = 0.0;
  std::vector<std::string> flags;
};

// Harmonic decomposition of the corrected correlations in dphi:
//   c(1,1)(dphi) = Re(<a0+ a1> e^{-i dphi})                      (harmonic 1)
//   c(3,1)(dphi) = 1.5 c(1,1) + 0.75 (<a0+^2 a0 a1> e^{-i dphi} + cc)
//   c(1,3)(dphi) = 1.5 c(1,1) + 0.75 (<a1+^2 a1 a0> e^{+i dphi} + cc)
//   c(2,2)(dphi) = <(n0+1/2)(n1+1/2)> + 0.25 (<a0+^2 a1^2> e^{-2i dphi} + cc)
//   c(2,0) = <n0> + 1/2,  c(0,2) = <n1> + 1/2   (dphi-independent)
inline PhysicalQuantities extract_physics(const CorrelationSet& set) {
  if (!set.phase_averaged)
    throw std::invalid_argument("physics extraction requires phase-averaged data");
  if (!set.corrected)
    throw std::invalid_argument("physics extraction requires a corrected set");
  if (set.slices.size() < 5)
    throw std::invalid_argument("need at least 5 dphi points, have " +
                                std::to_string(set.slices.size()));
  if (set.n_max < 2) throw std::invalid_argument("need correlations up to order >= 2");

  const int m = int(set.slices.size());
  std::vector<double> dphi(std::size_t(m), 0.0);
  for (int j = 0; j < m; ++j) dphi[std::size_t(j)] = set.slices[std::size_t(j)].dphi;

  const auto channel = [&](int n, int k) {
    std::pair<std::vector<double>, std::vector<double>> out;
    out.first.resize(std::size_t(m));
    out.second.resize(std::size_t(m));
    for (int j = 0; j < m; ++j) {
      const CorrelationEntry& e = set.slices[std::size_t(j)].at(n, k);
      out.first[std::size_t(j)] = e.value;
      out.second[std::size_t(j)] = e.se;
    }
    return out;
  };

  PhysicalQuantities phys;
  const auto note_alias = [&](const HarmonicFit& f, int n, int k) {
    phys.max_residual_ratio = std::max(phys.max_residual_ratio, f.max_residual_ratio);
    if (f.alias_warning)
      phys.flags.push_back("harmonic_fit_alias_" + std::to_string(n) + "_" +
                           std::to_string(k));
  };

  const auto [y20, s20] = channel(2, 0);
  const HarmonicFit f20 = fit_harmonics(dphi, y20, s20, 2);
  note_alias(f20, 2, 0);
  phys.nbar1 = {f20.coeff(0) - 0.5, f20.se(0)};

  const auto [y02, s02] = channel(2, 2);
  const HarmonicFit f02 = fit_harmonics(dphi, y02, s02, 2);
  note_alias(f02, 2, 2);
  phys.nbar2 = {f02.coeff(0) - 0.5, f02.se(0)};

  const auto [y11, s11] = channel(2, 1);
  const HarmonicFit f11 = fit_harmonics(dphi, y11, s11, 2);
  note_alias(f11, 2, 1);
  phys.coherence = {Complex(f11.coeff(1), f11.coeff(2)), f11.se(1), f11.se(2)};

  if (set.n_max >= 4) {
    phys.fourth_order = true;

    // c(3,1) and c(1,3): subtract the second-order feed-through, then the
    // remaining first harmonic carries the third-order amplitude (x 3/2).
    const auto [y31, s31] = channel(4, 1);
    std::vector<double> r31(std::size_t(m), 0.0), rs31(std::size_t(m), 0.0);
    for (int j = 0; j < m; ++j) {
      r31[std::size_t(j)] = y31[std::size_t(j)] - 1.5 * y11[std::size_t(j)];
      rs31[std::size_t(j)] = std::sqrt(s31[std::size_t(j)] * s31[std::size_t(j)] +
                                       2.25 * s11[std::size_t(j)] * s11[std::size_t(j)]);
    }
    const HarmonicFit f31 = fit_harmonics(dphi, r31, rs31, 2);
    note_alias(f31, 4, 1);
    phys.third1 = {Complex(f31.coeff(1), f31.coeff(2)) * (2.0 / 3.0),
                   f31.se(1) * (2.0 / 3.0), f31.se(2) * (2.0 / 3.0)};

    const auto [y13, s13] = channel(4, 3);
    std::vector<double> r13(std::size_t(m), 0.0), rs13(std::size_t(m), 0.0);
    for (int j = 0; j < m; ++j) {
      r13[std::size_t(j)] = y13[std::size_t(j)] - 1.5 * y11[std::size_t(j)];
      rs13[std::size_t(j)] = std::sqrt(s13[std::size_t(j)] * s13[std::size_t(j)] +
                                       2.25 * s11[std::size_t(j)] * s11[std::size_t(j)]);
    }
    const HarmonicFit f13 = fit_harmonics(dphi, r13, rs13, 2);
    note_alias(f13, 4, 3);
    // e^{+i dphi} convention: cos coefficient = 1.5 Re v, sin = -1.5 Im v.
    phys.third2 = {Complex(f13.coeff(1), -f13.coeff(2)) * (2.0 / 3.0),
                   f13.se(1) * (2.0 / 3.0), f13.se(2) * (2.0 / 3.0)};

    const auto [y22, s22] = channel(4, 2);
    const HarmonicFit f22 = fit_harmonics(dphi, y22, s22, 2);
    note_alias(f22, 4, 2);
    phys.pair = {Complex(f22.coeff(3), f22.coeff(4)) * 2.0, f22.se(3) * 2.0,
                 f22.se(4) * 2.0};
    const double dc = f22.coeff(0);
    phys.photon_correlation.value =
        dc - 0.5 * phys.nbar1.value - 0.5 * phys.nbar2.value - 0.25;
    phys.photon_correlation.se =
        std::sqrt(f22.se(0) * f22.se(0) + 0.25 * phys.nbar1.se * phys.nbar1.se +
                  0.25 * phys.nbar2.se * phys.nbar2.se);
  }

  // Physicality checks are reported, never clipped.
  if (phys.nbar1.value < -3.0 * phys.nbar1.se) phys.flags.push_back("nbar1_negative");
  if (phys.nbar2.value < -3.0 * phys.nbar2.se) phys.flags.push_back("nbar2_negative");
  if (phys.fourth_order &&
      phys.photon_correlation.value < -3.0 * phys.photon_correlation.se)
    phys.flags.push_back("photon_correlation_negative");
  return phys;
}

// Interference cross term from just two settings: at q = 1 the second moment
// shifts by 4x the cross term when dphi advances by pi, so
//   cross(dphi) = (<F^2>(dphi) - <F^2>(dphi + pi)) / 4.
inline ValueWithError double_slit_difference(const MomentTable& table, double dphi) {
  if (table.n_max < 2) throw std::invalid_argument("need second moments");
  const double opposite = std::fmod(dphi + M_PI, 2.0 * M_PI);
  const MomentRow* a = table.find(1.0, dphi);
  const MomentRow* b = table.find(1.0, opposite);
  if (b == nullptr) b = table.find(1.0, dphi + M_PI);  // unwrapped grid
  if (a == nullptr || b == nullptr)
    throw std::invalid_argument(
        "double-slit difference needs q = 1 rows at dphi and dphi + pi");
  const MomentEstimate& ma = a->moments[1];
  const MomentEstimate& mb = b->moments[1];
  ValueWithError out;
  out.value = (ma.value - mb.value) / 4.0;
  out.se = std::sqrt(ma.se * ma.se + mb.se * mb.se) / 4.0;
  return out;
}

}  // namespace pulsecorr
