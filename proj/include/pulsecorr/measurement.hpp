#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pulsecorr/fock.hpp"
#include "pulsecorr/rng.hpp"

// Homodyne sampling of a weighted sum of mode quadratures.
//
// The measured observable for a two-pulse probe is
//   F = F_0(phi) + q * F_1(phi + dphi),
// where F_k is the quadrature of mode k.  Detection efficiency eta replaces
// each mode operator a -> eta a + sqrt(eta (1-eta)) c with c a vacuum mode,
// which is equivalent to drawing X from the ideal spectral distribution and
// reporting eta*X + G, G Gaussian with variance (sum_k w_k^2) eta(1-eta)/2.
// That Gaussian-convolution shortcut is exact (the vacuum quadrature is
// exactly Gaussian and independent of the signal) and is regression-tested
// against an explicit noise-mode construction at small cutoff.
//
// In phase-averaged mode every shot carries an independent uniform reference
// phase phi.  Because a global phase rotation is generated by the total
// photon number, the shot ensemble is distributed exactly as the phi = 0
// observable measured in the total-photon-number-dephased state, which is how
// the sampler realizes it (one eigendecomposition instead of one per shot).

namespace pulsecorr {

enum class PhaseMode { locked, averaged };

struct MeasurementSetting {
  double q = 1.0;      // relative weight of the second pulse
  double phi = 0.0;    // reference phase (ignored when phase-averaged)
  double dphi = 0.0;   // phase step between the two pulses
  double eta = 1.0;    // detection efficiency, in (0, 1]
  PhaseMode phase_mode = PhaseMode::averaged;
  std::uint64_t shots = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(q >= 0.0) || !std::isfinite(q))
      throw std::invalid_argument("q must be finite and >= 0");
    if (!(eta > 0.0 && eta <= 1.0))
      throw std::invalid_argument("eta must lie in (0, 1]");
    if (shots == 0) throw std::invalid_argument("shots must be >= 1");
    if (!std::isfinite(phi) || !std::isfinite(dphi))
      throw std::invalid_argument("phases must be finite");
  }
};

struct SampleBatch {
  MeasurementSetting setting;
  std::vector<double> outcomes;   // one per shot
  std::uint64_t chunk_size = 0;   // RNG stream partition used to generate it
};

inline constexpr std::uint64_t kSampleChunk = 1 << 16;

// F = sum_k weights[k] * quadrature(mode k, phases[k]); one mode per weight.
inline Matrix sum_field_operator(int cutoff, const std::vector<double>& weights,
                                 const std::vector<double>& phases) {
  if (weights.empty() || weights.size() != phases.size())
    throw std::invalid_argument("weights and phases must be non-empty and equal length");
  const int n_modes = int(weights.size());
  const Eigen::Index dim = detail::ipow(cutoff + 1, n_modes);
  Matrix f = Matrix::Zero(dim, dim);
  for (int k = 0; k < n_modes; ++k)
    f += weights[k] * quadrature(k, phases[k], n_modes, cutoff);
  return f;
}

// Outcome distribution of a Hermitian observable in a given state.
// Eigenvalues within 1e-9 of each other are merged into one outcome.
struct SpectralMeasure {
  std::vector<double> values;
  std::vector<double> probs;
  std::vector<double> cumulative;

  double draw(double u) const {
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const std::size_t i = std::min<std::size_t>(it - cumulative.begin(), values.size() - 1);
    return values[i];
  }

  double mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) m += probs[i] * values[i];
    return m;
  }
  double moment(int n) const {
    double m = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
      m += probs[i] * std::pow(values[i], n);
    return m;
  }
};

inline SpectralMeasure spectral_measure(const Matrix& op, const FockState& state) {
  if (op.rows() != state.dim() || op.cols() != state.dim())
    throw std::invalid_argument("observable dimension does not match state");
  if ((op - op.adjoint()).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("observable is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (op + op.adjoint().eval()));
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition failed");
  const Eigen::VectorXd lambda = eig.eigenvalues();
  const Matrix& vecs = eig.eigenvectors();

  const Eigen::Index d = lambda.size();
  Eigen::VectorXd p(d);
  if (state.is_pure()) {
    const Vector amps = vecs.adjoint() * state.amplitudes();
    for (Eigen::Index i = 0; i < d; ++i) p(i) = std::norm(amps(i));
  } else {
    const Matrix w = state.density() * vecs;
    for (Eigen::Index i = 0; i < d; ++i) p(i) = vecs.col(i).dot(w.col(i)).real();
  }

  double sum = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (p(i) < -1e-12)
      throw std::runtime_error("spectral probability below -1e-12: " + std::to_string(p(i)));
    if (p(i) < 0.0) p(i) = 0.0;
    sum += p(i);
  }
  if (std::abs(sum - 1.0) > 1e-10)
    throw std::runtime_error("spectral probabilities sum to " + std::to_string(sum));

  SpectralMeasure sm;
  Eigen::Index i = 0;
  while (i < d) {
    Eigen::Index j = i;
    double vsum = lambda(i), psum = p(i);
    while (j + 1 < d && lambda(j + 1) - lambda(j) < 1e-9) {
      ++j;
      vsum += lambda(j);
      psum += p(j);
    }
    sm.values.push_back(vsum / double(j - i + 1));
    sm.probs.push_back(psum);
    i = j + 1;
  }
  sm.cumulative.resize(sm.probs.size());
  double c = 0.0;
  for (std::size_t k = 0; k < sm.probs.size(); ++k) {
    c += sm.probs[k];
    sm.cumulative[k] = c;
  }
  sm.cumulative.back() = 1.0;
  return sm;
}

namespace detail {

// Shared draw loop: outcome = scale * X + noise_sd * G, chunked RNG streams.
inline std::vector<double> draw_outcomes(const SpectralMeasure& sm, std::uint64_t shots,
                                         std::uint64_t seed, double scale,
                                         double noise_sd) {
  std::vector<double> out(shots);
  const std::uint64_t chunks = (shots + kSampleChunk - 1) / kSampleChunk;
  for (std::uint64_t c = 0; c < chunks; ++c) {
    rng::Stream st(rng::derive_seed(seed, c));
    const std::uint64_t lo = c * kSampleChunk;
    const std::uint64_t hi = std::min(shots, lo + kSampleChunk);
    for (std::uint64_t s = lo; s < hi; ++s) {
      double x = scale * sm.draw(st.uniform01());
      if (noise_sd > 0.0) x += noise_sd * st.gaussian();
      out[s] = x;
    }
  }
  return out;
}

}  // namespace detail

// General-weight sampler: measures sum_k w_k F_k(phases[k]) on an
// n_modes == weights.size() state with efficiency eta.
inline std::vector<double> sample_weighted(const FockState& state,
                                           const std::vector<double>& weights,
                                           const std::vector<double>& phases, double eta,
                                           PhaseMode mode, std::uint64_t shots,
                                           std::uint64_t seed) {
  if (int(weights.size()) != state.n_modes())
    throw std::invalid_argument("one weight per state mode required");
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in (0, 1]");
  if (shots == 0) throw std::invalid_argument("shots must be >= 1");
  const FockState* work = &state;
  FockState dephased = state;  // copy only used in averaged mode
  if (mode == PhaseMode::averaged) {
    dephased = dephase_total_number(state);
    work = &dephased;
  }
  const Matrix f = sum_field_operator(state.cutoff(), weights, phases);
  const SpectralMeasure sm = spectral_measure(f, *work);
  double w2 = 0.0;
  for (double w : weights) w2 += w * w;
  const double noise_sd = (eta < 1.0) ? std::sqrt(w2 * eta * (1.0 - eta) / 2.0) : 0.0;
  return detail::draw_outcomes(sm, shots, seed, eta, noise_sd);
}

// Two-pulse homodyne batch per the measurement setting.
inline SampleBatch sample(const FockState& state, const MeasurementSetting& setting) {
  setting.validate();
  if (state.n_modes() != 2)
    throw std::invalid_argument("two-pulse sampling needs a two-mode state");
  const double base = (setting.phase_mode == PhaseMode::averaged) ? 0.0 : setting.phi;
  SampleBatch batch;
  batch.setting = setting;
  batch.chunk_size = kSampleChunk;
  batch.outcomes = sample_weighted(state, {1.0, setting.q}, {base, base + setting.dphi},
                                   setting.eta, setting.phase_mode, setting.shots,
                                   setting.seed);
  return batch;
}

// Reference sampler that models the efficiency loss with explicit vacuum
// noise modes: measures
//   sum_k w_k [ eta F_k + sqrt(eta(1-eta)) F_{c_k} ]
// on state (x) |0><0| (x) |0><0|.  Exponential in mode count, so only small
// cutoffs are allowed; exists to pin the Gaussian-convolution shortcut.
inline SampleBatch sample_with_explicit_noise_modes(const FockState& state,
                                                    const MeasurementSetting& setting) {
  setting.validate();
  if (state.n_modes() != 2)
    throw std::invalid_argument("two-pulse sampling needs a two-mode state");
  if (state.cutoff() > 5)
    throw std::invalid_argument("explicit noise-mode sampling is limited to cutoff <= 5");
  const double base = (setting.phase_mode == PhaseMode::averaged) ? 0.0 : setting.phi;
  const double leak = std::sqrt(setting.eta * (1.0 - setting.eta));
  const FockState vac = vacuum_state(state.cutoff());
  const FockState full =
      tensor(tensor(state, vac, std::numeric_limits<double>::infinity()), vac,
             std::numeric_limits<double>::infinity());
  const std::vector<double> weights = {setting.eta, setting.eta * setting.q, leak,
                                       leak * setting.q};
  const std::vector<double> phases = {base, base + setting.dphi, base,
                                      base + setting.dphi};
  SampleBatch batch;
  batch.setting = setting;
  batch.chunk_size = kSampleChunk;
  batch.outcomes = sample_weighted(full, weights, phases, 1.0, setting.phase_mode,
                                   setting.shots, setting.seed);
  return batch;
}

}  // namespace pulsecorr
