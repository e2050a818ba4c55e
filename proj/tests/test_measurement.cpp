#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "pulsecorr/measurement.hpp"
#include "pulsecorr/moment_lab.hpp"
#include "pulsecorr/oracle.hpp"

using namespace pulsecorr;
using Catch::Matchers::WithinAbs;

namespace {

MeasurementSetting setting(double q, double dphi, double eta, PhaseMode mode,
                           std::uint64_t shots, std::uint64_t seed, double phi = 0.0) {
  MeasurementSetting s;
  s.q = q;
  s.dphi = dphi;
  s.eta = eta;
  s.phase_mode = mode;
  s.shots = shots;
  s.seed = seed;
  s.phi = phi;
  return s;
}

double sample_mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / double(xs.size());
}

double sample_var(const std::vector<double>& xs) {
  const double m = sample_mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / double(xs.size() - 1);
}

}  // namespace

TEST_CASE("spectral measure of the vacuum quadrature") {
  const int cutoff = 16;
  const FockState vac = vacuum_state(cutoff);
  const SpectralMeasure sm =
      spectral_measure(single_mode_quadrature(cutoff, 0.0), vac);
  double total = 0.0;
  for (double p : sm.probs) total += p;
  REQUIRE_THAT(total, WithinAbs(1.0, 1e-10));
  REQUIRE_THAT(sm.mean(), WithinAbs(0.0, 1e-10));
  REQUIRE_THAT(sm.moment(2), WithinAbs(0.5, 1e-6));
}

TEST_CASE("spectral measure of excited and mixed states") {
  const int cutoff = 16;
  const SpectralMeasure one =
      spectral_measure(single_mode_quadrature(cutoff, 0.0), fock_state(1, cutoff));
  REQUIRE_THAT(one.moment(2), WithinAbs(1.5, 1e-6));

  const SpectralMeasure th =
      spectral_measure(single_mode_quadrature(cutoff, 0.0), thermal_state(0.3, cutoff));
  REQUIRE_THAT(th.mean(), WithinAbs(0.0, 1e-10));
  REQUIRE_THAT(th.moment(2), WithinAbs(0.8, 1e-6));
}

TEST_CASE("inverse-CDF draw hits the support endpoints") {
  const int cutoff = 16;
  const SpectralMeasure sm = spectral_measure(single_mode_quadrature(cutoff, 0.0),
                                              thermal_state(0.5, cutoff));
  REQUIRE(sm.draw(0.0) == sm.values.front());
  REQUIRE(sm.draw(1.0 - 1e-16) == sm.values.back());
  for (std::size_t i = 1; i < sm.values.size(); ++i)
    REQUIRE(sm.values[i] > sm.values[i - 1]);
}

TEST_CASE("degenerate spectral lines are aggregated") {
  // F on mode 0 of a two-mode space: every eigenvalue is (cutoff+1)-fold
  // degenerate, so the measure must collapse to cutoff+1 distinct lines.
  const int cutoff = 10;
  const FockState st = tensor(vacuum_state(cutoff), thermal_state(0.2, cutoff));
  const SpectralMeasure sm = spectral_measure(quadrature(0, 0.0, 2, cutoff), st);
  REQUIRE(sm.values.size() == std::size_t(cutoff + 1));
}

TEST_CASE("sampling is deterministic and seed-sensitive") {
  const FockState st = tensor(coherent_state(Complex(1.0, 0.0), 12), vacuum_state(12));
  const auto s = setting(0.7, 0.9, 0.8, PhaseMode::averaged, 5000, 77);
  const SampleBatch a = sample(st, s);
  const SampleBatch b = sample(st, s);
  REQUIRE(a.outcomes == b.outcomes);

  auto s2 = s;
  s2.seed = 78;
  REQUIRE(sample(st, s2).outcomes != a.outcomes);
}

TEST_CASE("chunked streams make shot prefixes stable") {
  // Outcome i depends only on (seed, chunk index, offset), so extending the
  // batch must not change what was already drawn -- the property that makes
  // parallel and serial generation agree.
  const FockState st = tensor(vacuum_state(6), vacuum_state(6));
  const auto s1 = setting(0.5, 0.3, 0.9, PhaseMode::averaged, 66000, 5);
  const auto s2 = setting(0.5, 0.3, 0.9, PhaseMode::averaged, 70000, 5);
  const SampleBatch b1 = sample(st, s1);
  const SampleBatch b2 = sample(st, s2);
  for (std::size_t i = 0; i < b1.outcomes.size(); ++i)
    REQUIRE(b1.outcomes[i] == b2.outcomes[i]);
}

TEST_CASE("unit efficiency reduces to ideal spectral sampling") {
  const int cutoff = 8;
  const FockState st = tensor(fock_state(1, cutoff), vacuum_state(cutoff));
  const auto s = setting(1.0, 0.4, 1.0, PhaseMode::locked, 2000, 13, 0.2);
  const SampleBatch batch = sample(st, s);
  // Every outcome must be an exact spectral line of the measured operator.
  const Matrix f = sum_field_operator(cutoff, {1.0, s.q}, {s.phi, s.phi + s.dphi});
  const SpectralMeasure sm = spectral_measure(f, st);
  for (double x : batch.outcomes) {
    bool found = false;
    for (double v : sm.values)
      if (x == v) {
        found = true;
        break;
      }
    REQUIRE(found);
  }
}

TEST_CASE("lossy outcomes leave the spectral support") {
  const int cutoff = 8;
  const FockState st = tensor(fock_state(1, cutoff), vacuum_state(cutoff));
  auto s = setting(1.0, 0.4, 0.6, PhaseMode::locked, 200, 13, 0.2);
  const SampleBatch batch = sample(st, s);
  const Matrix f = sum_field_operator(cutoff, {1.0, s.q}, {s.phi, s.phi + s.dphi});
  const SpectralMeasure sm = spectral_measure(f, st);
  int off_support = 0;
  for (double x : batch.outcomes) {
    bool found = false;
    for (double v : sm.values)
      if (x == v) found = true;
    if (!found) ++off_support;
  }
  REQUIRE(off_support == 200);  // Gaussian convolution a.s. misses the lines
}

TEST_CASE("vacuum variance reflects the efficiency model") {
  // var = eta^2 * 0.5 + eta(1-eta)/2 = eta/2 at q = 0.
  const FockState st = tensor(vacuum_state(12), vacuum_state(12));
  const auto s = setting(0.0, 0.0, 0.5, PhaseMode::averaged, 100000, 99);
  const SampleBatch batch = sample(st, s);
  REQUIRE_THAT(sample_mean(batch.outcomes), WithinAbs(0.0, 0.01));
  const double var = sample_var(batch.outcomes);
  const double se = 0.25 * std::sqrt(2.0 / double(batch.outcomes.size()));
  REQUIRE_THAT(var, WithinAbs(0.25, 5.0 * se * 1.5));
}

TEST_CASE("locked-phase mean matches the exact first moment") {
  const int cutoff = 12;
  const FockState st = tensor(coherent_state(Complex(1.0, 0.0), cutoff),
                              vacuum_state(cutoff));
  const auto s = setting(1.0, 0.0, 1.0, PhaseMode::locked, 100000, 21, 0.0);
  const SampleBatch batch = sample(st, s);
  const double exact = std::sqrt(2.0);  // <F1(0)> = sqrt(2) Re(alpha), <F2> = 0
  const double se = std::sqrt(sample_var(batch.outcomes) / double(s.shots));
  REQUIRE_THAT(sample_mean(batch.outcomes), WithinAbs(exact, 5.0 * se));
}

TEST_CASE("phase averaging zeroes odd moments") {
  const FockState st = tensor(coherent_state(Complex(1.0, 0.0), 10),
                              coherent_state(Complex(0.0, 1.0), 10));
  const auto s = setting(1.0, 0.7, 0.7, PhaseMode::averaged, 100000, 31);
  const SampleBatch batch = sample(st, s);
  const double se = std::sqrt(sample_var(batch.outcomes) / double(s.shots));
  REQUIRE_THAT(sample_mean(batch.outcomes), WithinAbs(0.0, 5.0 * se));
}

TEST_CASE("phase-averaged sampling equals the dephased-state observable") {
  // Algebraic core of the sampler: moments of the phi = 0 observable in the
  // dephased state must equal the uniform phase average of the locked-state
  // moments.  A 16-point phase grid integrates trig polynomials up to degree
  // 15 exactly, far beyond the order-4 content here.
  const int cutoff = 12;
  const double q = 0.8, dphi = 1.1;
  const FockState st = tensor(coherent_state(Complex(0.7, 0.2), cutoff),
                              coherent_state(Complex(-0.3, 0.5), cutoff));
  const FockState deph = dephase_total_number(st);
  const SpectralMeasure sm = spectral_measure(
      sum_field_operator(cutoff, {1.0, q}, {0.0, dphi}), deph);
  const int K = 16;
  for (int n = 1; n <= 4; ++n) {
    double avg = 0.0;
    for (int j = 0; j < K; ++j) {
      const double phi = 2.0 * M_PI * j / K;
      const Matrix f = sum_field_operator(cutoff, {1.0, q}, {phi, phi + dphi});
      avg += expect_real(st, detail::mat_power(f, n));
    }
    avg /= K;
    REQUIRE_THAT(sm.moment(n), WithinAbs(avg, 1e-10));
  }
}

TEST_CASE("explicit noise modes agree with the Gaussian shortcut") {
  const int cutoff = 3;
  const FockState st = tensor(fock_state(1, cutoff), fock_state(1, cutoff));
  const std::uint64_t shots = 20000;
  BootstrapOptions boot;
  boot.seed = 17;
  boot.chunks = 200;
  for (PhaseMode mode : {PhaseMode::locked, PhaseMode::averaged}) {
    const auto s_fast = setting(0.8, 1.1, 0.6, mode, shots, 1001, 0.4);
    auto s_slow = s_fast;
    s_slow.seed = 2002;
    const SampleBatch fast = sample(st, s_fast);
    const SampleBatch slow = sample_with_explicit_noise_modes(st, s_slow);
    const MomentTable tf = estimate_moments({fast}, 4, boot);
    const MomentTable ts = estimate_moments({slow}, 4, boot);
    for (int n = 1; n <= 4; ++n) {
      const MomentEstimate& a = tf.rows[0].moments[std::size_t(n - 1)];
      const MomentEstimate& b = ts.rows[0].moments[std::size_t(n - 1)];
      const double combined = std::sqrt(a.se * a.se + b.se * b.se);
      INFO("mode " << (mode == PhaseMode::locked ? "locked" : "averaged")
                   << " order " << n);
      REQUIRE(std::abs(a.value - b.value) <= 5.0 * combined);
    }
  }
}

TEST_CASE("empirical moments track the contaminated oracle") {
  const int cutoff = 12;
  const FockState st = tensor(coherent_state(Complex(1.0, 0.0), cutoff),
                              coherent_state(Complex(0.0, 1.0), cutoff));
  const double q = 0.7, dphi = 0.9, eta = 0.6;
  const CorrelationTable dirty =
      contaminate(ideal_correlations(st, 4, dphi, true, 0.0), eta);
  const auto s = setting(q, dphi, eta, PhaseMode::averaged, 100000, 55);
  BootstrapOptions boot;
  boot.seed = 3;
  const MomentTable t = estimate_moments({sample(st, s)}, 4, boot);
  for (int n = 1; n <= 4; ++n) {
    const double expected = synthesize_sum_moment(dirty, q, n);
    const MomentEstimate& est = t.rows[0].moments[std::size_t(n - 1)];
    INFO("order " << n << ": " << est.value << " vs " << expected);
    REQUIRE(std::abs(est.value - expected) <= 5.0 * est.se);
  }
}

TEST_CASE("invalid settings are rejected") {
  const FockState st = tensor(vacuum_state(4), vacuum_state(4));
  REQUIRE_THROWS_AS(sample(st, setting(1.0, 0.0, 0.0, PhaseMode::averaged, 10, 1)),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(sample(st, setting(1.0, 0.0, 1.5, PhaseMode::averaged, 10, 1)),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(sample(st, setting(-0.5, 0.0, 1.0, PhaseMode::averaged, 10, 1)),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(sample(st, setting(1.0, 0.0, 1.0, PhaseMode::averaged, 0, 1)),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(sample(vacuum_state(4), setting(1.0, 0.0, 1.0, PhaseMode::averaged, 10, 1)),
                    std::invalid_argument);
  const FockState big = tensor(vacuum_state(8), vacuum_state(8));
  REQUIRE_THROWS_AS(
      sample_with_explicit_noise_modes(big, setting(1.0, 0.0, 0.5, PhaseMode::locked, 10, 1)),
      std::invalid_argument);
}
