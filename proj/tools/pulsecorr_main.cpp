// Command-line front end: config-driven simulation runs, reconstruction,
// exact reference dumps, statistical comparison, and efficiency sweeps.
//
// Exit codes: 0 success; 1 failed statistical gate or train validation;
// 2 usage or runtime error (bad config, hash mismatch, missing file).

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "pulsecorr/experiment.hpp"

namespace {

using namespace pulsecorr;

// Freedman-Diaconis default bin width; falls back to a normal-reference rule
// when the interquartile range degenerates.
double default_bin_width(std::vector<double> xs) {
  const std::size_t n = xs.size();
  if (n < 2) return 1.0;
  std::sort(xs.begin(), xs.end());
  const auto quantile = [&](double f) {
    const double pos = f * double(n - 1);
    const std::size_t lo = std::size_t(pos);
    const std::size_t hi = std::min(lo + 1, n - 1);
    return xs[lo] + (pos - double(lo)) * (xs[hi] - xs[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double h = 2.0 * iqr / std::cbrt(double(n));
  if (h <= 0.0) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= double(n);
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= double(n - 1);
    h = 3.49 * std::sqrt(var) / std::cbrt(double(n));
  }
  return h > 0.0 ? h : 1.0;
}

void print_histogram(const SampleBatch& batch, double bin_width) {
  const std::vector<double>& xs = batch.outcomes;
  if (xs.empty()) return;
  const auto [mn_it, mx_it] = std::minmax_element(xs.begin(), xs.end());
  const double mn = *mn_it, mx = *mx_it;
  double h = bin_width > 0.0 ? bin_width : default_bin_width(xs);
  std::size_t bins = std::size_t((mx - mn) / h) + 1;
  if (bins > 60) {  // keep console output readable
    h = (mx - mn) / 60.0;
    bins = 60;
  }
  std::vector<std::size_t> counts(bins, 0);
  for (double x : xs) {
    std::size_t b = std::size_t((x - mn) / h);
    if (b >= bins) b = bins - 1;
    ++counts[b];
  }
  const std::size_t peak = *std::max_element(counts.begin(), counts.end());
  std::printf("  outcomes for q=%.4g dphi=%.4g (bin width %.4g):\n",
              batch.setting.q, batch.setting.dphi, h);
  for (std::size_t b = 0; b < bins; ++b) {
    const int bar = peak > 0 ? int(50.0 * double(counts[b]) / double(peak)) : 0;
    std::printf("  [%+9.4f, %+9.4f) %8zu %s\n", mn + double(b) * h,
                mn + double(b + 1) * h, counts[b], std::string(std::size_t(bar), '#').c_str());
  }
}

void print_physics(const PhysicalQuantities& p) {
  std::printf("  nbar1                = %.6g +/- %.3g\n", p.nbar1.value, p.nbar1.se);
  std::printf("  nbar2                = %.6g +/- %.3g\n", p.nbar2.value, p.nbar2.se);
  std::printf("  coherence            = %.6g%+.6gi +/- (%.3g, %.3g)\n",
              p.coherence.value.real(), p.coherence.value.imag(), p.coherence.se_re,
              p.coherence.se_im);
  if (p.fourth_order) {
    std::printf("  third1               = %.6g%+.6gi +/- (%.3g, %.3g)\n",
                p.third1.value.real(), p.third1.value.imag(), p.third1.se_re,
                p.third1.se_im);
    std::printf("  third2               = %.6g%+.6gi +/- (%.3g, %.3g)\n",
                p.third2.value.real(), p.third2.value.imag(), p.third2.se_re,
                p.third2.se_im);
    std::printf("  pair                 = %.6g%+.6gi +/- (%.3g, %.3g)\n",
                p.pair.value.real(), p.pair.value.imag(), p.pair.se_re, p.pair.se_im);
    std::printf("  photon_correlation   = %.6g +/- %.3g\n", p.photon_correlation.value,
                p.photon_correlation.se);
  }
  std::printf("  max fit residual / SE = %.3g\n", p.max_residual_ratio);
  for (const auto& f : p.flags) std::printf("  flag: %s\n", f.c_str());
}

std::vector<double> parse_eta_list(const std::string& text) {
  std::vector<double> etas;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    etas.push_back(std::stod(text.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return etas;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pulsecorr: two-pulse homodyne sampling and moment reconstruction"};
  app.require_subcommand(1);

  std::string config_path, out_dir, manifest_path, oracle_path, etas_str;
  std::uint64_t seed = 0, shots = 0;
  int n_max = 0;
  bool override_overlap = false;
  bool histogram = false;
  double bin_width = 0.0;
  double tol = 1e-4;

  auto* sim = app.add_subcommand(
      "simulate", "Sample every (q, dphi) setting and write batch + moment artifacts");
  sim->add_option("--config", config_path, "Config JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  sim->add_option("--out", out_dir, "Run output directory")->required();
  sim->add_option("--seed", seed, "Override the config seed");
  sim->add_option("--shots", shots, "Override shots per setting");
  sim->add_option("--n-max", n_max, "Override the config n_max");
  sim->add_flag("--override-overlap-check", override_overlap,
                "Proceed even if the pulse train fails the mode-independence gate");
  sim->add_flag("--histogram", histogram, "Print a text histogram per setting");
  sim->add_option("--bin-width", bin_width,
                  "Histogram bin width (default: Freedman-Diaconis)");

  auto* rec = app.add_subcommand(
      "reconstruct", "Rebuild moments from a run's batches and extract correlations");
  rec->add_option("--manifest", manifest_path, "manifest.json of a simulated run")
      ->required()
      ->check(CLI::ExistingFile);
  rec->add_option("--n-max", n_max, "Reconstruct up to this order (default: config)");

  auto* orc = app.add_subcommand(
      "oracle", "Write the exact correlation tables and physical quantities for a config");
  orc->add_option("--config", config_path, "Config JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  orc->add_option("--out", out_dir, "Output directory")->required();
  orc->add_option("--n-max", n_max, "Override the config n_max");

  auto* cmp = app.add_subcommand(
      "compare", "z-score a reconstructed run against an oracle dump");
  cmp->add_option("--manifest", manifest_path, "manifest.json of a reconstructed run")
      ->required()
      ->check(CLI::ExistingFile);
  cmp->add_option("--oracle", oracle_path, "oracle.json for the same config")
      ->required()
      ->check(CLI::ExistingFile);

  auto* swp = app.add_subcommand(
      "sweep", "Repeat the simulate + reconstruct pipeline across efficiencies");
  swp->add_option("--config", config_path, "Config JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  swp->add_option("--out", out_dir, "Sweep output directory")->required();
  swp->add_option("--etas", etas_str, "Comma-separated efficiencies, e.g. 0.3,0.6,0.9")
      ->required();
  swp->add_option("--seed", seed, "Override the config seed");
  swp->add_option("--shots", shots, "Override shots per setting");
  swp->add_option("--n-max", n_max, "Override the config n_max");
  swp->add_flag("--override-overlap-check", override_overlap,
                "Proceed even if the pulse train fails the mode-independence gate");

  auto* vt = app.add_subcommand(
      "validate-train", "Check the config's pulse train for mode independence");
  vt->add_option("--config", config_path, "Config JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  vt->add_option("--tol", tol, "Maximum allowed off-diagonal overlap (default 1e-4)");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto flag_given = [](const CLI::App* cmd, const char* name) {
      const CLI::Option* opt = cmd->get_option_no_throw(name);
      return opt != nullptr && opt->count() > 0;
    };
    const auto apply_overrides = [&](ExperimentConfig& cfg, const CLI::App* cmd) {
      if (flag_given(cmd, "--seed")) cfg.seed = seed;
      if (flag_given(cmd, "--shots")) cfg.shots = shots;
      if (flag_given(cmd, "--n-max")) cfg.n_max = n_max;
      validate_config(cfg);
    };

    if (sim->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      apply_overrides(cfg, sim);
      const SimulateResult result = run_simulate(cfg, out_dir, override_overlap);
      std::printf("simulated %zu settings x %llu shots -> %s\n",
                  result.moments.rows.size(),
                  static_cast<unsigned long long>(cfg.shots),
                  result.dir.string().c_str());
      std::printf("config hash %s\n", result.cfg_hash.c_str());
      if (histogram) {
        for (std::size_t dj = 0; dj < cfg.dphi_grid.size(); ++dj)
          for (std::size_t qi = 0; qi < cfg.q_grid.size(); ++qi)
            print_histogram(
                batch_from_csv(read_file(result.dir / batch_filename(qi, dj))),
                bin_width);
      }
      return 0;
    }

    if (rec->parsed()) {
      const ReconstructResult result =
          run_reconstruct(manifest_path, rec->count("--n-max") ? n_max : 0);
      std::printf("reconstructed %s (orders up to %d)\n", result.dir.string().c_str(),
                  result.raw.n_max);
      for (const auto& [order, kappa] : result.raw.condition)
        std::printf("  q-system condition, order %d: %.6g\n", order, kappa);
      if (result.raw.condition_warning)
        std::printf("  warning: ill-conditioned q system\n");
      if (result.physics_available) print_physics(result.physics);
      return 0;
    }

    if (orc->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      apply_overrides(cfg, orc);
      run_oracle(cfg, out_dir);
      std::printf("oracle tables -> %s\n",
                  (fs::path(out_dir) / "oracle.json").string().c_str());
      return 0;
    }

    if (cmp->parsed()) {
      const CompareReport report = run_compare(manifest_path, oracle_path);
      std::printf("%-22s %12s %10s %12s %8s\n", "quantity", "estimate", "se", "oracle",
                  "z");
      for (const auto& row : report.rows)
        std::printf("%-22s %12.6g %10.3g %12.6g %8.3g%s\n", row.quantity.c_str(),
                    row.estimate, row.se, row.oracle, row.z, row.pass ? "" : "  FAIL");
      std::printf("max |z| = %.3g (threshold %.3g): %s\n", report.max_abs_z,
                  kCompareZThreshold, report.pass ? "PASS" : "FAIL");
      return report.pass ? 0 : 1;
    }

    if (swp->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      apply_overrides(cfg, swp);
      const std::vector<double> etas = parse_eta_list(etas_str);
      const SweepResult result = run_sweep(cfg, etas, out_dir, override_overlap);
      for (std::size_t i = 0; i < etas.size(); ++i) {
        std::printf("eta %.4g -> %s\n", etas[i], result.runs[i].dir.string().c_str());
        if (result.runs[i].physics_available) print_physics(result.runs[i].physics);
      }
      return 0;
    }

    if (vt->parsed()) {
      const ExperimentConfig cfg = load_config(config_path);
      const LOTrain train = build_train(cfg.train);
      const TrainReport report = validate_train(train, tol);
      std::printf("pulse overlap matrix (%zu pulses):\n", train.pulses.size());
      for (Eigen::Index i = 0; i < report.gram.rows(); ++i) {
        std::printf(" ");
        for (Eigen::Index j = 0; j < report.gram.cols(); ++j)
          std::printf(" %12.6g", report.gram(i, j).real());
        std::printf("\n");
      }
      std::printf("max off-diagonal overlap %.10g (tol %.3g): %s\n", report.max_offdiag,
                  report.tol, report.pass ? "PASS" : "FAIL");
      return report.pass ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
