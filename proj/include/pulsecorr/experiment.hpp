#pragma once

#include <openssl/evp.h>

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pulsecorr/fock.hpp"
#include "pulsecorr/measurement.hpp"
#include "pulsecorr/moment_lab.hpp"
#include "pulsecorr/oracle.hpp"
#include "pulsecorr/pulse_modes.hpp"
#include "pulsecorr/rng.hpp"

// Experiment orchestration: config files, deterministic run artifacts, and
// the simulate / reconstruct / oracle / compare / sweep drivers behind the
// command-line tool.
//
// Artifact layout for a run directory:
//   config.json                     exact echo of the parsed config
//   batch_q<i>_d<j>.csv             raw outcomes, one file per setting
//   moments.{json,csv}              per-setting sample moments + SEs
//   correlations_raw.{json,csv}     q-inverted channels, uncorrected
//   correlations_corrected.{json,csv}
//   physics.{json,csv}              extracted quantities + flags
//   manifest.json                   hash inventory, rewritten after each stage
//
// Every artifact embeds the config hash; (config, seeds) determine all output
// bytes, so reruns are byte-identical.  No timestamps anywhere.

namespace pulsecorr {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Small utilities: formatting, hashing, atomic file I/O, worker pool.

inline std::string format_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_sig6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

// Write via a temporary in the same directory, then rename into place, so a
// crash never leaves a truncated artifact under the final name.
inline void atomic_write_file(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Run jobs 0..count-1 on a small thread pool.  Each job writes only its own
// result slot, so the output order is independent of scheduling.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& job,
                         unsigned threads = 0) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = unsigned(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) job(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Config schema.

struct ModeSpec {
  std::string kind = "vacuum";  // vacuum | fock | coherent | squeezed | thermal
  int n = 0;                    // fock
  Complex alpha{0.0, 0.0};      // coherent
  double r = 0.0;               // squeezed
  double theta = 0.0;           // squeezed
  double mean_photons = 0.0;    // thermal
};

struct StateSpec {
  std::string kind = "product";  // product | two_mode_squeezed
  ModeSpec modes[2];
  double r = 0.0;      // two_mode_squeezed
  double theta = 0.0;  // two_mode_squeezed
};

struct TrainSpec {
  double omega0 = 0.0;
  std::vector<double> centers;
  std::vector<double> widths;
  std::vector<double> amplitude_mags;
  std::vector<double> amplitude_phases;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  StateSpec state;
  TrainSpec train;
  int cutoff = kDefaultCutoff;
  double eta = 1.0;
  PhaseMode phase_mode = PhaseMode::averaged;
  double phi = 0.0;  // locked mode only
  std::vector<double> q_grid;
  std::vector<double> dphi_grid;
  std::uint64_t shots = 100000;
  int n_max = 4;
  std::uint64_t seed = 1;
  BootstrapOptions bootstrap;
  double train_tol = 1e-4;
};

inline FockState build_mode(const ModeSpec& spec, int cutoff) {
  if (spec.kind == "vacuum") return vacuum_state(cutoff);
  if (spec.kind == "fock") return fock_state(spec.n, cutoff);
  if (spec.kind == "coherent") return coherent_state(spec.alpha, cutoff);
  if (spec.kind == "squeezed") return squeezed_state(spec.r, spec.theta, cutoff);
  if (spec.kind == "thermal") return thermal_state(spec.mean_photons, cutoff);
  throw std::invalid_argument("unknown mode kind: " + spec.kind);
}

inline FockState build_state(const StateSpec& spec, int cutoff) {
  if (spec.kind == "product")
    return tensor(build_mode(spec.modes[0], cutoff), build_mode(spec.modes[1], cutoff));
  if (spec.kind == "two_mode_squeezed")
    return two_mode_squeezed_state(spec.r, spec.theta, cutoff);
  throw std::invalid_argument("unknown state kind: " + spec.kind);
}

inline LOTrain build_train(const TrainSpec& spec) {
  LOTrain train;
  const std::size_t n = spec.centers.size();
  if (spec.widths.size() != n || spec.amplitude_mags.size() != n ||
      spec.amplitude_phases.size() != n)
    throw std::invalid_argument("train arrays disagree in length");
  for (std::size_t k = 0; k < n; ++k) {
    train.pulses.push_back({spec.centers[k], spec.widths[k], spec.omega0,
                            EnvelopeShape::gaussian});
    train.amplitudes.push_back(std::polar(spec.amplitude_mags[k],
                                          spec.amplitude_phases[k]));
  }
  return train;
}

// --- JSON (ordered keys; all doubles round-trip exactly) -------------------

inline json mode_to_json(const ModeSpec& m) {
  json j;
  j["kind"] = m.kind;
  if (m.kind == "fock") j["n"] = m.n;
  if (m.kind == "coherent") j["alpha"] = {m.alpha.real(), m.alpha.imag()};
  if (m.kind == "squeezed") {
    j["r"] = m.r;
    j["theta"] = m.theta;
  }
  if (m.kind == "thermal") j["mean_photons"] = m.mean_photons;
  return j;
}

inline ModeSpec mode_from_json(const json& j) {
  ModeSpec m;
  m.kind = j.at("kind").get<std::string>();
  if (m.kind == "fock") m.n = j.at("n").get<int>();
  if (m.kind == "coherent") {
    const auto& a = j.at("alpha");
    m.alpha = Complex(a.at(0).get<double>(), a.at(1).get<double>());
  }
  if (m.kind == "squeezed") {
    m.r = j.at("r").get<double>();
    m.theta = j.at("theta").get<double>();
  }
  if (m.kind == "thermal") m.mean_photons = j.at("mean_photons").get<double>();
  return m;
}

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  json st;
  st["kind"] = c.state.kind;
  if (c.state.kind == "product") {
    st["modes"] = json::array({mode_to_json(c.state.modes[0]),
                               mode_to_json(c.state.modes[1])});
  } else {
    st["r"] = c.state.r;
    st["theta"] = c.state.theta;
  }
  j["state"] = st;
  json tr;
  tr["omega0"] = c.train.omega0;
  tr["centers"] = c.train.centers;
  tr["widths"] = c.train.widths;
  tr["amplitude_mags"] = c.train.amplitude_mags;
  tr["amplitude_phases"] = c.train.amplitude_phases;
  j["train"] = tr;
  j["cutoff"] = c.cutoff;
  j["eta"] = c.eta;
  j["phase_mode"] = (c.phase_mode == PhaseMode::averaged) ? "averaged" : "locked";
  j["phi"] = c.phi;
  j["q_grid"] = c.q_grid;
  j["dphi_grid"] = c.dphi_grid;
  j["shots"] = c.shots;
  j["n_max"] = c.n_max;
  j["seed"] = c.seed;
  json bs;
  bs["resamples"] = c.bootstrap.resamples;
  bs["seed"] = c.bootstrap.seed;
  bs["chunks"] = c.bootstrap.chunks;
  j["bootstrap"] = bs;
  j["train_tol"] = c.train_tol;
  return j;
}

// Grids accept either an explicit array or {"count": N[, "q_max": Q]}.
inline std::vector<double> parse_grid(const json& j, bool is_q) {
  if (j.is_array()) {
    std::vector<double> g = j.get<std::vector<double>>();
    if (g.empty()) throw std::invalid_argument("empty grid in config");
    return g;
  }
  const int count = j.at("count").get<int>();
  if (is_q) return chebyshev_q_grid(count, j.value("q_max", 2.0));
  return uniform_dphi_grid(count);
}

inline void validate_config(const ExperimentConfig& c);

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  c.schema_version = j.at("schema_version").get<int>();
  if (c.schema_version != kSchemaVersion)
    throw std::invalid_argument("unsupported schema_version " +
                                std::to_string(c.schema_version));
  const json& st = j.at("state");
  c.state.kind = st.at("kind").get<std::string>();
  if (c.state.kind == "product") {
    const json& modes = st.at("modes");
    if (modes.size() != 2) throw std::invalid_argument("product state needs 2 modes");
    c.state.modes[0] = mode_from_json(modes.at(0));
    c.state.modes[1] = mode_from_json(modes.at(1));
  } else if (c.state.kind == "two_mode_squeezed") {
    c.state.r = st.at("r").get<double>();
    c.state.theta = st.value("theta", 0.0);
  } else {
    throw std::invalid_argument("unknown state kind: " + c.state.kind);
  }
  const json& tr = j.at("train");
  c.train.omega0 = tr.at("omega0").get<double>();
  c.train.centers = tr.at("centers").get<std::vector<double>>();
  c.train.widths = tr.at("widths").get<std::vector<double>>();
  c.train.amplitude_mags = tr.at("amplitude_mags").get<std::vector<double>>();
  c.train.amplitude_phases = tr.at("amplitude_phases").get<std::vector<double>>();
  c.cutoff = j.value("cutoff", kDefaultCutoff);
  c.eta = j.at("eta").get<double>();
  const std::string pm = j.at("phase_mode").get<std::string>();
  if (pm == "averaged")
    c.phase_mode = PhaseMode::averaged;
  else if (pm == "locked")
    c.phase_mode = PhaseMode::locked;
  else
    throw std::invalid_argument("phase_mode must be 'averaged' or 'locked'");
  c.phi = j.value("phi", 0.0);
  c.q_grid = parse_grid(j.at("q_grid"), true);
  c.dphi_grid = parse_grid(j.at("dphi_grid"), false);
  c.shots = j.at("shots").get<std::uint64_t>();
  c.n_max = j.at("n_max").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("bootstrap")) {
    const json& bs = j.at("bootstrap");
    c.bootstrap.resamples = bs.value("resamples", 200);
    c.bootstrap.seed = bs.value("seed", std::uint64_t{0});
    c.bootstrap.chunks = bs.value("chunks", 2048);
  }
  c.train_tol = j.value("train_tol", 1e-4);
  validate_config(c);
  return c;
}

inline void validate_config(const ExperimentConfig& c) {
  if (c.q_grid.empty() || c.dphi_grid.empty())
    throw std::invalid_argument("grids must be non-empty");
  if (c.shots < 1) throw std::invalid_argument("shots must be >= 1");
  if (c.n_max < 1 || c.n_max > 6)
    throw std::invalid_argument("n_max must lie in [1, 6]");
  if (c.phase_mode == PhaseMode::averaged && c.n_max % 2 != 0)
    throw std::invalid_argument("phase-averaged runs need even n_max");
  if (!(c.eta > 0.0 && c.eta <= 1.0))
    throw std::invalid_argument("eta must lie in (0, 1]");
  if (c.cutoff < 2) throw std::invalid_argument("cutoff must be >= 2");
  build_state(c.state, c.cutoff);   // throws on bad state parameters
  build_train(c.train);             // throws on inconsistent train arrays
}

inline std::string dump_config(const ExperimentConfig& c) {
  return config_to_json(c).dump(2) + "\n";
}

inline ExperimentConfig parse_config(const std::string& text) {
  return config_from_json(json::parse(text));
}

inline ExperimentConfig load_config(const fs::path& path) {
  return parse_config(read_file(path));
}

inline std::string config_hash(const ExperimentConfig& c) {
  return sha256_hex(dump_config(c));
}

// ---------------------------------------------------------------------------
// Artifact serialization.

// Batch CSV: '#' header lines carrying the full setting, then one outcome per
// line at full precision.
inline std::string batch_to_csv(const SampleBatch& batch, const std::string& cfg_hash) {
  const MeasurementSetting& s = batch.setting;
  std::string out;
  out.reserve(batch.outcomes.size() * 20 + 512);
  out += "# pulsecorr batch v1\n";
  out += "# config_hash " + cfg_hash + "\n";
  out += "# q " + format_full(s.q) + "\n";
  out += "# dphi " + format_full(s.dphi) + "\n";
  out += "# eta " + format_full(s.eta) + "\n";
  out += std::string("# phase_mode ") +
         (s.phase_mode == PhaseMode::averaged ? "averaged" : "locked") + "\n";
  out += "# phi " + format_full(s.phi) + "\n";
  out += "# shots " + std::to_string(s.shots) + "\n";
  out += "# seed " + std::to_string(s.seed) + "\n";
  for (double x : batch.outcomes) {
    out += format_full(x);
    out += '\n';
  }
  return out;
}

inline SampleBatch batch_from_csv(const std::string& text) {
  SampleBatch batch;
  MeasurementSetting& s = batch.setting;
  std::istringstream in(text);
  std::string line;
  bool seen_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string key;
      ls >> key;
      if (key == "pulsecorr") {
        seen_header = true;
      } else if (key == "q") {
        ls >> s.q;
      } else if (key == "dphi") {
        ls >> s.dphi;
      } else if (key == "eta") {
        ls >> s.eta;
      } else if (key == "phase_mode") {
        std::string m;
        ls >> m;
        s.phase_mode = (m == "locked") ? PhaseMode::locked : PhaseMode::averaged;
      } else if (key == "phi") {
        ls >> s.phi;
      } else if (key == "shots") {
        ls >> s.shots;
      } else if (key == "seed") {
        ls >> s.seed;
      }
      continue;
    }
    batch.outcomes.push_back(std::stod(line));
  }
  if (!seen_header) throw std::invalid_argument("not a batch file (missing header)");
  if (batch.outcomes.size() != s.shots)
    throw std::invalid_argument("batch outcome count disagrees with header");
  return batch;
}

inline json moments_to_json(const MomentTable& t, const std::string& cfg_hash) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["config_hash"] = cfg_hash;
  j["n_max"] = t.n_max;
  j["phase_mode"] = (t.phase_mode == PhaseMode::averaged) ? "averaged" : "locked";
  j["eta"] = t.eta;
  json rows = json::array();
  for (const auto& r : t.rows) {
    json row;
    row["q"] = r.q;
    row["dphi"] = r.dphi;
    row["shots"] = r.shots;
    json ms = json::array();
    for (std::size_t n = 0; n < r.moments.size(); ++n) {
      json m;
      m["n"] = n + 1;
      m["value"] = r.moments[n].value;
      m["se"] = r.moments[n].se;
      ms.push_back(m);
    }
    row["moments"] = ms;
    rows.push_back(row);
  }
  j["rows"] = rows;
  return j;
}

inline MomentTable moments_from_json(const json& j) {
  MomentTable t;
  t.n_max = j.at("n_max").get<int>();
  t.phase_mode = (j.at("phase_mode").get<std::string>() == "locked")
                     ? PhaseMode::locked
                     : PhaseMode::averaged;
  t.eta = j.at("eta").get<double>();
  for (const auto& row : j.at("rows")) {
    MomentRow r;
    r.q = row.at("q").get<double>();
    r.dphi = row.at("dphi").get<double>();
    r.shots = row.at("shots").get<std::uint64_t>();
    for (const auto& m : row.at("moments"))
      r.moments.push_back({m.at("value").get<double>(), m.at("se").get<double>()});
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline std::string moments_to_csv(const MomentTable& t) {
  std::string out = "q,dphi,shots,n,value,se\n";
  for (const auto& r : t.rows)
    for (std::size_t n = 0; n < r.moments.size(); ++n) {
      out += format_sig6(r.q) + "," + format_sig6(r.dphi) + "," +
             std::to_string(r.shots) + "," + std::to_string(n + 1) + "," +
             format_sig6(r.moments[n].value) + "," + format_sig6(r.moments[n].se) + "\n";
    }
  return out;
}

inline json correlations_to_json(const CorrelationSet& set, const std::string& cfg_hash) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["config_hash"] = cfg_hash;
  j["n_max"] = set.n_max;
  j["phase_averaged"] = set.phase_averaged;
  j["eta"] = set.eta;
  j["corrected"] = set.corrected;
  j["q_grid"] = set.q_grid;
  json cond;
  for (const auto& [n, kappa] : set.condition) cond[std::to_string(n)] = kappa;
  j["condition"] = cond;
  j["condition_warning"] = set.condition_warning;
  json slices = json::array();
  for (const auto& s : set.slices) {
    json sl;
    sl["dphi"] = s.dphi;
    json chans = json::array();
    for (const auto& [n, entries] : s.channels)
      for (int k = 0; k <= n; ++k) {
        json e;
        e["n"] = n;
        e["k"] = k;
        e["value"] = entries[std::size_t(k)].value;
        e["se"] = entries[std::size_t(k)].se;
        chans.push_back(e);
      }
    sl["channels"] = chans;
    slices.push_back(sl);
  }
  j["slices"] = slices;
  return j;
}

inline std::string correlations_to_csv(const CorrelationSet& set) {
  std::string out = "dphi,n,k,value,se\n";
  for (const auto& s : set.slices)
    for (const auto& [n, entries] : s.channels)
      for (int k = 0; k <= n; ++k)
        out += format_sig6(s.dphi) + "," + std::to_string(n) + "," + std::to_string(k) +
               "," + format_sig6(entries[std::size_t(k)].value) + "," +
               format_sig6(entries[std::size_t(k)].se) + "\n";
  return out;
}

inline json physics_to_json(const PhysicalQuantities& p, const std::string& cfg_hash) {
  const auto real_q = [](const ValueWithError& v) {
    json j;
    j["value"] = v.value;
    j["se"] = v.se;
    return j;
  };
  const auto complex_q = [](const ComplexWithError& v) {
    json j;
    j["re"] = v.value.real();
    j["im"] = v.value.imag();
    j["se_re"] = v.se_re;
    j["se_im"] = v.se_im;
    return j;
  };
  json j;
  j["schema_version"] = kSchemaVersion;
  j["config_hash"] = cfg_hash;
  j["nbar1"] = real_q(p.nbar1);
  j["nbar2"] = real_q(p.nbar2);
  j["coherence"] = complex_q(p.coherence);
  j["fourth_order"] = p.fourth_order;
  if (p.fourth_order) {
    j["third1"] = complex_q(p.third1);
    j["third2"] = complex_q(p.third2);
    j["pair"] = complex_q(p.pair);
    j["photon_correlation"] = real_q(p.photon_correlation);
  }
  j["max_residual_ratio"] = p.max_residual_ratio;
  j["flags"] = p.flags;
  return j;
}

inline PhysicalQuantities physics_from_json(const json& j) {
  PhysicalQuantities p;
  const auto real_q = [&](const char* key) {
    return ValueWithError{j.at(key).at("value").get<double>(),
                          j.at(key).at("se").get<double>()};
  };
  const auto complex_q = [&](const char* key) {
    const json& q = j.at(key);
    return ComplexWithError{Complex(q.at("re").get<double>(), q.at("im").get<double>()),
                            q.at("se_re").get<double>(), q.at("se_im").get<double>()};
  };
  p.nbar1 = real_q("nbar1");
  p.nbar2 = real_q("nbar2");
  p.coherence = complex_q("coherence");
  p.fourth_order = j.at("fourth_order").get<bool>();
  if (p.fourth_order) {
    p.third1 = complex_q("third1");
    p.third2 = complex_q("third2");
    p.pair = complex_q("pair");
    p.photon_correlation = real_q("photon_correlation");
  }
  p.max_residual_ratio = j.value("max_residual_ratio", 0.0);
  p.flags = j.value("flags", std::vector<std::string>{});
  return p;
}

inline std::string physics_to_csv(const PhysicalQuantities& p) {
  std::string out = "quantity,value,se\n";
  const auto row = [&](const std::string& name, double v, double se) {
    out += name + "," + format_sig6(v) + "," + format_sig6(se) + "\n";
  };
  row("nbar1", p.nbar1.value, p.nbar1.se);
  row("nbar2", p.nbar2.value, p.nbar2.se);
  row("coherence_re", p.coherence.value.real(), p.coherence.se_re);
  row("coherence_im", p.coherence.value.imag(), p.coherence.se_im);
  if (p.fourth_order) {
    row("third1_re", p.third1.value.real(), p.third1.se_re);
    row("third1_im", p.third1.value.imag(), p.third1.se_im);
    row("third2_re", p.third2.value.real(), p.third2.se_re);
    row("third2_im", p.third2.value.imag(), p.third2.se_im);
    row("pair_re", p.pair.value.real(), p.pair.se_re);
    row("pair_im", p.pair.value.imag(), p.pair.se_im);
    row("photon_correlation", p.photon_correlation.value, p.photon_correlation.se);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest: inventory of run artifacts with content hashes.  Rewritten after
// each stage (simulate, then reconstruct) with the new files appended.

struct Manifest {
  std::string config_hash;
  std::vector<std::pair<std::string, std::string>> files;  // (relative path, sha256)

  void put(const std::string& path, const std::string& hash) {
    for (auto& [p, h] : files)
      if (p == path) {
        h = hash;
        return;
      }
    files.emplace_back(path, hash);
  }
};

inline json manifest_to_json(const Manifest& m) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["config_hash"] = m.config_hash;
  json files = json::array();
  for (const auto& [path, hash] : m.files) {
    json f;
    f["path"] = path;
    f["sha256"] = hash;
    files.push_back(f);
  }
  j["files"] = files;
  return j;
}

inline Manifest manifest_from_json(const json& j) {
  Manifest m;
  m.config_hash = j.at("config_hash").get<std::string>();
  for (const auto& f : j.at("files"))
    m.files.emplace_back(f.at("path").get<std::string>(),
                         f.at("sha256").get<std::string>());
  return m;
}

inline Manifest load_manifest(const fs::path& path) {
  return manifest_from_json(json::parse(read_file(path)));
}

// Verify that every file the manifest lists exists and hashes match.
// Returns the directory containing the manifest.
inline fs::path verify_manifest(const fs::path& manifest_path, const Manifest& m) {
  const fs::path dir = manifest_path.parent_path();
  for (const auto& [rel, expected] : m.files) {
    const fs::path p = dir / rel;
    if (!fs::exists(p))
      throw std::runtime_error("manifest references missing file: " + rel);
    const std::string actual = sha256_hex(read_file(p));
    if (actual != expected)
      throw std::runtime_error("hash mismatch for " + rel + ": manifest " + expected +
                               ", file " + actual);
  }
  return dir;
}

// ---------------------------------------------------------------------------
// Stage drivers.

struct SimulateResult {
  fs::path dir;
  std::string cfg_hash;
  MomentTable moments;
};

// Derived per-setting seed: stable under grid reordering, distinct across
// settings, and decoupled from the bootstrap streams.
inline std::uint64_t setting_seed(std::uint64_t root, double q, double dphi) {
  return rng::derive_seed(root, std::bit_cast<std::uint64_t>(q),
                          std::bit_cast<std::uint64_t>(dphi), 0x5e77u);
}

inline std::string batch_filename(std::size_t qi, std::size_t dj) {
  return "batch_q" + std::to_string(qi) + "_d" + std::to_string(dj) + ".csv";
}

// Simulate every (q, dphi) setting, write one batch file per setting plus the
// moment table, and finish with the manifest.  Batches are sampled and
// estimated one at a time so peak memory stays near a single batch.
inline SimulateResult run_simulate(const ExperimentConfig& cfg, const fs::path& out_dir,
                                   bool override_overlap_check = false) {
  validate_config(cfg);
  const LOTrain train = build_train(cfg.train);
  const TrainReport report = validate_train(train, cfg.train_tol);
  if (!report.pass && !override_overlap_check)
    throw std::runtime_error(
        "pulse train failed the mode-independence check (max off-diagonal overlap " +
        format_full(report.max_offdiag) + " > tol " + format_full(report.tol) +
        "); pass --override-overlap-check to proceed anyway");

  fs::create_directories(out_dir);
  const std::string cfg_text = dump_config(cfg);
  const std::string cfg_hash = sha256_hex(cfg_text);
  Manifest manifest;
  manifest.config_hash = cfg_hash;
  atomic_write_file(out_dir / "config.json", cfg_text);
  manifest.put("config.json", cfg_hash);

  const FockState state = build_state(cfg.state, cfg.cutoff);
  const std::size_t nq = cfg.q_grid.size(), nd = cfg.dphi_grid.size();
  const std::size_t n_settings = nq * nd;
  std::vector<MomentTable> tables(n_settings);
  std::vector<std::string> batch_hashes(n_settings);

  parallel_for(n_settings, [&](std::size_t i) {
    const std::size_t qi = i % nq, dj = i / nq;
    MeasurementSetting setting;
    setting.q = cfg.q_grid[qi];
    setting.dphi = cfg.dphi_grid[dj];
    setting.eta = cfg.eta;
    setting.phase_mode = cfg.phase_mode;
    setting.phi = cfg.phi;
    setting.shots = cfg.shots;
    setting.seed = setting_seed(cfg.seed, setting.q, setting.dphi);
    const SampleBatch batch = sample(state, setting);
    const std::string csv = batch_to_csv(batch, cfg_hash);
    atomic_write_file(out_dir / batch_filename(qi, dj), csv);
    batch_hashes[i] = sha256_hex(csv);
    tables[i] = estimate_moments({batch}, cfg.n_max, cfg.bootstrap);
  });

  for (std::size_t dj = 0; dj < nd; ++dj)
    for (std::size_t qi = 0; qi < nq; ++qi)
      manifest.put(batch_filename(qi, dj), batch_hashes[dj * nq + qi]);

  SimulateResult result;
  result.dir = out_dir;
  result.cfg_hash = cfg_hash;
  result.moments = merge_tables(tables);

  const std::string mj = moments_to_json(result.moments, cfg_hash).dump(2) + "\n";
  const std::string mc = moments_to_csv(result.moments);
  atomic_write_file(out_dir / "moments.json", mj);
  atomic_write_file(out_dir / "moments.csv", mc);
  manifest.put("moments.json", sha256_hex(mj));
  manifest.put("moments.csv", sha256_hex(mc));
  atomic_write_file(out_dir / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
  return result;
}

struct ReconstructResult {
  fs::path dir;
  std::string cfg_hash;
  MomentTable moments;
  CorrelationSet raw;
  CorrelationSet corrected;
  PhysicalQuantities physics;
  bool physics_available = false;
};

// Rebuild moments from the hash-verified batch files, solve the q system,
// undo the efficiency map, and (phase-averaged runs with enough dphi points)
// extract the physical quantities.  Emits corrected and uncorrected sets.
inline ReconstructResult run_reconstruct(const fs::path& manifest_path,
                                         int n_max_override = 0) {
  Manifest manifest = load_manifest(manifest_path);
  const fs::path dir = verify_manifest(manifest_path, manifest);
  const ExperimentConfig cfg = load_config(dir / "config.json");
  const std::string cfg_hash = config_hash(cfg);
  if (cfg_hash != manifest.config_hash)
    throw std::runtime_error("config hash mismatch between config.json and manifest");
  const int n_max = n_max_override > 0 ? n_max_override : cfg.n_max;
  if (n_max > cfg.n_max)
    throw std::invalid_argument("requested n_max exceeds the simulated n_max");
  if (int(cfg.q_grid.size()) < n_max + 1)
    throw std::invalid_argument("incomplete grid: n_max " + std::to_string(n_max) +
                                " needs at least " + std::to_string(n_max + 1) +
                                " q values, config has " +
                                std::to_string(cfg.q_grid.size()));

  const std::size_t nq = cfg.q_grid.size(), nd = cfg.dphi_grid.size();
  std::vector<MomentTable> tables(nq * nd);
  parallel_for(nq * nd, [&](std::size_t i) {
    const std::size_t qi = i % nq, dj = i / nq;
    const SampleBatch batch =
        batch_from_csv(read_file(dir / batch_filename(qi, dj)));
    tables[i] = estimate_moments({batch}, cfg.n_max, cfg.bootstrap);
  });

  ReconstructResult result;
  result.dir = dir;
  result.cfg_hash = cfg_hash;
  result.moments = merge_tables(tables);
  result.raw = invert_q_system(result.moments, n_max);
  result.corrected = decontaminate(result.raw, cfg.eta);

  const auto emit = [&](const std::string& stem, const std::string& text) {
    atomic_write_file(dir / stem, text);
    manifest.put(stem, sha256_hex(text));
  };
  emit("correlations_raw.json", correlations_to_json(result.raw, cfg_hash).dump(2) + "\n");
  emit("correlations_raw.csv", correlations_to_csv(result.raw));
  emit("correlations_corrected.json",
       correlations_to_json(result.corrected, cfg_hash).dump(2) + "\n");
  emit("correlations_corrected.csv", correlations_to_csv(result.corrected));

  if (cfg.phase_mode == PhaseMode::averaged && cfg.dphi_grid.size() >= 5 && n_max >= 2) {
    result.physics = extract_physics(result.corrected);
    result.physics_available = true;
    emit("physics.json", physics_to_json(result.physics, cfg_hash).dump(2) + "\n");
    emit("physics.csv", physics_to_csv(result.physics));
  }
  atomic_write_file(dir / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
  return result;
}

// Exact reference for a config: correlation tables (ideal and, when eta < 1,
// contaminated) over the config's dphi grid, plus the exact physical
// quantities, all computed by operator algebra in the truncated basis.
inline json oracle_dump_to_json(const ExperimentConfig& cfg) {
  const std::string cfg_hash = config_hash(cfg);
  const FockState state = build_state(cfg.state, cfg.cutoff);
  const bool averaged = cfg.phase_mode == PhaseMode::averaged;
  const ExactPhysics phys = exact_physics(state);

  json j;
  j["schema_version"] = kSchemaVersion;
  j["config_hash"] = cfg_hash;
  json pj;
  const auto real_q = [](double v) {
    json e;
    e["value"] = v;
    e["se"] = 0.0;
    return e;
  };
  const auto complex_q = [](Complex v) {
    json e;
    e["re"] = v.real();
    e["im"] = v.imag();
    e["se_re"] = 0.0;
    e["se_im"] = 0.0;
    return e;
  };
  pj["nbar1"] = real_q(phys.nbar1);
  pj["nbar2"] = real_q(phys.nbar2);
  pj["coherence"] = complex_q(phys.coherence);
  pj["third1"] = complex_q(phys.third1);
  pj["third2"] = complex_q(phys.third2);
  pj["pair"] = complex_q(phys.pair);
  pj["photon_correlation"] = real_q(phys.photon_correlation);
  j["physics"] = pj;

  json tables = json::array();
  for (double dphi : cfg.dphi_grid) {
    const CorrelationTable ideal =
        ideal_correlations(state, cfg.n_max, dphi, averaged, cfg.phi);
    json tj;
    tj["dphi"] = dphi;
    json ideal_rows = json::array();
    for (int n = 1; n <= cfg.n_max; ++n)
      for (int k = 0; k <= n; ++k) {
        json e;
        e["n"] = n;
        e["k"] = k;
        e["value"] = ideal.at(n, k);
        ideal_rows.push_back(e);
      }
    tj["ideal"] = ideal_rows;
    if (cfg.eta < 1.0) {
      const CorrelationTable dirty = contaminate(ideal, cfg.eta);
      json dirty_rows = json::array();
      for (int n = 1; n <= cfg.n_max; ++n)
        for (int k = 0; k <= n; ++k) {
          json e;
          e["n"] = n;
          e["k"] = k;
          e["value"] = dirty.at(n, k);
          dirty_rows.push_back(e);
        }
      tj["contaminated"] = dirty_rows;
    }
    tables.push_back(tj);
  }
  j["correlations"] = tables;
  return j;
}

inline std::string oracle_dump_to_csv(const json& dump) {
  std::string out = "quantity,value\n";
  const json& p = dump.at("physics");
  const auto real_row = [&](const char* name) {
    out += std::string(name) + "," + format_sig6(p.at(name).at("value").get<double>()) +
           "\n";
  };
  const auto complex_rows = [&](const char* name) {
    out += std::string(name) + "_re," +
           format_sig6(p.at(name).at("re").get<double>()) + "\n";
    out += std::string(name) + "_im," +
           format_sig6(p.at(name).at("im").get<double>()) + "\n";
  };
  real_row("nbar1");
  real_row("nbar2");
  complex_rows("coherence");
  complex_rows("third1");
  complex_rows("third2");
  complex_rows("pair");
  real_row("photon_correlation");
  return out;
}

inline void run_oracle(const ExperimentConfig& cfg, const fs::path& out_dir) {
  validate_config(cfg);
  fs::create_directories(out_dir);
  const json dump = oracle_dump_to_json(cfg);
  atomic_write_file(out_dir / "oracle.json", dump.dump(2) + "\n");
  atomic_write_file(out_dir / "oracle.csv", oracle_dump_to_csv(dump));
}

// --- compare ---------------------------------------------------------------

struct CompareRow {
  std::string quantity;
  double estimate = 0.0;
  double se = 0.0;
  double oracle = 0.0;
  double z = 0.0;
  bool pass = true;
};

struct CompareReport {
  std::string cfg_hash;
  std::vector<CompareRow> rows;
  double max_abs_z = 0.0;
  bool pass = true;
};

inline constexpr double kCompareZThreshold = 5.0;

// z-score of each extracted quantity against the exact reference.  A zero SE
// is legitimate only when the difference is itself zero (oracle vs oracle).
inline CompareReport compare_physics(const PhysicalQuantities& est, const json& oracle,
                                     const std::string& cfg_hash) {
  CompareReport report;
  report.cfg_hash = cfg_hash;
  const json& p = oracle.at("physics");
  const auto push = [&](const std::string& name, double value, double se, double ref) {
    CompareRow row;
    row.quantity = name;
    row.estimate = value;
    row.se = se;
    row.oracle = ref;
    const double diff = value - ref;
    if (se > 0.0)
      row.z = diff / se;
    else
      row.z = (diff == 0.0) ? 0.0 : std::numeric_limits<double>::infinity();
    row.pass = std::abs(row.z) <= kCompareZThreshold;
    report.max_abs_z = std::max(report.max_abs_z, std::abs(row.z));
    report.pass = report.pass && row.pass;
    report.rows.push_back(row);
  };
  push("nbar1", est.nbar1.value, est.nbar1.se, p.at("nbar1").at("value").get<double>());
  push("nbar2", est.nbar2.value, est.nbar2.se, p.at("nbar2").at("value").get<double>());
  push("coherence_re", est.coherence.value.real(), est.coherence.se_re,
       p.at("coherence").at("re").get<double>());
  push("coherence_im", est.coherence.value.imag(), est.coherence.se_im,
       p.at("coherence").at("im").get<double>());
  if (est.fourth_order) {
    push("third1_re", est.third1.value.real(), est.third1.se_re,
         p.at("third1").at("re").get<double>());
    push("third1_im", est.third1.value.imag(), est.third1.se_im,
         p.at("third1").at("im").get<double>());
    push("third2_re", est.third2.value.real(), est.third2.se_re,
         p.at("third2").at("re").get<double>());
    push("third2_im", est.third2.value.imag(), est.third2.se_im,
         p.at("third2").at("im").get<double>());
    push("pair_re", est.pair.value.real(), est.pair.se_re,
         p.at("pair").at("re").get<double>());
    push("pair_im", est.pair.value.imag(), est.pair.se_im,
         p.at("pair").at("im").get<double>());
    push("photon_correlation", est.photon_correlation.value, est.photon_correlation.se,
         p.at("photon_correlation").at("value").get<double>());
  }
  return report;
}

inline json report_to_json(const CompareReport& r) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["config_hash"] = r.cfg_hash;
  j["pass"] = r.pass;
  j["max_abs_z"] = r.max_abs_z;
  j["z_threshold"] = kCompareZThreshold;
  json rows = json::array();
  for (const auto& row : r.rows) {
    json e;
    e["quantity"] = row.quantity;
    e["estimate"] = row.estimate;
    e["se"] = row.se;
    e["oracle"] = row.oracle;
    e["z"] = row.z;
    e["pass"] = row.pass;
    rows.push_back(e);
  }
  j["rows"] = rows;
  return j;
}

inline std::string report_to_csv(const CompareReport& r) {
  std::string out = "quantity,estimate,se,oracle,z,pass\n";
  for (const auto& row : r.rows)
    out += row.quantity + "," + format_sig6(row.estimate) + "," + format_sig6(row.se) +
           "," + format_sig6(row.oracle) + "," + format_sig6(row.z) + "," +
           (row.pass ? "1" : "0") + "\n";
  return out;
}

// Verify the run's manifest, load its extracted physics, and compare against
// an oracle dump for the same config hash.  Writes report.{json,csv} next to
// the manifest.
inline CompareReport run_compare(const fs::path& manifest_path,
                                 const fs::path& oracle_path) {
  const Manifest manifest = load_manifest(manifest_path);
  const fs::path dir = verify_manifest(manifest_path, manifest);
  const json oracle = json::parse(read_file(oracle_path));
  const std::string oracle_hash = oracle.at("config_hash").get<std::string>();
  if (oracle_hash != manifest.config_hash)
    throw std::runtime_error("config hash mismatch: run " + manifest.config_hash +
                             " vs oracle " + oracle_hash);
  const fs::path physics_path = dir / "physics.json";
  if (!fs::exists(physics_path))
    throw std::runtime_error("physics.json not found; run the reconstruct stage first");
  const PhysicalQuantities est =
      physics_from_json(json::parse(read_file(physics_path)));
  const CompareReport report = compare_physics(est, oracle, manifest.config_hash);
  atomic_write_file(dir / "report.json", report_to_json(report).dump(2) + "\n");
  atomic_write_file(dir / "report.csv", report_to_csv(report));
  return report;
}

// Compare an oracle dump against itself: every z must be exactly zero.
inline CompareReport self_compare(const json& oracle) {
  PhysicalQuantities est;
  const json& p = oracle.at("physics");
  est.nbar1 = {p.at("nbar1").at("value").get<double>(), 0.0};
  est.nbar2 = {p.at("nbar2").at("value").get<double>(), 0.0};
  est.coherence = {Complex(p.at("coherence").at("re").get<double>(),
                           p.at("coherence").at("im").get<double>()),
                   0.0, 0.0};
  est.third1 = {Complex(p.at("third1").at("re").get<double>(),
                        p.at("third1").at("im").get<double>()),
                0.0, 0.0};
  est.third2 = {Complex(p.at("third2").at("re").get<double>(),
                        p.at("third2").at("im").get<double>()),
                0.0, 0.0};
  est.pair = {Complex(p.at("pair").at("re").get<double>(),
                      p.at("pair").at("im").get<double>()),
              0.0, 0.0};
  est.photon_correlation = {p.at("photon_correlation").at("value").get<double>(), 0.0};
  est.fourth_order = true;
  return compare_physics(est, oracle, oracle.at("config_hash").get<std::string>());
}

// --- sweep -------------------------------------------------------------------

struct SweepResult {
  std::vector<double> etas;
  std::vector<ReconstructResult> runs;
};

// Repeat the full simulate + reconstruct pipeline per efficiency value, each
// in its own subdirectory, and write a summary across etas.
inline SweepResult run_sweep(const ExperimentConfig& base, const std::vector<double>& etas,
                             const fs::path& out_dir,
                             bool override_overlap_check = false) {
  if (etas.empty()) throw std::invalid_argument("sweep needs at least one eta");
  SweepResult result;
  result.etas = etas;
  json summary;
  summary["schema_version"] = kSchemaVersion;
  json runs = json::array();
  std::string csv = "eta,quantity,value,se\n";
  for (std::size_t i = 0; i < etas.size(); ++i) {
    ExperimentConfig cfg = base;
    cfg.eta = etas[i];
    char sub[32];
    std::snprintf(sub, sizeof(sub), "eta_%02zu", i);
    const fs::path dir = out_dir / sub;
    run_simulate(cfg, dir, override_overlap_check);
    ReconstructResult rec = run_reconstruct(dir / "manifest.json");
    json entry;
    entry["eta"] = etas[i];
    entry["dir"] = std::string(sub);
    entry["config_hash"] = rec.cfg_hash;
    if (rec.physics_available) {
      entry["physics"] = physics_to_json(rec.physics, rec.cfg_hash);
      const PhysicalQuantities& p = rec.physics;
      const auto row = [&](const std::string& name, double v, double se) {
        csv += format_sig6(etas[i]) + "," + name + "," + format_sig6(v) + "," +
               format_sig6(se) + "\n";
      };
      row("nbar1", p.nbar1.value, p.nbar1.se);
      row("nbar2", p.nbar2.value, p.nbar2.se);
      row("coherence_re", p.coherence.value.real(), p.coherence.se_re);
      row("coherence_im", p.coherence.value.imag(), p.coherence.se_im);
      if (p.fourth_order)
        row("photon_correlation", p.photon_correlation.value, p.photon_correlation.se);
    }
    runs.push_back(entry);
    result.runs.push_back(std::move(rec));
  }
  summary["runs"] = runs;
  atomic_write_file(out_dir / "sweep_summary.json", summary.dump(2) + "\n");
  atomic_write_file(out_dir / "sweep_summary.csv", csv);
  return result;
}

}  // namespace pulsecorr
