#pragma once

#include <atomic>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fluxpea/analysis.hpp"
#include "fluxpea/csvio.hpp"
#include "fluxpea/kitaev.hpp"

namespace fluxpea {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Experiment specification (config file data model)
// ---------------------------------------------------------------------------

struct SweepConfig {
  int flux_count = 32;     // F
  int repetitions = 8;     // M
  std::uint64_t seed = 1;

  void validate() const {
    if (flux_count < 1) throw std::invalid_argument("sweep: flux_count must be >= 1");
    if (repetitions < 1) throw std::invalid_argument("sweep: repetitions must be >= 1");
  }
};

struct PatternConfig {
  int flux_points = 512;   // rows of the exported pattern (grid decimation)
  int tau_count = 8;
  double tau_max = 0.0;    // 0 -> auto: 2x coherence time, or the full delay ladder
  bool use_engine = false; // Lindblad path instead of the closed form (N = 2 only)
};

struct RunVariant {
  std::string label;
  SensorConfig sensor;
  PeaConfig pea;
};

struct ExperimentSpec {
  SensorConfig sensor;
  PeaConfig pea;
  SweepConfig sweep;
  PatternConfig pattern;
  std::string output_dir = "out";
  std::vector<RunVariant> runs;
  Json resolved;  // canonical echo of the fully resolved config

  std::string canonical_json() const { return resolved.dump(); }
  std::string config_hash() const { return hex64(fnv1a64(canonical_json())); }
};

namespace detail {

inline void reject_unknown_keys(const Json& j, const char* where,
                                std::initializer_list<const char*> known) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known)
      if (key == k) ok = true;
    if (!ok)
      throw std::invalid_argument(std::string("config: unknown key '") + key + "' in " + where);
  }
}

inline DetuningModel parse_detuning(const Json& j) {
  const std::string model = j.value("model", "linear");
  if (model == "linear") {
    reject_unknown_keys(j, "sensor.detuning",
                        {"model", "slope_rad_per_s_per_phi0", "operating_flux_phi0",
                         "offset_rad_per_s"});
    LinearDetuning lin;
    lin.slope = j.value("slope_rad_per_s_per_phi0", 1.5707963267948966e8);
    lin.operating_flux = j.value("operating_flux_phi0", 0.3);
    lin.offset = j.value("offset_rad_per_s", 0.0);
    if (lin.slope == 0.0) throw std::invalid_argument("config: linear detuning slope must be nonzero");
    return lin;
  }
  if (model == "transmon") {
    reject_unknown_keys(j, "sensor.detuning",
                        {"model", "max_frequency_rad_per_s", "anharmonicity_rad_per_s",
                         "drive_frequency_rad_per_s"});
    TransmonDetuning tr;
    tr.max_frequency = j.at("max_frequency_rad_per_s").get<double>();
    tr.anharmonicity = j.value("anharmonicity_rad_per_s", 0.0);
    tr.drive_frequency = j.at("drive_frequency_rad_per_s").get<double>();
    return tr;
  }
  throw std::invalid_argument("config: detuning model must be 'linear' or 'transmon'");
}

inline Json dump_detuning(const DetuningModel& model) {
  Json j;
  if (const auto* lin = std::get_if<LinearDetuning>(&model)) {
    j["model"] = "linear";
    j["slope_rad_per_s_per_phi0"] = lin->slope;
    j["operating_flux_phi0"] = lin->operating_flux;
    j["offset_rad_per_s"] = lin->offset;
  } else {
    const auto& tr = std::get<TransmonDetuning>(model);
    j["model"] = "transmon";
    j["max_frequency_rad_per_s"] = tr.max_frequency;
    j["anharmonicity_rad_per_s"] = tr.anharmonicity;
    j["drive_frequency_rad_per_s"] = tr.drive_frequency;
  }
  return j;
}

inline DelayCapPolicy parse_cap_policy(const std::string& s) {
  if (s == "coherence") return DelayCapPolicy::CoherenceTime;
  if (s == "none") return DelayCapPolicy::None;
  if (s == "fixed") return DelayCapPolicy::Fixed;
  throw std::invalid_argument("config: delay_cap must be 'coherence', 'none', or 'fixed'");
}

inline const char* cap_policy_name(DelayCapPolicy p) {
  switch (p) {
    case DelayCapPolicy::CoherenceTime: return "coherence";
    case DelayCapPolicy::None: return "none";
    default: return "fixed";
  }
}

}  // namespace detail

inline SensorConfig parse_sensor(const Json& j) {
  detail::reject_unknown_keys(j, "sensor",
                              {"n_qubits", "gamma1_per_s", "gamma_phi_per_s", "alpha",
                               "tau_min_s", "detuning"});
  SensorConfig s;
  s.n_qubits = j.value("n_qubits", 1);
  s.gamma1 = j.value("gamma1_per_s", 2.0e5);
  s.gamma_phi = j.value("gamma_phi_per_s", 3.4e4);
  s.alpha = j.value("alpha", 1.0);
  s.tau_min = j.value("tau_min_s", 4.1e-8);
  if (j.contains("detuning")) s.detuning_model = detail::parse_detuning(j.at("detuning"));
  else s.detuning_model = detail::parse_detuning(Json::object());
  s.validate();
  return s;
}

inline PeaConfig parse_pea(const Json& j) {
  detail::reject_unknown_keys(j, "pea",
                              {"epsilon", "max_steps", "shot_cap", "delay_cap",
                               "delay_cap_s", "readout"});
  PeaConfig p;
  p.epsilon = j.value("epsilon", 1e-4);
  p.max_steps = j.value("max_steps", 10);
  p.shot_cap = j.value("shot_cap", 100000L);
  p.cap_policy = detail::parse_cap_policy(j.value("delay_cap", "coherence"));
  p.fixed_cap = j.value("delay_cap_s", 0.0);
  if (j.contains("readout")) {
    const Json& r = j.at("readout");
    detail::reject_unknown_keys(r, "pea.readout", {"mu0", "mu1", "sigma0", "sigma1"});
    p.readout.mu0 = r.value("mu0", 0.0);
    p.readout.mu1 = r.value("mu1", 1.0);
    p.readout.sigma0 = r.value("sigma0", 1.5);
    p.readout.sigma1 = r.value("sigma1", 1.5);
  }
  p.validate();
  return p;
}

inline Json dump_sensor(const SensorConfig& s) {
  Json j;
  j["n_qubits"] = s.n_qubits;
  j["gamma1_per_s"] = s.gamma1;
  j["gamma_phi_per_s"] = s.gamma_phi;
  j["alpha"] = s.alpha;
  j["tau_min_s"] = s.tau_min;
  j["detuning"] = detail::dump_detuning(s.detuning_model);
  return j;
}

inline Json dump_pea(const PeaConfig& p) {
  Json j;
  j["epsilon"] = p.epsilon;
  j["max_steps"] = p.max_steps;
  j["shot_cap"] = p.shot_cap;
  j["delay_cap"] = detail::cap_policy_name(p.cap_policy);
  j["delay_cap_s"] = p.fixed_cap;
  j["readout"] = {{"mu0", p.readout.mu0}, {"mu1", p.readout.mu1},
                  {"sigma0", p.readout.sigma0}, {"sigma1", p.readout.sigma1}};
  return j;
}

inline ExperimentSpec parse_spec(const Json& j) {
  detail::reject_unknown_keys(j, "top level",
                              {"sensor", "pea", "sweep", "pattern", "output_dir", "runs"});
  ExperimentSpec spec;
  spec.sensor = parse_sensor(j.value("sensor", Json::object()));
  spec.pea = parse_pea(j.value("pea", Json::object()));

  const Json sweep = j.value("sweep", Json::object());
  detail::reject_unknown_keys(sweep, "sweep", {"flux_count", "repetitions", "seed"});
  spec.sweep.flux_count = sweep.value("flux_count", 32);
  spec.sweep.repetitions = sweep.value("repetitions", 8);
  spec.sweep.seed = sweep.value("seed", std::uint64_t{1});
  spec.sweep.validate();

  const Json pat = j.value("pattern", Json::object());
  detail::reject_unknown_keys(pat, "pattern",
                              {"flux_points", "tau_count", "tau_max_s", "use_engine"});
  spec.pattern.flux_points = pat.value("flux_points", 512);
  spec.pattern.tau_count = pat.value("tau_count", 8);
  spec.pattern.tau_max = pat.value("tau_max_s", 0.0);
  spec.pattern.use_engine = pat.value("use_engine", false);

  spec.output_dir = j.value("output_dir", "out");

  if (j.contains("runs")) {
    for (const Json& rj : j.at("runs")) {
      detail::reject_unknown_keys(rj, "runs[]",
                                  {"label", "n_qubits", "alpha", "gamma1_per_s",
                                   "gamma_phi_per_s", "delay_cap"});
      RunVariant rv{rj.at("label").get<std::string>(), spec.sensor, spec.pea};
      if (rj.contains("n_qubits")) rv.sensor.n_qubits = rj.at("n_qubits").get<int>();
      if (rj.contains("alpha")) rv.sensor.alpha = rj.at("alpha").get<double>();
      if (rj.contains("gamma1_per_s")) rv.sensor.gamma1 = rj.at("gamma1_per_s").get<double>();
      if (rj.contains("gamma_phi_per_s"))
        rv.sensor.gamma_phi = rj.at("gamma_phi_per_s").get<double>();
      if (rj.contains("delay_cap"))
        rv.pea.cap_policy = detail::parse_cap_policy(rj.at("delay_cap").get<std::string>());
      rv.sensor.validate();
      spec.runs.push_back(std::move(rv));
    }
  } else {
    spec.runs.push_back(RunVariant{"run", spec.sensor, spec.pea});
  }

  Json resolved;
  resolved["sensor"] = dump_sensor(spec.sensor);
  resolved["pea"] = dump_pea(spec.pea);
  resolved["sweep"] = {{"flux_count", spec.sweep.flux_count},
                       {"repetitions", spec.sweep.repetitions},
                       {"seed", spec.sweep.seed}};
  resolved["pattern"] = {{"flux_points", spec.pattern.flux_points},
                         {"tau_count", spec.pattern.tau_count},
                         {"tau_max_s", spec.pattern.tau_max},
                         {"use_engine", spec.pattern.use_engine}};
  resolved["output_dir"] = spec.output_dir;
  resolved["runs"] = Json::array();
  for (const RunVariant& rv : spec.runs) {
    Json rj;
    rj["label"] = rv.label;
    rj["sensor"] = dump_sensor(rv.sensor);
    rj["pea"] = dump_pea(rv.pea);
    resolved["runs"].push_back(rj);
  }
  spec.resolved = std::move(resolved);
  return spec;
}

// ---------------------------------------------------------------------------
// Test-flux selection
// ---------------------------------------------------------------------------

// Conditioning score of a test flux: the worst-case proximity (as a fraction
// of the window width) of the flux to a half-interval split, over every
// sensor grid and every halving depth with windows of >= 16 points. Fluxes
// that drift close to a split at some depth force the posterior to resolve a
// near-tie there, so their per-step shot cost blows up at that depth; fluxes
// whose split distance stays a roughly constant fraction of the shrinking
// window keep the per-step cost flat across depths.
inline double split_margin(const std::vector<std::pair<double, int>>& positions) {
  double worst = 0.5;
  for (const auto& [x, points] : positions) {
    double y = x;
    // Depths with windows below 16 points resolve in a handful of shots no
    // matter where the split falls, so they do not enter the score.
    for (int window = points; window >= 16; window /= 2) {
      const double u = std::fabs(y - 0.5);
      worst = std::min(worst, u);
      y = y * 2.0 - std::floor(y * 2.0);
    }
  }
  return worst;
}

// Picks from the N = 1..3 common sub-lattice of the preset grid family
// sharing this sensor's detuning model and tau_min: the sub-lattice is split
// into `count` equal slices and the best-conditioned flux of each slice is
// taken, keeping the picks spread while avoiding split-degenerate values.
inline std::vector<double> preset_test_fluxes(const SensorConfig& base, int count) {
  std::vector<FluxGrid> grids;
  for (int n = 1; n <= 3; ++n) {
    SensorConfig s = base;
    s.n_qubits = n;
    grids.push_back(build_calibration_grid(s));
  }
  const std::vector<double> common = common_sublattice(grids);
  if (count > static_cast<int>(common.size()))
    throw std::invalid_argument("sweep: flux_count exceeds the common sub-lattice size");

  std::vector<double> scores(common.size());
  for (std::size_t m = 0; m < common.size(); ++m) {
    std::vector<std::pair<double, int>> positions;
    positions.reserve(grids.size());
    for (const FluxGrid& g : grids) {
      const double idx = std::round((common[m] - g.start) / g.step);
      positions.emplace_back(idx / static_cast<double>(g.count), g.count);
    }
    scores[m] = split_margin(positions);
  }

  std::vector<double> picks;
  picks.reserve(count);
  for (int t = 0; t < count; ++t) {
    const std::size_t lo = static_cast<std::size_t>(t) * common.size() / count;
    const std::size_t hi = static_cast<std::size_t>(t + 1) * common.size() / count;
    std::size_t best = lo;
    for (std::size_t m = lo + 1; m < hi; ++m)
      if (scores[m] > scores[best]) best = m;
    picks.push_back(common[best]);
  }
  return picks;
}

// ---------------------------------------------------------------------------
// Sweep runner
// ---------------------------------------------------------------------------

// Full (j, k) sweep. Each task owns its counter-based stream, so the result is
// identical for any worker count; `on_complete` is invoked under a mutex as
// tasks finish (checkpointing hook). `done` marks tasks to skip on resume.
inline ExperimentResult run_experiment(const SensorConfig& sensor, const PeaConfig& pea,
                                       const std::vector<double>& test_fluxes, int repetitions,
                                       std::uint64_t seed, const FluxGrid& grid, int workers = 1,
                                       const std::function<void(int, int, const std::vector<StepRecord>&)>&
                                           on_complete = {},
                                       const std::vector<std::vector<StepRecord>>* resumed = nullptr) {
  sensor.validate();
  pea.validate();
  const int F = static_cast<int>(test_fluxes.size());
  const int M = repetitions;
  const std::size_t n_tasks = static_cast<std::size_t>(F) * M;

  std::vector<std::vector<StepRecord>> slots(n_tasks);
  std::vector<char> done(n_tasks, 0);
  if (resumed) {
    for (std::size_t t = 0; t < n_tasks && t < resumed->size(); ++t) {
      if (!(*resumed)[t].empty()) {
        slots[t] = (*resumed)[t];
        done[t] = 1;
      }
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex collect_mutex;
  auto worker_fn = [&]() {
    while (true) {
      const std::size_t t = next.fetch_add(1);
      if (t >= n_tasks) return;
      if (done[t]) continue;
      const int j = static_cast<int>(t / M);
      const int k = static_cast<int>(t % M);
      RngStream rng(seed, static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(k));
      slots[t] = run_algorithm(test_fluxes[j], sensor, pea, grid, rng);
      if (on_complete) {
        std::lock_guard<std::mutex> lock(collect_mutex);
        on_complete(j, k, slots[t]);
      }
    }
  };

  if (workers <= 1) {
    worker_fn();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker_fn);
    for (auto& th : pool) th.join();
  }

  ExperimentResult result;
  result.F = F;
  result.M = M;
  result.L = pea.max_steps;
  result.true_fluxes = test_fluxes;
  result.sensor = sensor;
  result.pea = pea;
  result.seed = seed;
  result.records.reserve(n_tasks * pea.max_steps);
  for (std::size_t t = 0; t < n_tasks; ++t) {
    const int j = static_cast<int>(t / M);
    const int k = static_cast<int>(t % M);
    for (const StepRecord& sr : slots[t]) {
      RunRecord rr;
      rr.j = j;
      rr.flux_true = test_fluxes[j];
      rr.k = k;
      rr.l = sr.step;
      rr.tau = sr.tau;
      rr.shots = sr.shots;
      rr.half = sr.half;
      rr.phi_hat = sr.phi_hat;
      rr.decided = sr.decided;
      result.records.push_back(rr);
    }
  }
  result.validate();
  return result;
}

// ---------------------------------------------------------------------------
// Record persistence
// ---------------------------------------------------------------------------

inline const char* half_name(Half h) {
  switch (h) {
    case Half::Lower: return "lower";
    case Half::Upper: return "upper";
    default: return "none";
  }
}

inline Half half_from_name(const std::string& s) {
  if (s == "lower") return Half::Lower;
  if (s == "upper") return Half::Upper;
  if (s == "none") return Half::None;
  throw std::invalid_argument("records: bad half field '" + s + "'");
}

inline void write_record_row(std::ostream& os, const RunRecord& r) {
  os << r.j << "," << format_g(r.flux_true, 15) << "," << r.k << "," << r.l << ","
     << format_sci(r.tau) << "," << r.shots << "," << half_name(r.half) << ","
     << format_g(r.phi_hat, 15) << "," << (r.decided ? 1 : 0) << "\n";
}

inline void write_records_csv(std::ostream& os, const ExperimentResult& result,
                              const std::string& config_json) {
  write_file_header(os, config_json, result.seed);
  os << "j,flux_true,k,l,tau_l_s,n_l,half,phi_hat,decided_flag\n";
  for (const RunRecord& r : result.records) write_record_row(os, r);
}

struct RecordsFile {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<RunRecord> records;  // file order; not necessarily canonical
};

inline RecordsFile read_records_csv(std::istream& is) {
  RecordsFile out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# config_hash: ", 0) == 0) out.config_hash = line.substr(15);
      if (line.rfind("# seed: ", 0) == 0) out.seed = std::stoull(line.substr(8));
      continue;
    }
    if (line.rfind("j,", 0) == 0) continue;  // column header
    std::istringstream ss(line);
    std::string field;
    RunRecord r;
    std::getline(ss, field, ',');
    r.j = std::stoi(field);
    std::getline(ss, field, ',');
    r.flux_true = std::stod(field);
    std::getline(ss, field, ',');
    r.k = std::stoi(field);
    std::getline(ss, field, ',');
    r.l = std::stoi(field);
    std::getline(ss, field, ',');
    r.tau = std::stod(field);
    std::getline(ss, field, ',');
    r.shots = std::stol(field);
    std::getline(ss, field, ',');
    r.half = half_from_name(field);
    std::getline(ss, field, ',');
    r.phi_hat = std::stod(field);
    std::getline(ss, field, ',');
    r.decided = field == "1";
    out.records.push_back(r);
  }
  return out;
}

// Rebuild a dense result tensor from parsed rows (canonical or checkpoint
// order). Throws if the index set is ragged.
inline ExperimentResult assemble_result(const RecordsFile& file) {
  ExperimentResult r;
  int F = 0, M = 0, L = 0;
  for (const RunRecord& rec : file.records) {
    F = std::max(F, rec.j + 1);
    M = std::max(M, rec.k + 1);
    L = std::max(L, rec.l);
  }
  r.F = F;
  r.M = M;
  r.L = L;
  r.seed = file.seed;
  r.true_fluxes.assign(F, 0.0);
  r.records.resize(static_cast<std::size_t>(F) * M * L);
  std::vector<char> seen(r.records.size(), 0);
  for (const RunRecord& rec : file.records) {
    const std::size_t idx = (static_cast<std::size_t>(rec.j) * M + rec.k) * L + (rec.l - 1);
    r.records[idx] = rec;
    seen[idx] = 1;
    r.true_fluxes[rec.j] = rec.flux_true;
  }
  for (char s : seen)
    if (!s) throw std::invalid_argument("records: incomplete (j,k,l) index set");
  return r;
}

// ---------------------------------------------------------------------------
// Summary persistence
// ---------------------------------------------------------------------------

inline void write_summary_csv(std::ostream& os, const std::vector<StepSummary>& summary,
                              const std::string& config_json, std::uint64_t seed) {
  write_file_header(os, config_json, seed);
  os << "# delta_phi_sigma_bootstrap and delay_bar_s are diagnostic extras\n";
  os << "l,tau_bar_s,n_bar,delta_phi_over_phi0,slope_local,delta_phi_sigma_bootstrap,delay_bar_s\n";
  for (const StepSummary& s : summary) {
    os << s.l << "," << format_sci(s.tau_bar) << "," << format_g(s.n_bar, 12) << ","
       << format_g(s.delta_phi, 12) << "," << format_g(s.slope_local, 8) << ","
       << format_g(s.delta_phi_sigma, 8) << "," << format_sci(s.delay_bar) << "\n";
  }
}

}  // namespace fluxpea
