// fluxpea: flux-sensing simulation driver.
// Subcommands: pattern | verify | sense | analyze.
// Exit codes: 0 ok, 1 validation, 2 runtime, 3 verification failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <tuple>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "fluxpea/analysis.hpp"
#include "fluxpea/csvio.hpp"
#include "fluxpea/engine.hpp"
#include "fluxpea/experiment.hpp"
#include "fluxpea/fit.hpp"
#include "fluxpea/kitaev.hpp"
#include "fluxpea/model.hpp"
#include "fluxpea/version.hpp"

namespace fs = std::filesystem;
using namespace fluxpea;

#ifndef FLUXPEA_PRESET_DIR
#define FLUXPEA_PRESET_DIR "presets"
#endif

namespace {

struct CliOptions {
  std::string config_path;
  std::string preset;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;  // 0 -> hardware concurrency
  bool corrupt_entangler = false;
};

Json load_config_json(const CliOptions& opt) {
  std::string path;
  if (!opt.config_path.empty() && !opt.preset.empty())
    throw std::invalid_argument("give either --config or --preset, not both");
  if (!opt.config_path.empty()) {
    path = opt.config_path;
  } else if (!opt.preset.empty()) {
    for (const fs::path candidate :
         {fs::path(FLUXPEA_PRESET_DIR) / (opt.preset + ".json"),
          fs::path("presets") / (opt.preset + ".json")}) {
      if (fs::exists(candidate)) {
        path = candidate.string();
        break;
      }
    }
    if (path.empty()) throw std::invalid_argument("preset not found: " + opt.preset);
  }
  Json j = Json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    in >> j;
  }
  return j;
}

ExperimentSpec resolve_spec(const CliOptions& opt) {
  Json j = load_config_json(opt);
  if (opt.seed_set) j["sweep"]["seed"] = opt.seed;
  if (!opt.out_dir.empty()) j["output_dir"] = opt.out_dir;
  return parse_spec(j);
}

int effective_workers(const CliOptions& opt) {
  if (opt.workers > 0) return opt.workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(std::min(hw, 8u));
}

std::vector<double> pattern_taus(const SensorConfig& sensor, const PatternConfig& pat) {
  std::vector<double> taus;
  if (pat.tau_max > 0.0) {
    for (int i = 0; i < pat.tau_count; ++i)
      taus.push_back(sensor.tau_min +
                     (pat.tau_max - sensor.tau_min) * i / std::max(1, pat.tau_count - 1));
  } else {
    double tau = sensor.tau_min;
    for (int i = 0; i < pat.tau_count; ++i, tau *= 2.0) taus.push_back(tau);
  }
  return taus;
}

void write_pattern_plot_script(const fs::path& dir) {
  std::ofstream os(dir / "plot_pattern.py");
  os << "#!/usr/bin/env python3\n"
        "# Renders the calibration pattern CSV written next to this script.\n"
        "import csv, sys\n"
        "import matplotlib.pyplot as plt\n"
        "path = sys.argv[1] if len(sys.argv) > 1 else 'pattern.csv'\n"
        "rows = [r for r in csv.reader(l for l in open(path) if not l.startswith('#'))]\n"
        "taus = [float(t) for t in rows[0][1:]]\n"
        "flux = [float(r[0]) for r in rows[1:]]\n"
        "for c, tau in enumerate(taus):\n"
        "    plt.plot(flux, [float(r[c + 1]) for r in rows[1:]], label=f'tau={tau:.3g} s')\n"
        "plt.xlabel('flux (Phi0)')\n"
        "plt.ylabel('P')\n"
        "plt.legend(fontsize=7)\n"
        "plt.tight_layout()\n"
        "plt.savefig('pattern.png', dpi=160)\n"
        "print('wrote pattern.png')\n";
}

void write_summary_plot_script(const fs::path& dir) {
  std::ofstream os(dir / "plot_summary.py");
  os << "#!/usr/bin/env python3\n"
        "# Renders accuracy-vs-time and delay-vs-step figures from summary CSVs\n"
        "# found in the run subdirectories next to this script.\n"
        "import csv, glob, os\n"
        "import matplotlib.pyplot as plt\n"
        "fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))\n"
        "for path in sorted(glob.glob(os.path.join(os.path.dirname(__file__) or '.', '*', 'summary.csv'))):\n"
        "    label = os.path.basename(os.path.dirname(path))\n"
        "    rows = [r for r in csv.reader(l for l in open(path) if not l.startswith('#'))][1:]\n"
        "    tau = [float(r[1]) for r in rows]\n"
        "    acc = [float(r[3]) for r in rows]\n"
        "    delay = [float(r[6]) for r in rows]\n"
        "    step = [int(r[0]) for r in rows]\n"
        "    ax1.loglog(tau, acc, 'o-', label=label)\n"
        "    ax2.semilogy(step, delay, 'o-', label=label)\n"
        "if len(ax1.lines):\n"
        "    t0 = ax1.lines[0].get_xdata()[0]; a0 = ax1.lines[0].get_ydata()[0]\n"
        "    ts = [t0, t0 * 1e3]\n"
        "    ax1.loglog(ts, [a0 * (t0 / t) ** 0.5 for t in ts], 'k--', lw=0.8, label='SQL 1/sqrt(t)')\n"
        "    ax1.loglog(ts, [a0 * (t0 / t) for t in ts], 'k:', lw=0.8, label='HL 1/t')\n"
        "ax1.set_xlabel('phase accumulation time (s)')\n"
        "ax1.set_ylabel('delta Phi / Phi0')\n"
        "ax2.set_xlabel('step')\n"
        "ax2.set_ylabel('averaged delay (s)')\n"
        "ax1.legend(fontsize=7)\n"
        "ax2.legend(fontsize=7)\n"
        "plt.tight_layout()\n"
        "plt.savefig('summary.png', dpi=160)\n"
        "print('wrote summary.png')\n";
}

int cmd_pattern(const CliOptions& opt) {
  const ExperimentSpec spec = resolve_spec(opt);
  const SensorConfig& sensor = spec.sensor;
  const FluxGrid full = build_calibration_grid(sensor);
  const std::vector<double> taus = pattern_taus(sensor, spec.pattern);

  int rows = std::min(spec.pattern.flux_points, full.count);
  if (spec.pattern.use_engine) rows = std::min(rows, 128);
  const int stride = std::max(1, full.count / rows);
  FluxGrid grid{full.start, full.step * stride, full.count / stride};

  std::vector<std::vector<double>> pattern;
  if (spec.pattern.use_engine) {
    if (sensor.n_qubits != 2)
      throw std::invalid_argument("pattern: use_engine requires n_qubits = 2");
    pattern.resize(grid.count);
    for (int i = 0; i < grid.count; ++i)
      for (double tau : taus)
        pattern[i].push_back(sequence_fig2a(sensor, grid.value(i), tau, 1e-8)[2]);
  } else {
    pattern = build_calibration_pattern(sensor, grid, taus);
  }

  const fs::path dir(spec.output_dir);
  fs::create_directories(dir);
  std::ofstream os(dir / "pattern.csv");
  write_file_header(os, spec.canonical_json(), spec.sweep.seed);
  write_pattern_csv(os, grid, taus, pattern);
  write_pattern_plot_script(dir);
  std::cout << "wrote " << (dir / "pattern.csv").string() << " (" << grid.count << " x "
            << taus.size() << ")\n";
  return 0;
}

struct VerifyReport {
  bool ok = true;
  void check(const std::string& name, bool pass, const std::string& detail) {
    std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << "\n";
    ok = ok && pass;
  }
};

int cmd_verify(const CliOptions& opt) {
  const ExperimentSpec spec = resolve_spec(opt);
  VerifyReport report;

  // Bell-state fidelity of the two-qubit entangler.
  {
    DensityMatrix rho = ground_state(2);
    auto gates = detail::entangler_2q();
    if (opt.corrupt_entangler)
      std::get<Rotation>(gates[0]).angle += 0.1;
    for (const auto& g : gates) rho = apply_gate(rho, g);
    Eigen::VectorXcd bell(4);
    bell << 1.0 / std::sqrt(2.0), 0, 0, 1.0 / std::sqrt(2.0);
    const double fidelity = (bell.adjoint() * rho * bell)(0).real();
    report.check("bell-fidelity", fidelity >= 1.0 - 1e-9,
                 "fidelity = " + format_g(fidelity, 12));
  }

  // Lindblad vs closed form, zero rates, N in {1, 2}.
  for (int n : {1, 2}) {
    SensorConfig s = spec.sensor;
    s.n_qubits = n;
    s.gamma1 = 0.0;
    s.gamma_phi = 0.0;
    const FluxGrid grid = build_calibration_grid(s);
    double max_dev = 0.0;
    const int pts = 32;
    for (int i = 0; i < pts; ++i) {
      const double flux = grid.start + grid.span() * i / (pts - 1.0);
      for (int t = 0; t < pts; ++t) {
        const double tau = s.tau_min * (1.0 + 40.0 * t / (pts - 1.0));
        const double engine = ghz_projected_pattern(s, flux, tau, 1e-9);
        const double closed =
            ramsey_probability(s, detuning(s.detuning_model, flux), tau);
        max_dev = std::max(max_dev, std::fabs(engine - closed));
      }
    }
    report.check("eq2-equivalence-n" + std::to_string(n), max_dev < 1e-6,
                 "max deviation = " + format_g(max_dev, 6));
  }

  // Fringe frequency and envelope rate with the paper rates, N = 2.
  {
    SensorConfig s = spec.sensor;
    s.n_qubits = 2;
    const double k = operating_slope(s.detuning_model);
    const double dw = 2.0 * kPi * 1.0e6;
    const double flux = operating_flux(s.detuning_model) + dw / k;
    std::vector<double> ts, ys;
    for (int i = 0; i < 72; ++i) {
      const double tau = 4.0e-6 * (i + 1) / 72.0;
      ts.push_back(tau);
      ys.push_back(sequence_fig2a(s, flux, tau, 1e-9)[2]);
    }
    const auto fit = fit_damped_cosine(ts, ys, 2.0 * dw * 1.15, 1.3 * (s.gamma1 + 2.0 * s.gamma_phi),
                                       {0.0, s.gamma1, 2.0 * s.gamma1});
    const double freq_err = std::fabs(fit.omega - 2.0 * dw) / (2.0 * dw);
    const double env_target = 2.0 * (s.gamma1 / 2.0 + s.gamma_phi);
    const double env_err = std::fabs(fit.decay_rate - env_target) / env_target;
    report.check("fringe-frequency", freq_err < 1e-3,
                 "relative error = " + format_g(freq_err, 4));
    report.check("envelope-rate", env_err < 0.10,
                 "relative error = " + format_g(env_err, 4));
  }

  // CPTP spot checks over random gate/evolve sequences.
  {
    RngStream rng(spec.sweep.seed, 0xCAFEu, 0);
    double worst_trace = 0.0, worst_herm = 0.0, worst_eig = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 1 + static_cast<int>(rng.next_u64() % 3);
      DensityMatrix rho = ground_state(n);
      LindbladSpec ls{std::vector<double>(n, 2.0 * kPi * 1e6 * (rng.uniform() - 0.5)),
                      std::vector<double>(n, 3e5 * rng.uniform()),
                      std::vector<double>(n, 3e5 * rng.uniform())};
      for (int step = 0; step < 4; ++step) {
        const char axes[] = {'x', 'y', 'z'};
        rho = apply_gate(rho, Rotation{static_cast<int>(rng.next_u64() % n),
                                       axes[rng.next_u64() % 3],
                                       2.0 * kPi * rng.uniform()});
        rho = evolve(rho, ls, 2e-7 * rng.uniform(), 1e-10);
      }
      worst_trace = std::max(worst_trace, trace_defect(rho));
      worst_herm = std::max(worst_herm, hermiticity_defect(rho));
      worst_eig = std::min(worst_eig, min_eigenvalue(rho));
    }
    report.check("cptp", worst_trace < 1e-9 && worst_herm < 1e-10 && worst_eig > -1e-9,
                 "trace " + format_g(worst_trace, 3) + ", herm " + format_g(worst_herm, 3) +
                     ", eigmin " + format_g(worst_eig, 3));
  }

  return report.ok ? 0 : 3;
}

// Tasks accumulated in a checkpoint file keyed by the config hash; on matching
// resume they are skipped, otherwise the run refuses to continue.
int cmd_sense(const CliOptions& opt) {
  const ExperimentSpec spec = resolve_spec(opt);
  const int workers = effective_workers(opt);
  const fs::path out_root(spec.output_dir);
  fs::create_directories(out_root);

  for (const RunVariant& rv : spec.runs) {
    const fs::path run_dir = out_root / rv.label;
    fs::create_directories(run_dir);
    const fs::path records_path = run_dir / "records.csv";
    const fs::path part_path = run_dir / "records.part.csv";

    Json run_json;
    run_json["sensor"] = dump_sensor(rv.sensor);
    run_json["pea"] = dump_pea(rv.pea);
    run_json["sweep"] = {{"flux_count", spec.sweep.flux_count},
                         {"repetitions", spec.sweep.repetitions},
                         {"seed", spec.sweep.seed}};
    const std::string config_json = run_json.dump();
    const std::string hash = hex64(fnv1a64(config_json));

    if (fs::exists(records_path)) {
      std::ifstream in(records_path);
      const RecordsFile existing = read_records_csv(in);
      if (existing.config_hash != hash)
        throw std::invalid_argument("sense: existing " + records_path.string() +
                                    " was produced with a different config; refusing");
      std::cout << rv.label << ": already complete, skipping\n";
      continue;
    }

    const std::vector<double> fluxes = preset_test_fluxes(rv.sensor, spec.sweep.flux_count);
    const FluxGrid grid = build_calibration_grid(rv.sensor);
    const int M = spec.sweep.repetitions;
    const int L = rv.pea.max_steps;

    // Resume from checkpoint when present and compatible.
    std::vector<std::vector<StepRecord>> resumed;
    if (fs::exists(part_path)) {
      std::ifstream in(part_path);
      const RecordsFile part = read_records_csv(in);
      if (part.config_hash != hash)
        throw std::invalid_argument("sense: checkpoint " + part_path.string() +
                                    " was produced with a different config; refusing");
      resumed.assign(static_cast<std::size_t>(fluxes.size()) * M, {});
      std::map<std::pair<int, int>, std::vector<RunRecord>> groups;
      for (const RunRecord& r : part.records) groups[{r.j, r.k}].push_back(r);
      std::size_t kept = 0;
      for (auto& [jk, rows] : groups) {
        if (static_cast<int>(rows.size()) != L) continue;  // torn write, redo
        std::vector<StepRecord> steps;
        for (const RunRecord& r : rows)
          steps.push_back(StepRecord{r.l, r.tau, r.shots, r.half, r.phi_hat, r.decided, 0, 0});
        resumed[static_cast<std::size_t>(jk.first) * M + jk.second] = std::move(steps);
        ++kept;
      }
      std::cout << rv.label << ": resuming, " << kept << " tasks already done\n";
    }

    std::ofstream part(part_path, std::ios::app);
    if (!fs::exists(part_path) || fs::file_size(part_path) == 0) {
      write_file_header(part, config_json, spec.sweep.seed);
      part << "j,flux_true,k,l,tau_l_s,n_l,half,phi_hat,decided_flag\n";
      part.flush();
    }
    auto checkpoint = [&](int j, int k, const std::vector<StepRecord>& steps) {
      for (const StepRecord& s : steps) {
        RunRecord r;
        r.j = j;
        r.flux_true = fluxes[j];
        r.k = k;
        r.l = s.step;
        r.tau = s.tau;
        r.shots = s.shots;
        r.half = s.half;
        r.phi_hat = s.phi_hat;
        r.decided = s.decided;
        write_record_row(part, r);
      }
      part.flush();
    };

    const ExperimentResult result =
        run_experiment(rv.sensor, rv.pea, fluxes, M, spec.sweep.seed, grid, workers,
                       checkpoint, resumed.empty() ? nullptr : &resumed);

    std::ofstream os(records_path);
    write_records_csv(os, result, config_json);
    os.close();
    part.close();
    fs::remove(part_path);
    std::cout << rv.label << ": wrote " << records_path.string() << " (" << result.records.size()
              << " rows)\n";
  }
  return 0;
}

int cmd_analyze(const CliOptions& opt) {
  const std::string dir = opt.out_dir.empty() ? "out" : opt.out_dir;
  bool found = false;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    const fs::path records_path = entry.path() / "records.csv";
    const fs::path part_path = entry.path() / "records.part.csv";
    const fs::path source = fs::exists(records_path) ? records_path : part_path;
    if (!fs::exists(source)) continue;
    found = true;

    std::ifstream in(source);
    RecordsFile file = read_records_csv(in);

    // A checkpoint may hold a partial sweep; keep the rectangular complete core.
    if (source == part_path) {
      std::map<std::pair<int, int>, int> counts;
      int L = 0;
      for (const RunRecord& r : file.records) {
        counts[{r.j, r.k}]++;
        L = std::max(L, r.l);
      }
      std::map<int, int> reps_per_j;
      for (const auto& [jk, c] : counts)
        if (c == L) reps_per_j[jk.first]++;
      int M = 0;
      for (const auto& [j, reps] : reps_per_j) M = (M == 0) ? reps : std::min(M, reps);
      if (M < 2) {
        std::cout << entry.path().filename().string() << ": too few complete repetitions, skipped\n";
        continue;
      }
      std::map<std::pair<int, int>, int> k_index;  // (j, k) -> compact k
      std::map<int, int> j_index, reps_used;
      for (const auto& [jk, c] : counts) {
        if (c != L) continue;
        if (reps_used[jk.first] >= M) continue;
        if (!j_index.count(jk.first)) j_index[jk.first] = static_cast<int>(j_index.size());
        k_index[jk] = reps_used[jk.first]++;
      }
      std::vector<RunRecord> kept;
      for (const RunRecord& r : file.records) {
        const auto it = k_index.find({r.j, r.k});
        if (it == k_index.end()) continue;
        RunRecord rr = r;
        rr.j = j_index[r.j];
        rr.k = it->second;
        kept.push_back(rr);
      }
      std::sort(kept.begin(), kept.end(), [](const RunRecord& a, const RunRecord& b) {
        return std::tie(a.j, a.k, a.l) < std::tie(b.j, b.k, b.l);
      });
      file.records = std::move(kept);
    }

    const ExperimentResult result = assemble_result(file);
    const auto summary = summarize(result);
    std::ofstream os(entry.path() / "summary.csv");
    write_summary_csv(os, summary, "{\"source\":\"" + source.filename().string() +
                                        "\",\"config_hash\":\"" + file.config_hash + "\"}",
                      file.seed);
    std::cout << entry.path().filename().string() << ": wrote summary.csv (" << summary.size()
              << " steps)\n";
  }
  if (!found) throw std::invalid_argument("analyze: no records found under " + dir);
  write_summary_plot_script(dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fluxpea: entangled flux sensing with the Kitaev phase estimation algorithm"};
  app.set_version_flag("--version", std::string("fluxpea ") + kVersion);
  app.require_subcommand(1);

  CliOptions opt;
  for (auto* sub : {app.add_subcommand("pattern", "export calibration pattern CSV"),
                    app.add_subcommand("verify", "run the Lindblad-vs-closed-form checks"),
                    app.add_subcommand("sense", "run the full sensing sweep"),
                    app.add_subcommand("analyze", "aggregate records into summaries")}) {
    sub->add_option("--config", opt.config_path, "config JSON file");
    sub->add_option("--preset", opt.preset, "named preset (paper-fig4, desk, qec)");
    sub->add_option("--out", opt.out_dir, "output directory override");
    sub->add_option("--seed", opt.seed, "root seed override")
        ->each([&](const std::string&) { opt.seed_set = true; });
    sub->add_option("--workers", opt.workers, "worker thread count");
  }
  app.get_subcommand("verify")->add_flag("--corrupt-entangler", opt.corrupt_entangler,
                                         "negative control: detune an entangler rotation");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("pattern")) return cmd_pattern(opt);
    if (app.got_subcommand("verify")) return cmd_verify(opt);
    if (app.got_subcommand("sense")) return cmd_sense(opt);
    if (app.got_subcommand("analyze")) return cmd_analyze(opt);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
