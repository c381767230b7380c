#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "fluxpea/fit.hpp"
#include "fluxpea/kitaev.hpp"
#include "fluxpea/rng.hpp"

namespace fluxpea {

struct RunRecord {
  int j = 0;              // flux index, 0-based
  double flux_true = 0.0; // Phi0 units
  int k = 0;              // repetition, 0-based
  int l = 0;              // step, 1-based
  double tau = 0.0;       // s
  long shots = 0;
  Half half = Half::None;
  double phi_hat = 0.0;
  bool decided = false;
};

// Dense (j, k, l) record tensor plus the config echo needed to reproduce it.
struct ExperimentResult {
  int F = 0;
  int M = 0;
  int L = 0;
  std::vector<double> true_fluxes;      // size F
  std::vector<RunRecord> records;       // sorted by (j, k, l), size F*M*L
  SensorConfig sensor;
  PeaConfig pea;
  std::uint64_t seed = 0;

  const RunRecord& at(int j, int k, int l) const {
    if (j < 0 || j >= F || k < 0 || k >= M || l < 1 || l > L)
      throw std::out_of_range("experiment result: index out of range");
    return records[(static_cast<std::size_t>(j) * M + k) * L + (l - 1)];
  }

  void validate() const {
    if (records.size() != static_cast<std::size_t>(F) * M * L ||
        true_fluxes.size() != static_cast<std::size_t>(F))
      throw std::invalid_argument("experiment result: ragged index set");
  }
};

// Total phase accumulation time sum_{i<=l} tau_i * n_i for one (j,k) run.
inline double phase_accumulation_time(const ExperimentResult& r, int j, int k, int l) {
  double t = 0.0;
  for (int i = 1; i <= l; ++i) {
    const RunRecord& rec = r.at(j, k, i);
    t += rec.tau * static_cast<double>(rec.shots);
  }
  return t;
}

// Mean over k then over j of the accumulated time at step l.
inline double averaged_phase_time(const ExperimentResult& r, int l) {
  double over_j = 0.0;
  for (int j = 0; j < r.F; ++j) {
    double over_k = 0.0;
    for (int k = 0; k < r.M; ++k) over_k += phase_accumulation_time(r, j, k, l);
    over_j += over_k / r.M;
  }
  return over_j / r.F;
}

// sqrt( (1/(F)) sum_j (1/(M-1)) sum_k (phi_hat - phi_j)^2 ), flux in Phi0
// units already so the 1/Phi0^2 factor is unity.
inline double averaged_accuracy(const ExperimentResult& r, int l) {
  if (r.M < 2) throw std::invalid_argument("averaged_accuracy: needs M >= 2");
  double acc = 0.0;
  for (int j = 0; j < r.F; ++j) {
    double sq = 0.0;
    for (int k = 0; k < r.M; ++k) {
      const double d = r.at(j, k, l).phi_hat - r.true_fluxes[j];
      sq += d * d;
    }
    acc += sq / (r.M - 1);
  }
  return std::sqrt(acc / r.F);
}

inline double averaged_delay(const ExperimentResult& r, int l) {
  double over_j = 0.0;
  for (int j = 0; j < r.F; ++j) {
    double over_k = 0.0;
    for (int k = 0; k < r.M; ++k) over_k += r.at(j, k, l).tau;
    over_j += over_k / r.M;
  }
  return over_j / r.F;
}

inline double averaged_shots(const ExperimentResult& r, int l) {
  double over_j = 0.0;
  for (int j = 0; j < r.F; ++j) {
    double over_k = 0.0;
    for (int k = 0; k < r.M; ++k) over_k += static_cast<double>(r.at(j, k, l).shots);
    over_j += over_k / r.M;
  }
  return over_j / r.F;
}

// First step whose averaged delay reaches `fraction` of the delay cap.
inline int saturation_step(const ExperimentResult& r, double cap, double fraction = 0.75) {
  for (int l = 1; l <= r.L; ++l)
    if (averaged_delay(r, l) >= fraction * cap) return l;
  return r.L + 1;
}

// Bootstrap standard error of averaged_accuracy at step l, resampling the
// repetitions within each flux. Not part of Eq.-(4); emitted as extra columns.
inline double accuracy_bootstrap_sigma(const ExperimentResult& r, int l, int n_boot = 200,
                                       std::uint64_t seed = 7) {
  if (r.M < 2) throw std::invalid_argument("accuracy_bootstrap_sigma: needs M >= 2");
  RngStream rng(seed, 0xB007u, static_cast<std::uint32_t>(l));
  std::vector<double> samples;
  samples.reserve(n_boot);
  for (int b = 0; b < n_boot; ++b) {
    double acc = 0.0;
    for (int j = 0; j < r.F; ++j) {
      double sq = 0.0;
      for (int k = 0; k < r.M; ++k) {
        const int kk = static_cast<int>(rng.next_u64() % r.M);
        const double d = r.at(j, kk, l).phi_hat - r.true_fluxes[j];
        sq += d * d;
      }
      acc += sq / (r.M - 1);
    }
    samples.push_back(std::sqrt(acc / r.F));
  }
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= samples.size();
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  return std::sqrt(var / (samples.size() - 1));
}

struct StepSummary {
  int l = 0;
  double tau_bar = 0.0;        // averaged total phase accumulation time, s
  double delay_bar = 0.0;      // averaged per-step delay, s
  double n_bar = 0.0;          // averaged shots
  double delta_phi = 0.0;      // averaged accuracy, Phi0 units
  double delta_phi_sigma = 0.0;
  double slope_local = 0.0;    // log-log slope vs previous step (0 for l=1)
};

inline std::vector<StepSummary> summarize(const ExperimentResult& r, int n_boot = 200) {
  r.validate();
  std::vector<StepSummary> out;
  out.reserve(r.L);
  for (int l = 1; l <= r.L; ++l) {
    StepSummary s;
    s.l = l;
    s.tau_bar = averaged_phase_time(r, l);
    s.delay_bar = averaged_delay(r, l);
    s.n_bar = averaged_shots(r, l);
    s.delta_phi = averaged_accuracy(r, l);
    s.delta_phi_sigma = accuracy_bootstrap_sigma(r, l, n_boot);
    if (l > 1 && out.back().tau_bar > 0.0 && out.back().delta_phi > 0.0 &&
        s.delta_phi > 0.0 && s.tau_bar > out.back().tau_bar)
      s.slope_local = (std::log(s.delta_phi) - std::log(out.back().delta_phi)) /
                      (std::log(s.tau_bar) - std::log(out.back().tau_bar));
    out.push_back(s);
  }
  return out;
}

// Log-log linear interpolation of (tau_bar, delta_phi) curves, used for
// equal-time comparisons across sensors. Returns NaN outside the curve range.
inline double interpolate_accuracy(const std::vector<StepSummary>& curve, double tau_bar) {
  if (curve.size() < 2 || tau_bar < curve.front().tau_bar || tau_bar > curve.back().tau_bar)
    return std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (tau_bar <= curve[i].tau_bar) {
      const double x0 = std::log(curve[i - 1].tau_bar), x1 = std::log(curve[i].tau_bar);
      const double y0 = std::log(curve[i - 1].delta_phi), y1 = std::log(curve[i].delta_phi);
      const double t = (x1 == x0) ? 0.0 : (std::log(tau_bar) - x0) / (x1 - x0);
      return std::exp(y0 + t * (y1 - y0));
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// Least-squares log-log slope over an inclusive step range [l_first, l_last].
inline double slope_over_steps(const std::vector<StepSummary>& curve, int l_first, int l_last) {
  std::vector<std::pair<double, double>> pts;
  for (const StepSummary& s : curve)
    if (s.l >= l_first && s.l <= l_last) pts.emplace_back(s.tau_bar, s.delta_phi);
  return scaling_exponent(pts);
}

}  // namespace fluxpea
