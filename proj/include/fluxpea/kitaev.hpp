#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fluxpea/model.hpp"
#include "fluxpea/readout.hpp"
#include "fluxpea/rng.hpp"

namespace fluxpea {

// Belief state over a contiguous window [lo, hi) of a flux grid.
struct Posterior {
  FluxGrid grid;
  int lo = 0;
  int hi = 0;
  std::vector<double> weights;  // size hi - lo, normalized

  int count() const { return hi - lo; }
  double width() const { return grid.step * static_cast<double>(count()); }

  double mean() const {
    double m = 0.0;
    for (int i = lo; i < hi; ++i) m += weights[i - lo] * grid.value(i);
    return m;
  }

  void renormalize() {
    const double s = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(s > 0.0)) throw std::runtime_error("posterior: weights sum to zero");
    for (double& w : weights) w /= s;
  }

  static Posterior uniform(const FluxGrid& grid) {
    grid.validate();
    Posterior p{grid, 0, grid.count,
                std::vector<double>(grid.count, 1.0 / grid.count)};
    return p;
  }
};

enum class DelayCapPolicy { CoherenceTime, None, Fixed };

struct PeaConfig {
  double epsilon = 1e-4;   // discard error probability
  int max_steps = 10;
  long shot_cap = 100000;
  DelayCapPolicy cap_policy = DelayCapPolicy::CoherenceTime;
  double fixed_cap = 0.0;  // s, used when cap_policy == Fixed
  ReadoutModel readout;

  void validate() const {
    if (!(epsilon > 0.0) || epsilon >= 0.5)
      throw std::invalid_argument("pea: epsilon must lie in (0, 0.5)");
    if (max_steps < 1) throw std::invalid_argument("pea: max_steps must be >= 1");
    if (shot_cap < 1) throw std::invalid_argument("pea: shot_cap must be >= 1");
    if (cap_policy == DelayCapPolicy::Fixed && !(fixed_cap > 0.0))
      throw std::invalid_argument("pea: fixed delay cap must be > 0");
    readout.validate();
  }

  double delay_cap(const SensorConfig& sensor) const {
    switch (cap_policy) {
      case DelayCapPolicy::CoherenceTime:
        return sensor.coherence_time();
      case DelayCapPolicy::Fixed:
        return fixed_cap;
      case DelayCapPolicy::None:
      default:
        return std::numeric_limits<double>::infinity();
    }
  }
};

enum class Half { Lower, Upper, None };

struct StepRecord {
  int step = 0;          // 1-based
  double tau = 0.0;      // s
  long shots = 0;
  Half half = Half::None;
  double phi_hat = 0.0;  // posterior mean over survivors, Phi0 units
  bool decided = false;
  int lo = 0;            // surviving window after the step
  int hi = 0;
};

// Preset grid family: 2048 * 3^(N-1) / N points over the N-qubit dynamic
// range. The pitch refines threefold per added qubit, so coarse-grid points
// stay exactly on every finer grid and a >= 256-point common sub-lattice
// exists for N = 1, 2, 3 (counts 2048, 3072, 6144).
inline int preset_grid_count(int n_qubits) {
  double c = 2048.0;
  for (int i = 1; i < n_qubits; ++i) c *= 3.0;
  c /= static_cast<double>(n_qubits);
  return static_cast<int>(std::lround(c));
}

inline FluxGrid build_calibration_grid(const SensorConfig& sensor) {
  const double span = dynamic_range(sensor);
  const int count = preset_grid_count(sensor.n_qubits);
  // Every grid starts at the operating flux: the phase at the grid edge is a
  // multiple of pi, so the fringe is one-to-one over the span. Any other
  // placement makes cos(N*dw*tau) two-to-one and mirror fluxes degenerate.
  FluxGrid grid{operating_flux(sensor.detuning_model), span / count, count};
  grid.validate();
  return grid;
}

// Points of the coarsest grid that lie exactly on every grid in the family.
inline std::vector<double> common_sublattice(const std::vector<FluxGrid>& grids) {
  if (grids.empty()) throw std::invalid_argument("common_sublattice: no grids");
  std::size_t coarsest = 0;
  for (std::size_t i = 1; i < grids.size(); ++i)
    if (grids[i].step > grids[coarsest].step) coarsest = i;

  std::vector<double> common;
  const FluxGrid& base = grids[coarsest];
  for (int m = 0; m < base.count; ++m) {
    const double flux = base.value(m);
    bool on_all = true;
    for (const FluxGrid& g : grids) {
      const double idx = (flux - g.start) / g.step;
      const double nearest = std::round(idx);
      if (nearest < 0 || nearest > g.count - 1 || std::fabs(idx - nearest) > 1e-6) {
        on_all = false;
        break;
      }
    }
    if (on_all) common.push_back(flux);
  }
  return common;
}

// Largest delay keeping the fringe unambiguous over the surviving interval,
// clamped to [tau_min, cap].
inline double choose_delay(const Posterior& posterior, const SensorConfig& sensor,
                           const PeaConfig& pea) {
  if (posterior.count() < 1) throw std::invalid_argument("choose_delay: empty posterior");
  const double k = std::fabs(operating_slope(sensor.detuning_model));
  const double w = posterior.width();
  double tau = kPi / (static_cast<double>(sensor.n_qubits) * k * w);
  tau = std::min(tau, pea.delay_cap(sensor));
  return std::max(tau, sensor.tau_min);
}

// One Kitaev step: accumulate shots at a fixed delay until the posterior mass
// of one half (split at the candidate median index) reaches 1 - epsilon, then
// discard the losing half. Hitting the shot cap keeps both halves and flags
// the record as undecided.
inline std::pair<Posterior, StepRecord> run_step(Posterior posterior, double true_flux,
                                                 double tau, const SensorConfig& sensor,
                                                 const PeaConfig& pea, RngStream& rng,
                                                 int step_index = 1) {
  StepRecord rec;
  rec.step = step_index;
  rec.tau = tau;

  const int c = posterior.count();
  if (c == 1) {
    // Window already collapsed to a single candidate; nothing to discard.
    rec.decided = true;
    rec.half = Half::Lower;
    rec.phi_hat = posterior.mean();
    rec.lo = posterior.lo;
    rec.hi = posterior.hi;
    return {std::move(posterior), rec};
  }

  const double p1_true =
      ramsey_probability(sensor, detuning(sensor.detuning_model, true_flux), tau);
  std::vector<double> p1(c);
  for (int i = 0; i < c; ++i)
    p1[i] = ramsey_probability(
        sensor, detuning(sensor.detuning_model, posterior.grid.value(posterior.lo + i)), tau);

  const int mid = c / 2;  // candidates [0, mid) vs [mid, c)
  const double threshold = 1.0 - pea.epsilon;

  while (rec.shots < pea.shot_cap) {
    const double x = sample_shot(p1_true, pea.readout, rng);
    ++rec.shots;
    const double g0 = gaussian_pdf(x, pea.readout.mu0, pea.readout.sigma0);
    const double g1 = gaussian_pdf(x, pea.readout.mu1, pea.readout.sigma1);
    double lower_mass = 0.0;
    double total = 0.0;
    for (int i = 0; i < c; ++i) {
      const double like = p1[i] * g1 + (1.0 - p1[i]) * g0;
      posterior.weights[i] *= (like > 1e-300 ? like : 1e-300);
      total += posterior.weights[i];
      if (i < mid) lower_mass += posterior.weights[i];
    }
    for (double& w : posterior.weights) w /= total;
    lower_mass /= total;

    if (lower_mass >= threshold) {
      rec.decided = true;
      rec.half = Half::Lower;
      posterior.hi = posterior.lo + mid;
      posterior.weights.resize(mid);
      break;
    }
    if (1.0 - lower_mass >= threshold) {
      rec.decided = true;
      rec.half = Half::Upper;
      posterior.lo += mid;
      posterior.weights.erase(posterior.weights.begin(), posterior.weights.begin() + mid);
      break;
    }
  }

  posterior.renormalize();
  rec.phi_hat = posterior.mean();
  rec.lo = posterior.lo;
  rec.hi = posterior.hi;
  return {std::move(posterior), rec};
}

// Full stepped protocol: max_steps step attempts over the given grid.
inline std::vector<StepRecord> run_algorithm(double true_flux, const SensorConfig& sensor,
                                             const PeaConfig& pea, const FluxGrid& grid,
                                             RngStream& rng) {
  sensor.validate();
  pea.validate();
  Posterior posterior = Posterior::uniform(grid);
  std::vector<StepRecord> records;
  records.reserve(pea.max_steps);
  for (int l = 1; l <= pea.max_steps; ++l) {
    const double tau = choose_delay(posterior, sensor, pea);
    auto [next, rec] = run_step(std::move(posterior), true_flux, tau, sensor, pea, rng, l);
    posterior = std::move(next);
    records.push_back(rec);
  }
  return records;
}

}  // namespace fluxpea
