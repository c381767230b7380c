#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <variant>
#include <vector>

namespace fluxpea {

inline constexpr double kPi = 3.14159265358979323846;

// Flux -> angular detuning map, linearized around an operating point.
// slope is d(detuning)/d(flux) in rad/s per Phi0.
struct LinearDetuning {
  double slope = 0.0;
  double operating_flux = 0.0;  // Phi0 units
  double offset = 0.0;          // rad/s at the operating point
};

// Split-junction transmon spectrum: w_q(F) = (w_max + |eta|) * sqrt(|cos(pi F)|) - |eta|.
// Valid on the monotone branch F in (-1/2, 1/2).
struct TransmonDetuning {
  double max_frequency = 0.0;   // rad/s
  double anharmonicity = 0.0;   // rad/s
  double drive_frequency = 0.0; // rad/s
};

using DetuningModel = std::variant<LinearDetuning, TransmonDetuning>;

struct SensorConfig {
  int n_qubits = 1;
  double gamma1 = 0.0;     // relaxation rate per qubit, 1/s (plain rate, not angular)
  double gamma_phi = 0.0;  // pure dephasing rate per qubit, 1/s
  double alpha = 1.0;      // collective-dephasing exponent, in [1,2]
  DetuningModel detuning_model = LinearDetuning{};
  double tau_min = 1e-7;   // minimal delay time, s

  // N*Gamma1/2 + N^alpha*Gamma_phi, the Eq.-style envelope rate of the N-qubit pattern.
  double decay_rate() const {
    const double n = static_cast<double>(n_qubits);
    return n * gamma1 / 2.0 + std::pow(n, alpha) * gamma_phi;
  }

  // Effective coherence time T2*; infinite when all rates vanish.
  double coherence_time() const {
    const double r = decay_rate();
    return r > 0.0 ? 1.0 / r : std::numeric_limits<double>::infinity();
  }

  void validate() const {
    if (n_qubits < 1) throw std::invalid_argument("sensor: n_qubits must be >= 1");
    if (gamma1 < 0.0) throw std::invalid_argument("sensor: gamma1 must be >= 0");
    if (gamma_phi < 0.0) throw std::invalid_argument("sensor: gamma_phi must be >= 0");
    if (alpha < 1.0 || alpha > 2.0) throw std::invalid_argument("sensor: alpha must lie in [1,2]");
    if (!(tau_min > 0.0)) throw std::invalid_argument("sensor: tau_min must be > 0");
  }
};

inline double transmon_qubit_frequency(const TransmonDetuning& m, double flux) {
  if (flux <= -0.5 || flux >= 0.5)
    throw std::out_of_range("transmon: flux outside the monotone branch (-1/2, 1/2)");
  const double eta = std::fabs(m.anharmonicity);
  return (m.max_frequency + eta) * std::sqrt(std::fabs(std::cos(kPi * flux))) - eta;
}

// Flux where the drive is resonant, i.e. detuning(F_op) has its nominal zero.
inline double operating_flux(const DetuningModel& model) {
  if (const auto* lin = std::get_if<LinearDetuning>(&model)) return lin->operating_flux;
  const auto& tr = std::get<TransmonDetuning>(model);
  const double eta = std::fabs(tr.anharmonicity);
  const double r = (tr.drive_frequency + eta) / (tr.max_frequency + eta);
  if (!(r > 0.0) || r > 1.0)
    throw std::domain_error("transmon: drive frequency outside the tunable spectrum");
  return std::acos(r * r) / kPi;
}

inline double detuning(const DetuningModel& model, double flux) {
  if (const auto* lin = std::get_if<LinearDetuning>(&model))
    return lin->offset + lin->slope * (flux - lin->operating_flux);
  const auto& tr = std::get<TransmonDetuning>(model);
  return transmon_qubit_frequency(tr, flux) - tr.drive_frequency;
}

// d(detuning)/d(flux), analytic for both variants.
inline double detuning_slope(const DetuningModel& model, double flux) {
  if (const auto* lin = std::get_if<LinearDetuning>(&model)) return lin->slope;
  const auto& tr = std::get<TransmonDetuning>(model);
  if (flux <= -0.5 || flux >= 0.5)
    throw std::out_of_range("transmon: flux outside the monotone branch (-1/2, 1/2)");
  const double eta = std::fabs(tr.anharmonicity);
  const double c = std::cos(kPi * flux);
  const double sc = std::sqrt(std::fabs(c));
  if (sc == 0.0) return 0.0;
  const double sign = c >= 0.0 ? 1.0 : -1.0;
  return -(tr.max_frequency + eta) * kPi * sign * std::sin(kPi * flux) / (2.0 * sc);
}

inline double operating_slope(const DetuningModel& model) {
  return detuning_slope(model, operating_flux(model));
}

// Unambiguous flux span at the minimal delay: pi / (N * |k| * tau_min).
inline double dynamic_range(const SensorConfig& config) {
  config.validate();
  const double k = std::fabs(operating_slope(config.detuning_model));
  if (k == 0.0)
    throw std::domain_error("dynamic_range: detuning slope vanishes at the operating point");
  return kPi / (static_cast<double>(config.n_qubits) * k * config.tau_min);
}

// Eq.-(2)-style N-qubit projected Ramsey pattern.
inline double ramsey_probability(const SensorConfig& config, double detuning_rad, double tau) {
  if (tau < 0.0) throw std::invalid_argument("ramsey_probability: tau must be >= 0");
  const double n = static_cast<double>(config.n_qubits);
  return 0.5 + 0.5 * std::exp(-config.decay_rate() * tau) * std::cos(n * detuning_rad * tau);
}

struct FluxGrid {
  double start = 0.0;  // Phi0 units
  double step = 0.0;
  int count = 0;

  double value(int i) const { return start + step * static_cast<double>(i); }
  double span() const { return step * static_cast<double>(count); }

  void validate() const {
    if (!(step > 0.0)) throw std::invalid_argument("flux grid: step must be > 0");
    if (count < 2) throw std::invalid_argument("flux grid: count must be >= 2");
  }
};

// Calibration pattern: rows follow the grid, columns the delay list.
inline std::vector<std::vector<double>> build_calibration_pattern(
    const SensorConfig& config, const FluxGrid& grid, const std::vector<double>& taus) {
  grid.validate();
  const double lo = operating_flux(config.detuning_model);
  const double hi = lo + dynamic_range(config);
  const double tol = 1e-9 * grid.span();
  if (grid.start < lo - tol || grid.value(grid.count - 1) > hi + tol)
    throw std::out_of_range("calibration pattern: grid exceeds the sensor dynamic range");

  std::vector<std::vector<double>> pattern(grid.count);
  for (int i = 0; i < grid.count; ++i) {
    const double dw = detuning(config.detuning_model, grid.value(i));
    pattern[i].reserve(taus.size());
    for (double tau : taus) pattern[i].push_back(ramsey_probability(config, dw, tau));
  }
  return pattern;
}

}  // namespace fluxpea
