#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <variant>
#include <vector>

#include "fluxpea/model.hpp"

namespace fluxpea {

using Complex = std::complex<double>;
using DensityMatrix = Eigen::MatrixXcd;

inline constexpr int kEngineMaxQubits = 3;

// ---------------------------------------------------------------------------
// Gates
// ---------------------------------------------------------------------------

// Single-qubit rotation about x, y, or z. Qubit 0 is the most significant bit
// of the basis index, i.e. |q0 q1 ...>.
struct Rotation {
  int target = 0;
  char axis = 'y';
  double angle = 0.0;
};

// c-Phase gate flipping the sign of exactly one two-qubit basis state |ij>.
struct ConditionalPhase {
  int qubit_a = 0;
  int qubit_b = 1;
  int bit_a = 1;  // i
  int bit_b = 1;  // j
};

using GateOp = std::variant<Rotation, ConditionalPhase>;

namespace detail {

inline Eigen::Matrix2cd rotation_2x2(char axis, double angle) {
  const double c = std::cos(angle / 2.0);
  const double s = std::sin(angle / 2.0);
  Eigen::Matrix2cd u;
  switch (axis) {
    case 'x':
      u << Complex(c, 0), Complex(0, -s), Complex(0, -s), Complex(c, 0);
      break;
    case 'y':
      u << Complex(c, 0), Complex(-s, 0), Complex(s, 0), Complex(c, 0);
      break;
    case 'z':
      u << std::exp(Complex(0, -angle / 2.0)), Complex(0, 0), Complex(0, 0),
          std::exp(Complex(0, angle / 2.0));
      break;
    default:
      throw std::invalid_argument("rotation: axis must be one of x, y, z");
  }
  return u;
}

inline int bit_of(int basis, int qubit, int n_qubits) {
  return (basis >> (n_qubits - 1 - qubit)) & 1;
}

}  // namespace detail

inline Eigen::MatrixXcd gate_unitary(const GateOp& gate, int n_qubits) {
  const int dim = 1 << n_qubits;
  Eigen::MatrixXcd u = Eigen::MatrixXcd::Zero(dim, dim);
  if (const auto* rot = std::get_if<Rotation>(&gate)) {
    if (rot->target < 0 || rot->target >= n_qubits)
      throw std::out_of_range("gate: rotation target out of range");
    const Eigen::Matrix2cd u2 = detail::rotation_2x2(rot->axis, rot->angle);
    const int mask = 1 << (n_qubits - 1 - rot->target);
    for (int b = 0; b < dim; ++b) {
      const int bit = (b & mask) ? 1 : 0;
      u(b, b) = u2(bit, bit);
      u(b, b ^ mask) = u2(bit, 1 - bit);
    }
  } else {
    const auto& cp = std::get<ConditionalPhase>(gate);
    if (cp.qubit_a < 0 || cp.qubit_a >= n_qubits || cp.qubit_b < 0 ||
        cp.qubit_b >= n_qubits || cp.qubit_a == cp.qubit_b)
      throw std::out_of_range("gate: conditional-phase qubit pair out of range");
    for (int b = 0; b < dim; ++b) {
      const bool hit = detail::bit_of(b, cp.qubit_a, n_qubits) == cp.bit_a &&
                       detail::bit_of(b, cp.qubit_b, n_qubits) == cp.bit_b;
      u(b, b) = hit ? -1.0 : 1.0;
    }
  }
  return u;
}

inline DensityMatrix apply_gate(const DensityMatrix& rho, const GateOp& gate) {
  const int dim = static_cast<int>(rho.rows());
  int n = 0;
  while ((1 << n) < dim) ++n;
  if ((1 << n) != dim) throw std::invalid_argument("apply_gate: dimension is not 2^N");
  const Eigen::MatrixXcd u = gate_unitary(gate, n);
  return u * rho * u.adjoint();
}

// ---------------------------------------------------------------------------
// Lindblad evolution
// ---------------------------------------------------------------------------

// Rotating-frame generator: H = sum_i detuning_i * Z_i / 2 with collapse
// operators sqrt(Gamma1) sigma_- (physical relaxation |1> -> |0>) and
// sqrt(Gamma_phi/2) sigma_z per qubit.
struct LindbladSpec {
  std::vector<double> detunings;   // rad/s, one per qubit
  std::vector<double> gamma1;      // 1/s
  std::vector<double> gamma_phi;   // 1/s

  int n_qubits() const { return static_cast<int>(detunings.size()); }

  void validate() const {
    if (detunings.empty() || gamma1.size() != detunings.size() ||
        gamma_phi.size() != detunings.size())
      throw std::invalid_argument("lindblad: per-qubit arrays must have equal nonzero size");
    for (double g : gamma1)
      if (g < 0.0) throw std::invalid_argument("lindblad: gamma1 must be >= 0");
    for (double g : gamma_phi)
      if (g < 0.0) throw std::invalid_argument("lindblad: gamma_phi must be >= 0");
  }
};

namespace detail {

inline Eigen::MatrixXcd embed_single(const Eigen::Matrix2cd& op, int target, int n_qubits) {
  const int dim = 1 << n_qubits;
  const int mask = 1 << (n_qubits - 1 - target);
  Eigen::MatrixXcd full = Eigen::MatrixXcd::Zero(dim, dim);
  for (int b = 0; b < dim; ++b) {
    const int bit = (b & mask) ? 1 : 0;
    full(b, b) += op(bit, bit);
    if (op(bit, 1 - bit) != 0.0) full(b, b ^ mask) += op(bit, 1 - bit);
  }
  return full;
}

struct LindbladOperators {
  Eigen::MatrixXcd h;
  std::vector<Eigen::MatrixXcd> collapse;      // pre-scaled by sqrt(rate)
  std::vector<Eigen::MatrixXcd> collapse_sq;   // c^dag c
};

inline LindbladOperators build_operators(const LindbladSpec& spec) {
  spec.validate();
  const int n = spec.n_qubits();
  const int dim = 1 << n;
  Eigen::Matrix2cd sz, sminus;
  sz << 1, 0, 0, -1;
  sminus << 0, 1, 0, 0;  // |0><1|

  LindbladOperators ops;
  ops.h = Eigen::MatrixXcd::Zero(dim, dim);
  for (int q = 0; q < n; ++q) {
    ops.h += (spec.detunings[q] / 2.0) * embed_single(sz, q, n);
    if (spec.gamma1[q] > 0.0) {
      Eigen::MatrixXcd c = std::sqrt(spec.gamma1[q]) * embed_single(sminus, q, n);
      ops.collapse_sq.push_back(c.adjoint() * c);
      ops.collapse.push_back(std::move(c));
    }
    if (spec.gamma_phi[q] > 0.0) {
      Eigen::MatrixXcd c = std::sqrt(spec.gamma_phi[q] / 2.0) * embed_single(sz, q, n);
      ops.collapse_sq.push_back(c.adjoint() * c);
      ops.collapse.push_back(std::move(c));
    }
  }
  return ops;
}

inline Eigen::MatrixXcd lindblad_rhs(const LindbladOperators& ops, const Eigen::MatrixXcd& rho) {
  Eigen::MatrixXcd d = Complex(0, -1) * (ops.h * rho - rho * ops.h);
  for (std::size_t i = 0; i < ops.collapse.size(); ++i) {
    d += ops.collapse[i] * rho * ops.collapse[i].adjoint();
    d -= 0.5 * (ops.collapse_sq[i] * rho + rho * ops.collapse_sq[i]);
  }
  return d;
}

inline Eigen::MatrixXcd rk4_run(const LindbladOperators& ops, Eigen::MatrixXcd rho,
                                double tau, long n_steps) {
  const double h = tau / static_cast<double>(n_steps);
  for (long s = 0; s < n_steps; ++s) {
    const Eigen::MatrixXcd k1 = lindblad_rhs(ops, rho);
    const Eigen::MatrixXcd k2 = lindblad_rhs(ops, rho + (h / 2.0) * k1);
    const Eigen::MatrixXcd k3 = lindblad_rhs(ops, rho + (h / 2.0) * k2);
    const Eigen::MatrixXcd k4 = lindblad_rhs(ops, rho + h * k3);
    rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return rho;
}

}  // namespace detail

// Fixed-step RK4 with step-halving verification: the step count is doubled
// until two consecutive resolutions agree entrywise within tol.
inline DensityMatrix evolve(const DensityMatrix& rho, const LindbladSpec& spec, double tau,
                            double tol = 1e-8) {
  if (tau < 0.0) throw std::invalid_argument("evolve: tau must be >= 0");
  if (tau == 0.0) return rho;
  const auto ops = detail::build_operators(spec);

  double scale = 0.0;
  for (int q = 0; q < spec.n_qubits(); ++q)
    scale += std::fabs(spec.detunings[q]) + spec.gamma1[q] + spec.gamma_phi[q];
  long n = std::max<long>(16, static_cast<long>(std::ceil(tau * scale / 0.2)));

  Eigen::MatrixXcd coarse = detail::rk4_run(ops, rho, tau, n);
  constexpr long kMaxSteps = 1L << 22;
  while (true) {
    n *= 2;
    Eigen::MatrixXcd fine = detail::rk4_run(ops, rho, tau, n);
    const double diff = (fine - coarse).cwiseAbs().maxCoeff();
    if (diff < tol) {
      const double tr = fine.trace().real();
      if (std::fabs(tr - 1.0) > 1e-6)
        throw std::runtime_error("evolve: trace drift exceeds budget");
      fine /= tr;
      return fine;
    }
    if (n > kMaxSteps)
      throw std::runtime_error("evolve: step-halving failed to converge at minimum step");
    coarse = std::move(fine);
  }
}

// ---------------------------------------------------------------------------
// Sequences
// ---------------------------------------------------------------------------

inline DensityMatrix ground_state(int n_qubits) {
  const int dim = 1 << n_qubits;
  DensityMatrix rho = DensityMatrix::Zero(dim, dim);
  rho(0, 0) = 1.0;
  return rho;
}

namespace detail {

// Entangler of the two-qubit sequence: pi/2 rotations plus CP_10 reach
// (|00> + |11>)/sqrt(2) exactly.
inline std::vector<GateOp> entangler_2q() {
  return {Rotation{0, 'y', kPi / 2.0}, Rotation{1, 'y', kPi / 2.0},
          ConditionalPhase{0, 1, 1, 0}, Rotation{1, 'y', -kPi / 2.0}};
}

// Projector of the two-qubit sequence: CP_00 plus pi/2 rotations, mapping
// (|00> + e^{i phi}|11>)/sqrt(2) onto the separable state of Eq.-(1) form.
inline std::vector<GateOp> projector_2q() {
  return {Rotation{1, 'y', kPi / 2.0}, ConditionalPhase{0, 1, 0, 0},
          Rotation{1, 'y', kPi / 2.0}, Rotation{0, 'y', kPi / 2.0}};
}

// CNOT-equivalent (up to a phase absorbed by the projector) built from a CZ
// between control c and target t.
inline void append_cz_cnot(std::vector<GateOp>& seq, int c, int t) {
  seq.push_back(Rotation{t, 'y', kPi / 2.0});
  seq.push_back(ConditionalPhase{c, t, 1, 1});
  seq.push_back(Rotation{t, 'y', -kPi / 2.0});
}

inline std::vector<GateOp> entangler_ghz(int n_qubits) {
  std::vector<GateOp> seq{Rotation{0, 'y', kPi / 2.0}};
  for (int t = 1; t < n_qubits; ++t) append_cz_cnot(seq, 0, t);
  return seq;
}

// The GHZ entangler is self-inverse up to the first-qubit rotation; undoing it
// and flipping qubit 0 leaves P_{|10...0>} = (1 + cos(N dw tau))/2.
inline std::vector<GateOp> projector_ghz(int n_qubits) {
  std::vector<GateOp> seq;
  for (int t = n_qubits - 1; t >= 1; --t) append_cz_cnot(seq, 0, t);
  seq.push_back(Rotation{0, 'y', kPi / 2.0});
  return seq;
}

inline LindbladSpec uniform_spec(const SensorConfig& config, double flux) {
  const double dw = detuning(config.detuning_model, flux);
  const int n = config.n_qubits;
  return LindbladSpec{std::vector<double>(n, dw), std::vector<double>(n, config.gamma1),
                      std::vector<double>(n, config.gamma_phi)};
}

}  // namespace detail

// Full Fig.-2(a)-style two-qubit run: entangle, accumulate phase for tau under
// the Lindblad generator, project, read out all four populations.
inline std::array<double, 4> sequence_fig2a(const SensorConfig& config, double flux, double tau,
                                            double tol = 1e-9) {
  if (config.n_qubits != 2)
    throw std::invalid_argument("sequence_fig2a: requires a two-qubit sensor");
  DensityMatrix rho = ground_state(2);
  for (const auto& g : detail::entangler_2q()) rho = apply_gate(rho, g);
  rho = evolve(rho, detail::uniform_spec(config, flux), tau, tol);
  for (const auto& g : detail::projector_2q()) rho = apply_gate(rho, g);
  return {rho(0, 0).real(), rho(1, 1).real(), rho(2, 2).real(), rho(3, 3).real()};
}

// P_{|10...0>} for N in {1,2,3}; the first-principles counterpart of
// ramsey_probability, used only for cross-validation.
inline double ghz_projected_pattern(const SensorConfig& config, double flux, double tau,
                                    double tol = 1e-9) {
  const int n = config.n_qubits;
  if (n < 1 || n > kEngineMaxQubits)
    throw std::out_of_range("ghz_projected_pattern: engine supports N in {1,2,3}");
  if (n == 2) return sequence_fig2a(config, flux, tau, tol)[2];

  DensityMatrix rho = ground_state(n);
  if (n == 1) {
    rho = apply_gate(rho, Rotation{0, 'y', kPi / 2.0});
    rho = evolve(rho, detail::uniform_spec(config, flux), tau, tol);
    rho = apply_gate(rho, Rotation{0, 'y', kPi / 2.0});
    return rho(1, 1).real();
  }
  for (const auto& g : detail::entangler_ghz(n)) rho = apply_gate(rho, g);
  rho = evolve(rho, detail::uniform_spec(config, flux), tau, tol);
  for (const auto& g : detail::projector_ghz(n)) rho = apply_gate(rho, g);
  return rho(1 << (n - 1), 1 << (n - 1)).real();
}

// ---------------------------------------------------------------------------
// Physicality checks
// ---------------------------------------------------------------------------

inline double hermiticity_defect(const DensityMatrix& rho) {
  return (rho - rho.adjoint()).cwiseAbs().maxCoeff();
}

inline double trace_defect(const DensityMatrix& rho) {
  return std::fabs(rho.trace().real() - 1.0) + std::fabs(rho.trace().imag());
}

inline double min_eigenvalue(const DensityMatrix& rho) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
      ((rho + rho.adjoint()) / 2.0).eval());
  return es.eigenvalues().minCoeff();
}

inline bool is_physical(const DensityMatrix& rho, double trace_tol = 1e-9,
                        double herm_tol = 1e-10, double eig_tol = 1e-9) {
  return trace_defect(rho) < trace_tol && hermiticity_defect(rho) < herm_tol &&
         min_eigenvalue(rho) > -eig_tol;
}

inline double unitarity_defect(const Eigen::MatrixXcd& u) {
  return (u.adjoint() * u - Eigen::MatrixXcd::Identity(u.rows(), u.cols()))
      .cwiseAbs()
      .maxCoeff();
}

}  // namespace fluxpea
