#include <doctest.h>

#include <cmath>
#include <complex>

#include "fluxpea/engine.hpp"
#include "fluxpea/fit.hpp"
#include "fluxpea/rng.hpp"

using namespace fluxpea;

namespace {

SensorConfig engine_sensor(int n, double g1 = 0.0, double gphi = 0.0) {
  SensorConfig s;
  s.n_qubits = n;
  s.gamma1 = g1;
  s.gamma_phi = gphi;
  s.tau_min = 4.1e-8;
  s.detuning_model = LinearDetuning{2.0 * kPi * 25.0e6, 0.3, 0.0};
  return s;
}

}  // namespace

TEST_CASE("gate unitarity") {
  RngStream rng(3, 0, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_u64() % 3);
    GateOp g;
    if (rng.uniform() < 0.5 || n == 1) {
      const char axes[] = {'x', 'y', 'z'};
      g = Rotation{static_cast<int>(rng.next_u64() % n), axes[rng.next_u64() % 3],
                   4.0 * kPi * (rng.uniform() - 0.5)};
    } else {
      g = ConditionalPhase{0, 1 + static_cast<int>(rng.next_u64() % (n - 1)),
                           static_cast<int>(rng.next_u64() % 2),
                           static_cast<int>(rng.next_u64() % 2)};
    }
    CHECK(unitarity_defect(gate_unitary(g, n)) < 1e-12);
  }
}

TEST_CASE("apply_gate basics") {
  // CP_10 leaves the |10> population untouched (phase only).
  DensityMatrix rho = DensityMatrix::Zero(4, 4);
  rho(2, 2) = 1.0;
  DensityMatrix out = apply_gate(rho, ConditionalPhase{0, 1, 1, 0});
  CHECK((out - rho).cwiseAbs().maxCoeff() < 1e-15);

  // CP_10 flips the sign of the |10> amplitude in a superposition.
  Eigen::VectorXcd psi(4);
  psi << 1.0 / std::sqrt(2.0), 0, 1.0 / std::sqrt(2.0), 0;
  DensityMatrix coh = psi * psi.adjoint();
  out = apply_gate(coh, ConditionalPhase{0, 1, 1, 0});
  CHECK(out(0, 2).real() == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(out(0, 0).real() == doctest::Approx(0.5).epsilon(1e-12));

  // Ry(pi) is the population flip.
  out = apply_gate(ground_state(1), Rotation{0, 'y', kPi});
  CHECK(out(1, 1).real() == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(apply_gate(ground_state(1), Rotation{1, 'y', 0.1}), std::out_of_range);
}

TEST_CASE("evolve against analytic channels") {
  DensityMatrix coh(2, 2);
  coh << 0.5, 0.5, 0.5, 0.5;  // |+><+|

  SUBCASE("pure dephasing") {
    const double gphi = 3.4e5;
    const double tau = 2e-6;
    LindbladSpec spec{{0.0}, {0.0}, {gphi}};
    DensityMatrix out = evolve(coh, spec, tau, 1e-10);
    CHECK(out(0, 1).real() == doctest::Approx(0.5 * std::exp(-gphi * tau)).epsilon(1e-7));
    CHECK(std::fabs(out(0, 1).imag()) < 1e-8);
  }

  SUBCASE("relaxation") {
    const double g1 = 2.0e5;
    const double tau = 3e-6;
    DensityMatrix excited = DensityMatrix::Zero(2, 2);
    excited(1, 1) = 1.0;
    LindbladSpec spec{{0.0}, {g1}, {0.0}};
    DensityMatrix out = evolve(excited, spec, tau, 1e-10);
    CHECK(out(1, 1).real() == doctest::Approx(std::exp(-g1 * tau)).epsilon(1e-7));
    CHECK(out(0, 0).real() == doctest::Approx(1.0 - std::exp(-g1 * tau)).epsilon(1e-7));
  }

  SUBCASE("free evolution phase") {
    const double dw = 2.0 * kPi * 1e6;
    const double tau = 7.3e-7;
    LindbladSpec spec{{dw}, {0.0}, {0.0}};
    DensityMatrix out = evolve(coh, spec, tau, 1e-10);
    // H = dw Z/2 rotates rho_01 as e^{-i dw tau} in this sign convention.
    const std::complex<double> want = 0.5 * std::exp(std::complex<double>(0.0, -dw * tau));
    CHECK(std::abs(out(0, 1) - want) < 1e-7);
  }
}

TEST_CASE("two-qubit sequence") {
  SUBCASE("entangler reaches the Bell state") {
    DensityMatrix rho = ground_state(2);
    for (const auto& g : detail::entangler_2q()) rho = apply_gate(rho, g);
    Eigen::VectorXcd bell(4);
    bell << 1.0 / std::sqrt(2.0), 0, 0, 1.0 / std::sqrt(2.0);
    CHECK((bell.adjoint() * rho * bell)(0).real() >= 1.0 - 1e-9);
  }

  SUBCASE("tau = 0 gives P10 = 1") {
    const auto probs = sequence_fig2a(engine_sensor(2), 0.33, 0.0);
    CHECK(probs[2] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(probs[0] + probs[1] + probs[2] + probs[3] == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("zero rates reproduce (1 + cos 2 dw tau)/2") {
    const SensorConfig s = engine_sensor(2);
    for (double flux : {0.305, 0.32}) {
      const double dw = detuning(s.detuning_model, flux);
      for (double tau : {1e-7, 4.7e-7, 1.3e-6}) {
        const auto probs = sequence_fig2a(s, flux, tau, 1e-10);
        CHECK(probs[2] ==
              doctest::Approx((1.0 + std::cos(2.0 * dw * tau)) / 2.0).epsilon(1e-7));
        CHECK(probs[0] + probs[1] + probs[2] + probs[3] == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("ghz projected pattern") {
  SUBCASE("N = 1 matches the closed form exactly") {
    const SensorConfig s = engine_sensor(1);
    for (double flux : {0.31, 0.42})
      for (double tau : {5e-8, 6.1e-7}) {
        const double closed = ramsey_probability(s, detuning(s.detuning_model, flux), tau);
        CHECK(ghz_projected_pattern(s, flux, tau, 1e-10) ==
              doctest::Approx(closed).epsilon(1e-7));
      }
  }

  SUBCASE("N = 3, zero rates: (1 + cos 3 dw tau)/2") {
    const SensorConfig s = engine_sensor(3);
    for (double flux : {0.303, 0.312}) {
      const double dw = detuning(s.detuning_model, flux);
      for (double tau : {9e-8, 5.2e-7}) {
        CHECK(ghz_projected_pattern(s, flux, tau, 1e-10) ==
              doctest::Approx((1.0 + std::cos(3.0 * dw * tau)) / 2.0).epsilon(1e-6));
      }
    }
  }

  SUBCASE("engine dimension cap") {
    SensorConfig s = engine_sensor(3);
    s.n_qubits = 4;
    CHECK_THROWS_AS(ghz_projected_pattern(s, 0.31, 1e-7), std::out_of_range);
  }
}

TEST_CASE("decoherent N = 2 pattern: frequency doubles, envelope is 2(G1/2+Gphi)") {
  const SensorConfig s = engine_sensor(2, 2.0e5, 3.4e4);
  const double dw = 2.0 * kPi * 1.0e6;
  const double flux = operating_flux(s.detuning_model) + dw / operating_slope(s.detuning_model);
  std::vector<double> ts, ys;
  for (int i = 0; i < 48; ++i) {
    const double tau = 3.0e-6 * (i + 1) / 48.0;
    ts.push_back(tau);
    ys.push_back(sequence_fig2a(s, flux, tau, 1e-9)[2]);
  }
  const auto fit = fit_damped_cosine(ts, ys, 2.0 * dw * 1.12, 6e5,
                                     {0.0, s.gamma1, 2.0 * s.gamma1});
  CHECK(fit.omega == doctest::Approx(2.0 * dw).epsilon(1e-3));
  CHECK(fit.decay_rate ==
        doctest::Approx(2.0 * (s.gamma1 / 2.0 + s.gamma_phi)).epsilon(0.10));
}

TEST_CASE("cptp invariants under random sequences") {
  RngStream rng(99, 0, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_u64() % 3);
    DensityMatrix rho = ground_state(n);
    LindbladSpec spec{std::vector<double>(n, 2.0 * kPi * 1e6 * (rng.uniform() - 0.5)),
                      std::vector<double>(n, 4e5 * rng.uniform()),
                      std::vector<double>(n, 4e5 * rng.uniform())};
    for (int step = 0; step < 3; ++step) {
      const char axes[] = {'x', 'y', 'z'};
      rho = apply_gate(rho, Rotation{static_cast<int>(rng.next_u64() % n),
                                     axes[rng.next_u64() % 3], 2.0 * kPi * rng.uniform()});
      rho = evolve(rho, spec, 3e-7 * rng.uniform(), 1e-10);
      CHECK(trace_defect(rho) < 1e-9);
      CHECK(hermiticity_defect(rho) < 1e-10);
      CHECK(min_eigenvalue(rho) > -1e-9);
    }
  }
}
