#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace fluxpea {

struct DampedCosineFit {
  double omega = 0.0;      // rad/s
  double decay_rate = 0.0; // 1/s envelope rate
  double amplitude = 0.0;
  double residual = 0.0;   // RMS of the fit residual
};

// Least-squares fit of y(t) = sum_m c_m e^{-b_m t} + e^{-g t}(a cos wt + b sin wt)
// with known baseline decay rates b_m. (w, g) are scanned by variable
// projection: for each candidate the remaining amplitudes are a linear solve.
// The scan starts from the provided guesses and refines geometrically, which
// is plenty for the 0.1% / 10% verification tolerances.
inline DampedCosineFit fit_damped_cosine(const std::vector<double>& ts,
                                         const std::vector<double>& ys,
                                         double omega_guess, double decay_guess,
                                         const std::vector<double>& baseline_rates = {0.0}) {
  if (ts.size() != ys.size() || ts.size() < 8)
    throw std::invalid_argument("fit_damped_cosine: need >= 8 samples");
  const int n = static_cast<int>(ts.size());
  const int nb = static_cast<int>(baseline_rates.size());

  const auto sse = [&](double w, double g, double* amp_out) {
    Eigen::MatrixXd a(n, nb + 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      const double t = ts[i];
      for (int m = 0; m < nb; ++m) a(i, m) = std::exp(-baseline_rates[m] * t);
      const double env = std::exp(-g * t);
      a(i, nb) = env * std::cos(w * t);
      a(i, nb + 1) = env * std::sin(w * t);
      y(i) = ys[i];
    }
    Eigen::VectorXd c = a.colPivHouseholderQr().solve(y);
    if (amp_out) *amp_out = std::hypot(c(nb), c(nb + 1));
    return (a * c - y).squaredNorm();
  };

  double w = omega_guess, g = decay_guess;
  double w_half = 0.2 * omega_guess;
  double g_half = std::max(0.9 * decay_guess, 0.05 * omega_guess);
  for (int round = 0; round < 12; ++round) {
    double best = sse(w, g, nullptr);
    double bw = w, bg = g;
    for (int iw = -8; iw <= 8; ++iw) {
      for (int ig = -8; ig <= 8; ++ig) {
        const double cw = w + w_half * iw / 8.0;
        const double cg = std::max(0.0, g + g_half * ig / 8.0);
        const double s = sse(cw, cg, nullptr);
        if (s < best) {
          best = s;
          bw = cw;
          bg = cg;
        }
      }
    }
    w = bw;
    g = bg;
    w_half *= 0.35;
    g_half *= 0.35;
  }

  DampedCosineFit fit;
  fit.omega = w;
  fit.decay_rate = g;
  fit.residual = std::sqrt(sse(w, g, &fit.amplitude) / n);
  return fit;
}

// Least-squares slope of log(y) vs log(x).
inline double scaling_exponent(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2)
    throw std::invalid_argument("scaling_exponent: need >= 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0))
      throw std::invalid_argument("scaling_exponent: values must be positive");
    const double lx = std::log(x), ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double m = static_cast<double>(points.size());
  const double denom = m * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("scaling_exponent: degenerate abscissae");
  return (m * sxy - sx * sy) / denom;
}

}  // namespace fluxpea
