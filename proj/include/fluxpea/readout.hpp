#pragma once

#include <cmath>
#include <stdexcept>

#include "fluxpea/rng.hpp"

namespace fluxpea {

// Single-shot dispersive readout as a two-component Gaussian mixture.
// Outcomes are normalized to the |0>/|1> separation, so sigma = 1.5 means
// heavily overlapping distributions and many shots per decision.
struct ReadoutModel {
  double mu0 = 0.0;
  double mu1 = 1.0;
  double sigma0 = 1.5;
  double sigma1 = 1.5;

  void validate() const {
    if (!(sigma0 > 0.0) || !(sigma1 > 0.0))
      throw std::invalid_argument("readout: sigmas must be > 0");
    if (mu0 == mu1) throw std::invalid_argument("readout: mu0 and mu1 must differ");
  }
};

inline double gaussian_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * 2.5066282746310005);
}

inline double sample_shot(double p1, const ReadoutModel& readout, RngStream& rng) {
  if (p1 < 0.0 || p1 > 1.0) throw std::invalid_argument("sample_shot: p1 outside [0,1]");
  const bool excited = rng.uniform() < p1;
  const double z = rng.normal();
  return excited ? readout.mu1 + readout.sigma1 * z : readout.mu0 + readout.sigma0 * z;
}

inline double shot_likelihood(double x, double p1, const ReadoutModel& readout) {
  return p1 * gaussian_pdf(x, readout.mu1, readout.sigma1) +
         (1.0 - p1) * gaussian_pdf(x, readout.mu0, readout.sigma0);
}

inline double shot_loglikelihood(double x, double p1, const ReadoutModel& readout) {
  const double v = shot_likelihood(x, p1, readout);
  return std::log(v > 1e-300 ? v : 1e-300);
}

}  // namespace fluxpea
