#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "fluxpea/model.hpp"
#include "fluxpea/version.hpp"

namespace fluxpea {

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string format_g(double v, int digits = 15) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

inline std::string format_sci(double v, int digits = 12) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*e", digits, v);
  return buf;
}

// Comment header carried by every output file; enough to reproduce the file
// bit-identically.
inline void write_file_header(std::ostream& os, const std::string& config_json,
                              std::uint64_t seed) {
  os << "# fluxpea " << kVersion << "\n";
  os << "# config: " << config_json << "\n";
  os << "# seed: " << seed << "\n";
  os << "# config_hash: " << hex64(fnv1a64(config_json)) << "\n";
}

// Calibration pattern: header row of delay times, first column flux, cells
// with >= 12 significant digits.
inline void write_pattern_csv(std::ostream& os, const FluxGrid& grid,
                              const std::vector<double>& taus,
                              const std::vector<std::vector<double>>& pattern) {
  os << "flux_phi0";
  for (double tau : taus) os << "," << format_sci(tau);
  os << "\n";
  for (int i = 0; i < grid.count; ++i) {
    os << format_g(grid.value(i), 15);
    for (double p : pattern[i]) os << "," << format_g(p, 14);
    os << "\n";
  }
}

}  // namespace fluxpea
