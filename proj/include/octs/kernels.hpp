#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace octs {

// Half-sample symmetric reflection into [0, n): ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
// Periodic with period 2n, so arbitrarily large offsets are valid.
inline std::size_t mirror_index(std::int64_t i, std::size_t n) {
  const auto period = static_cast<std::int64_t>(2 * n);
  std::int64_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::int64_t>(n)) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

// Unnormalized sampled Gaussian exp(-k^2 / (2 sigma^2)) for k in [-radius, radius].
// sigma <= 0 yields the single tap {1}.
inline std::vector<double> gaussian_taps(double sigma, std::size_t radius) {
  if (sigma <= 0.0) return {1.0};
  std::vector<double> taps(2 * radius + 1);
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const double k = static_cast<double>(i) - static_cast<double>(radius);
    taps[i] = std::exp(-k * k / (2.0 * sigma * sigma));
  }
  return taps;
}

inline std::vector<double> normalized(std::vector<double> taps) {
  double s = 0.0;
  for (double t : taps) s += t;
  for (double& t : taps) t /= s;
  return taps;
}

} // namespace octs
