#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qftlab {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846264338327950288;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kFourPi = 4.0 * kPi;

// Thrown when a run becomes numerically unreliable (ESS floor, truncation
// cap, loss of positivity). CLI maps this to exit code 3.
class NumericalHealthError : public std::runtime_error {
 public:
  explicit NumericalHealthError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown on malformed experiment configurations. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Volume of the unit d-sphere for the dimensions supported here.
inline double sphere_volume(int dim) {
  require(dim == 1 || dim == 2, "sphere_volume: dimension must be 1 or 2");
  return dim == 1 ? kTwoPi : kFourPi;
}

// Deterministic summation with a fixed pairwise reduction order. All
// estimator reductions go through this so results are reproducible
// independent of threading and accumulation chunking.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double pairwise_sum(const std::vector<double>& v) {
  return pairwise_sum(std::span<const double>(v));
}

inline double sqr(double x) { return x * x; }

}  // namespace qftlab
