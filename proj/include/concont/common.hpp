// Shared types, error classes and diagnostics for the concont workbench.
#pragma once

#include <Eigen/Dense>

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace concont {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Invalid user-supplied configuration (bad bounds, inconsistent flags).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Shape or cache mismatch between tensors that must agree.
struct StructuralError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// NaN or inf showed up where a finite value is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed file contents.
struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Degeneracy warnings are counted process-wide rather than thrown; callers
// that care can snapshot the counters before and after an operation.
enum class Warning : std::size_t {
  zero_projection = 0,  // pre-normalization projection was the zero vector
  empty_candidate_mass, // masked probability sum was 0 in the p-score
  log_saturation,       // a log argument was clamped at kLogFloor
  count
};

inline constexpr double kLogFloor = 1e-12;

namespace detail {
inline std::array<std::atomic<std::uint64_t>,
                  static_cast<std::size_t>(Warning::count)>&
warning_counters() {
  static std::array<std::atomic<std::uint64_t>,
                    static_cast<std::size_t>(Warning::count)>
      counters{};
  return counters;
}
}  // namespace detail

inline void warn(Warning w) {
  detail::warning_counters()[static_cast<std::size_t>(w)].fetch_add(
      1, std::memory_order_relaxed);
}

inline std::uint64_t warning_count(Warning w) {
  return detail::warning_counters()[static_cast<std::size_t>(w)].load(
      std::memory_order_relaxed);
}

/// -ln(x) with x clamped below at kLogFloor; clamping is reported.
inline double neg_log_clamped(double x) {
  if (!(x > kLogFloor)) {
    warn(Warning::log_saturation);
    x = kLogFloor;
  }
  return -std::log(x);
}

/// splitmix64 finalizer; used to derive independent seeds for sub-streams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0,
                              std::uint64_t c = 0) {
  auto step = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return step(step(step(a) ^ b) ^ c);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace concont
