#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>

namespace gul {

/// Dense matrices are row-major throughout: feature files and model files
/// store row-major float64, and the sparse-dense products walk rows.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Error types. The CLI maps each to a fixed process exit code; library code
// throws them directly so callers can distinguish failure classes.
// ---------------------------------------------------------------------------

/// Invalid arguments, malformed config, out-of-range parameters. Exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite objective. Carries the epoch index. Exit code 2.
struct DivergenceError : std::runtime_error {
  int epoch;
  DivergenceError(const std::string& msg, int epoch_index)
      : std::runtime_error(msg), epoch(epoch_index) {}
};

/// Incompatible shapes or an unlearning strategy applied to a model kind it
/// does not support. Exit code 3.
struct IncompatibilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A deletion request that would leave no remaining nodes. Exit code 4.
struct EmptyRemainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unreadable or unwritable files, malformed file contents. Exit code 5.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Seeding. All randomness flows from one root seed; each component derives
// its own stream with split_seed so adding draws in one component never
// shifts another component's stream.
// ---------------------------------------------------------------------------

/// SplitMix64 step; used only to decorrelate derived seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministically derive a component seed from the root seed and a tag.
inline std::uint64_t split_seed(std::uint64_t root, std::uint64_t tag) {
  return splitmix64(splitmix64(root) ^ splitmix64(tag));
}

// Component tags for split_seed.
namespace seed_tag {
constexpr std::uint64_t csbm = 1;
constexpr std::uint64_t train = 2;
constexpr std::uint64_t delete_pick = 3;
constexpr std::uint64_t noise = 4;
constexpr std::uint64_t constants = 5;
constexpr std::uint64_t mlp = 6;
constexpr std::uint64_t jitter = 7;
constexpr std::uint64_t split = 8;
}  // namespace seed_tag

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

// ---------------------------------------------------------------------------
// Logging. Level comes from the UNLEARN_LOG environment variable
// (error | info | debug); unset behaves like error.
// ---------------------------------------------------------------------------

enum class LogLevel { error = 0, info = 1, debug = 2 };

LogLevel log_level();
void log_error(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace gul
