#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace creaseforge {

/// A random stream addressed by (master_seed, path).
///
/// Child streams are derived by hashing a label or an index into the parent
/// key, so the numbers a stream produces depend only on its path and never on
/// how many draws any other stream has made. This is what lets identities and
/// samples be generated in any order, on any number of threads, with
/// byte-identical results.
class RandomStream {
public:
  explicit RandomStream(std::uint64_t master_seed);

  RandomStream child(std::string_view label) const;
  RandomStream child(std::uint64_t index) const;

  std::uint64_t master_seed() const noexcept { return master_; }
  std::uint64_t key() const noexcept { return key_; }
  /// Human-readable path, e.g. "42/sample/7/3".
  const std::string& path() const noexcept { return path_; }

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  int uniform_int(int lo, int hi);       // inclusive
  double normal();
  Eigen::VectorXd normal_vector(Eigen::Index n);

private:
  RandomStream(std::uint64_t master, std::uint64_t key, std::string path);

  std::uint64_t master_;
  std::uint64_t key_;
  std::string path_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// splitmix64 finalizer; exposed for tests.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// 64-bit FNV-1a over the bytes of `text`.
std::uint64_t fnv1a64(std::string_view text) noexcept;

}  // namespace creaseforge
