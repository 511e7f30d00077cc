#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace evograd {

/// Seeded random stream. Independent streams are derived per purpose
/// ("population", "data", "init", ...) by hashing the purpose name with
/// FNV-1a and mixing it into the parent seed with SplitMix64, so that e.g.
/// drawing more population noise never shifts the data stream.
/// The engine is std::mt19937_64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  Rng split(std::string_view purpose) const;
  Rng split(std::uint64_t index) const;
  std::uint64_t seed() const { return seed_; }

  double normal() { return normal_(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view s);

}  // namespace evograd
