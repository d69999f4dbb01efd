#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cgnn {

using Rng = std::mt19937_64;

// Derives independent per-purpose generators from a single run seed. Streams
// are keyed by name, so adding a new consumer never shifts the draws of an
// existing one.
class SeedStreams {
 public:
  explicit SeedStreams(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t SubSeed(std::string_view name) const;
  Rng Stream(std::string_view name) const { return Rng(SubSeed(name)); }
  SeedStreams Child(std::string_view name) const { return SeedStreams(SubSeed(name)); }

 private:
  std::uint64_t seed_;
};

std::uint64_t Fnv1a64(std::string_view bytes);
std::uint64_t SplitMix64(std::uint64_t x);

}  // namespace cgnn
