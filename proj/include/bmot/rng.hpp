#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace bmot {

// xoshiro256++ stream keyed by a 64-bit seed. Streams are split by index:
// split(i) depends only on the key of the parent and i, never on how many
// numbers the parent has produced, so parallel consumers can be handed
// reproducible independent streams.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  Rng split(std::uint64_t index) const;

  result_type operator()();

  // Uniform draw on the open interval (0, 1).
  double uniform();

  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  std::uint64_t key() const { return key_; }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

 private:
  std::uint64_t key_;
  std::array<std::uint64_t, 4> state_;
};

std::uint64_t splitmix64(std::uint64_t& x);

}  // namespace bmot
