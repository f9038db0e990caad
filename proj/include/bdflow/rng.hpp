#pragma once

#include <array>
#include <cstdint>

namespace bdflow {

/// Philox4x32-10 counter-based generator.
///
/// Output block i is Philox4x32-10(counter = (i, stream), key = seed), so a
/// (seed, stream) pair names the same sequence on every platform. Uniforms use
/// the top 53 bits of a 64-bit word; normals use Box-Muller on two uniforms.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> counter,
                                            std::array<std::uint32_t, 2> key);

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

/// Mixes a base seed with an index (trial number, case id) into an independent seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace bdflow
