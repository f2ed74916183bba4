#pragma once

// Counter-based random numbers.
//
// Philox4x32-10 maps a 128-bit counter and a 64-bit key to 128 random bits.
// A Stream fixes the key and walks the counter, so any (seed, stream id)
// pair names a reproducible sequence that does not depend on which worker
// draws it or in what order.
//
// Stream splitting: replication r of an experiment with seed s uses key
//   replication_seed(s, r) = s ^ splitmix64(r)
// and grid point g inside that replication uses the high counter word g.

#include <array>
#include <cstdint>
#include <limits>

namespace krr {

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

inline std::uint64_t replication_seed(std::uint64_t seed, std::uint64_t rep) noexcept {
  return seed ^ splitmix64(rep);
}

class Stream {
 public:
  using result_type = std::uint32_t;

  explicit Stream(std::uint64_t key, std::uint64_t stream_id = 0) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;
  std::uint64_t next_u64() noexcept;
  /// Uniform on the open interval (0, 1); 53-bit resolution.
  double uniform() noexcept;
  /// Standard normal (Box-Muller, pairs cached).
  double normal() noexcept;

 private:
  void refill() noexcept;

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> ctr_{};
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace krr
