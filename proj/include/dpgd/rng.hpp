#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace dpgd {

/// Philox 4x32-10 counter-based generator (Salmon et al., SC 2011).
///
/// Stateless: each 128-bit counter block maps to four 32-bit words under a
/// 64-bit key. Substreams are addressed by (stream, step, block) counter
/// fields, so trials and steps draw from independent, scheduling-invariant
/// streams derived from one master seed.
struct Philox4x32 {
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  static std::array<std::uint32_t, 4> block(std::uint64_t key,
                                            std::array<std::uint32_t, 4> ctr) {
    std::uint32_t k0 = static_cast<std::uint32_t>(key);
    std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
    for (int round = 0; round < 10; ++round) {
      std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      std::array<std::uint32_t, 4> next;
      next[0] = static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k0;
      next[1] = static_cast<std::uint32_t>(p1);
      next[2] = static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k1;
      next[3] = static_cast<std::uint32_t>(p0);
      ctr = next;
      k0 += kW0;
      k1 += kW1;
    }
    return ctr;
  }
};

/// Sequential draws from the substream (seed; stream, step). Blocks are
/// consumed in order; a fixed counter layout keeps every (trial, step)
/// reproducible regardless of thread scheduling.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t step = 0)
      : key_(seed ^ 0x5851F42D4C957F2Dull), hi_(stream), mid_(step) {}

  /// Uniform double in (0, 1].
  double uniform() {
    refill_if_needed();
    std::uint64_t bits =
        (static_cast<std::uint64_t>(buf_[pos_]) << 32) | buf_[pos_ + 1];
    pos_ += 2;
    return 1.0 - static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  void fill_normal(double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = normal();
  }

 private:
  // Counter layout: (block, step, stream lo, stream hi).
  void refill_if_needed() {
    if (pos_ + 1 < 4) return;
    buf_ = Philox4x32::block(key_, {static_cast<std::uint32_t>(block_),
                                    static_cast<std::uint32_t>(mid_),
                                    static_cast<std::uint32_t>(hi_),
                                    static_cast<std::uint32_t>(hi_ >> 32)});
    ++block_;
    pos_ = 0;
  }

  std::uint64_t key_;
  std::uint64_t hi_;
  std::uint64_t mid_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  std::size_t pos_ = 4;
  double spare_ = 0;
  bool have_spare_ = false;
};

}  // namespace dpgd
