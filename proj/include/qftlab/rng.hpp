#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "qftlab/core.hpp"

namespace qftlab {

// Philox4x32-10 counter-based generator. Each (key, counter) pair maps to
// four independent 32-bit words, so streams can be indexed by
// (seed, sample, draw) with no sequential state. This is what makes sample
// generation order-independent across threads while staying bit-reproducible.
struct Philox4x32 {
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }
};

// Sequential view of the counter-based stream for one (seed, sample) pair.
// Consumes one Philox block per two normal variates via Box-Muller, which
// keeps the draw count deterministic (no rejection).
class GaussianStream {
 public:
  GaussianStream(std::uint64_t seed, std::uint64_t sample)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        sample_(sample) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const auto words = Philox4x32::block(
        {static_cast<std::uint32_t>(draw_), static_cast<std::uint32_t>(draw_ >> 32),
         static_cast<std::uint32_t>(sample_), static_cast<std::uint32_t>(sample_ >> 32)},
        key_);
    ++draw_;
    const double u = to_unit(words[0], words[1]);
    const double v = to_unit(words[2], words[3]);
    const double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(kTwoPi * v);
    have_spare_ = true;
    return r * std::cos(kTwoPi * v);
  }

 private:
  // 53-bit uniform in (0, 1]; never 0, so log() above is safe.
  static double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits =
        ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1p-53;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t sample_ = 0;
  std::uint64_t draw_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace qftlab
