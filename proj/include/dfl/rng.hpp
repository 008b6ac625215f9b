#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace dfl {

// Philox4x32-10 (Salmon et al., SC'11). Counter-based: block i of a stream is a pure
// function of (key, counter), so paths never share state across threads.
struct Philox4x32 {
  using ctr_type = std::array<std::uint32_t, 4>;
  using key_type = std::array<std::uint32_t, 2>;

  static constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
  static constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;

  static ctr_type round(ctr_type c, key_type k) {
    const std::uint64_t p0 = std::uint64_t(M0) * c[0];
    const std::uint64_t p1 = std::uint64_t(M1) * c[2];
    return {std::uint32_t(p1 >> 32) ^ c[1] ^ k[0], std::uint32_t(p1), std::uint32_t(p0 >> 32) ^ c[3] ^ k[1],
            std::uint32_t(p0)};
  }

  static ctr_type apply(ctr_type c, key_type k) {
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        k[0] += W0;
        k[1] += W1;
      }
      c = round(c, k);
    }
    return c;
  }
};

enum class StreamRole : std::uint32_t { chain = 1, noise = 2 };

// One independent stream per (master seed, path index, role).
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t path, StreamRole role)
      : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)},
        base_{0u, std::uint32_t(role), std::uint32_t(path), std::uint32_t(path >> 32)} {}

  std::uint32_t next_u32() {
    if (pos_ == 4) refill();
    return buf_[pos_++];
  }

  // Uniform on the open interval (0,1) with 53 random bits.
  double uniform() {
    const std::uint64_t a = next_u32() >> 5, b = next_u32() >> 6;
    return (double(a * 67108864u + b) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  // Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double th = 6.283185307179586 * uniform();
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

 private:
  void refill() {
    auto c = base_;
    c[0] = block_++;
    buf_ = Philox4x32::apply(c, key_);
    pos_ = 0;
  }

  Philox4x32::key_type key_;
  Philox4x32::ctr_type base_;
  Philox4x32::ctr_type buf_{};
  std::uint32_t block_ = 0;
  int pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dfl
