#pragma once

#include <cmath>
#include <cstdint>

namespace lillab::rng {

// Philox4x64-10, the counter-based generator of Salmon et al., "Parallel
// random numbers: as easy as 1, 2, 3" (SC'11). Constants from Random123.
//
// The 128-bit key is (experiment seed, stream id), so every path owns an
// independent stream and results cannot depend on which thread ran it.
// Draw sequences are fixed per stream; nothing here touches global state.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream_id)
      : key0_(seed), key1_(stream_id) {}

  std::uint64_t seed() const { return key0_; }
  std::uint64_t id() const { return key1_; }

  std::uint64_t next_u64() {
    if (buf_pos_ == 4) refill();
    return buf_[buf_pos_++];
  }

  // Uniform on the open interval (0,1); safe under log().
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the spare is cached per stream so the
  // draw count stays a pure function of the call sequence.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double exponential(double rate) { return -std::log(uniform01()) / rate; }

  // Index draw from nonnegative weights summing to ~1 (CDF inversion).
  int categorical(const double* w, int n) {
    const double u = uniform01();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += w[i];
      if (u < acc) return i;
    }
    return n - 1;
  }

 private:
  static void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi,
                      std::uint64_t& lo) {
    const unsigned __int128 p =
        static_cast<unsigned __int128>(a) * static_cast<unsigned __int128>(b);
    hi = static_cast<std::uint64_t>(p >> 64);
    lo = static_cast<std::uint64_t>(p);
  }

  void refill() {
    constexpr std::uint64_t kM0 = 0xD2E7470EE14C6C93ull;
    constexpr std::uint64_t kM1 = 0xCA5A826395121157ull;
    constexpr std::uint64_t kW0 = 0x9E3779B97F4A7C15ull;
    constexpr std::uint64_t kW1 = 0xBB67AE8584CAA73Bull;
    std::uint64_t x0 = ctr_[0], x1 = ctr_[1], x2 = ctr_[2], x3 = ctr_[3];
    std::uint64_t k0 = key0_, k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      std::uint64_t hi0, lo0, hi1, lo1;
      mulhilo(kM0, x0, hi0, lo0);
      mulhilo(kM1, x2, hi1, lo1);
      x0 = hi1 ^ x1 ^ k0;
      x1 = lo1;
      x2 = hi0 ^ x3 ^ k1;
      x3 = lo0;
      k0 += kW0;
      k1 += kW1;
    }
    buf_[0] = x0;
    buf_[1] = x1;
    buf_[2] = x2;
    buf_[3] = x3;
    buf_pos_ = 0;
    if (++ctr_[0] == 0 && ++ctr_[1] == 0 && ++ctr_[2] == 0) ++ctr_[3];
  }

  std::uint64_t key0_, key1_;
  std::uint64_t ctr_[4] = {0, 0, 0, 0};
  std::uint64_t buf_[4] = {0, 0, 0, 0};
  int buf_pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream-id layout: low 48 bits index the path, high 16 bits name the purpose
// lane, so distinct estimators in one experiment never share draws.
constexpr std::uint64_t stream_id(std::uint64_t lane, std::uint64_t path_index) {
  return (lane << 48) | (path_index & 0xFFFFFFFFFFFFull);
}

namespace lane {
constexpr std::uint64_t kPaths = 0;        // generic path ensembles
constexpr std::uint64_t kSigmaMart = 1;    // martingale variance estimate
constexpr std::uint64_t kSigmaGrowth = 2;  // growth variance estimate
constexpr std::uint64_t kTransport = 3;    // empirical W1 sampling
constexpr std::uint64_t kMoments = 4;      // moment certification sampling
constexpr std::uint64_t kCltProxy = 5;     // CLT proxy ensembles
constexpr std::uint64_t kSelfTest = 6;     // calibration fixtures
}  // namespace lane

}  // namespace lillab::rng
