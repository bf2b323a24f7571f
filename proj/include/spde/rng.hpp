#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace spde {

// Philox4x32-10 (Salmon et al., SC'11). Stateless: output depends only on
// (key, counter), so streams can be addressed directly by (path, step, block).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  explicit Philox4x32(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  Counter operator()(Counter c) const {
    Key k = key_;
    for (int r = 0; r < 10; ++r) {
      c = round(c, k);
      k[0] += 0x9E3779B9u;
      k[1] += 0xBB67AE85u;
    }
    return c;
  }

 private:
  static Counter round(const Counter& c, const Key& k) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(0xD2511F53u) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(0xCD9E8D57u) * c[2];
    return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
            static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
  }
  Key key_;
};

enum class Stream : std::uint32_t { Noise = 0, Initial = 1, Test = 2, Ensemble = 3 };

// Standard normals addressed by (path, step, index) within a stream.
class CounterNormal {
 public:
  explicit CounterNormal(std::uint64_t seed, Stream s = Stream::Noise) : gen_(seed), stream_(static_cast<std::uint32_t>(s)) {}

  void fill(std::uint64_t path, std::uint64_t step, double* out, std::size_t n) const {
    for (std::size_t j = 0; j < n; j += 2) {
      const auto r = gen_({static_cast<std::uint32_t>(j / 2), static_cast<std::uint32_t>(step),
                           static_cast<std::uint32_t>(path),
                           static_cast<std::uint32_t>(path >> 32) ^ (stream_ << 24) ^ static_cast<std::uint32_t>(step >> 32)});
      const double u1 = to_unit(r[0], r[1]);
      const double u2 = to_unit(r[2], r[3]);
      const double rad = std::sqrt(-2.0 * std::log(u1));
      const double th = 2.0 * std::numbers::pi * u2;
      out[j] = rad * std::cos(th);
      if (j + 1 < n) out[j + 1] = rad * std::sin(th);
    }
  }

  double uniform(std::uint64_t path, std::uint64_t step, std::uint32_t index) const {
    const auto r = gen_({index, static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(path),
                         static_cast<std::uint32_t>(path >> 32) ^ (stream_ << 24) ^ 0x00800000u});
    return to_unit(r[0], r[1]);
  }

 private:
  // (0,1], 53 bits
  static double to_unit(std::uint32_t a, std::uint32_t b) {
    const std::uint64_t x = ((static_cast<std::uint64_t>(a) << 32) | b) >> 11;
    return (static_cast<double>(x) + 1.0) * 0x1.0p-53;
  }
  Philox4x32 gen_;
  std::uint32_t stream_;
};

}  // namespace spde
