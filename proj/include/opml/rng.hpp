#pragma once

// Seeded randomness. A stream is identified by (seed, label): its generator is
// std::mt19937_64 seeded with the first 8 bytes (little-endian) of
// H(seed as u64 LE || label). Bounded integers use rejection sampling on the
// raw 64-bit output, so results do not depend on the standard library's
// distribution implementations.

#include <opml/hash.hpp>

#include <random>
#include <string>
#include <string_view>

namespace opml {

class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view label) : seed_(seed), label_(label), engine_(derive(seed, label)) {}

  /// Independent stream labelled "<parent label>/<label>".
  Rng split(std::string_view label) const { return Rng(seed_, label_ + "/" + std::string(label)); }

  std::uint64_t seed() const { return seed_; }
  const std::string& label() const { return label_; }

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw RangeError("Rng::below: empty range");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Uniform in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return unit() < p; }

 private:
  static std::uint64_t derive(std::uint64_t seed, std::string_view label) {
    Bytes msg;
    put_u64(msg, seed);
    msg.insert(msg.end(), label.begin(), label.end());
    const Digest d = hash_bytes(msg);
    std::uint64_t s = 0;
    for (int i = 0; i < 8; ++i) s |= static_cast<std::uint64_t>(d.bytes[i]) << (8 * i);
    return s;
  }

  std::uint64_t seed_;
  std::string label_;
  std::mt19937_64 engine_;
};

}  // namespace opml
