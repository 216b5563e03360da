#pragma once

#include <opml/hash.hpp>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

namespace opml::ml {

class ShapeError : public Error {
 public:
  using Error::Error;
};

class QuantizationRangeError : public Error {
 public:
  using Error::Error;
};

/// Q15.16 fixed-point tensor: value = raw / 2^16, row-major.
struct FixedTensor {
  static constexpr unsigned frac = 16;

  std::vector<std::uint32_t> shape;
  std::vector<std::int32_t> data;

  FixedTensor() = default;
  FixedTensor(std::vector<std::uint32_t> s, std::vector<std::int32_t> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape.empty()) throw ShapeError("tensor rank must be at least 1");
    if (element_count(shape) != data.size()) throw ShapeError("tensor data length does not match its shape");
  }

  static FixedTensor zeros(std::vector<std::uint32_t> s) {
    const std::size_t n = element_count(s);
    return FixedTensor(std::move(s), std::vector<std::int32_t>(n, 0));
  }

  static std::size_t element_count(const std::vector<std::uint32_t>& s) {
    std::uint64_t n = 1;
    for (auto d : s) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive");
      n *= d;
      if (n > (std::uint64_t{1} << 32)) throw ShapeError("tensor too large");
    }
    return static_cast<std::size_t>(n);
  }

  std::size_t rank() const { return shape.size(); }
  std::size_t size() const { return data.size(); }
  std::uint32_t rows() const { return shape.at(0); }
  std::uint32_t cols() const { return shape.at(1); }
  std::int32_t at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  bool operator==(const FixedTensor&) const = default;

  std::size_t serialized_size() const { return 4 + 4 * shape.size() + 4 * data.size(); }

  /// u32 rank, u32 dims[rank], i32 data[...], all little-endian.
  Bytes serialize() const {
    Bytes out;
    out.reserve(serialized_size());
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put_u32(out, d);
    for (auto v : data) put_u32(out, static_cast<std::uint32_t>(v));
    return out;
  }

  static FixedTensor deserialize(ByteReader& in) {
    const std::size_t at = in.offset();
    const std::uint32_t rank = in.u32();
    if (rank == 0 || rank > 8) throw ParseError(at, "tensor rank out of range");
    std::vector<std::uint32_t> shape(rank);
    for (auto& d : shape) {
      const std::size_t dat = in.offset();
      d = in.u32();
      if (d == 0) throw ParseError(dat, "zero tensor dimension");
    }
    std::uint64_t n = 1;
    for (auto d : shape) {
      n *= d;
      if (n * 4 > in.remaining()) throw ParseError(in.offset(), "tensor data truncated");
    }
    std::vector<std::int32_t> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = static_cast<std::int32_t>(in.u32());
    return FixedTensor(std::move(shape), std::move(data));
  }

  static FixedTensor deserialize(ByteView bytes) {
    ByteReader in(bytes);
    FixedTensor t = deserialize(in);
    in.expect_end();
    return t;
  }
};

/// raw = round-half-away-from-zero(value * 2^frac). |value| must be < 2^(31-frac).
inline std::int32_t quantize_value(double value, unsigned frac = FixedTensor::frac) {
  const double limit = std::ldexp(1.0, 31 - static_cast<int>(frac));
  if (!std::isfinite(value) || std::fabs(value) >= limit) {
    throw QuantizationRangeError("value " + std::to_string(value) + " outside fixed-point range");
  }
  return static_cast<std::int32_t>(std::round(std::ldexp(value, static_cast<int>(frac))));
}

inline double dequantize_value(std::int32_t raw, unsigned frac = FixedTensor::frac) {
  return std::ldexp(static_cast<double>(raw), -static_cast<int>(frac));
}

inline FixedTensor quantize(std::span<const double> values, std::vector<std::uint32_t> shape) {
  std::vector<std::int32_t> raw;
  raw.reserve(values.size());
  for (double v : values) raw.push_back(quantize_value(v));
  return FixedTensor(std::move(shape), std::move(raw));
}

inline std::vector<double> dequantize(const FixedTensor& t) {
  std::vector<double> out;
  out.reserve(t.size());
  for (auto v : t.data) out.push_back(dequantize_value(v));
  return out;
}

}  // namespace opml::ml
