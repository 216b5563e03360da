#pragma once

// Digest type and the hash primitive shared by every commitment in the
// library. The algorithm is selected once per process (OPML_HASH) and its id
// is written into every serialized artifact so mismatched runs are detected.

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace opml {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline std::string to_hex(ByteView data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(2 * data.size(), '0');
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[2 * i] = kDigits[data[i] >> 4];
    out[2 * i + 1] = kDigits[data[i] & 0xF];
  }
  return out;
}

/// Lowercase or uppercase hex, even length; errors carry the character offset.
inline Bytes from_hex_bytes(std::string_view text) {
  if (text.size() % 2 != 0) throw ParseError(text.size(), "odd-length hex string");
  auto nibble = [&](std::size_t pos) -> std::uint8_t {
    const char c = text[pos];
    if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
    throw ParseError(pos, "invalid hex character");
  };
  Bytes out(text.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint8_t>((nibble(2 * i) << 4) | nibble(2 * i + 1));
  return out;
}

struct Digest {
  std::array<std::uint8_t, 32> bytes{};

  auto operator<=>(const Digest&) const = default;

  bool is_zero() const noexcept {
    return std::all_of(bytes.begin(), bytes.end(), [](std::uint8_t b) { return b == 0; });
  }

  std::string hex() const { return to_hex(bytes); }

  static Digest from_hex(std::string_view text) {
    if (text.size() >= 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) text.remove_prefix(2);
    if (text.size() != 64) throw ParseError(0, "digest hex must be 64 characters");
    const Bytes b = from_hex_bytes(text);
    Digest d;
    std::copy(b.begin(), b.end(), d.bytes.begin());
    return d;
  }
};

enum class HashAlgorithm : std::uint8_t { Sha256 = 1, Sha3_256 = 2 };

inline std::string_view hash_name(HashAlgorithm alg) {
  return alg == HashAlgorithm::Sha256 ? "sha256" : "sha3-256";
}

namespace detail {

inline HashAlgorithm algorithm_from_env() {
  const char* env = std::getenv("OPML_HASH");
  if (env == nullptr || *env == '\0') return HashAlgorithm::Sha256;
  std::string_view v(env);
  if (v == "sha256") return HashAlgorithm::Sha256;
  if (v == "sha3-256" || v == "sha3") return HashAlgorithm::Sha3_256;
  throw Error("OPML_HASH: unknown hash '" + std::string(v) + "' (expected sha256 or sha3-256)");
}

inline const EVP_MD* evp_for(HashAlgorithm alg) {
  static const EVP_MD* sha256 = EVP_sha256();
  static const EVP_MD* sha3 = EVP_sha3_256();
  return alg == HashAlgorithm::Sha256 ? sha256 : sha3;
}

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const noexcept { EVP_MD_CTX_free(ctx); }
};

inline EVP_MD_CTX* thread_ctx() {
  thread_local std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx(EVP_MD_CTX_new());
  return ctx.get();
}

}  // namespace detail

/// Process-wide hash selection; read from OPML_HASH on first use.
inline HashAlgorithm active_hash() {
  static const HashAlgorithm alg = detail::algorithm_from_env();
  return alg;
}

/// Incremental hasher over the active algorithm.
class Hasher {
 public:
  Hasher() : ctx_(detail::thread_ctx()) {
    if (EVP_DigestInit_ex(ctx_, detail::evp_for(active_hash()), nullptr) != 1) throw Error("digest init failed");
  }
  Hasher(const Hasher&) = delete;
  Hasher& operator=(const Hasher&) = delete;

  Hasher& update(ByteView data) {
    if (!data.empty() && EVP_DigestUpdate(ctx_, data.data(), data.size()) != 1) throw Error("digest update failed");
    return *this;
  }
  Hasher& update(const Digest& d) { return update(ByteView(d.bytes)); }
  Hasher& update_u8(std::uint8_t v) { return update(ByteView(&v, 1)); }
  Hasher& update_u32(std::uint32_t v) {
    const std::uint8_t le[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                                static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
    return update(ByteView(le, 4));
  }

  Digest finish() {
    Digest out;
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, out.bytes.data(), &len) != 1 || len != 32) throw Error("digest final failed");
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

inline Digest hash_bytes(ByteView data) { return Hasher().update(data).finish(); }

inline Digest hash_pair(const Digest& left, const Digest& right) {
  return Hasher().update(left).update(right).finish();
}

// Domain-separation prefixes. Internal Merkle nodes carry none (64-byte input).
inline constexpr std::uint8_t kLeafTag = 0x00;
inline constexpr std::uint8_t kVmStateTag = 0x02;

using Leaf = std::array<std::uint8_t, 32>;

inline Digest hash_leaf(const Leaf& leaf) { return Hasher().update_u8(kLeafTag).update(ByteView(leaf)).finish(); }

// Little-endian helpers used by every binary format.
inline void put_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }
inline void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_digest(Bytes& out, const Digest& d) { out.insert(out.end(), d.bytes.begin(), d.bytes.end()); }

/// Bounds-checked little-endian cursor; every failure reports its offset.
class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  bool done() const noexcept { return pos_ == data_.size(); }

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  Digest digest() {
    need(32);
    Digest d;
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(pos_), 32, d.bytes.begin());
    pos_ += 32;
    return d;
  }
  ByteView take(std::size_t n) {
    need(n);
    ByteView v = data_.subspan(pos_, n);
    pos_ += n;
    return v;
  }
  void expect_end() const {
    if (!done()) throw ParseError(pos_, "trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw ParseError(pos_, "truncated input");
  }

  ByteView data_;
  std::size_t pos_ = 0;
};

}  // namespace opml
