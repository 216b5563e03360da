#pragma once

#include <cstdint>

namespace opml::layout {

// Fixed memory regions of the fraud-proof VM. All are leaf (32-byte) aligned.
inline constexpr std::uint32_t kProgramBase = 0x0000'0000;
inline constexpr std::uint32_t kInputBase = 0x0200'0000;
inline constexpr std::uint32_t kOutputBase = 0x0300'0000;
inline constexpr std::uint32_t kOracleKeyBase = 0x0400'0000;
inline constexpr std::uint32_t kOracleValueBase = 0x0410'0000;
inline constexpr std::uint32_t kModelBase = 0x0800'0000;
inline constexpr std::uint32_t kHeapBase = 0x1000'0000;

inline constexpr std::uint32_t kOracleValueLeaves = (kModelBase - kOracleValueBase) / 32;

// Subtree levels of the named fields used by entrance/exit proofs.
inline constexpr unsigned kProgramLevel = 10;  // 32 KiB of code
inline constexpr unsigned kInputLevel = 0;     // one leaf: the operand key
inline constexpr unsigned kModelLevel = 0;     // one leaf: the parameter key
inline constexpr unsigned kTensorFieldLevel = 12;  // 128 KiB tensor field
inline constexpr std::uint32_t kTensorFieldBytes = std::uint32_t{32} << kTensorFieldLevel;

static_assert(kProgramBase + (std::uint32_t{32} << kProgramLevel) <= kInputBase);
static_assert(kOutputBase + kTensorFieldBytes <= kOracleKeyBase);
static_assert(kInputBase % 32 == 0 && kOutputBase % 32 == 0 && kOracleKeyBase % 32 == 0);
static_assert(kOracleValueBase % 32 == 0 && kModelBase % 32 == 0 && kHeapBase % 32 == 0);

}  // namespace opml::layout
