#pragma once

// MiniVM instruction set: 32-bit words
//   bits 0-7 opcode | 8-11 rd | 12-15 rs | 16-19 rt | 20-31 imm (signed)
// LI takes its 32-bit immediate from the following word.

#include <opml/hash.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace opml::fpvm {

enum class Opcode : std::uint8_t {
  LI = 1,        // rd = next word; pc += 8
  LW = 2,        // rd = mem32[rs + imm]
  SW = 3,        // mem32[rs + imm] = rt
  ADD = 4,       // rd = rs + rt
  SUB = 5,       // rd = rs - rt
  MUL = 6,       // rd = low32(rs * rt)
  MULFX = 7,     // rd = wrap32((int64 rs * int64 rt) asr 16)
  SRA = 8,       // rd = rs asr (imm & 31)
  AND = 9,       // rd = rs & rt
  BEQ = 10,      // if rs == rt: pc = pc + 4 + imm*4
  BLT = 11,      // if int(rs) < int(rt): pc = pc + 4 + imm*4
  JMP = 12,      // pc = pc + 4 + imm*4
  PREIMAGE = 13, // value_leaf[rd] = chunk rs of preimage(key at oracle_key_base)
  HALT = 14,
};

inline constexpr unsigned kFracBits = 16;

inline bool is_valid_opcode(std::uint8_t op) { return op >= 1 && op <= 14; }

struct Instruction {
  std::uint8_t opcode = 0;
  std::uint8_t rd = 0;
  std::uint8_t rs = 0;
  std::uint8_t rt = 0;
  std::int32_t imm = 0;  // sign-extended 12-bit

  bool operator==(const Instruction&) const = default;
};

inline constexpr std::int32_t kImmMin = -2048;
inline constexpr std::int32_t kImmMax = 2047;

inline std::uint32_t encode(const Instruction& ins) {
  if (ins.rd > 15 || ins.rs > 15 || ins.rt > 15) throw RangeError("register index out of range");
  if (ins.imm < kImmMin || ins.imm > kImmMax) throw RangeError("immediate out of 12-bit range");
  return static_cast<std::uint32_t>(ins.opcode) | (static_cast<std::uint32_t>(ins.rd) << 8) |
         (static_cast<std::uint32_t>(ins.rs) << 12) | (static_cast<std::uint32_t>(ins.rt) << 16) |
         ((static_cast<std::uint32_t>(ins.imm) & 0xFFF) << 20);
}

inline Instruction decode(std::uint32_t word) {
  Instruction ins;
  ins.opcode = static_cast<std::uint8_t>(word & 0xFF);
  ins.rd = static_cast<std::uint8_t>((word >> 8) & 0xF);
  ins.rs = static_cast<std::uint8_t>((word >> 12) & 0xF);
  ins.rt = static_cast<std::uint8_t>((word >> 16) & 0xF);
  ins.imm = static_cast<std::int32_t>(word) >> 20;
  return ins;
}

/// Register names for the assembler. r0 reads as zero.
enum Reg : std::uint8_t { r0, r1, r2, r3, r4, r5, r6, r7, r8, r9, r10, r11, r12, r13, r14, r15 };

/// Two-pass assembler with forward labels. Branch targets are resolved on
/// finish(); an out-of-range displacement is an error, never silently wrapped.
class Assembler {
 public:
  struct Label {
    std::size_t id;
  };

  Label new_label() {
    labels_.push_back(std::nullopt);
    return Label{labels_.size() - 1};
  }

  void bind(Label l) {
    if (labels_.at(l.id)) throw Error("label bound twice");
    labels_[l.id] = words_.size();
  }

  std::size_t size_words() const { return words_.size(); }
  /// Byte offset of the next emitted instruction.
  std::uint32_t here() const { return static_cast<std::uint32_t>(words_.size() * 4); }

  void li(Reg rd, std::uint32_t value) {
    emit(Opcode::LI, rd, r0, r0, 0);
    words_.push_back(value);
  }
  void lw(Reg rd, Reg base, std::int32_t offset) { emit(Opcode::LW, rd, base, r0, offset); }
  void sw(Reg value, Reg base, std::int32_t offset) { emit(Opcode::SW, r0, base, value, offset); }
  void add(Reg rd, Reg rs, Reg rt) { emit(Opcode::ADD, rd, rs, rt, 0); }
  void sub(Reg rd, Reg rs, Reg rt) { emit(Opcode::SUB, rd, rs, rt, 0); }
  void mul(Reg rd, Reg rs, Reg rt) { emit(Opcode::MUL, rd, rs, rt, 0); }
  void mulfx(Reg rd, Reg rs, Reg rt) { emit(Opcode::MULFX, rd, rs, rt, 0); }
  void sra(Reg rd, Reg rs, std::int32_t shift) { emit(Opcode::SRA, rd, rs, r0, shift); }
  void and_(Reg rd, Reg rs, Reg rt) { emit(Opcode::AND, rd, rs, rt, 0); }
  void mov(Reg rd, Reg rs) { add(rd, rs, r0); }
  void beq(Reg rs, Reg rt, Label target) { branch(Opcode::BEQ, rs, rt, target); }
  void blt(Reg rs, Reg rt, Label target) { branch(Opcode::BLT, rs, rt, target); }
  void jmp(Label target) { branch(Opcode::JMP, r0, r0, target); }
  void preimage(Reg dest_leaf, Reg chunk_index) { emit(Opcode::PREIMAGE, dest_leaf, chunk_index, r0, 0); }
  void halt() { emit(Opcode::HALT, r0, r0, r0, 0); }

  std::vector<std::uint32_t> finish() const {
    std::vector<std::uint32_t> out = words_;
    for (const auto& f : fixups_) {
      const auto& target = labels_.at(f.label);
      if (!target) throw Error("unbound label");
      const std::int64_t disp = static_cast<std::int64_t>(*target) - static_cast<std::int64_t>(f.word + 1);
      if (disp < kImmMin || disp > kImmMax) throw RangeError("branch displacement out of range");
      Instruction ins = decode(out[f.word]);
      ins.imm = static_cast<std::int32_t>(disp);
      out[f.word] = encode(ins);
    }
    return out;
  }

 private:
  struct Fixup {
    std::size_t word;
    std::size_t label;
  };

  void emit(Opcode op, Reg rd, Reg rs, Reg rt, std::int32_t imm) {
    words_.push_back(encode(Instruction{static_cast<std::uint8_t>(op), rd, rs, rt, imm}));
  }

  void branch(Opcode op, Reg rs, Reg rt, Label target) {
    fixups_.push_back({words_.size(), target.id});
    emit(op, r0, rs, rt, 0);
  }

  std::vector<std::uint32_t> words_;
  std::vector<std::optional<std::size_t>> labels_;
  std::vector<Fixup> fixups_;
};

/// Program image: flat little-endian 32-bit words.
inline Bytes program_bytes(const std::vector<std::uint32_t>& words) {
  Bytes out;
  out.reserve(words.size() * 4);
  for (auto w : words) put_u32(out, w);
  return out;
}

}  // namespace opml::fpvm
