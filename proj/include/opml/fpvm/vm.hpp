#pragma once

// The fraud-proof VM as a state transition function over Merkle-committed
// memory. Instruction semantics live in one template, execute_instruction(),
// parameterised by a memory backend; the full VM, the witness recorder and the
// contract-side verifier all run the same code against different backends.

#include <opml/fpvm/isa.hpp>
#include <opml/fpvm/layout.hpp>
#include <opml/merkle.hpp>
#include <opml/preimage.hpp>

#include <array>
#include <cstdint>
#include <functional>
#include <ostream>

namespace opml::fpvm {

enum class TrapCode : std::uint8_t {
  None = 0,
  IllegalOpcode = 1,
  MisalignedPc = 2,
  MisalignedAccess = 3,
  PreimageRange = 4,
};

/// Everything in the state except memory. Registers live beside the memory
/// tree and are hashed into the state root directly.
struct CoreFields {
  std::uint32_t pc = layout::kProgramBase;
  std::array<std::uint32_t, 16> regs{};
  bool exited = false;
  std::uint8_t exit_code = 0;

  bool operator==(const CoreFields&) const = default;
};

struct VmState : CoreFields {
  MemTree memory;
  std::uint64_t step_count = 0;
};

/// H(0x02 || pc || r0..r15 || exited || exit_code || memory_root), integers little-endian.
inline Digest state_root(const CoreFields& f, const Digest& memory_root) {
  Hasher h;
  h.update_u8(kVmStateTag).update_u32(f.pc);
  for (auto r : f.regs) h.update_u32(r);
  h.update_u8(f.exited ? 1 : 0).update_u8(f.exit_code).update(memory_root);
  return h.finish();
}

inline Digest state_root(const VmState& s) { return state_root(static_cast<const CoreFields&>(s), s.memory.root()); }

namespace detail {

template <class Mem>
std::uint32_t load_word(Mem& mem, std::uint32_t addr) {
  const Leaf leaf = mem.read_leaf(addr >> 5);
  const std::size_t off = addr & 31;
  return static_cast<std::uint32_t>(leaf[off]) | (static_cast<std::uint32_t>(leaf[off + 1]) << 8) |
         (static_cast<std::uint32_t>(leaf[off + 2]) << 16) | (static_cast<std::uint32_t>(leaf[off + 3]) << 24);
}

inline void store_word(Leaf& leaf, std::uint32_t addr, std::uint32_t value) {
  const std::size_t off = addr & 31;
  for (int i = 0; i < 4; ++i) leaf[off + i] = static_cast<std::uint8_t>(value >> (8 * i));
}

inline std::uint32_t mulfx(std::uint32_t a, std::uint32_t b) {
  const std::int64_t p = static_cast<std::int64_t>(static_cast<std::int32_t>(a)) *
                         static_cast<std::int64_t>(static_cast<std::int32_t>(b));
  return static_cast<std::uint32_t>(static_cast<std::uint64_t>(p >> kFracBits));
}

inline std::uint32_t sra(std::uint32_t v, std::int32_t shift) {
  return static_cast<std::uint32_t>(static_cast<std::int32_t>(v) >> (shift & 31));
}

}  // namespace detail

/// Applies one instruction to `f` through `mem`. Mem provides
///   Leaf read_leaf(uint32 leaf_index)
///   void write_word(uint32 addr, uint32 value)
///   void write_leaf(uint32 leaf_index, const Leaf&)
///   Leaf preimage_chunk(const Digest& key, uint32 chunk_index)
/// Exited states are a fixpoint.
template <class Mem>
void execute_instruction(CoreFields& f, Mem& mem) {
  if (f.exited) return;
  auto trap = [&f](TrapCode code) {
    f.exited = true;
    f.exit_code = static_cast<std::uint8_t>(code);
  };
  if ((f.pc & 3) != 0) return trap(TrapCode::MisalignedPc);

  const Instruction ins = decode(detail::load_word(mem, f.pc));
  auto reg = [&f](unsigned r) -> std::uint32_t { return r == 0 ? 0u : f.regs[r]; };
  auto set = [&f](unsigned r, std::uint32_t v) {
    if (r != 0) f.regs[r] = v;
  };
  auto branch_target = [&] { return f.pc + 4 + static_cast<std::uint32_t>(ins.imm) * 4; };

  std::uint32_t next = f.pc + 4;
  switch (static_cast<Opcode>(ins.opcode)) {
    case Opcode::LI:
      set(ins.rd, detail::load_word(mem, f.pc + 4));
      next = f.pc + 8;
      break;
    case Opcode::LW: {
      const std::uint32_t addr = reg(ins.rs) + static_cast<std::uint32_t>(ins.imm);
      if ((addr & 3) != 0) return trap(TrapCode::MisalignedAccess);
      set(ins.rd, detail::load_word(mem, addr));
      break;
    }
    case Opcode::SW: {
      const std::uint32_t addr = reg(ins.rs) + static_cast<std::uint32_t>(ins.imm);
      if ((addr & 3) != 0) return trap(TrapCode::MisalignedAccess);
      mem.write_word(addr, reg(ins.rt));
      break;
    }
    case Opcode::ADD: set(ins.rd, reg(ins.rs) + reg(ins.rt)); break;
    case Opcode::SUB: set(ins.rd, reg(ins.rs) - reg(ins.rt)); break;
    case Opcode::MUL: set(ins.rd, reg(ins.rs) * reg(ins.rt)); break;
    case Opcode::MULFX: set(ins.rd, detail::mulfx(reg(ins.rs), reg(ins.rt))); break;
    case Opcode::SRA: set(ins.rd, detail::sra(reg(ins.rs), ins.imm)); break;
    case Opcode::AND: set(ins.rd, reg(ins.rs) & reg(ins.rt)); break;
    case Opcode::BEQ:
      if (reg(ins.rs) == reg(ins.rt)) next = branch_target();
      break;
    case Opcode::BLT:
      if (static_cast<std::int32_t>(reg(ins.rs)) < static_cast<std::int32_t>(reg(ins.rt))) next = branch_target();
      break;
    case Opcode::JMP: next = branch_target(); break;
    case Opcode::PREIMAGE: {
      const std::uint32_t chunk = reg(ins.rs);
      const std::uint32_t dest = reg(ins.rd);
      if (chunk >= PreimageTree::leaf_count || dest >= layout::kOracleValueLeaves) {
        return trap(TrapCode::PreimageRange);
      }
      Digest key;
      key.bytes = mem.read_leaf(layout::kOracleKeyBase >> 5);
      const Leaf bytes = mem.preimage_chunk(key, chunk);
      mem.write_leaf((layout::kOracleValueBase >> 5) + dest, bytes);
      break;
    }
    case Opcode::HALT:
      f.exited = true;
      f.exit_code = 0;
      break;
    default: return trap(TrapCode::IllegalOpcode);
  }
  f.pc = next;
}

/// Backend that reads and writes a live tree.
class TreeMemory {
 public:
  TreeMemory(MemTree& tree, const PreimageOracle& oracle) : tree_(tree), oracle_(oracle) {}

  Leaf read_leaf(std::uint32_t index) const { return tree_.leaf(index); }
  void write_word(std::uint32_t addr, std::uint32_t value) {
    Leaf l = tree_.leaf(addr >> 5);
    detail::store_word(l, addr, value);
    tree_.set_leaf(addr >> 5, l);
  }
  void write_leaf(std::uint32_t index, const Leaf& leaf) { tree_.set_leaf(index, leaf); }
  Leaf preimage_chunk(const Digest& key, std::uint32_t index) const { return oracle_.chunk(key, index); }

 private:
  MemTree& tree_;
  const PreimageOracle& oracle_;
};

inline void step_in_place(VmState& s, const PreimageOracle& oracle) {
  if (s.exited) return;
  TreeMemory mem(s.memory, oracle);
  execute_instruction(s, mem);
  ++s.step_count;
}

/// One instruction. Identity on exited states. Throws MissingPreimage (a host
/// error, not a VM trap) when PREIMAGE names an unknown key.
inline VmState step(const VmState& s, const PreimageOracle& oracle) {
  VmState next = s;
  step_in_place(next, oracle);
  return next;
}

class BudgetExceeded : public Error {
 public:
  BudgetExceeded(VmState partial, std::uint64_t steps)
      : Error("step budget of " + std::to_string(steps) + " exhausted before HALT"), partial_(std::move(partial)) {}
  const VmState& partial() const noexcept { return partial_; }

 private:
  VmState partial_;
};

struct RunResult {
  VmState final_state;
  std::uint64_t steps = 0;
};

using StepObserver = std::function<void(const VmState&)>;

/// Runs until HALT or trap. `observer` (optional) sees every post-state.
inline RunResult run(const VmState& initial, const PreimageOracle& oracle, std::uint64_t max_steps,
                     const StepObserver& observer = {}) {
  if (max_steps == 0) throw RangeError("run: max_steps must be positive");
  VmState s = initial;
  std::uint64_t n = 0;
  while (!s.exited) {
    if (n == max_steps) throw BudgetExceeded(std::move(s), max_steps);
    step_in_place(s, oracle);
    ++n;
    if (observer) observer(s);
  }
  return RunResult{std::move(s), n};
}

/// State after exactly k steps; clamps at the final state once halted.
inline VmState snapshot_at(const VmState& initial, const PreimageOracle& oracle, std::uint64_t k) {
  VmState s = initial;
  for (std::uint64_t i = 0; i < k && !s.exited; ++i) step_in_place(s, oracle);
  return s;
}

/// Fresh state with `program` at program_base and optional extra data regions.
inline VmState load_program(const std::vector<std::uint32_t>& program) {
  VmState s;
  s.memory.write_bytes(layout::kProgramBase, program_bytes(program));
  return s;
}

inline void flip_memory_bit(VmState& s, std::uint32_t addr, unsigned bit) {
  Leaf l = s.memory.leaf(addr >> 5);
  l[(addr & 31) + bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
  s.memory.set_leaf(addr >> 5, l);
}

/// `step_count, pc, state_root_hex` per line.
inline void write_trace_record(std::ostream& os, const VmState& s) {
  os << s.step_count << ", " << s.pc << ", " << state_root(s).hex() << '\n';
}

}  // namespace opml::fpvm
