#pragma once

// Lowers graph ops to MiniVM code. Tensors in VM memory use the same layout
// as their serialization (u32 rank, u32 dims, i32 data), so a 128 KiB tensor
// field holding a tensor has the tensor's preimage key as its subtree root.
//
// Op bodies read shapes from the tensor headers at run time; one program per
// op kind therefore serves every node of that kind.

#include <opml/fpvm/isa.hpp>
#include <opml/fpvm/layout.hpp>
#include <opml/ml/graph.hpp>

#include <map>
#include <mutex>

namespace opml::ml {

class LoweringError : public Error {
 public:
  using Error::Error;
};

namespace lower {

using fpvm::Assembler;
using namespace fpvm;  // register names

inline constexpr std::uint32_t kSlotLeaves = 4096;  // one tensor field of value leaves
inline constexpr std::uint32_t kSlotBytes = kSlotLeaves * 32;
inline constexpr std::uint32_t kMaxSlots = layout::kOracleValueLeaves / kSlotLeaves;
inline constexpr std::uint32_t kScratch = layout::kHeapBase;
inline constexpr std::uint32_t kNodeHeapBase = layout::kHeapBase + 0x0010'0000;

inline constexpr std::uint32_t slot_address(std::uint32_t slot) { return layout::kOracleValueBase + slot * kSlotBytes; }

/// r8 = 1 + rank + prod(dims) for the tensor at address `base`.
/// Clobbers r7..r13; r11 is left holding 1.
inline void emit_word_count(Assembler& as, Reg base) {
  auto loop = as.new_label();
  auto done = as.new_label();
  as.lw(r7, base, 0);
  as.li(r8, 1);
  as.mov(r9, base);
  as.li(r10, 4);
  as.li(r11, 1);
  as.mov(r13, r0);
  as.bind(loop);
  as.beq(r13, r7, done);
  as.add(r9, r9, r10);
  as.lw(r12, r9, 0);
  as.mul(r8, r8, r12);
  as.add(r13, r13, r11);
  as.jmp(loop);
  as.bind(done);
  as.add(r8, r8, r7);
  as.add(r8, r8, r11);
}

/// Copies the 32-byte key at `key_addr` to the oracle key slot and streams the
/// referenced tensor into value slot `slot`, one chunk per PREIMAGE.
inline void emit_load(Assembler& as, std::uint32_t key_addr, std::uint32_t slot) {
  as.li(r1, key_addr);
  as.li(r2, layout::kOracleKeyBase);
  for (int w = 0; w < 8; ++w) {
    as.lw(r3, r1, 4 * w);
    as.sw(r3, r2, 4 * w);
  }
  as.li(r4, slot * kSlotLeaves);
  as.mov(r5, r0);
  as.preimage(r4, r5);
  as.li(r6, slot_address(slot));
  emit_word_count(as, r6);
  as.li(r12, 7);
  as.add(r8, r8, r12);
  as.sra(r8, r8, 3);  // chunks = ceil(words / 8)
  as.li(r12, 1);
  auto loop = as.new_label();
  auto more = as.new_label();
  auto done = as.new_label();
  as.bind(loop);
  as.add(r5, r5, r12);
  as.blt(r5, r8, more);
  as.jmp(done);
  as.bind(more);
  as.add(r4, r4, r12);
  as.preimage(r4, r5);
  as.jmp(loop);
  as.bind(done);
}

/// Word-by-word tensor copy.
inline void emit_copy(Assembler& as, std::uint32_t src, std::uint32_t dst) {
  as.li(r6, src);
  emit_word_count(as, r6);
  as.li(r1, dst);
  as.li(r2, 4);
  as.mov(r3, r0);
  auto loop = as.new_label();
  auto done = as.new_label();
  as.bind(loop);
  as.beq(r3, r8, done);
  as.lw(r4, r6, 0);
  as.sw(r4, r1, 0);
  as.add(r6, r6, r2);
  as.add(r1, r1, r2);
  as.add(r3, r3, r11);
  as.jmp(loop);
  as.bind(done);
}

/// out = x @ w. Each product is split into three 16-bit limbs (bits 0-15,
/// 16-31, 32-47) summed in separate accumulators, which reproduces bits
/// 16..47 of the 64-bit wrapping sum for inner dimensions up to 2^14.
inline void emit_matmul(Assembler& as, std::uint32_t xa, std::uint32_t wa, std::uint32_t oa) {
  // scratch: 0 outPtr | 4 4n | 8 4k | 16 bColEnd | 20 bColPtr | 24 xEnd | 28 wData
  as.li(r14, kScratch);
  as.li(r1, xa);
  as.li(r2, wa);
  as.li(r3, oa);
  as.lw(r4, r1, 4);  // m
  as.lw(r5, r1, 8);  // n
  as.lw(r6, r2, 8);  // k
  as.li(r7, 2);
  as.sw(r7, r3, 0);
  as.sw(r4, r3, 4);
  as.sw(r6, r3, 8);
  as.li(r7, 12);
  as.add(r8, r3, r7);
  as.sw(r8, r14, 0);
  as.add(r13, r1, r7);
  as.add(r9, r2, r7);
  as.sw(r9, r14, 28);
  as.li(r7, 4);
  as.mul(r10, r5, r7);
  as.sw(r10, r14, 4);
  as.mul(r11, r6, r7);
  as.sw(r11, r14, 8);
  as.add(r12, r9, r11);
  as.sw(r12, r14, 16);
  as.mul(r12, r4, r10);
  as.add(r12, r13, r12);
  as.sw(r12, r14, 24);
  as.li(r8, 0xFFFF);

  auto row_loop = as.new_label();
  auto col_loop = as.new_label();
  auto dot_loop = as.new_label();
  auto dot_done = as.new_label();
  auto row_next = as.new_label();
  auto finished = as.new_label();

  as.bind(row_loop);
  as.lw(r12, r14, 24);
  as.beq(r13, r12, finished);
  as.lw(r12, r14, 28);
  as.sw(r12, r14, 20);
  as.bind(col_loop);
  as.lw(r2, r14, 20);
  as.lw(r12, r14, 16);
  as.beq(r2, r12, row_next);
  as.mov(r1, r13);
  as.lw(r3, r14, 4);
  as.add(r3, r1, r3);
  as.lw(r4, r14, 8);
  as.mov(r5, r0);
  as.mov(r6, r0);
  as.mov(r7, r0);
  as.bind(dot_loop);
  as.beq(r1, r3, dot_done);
  as.lw(r9, r1, 0);
  as.lw(r10, r2, 0);
  as.mul(r11, r9, r10);
  as.and_(r12, r11, r8);
  as.add(r5, r5, r12);
  as.sra(r12, r11, 16);
  as.and_(r12, r12, r8);
  as.add(r6, r6, r12);
  as.mulfx(r12, r9, r10);
  as.sra(r12, r12, 16);
  as.and_(r12, r12, r8);
  as.add(r7, r7, r12);
  as.li(r12, 4);
  as.add(r1, r1, r12);
  as.add(r2, r2, r4);
  as.jmp(dot_loop);
  as.bind(dot_done);
  // result = (L0 >> 16) + L1 + L2 * 2^16 (mod 2^32)
  as.sra(r12, r5, 16);
  as.add(r12, r12, r6);
  as.li(r11, 0x10000);
  as.mul(r11, r7, r11);
  as.add(r12, r12, r11);
  as.lw(r11, r14, 0);
  as.sw(r12, r11, 0);
  as.li(r9, 4);
  as.add(r11, r11, r9);
  as.sw(r11, r14, 0);
  as.lw(r11, r14, 20);
  as.add(r11, r11, r9);
  as.sw(r11, r14, 20);
  as.jmp(col_loop);
  as.bind(row_next);
  as.lw(r12, r14, 4);
  as.add(r13, r13, r12);
  as.jmp(row_loop);
  as.bind(finished);
}

inline void emit_bias_add(Assembler& as, std::uint32_t xa, std::uint32_t ba, std::uint32_t oa) {
  as.li(r1, xa);
  as.li(r2, ba);
  as.li(r3, oa);
  as.lw(r4, r1, 4);
  as.lw(r5, r1, 8);
  as.li(r6, 2);
  as.sw(r6, r3, 0);
  as.sw(r4, r3, 4);
  as.sw(r5, r3, 8);
  as.li(r6, 12);
  as.add(r1, r1, r6);
  as.add(r3, r3, r6);
  as.li(r6, 8);
  as.add(r2, r2, r6);
  as.li(r6, 4);
  as.mul(r7, r5, r6);
  as.add(r7, r2, r7);  // bias end
  as.mul(r8, r4, r5);
  as.mul(r8, r8, r6);
  as.add(r8, r1, r8);  // input end
  as.mov(r9, r2);
  auto loop = as.new_label();
  auto done = as.new_label();
  as.bind(loop);
  as.beq(r1, r8, done);
  as.lw(r10, r1, 0);
  as.lw(r11, r9, 0);
  as.add(r10, r10, r11);
  as.sw(r10, r3, 0);
  as.add(r1, r1, r6);
  as.add(r3, r3, r6);
  as.add(r9, r9, r6);
  as.blt(r9, r7, loop);
  as.mov(r9, r2);
  as.jmp(loop);
  as.bind(done);
}

inline void emit_relu(Assembler& as, std::uint32_t xa, std::uint32_t oa) {
  as.li(r1, xa);
  as.li(r3, oa);
  as.lw(r4, r1, 4);
  as.lw(r5, r1, 8);
  as.li(r6, 2);
  as.sw(r6, r3, 0);
  as.sw(r4, r3, 4);
  as.sw(r5, r3, 8);
  as.li(r6, 12);
  as.add(r1, r1, r6);
  as.add(r3, r3, r6);
  as.li(r6, 4);
  as.mul(r8, r4, r5);
  as.mul(r8, r8, r6);
  as.add(r8, r1, r8);
  auto loop = as.new_label();
  auto neg = as.new_label();
  auto next = as.new_label();
  auto done = as.new_label();
  as.bind(loop);
  as.beq(r1, r8, done);
  as.lw(r10, r1, 0);
  as.blt(r10, r0, neg);
  as.sw(r10, r3, 0);
  as.jmp(next);
  as.bind(neg);
  as.sw(r0, r3, 0);
  as.bind(next);
  as.add(r1, r1, r6);
  as.add(r3, r3, r6);
  as.jmp(loop);
  as.bind(done);
}

/// Flattened argmax; strict comparison keeps the lowest index on ties.
inline void emit_argmax(Assembler& as, std::uint32_t xa, std::uint32_t oa) {
  as.li(r1, xa);
  as.li(r3, oa);
  as.lw(r4, r1, 4);
  as.lw(r5, r1, 8);
  as.mul(r8, r4, r5);
  as.li(r6, 12);
  as.add(r1, r1, r6);
  as.lw(r9, r1, 0);
  as.mov(r10, r0);
  as.li(r11, 1);
  as.li(r12, 4);
  as.li(r7, 1);
  auto loop = as.new_label();
  auto better = as.new_label();
  auto next = as.new_label();
  auto done = as.new_label();
  as.bind(loop);
  as.beq(r11, r8, done);
  as.add(r1, r1, r12);
  as.lw(r13, r1, 0);
  as.blt(r9, r13, better);
  as.jmp(next);
  as.bind(better);
  as.mov(r9, r13);
  as.mov(r10, r11);
  as.bind(next);
  as.add(r11, r11, r7);
  as.jmp(loop);
  as.bind(done);
  as.sw(r7, r3, 0);
  as.sw(r7, r3, 4);
  as.sw(r10, r3, 8);
}

inline void emit_op(Assembler& as, OpKind op, std::uint32_t xa, std::uint32_t pa, std::uint32_t oa) {
  switch (op) {
    case OpKind::MatMul: emit_matmul(as, xa, pa, oa); break;
    case OpKind::BiasAdd: emit_bias_add(as, xa, pa, oa); break;
    case OpKind::ReLU: emit_relu(as, xa, oa); break;
    case OpKind::ArgMax: emit_argmax(as, xa, oa); break;
    default: throw LoweringError("no lowering for " + std::string(op_name(op)));
  }
}

inline void check_size(const std::vector<std::uint32_t>& words) {
  if (words.size() * 4 > (std::size_t{32} << layout::kProgramLevel)) throw LoweringError("program exceeds 32 KiB");
}

}  // namespace lower

/// Byte range [begin, end) of a node's op body within a program.
struct PcRange {
  std::uint32_t begin = 0;
  std::uint32_t end = 0;
  bool contains(std::uint32_t pc) const { return pc >= begin && pc < end; }
  bool operator==(const PcRange&) const = default;
};

/// Program for a single compute node in the two-phase protocol. The operand
/// key sits at input_base, the parameter key (if any) at model_base, and the
/// result is written to output_base.
struct NodeProgram {
  OpKind op = OpKind::MatMul;
  std::vector<std::uint32_t> words;
  PcRange op_body;
};

inline NodeProgram lower_node_program(OpKind op) {
  if (!is_compute(op)) throw LoweringError("only compute nodes are lowered");
  lower::Assembler as;
  lower::emit_load(as, layout::kInputBase, 0);
  if (takes_params(op)) lower::emit_load(as, layout::kModelBase, 1);
  NodeProgram p;
  p.op = op;
  p.op_body.begin = as.here();
  lower::emit_op(as, op, lower::slot_address(0), lower::slot_address(1), layout::kOutputBase);
  p.op_body.end = as.here();
  as.halt();
  p.words = as.finish();
  lower::check_size(p.words);
  return p;
}

/// Cached program per op kind.
inline const NodeProgram& node_program(OpKind op) {
  static std::mutex mu;
  static std::map<OpKind, NodeProgram> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(op);
  if (it == cache.end()) it = cache.emplace(op, lower_node_program(op)).first;
  return it->second;
}

/// One program for the whole graph (single-phase protocol). The input key is
/// at input_base and the i-th Const's key at model_base + 32*i. Inputs and
/// consts stream into value slots 0, 1, 2, ...; node results go to
/// per-node heap fields; the output node is copied to output_base at the end.
struct GraphProgram {
  std::vector<std::uint32_t> words;
  std::vector<PcRange> op_ranges;  // by node id; empty for Input/Const

  std::optional<std::uint32_t> node_at_pc(std::uint32_t pc) const {
    for (std::uint32_t i = 0; i < op_ranges.size(); ++i) {
      if (op_ranges[i].contains(pc)) return i;
    }
    return std::nullopt;
  }
};

inline GraphProgram lower_graph(const CompGraph& g) {
  const auto consts = g.const_ids();
  if (consts.size() + 1 > lower::kMaxSlots) throw LoweringError("too many constants for the value region");
  std::vector<std::uint32_t> addr(g.size());
  lower::Assembler as;
  lower::emit_load(as, layout::kInputBase, 0);
  addr[g.input_id()] = lower::slot_address(0);
  for (std::uint32_t i = 0; i < consts.size(); ++i) {
    lower::emit_load(as, layout::kModelBase + 32 * i, i + 1);
    addr[consts[i]] = lower::slot_address(i + 1);
  }
  GraphProgram p;
  p.op_ranges.assign(g.size(), {});
  for (const auto& n : g.nodes()) {
    if (!is_compute(n.op)) continue;
    addr[n.id] = lower::kNodeHeapBase + n.id * lower::kSlotBytes;
    p.op_ranges[n.id].begin = as.here();
    lower::emit_op(as, n.op, addr[n.input_ids[0]], n.params ? addr[*n.params] : 0, addr[n.id]);
    p.op_ranges[n.id].end = as.here();
  }
  lower::emit_copy(as, addr[g.output_id()], layout::kOutputBase);
  as.halt();
  p.words = as.finish();
  lower::check_size(p.words);
  return p;
}

}  // namespace opml::ml
