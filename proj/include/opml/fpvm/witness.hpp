#pragma once

// One-step witnesses: the partial Merkle expansion of a pre-state that lets a
// verifier holding only two roots re-execute a single instruction.

#include <opml/fpvm/vm.hpp>

#include <map>
#include <optional>
#include <string_view>

namespace opml::fpvm {

/// An opened leaf of the pre-state memory. Its address is proof.leaf_index * 32.
struct LeafOpening {
  Leaf leaf{};
  MerkleProof proof;
  bool operator==(const LeafOpening&) const = default;
};

struct LeafWrite {
  Leaf old_leaf{};
  Leaf new_leaf{};
  MerkleProof proof;  // path of old_leaf in the pre-state
  bool operator==(const LeafWrite&) const = default;
};

struct PreimageChunkWitness {
  Digest key;
  std::uint32_t index = 0;
  Leaf bytes{};
  MerkleProof proof;  // chunk within the depth-12 preimage tree
  bool operator==(const PreimageChunkWitness&) const = default;
};

struct StepWitness {
  CoreFields pre;
  Digest pre_memory_root;
  std::vector<LeafOpening> reads;  // in first-access order
  std::vector<LeafWrite> writes;
  std::optional<PreimageChunkWitness> preimage;

  bool operator==(const StepWitness&) const = default;

  static constexpr std::uint8_t kFormatVersion = 1;

  Bytes serialize() const {
    Bytes out;
    put_u8(out, kFormatVersion);
    put_u8(out, static_cast<std::uint8_t>(active_hash()));
    put_u32(out, pre.pc);
    for (auto r : pre.regs) put_u32(out, r);
    put_u8(out, pre.exited ? 1 : 0);
    put_u8(out, pre.exit_code);
    put_digest(out, pre_memory_root);
    put_u8(out, static_cast<std::uint8_t>(reads.size()));
    for (const auto& r : reads) {
      out.insert(out.end(), r.leaf.begin(), r.leaf.end());
      r.proof.serialize(out);
    }
    put_u8(out, static_cast<std::uint8_t>(writes.size()));
    for (const auto& w : writes) {
      out.insert(out.end(), w.old_leaf.begin(), w.old_leaf.end());
      out.insert(out.end(), w.new_leaf.begin(), w.new_leaf.end());
      w.proof.serialize(out);
    }
    put_u8(out, preimage ? 1 : 0);
    if (preimage) {
      put_digest(out, preimage->key);
      put_u32(out, preimage->index);
      out.insert(out.end(), preimage->bytes.begin(), preimage->bytes.end());
      preimage->proof.serialize(out);
    }
    return out;
  }

  static StepWitness deserialize(ByteView data) {
    ByteReader in(data);
    if (in.u8() != kFormatVersion) throw ParseError(0, "unsupported witness version");
    if (in.u8() != static_cast<std::uint8_t>(active_hash())) throw ParseError(1, "witness built with a different hash");
    auto leaf = [&in] {
      Leaf l;
      const auto v = in.take(32);
      std::copy(v.begin(), v.end(), l.begin());
      return l;
    };
    auto flag = [&in] {
      const std::size_t at = in.offset();
      const std::uint8_t v = in.u8();
      if (v > 1) throw ParseError(at, "boolean field out of range");
      return v == 1;
    };
    StepWitness w;
    w.pre.pc = in.u32();
    for (auto& r : w.pre.regs) r = in.u32();
    w.pre.exited = flag();
    w.pre.exit_code = in.u8();
    w.pre_memory_root = in.digest();
    const std::uint8_t nreads = in.u8();
    for (std::uint8_t i = 0; i < nreads; ++i) {
      LeafOpening o;
      o.leaf = leaf();
      o.proof = MerkleProof::deserialize(in);
      w.reads.push_back(std::move(o));
    }
    const std::uint8_t nwrites = in.u8();
    for (std::uint8_t i = 0; i < nwrites; ++i) {
      LeafWrite e;
      e.old_leaf = leaf();
      e.new_leaf = leaf();
      e.proof = MerkleProof::deserialize(in);
      w.writes.push_back(std::move(e));
    }
    if (flag()) {
      PreimageChunkWitness c;
      c.key = in.digest();
      c.index = in.u32();
      c.bytes = leaf();
      c.proof = MerkleProof::deserialize(in);
      w.preimage = std::move(c);
    }
    in.expect_end();
    return w;
  }
};

inline constexpr std::size_t kMaxWitnessBytes = 4096;
inline constexpr std::size_t kMaxWitnessProofs = 4;

namespace detail {

/// Runs the instruction against the untouched pre-state and logs every leaf
/// the instruction touches, with proofs against the pre-state root.
class RecordingMemory {
 public:
  RecordingMemory(const MemTree& pre, const PreimageOracle& oracle, StepWitness& out)
      : pre_(pre), oracle_(oracle), out_(out) {}

  Leaf read_leaf(std::uint32_t index) {
    if (auto it = current_.find(index); it != current_.end()) return it->second;
    const Leaf leaf = pre_.leaf(index);
    out_.reads.push_back(LeafOpening{leaf, pre_.prove(index, 0)});
    current_[index] = leaf;
    return leaf;
  }

  void write_word(std::uint32_t addr, std::uint32_t value) {
    Leaf next = current_value(addr >> 5);
    store_word(next, addr, value);
    record_write(addr >> 5, next);
  }

  void write_leaf(std::uint32_t index, const Leaf& leaf) { record_write(index, leaf); }

  Leaf preimage_chunk(const Digest& key, std::uint32_t index) {
    const Leaf bytes = oracle_.chunk(key, index);
    out_.preimage = PreimageChunkWitness{key, index, bytes, oracle_.chunk_proof(key, index)};
    return bytes;
  }

 private:
  Leaf current_value(std::uint32_t index) const {
    auto it = current_.find(index);
    return it != current_.end() ? it->second : pre_.leaf(index);
  }

  void record_write(std::uint32_t index, const Leaf& value) {
    out_.writes.push_back(LeafWrite{pre_.leaf(index), value, pre_.prove(index, 0)});
    current_[index] = value;
  }

  const MemTree& pre_;
  const PreimageOracle& oracle_;
  StepWitness& out_;
  std::map<std::uint32_t, Leaf> current_;
};

}  // namespace detail

/// Witness for executing the next instruction of `state`. Throws
/// MissingPreimage when the instruction needs an unknown preimage.
inline StepWitness gen_step_witness(const VmState& state, const PreimageOracle& oracle) {
  StepWitness w;
  w.pre = static_cast<const CoreFields&>(state);
  w.pre_memory_root = state.memory.root();
  CoreFields scratch = w.pre;
  detail::RecordingMemory mem(state.memory, oracle, w);
  execute_instruction(scratch, mem);
  return w;
}

enum class Verdict { Accept, Reject };

enum class VerifyReason {
  Ok,
  PreRootMismatch,   // witness pre-fields do not hash to the agreed pre-root
  MissingOpening,    // instruction touched a leaf the witness does not open
  WrongAddress,      // an opening or write targets a different leaf than required
  BadProof,          // a Merkle path does not verify against the pre memory root
  InconsistentWrite, // write entry disagrees with an opening or with re-execution
  BadPreimage,       // preimage chunk missing, mismatched, or unauthenticated
  ExtraWitnessData,  // unused openings, writes, or chunk
  PostRootMismatch,  // re-execution is fine but the claimed post-root differs
};

inline std::string_view reason_name(VerifyReason r) {
  switch (r) {
    case VerifyReason::Ok: return "ok";
    case VerifyReason::PreRootMismatch: return "pre-root-mismatch";
    case VerifyReason::MissingOpening: return "missing-opening";
    case VerifyReason::WrongAddress: return "wrong-address";
    case VerifyReason::BadProof: return "bad-proof";
    case VerifyReason::InconsistentWrite: return "inconsistent-write";
    case VerifyReason::BadPreimage: return "bad-preimage";
    case VerifyReason::ExtraWitnessData: return "extra-witness-data";
    case VerifyReason::PostRootMismatch: return "post-root-mismatch";
  }
  return "unknown";
}

/// True when the failure is the witness author's fault rather than a wrong claim.
inline bool is_malformed_witness(VerifyReason r) { return r != VerifyReason::Ok && r != VerifyReason::PostRootMismatch; }

struct StepVerdict {
  Verdict verdict = Verdict::Reject;
  VerifyReason reason = VerifyReason::Ok;
  bool accepted() const noexcept { return verdict == Verdict::Accept; }
};

struct StepCheck {
  VerifyReason reason = VerifyReason::Ok;
  Digest post_root;  // meaningful only when reason == Ok
};

namespace detail {

struct WitnessFault {
  VerifyReason reason;
};

/// Serves reads from witness openings only. Holds no tree.
class VerifierMemory {
 public:
  VerifierMemory(const StepWitness& w, bool check_preimage) : w_(w), check_preimage_(check_preimage) {}

  Leaf read_leaf(std::uint32_t index) {
    if (auto it = current_.find(index); it != current_.end()) return it->second;
    if (read_cursor_ >= w_.reads.size()) throw WitnessFault{VerifyReason::MissingOpening};
    const LeafOpening& o = w_.reads[read_cursor_++];
    if (o.proof.leaf_index != index || o.proof.subtree_level != 0) throw WitnessFault{VerifyReason::WrongAddress};
    if (!verify(w_.pre_memory_root, hash_leaf(o.leaf), o.proof)) throw WitnessFault{VerifyReason::BadProof};
    current_[index] = o.leaf;
    return o.leaf;
  }

  void write_word(std::uint32_t addr, std::uint32_t value) {
    const LeafWrite& e = take_write(addr >> 5);
    Leaf next = e.old_leaf;
    store_word(next, addr, value);
    finish_write(addr >> 5, e, next);
  }

  void write_leaf(std::uint32_t index, const Leaf& leaf) { finish_write(index, take_write(index), leaf); }

  Leaf preimage_chunk(const Digest& key, std::uint32_t index) {
    if (!w_.preimage || chunk_used_) throw WitnessFault{VerifyReason::BadPreimage};
    chunk_used_ = true;
    const auto& c = *w_.preimage;
    if (c.key != key || c.index != index) throw WitnessFault{VerifyReason::BadPreimage};
    if (check_preimage_) {
      if (c.proof.leaf_index != index || c.proof.subtree_level != 0 || !verify_preimage_chunk(key, c.bytes, c.proof)) {
        throw WitnessFault{VerifyReason::BadPreimage};
      }
    }
    return c.bytes;
  }

  Digest post_memory_root() const { return post_memory_root_.value_or(w_.pre_memory_root); }

  void expect_fully_consumed() const {
    if (read_cursor_ != w_.reads.size() || write_cursor_ != w_.writes.size() ||
        (w_.preimage.has_value() && !chunk_used_)) {
      throw WitnessFault{VerifyReason::ExtraWitnessData};
    }
  }

 private:
  const LeafWrite& take_write(std::uint32_t index) {
    if (post_memory_root_) throw WitnessFault{VerifyReason::InconsistentWrite};
    if (write_cursor_ >= w_.writes.size()) throw WitnessFault{VerifyReason::MissingOpening};
    const LeafWrite& e = w_.writes[write_cursor_++];
    if (e.proof.leaf_index != index || e.proof.subtree_level != 0) throw WitnessFault{VerifyReason::WrongAddress};
    if (!verify(w_.pre_memory_root, hash_leaf(e.old_leaf), e.proof)) throw WitnessFault{VerifyReason::BadProof};
    if (auto it = current_.find(index); it != current_.end() && it->second != e.old_leaf) {
      throw WitnessFault{VerifyReason::InconsistentWrite};
    }
    return e;
  }

  void finish_write(std::uint32_t index, const LeafWrite& e, const Leaf& next) {
    if (next != e.new_leaf) throw WitnessFault{VerifyReason::InconsistentWrite};
    // Same siblings, new leaf: the only path that changes.
    post_memory_root_ = fold_proof(hash_leaf(next), e.proof, kMemDepth);
    current_[index] = next;
  }

  const StepWitness& w_;
  bool check_preimage_;
  std::size_t read_cursor_ = 0;
  std::size_t write_cursor_ = 0;
  bool chunk_used_ = false;
  std::map<std::uint32_t, Leaf> current_;
  std::optional<Digest> post_memory_root_;
};

}  // namespace detail

/// Re-executes the witnessed instruction from `pre_root` and returns the
/// resulting state root. Constant work: at most a handful of 27-level paths.
inline StepCheck apply_step_witness(const Digest& pre_root, const StepWitness& witness, bool check_preimage = true) {
  if (state_root(witness.pre, witness.pre_memory_root) != pre_root) return {VerifyReason::PreRootMismatch, {}};
  CoreFields fields = witness.pre;
  detail::VerifierMemory mem(witness, check_preimage);
  try {
    execute_instruction(fields, mem);
    mem.expect_fully_consumed();
  } catch (const detail::WitnessFault& fault) {
    return {fault.reason, {}};
  }
  return {VerifyReason::Ok, state_root(fields, mem.post_memory_root())};
}

/// Contract-side one-step check. Receives roots and a bounded witness only.
inline StepVerdict verify_step(const Digest& pre_root, const Digest& claimed_post_root, const StepWitness& witness,
                               bool preimage_chunk_check = true) {
  const StepCheck c = apply_step_witness(pre_root, witness, preimage_chunk_check);
  if (c.reason != VerifyReason::Ok) return {Verdict::Reject, c.reason};
  if (c.post_root != claimed_post_root) return {Verdict::Reject, VerifyReason::PostRootMismatch};
  return {Verdict::Accept, VerifyReason::Ok};
}

}  // namespace opml::fpvm
