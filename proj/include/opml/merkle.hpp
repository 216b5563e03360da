#pragma once

// Fixed-depth sparse binary Merkle tree with structural sharing.
//
// Leaves are 32 bytes. A leaf hashes as H(0x00 || leaf); an internal node as
// H(left || right). Absent subtrees are all-zero and are represented by null
// pointers whose digests come from the memoized zero-hash chain, so an empty
// tree of any depth costs nothing. Updates copy only the root-to-leaf path;
// copies of a tree share every untouched node and are safe to read from
// several threads.

#include <opml/hash.hpp>

#include <array>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

namespace opml {

inline constexpr unsigned kMaxMerkleDepth = 32;

/// zero_hash(0) = H(0x00 || 0^32); zero_hash(h+1) = H(zero_hash(h) || zero_hash(h)).
inline const Digest& zero_hash(unsigned height) {
  static const std::array<Digest, kMaxMerkleDepth + 1> table = [] {
    std::array<Digest, kMaxMerkleDepth + 1> t;
    t[0] = hash_leaf(Leaf{});
    for (unsigned h = 1; h <= kMaxMerkleDepth; ++h) t[h] = hash_pair(t[h - 1], t[h - 1]);
    return t;
  }();
  if (height > kMaxMerkleDepth) throw RangeError("zero_hash: height out of range");
  return table[height];
}

/// Membership proof of a subtree root (subtree_level 0 = single leaf).
/// Siblings are ordered bottom-up.
struct MerkleProof {
  std::uint32_t leaf_index = 0;
  std::uint8_t subtree_level = 0;
  std::vector<Digest> siblings;

  bool operator==(const MerkleProof&) const = default;

  std::size_t serialized_size() const { return 6 + 32 * siblings.size(); }

  /// u32 leaf_index, u8 subtree_level, u8 sibling_count, siblings.
  void serialize(Bytes& out) const {
    put_u32(out, leaf_index);
    put_u8(out, subtree_level);
    put_u8(out, static_cast<std::uint8_t>(siblings.size()));
    for (const auto& s : siblings) put_digest(out, s);
  }

  static MerkleProof deserialize(ByteReader& in) {
    MerkleProof p;
    p.leaf_index = in.u32();
    p.subtree_level = in.u8();
    const std::uint8_t count = in.u8();
    p.siblings.reserve(count);
    for (std::uint8_t i = 0; i < count; ++i) p.siblings.push_back(in.digest());
    return p;
  }
};

/// Root reached by folding `claimed` up the proof path. Returns nullopt when
/// the proof is not well-formed for a tree of `depth` levels.
inline std::optional<Digest> fold_proof(const Digest& claimed, const MerkleProof& proof, unsigned depth) {
  if (proof.subtree_level > depth) return std::nullopt;
  if (proof.siblings.size() != depth - proof.subtree_level) return std::nullopt;
  if (depth < 32 && (static_cast<std::uint64_t>(proof.leaf_index) >> depth) != 0) return std::nullopt;
  const std::uint64_t align_mask = (std::uint64_t{1} << proof.subtree_level) - 1;
  if ((proof.leaf_index & align_mask) != 0) return std::nullopt;
  Digest cur = claimed;
  std::uint64_t idx = static_cast<std::uint64_t>(proof.leaf_index) >> proof.subtree_level;
  for (const auto& sibling : proof.siblings) {
    cur = (idx & 1) ? hash_pair(sibling, cur) : hash_pair(cur, sibling);
    idx >>= 1;
  }
  return cur;
}

inline bool verify_proof(const Digest& root, const Digest& claimed, const MerkleProof& proof, unsigned depth) {
  auto folded = fold_proof(claimed, proof, depth);
  return folded && *folded == root;
}

/// A subtree root placed at (index, level); used to reconstruct roots of
/// trees known only by a handful of subtrees with zeros elsewhere.
struct SubtreePlacement {
  std::uint64_t leaf_index;
  unsigned level;
  Digest root;
};

namespace detail {

inline Digest compose(unsigned height, std::uint64_t prefix, const std::vector<SubtreePlacement>& parts) {
  bool any = false;
  for (const auto& p : parts) {
    if ((p.leaf_index >> height) != prefix) continue;
    if (p.level == height) return p.root;
    if (p.level < height) any = true;
  }
  if (!any) return zero_hash(height);
  return hash_pair(compose(height - 1, prefix * 2, parts), compose(height - 1, prefix * 2 + 1, parts));
}

}  // namespace detail

/// Root of a depth-`depth` tree whose only non-zero content is `parts`.
/// Placements must be aligned and pairwise disjoint.
inline Digest compose_root(unsigned depth, const std::vector<SubtreePlacement>& parts) {
  for (std::size_t a = 0; a < parts.size(); ++a) {
    const auto& p = parts[a];
    if (p.level > depth) throw RangeError("compose_root: level exceeds depth");
    if ((p.leaf_index & ((std::uint64_t{1} << p.level) - 1)) != 0) throw AlignmentError("compose_root: misaligned placement");
    if ((p.leaf_index >> depth) != 0) throw RangeError("compose_root: index out of range");
    for (std::size_t b = a + 1; b < parts.size(); ++b) {
      const auto& q = parts[b];
      const unsigned top = std::max(p.level, q.level);
      if ((p.leaf_index >> top) == (q.leaf_index >> top)) throw Error("compose_root: overlapping placements");
    }
  }
  return detail::compose(depth, 0, parts);
}

/// Tree nodes allocated by this thread; lets callers assert a code path never
/// builds a tree.
inline std::uint64_t& merkle_node_allocations() {
  thread_local std::uint64_t n = 0;
  return n;
}

template <unsigned Depth>
class SparseMerkle {
  static_assert(Depth >= 1 && Depth <= 31, "depth must fit a 32-bit leaf index");

 public:
  static constexpr unsigned depth = Depth;
  static constexpr std::uint64_t leaf_count = std::uint64_t{1} << Depth;
  static constexpr std::uint64_t byte_span = leaf_count * 32;

  struct Node;
  using NodePtr = std::shared_ptr<const Node>;

  struct Node {
    Digest hash;
    NodePtr left;
    NodePtr right;
    Leaf leaf{};
  };

  SparseMerkle() = default;

  Digest root() const { return root_ ? root_->hash : zero_hash(Depth); }

  Leaf leaf(std::uint64_t index) const {
    check_index(index);
    const Node* n = root_.get();
    for (unsigned h = Depth; h > 0 && n != nullptr; --h) {
      n = ((index >> (h - 1)) & 1) ? n->right.get() : n->left.get();
    }
    return n ? n->leaf : Leaf{};
  }

  void set_leaf(std::uint64_t index, const Leaf& value) {
    check_index(index);
    root_ = set_rec(root_, Depth, index, value);
  }

  /// Persistent update: returns a new version, *this is unchanged.
  [[nodiscard]] SparseMerkle update_leaf(std::uint64_t index, const Leaf& value) const {
    SparseMerkle copy = *this;
    copy.set_leaf(index, value);
    return copy;
  }

  /// Digest of the node covering leaves [index, index + 2^level).
  Digest subtree_root_at(std::uint64_t index, unsigned level) const {
    check_aligned(index, level);
    const Node* n = node_at(index, level);
    return n ? n->hash : zero_hash(level);
  }

  MerkleProof prove(std::uint64_t index, unsigned level) const {
    check_aligned(index, level);
    MerkleProof proof;
    proof.leaf_index = static_cast<std::uint32_t>(index);
    proof.subtree_level = static_cast<std::uint8_t>(level);
    proof.siblings.resize(Depth - level);
    const Node* n = root_.get();
    for (unsigned h = Depth; h > level; --h) {
      const bool right = (index >> (h - 1)) & 1;
      const Node* sib = n ? (right ? n->left.get() : n->right.get()) : nullptr;
      proof.siblings[h - 1 - level] = sib ? sib->hash : zero_hash(h - 1);
      n = n ? (right ? n->right.get() : n->left.get()) : nullptr;
    }
    return proof;
  }

  /// Shared handle to a subtree, for grafting between trees of equal depth.
  NodePtr subtree(std::uint64_t index, unsigned level) const {
    check_aligned(index, level);
    const Node* n = node_at(index, level);
    if (n == nullptr) return nullptr;
    // Re-walk holding shared ownership.
    NodePtr cur = root_;
    for (unsigned h = Depth; h > level; --h) cur = ((index >> (h - 1)) & 1) ? cur->right : cur->left;
    return cur;
  }

  void graft(std::uint64_t index, unsigned level, NodePtr node) {
    check_aligned(index, level);
    root_ = graft_rec(root_, Depth, index, level, std::move(node));
  }

  // Byte-addressed access. Address = leaf_index * 32 + offset.

  std::uint32_t read_u32(std::uint64_t addr) const {
    const Leaf l = leaf(addr >> 5);
    const std::size_t off = addr & 31;
    if (off > 28) throw AlignmentError("read_u32 straddles a leaf boundary");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(l[off + i]) << (8 * i);
    return v;
  }

  void write_u32(std::uint64_t addr, std::uint32_t value) {
    Leaf l = leaf(addr >> 5);
    const std::size_t off = addr & 31;
    if (off > 28) throw AlignmentError("write_u32 straddles a leaf boundary");
    for (int i = 0; i < 4; ++i) l[off + i] = static_cast<std::uint8_t>(value >> (8 * i));
    set_leaf(addr >> 5, l);
  }

  void write_bytes(std::uint64_t addr, ByteView data) {
    if (addr + data.size() > byte_span) throw RangeError("write_bytes past end of address space");
    std::size_t done = 0;
    while (done < data.size()) {
      const std::uint64_t a = addr + done;
      Leaf l = leaf(a >> 5);
      const std::size_t off = a & 31;
      const std::size_t n = std::min<std::size_t>(32 - off, data.size() - done);
      std::memcpy(l.data() + off, data.data() + done, n);
      set_leaf(a >> 5, l);
      done += n;
    }
  }

  Bytes read_bytes(std::uint64_t addr, std::size_t len) const {
    if (addr + len > byte_span) throw RangeError("read_bytes past end of address space");
    Bytes out(len);
    std::size_t done = 0;
    while (done < len) {
      const std::uint64_t a = addr + done;
      const Leaf l = leaf(a >> 5);
      const std::size_t off = a & 31;
      const std::size_t n = std::min<std::size_t>(32 - off, len - done);
      std::memcpy(out.data() + done, l.data() + off, n);
      done += n;
    }
    return out;
  }

  /// Bytes of the aligned region [index, index + 2^level) leaves, with
  /// trailing zero bytes trimmed.
  Bytes region_bytes_trimmed(std::uint64_t index, unsigned level) const {
    check_aligned(index, level);
    Bytes out;
    collect(node_at(index, level), level, 0, out);
    while (!out.empty() && out.back() == 0) out.pop_back();
    return out;
  }

 private:
  static void check_index(std::uint64_t index) {
    if (index >= leaf_count) throw RangeError("leaf index out of range");
  }

  static void check_aligned(std::uint64_t index, unsigned level) {
    if (level > Depth) throw RangeError("subtree level exceeds tree depth");
    check_index(index);
    if ((index & ((std::uint64_t{1} << level) - 1)) != 0) throw AlignmentError("index not aligned to subtree level");
  }

  const Node* node_at(std::uint64_t index, unsigned level) const {
    const Node* n = root_.get();
    for (unsigned h = Depth; h > level && n != nullptr; --h) {
      n = ((index >> (h - 1)) & 1) ? n->right.get() : n->left.get();
    }
    return n;
  }

  static Digest digest_of(const NodePtr& n, unsigned height) { return n ? n->hash : zero_hash(height); }

  static NodePtr make_internal(NodePtr left, NodePtr right, unsigned height) {
    if (!left && !right) return nullptr;
    auto node = std::make_shared<Node>();
    ++merkle_node_allocations();
    node->hash = hash_pair(digest_of(left, height - 1), digest_of(right, height - 1));
    node->left = std::move(left);
    node->right = std::move(right);
    return node;
  }

  static NodePtr set_rec(const NodePtr& n, unsigned height, std::uint64_t index, const Leaf& value) {
    if (height == 0) {
      if (value == Leaf{}) return nullptr;
      auto leaf = std::make_shared<Node>();
      ++merkle_node_allocations();
      leaf->leaf = value;
      leaf->hash = hash_leaf(value);
      return leaf;
    }
    const bool right = (index >> (height - 1)) & 1;
    NodePtr l = n ? n->left : nullptr;
    NodePtr r = n ? n->right : nullptr;
    if (right) {
      r = set_rec(r, height - 1, index, value);
    } else {
      l = set_rec(l, height - 1, index, value);
    }
    return make_internal(std::move(l), std::move(r), height);
  }

  static NodePtr graft_rec(const NodePtr& n, unsigned height, std::uint64_t index, unsigned level, NodePtr node) {
    if (height == level) return node;
    const bool right = (index >> (height - 1)) & 1;
    NodePtr l = n ? n->left : nullptr;
    NodePtr r = n ? n->right : nullptr;
    if (right) {
      r = graft_rec(r, height - 1, index, level, std::move(node));
    } else {
      l = graft_rec(l, height - 1, index, level, std::move(node));
    }
    return make_internal(std::move(l), std::move(r), height);
  }

  static void collect(const Node* n, unsigned height, std::uint64_t base_leaf, Bytes& out) {
    if (n == nullptr) return;
    if (height == 0) {
      const std::size_t at = static_cast<std::size_t>(base_leaf) * 32;
      if (out.size() < at + 32) out.resize(at + 32, 0);
      std::memcpy(out.data() + at, n->leaf.data(), 32);
      return;
    }
    collect(n->left.get(), height - 1, base_leaf * 2, out);
    collect(n->right.get(), height - 1, base_leaf * 2 + 1, out);
  }

  NodePtr root_;
};

// The fraud-proof VM's memory: 2^27 leaves x 32 bytes = the full 32-bit space.
inline constexpr unsigned kMemDepth = 27;
using MemTree = SparseMerkle<kMemDepth>;

inline bool verify(const Digest& root, const Digest& claimed, const MerkleProof& proof) {
  return verify_proof(root, claimed, proof, kMemDepth);
}

/// Digest of the memory region starting at byte address `region_base` that
/// spans 32 * 2^region_level bytes.
inline Digest subtree_root(const MemTree& tree, std::uint32_t region_base, unsigned region_level) {
  if (region_level > kMemDepth) throw RangeError("region level exceeds tree depth");
  const std::uint64_t span = std::uint64_t{32} << region_level;
  if (region_base % span != 0) throw AlignmentError("region base not aligned to region size");
  return tree.subtree_root_at(region_base >> 5, region_level);
}

}  // namespace opml
