#pragma once

// Key-value preimage oracle used by the VM's PREIMAGE instruction.
//
// A preimage key is the Merkle root of the value laid out as a depth-12
// region (4096 leaves, 128 KiB), zero padded. The same bytes written into a
// level-12 region of VM memory therefore have a subtree root equal to their
// preimage key, and any 32-byte chunk can be authenticated with a 12-sibling
// proof instead of re-hashing the whole value.

#include <opml/merkle.hpp>

#include <map>
#include <stdexcept>

namespace opml {

inline constexpr unsigned kPreimageDepth = 12;
inline constexpr std::size_t kMaxPreimageBytes = std::size_t{32} << kPreimageDepth;

using PreimageTree = SparseMerkle<kPreimageDepth>;

class MissingPreimage : public Error {
 public:
  explicit MissingPreimage(const Digest& key) : Error("missing preimage for key " + key.hex()), key_(key) {}
  const Digest& key() const noexcept { return key_; }

 private:
  Digest key_;
};

inline PreimageTree preimage_tree(ByteView value) {
  if (value.size() > kMaxPreimageBytes) throw RangeError("preimage exceeds 128 KiB");
  PreimageTree t;
  t.write_bytes(0, value);
  return t;
}

inline Digest preimage_key(ByteView value) { return preimage_tree(value).root(); }

inline bool verify_preimage_chunk(const Digest& key, const Leaf& chunk, const MerkleProof& proof) {
  return verify_proof(key, hash_leaf(chunk), proof, kPreimageDepth);
}

class PreimageOracle {
 public:
  /// Stores `value` and returns its key.
  Digest insert(ByteView value) {
    PreimageTree tree = preimage_tree(value);
    Digest key = tree.root();
    entries_.insert_or_assign(key, Entry{Bytes(value.begin(), value.end()), std::move(tree)});
    return key;
  }

  /// Stores `value` under `key`; rejects a value that does not hash to it.
  void insert(const Digest& key, ByteView value) {
    PreimageTree tree = preimage_tree(value);
    if (tree.root() != key) throw Error("preimage does not hash to its key " + key.hex());
    entries_.insert_or_assign(key, Entry{Bytes(value.begin(), value.end()), std::move(tree)});
  }

  bool contains(const Digest& key) const { return entries_.count(key) != 0; }
  std::size_t size() const { return entries_.size(); }

  const Bytes& get(const Digest& key) const { return entry(key).bytes; }

  Leaf chunk(const Digest& key, std::uint32_t index) const {
    if (index >= PreimageTree::leaf_count) throw RangeError("preimage chunk index out of range");
    return entry(key).tree.leaf(index);
  }

  MerkleProof chunk_proof(const Digest& key, std::uint32_t index) const {
    if (index >= PreimageTree::leaf_count) throw RangeError("preimage chunk index out of range");
    return entry(key).tree.prove(index, 0);
  }

  void merge(const PreimageOracle& other) {
    for (const auto& [k, v] : other.entries_) entries_.insert_or_assign(k, v);
  }

 private:
  struct Entry {
    Bytes bytes;
    PreimageTree tree;
  };

  const Entry& entry(const Digest& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw MissingPreimage(key);
    return it->second;
  }

  std::map<Digest, Entry> entries_;
};

}  // namespace opml
