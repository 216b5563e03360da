#include <opml/merkle.hpp>
#include <opml/preimage.hpp>

#include <gtest/gtest.h>
#include <openssl/evp.h>

#include <algorithm>
#include <map>
#include <random>

using namespace opml;

namespace {

// Independent one-shot digest, bypassing Hasher.
Digest oracle_hash(const Bytes& msg) {
  Digest d;
  unsigned len = 0;
  const EVP_MD* md = active_hash() == HashAlgorithm::Sha256 ? EVP_sha256() : EVP_sha3_256();
  EVP_Digest(msg.data(), msg.size(), d.bytes.data(), &len, md, nullptr);
  return d;
}

Digest oracle_leaf(const Leaf& l) {
  Bytes m{0x00};
  m.insert(m.end(), l.begin(), l.end());
  return oracle_hash(m);
}

Digest oracle_pair(const Digest& a, const Digest& b) {
  Bytes m(a.bytes.begin(), a.bytes.end());
  m.insert(m.end(), b.bytes.begin(), b.bytes.end());
  return oracle_hash(m);
}

// Dense recomputation for a small tree given as a leaf map.
Digest oracle_root(const std::map<std::uint64_t, Leaf>& leaves, unsigned depth) {
  std::vector<Digest> level(std::size_t{1} << depth);
  for (std::size_t i = 0; i < level.size(); ++i) {
    auto it = leaves.find(i);
    level[i] = oracle_leaf(it == leaves.end() ? Leaf{} : it->second);
  }
  while (level.size() > 1) {
    std::vector<Digest> up(level.size() / 2);
    for (std::size_t i = 0; i < up.size(); ++i) up[i] = oracle_pair(level[2 * i], level[2 * i + 1]);
    level = std::move(up);
  }
  return level[0];
}

Leaf random_leaf(std::mt19937_64& rng) {
  Leaf l;
  for (auto& b : l) b = static_cast<std::uint8_t>(rng());
  return l;
}

}  // namespace

TEST(Hash, Sha256KnownVector) {
  if (active_hash() != HashAlgorithm::Sha256) GTEST_SKIP();
  const Bytes abc{'a', 'b', 'c'};
  EXPECT_EQ(hash_bytes(abc).hex(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Hash, DigestHexRoundTrip) {
  const Digest d = hash_bytes(Bytes{1, 2, 3});
  EXPECT_EQ(Digest::from_hex(d.hex()), d);
  EXPECT_THROW(Digest::from_hex("abc"), ParseError);
}

TEST(Hash, ByteReaderReportsOffset) {
  Bytes b{1, 2, 3};
  ByteReader in(b);
  in.u16();
  try {
    in.u32();
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 2u);
  }
}

TEST(Merkle, ZeroHashChainMatchesOracle) {
  Digest z = oracle_leaf(Leaf{});
  EXPECT_EQ(zero_hash(0), z);
  for (unsigned h = 1; h <= 27; ++h) {
    z = oracle_pair(z, z);
    EXPECT_EQ(zero_hash(h), z) << h;
  }
  EXPECT_EQ(MemTree().root(), z);
}

TEST(Merkle, SmallTreeMatchesDenseOracle) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    SparseMerkle<6> t;
    std::map<std::uint64_t, Leaf> leaves;
    for (int i = 0; i < 10; ++i) {
      const std::uint64_t idx = rng() % 64;
      const Leaf l = (rng() % 5 == 0) ? Leaf{} : random_leaf(rng);
      t.set_leaf(idx, l);
      leaves[idx] = l;
    }
    EXPECT_EQ(t.root(), oracle_root(leaves, 6));
  }
}

TEST(Merkle, RootIndependentOfInsertionOrder) {
  std::mt19937_64 rng(11);
  std::vector<std::pair<std::uint64_t, Leaf>> writes;
  for (int i = 0; i < 200; ++i) writes.emplace_back(rng() % MemTree::leaf_count, random_leaf(rng));
  std::sort(writes.begin(), writes.end(), [](auto& a, auto& b) { return a.first < b.first; });
  writes.erase(std::unique(writes.begin(), writes.end(), [](auto& a, auto& b) { return a.first == b.first; }),
               writes.end());
  MemTree a, b;
  for (auto& [i, l] : writes) a.set_leaf(i, l);
  std::shuffle(writes.begin(), writes.end(), rng);
  for (auto& [i, l] : writes) b.set_leaf(i, l);
  EXPECT_EQ(a.root(), b.root());
}

TEST(Merkle, UpdateLeafSemantics) {
  std::mt19937_64 rng(3);
  MemTree t;
  const Digest empty = t.root();
  t.set_leaf(5, Leaf{});
  EXPECT_EQ(t.root(), empty);
  Leaf l = random_leaf(rng);
  MemTree t2 = t.update_leaf(5, l);
  EXPECT_EQ(t.root(), empty);
  EXPECT_NE(t2.root(), empty);
  t2.set_leaf(5, Leaf{});
  EXPECT_EQ(t2.root(), empty);

  MemTree x = t.update_leaf(0, l), y = t.update_leaf(1, l);
  EXPECT_NE(x.root(), y.root());
  EXPECT_THROW(t.set_leaf(MemTree::leaf_count, l), RangeError);
}

TEST(Merkle, UpdateChangesOnlyPath) {
  std::mt19937_64 rng(5);
  MemTree t;
  for (int i = 0; i < 50; ++i) t.set_leaf(rng() % 4096, random_leaf(rng));
  MemTree u = t.update_leaf(77, random_leaf(rng));
  for (std::uint64_t base = 0; base < 4096; base += 64) {
    if (base <= 77 && 77 < base + 64) {
      EXPECT_NE(t.subtree_root_at(base, 6), u.subtree_root_at(base, 6));
    } else {
      EXPECT_EQ(t.subtree_root_at(base, 6), u.subtree_root_at(base, 6));
    }
  }
}

TEST(Merkle, ProveVerifyCompletenessAndSoundness) {
  std::mt19937_64 rng(99);
  MemTree t;
  std::vector<std::uint64_t> written;
  for (int i = 0; i < 300; ++i) {
    written.push_back(rng() % MemTree::leaf_count);
    t.set_leaf(written.back(), random_leaf(rng));
  }
  int mutations = 0;
  // Subtrees that hold data: an empty subtree next to an empty sibling is
  // position-ambiguous by construction, which is why witnesses pin addresses.
  for (int trial = 0; trial < 100; ++trial) {
    const unsigned level = static_cast<unsigned>(rng() % 28);
    const std::uint64_t idx = written[rng() % written.size()] >> level << level;
    const MerkleProof p = t.prove(idx, level);
    const Digest claimed = t.subtree_root_at(idx, level);
    ASSERT_TRUE(verify_proof(t.root(), claimed, p, 27));
    ASSERT_EQ(p.siblings.size(), 27 - level);
    for (int m = 0; m < 10; ++m, ++mutations) {
      MerkleProof q = p;
      Digest c = claimed;
      const unsigned where = static_cast<unsigned>(rng() % (q.siblings.size() + 2));
      if (where == 0) {
        c.bytes[rng() % 32] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
      } else if (where == 1) {
        // Flip an index bit within the valid range.
        q.leaf_index ^= static_cast<std::uint32_t>(1u << (level + rng() % (27 - level + (level == 27))));
      } else {
        q.siblings[where - 2].bytes[rng() % 32] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
      }
      EXPECT_FALSE(verify_proof(t.root(), c, q, 27));
    }
  }
  EXPECT_EQ(mutations, 1000);
}

TEST(Merkle, LeafProofSize) {
  MemTree t;
  const MerkleProof p = t.prove(12345, 0);
  EXPECT_EQ(p.siblings.size() * 32, 27u * 32u);
  Bytes ser;
  p.serialize(ser);
  EXPECT_EQ(ser.size(), 6u + 27u * 32u);
  ByteReader in(ser);
  EXPECT_EQ(MerkleProof::deserialize(in), p);
}

TEST(Merkle, WholeTreeProof) {
  MemTree t;
  t.set_leaf(3, Leaf{1});
  const MerkleProof p = t.prove(0, 27);
  EXPECT_TRUE(p.siblings.empty());
  EXPECT_TRUE(verify(t.root(), t.root(), p));
  EXPECT_FALSE(verify(t.root(), MemTree().root(), p));
  EXPECT_EQ(subtree_root(t, 0, 27), t.root());
}

TEST(Merkle, MisalignedProofThrows) {
  MemTree t;
  EXPECT_THROW(t.prove(3, 2), AlignmentError);
  EXPECT_THROW(subtree_root(t, 0x20, 2), AlignmentError);
}

TEST(Merkle, SubtreeRoots) {
  MemTree t;
  EXPECT_EQ(subtree_root(t, 0x0200'0000, 12), zero_hash(12));
  const Digest before = subtree_root(t, 0x0200'0000, 12);
  t.write_bytes(0x0200'0000, Bytes{1, 2, 3});
  EXPECT_NE(subtree_root(t, 0x0200'0000, 12), before);
  EXPECT_EQ(subtree_root(t, 0x0300'0000, 12), zero_hash(12));
  Leaf l{};
  l[0] = 1;
  l[1] = 2;
  l[2] = 3;
  EXPECT_EQ(subtree_root(t, 0x0200'0000, 0), hash_leaf(l));
}

TEST(Merkle, ComposeRootMatchesTree) {
  MemTree t;
  t.write_bytes(0x0200'0000, Bytes{9, 9});
  t.write_bytes(0x0800'0000, Bytes{7});
  t.write_bytes(0, Bytes(100, 0xAB));
  std::vector<SubtreePlacement> parts{
      {0, 10, subtree_root(t, 0, 10)},
      {0x0200'0000 >> 5, 0, subtree_root(t, 0x0200'0000, 0)},
      {0x0800'0000 >> 5, 0, subtree_root(t, 0x0800'0000, 0)},
  };
  EXPECT_EQ(compose_root(27, parts), t.root());
  parts.push_back({0, 0, zero_hash(0)});
  EXPECT_THROW(compose_root(27, parts), Error);
}

TEST(Merkle, GraftMovesSubtrees) {
  MemTree a, b;
  a.write_bytes(0x0300'0000, Bytes{1, 2, 3, 4, 5});
  b.graft(0x0002'0000 >> 5, 12, a.subtree(0x0300'0000 >> 5, 12));
  EXPECT_EQ(subtree_root(b, 0x0002'0000, 12), subtree_root(a, 0x0300'0000, 12));
  EXPECT_EQ(b.read_bytes(0x0002'0000, 5), (Bytes{1, 2, 3, 4, 5}));
}

TEST(Preimage, KeyEqualsFieldSubtreeRoot) {
  Bytes v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::uint8_t>(i * 7 + 1);
  MemTree t;
  t.write_bytes(0x0410'0000, v);
  EXPECT_EQ(preimage_key(v), subtree_root(t, 0x0410'0000, 12));
  v.push_back(0);
  EXPECT_EQ(preimage_key(v), subtree_root(t, 0x0410'0000, 12));
}

TEST(Preimage, OracleChunksAndProofs) {
  PreimageOracle o;
  Bytes v(100, 0x5A);
  const Digest k = o.insert(v);
  EXPECT_TRUE(o.contains(k));
  Leaf c = o.chunk(k, 3);
  EXPECT_EQ(c[3], 0x5A);
  EXPECT_EQ(c[4], 0);
  EXPECT_TRUE(verify_preimage_chunk(k, c, o.chunk_proof(k, 3)));
  c[0] ^= 1;
  EXPECT_FALSE(verify_preimage_chunk(k, c, o.chunk_proof(k, 3)));
  EXPECT_THROW(o.insert(hash_bytes(v), v), Error);
  EXPECT_THROW(o.chunk(hash_bytes(v), 0), MissingPreimage);
  EXPECT_THROW(o.insert(Bytes(kMaxPreimageBytes + 1, 1)), RangeError);
}
