#pragma once

// Phase transition checks. The entrance check proves the node VM's initial
// state was built from the agreed graph state; the exit check proves the VM's
// output is what the graph state claims for the node, and that the graph step
// changed nothing else.

#include <opml/ml/engine.hpp>

namespace opml::multiphase {

using ml::CompGraph;
using ml::OpKind;

struct EntranceBundle {
  Digest s_prev_root;   // graph state before the node
  Digest m0_root;       // claimed VM initial state root
  Digest operand_root;  // r_k: operand field subtree root (= its preimage key)
  MerkleProof operand_proof;
  std::optional<Digest> param_root;  // parameter field, for ops that take one
  std::optional<MerkleProof> param_proof;
  Digest program_root;  // level-10 subtree of the node program

  bool operator==(const EntranceBundle&) const = default;
};

struct ExitBundle {
  Digest s_prev_root;       // graph state before the node
  Digest s_next_root;       // graph state after the node
  Digest vm_final_root;     // M_m
  fpvm::CoreFields vm_core; // registers etc. of M_m
  Digest vm_memory_root;
  Digest output_root;       // r_o: VM output field
  MerkleProof output_proof;
  Digest node_root;         // r_v: node field in s_next
  MerkleProof node_proof;   // same siblings authenticate the field in s_prev
  Digest prev_node_root;    // node field in s_prev (zero before the node runs)

  bool operator==(const ExitBundle&) const = default;
};

struct CheckResult {
  bool accepted = false;
  std::string reason;
  explicit operator bool() const { return accepted; }
};

inline CheckResult reject(std::string why) { return {false, std::move(why)}; }
inline CheckResult accept() { return {true, "ok"}; }

inline Leaf digest_leaf(const Digest& d) {
  Leaf l;
  std::copy(d.bytes.begin(), d.bytes.end(), l.begin());
  return l;
}

/// M*_0 from public parts: program subtree, operand key leaf at input_base,
/// parameter key leaf at model_base, zeros elsewhere, reset registers.
inline Digest compose_m0_root(const Digest& program_root, const Digest& operand_key,
                              const std::optional<Digest>& param_key) {
  std::vector<SubtreePlacement> parts = {
      {layout::kProgramBase >> 5, layout::kProgramLevel, program_root},
      {layout::kInputBase >> 5, layout::kInputLevel, hash_leaf(digest_leaf(operand_key))},
  };
  if (param_key) parts.push_back({layout::kModelBase >> 5, layout::kModelLevel, hash_leaf(digest_leaf(*param_key))});
  return fpvm::state_root(fpvm::CoreFields{}, compose_root(kMemDepth, parts));
}

namespace detail {

inline bool field_proof_ok(const Digest& root, const Digest& field, const MerkleProof& p, std::uint32_t node_id) {
  return p.leaf_index == (ml::field_address(node_id) >> 5) && p.subtree_level == layout::kTensorFieldLevel &&
         verify(root, field, p);
}

}  // namespace detail

inline CheckResult entrance_check(const CompGraph& g, std::uint32_t node_id, const EntranceBundle& b) {
  if (node_id >= g.size()) return reject("node out of range");
  const auto& n = g.node(node_id);
  if (!ml::is_compute(n.op)) return reject("node has no VM program");
  if (b.program_root != ml::program_root(n.op)) return reject("program root is not the registered one");
  if (!detail::field_proof_ok(b.s_prev_root, b.operand_root, b.operand_proof, n.input_ids[0])) {
    return reject("operand field proof");
  }
  if (n.params.has_value() != (b.param_root.has_value() && b.param_proof.has_value())) {
    return reject("parameter field presence");
  }
  if (n.params && !detail::field_proof_ok(b.s_prev_root, *b.param_root, *b.param_proof, *n.params)) {
    return reject("parameter field proof");
  }
  if (compose_m0_root(b.program_root, b.operand_root, b.param_root) != b.m0_root) {
    return reject("M0 is not reconstructible from program, operand and parameter roots");
  }
  return accept();
}

inline CheckResult exit_check(std::uint32_t node_id, const ExitBundle& b) {
  if (fpvm::state_root(b.vm_core, b.vm_memory_root) != b.vm_final_root) return reject("VM state fields");
  if (!b.vm_core.exited || b.vm_core.exit_code != 0) return reject("VM did not halt cleanly");
  if (b.output_proof.leaf_index != (layout::kOutputBase >> 5) ||
      b.output_proof.subtree_level != layout::kTensorFieldLevel ||
      !verify(b.vm_memory_root, b.output_root, b.output_proof)) {
    return reject("output field proof");
  }
  if (!detail::field_proof_ok(b.s_next_root, b.node_root, b.node_proof, node_id)) return reject("node field proof");
  if (!verify(b.s_prev_root, b.prev_node_root, b.node_proof)) return reject("graph step changed other fields");
  if (b.output_root != b.node_root) return reject("VM output differs from the node field");
  return accept();
}

// ---------------------------------------------------------------------------
// Honest bundle construction

struct EntranceSetup {
  fpvm::VmState m0;
  std::shared_ptr<PreimageOracle> oracle;
  EntranceBundle bundle;
};

inline EntranceSetup build_entrance_state(const CompGraph& g, std::uint32_t node_id, const MemTree& s_prev) {
  EntranceSetup out;
  out.oracle = std::make_shared<PreimageOracle>();
  ml::NodeVmSetup setup = ml::build_node_vm(g, node_id, s_prev, *out.oracle);
  const auto& n = g.node(node_id);
  out.m0 = std::move(setup.initial);
  out.bundle.s_prev_root = s_prev.root();
  out.bundle.m0_root = fpvm::state_root(out.m0);
  out.bundle.operand_root = setup.operand_key;
  out.bundle.operand_proof = ml::field_proof(s_prev, n.input_ids[0]);
  if (n.params) {
    out.bundle.param_root = *setup.param_key;
    out.bundle.param_proof = ml::field_proof(s_prev, *n.params);
  }
  out.bundle.program_root = ml::program_root(n.op);
  return out;
}

inline ExitBundle build_exit_bundle(std::uint32_t node_id, const MemTree& s_prev, const MemTree& s_next,
                                    const fpvm::VmState& vm_final) {
  ExitBundle b;
  b.s_prev_root = s_prev.root();
  b.s_next_root = s_next.root();
  b.vm_final_root = fpvm::state_root(vm_final);
  b.vm_core = static_cast<const fpvm::CoreFields&>(vm_final);
  b.vm_memory_root = vm_final.memory.root();
  b.output_root = subtree_root(vm_final.memory, layout::kOutputBase, layout::kTensorFieldLevel);
  b.output_proof = vm_final.memory.prove(layout::kOutputBase >> 5, layout::kTensorFieldLevel);
  b.node_root = ml::field_root(s_next, node_id);
  b.node_proof = ml::field_proof(s_next, node_id);
  b.prev_node_root = ml::field_root(s_prev, node_id);
  return b;
}

}  // namespace opml::multiphase
