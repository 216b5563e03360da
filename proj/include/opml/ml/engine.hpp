#pragma once

// Graph execution: native fixed-point evaluation with per-node state
// commitments, VM evaluation one node at a time, and VM evaluation of the
// whole graph as a single program.

#include <opml/fpvm/vm.hpp>
#include <opml/ml/lowering.hpp>

#include <functional>

namespace opml::ml {

// Graph state: node i's output occupies the 128 KiB field at address i << 17
// of a depth-27 tree. The phase-1 commitment after step t is that tree's root.
inline std::uint32_t field_address(std::uint32_t node_id) {
  if (node_id >= kMaxNodes) throw RangeError("node id out of range");
  return node_id << (layout::kTensorFieldLevel + 5);
}

inline Digest field_root(const MemTree& state, std::uint32_t node_id) {
  return subtree_root(state, field_address(node_id), layout::kTensorFieldLevel);
}

inline MerkleProof field_proof(const MemTree& state, std::uint32_t node_id) {
  return state.prove(field_address(node_id) >> 5, layout::kTensorFieldLevel);
}

/// Raw contents of a 128 KiB field, trailing zeros trimmed; its preimage key
/// equals the field's subtree root.
inline Bytes field_bytes(const MemTree& tree, std::uint32_t base) {
  return tree.region_bytes_trimmed(base >> 5, layout::kTensorFieldLevel);
}

/// Parses a tensor stored at `base` in VM or graph-state memory.
inline FixedTensor read_tensor_at(const MemTree& tree, std::uint32_t base) {
  // Trailing zero bytes are implicit, so pad the trimmed field to full size.
  Bytes raw = field_bytes(tree, base);
  raw.resize(layout::kTensorFieldBytes, 0);
  ByteReader in(raw);
  return FixedTensor::deserialize(in);
}

inline void write_field(MemTree& state, std::uint32_t node_id, const FixedTensor& t) {
  const std::uint32_t base = field_address(node_id);
  state.graft(base >> 5, layout::kTensorFieldLevel, nullptr);
  state.write_bytes(base, t.serialize());
}

struct ExecOptions {
  unsigned threads = 1;
};

/// Hook run after node `id`'s field is written; may rewrite the field.
using FieldTamper = std::function<void(std::uint32_t node_id, MemTree& state)>;

struct GraphExecution {
  std::vector<FixedTensor> values;  // per node, as read back from its field
  std::vector<MemTree> states;      // states[t] after t steps, t = 0..N

  const FixedTensor& output(const CompGraph& g) const { return values.at(g.output_id()); }
  std::vector<Digest> commitments() const {
    std::vector<Digest> out;
    out.reserve(states.size());
    for (const auto& s : states) out.push_back(s.root());
    return out;
  }
};

/// S_0 holds the input and every Const; step t computes node t-1 (identity
/// for Input and Const nodes).
inline MemTree initial_graph_state(const CompGraph& g, const FixedTensor& input) {
  g.check_input(input);
  MemTree s;
  for (const auto& n : g.nodes()) {
    if (n.op == OpKind::Input) write_field(s, n.id, input);
    if (n.op == OpKind::Const) write_field(s, n.id, *n.value);
  }
  return s;
}

inline GraphExecution execute_graph(const CompGraph& g, const FixedTensor& input, const ExecOptions& opts = {},
                                    const FieldTamper& tamper = {}) {
  GraphExecution ex;
  ex.values.resize(g.size());
  ex.states.reserve(g.size() + 1);
  ex.states.push_back(initial_graph_state(g, input));
  for (const auto& n : g.nodes()) {
    MemTree s = ex.states.back();
    if (n.op == OpKind::Input) {
      ex.values[n.id] = input;
    } else if (n.op == OpKind::Const) {
      ex.values[n.id] = *n.value;
    } else {
      const FixedTensor* params = n.params ? &ex.values[*n.params] : nullptr;
      FixedTensor out = apply_op(n.op, ex.values[n.input_ids[0]], params, opts.threads);
      write_field(s, n.id, out);
      ex.values[n.id] = std::move(out);
    }
    if (tamper) {
      tamper(n.id, s);
      try {
        ex.values[n.id] = read_tensor_at(s, field_address(n.id));
      } catch (const Error&) {
        // Unparseable field: keep the computed value for downstream nodes.
      }
    }
    ex.states.push_back(std::move(s));
  }
  return ex;
}

struct NativeResult {
  FixedTensor output;
  std::vector<Digest> commitments;
};

inline NativeResult execute_native(const CompGraph& g, const FixedTensor& input, const ExecOptions& opts = {}) {
  GraphExecution ex = execute_graph(g, input, opts);
  return NativeResult{ex.output(g), ex.commitments()};
}

// ---------------------------------------------------------------------------
// Per-node VM (two-phase protocol)

inline Digest program_root(OpKind op) {
  static std::mutex mu;
  static std::map<OpKind, Digest> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(op);
  if (it == cache.end()) {
    MemTree t;
    t.write_bytes(layout::kProgramBase, fpvm::program_bytes(node_program(op).words));
    it = cache.emplace(op, subtree_root(t, layout::kProgramBase, layout::kProgramLevel)).first;
  }
  return it->second;
}

/// M_0 for a node: its op program, the operand key at input_base and the
/// parameter key (if any) at model_base; everything else zero.
inline fpvm::VmState node_initial_state(OpKind op, const Digest& operand_key, const std::optional<Digest>& param_key) {
  fpvm::VmState s = fpvm::load_program(node_program(op).words);
  s.memory.set_leaf(layout::kInputBase >> 5, operand_key.bytes);
  if (param_key) s.memory.set_leaf(layout::kModelBase >> 5, param_key->bytes);
  return s;
}

struct LoweredNode {
  Bytes program;
  std::vector<Digest> preimages;  // keys the program will PREIMAGE-load
};

inline LoweredNode lower_node(const GraphNode& node, const Digest& operand_key,
                              const std::optional<Digest>& param_key = std::nullopt) {
  if (!is_compute(node.op)) throw LoweringError("no lowering for " + std::string(op_name(node.op)));
  if (takes_params(node.op) != param_key.has_value()) throw LoweringError("parameter key presence mismatch");
  LoweredNode out{fpvm::program_bytes(node_program(node.op).words), {operand_key}};
  if (param_key) out.preimages.push_back(*param_key);
  return out;
}

/// Generous step budget for a node program given its operand shapes.
inline std::uint64_t node_step_budget(const CompGraph& g, std::uint32_t id) {
  const GraphNode& n = g.node(id);
  std::uint64_t work = 0;
  for (auto u : n.input_ids) work += FixedTensor::element_count(g.shape(u));
  if (n.params) work += FixedTensor::element_count(g.shape(*n.params));
  work += FixedTensor::element_count(g.shape(id));
  if (n.op == OpKind::MatMul) {
    const auto& xs = g.shape(n.input_ids[0]);
    work += std::uint64_t{xs[0]} * xs[1] * g.shape(id)[1];
  }
  return 100'000 + 64 * work;
}

struct NodeVmSetup {
  fpvm::VmState initial;
  Digest operand_key;
  std::optional<Digest> param_key;
};

/// Builds the node VM's M_0 from the graph state before the node and loads
/// the operand and parameter fields into `oracle`.
inline NodeVmSetup build_node_vm(const CompGraph& g, std::uint32_t id, const MemTree& prev_state,
                                 PreimageOracle& oracle) {
  const GraphNode& n = g.node(id);
  if (!is_compute(n.op)) throw LoweringError("node " + std::to_string(id) + " has no VM program");
  NodeVmSetup out;
  out.operand_key = oracle.insert(field_bytes(prev_state, field_address(n.input_ids[0])));
  if (n.params) out.param_key = oracle.insert(field_bytes(prev_state, field_address(*n.params)));
  out.initial = node_initial_state(n.op, out.operand_key, out.param_key);
  return out;
}

struct VmExecution {
  FixedTensor output;
  std::vector<Digest> commitments;
  std::vector<std::uint64_t> node_steps;  // 0 for Input/Const
};

/// Runs every compute node in its own VM and threads the results through the
/// graph state; commitments match execute_native when the VM agrees.
inline VmExecution execute_via_vm(const CompGraph& g, const FixedTensor& input) {
  PreimageOracle oracle;
  VmExecution out;
  out.node_steps.assign(g.size(), 0);
  MemTree state = initial_graph_state(g, input);
  out.commitments.push_back(state.root());
  for (const auto& n : g.nodes()) {
    if (is_compute(n.op)) {
      NodeVmSetup setup = build_node_vm(g, n.id, state, oracle);
      fpvm::RunResult r = fpvm::run(setup.initial, oracle, node_step_budget(g, n.id));
      if (r.final_state.exit_code != 0) {
        throw Error("node " + std::to_string(n.id) + " trapped with code " + std::to_string(r.final_state.exit_code));
      }
      state.graft(field_address(n.id) >> 5, layout::kTensorFieldLevel,
                  r.final_state.memory.subtree(layout::kOutputBase >> 5, layout::kTensorFieldLevel));
      out.node_steps[n.id] = r.steps;
    }
    out.commitments.push_back(state.root());
  }
  out.output = read_tensor_at(state, field_address(g.output_id()));
  return out;
}

// ---------------------------------------------------------------------------
// Whole-graph VM (single-phase protocol)

struct GraphVmSetup {
  GraphProgram program;
  fpvm::VmState initial;
};

inline GraphVmSetup build_graph_vm(const CompGraph& g, const FixedTensor& input, PreimageOracle& oracle) {
  g.check_input(input);
  GraphVmSetup out;
  out.program = lower_graph(g);
  out.initial = fpvm::load_program(out.program.words);
  out.initial.memory.set_leaf(layout::kInputBase >> 5, oracle.insert(input.serialize()).bytes);
  const auto consts = g.const_ids();
  for (std::uint32_t i = 0; i < consts.size(); ++i) {
    const Digest key = oracle.insert(g.node(consts[i]).value->serialize());
    out.initial.memory.set_leaf((layout::kModelBase >> 5) + i, key.bytes);
  }
  return out;
}

inline std::uint64_t graph_step_budget(const CompGraph& g) {
  std::uint64_t total = 100'000;
  for (const auto& n : g.nodes()) {
    if (is_compute(n.op)) total += node_step_budget(g, n.id);
  }
  return total;
}

struct SingleVmResult {
  FixedTensor output;
  fpvm::RunResult run;
};

inline SingleVmResult execute_single_vm(const CompGraph& g, const FixedTensor& input,
                                        const fpvm::StepObserver& observer = {}) {
  PreimageOracle oracle;
  GraphVmSetup setup = build_graph_vm(g, input, oracle);
  SingleVmResult out{{}, fpvm::run(setup.initial, oracle, graph_step_budget(g), observer)};
  if (out.run.final_state.exit_code != 0) {
    throw Error("graph program trapped with code " + std::to_string(out.run.final_state.exit_code));
  }
  out.output = read_tensor_at(out.run.final_state.memory, layout::kOutputBase);
  return out;
}

}  // namespace opml::ml
