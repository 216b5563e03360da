#pragma once

// Two-phase dispute: k-section over graph-state commitments pins one node,
// the entrance check admits the node's VM initial state, a VM-level game runs
// over that node's program, and the exit check ties the VM result back to the
// graph claim. Also the single-phase game over the whole-graph program, for
// comparison.

#include <opml/dispute/harness.hpp>
#include <opml/multiphase/checks.hpp>

namespace opml::multiphase {

using dispute::BisectionPlayer;
using dispute::ChainSim;
using dispute::DisputeOutcome;
using dispute::FaultSpec;
using dispute::Party;
using dispute::Strategy;
using dispute::Transcript;
using dispute::VmTrace;
using ml::FixedTensor;

// ---------------------------------------------------------------------------
// Whole-graph program segments

/// Steps of the whole-graph program spent in each node's body: the node's
/// instructions execute at steps (begin, end]. Empty for Input/Const.
struct GraphSegments {
  std::vector<std::optional<std::pair<std::uint64_t, std::uint64_t>>> ranges;
  std::uint64_t total_steps = 0;
};

inline GraphSegments graph_segments(const CompGraph& g, const FixedTensor& input) {
  const ml::GraphProgram prog = ml::lower_graph(g);
  GraphSegments out;
  out.ranges.assign(g.size(), std::nullopt);
  std::uint32_t pc = layout::kProgramBase;
  std::uint64_t t = 0;
  ml::execute_single_vm(g, input, [&](const fpvm::VmState& s) {
    ++t;
    if (auto node = prog.node_at_pc(pc)) {
      auto& r = out.ranges[*node];
      if (!r) r = std::pair{t - 1, t};
      r->second = t;
    }
    pc = s.pc;
  });
  out.total_steps = t;
  return out;
}

/// Node-local fault -> whole-graph step: begin + step, clamped to the node's
/// last step; step 0 means the last step.
inline FaultSpec to_global_fault(const GraphSegments& seg, FaultSpec f) {
  if (!f.node) return f;
  if (*f.node >= seg.ranges.size() || !seg.ranges[*f.node]) throw ConfigError("fault node has no computation");
  const auto [b, e] = *seg.ranges[*f.node];
  f.step = f.step == 0 ? e : std::min(b + f.step, e);
  f.node.reset();
  return f;
}

/// Whole-graph step -> node-local fault. Steps outside any node body move to
/// the start of the next node (or the last step of the last one).
inline FaultSpec to_node_fault(const GraphSegments& seg, FaultSpec f) {
  if (f.node) return f;
  std::optional<std::uint32_t> last;
  for (std::uint32_t id = 0; id < seg.ranges.size(); ++id) {
    if (!seg.ranges[id]) continue;
    const auto [b, e] = *seg.ranges[id];
    if (f.step <= e) {
      f.node = id;
      f.step = f.step > b ? f.step - b : 1;
      return f;
    }
    last = id;
  }
  if (!last) throw ConfigError("graph has no compute nodes");
  f.node = last;
  f.step = 0;
  return f;
}

// ---------------------------------------------------------------------------
// Graph-level party

class GraphParty : public BisectionPlayer {
 public:
  GraphParty(std::string id, Strategy strategy, const CompGraph& g, const FixedTensor& input)
      : BisectionPlayer(std::move(id), std::move(strategy)), g_(&g) {
    const auto& f = strategy_.fault;
    if (f && !f->node) throw ConfigError("graph-level faults must name a node");
    if (f && (*f->node >= g.size() || !ml::is_compute(g.node(*f->node).op))) {
      throw ConfigError("fault node " + std::to_string(*f->node) + " is not a compute node");
    }
    ml::FieldTamper tamper;
    if (f) {
      // Replace the node's field with the output of a faulty VM run, so that
      // the graph commitment and the node trace tell the same story.
      tamper = [this](std::uint32_t node, MemTree& state) {
        if (node != *strategy_.fault->node) return;
        auto trace = make_trace(node, state);
        state.graft(ml::field_address(node) >> 5, layout::kTensorFieldLevel,
                    trace->final_state().memory.subtree(layout::kOutputBase >> 5, layout::kTensorFieldLevel));
        traces_[node] = std::move(trace);
      };
    }
    exec_ = ml::execute_graph(g, input, {}, tamper);
  }

  Digest root_at(std::uint64_t t) const override { return state_at(t).root(); }
  const MemTree& state_at(std::uint64_t t) const { return exec_.states[std::min<std::uint64_t>(t, g_->size())]; }
  std::uint64_t steps() const { return g_->size(); }
  const ml::GraphExecution& execution() const { return exec_; }

  /// This party's VM trace for `node`, started from its own state before it.
  std::shared_ptr<const VmTrace> node_trace(std::uint32_t node) const {
    auto it = traces_.find(node);
    if (it != traces_.end()) return it->second;
    auto trace = make_trace(node, state_at(node));
    traces_[node] = trace;
    return trace;
  }

 private:
  std::shared_ptr<const VmTrace> make_trace(std::uint32_t node, const MemTree& prev) const {
    auto oracle = std::make_shared<PreimageOracle>();
    ml::NodeVmSetup setup = ml::build_node_vm(*g_, node, prev, *oracle);
    std::optional<FaultSpec> fault;
    if (strategy_.fault && strategy_.fault->node == node) fault = strategy_.fault;
    return std::make_shared<VmTrace>(std::move(setup.initial), oracle, ml::node_step_budget(*g_, node), fault);
  }

  const CompGraph* g_;
  ml::GraphExecution exec_;
  mutable std::map<std::uint32_t, std::shared_ptr<const VmTrace>> traces_;
};

// ---------------------------------------------------------------------------
// Two-phase game

struct PhaseConfig {
  std::uint32_t k = 1;
  std::uint32_t m = 1;  // steps re-executed by the base arbitration
  std::uint64_t deadline = 10;
  dispute::Amount reward_num = 1;
  dispute::Amount reward_den = 2;
};

struct TwoPhaseOutcome {
  bool disputed = false;
  Party winner = Party::Submitter;
  std::uint32_t phase1_rounds = 0;
  std::uint32_t phase2_rounds = 0;
  std::optional<std::uint32_t> pinned_node;
  std::optional<std::uint64_t> pinned_step;  // within the node's VM trace
  bool timeout = false;
  bool entrance_rejected = false;
  bool exit_rejected = false;
  dispute::Violation phase1_violation = dispute::Violation::None;
  std::uint64_t phase2_trace_len = 0;  // submitter's node trace
  std::string detail;
  std::optional<DisputeOutcome> phase2;

  std::uint32_t rounds() const { return phase1_rounds + phase2_rounds; }
};

/// Strategy for the VM phase: round-based behaviour continues where the
/// graph phase stopped; the fault already lives in the node trace.
inline Strategy phase2_strategy(const Strategy& s, std::uint32_t rounds_used) {
  Strategy t = s;
  t.fault.reset();
  t.tamper_entrance = false;
  if (t.silent_after_round) t.silent_after_round = *t.silent_after_round > rounds_used ? *t.silent_after_round - rounds_used : 0;
  if (t.wrong_midpoint_round) {
    if (*t.wrong_midpoint_round > rounds_used) {
      t.wrong_midpoint_round = *t.wrong_midpoint_round - rounds_used;
    } else {
      t.wrong_midpoint_round.reset();
    }
  }
  return t;
}

namespace detail {

inline void log(Transcript* tr, const std::string& phase, const std::string& kind, dispute::Json fields) {
  if (!tr) return;
  tr->set_phase(phase);
  tr->record(kind, std::move(fields));
}

inline dispute::Json check_json(const CheckResult& r) { return {{"accepted", r.accepted}, {"reason", r.reason}}; }

}  // namespace detail

inline TwoPhaseOutcome run_two_phase_dispute(const CompGraph& g, GraphParty& submitter, GraphParty& challenger,
                                             const PhaseConfig& cfg, ChainSim& chain, const dispute::Claim& claim,
                                             Transcript* tr = nullptr) {
  TwoPhaseOutcome out;
  dispute::DisputeParams p1{cfg.k, 1, cfg.deadline, cfg.reward_num, cfg.reward_den, false};
  const std::uint64_t padded = dispute::padded_length(claim.trace_len, cfg.k, 1);
  if (tr) tr->set_phase("graph");

  auto finish = [&](Party winner, std::string detail) {
    out.winner = winner;
    out.detail = std::move(detail);
    DisputeOutcome d;
    d.disputed = out.disputed;
    d.winner = winner;
    dispute::settle_outcome(chain, claim, challenger.id(), d, {cfg.k, cfg.m, cfg.deadline, cfg.reward_num, cfg.reward_den, true});
    detail::log(tr, "graph", "result",
                {{"winner", party_name(winner)},
                 {"rounds", out.rounds()},
                 {"phase1_rounds", out.phase1_rounds},
                 {"phase2_rounds", out.phase2_rounds},
                 {"pinned_node", out.pinned_node ? dispute::Json(*out.pinned_node) : dispute::Json(nullptr)},
                 {"pinned_step", out.pinned_step ? dispute::Json(*out.pinned_step) : dispute::Json(nullptr)},
                 {"disputed", out.disputed},
                 {"timeout", out.timeout},
                 {"entrance_rejected", out.entrance_rejected},
                 {"exit_rejected", out.exit_rejected},
                 {"detail", out.detail}});
    return out;
  };

  auto session = dispute::open_dispute(claim, challenger, p1, padded, tr);
  if (!session) return finish(Party::Submitter, "no dispute");
  out.disputed = true;
  if (claim.chain_claim_id) chain.set_claim_status(*claim.chain_claim_id, dispute::ClaimStatus::Disputed);

  if (auto early = dispute::run_bisection(*session, submitter, challenger, p1, chain, tr)) {
    out.phase1_rounds = early->rounds;
    out.timeout = early->timeout;
    out.phase1_violation = early->violation;
    return finish(early->winner, early->detail);
  }
  dispute::DisputeSession& s = *session;
  out.phase1_rounds = s.round;

  // Step i+1 computes node i; identity steps are settled by comparing roots.
  const std::uint64_t i = s.i;
  if (i >= g.size() || !ml::is_compute(g.node(static_cast<std::uint32_t>(i)).op)) {
    if (i < g.size()) out.pinned_node = static_cast<std::uint32_t>(i);
    const bool changed = s.submitter_end_root != s.agreed_root;
    detail::log(tr, "graph", "identity-step", {{"i", i}, {"changed", changed}});
    return finish(changed ? Party::Challenger : Party::Submitter, "identity step");
  }
  const auto node = static_cast<std::uint32_t>(i);
  out.pinned_node = node;

  // Entrance: the submitter builds M0 from its own state before the node.
  const std::uint32_t move = out.phase1_rounds + 1;
  if (submitter.silent_in(move)) {
    chain.advance(cfg.deadline);
    out.timeout = true;
    return finish(Party::Challenger, "submitter did not post the entrance bundle");
  }
  EntranceSetup entrance = build_entrance_state(g, node, submitter.state_at(node));
  if (submitter.strategy().tamper_entrance) {
    // A stray non-zero scratch word makes M0 non-canonical.
    fpvm::VmState& m0 = entrance.m0;
    m0.memory.write_u32(layout::kHeapBase, 0xDEADBEEF);
    entrance.bundle.m0_root = fpvm::state_root(m0);
  }
  chain.advance(1);
  CheckResult ent = entrance.bundle.s_prev_root == s.agreed_root ? entrance_check(g, node, entrance.bundle)
                                                                   : reject("entrance built from a different state");
  detail::log(tr, "vm", "entrance",
              {{"mover", "submitter"}, {"node", node}, {"m0_root", entrance.bundle.m0_root.hex()}, {"check", detail::check_json(ent)}});
  if (!ent) {
    out.entrance_rejected = true;
    return finish(Party::Challenger, "entrance check: " + ent.reason);
  }

  // Phase 2 over the node program.
  auto sub_trace = submitter.node_trace(node);
  auto ch_trace = challenger.node_trace(node);
  dispute::VmPlayer vsub(submitter.id(), phase2_strategy(submitter.strategy(), out.phase1_rounds), sub_trace);
  dispute::VmPlayer vch(challenger.id(), phase2_strategy(challenger.strategy(), out.phase1_rounds), ch_trace);
  dispute::Claim vclaim;
  vclaim.initial_root = entrance.bundle.m0_root;
  vclaim.trace_len = sub_trace->length();
  out.phase2_trace_len = vclaim.trace_len;
  vclaim.final_root = vsub.claimed_final(dispute::padded_length(vclaim.trace_len, cfg.k, cfg.m));
  vclaim.submitter_id = claim.submitter_id;
  vclaim.stake = claim.stake;
  if (tr) tr->set_phase("vm");
  dispute::DisputeParams p2{cfg.k, cfg.m, cfg.deadline, cfg.reward_num, cfg.reward_den, false};
  DisputeOutcome d2 = dispute::run_dispute(vclaim, vsub, vch, p2, chain, tr);
  out.phase2_rounds = d2.rounds;
  out.pinned_step = d2.pinned_step;
  out.phase2 = d2;
  if (d2.disputed && d2.timeout) {
    out.timeout = true;
    return finish(d2.winner, "VM phase: " + d2.detail);
  }

  // Exit: the VM-phase winner ties its final VM state to its graph claim.
  const Party w2 = d2.winner;
  const GraphParty& author = w2 == Party::Submitter ? submitter : challenger;
  const dispute::VmTrace& vm_trace = w2 == Party::Submitter ? *sub_trace : *ch_trace;
  const Digest claimed_next = w2 == Party::Submitter ? s.submitter_end_root : s.challenger_end_root;
  const ExitBundle xb = build_exit_bundle(node, author.state_at(node), author.state_at(node + 1), vm_trace.final_state());
  chain.advance(1);
  CheckResult ex = exit_check(node, xb);
  if (ex && xb.s_prev_root != s.agreed_root) ex = reject("exit bundle starts from a different state");
  if (ex && xb.s_next_root != claimed_next) ex = reject("exit bundle ends in a different state than claimed");
  if (ex && w2 == Party::Submitter && xb.vm_final_root != vclaim.final_root) {
    ex = reject("exit bundle uses a different VM final state than claimed");
  }
  detail::log(tr, "vm", "exit",
              {{"mover", party_name(w2)}, {"node", node}, {"vm_final_root", xb.vm_final_root.hex()},
               {"output_root", xb.output_root.hex()}, {"node_root", xb.node_root.hex()}, {"check", detail::check_json(ex)}});
  if (!ex) {
    out.exit_rejected = true;
    return finish(dispute::opponent(w2), "exit check: " + ex.reason);
  }
  return finish(w2, d2.disputed ? "VM phase: " + d2.detail : "VM results agree; exit check passed");
}

// ---------------------------------------------------------------------------
// Harness entry points

struct GraphGame {
  TwoPhaseOutcome outcome;
  dispute::Claim claim;
};

inline void stake_parties(ChainSim& chain, dispute::Amount stake) {
  for (const auto* id : {"submitter", "challenger"}) {
    if (chain.balance(id) < stake) chain.mint(id, stake - chain.balance(id));
    chain.lock(id, stake);
  }
}

inline GraphGame play_two_phase(const CompGraph& g, const FixedTensor& input, Strategy submitter_strategy,
                                Strategy challenger_strategy, const PhaseConfig& cfg, ChainSim& chain,
                                Transcript* tr = nullptr, dispute::Amount stake = 1000) {
  std::optional<GraphSegments> seg;
  for (Strategy* s : {&submitter_strategy, &challenger_strategy}) {
    if (s->fault && !s->fault->node) {
      if (!seg) seg = graph_segments(g, input);
      s->fault = to_node_fault(*seg, *s->fault);
    }
  }
  GraphParty sub("submitter", submitter_strategy, g, input);
  GraphParty ch("challenger", challenger_strategy, g, input);
  stake_parties(chain, stake);
  GraphGame out;
  out.claim.initial_root = sub.root_at(0);
  out.claim.trace_len = g.size();
  out.claim.final_root = sub.claimed_final(dispute::padded_length(g.size(), cfg.k, 1));
  out.claim.stake = stake;
  out.claim.chain_claim_id = chain.post_claim("submitter");
  out.outcome = run_two_phase_dispute(g, sub, ch, cfg, chain, out.claim, tr);
  return out;
}

struct SinglePhaseGame {
  DisputeOutcome outcome;
  std::optional<std::uint32_t> pinned_node;
  std::uint64_t trace_len = 0;
};

/// The same dispute played over the whole-graph program in one VM.
inline SinglePhaseGame play_single_phase(const CompGraph& g, const FixedTensor& input, Strategy submitter_strategy,
                                         Strategy challenger_strategy, const dispute::DisputeParams& p,
                                         ChainSim& chain, Transcript* tr = nullptr, dispute::Amount stake = 1000) {
  std::optional<GraphSegments> seg;
  for (Strategy* s : {&submitter_strategy, &challenger_strategy}) {
    if (s->fault && s->fault->node) {
      if (!seg) seg = graph_segments(g, input);
      s->fault = to_global_fault(*seg, *s->fault);
    }
  }
  auto oracle = std::make_shared<PreimageOracle>();
  ml::GraphVmSetup setup = ml::build_graph_vm(g, input, *oracle);
  if (tr) tr->set_phase("single");
  dispute::VmGame vg = dispute::play_vm_game(setup.initial, oracle, submitter_strategy, challenger_strategy, p, chain,
                                             tr, ml::graph_step_budget(g), stake);
  SinglePhaseGame out;
  out.outcome = vg.outcome;
  out.trace_len = vg.claim.trace_len;
  if (out.outcome.pinned_step && *out.outcome.pinned_step >= 1) {
    const fpvm::VmState before = vg.challenger_trace->state_at(*out.outcome.pinned_step - 1);
    out.pinned_node = setup.program.node_at_pc(before.pc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commitment economy

struct ComplexityReport {
  std::string model;
  std::uint32_t nodes = 0;
  std::uint32_t compute_nodes = 0;
  std::uint64_t phase1_commitments = 0;
  std::vector<std::uint64_t> node_steps;  // per compute node
  std::uint64_t node_steps_total = 0;
  std::uint64_t node_steps_max = 0;
  std::uint64_t single_phase_steps = 0;
  double mean_node_steps = 0;
  double product = 0;  // compute_nodes * mean_node_steps
  double ratio = 0;    // product / single_phase_steps
};

inline ComplexityReport complexity_report(const CompGraph& g, const FixedTensor& input, std::string name = {}) {
  ComplexityReport r;
  r.model = std::move(name);
  r.nodes = static_cast<std::uint32_t>(g.size());
  r.compute_nodes = static_cast<std::uint32_t>(g.compute_node_count());
  r.phase1_commitments = ml::execute_native(g, input).commitments.size();
  const ml::VmExecution vm = ml::execute_via_vm(g, input);
  for (const auto& n : g.nodes()) {
    if (!ml::is_compute(n.op)) continue;
    r.node_steps.push_back(vm.node_steps[n.id]);
    r.node_steps_total += vm.node_steps[n.id];
    r.node_steps_max = std::max(r.node_steps_max, vm.node_steps[n.id]);
  }
  r.single_phase_steps = ml::execute_single_vm(g, input).run.steps;
  if (r.compute_nodes > 0) r.mean_node_steps = static_cast<double>(r.node_steps_total) / r.compute_nodes;
  r.product = r.compute_nodes * r.mean_node_steps;
  r.ratio = r.single_phase_steps ? r.product / static_cast<double>(r.single_phase_steps) : 0;
  return r;
}

}  // namespace opml::multiphase
