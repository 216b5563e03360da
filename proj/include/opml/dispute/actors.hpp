#pragma once

// Dispute participants. A player answers from its own view of the trace,
// which for faulty actors is a deterministic re-execution with one injected
// bit flip, so every answer it gives is self-consistent.

#include <opml/dispute/protocol.hpp>
#include <opml/fpvm/layout.hpp>
#include <opml/rng.hpp>

#include <memory>
#include <sstream>

namespace opml::dispute {

/// Flip `bit` of the byte at `address` right after step `step` (1-based) of
/// the VM trace. `node` selects a graph node in graph-level games; then `step`
/// counts within that node's execution. step 0 means the node's last step.
struct FaultSpec {
  std::optional<std::uint32_t> node;
  std::uint64_t step = 0;
  std::uint32_t address = layout::kOutputBase + 0xFFC;
  unsigned bit = 0;
};

struct Strategy {
  std::optional<FaultSpec> fault;
  std::optional<std::uint32_t> wrong_midpoint_round;  // 1-based
  std::optional<std::uint32_t> silent_after_round;    // makes no move after this round
  std::optional<std::uint64_t> random_seed;           // answers uniformly at random
  bool tamper_entrance = false;                       // posts an M0 with a stray leaf

  static Strategy honest() { return {}; }
  static Strategy fault_at_step(std::uint64_t step, std::optional<std::uint32_t> node = std::nullopt) {
    Strategy s;
    s.fault = FaultSpec{node, step};
    return s;
  }
  static Strategy wrong_midpoint_at(std::uint32_t round) {
    Strategy s;
    s.wrong_midpoint_round = round;
    return s;
  }
  static Strategy silent_after(std::uint32_t round) {
    Strategy s;
    s.silent_after_round = round;
    return s;
  }
  static Strategy random_answers(std::uint64_t seed) {
    Strategy s;
    s.random_seed = seed;
    return s;
  }

  bool is_honest() const {
    return !fault && !wrong_midpoint_round && !silent_after_round && !random_seed && !tamper_entrance;
  }
  /// Disputes even a correct claim.
  bool griefs() const { return random_seed.has_value() || wrong_midpoint_round.has_value(); }

  std::string describe() const {
    if (is_honest()) return "honest";
    std::ostringstream os;
    const char* sep = "";
    if (fault) {
      os << sep << "fault(step=" << fault->step;
      if (fault->node) os << ",node=" << *fault->node;
      os << ")";
      sep = "+";
    }
    if (wrong_midpoint_round) os << sep << "wrong-midpoint(" << *wrong_midpoint_round << ")", sep = "+";
    if (silent_after_round) os << sep << "silent-after(" << *silent_after_round << ")", sep = "+";
    if (random_seed) os << sep << "random", sep = "+";
    if (tamper_entrance) os << sep << "tamper-entrance";
    return os.str();
  }
};

// ---------------------------------------------------------------------------

/// A VM execution kept as roots for every step plus full states every
/// `stride` steps. Indices past the halt repeat the final state.
class VmTrace {
 public:
  VmTrace(fpvm::VmState initial, std::shared_ptr<const PreimageOracle> oracle, std::uint64_t max_steps,
          std::optional<FaultSpec> fault = std::nullopt, std::uint64_t stride = 256)
      : oracle_(std::move(oracle)), stride_(stride == 0 ? 1 : stride), fault_(fault) {
    if (!oracle_) throw Error("VmTrace: oracle required");
    fpvm::VmState s = std::move(initial);
    roots_.push_back(fpvm::state_root(s));
    snapshots_.push_back(s);
    std::uint64_t t = 0;
    while (!s.exited) {
      if (t == max_steps) throw fpvm::BudgetExceeded(std::move(s), max_steps);
      fpvm::step_in_place(s, *oracle_);
      ++t;
      if (fault_ && fault_->step != 0 && t == fault_->step) {
        fpvm::flip_memory_bit(s, fault_->address, fault_->bit);
        fault_step_ = t;
      }
      roots_.push_back(fpvm::state_root(s));
      if (t % stride_ == 0) snapshots_.push_back(s);
    }
    if (fault_ && !fault_step_) {
      // Fault scheduled past the halt (or at "the end"): corrupt the final state.
      fpvm::flip_memory_bit(s, fault_->address, fault_->bit);
      fault_step_ = t;
      roots_.back() = fpvm::state_root(s);
      if (t == 0) throw Error("VmTrace: cannot corrupt an empty trace");
    }
    final_ = std::move(s);
  }

  std::uint64_t length() const { return roots_.size() - 1; }
  const Digest& root_at(std::uint64_t t) const { return roots_[std::min<std::uint64_t>(t, length())]; }
  const std::vector<Digest>& roots() const { return roots_; }
  const fpvm::VmState& final_state() const { return final_; }
  const PreimageOracle& oracle() const { return *oracle_; }
  std::shared_ptr<const PreimageOracle> oracle_ptr() const { return oracle_; }
  std::optional<std::uint64_t> fault_step() const { return fault_step_; }

  fpvm::VmState state_at(std::uint64_t t) const {
    t = std::min(t, length());
    if (t == length()) return final_;
    std::uint64_t at = (t / stride_) * stride_;
    fpvm::VmState s = snapshots_[at / stride_];
    while (at < t) advance(s, at++);
    return s;
  }

  /// Steps `s`, which must be this trace's state at index `t`, to index t+1.
  void advance(fpvm::VmState& s, std::uint64_t t) const {
    if (t + 1 > length()) return;
    if (t + 1 == length()) {
      s = final_;
      return;
    }
    fpvm::step_in_place(s, *oracle_);
    if (fault_step_ && t + 1 == *fault_step_) fpvm::flip_memory_bit(s, fault_->address, fault_->bit);
  }

 private:
  std::shared_ptr<const PreimageOracle> oracle_;
  std::uint64_t stride_;
  std::optional<FaultSpec> fault_;
  std::optional<std::uint64_t> fault_step_;
  std::vector<Digest> roots_;
  std::vector<fpvm::VmState> snapshots_;
  fpvm::VmState final_;
};

// ---------------------------------------------------------------------------

class BisectionPlayer {
 public:
  BisectionPlayer(std::string id, Strategy strategy)
      : id_(std::move(id)), strategy_(std::move(strategy)), rng_(strategy_.random_seed.value_or(0), "player/" + id_) {}
  virtual ~BisectionPlayer() = default;

  /// This player's view of the state root after t steps.
  virtual Digest root_at(std::uint64_t t) const = 0;

  const std::string& id() const { return id_; }
  const Strategy& strategy() const { return strategy_; }

  bool silent_in(std::uint32_t round) const { return strategy_.silent_after_round && round > *strategy_.silent_after_round; }

  /// Root this player asserts for the end of the padded trace.
  Digest claimed_final(std::uint64_t padded) {
    if (strategy_.griefs()) return garbage();
    return root_at(padded);
  }

  /// Challenger move: roots at the session's checkpoints.
  std::vector<Digest> post_checkpoints(const DisputeSession& s) {
    const auto idx = s.indices();
    const std::uint32_t round = s.round + 1;
    std::vector<Digest> out;
    out.reserve(idx.size());
    const bool lie = strategy_.random_seed || strategy_.wrong_midpoint_round == round;
    for (auto t : idx) out.push_back(lie ? garbage() : root_at(t));
    return out;
  }

  /// Submitter move: first segment whose end root disagrees with ours.
  SubmitterResponse respond(const DisputeSession& s, const std::vector<Digest>& roots) {
    const auto idx = s.indices();
    const std::uint32_t round = s.round + 1;
    if (strategy_.random_seed) {
      SubmitterResponse r{static_cast<std::uint32_t>(rng_.below(idx.size() + 1)), std::nullopt};
      if (r.segment < idx.size()) r.root = garbage();
      return r;
    }
    SubmitterResponse r{static_cast<std::uint32_t>(idx.size()), std::nullopt};
    for (std::uint32_t t = 0; t < idx.size() && t < roots.size(); ++t) {
      const Digest mine = root_at(idx[t]);
      if (mine != roots[t]) {
        r = {t, mine};
        break;
      }
    }
    if (strategy_.wrong_midpoint_round == round) {
      if (r.segment == idx.size() && !idx.empty()) r.segment = 0;
      if (r.segment < idx.size()) r.root = garbage();
    }
    return r;
  }

 protected:
  Digest garbage() {
    Digest d;
    for (std::size_t i = 0; i < d.bytes.size(); i += 8) {
      const std::uint64_t x = rng_.next();
      for (std::size_t b = 0; b < 8; ++b) d.bytes[i + b] = static_cast<std::uint8_t>(x >> (8 * b));
    }
    return d;
  }

  std::string id_;
  Strategy strategy_;
  Rng rng_;
};

/// A player whose trace is a VM execution.
class VmPlayer : public BisectionPlayer {
 public:
  VmPlayer(std::string id, Strategy strategy, std::shared_ptr<const VmTrace> trace)
      : BisectionPlayer(std::move(id), std::move(strategy)), trace_(std::move(trace)) {}

  Digest root_at(std::uint64_t t) const override { return trace_->root_at(t); }
  const VmTrace& trace() const { return *trace_; }

  /// One witness per step of [i, i+j), generated from this player's states.
  std::vector<fpvm::StepWitness> witnesses(std::uint64_t i, std::uint64_t j) const {
    std::vector<fpvm::StepWitness> out;
    out.reserve(j);
    fpvm::VmState s = trace_->state_at(i);
    for (std::uint64_t t = 0; t < j; ++t) {
      out.push_back(fpvm::gen_step_witness(s, trace_->oracle()));
      trace_->advance(s, i + t);
    }
    return out;
  }

 private:
  std::shared_ptr<const VmTrace> trace_;
};

}  // namespace opml::dispute
