#pragma once

// Game set-up helpers shared by tests, the acceptance runner and the CLI:
// synthetic VM programs of an exact length, and a one-call VM game.

#include <opml/dispute/game.hpp>

namespace opml::dispute {

/// A straight-line program that halts after exactly `n` steps (n >= 2): an
/// LI of the heap base, n-2 random ALU/LI/SW instructions, then HALT.
inline std::vector<std::uint32_t> straight_line_program(Rng& rng, std::uint64_t n) {
  using namespace fpvm;
  if (n < 2) throw RangeError("straight-line programs need at least 2 steps");
  Assembler as;
  as.li(r15, layout::kHeapBase);
  auto reg = [&] { return static_cast<Reg>(1 + rng.below(14)); };
  for (std::uint64_t t = 0; t + 2 < n; ++t) {
    switch (rng.below(8)) {
      case 0: as.li(reg(), static_cast<std::uint32_t>(rng.next())); break;
      case 1: as.add(reg(), reg(), reg()); break;
      case 2: as.sub(reg(), reg(), reg()); break;
      case 3: as.mul(reg(), reg(), reg()); break;
      case 4: as.mulfx(reg(), reg(), reg()); break;
      case 5: as.sra(reg(), reg(), static_cast<std::int32_t>(rng.below(32))); break;
      case 6: as.and_(reg(), reg(), reg()); break;
      default: as.sw(reg(), r15, static_cast<std::int32_t>(4 * rng.below(512))); break;
    }
  }
  as.halt();
  return as.finish();
}

struct VmGame {
  std::shared_ptr<const VmTrace> submitter_trace;
  std::shared_ptr<const VmTrace> challenger_trace;
  Claim claim;
  DisputeOutcome outcome;
};

/// Stakes both parties, posts the submitter's claim and plays the game.
inline VmGame play_vm_game(const fpvm::VmState& initial, std::shared_ptr<const PreimageOracle> oracle,
                           const Strategy& submitter_strategy, const Strategy& challenger_strategy,
                           const DisputeParams& p, ChainSim& chain, Transcript* tr = nullptr,
                           std::uint64_t max_steps = 10'000'000, Amount stake = 1000) {
  VmGame g;
  g.submitter_trace = std::make_shared<VmTrace>(initial, oracle, max_steps, submitter_strategy.fault);
  g.challenger_trace = std::make_shared<VmTrace>(initial, oracle, max_steps, challenger_strategy.fault);
  VmPlayer submitter("submitter", submitter_strategy, g.submitter_trace);
  VmPlayer challenger("challenger", challenger_strategy, g.challenger_trace);
  for (const auto* id : {"submitter", "challenger"}) {
    if (chain.balance(id) < stake) chain.mint(id, stake - chain.balance(id));
    chain.lock(id, stake);
  }
  g.claim.initial_root = g.submitter_trace->root_at(0);
  g.claim.trace_len = g.submitter_trace->length();
  g.claim.final_root = submitter.claimed_final(padded_length(g.claim.trace_len, p.k, p.m));
  g.claim.stake = stake;
  g.claim.chain_claim_id = chain.post_claim("submitter");
  g.outcome = run_dispute(g.claim, submitter, challenger, p, chain, tr);
  return g;
}

}  // namespace opml::dispute
