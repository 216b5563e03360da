#pragma once

// Game driver: opens a dispute over a posted claim, runs k-section rounds
// with per-move deadlines, arbitrates the final span, and settles stakes.

#include <opml/dispute/actors.hpp>
#include <opml/dispute/chain.hpp>
#include <opml/dispute/transcript.hpp>

namespace opml::dispute {

struct Claim {
  Digest initial_root;
  Digest final_root;
  std::uint64_t trace_len = 1;
  std::string submitter_id = "submitter";
  Amount stake = 1000;
  std::optional<std::uint64_t> chain_claim_id;  // registry entry to update, if any

  void validate() const {
    if (trace_len < 1) throw RangeError("claim trace length must be at least 1");
    if (stake == 0) throw RangeError("claim stake must be positive");
  }
};

struct DisputeParams {
  std::uint32_t k = 1;
  std::uint32_t m = 1;
  std::uint64_t deadline = 10;  // ticks a party may stay silent before forfeiting
  Amount reward_num = 1;        // winner's share of the loser's stake
  Amount reward_den = 2;
  bool settle = true;           // slash / unlock stakes when the game ends
};

struct DisputeOutcome {
  bool disputed = false;
  Party winner = Party::Submitter;
  std::uint32_t rounds = 0;
  std::uint64_t padded_length = 0;
  std::optional<std::uint64_t> pinned_step;
  bool timeout = false;
  Violation violation = Violation::None;
  std::optional<fpvm::VerifyReason> reason;
  std::string detail;
  DisputeSession session;
};

namespace detail {

inline DisputeOutcome ended(DisputeSession& s, Party winner, std::string detail) {
  DisputeOutcome o;
  o.disputed = true;
  o.winner = winner;
  o.rounds = s.round;
  o.detail = std::move(detail);
  return o;
}

inline void log(Transcript* tr, const std::string& kind, Json fields) {
  if (tr) tr->record(kind, std::move(fields));
}

}  // namespace detail

/// Plays rounds until the span is at most m. Returns an outcome only when a
/// party forfeits (timeout or protocol violation).
inline std::optional<DisputeOutcome> run_bisection(DisputeSession& s, BisectionPlayer& submitter,
                                                   BisectionPlayer& challenger, const DisputeParams& p,
                                                   ChainSim& chain, Transcript* tr) {
  while (!s.finished()) {
    const std::uint32_t round = s.round + 1;
    if (challenger.silent_in(round)) {
      chain.advance(p.deadline);
      detail::log(tr, "timeout", {{"round", round}, {"mover", "challenger"}, {"i", s.i}, {"j", s.j}});
      auto o = detail::ended(s, Party::Submitter, "challenger missed its move");
      o.timeout = true;
      return o;
    }
    const std::vector<Digest> roots = challenger.post_checkpoints(s);
    chain.advance(1);
    detail::log(tr, "checkpoints",
                {{"round", round}, {"mover", "challenger"}, {"i", s.i}, {"j", s.j}, {"indices", s.indices()},
                 {"roots", hex_list(roots)}});
    if (submitter.silent_in(round)) {
      chain.advance(p.deadline);
      detail::log(tr, "timeout", {{"round", round}, {"mover", "submitter"}, {"i", s.i}, {"j", s.j}});
      auto o = detail::ended(s, Party::Challenger, "submitter missed its move");
      o.timeout = true;
      return o;
    }
    const SubmitterResponse resp = submitter.respond(s, roots);
    chain.advance(1);
    const std::uint64_t i0 = s.i, j0 = s.j;
    const Violation v = bisection_round(s, roots, resp);
    detail::log(tr, "response",
                {{"round", round},
                 {"mover", "submitter"},
                 {"i", i0},
                 {"j", j0},
                 {"decision", "segment " + std::to_string(resp.segment)},
                 {"root", resp.root ? Json(resp.root->hex()) : Json(nullptr)},
                 {"violation", violation_name(v)}});
    if (v != Violation::None) {
      const Party violator = v == Violation::WrongCheckpointCount ? Party::Challenger : Party::Submitter;
      auto o = detail::ended(s, opponent(violator), "protocol violation by " + std::string(party_name(violator)));
      o.violation = v;
      return o;
    }
  }
  return std::nullopt;
}

/// Opens the session if the challenger disagrees with the claim. Returns
/// nullopt when there is nothing to dispute.
inline std::optional<DisputeSession> open_dispute(const Claim& claim, BisectionPlayer& challenger,
                                                  const DisputeParams& p, std::uint64_t padded, Transcript* tr) {
  const bool silent = challenger.silent_in(1);
  const Digest theirs = challenger.claimed_final(padded);
  const bool disputed = !silent && theirs != claim.final_root;
  detail::log(tr, "open",
              {{"padded_length", padded},
               {"k", p.k},
               {"m", p.m},
               {"initial_root", claim.initial_root.hex()},
               {"submitter_final", claim.final_root.hex()},
               {"challenger_final", theirs.hex()},
               {"disputed", disputed}});
  if (!disputed) return std::nullopt;
  return DisputeSession::open(padded, p.k, p.m, claim.initial_root, claim.final_root, theirs);
}

/// Applies the verdict to stakes and the claims registry.
inline void settle_outcome(ChainSim& chain, const Claim& claim, const std::string& challenger_id,
                           const DisputeOutcome& o, const DisputeParams& p) {
  if (!p.settle) return;
  if (!o.disputed) {
    chain.unlock(challenger_id);
    return;
  }
  const std::string& winner = o.winner == Party::Submitter ? claim.submitter_id : challenger_id;
  const std::string& loser = o.winner == Party::Submitter ? challenger_id : claim.submitter_id;
  chain.slash(loser, winner, p.reward_num, p.reward_den);
  // A winning submitter keeps its stake locked until the challenge period ends.
  if (o.winner == Party::Challenger) chain.unlock(winner);
  if (claim.chain_claim_id) {
    chain.set_claim_status(*claim.chain_claim_id,
                           o.winner == Party::Submitter ? ClaimStatus::Upheld : ClaimStatus::Overturned);
  }
}

inline void log_result(Transcript* tr, const DisputeOutcome& o) {
  detail::log(tr, "result",
              {{"winner", party_name(o.winner)},
               {"rounds", o.rounds},
               {"pinned_step", o.pinned_step ? Json(*o.pinned_step) : Json(nullptr)},
               {"disputed", o.disputed},
               {"timeout", o.timeout},
               {"violation", violation_name(o.violation)},
               {"reason", o.reason ? Json(fpvm::reason_name(*o.reason)) : Json(nullptr)},
               {"detail", o.detail}});
}

/// The challenger authors the arbitration witnesses for [i, i+j).
inline DisputeOutcome arbitrate_session(DisputeSession& s, BisectionPlayer& submitter, VmPlayer& challenger,
                                        ChainSim& chain, Transcript* tr, std::uint64_t deadline) {
  if (challenger.silent_in(s.round + 1)) {
    chain.advance(deadline);
    detail::log(tr, "timeout", {{"round", s.round + 1}, {"mover", "challenger"}, {"i", s.i}, {"j", s.j}});
    auto o = detail::ended(s, Party::Submitter, "challenger did not provide a step proof");
    o.timeout = true;
    return o;
  }
  std::vector<fpvm::StepWitness> ws;
  try {
    ws = challenger.witnesses(s.i, s.j);
  } catch (const Error& e) {
    return detail::ended(s, Party::Submitter, std::string("challenger could not build a witness: ") + e.what());
  }
  chain.advance(1);
  const ArbitrationResult r = arbitrate_steps(s.agreed_root, s.submitter_end_root, ws, s.j);
  Json hexes = Json::array();
  for (const auto& w : ws) hexes.push_back(to_hex(w.serialize()));
  detail::log(tr, "arbitrate",
              {{"round", s.round + 1},
               {"mover", "challenger"},
               {"i", s.i},
               {"j", s.j},
               {"pre_root", s.agreed_root.hex()},
               {"post_root", s.submitter_end_root.hex()},
               {"witnesses", std::move(hexes)},
               {"decision", fpvm::reason_name(r.reason)},
               {"winner", party_name(r.winner)}});
  DisputeOutcome o = detail::ended(s, r.winner, "arbitration: " + std::string(fpvm::reason_name(r.reason)));
  o.reason = r.reason;
  o.pinned_step = s.i + 1;
  if (r.winner == Party::Challenger && s.j > 1) {
    // Report the first step where the submitter's trace leaves the replay.
    Digest cur = s.agreed_root;
    for (std::uint64_t t = 0; t < ws.size(); ++t) {
      cur = fpvm::apply_step_witness(cur, ws[t]).post_root;
      if (cur != submitter.root_at(s.i + t + 1)) {
        o.pinned_step = s.i + t + 1;
        break;
      }
    }
  }
  return o;
}

/// Full single-phase game over a VM trace.
inline DisputeOutcome run_dispute(const Claim& claim, BisectionPlayer& submitter, VmPlayer& challenger,
                                  const DisputeParams& p, ChainSim& chain, Transcript* tr = nullptr) {
  claim.validate();
  const std::uint64_t padded = padded_length(claim.trace_len, p.k, p.m);
  DisputeOutcome o;
  auto session = open_dispute(claim, challenger, p, padded, tr);
  if (!session) {
    o.detail = "no dispute";
  } else {
    if (claim.chain_claim_id) chain.set_claim_status(*claim.chain_claim_id, ClaimStatus::Disputed);
    if (auto early = run_bisection(*session, submitter, challenger, p, chain, tr)) {
      o = std::move(*early);
    } else {
      o = arbitrate_session(*session, submitter, challenger, chain, tr, p.deadline);
    }
    o.session = std::move(*session);
  }
  o.padded_length = padded;
  settle_outcome(chain, claim, challenger.id(), o, p);
  log_result(tr, o);
  return o;
}

enum class Settlement { Pending, Confirmed, Rejected };

inline std::string_view settlement_name(Settlement s) {
  switch (s) {
    case Settlement::Pending: return "pending";
    case Settlement::Confirmed: return "confirmed";
    case Settlement::Rejected: return "rejected";
  }
  return "?";
}

/// Confirmed once `elapsed` reaches `period` with no open dispute; an
/// overturned claim is never confirmed.
inline Settlement settle_challenge_period(const ChainSim& chain, std::uint64_t claim_id, std::uint64_t elapsed,
                                          std::uint64_t period) {
  switch (chain.claim_status(claim_id)) {
    case ClaimStatus::Disputed: return Settlement::Pending;
    case ClaimStatus::Overturned: return Settlement::Rejected;
    case ClaimStatus::Open:
    case ClaimStatus::Upheld: return elapsed >= period ? Settlement::Confirmed : Settlement::Pending;
  }
  return Settlement::Pending;
}

}  // namespace opml::dispute
