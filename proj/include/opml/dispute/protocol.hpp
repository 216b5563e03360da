#pragma once

// k-section dispute core: checkpoint placement, the per-round state machine
// and one-step (or m-step) arbitration. Nothing here sees a full trace.

#include <opml/fpvm/witness.hpp>

#include <algorithm>
#include <optional>
#include <span>

namespace opml::dispute {

enum class Party { Submitter, Challenger };

inline std::string_view party_name(Party p) { return p == Party::Submitter ? "submitter" : "challenger"; }
inline Party opponent(Party p) { return p == Party::Submitter ? Party::Challenger : Party::Submitter; }

/// Interior checkpoints i + floor(j*t/(k+1)), t = 1..k, deduplicated and
/// strictly inside (i, i+j).
inline std::vector<std::uint64_t> checkpoints(std::uint64_t i, std::uint64_t j, std::uint32_t k) {
  if (k == 0) throw RangeError("checkpoints: k must be at least 1");
  std::vector<std::uint64_t> out;
  for (std::uint32_t t = 1; t <= k; ++t) {
    const std::uint64_t c = i + static_cast<std::uint64_t>((static_cast<unsigned __int128>(j) * t) / (k + 1));
    if (c > i && c < i + j && (out.empty() || out.back() != c)) out.push_back(c);
  }
  return out;
}

/// ceil(log_{k+1}(ceil(n/m))): rounds needed to narrow n steps to m.
inline std::uint32_t interaction_bound(std::uint64_t n, std::uint32_t k, std::uint32_t m = 1) {
  if (n == 0 || k == 0 || m == 0) throw RangeError("interaction_bound: arguments must be positive");
  const std::uint64_t blocks = (n + m - 1) / m;
  std::uint32_t r = 0;
  unsigned __int128 span = 1;
  while (span < blocks) {
    span *= (k + 1);
    ++r;
  }
  return r;
}

/// Trace length both parties play over: m * (k+1)^bound. Indices past the
/// real trace repeat the halted final state, so padding cannot create a
/// disagreement that the real trace does not have.
inline std::uint64_t padded_length(std::uint64_t n, std::uint32_t k, std::uint32_t m = 1) {
  std::uint64_t p = m;
  for (std::uint32_t r = interaction_bound(n, k, m); r > 0; --r) p *= (k + 1);
  return p;
}

/// Submitter's answer: the first segment (0-based) whose end roots disagree,
/// and its own root at that end (omitted for the last segment, whose end is
/// already disputed).
struct SubmitterResponse {
  std::uint32_t segment = 0;
  std::optional<Digest> root;
};

struct RoundRecord {
  std::uint32_t round = 0;
  std::uint64_t i = 0, j = 0;
  std::vector<std::uint64_t> indices;
  std::vector<Digest> challenger_roots;
  std::optional<SubmitterResponse> response;
};

enum class Violation {
  None,
  WrongCheckpointCount,
  SegmentOutOfRange,
  MissingRoot,
  RootNotDisputed,
};

inline std::string_view violation_name(Violation v) {
  switch (v) {
    case Violation::None: return "none";
    case Violation::WrongCheckpointCount: return "wrong-checkpoint-count";
    case Violation::SegmentOutOfRange: return "segment-out-of-range";
    case Violation::MissingRoot: return "missing-root";
    case Violation::RootNotDisputed: return "root-not-disputed";
  }
  return "?";
}

/// Both parties agree on the root at i and disagree at i + j.
struct DisputeSession {
  std::uint64_t i = 0;
  std::uint64_t j = 0;
  std::uint32_t k = 1;
  std::uint32_t m = 1;
  std::uint32_t round = 0;
  Digest agreed_root;
  Digest challenger_end_root;
  Digest submitter_end_root;
  std::vector<RoundRecord> history;

  static DisputeSession open(std::uint64_t span, std::uint32_t k, std::uint32_t m, const Digest& initial,
                             const Digest& submitter_final, const Digest& challenger_final) {
    if (k == 0 || m == 0 || span == 0) throw RangeError("session parameters must be positive");
    DisputeSession s;
    s.j = span;
    s.k = k;
    s.m = m;
    s.agreed_root = initial;
    s.submitter_end_root = submitter_final;
    s.challenger_end_root = challenger_final;
    return s;
  }

  bool finished() const { return j <= m; }
  std::vector<std::uint64_t> indices() const { return checkpoints(i, j, k); }
};

/// Applies one round. On a violation the session is left unchanged and the
/// caller charges the violator (WrongCheckpointCount: challenger; the rest:
/// submitter).
inline Violation bisection_round(DisputeSession& s, const std::vector<Digest>& challenger_roots,
                                 const SubmitterResponse& response) {
  const auto idx = s.indices();
  if (challenger_roots.size() != idx.size()) return Violation::WrongCheckpointCount;
  if (response.segment > idx.size()) return Violation::SegmentOutOfRange;
  const bool last = response.segment == idx.size();
  if (!last) {
    if (!response.root) return Violation::MissingRoot;
    if (*response.root == challenger_roots[response.segment]) return Violation::RootNotDisputed;
  }
  RoundRecord rec{s.round + 1, s.i, s.j, idx, challenger_roots, response};
  const std::uint64_t start = response.segment == 0 ? s.i : idx[response.segment - 1];
  const std::uint64_t end = last ? s.i + s.j : idx[response.segment];
  if (response.segment > 0) s.agreed_root = challenger_roots[response.segment - 1];
  if (!last) {
    s.challenger_end_root = challenger_roots[response.segment];
    s.submitter_end_root = *response.root;
  }
  s.i = start;
  s.j = end - start;
  ++s.round;
  s.history.push_back(std::move(rec));
  return Violation::None;
}

struct ArbitrationResult {
  Party winner = Party::Submitter;
  fpvm::VerifyReason reason = fpvm::VerifyReason::Ok;
  std::size_t failing_witness = 0;  // index of the witness that was malformed
};

/// Contract-side arbitration over the final span. The challenger supplies
/// one witness per step, built from the agreed state. The chain is replayed
/// from `pre_root`; a malformed witness loses for its author (the
/// challenger); otherwise the challenger wins iff the replayed end root
/// differs from the submitter's.
inline ArbitrationResult arbitrate_steps(const Digest& pre_root, const Digest& submitter_post_root,
                                         std::span<const fpvm::StepWitness> witnesses, std::uint64_t span) {
  if (witnesses.size() != span || span == 0) return {Party::Submitter, fpvm::VerifyReason::ExtraWitnessData, 0};
  Digest cur = pre_root;
  for (std::size_t t = 0; t < witnesses.size(); ++t) {
    const fpvm::StepCheck c = fpvm::apply_step_witness(cur, witnesses[t]);
    if (c.reason != fpvm::VerifyReason::Ok) return {Party::Submitter, c.reason, t};
    cur = c.post_root;
  }
  if (cur != submitter_post_root) return {Party::Challenger, fpvm::VerifyReason::PostRootMismatch, 0};
  return {Party::Submitter, fpvm::VerifyReason::Ok, 0};
}

inline ArbitrationResult arbitrate(const Digest& pre_root, const Digest& submitter_post_root,
                                   const fpvm::StepWitness& witness) {
  return arbitrate_steps(pre_root, submitter_post_root, std::span(&witness, 1), 1);
}

}  // namespace opml::dispute
