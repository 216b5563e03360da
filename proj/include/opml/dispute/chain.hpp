#pragma once

// Simulated settlement layer: accounts, locked stakes, burns, a tick clock and
// an append-only event log. Every mutation preserves
//   sum(balances) + sum(locked) + burned == total minted.

#include <opml/hash.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace opml::dispute {

using Amount = std::uint64_t;

class ChainError : public Error {
 public:
  using Error::Error;
};

enum class ClaimStatus { Open, Disputed, Upheld, Overturned };

inline std::string_view claim_status_name(ClaimStatus s) {
  switch (s) {
    case ClaimStatus::Open: return "open";
    case ClaimStatus::Disputed: return "disputed";
    case ClaimStatus::Upheld: return "upheld";
    case ClaimStatus::Overturned: return "overturned";
  }
  return "?";
}

struct ChainEvent {
  std::uint64_t tick;
  std::string kind;
  std::string detail;
};

class ChainSim {
 public:
  void mint(const std::string& who, Amount amount) {
    balances_[who] += amount;
    minted_ += amount;
    log("mint", who + " " + std::to_string(amount));
  }

  void lock(const std::string& who, Amount amount) {
    Amount& bal = balances_[who];
    if (bal < amount) throw ChainError(who + " cannot stake " + std::to_string(amount));
    bal -= amount;
    locked_[who] += amount;
    log("stake", who + " " + std::to_string(amount));
  }

  void unlock(const std::string& who) {
    const Amount a = locked_[who];
    locked_[who] = 0;
    balances_[who] += a;
    log("unlock", who + " " + std::to_string(a));
  }

  /// Moves floor(locked * reward_num / reward_den) of the loser's stake to the
  /// winner and burns the remainder. Returns the amount burned.
  Amount slash(const std::string& loser, const std::string& winner, Amount reward_num = 1, Amount reward_den = 2) {
    if (reward_den == 0 || reward_num > reward_den) throw ChainError("invalid reward fraction");
    const Amount stake = locked_[loser];
    locked_[loser] = 0;
    const Amount reward = stake / reward_den * reward_num + (stake % reward_den) * reward_num / reward_den;
    balances_[winner] += reward;
    burned_ += stake - reward;
    log("slash", loser + " -> " + winner + " reward " + std::to_string(reward) + " burn " + std::to_string(stake - reward));
    return stake - reward;
  }

  /// Burns `amount` from a free balance (penalties outside disputes).
  void burn(const std::string& who, Amount amount) {
    Amount& bal = balances_[who];
    if (bal < amount) throw ChainError(who + " cannot pay " + std::to_string(amount));
    bal -= amount;
    burned_ += amount;
    log("burn", who + " " + std::to_string(amount));
  }

  void transfer(const std::string& from, const std::string& to, Amount amount) {
    Amount& bal = balances_[from];
    if (bal < amount) throw ChainError(from + " cannot pay " + std::to_string(amount));
    bal -= amount;
    balances_[to] += amount;
    log("transfer", from + " -> " + to + " " + std::to_string(amount));
  }

  void advance(std::uint64_t ticks) { clock_ += ticks; }
  std::uint64_t now() const { return clock_; }

  Amount balance(const std::string& who) const { return lookup(balances_, who); }
  Amount locked(const std::string& who) const { return lookup(locked_, who); }
  Amount burned() const { return burned_; }
  Amount minted() const { return minted_; }

  Amount total_accounted() const {
    Amount t = burned_;
    for (const auto& [_, v] : balances_) t += v;
    for (const auto& [_, v] : locked_) t += v;
    return t;
  }
  bool conserved() const { return total_accounted() == minted_; }

  // Claims registry.
  std::uint64_t post_claim(const std::string& submitter) {
    claims_.push_back({submitter, clock_, ClaimStatus::Open});
    log("claim", submitter + " #" + std::to_string(claims_.size() - 1));
    return claims_.size() - 1;
  }
  void set_claim_status(std::uint64_t id, ClaimStatus s) {
    claims_.at(id).status = s;
    log("claim-status", "#" + std::to_string(id) + " " + std::string(claim_status_name(s)));
  }
  ClaimStatus claim_status(std::uint64_t id) const { return claims_.at(id).status; }
  std::uint64_t claim_posted_at(std::uint64_t id) const { return claims_.at(id).posted_at; }

  const std::vector<ChainEvent>& events() const { return events_; }

 private:
  struct ClaimRecord {
    std::string submitter;
    std::uint64_t posted_at;
    ClaimStatus status;
  };

  static Amount lookup(const std::map<std::string, Amount>& m, const std::string& k) {
    auto it = m.find(k);
    return it == m.end() ? 0 : it->second;
  }

  void log(std::string kind, std::string detail) { events_.push_back({clock_, std::move(kind), std::move(detail)}); }

  std::map<std::string, Amount> balances_;
  std::map<std::string, Amount> locked_;
  Amount burned_ = 0;
  Amount minted_ = 0;
  std::uint64_t clock_ = 0;
  std::vector<ClaimRecord> claims_;
  std::vector<ChainEvent> events_;
};

}  // namespace opml::dispute
