#pragma once

// Security probabilities and incentive analysis: AnyTrust vs majority trust,
// the verification game's mixed equilibrium, and the attention challenge.

#include <opml/dispute/chain.hpp>
#include <opml/rng.hpp>

#include <boost/multiprecision/cpp_int.hpp>

#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace opml::economics {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;
using dispute::Amount;
using dispute::ChainSim;

// ---------------------------------------------------------------------------
// Security

struct SecurityParams {
  double p = 0.5;  // per-validator malice probability
  std::uint32_t m = 10;
  double f = 0.5;  // Byzantine tolerance ratio

  void validate() const {
    if (!(p >= 0 && p <= 1)) throw ConfigError("p must be in [0,1]");
    if (m < 1) throw ConfigError("m must be at least 1");
    if (!(f > 0 && f < 1)) throw ConfigError("f must be in (0,1)");
  }
};

inline constexpr std::uint32_t kExactLimit = 64;

/// The exact rational value of a double.
inline cpp_rational exact(double x) {
  if (!std::isfinite(x)) throw RangeError("non-finite value");
  int e = 0;
  const double mant = std::frexp(x, &e);  // x = mant * 2^e, |mant| in [0.5, 1)
  const auto scaled = static_cast<std::int64_t>(std::ldexp(mant, 53));
  cpp_rational r(scaled);
  const int shift = e - 53;
  if (shift >= 0) return r * cpp_rational(cpp_int(1) << shift);
  return r / cpp_rational(cpp_int(1) << -shift);
}

/// ceil(f*m) over the exact binary value of f.
inline std::uint32_t majority_bound(std::uint32_t m, double f) {
  const cpp_rational v = exact(f) * m;
  cpp_int q = boost::multiprecision::numerator(v) / boost::multiprecision::denominator(v);
  if (cpp_rational(q) < v) ++q;
  return q.convert_to<std::uint32_t>();
}

inline double any_trust_prob(double p, std::uint32_t m) {
  SecurityParams{p, m, 0.5}.validate();
  return 1.0 - std::pow(p, static_cast<double>(m));
}

inline cpp_rational any_trust_exact(double p, std::uint32_t m) {
  SecurityParams{p, m, 0.5}.validate();
  cpp_rational pm = 1;
  const cpp_rational pr = exact(p);
  for (std::uint32_t i = 0; i < m; ++i) pm *= pr;
  return 1 - pm;
}

/// sum_{i=0}^{ceil(fm)} C(m,i) p^i (1-p)^(m-i), exact. The bound is capped at m.
inline cpp_rational majority_trust_exact(double p, std::uint32_t m, double f) {
  SecurityParams{p, m, f}.validate();
  if (m > kExactLimit) throw RangeError("exact majority probability limited to m <= 64");
  const std::uint32_t top = std::min(majority_bound(m, f), m);
  const cpp_rational pr = exact(p), qr = 1 - pr;
  std::vector<cpp_rational> ppow(m + 1, 1), qpow(m + 1, 1);
  for (std::uint32_t i = 1; i <= m; ++i) {
    ppow[i] = ppow[i - 1] * pr;
    qpow[i] = qpow[i - 1] * qr;
  }
  cpp_rational sum = 0;
  cpp_int binom = 1;
  for (std::uint32_t i = 0; i <= top; ++i) {
    sum += cpp_rational(binom) * ppow[i] * qpow[m - i];
    binom = binom * (m - i) / (i + 1);
  }
  return sum;
}

inline double majority_trust_prob(double p, std::uint32_t m, double f) {
  if (m <= kExactLimit) return majority_trust_exact(p, m, f).convert_to<double>();
  SecurityParams{p, m, f}.validate();
  const std::uint32_t top = std::min(majority_bound(m, f), m);
  if (p == 0) return 1.0;
  if (p == 1) return top >= m ? 1.0 : 0.0;
  // Log-space terms.
  long double sum = 0;
  for (std::uint32_t i = 0; i <= top; ++i) {
    const long double lc = std::lgamma(m + 1.0L) - std::lgamma(i + 1.0L) - std::lgamma(m - i + 1.0L);
    sum += std::exp(lc + i * std::log(static_cast<long double>(p)) + (m - i) * std::log1p(-static_cast<long double>(p)));
  }
  return static_cast<double>(std::min(sum, 1.0L));
}

struct SecurityRow {
  double p;
  std::uint32_t m;
  double f;
  double any_trust;
  double majority_trust;
};

inline std::vector<SecurityRow> security_sweep(double p, double f, std::uint32_t m_lo, std::uint32_t m_hi) {
  if (m_lo < 1 || m_hi < m_lo) throw ConfigError("invalid m range");
  std::vector<SecurityRow> rows;
  for (std::uint32_t m = m_lo; m <= m_hi; ++m) {
    rows.push_back({p, m, f, any_trust_prob(p, m), majority_trust_prob(p, m, f)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Verification game

struct GamePayoffs {
  double C = 1;  // validation cost
  double R = 3;  // challenge reward
  double L = 1;  // victim loss
  double B = 2;  // cheating benefit
  double S = 8;  // stake

  void validate() const {
    if (!(C > 0)) throw ConfigError("C must be positive");
    if (R < 0 || L < 0 || B < 0 || S < 0) throw ConfigError("payoffs must be non-negative");
  }
};

enum class ValidatorAction { Validate, Skip };
enum class SubmitterAction { Cheat, Honest };

struct PayoffPair {
  double validator;
  double submitter;
};

/// Payoff matrix entry (validator, submitter).
inline PayoffPair payoff(const GamePayoffs& g, ValidatorAction v, SubmitterAction s) {
  if (v == ValidatorAction::Validate) {
    return s == SubmitterAction::Cheat ? PayoffPair{g.R - g.C, -g.S} : PayoffPair{-g.C, -g.C};
  }
  return s == SubmitterAction::Cheat ? PayoffPair{-g.L, g.B} : PayoffPair{0, -g.C};
}

struct Equilibrium {
  double p_c;  // submitter cheats
  double p_v;  // validator checks
  bool interior;  // both in [0,1]; otherwise the closed form is not a mixed equilibrium
};

inline Equilibrium verifier_equilibrium(const GamePayoffs& g) {
  g.validate();
  if (!(g.R + g.L > 0)) throw ConfigError("R + L must be positive");
  if (!(g.B + g.S > 0)) throw ConfigError("B + S must be positive");
  Equilibrium e{g.C / (g.R + g.L), (g.B + g.C) / (g.B + g.S), false};
  e.interior = e.p_c <= 1 && e.p_v <= 1;
  return e;
}

/// Residuals of the two indifference conditions at (p_c, p_v).
inline std::pair<double, double> indifference_residuals(const GamePayoffs& g, double p_c, double p_v) {
  const double validator = p_c * (g.R - g.C) + (1 - p_c) * (-g.C) - (-p_c * g.L);
  const double submitter = p_v * (-g.S) + (1 - p_v) * g.B - (-g.C);
  return {validator, submitter};
}

// ---------------------------------------------------------------------------
// Attention challenge

struct AttentionParams {
  double r = 0.001;  // lock-up interest rate
  double t = 1;      // response gas fee
  double C = 0.001;  // computation cost
  double G = 1;      // response penalty / deposit
  double p_t = 0.001;

  void validate() const {
    if (!(r > 0 && t > 0 && C > 0)) throw ConfigError("r, t and C must be positive");
    if (!(p_t > 0 && p_t <= 1)) throw ConfigError("p_t must be in (0,1]");
    if (G < 0) throw ConfigError("G must be non-negative");
  }

  double cost() const { return r * G + t * p_t; }
  bool dominant() const { return p_t * G > C; }
};

/// floor(p_t * 2^256): a validator must respond iff H(addr || result) < T,
/// the hash read as a big-endian integer.
inline cpp_int attention_threshold(double p_t) {
  if (!(p_t > 0 && p_t <= 1)) throw ConfigError("p_t must be in (0,1]");
  const cpp_rational v = exact(p_t) * cpp_rational(cpp_int(1) << 256);
  return boost::multiprecision::numerator(v) / boost::multiprecision::denominator(v);
}

inline cpp_int digest_value(const Digest& d) {
  cpp_int v;
  import_bits(v, d.bytes.begin(), d.bytes.end(), 8, true);
  return v;
}

struct Utilities {
  double check;
  double lazy;
  double advantage() const { return check - lazy; }
};

inline Utilities attention_utilities(const GamePayoffs& g, const AttentionParams& a, double p_c) {
  return {p_c * g.R - g.C, -p_c * g.L - a.p_t * a.G};
}

struct AttentionOptimum {
  double G;
  double p_t;
  double min_cost;
  bool feasible;  // p_t <= 1; otherwise min_cost is only a lower bound
};

inline AttentionOptimum optimal_attention(double r, double t, double C) {
  if (!(r > 0 && t > 0 && C > 0)) throw ConfigError("r, t and C must be positive");
  const double p_t = std::sqrt(r * C / t);
  return {std::sqrt(t * C / r), p_t, 2 * std::sqrt(r * t * C), p_t <= 1};
}

/// Cheapest (G, p_t) with p_t * G >= C on an n x n grid (G log-spaced over
/// [G*/100, 100 G*], p_t log-spaced over [p_t*/100, 1]).
inline std::optional<AttentionParams> attention_grid_best(double r, double t, double C, int n = 100) {
  const auto opt = optimal_attention(r, t, C);
  std::optional<AttentionParams> best;
  for (int i = 0; i < n; ++i) {
    const double G = opt.G * std::pow(1e4, static_cast<double>(i) / (n - 1)) / 100;
    const double pt_lo = std::min(1.0, opt.p_t / 100);
    for (int j = 0; j < n; ++j) {
      const double p_t = pt_lo * std::pow(1 / pt_lo, static_cast<double>(j) / (n - 1));
      AttentionParams a{r, t, C, G, p_t};
      if (p_t * G < C) continue;
      if (!best || a.cost() < best->cost()) best = a;
    }
  }
  return best;
}

using Address = std::array<std::uint8_t, 20>;

inline Address random_address(Rng& rng) {
  Address a;
  for (auto& b : a) b = static_cast<std::uint8_t>(rng.next());
  return a;
}

/// H(address || result).
inline Digest attention_hash(const Address& a, const Digest& result) {
  return Hasher().update(ByteView(a)).update(result).finish();
}

struct Validator {
  std::string id;
  Address address;
  bool computes = true;  // a lazy validator never learns f(x)
};

enum class Accusation { Upheld, Premature, Unfounded };

inline std::string_view accusation_name(Accusation a) {
  switch (a) {
    case Accusation::Upheld: return "upheld";
    case Accusation::Premature: return "premature";
    case Accusation::Unfounded: return "unfounded";
  }
  return "?";
}

/// One attention-challenge round against a simulated chain. Validators lock
/// `penalty` on construction. Call order: respond, reveal, accept, accuse,
/// close.
class AttentionRound {
 public:
  AttentionRound(std::string submitter, Address submitter_address, const Digest& result, std::vector<Validator> validators,
                 double p_t, Amount penalty, ChainSim& chain)
      : submitter_(std::move(submitter)),
        submitter_address_(submitter_address),
        result_(result),
        validators_(std::move(validators)),
        threshold_(attention_threshold(p_t)),
        penalty_(penalty),
        chain_(chain),
        commitment_(attention_hash(submitter_address, result)),
        responses_(validators_.size()) {
    for (const auto& v : validators_) chain_.lock(v.id, penalty_);
  }

  const Digest& commitment() const { return commitment_; }

  bool selected(std::size_t i) const { return digest_value(attention_hash(validators_[i].address, result_)) < threshold_; }

  /// Each diligent validator checks its own lottery and responds when selected.
  void respond() {
    for (std::size_t i = 0; i < validators_.size(); ++i) {
      if (validators_[i].computes && selected(i)) responses_[i] = attention_hash(validators_[i].address, result_);
    }
  }

  /// The submitter opens its commitment; a mismatch voids the round.
  bool reveal(const Digest& claimed) {
    revealed_ = attention_hash(submitter_address_, claimed) == commitment_;
    return revealed_;
  }

  void accept_claim() { accepted_ = revealed_; }

  Accusation accuse(std::size_t i) {
    if (!accepted_) return Accusation::Premature;
    if (penalized_.count(i) || !selected(i)) return Accusation::Unfounded;
    if (responses_[i] && *responses_[i] == attention_hash(validators_[i].address, result_)) return Accusation::Unfounded;
    penalized_.insert(i);
    burned_ += chain_.slash(validators_[i].id, submitter_, 1, 2);
    return Accusation::Upheld;
  }

  /// Returns remaining deposits.
  void close() {
    for (std::size_t i = 0; i < validators_.size(); ++i) {
      if (!penalized_.count(i)) chain_.unlock(validators_[i].id);
    }
  }

  const std::vector<Validator>& validators() const { return validators_; }
  const std::optional<Digest>& response(std::size_t i) const { return responses_[i]; }
  Amount burned() const { return burned_; }

 private:
  std::string submitter_;
  Address submitter_address_;
  Digest result_;
  std::vector<Validator> validators_;
  cpp_int threshold_;
  Amount penalty_;
  ChainSim& chain_;
  Digest commitment_;
  std::vector<std::optional<Digest>> responses_;
  bool revealed_ = false;
  bool accepted_ = false;
  std::set<std::size_t> penalized_;
  Amount burned_ = 0;
};

struct RoundReport {
  Digest commitment;
  std::vector<std::string> selected;
  std::vector<std::string> responded;
  std::vector<std::string> penalized;
  Amount burned = 0;
  Amount submitter_reward = 0;
};

/// Full round: commit, respond, reveal, accept, accuse every selected
/// validator without a valid response, close.
inline RoundReport attention_round(const std::string& submitter, const Address& submitter_address,
                                   const std::vector<Validator>& validators, const Digest& result, double p_t,
                                   Amount penalty, ChainSim& chain) {
  const Amount before = chain.balance(submitter);
  AttentionRound round(submitter, submitter_address, result, validators, p_t, penalty, chain);
  RoundReport rep;
  rep.commitment = round.commitment();
  round.respond();
  round.reveal(result);
  round.accept_claim();
  for (std::size_t i = 0; i < validators.size(); ++i) {
    if (round.selected(i)) rep.selected.push_back(validators[i].id);
    if (round.response(i)) rep.responded.push_back(validators[i].id);
    if (round.selected(i) && round.accuse(i) == Accusation::Upheld) rep.penalized.push_back(validators[i].id);
  }
  round.close();
  rep.burned = round.burned();
  rep.submitter_reward = chain.balance(submitter) - before;
  return rep;
}

struct AttentionSimulation {
  std::uint64_t rounds = 0;
  std::uint64_t draws = 0;
  std::uint64_t selected = 0;
  std::uint64_t penalized = 0;
  Amount burned = 0;
  Amount minted = 0;
  double rate() const { return draws ? static_cast<double>(selected) / static_cast<double>(draws) : 0; }
  /// 3-sigma binomial band around p for `draws` trials.
  std::pair<double, double> band(double p) const {
    const double s = 3 * std::sqrt(p * (1 - p) / static_cast<double>(draws));
    return {p - s, p + s};
  }
};

/// `rounds` rounds with fresh results; each validator independently lazy with
/// probability `lazy_fraction`.
inline AttentionSimulation simulate_attention(std::uint64_t seed, std::uint64_t rounds, std::size_t validators,
                                              double p_t, Amount penalty, double lazy_fraction, ChainSim& chain) {
  Rng rng(seed, "attention");
  AttentionSimulation sim;
  const Address sub_addr = random_address(rng);
  std::vector<Validator> vs;
  for (std::size_t i = 0; i < validators; ++i) {
    vs.push_back({"validator-" + std::to_string(i), random_address(rng), !rng.bernoulli(lazy_fraction)});
    chain.mint(vs.back().id, penalty * rounds);
    sim.minted += penalty * rounds;
  }
  for (std::uint64_t r = 0; r < rounds; ++r) {
    Bytes msg;
    put_u64(msg, rng.next());
    const Digest result = hash_bytes(msg);
    const auto rep = attention_round("submitter", sub_addr, vs, result, p_t, penalty, chain);
    ++sim.rounds;
    sim.draws += vs.size();
    sim.selected += rep.selected.size();
    sim.penalized += rep.penalized.size();
    sim.burned += rep.burned;
  }
  return sim;
}

}  // namespace opml::economics
