// opml: scenario runner and report emitter.
//
// Exit codes: 0 ok, 2 usage or configuration, 3 I/O or malformed input file,
// 4 internal invariant violation.

#include <opml/opml.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace opml;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kIo = 3, kInternal = 4 };

/// Malformed content in a file the user supplied.
class BadInput : public Error {
 public:
  using Error::Error;
};

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", x);
  return buf;
}

std::string opt_str(const auto& o) { return o ? std::to_string(*o) : std::string("-"); }

void require_file(const std::string& path, const char* what) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError(std::string(what) + " file not found: " + path);
}

// ---------------------------------------------------------------------------
// key=value config files. Keys are option names without the leading dashes;
// dots read as dashes (fault.node == --fault-node). Command-line flags win.

std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    for (char& c : key) {
      if (c == '.' || c == '_') c = '-';
    }
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

/// Splices config entries in front of the subcommand's own arguments, skipping
/// keys already given on the command line.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path || args.empty()) return args;
  auto given = [&](const std::string& key) {
    for (const auto& a : args) {
      if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) return true;
    }
    return false;
  };
  std::vector<std::string> extra;
  for (const auto& [k, v] : read_config(*path)) {
    if (given(k)) continue;
    if (v == "true" || v == "yes") {
      extra.push_back("--" + k);
    } else if (v != "false" && v != "no") {
      extra.push_back("--" + k + "=" + v);
    }
  }
  // args[0] is the subcommand name.
  args.insert(args.begin() + 1, extra.begin(), extra.end());
  return args;
}

// ---------------------------------------------------------------------------
// Model sources

std::vector<std::uint32_t> parse_dims(const std::string& text) {
  std::vector<std::uint32_t> dims;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      const long v = std::stol(part);
      if (v <= 0) throw ConfigError("layer widths must be positive");
      dims.push_back(static_cast<std::uint32_t>(v));
    } catch (const std::logic_error&) {
      throw ConfigError("bad --dims: " + text);
    }
  }
  if (dims.size() < 2) throw ConfigError("--dims needs at least two widths");
  return dims;
}

ml::CompGraph generated_model(std::uint64_t seed, const std::string& dims, bool argmax) {
  Rng rng(seed, "model");
  return ml::random_mlp(rng, parse_dims(dims), argmax);
}

ml::FixedTensor generated_input(std::uint64_t seed, const ml::CompGraph& g) {
  Rng rng(seed, "input");
  return ml::random_input(rng, g);
}

struct ModelArgs {
  std::string model;
  std::string input;
  std::uint64_t seed = 1;
  std::string dims = "4,8,3";
  bool argmax = false;

  void add(CLI::App* app) {
    app->add_option("--model", model, "model file (generated from --seed when omitted)");
    app->add_option("--input", input, "input tensor file (generated from --seed when omitted)");
    app->add_option("--seed", seed, "64-bit seed");
    app->add_option("--dims", dims, "layer widths of a generated MLP");
    app->add_flag("--argmax", argmax, "generated MLP ends in ArgMax");
  }

  std::pair<ml::CompGraph, ml::FixedTensor> load() const {
    if (!model.empty()) require_file(model, "model");
    if (!input.empty()) require_file(input, "input");
    ml::CompGraph g = model.empty() ? generated_model(seed, dims, argmax) : ml::load_model(model);
    ml::FixedTensor x = input.empty() ? generated_input(seed, g) : ml::load_tensor(input);
    g.check_input(x);
    return {std::move(g), std::move(x)};
  }
};

// ---------------------------------------------------------------------------
// run

struct RunArgs {
  ModelArgs src;
  std::string output;
  std::string dump_trace;
  unsigned threads = 1;
};

int cmd_run(const RunArgs& a) {
  const auto [g, x] = a.src.load();
  const auto native = ml::execute_native(g, x, {a.threads});
  std::ofstream trace;
  if (!a.dump_trace.empty()) {
    trace.open(a.dump_trace);
    if (!trace) throw IoError("cannot write " + a.dump_trace);
  }
  fpvm::StepObserver obs;
  if (trace.is_open()) obs = [&](const fpvm::VmState& s) { fpvm::write_trace_record(trace, s); };
  const auto vm = ml::execute_single_vm(g, x, obs);
  if (vm.output != native.output) throw Error("native and VM outputs differ");
  const auto per_node = ml::execute_via_vm(g, x);
  if (per_node.commitments != native.commitments) throw Error("native and per-node VM commitments differ");
  if (!a.output.empty()) ml::save_tensor(native.output, a.output);
  std::cout << "input_digest=" << hash_bytes(x.serialize()).hex() << " output_digest="
            << hash_bytes(native.output.serialize()).hex() << " graph_root=" << native.commitments.back().hex()
            << " nodes=" << g.size() << " trace_len=" << vm.run.steps << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// dispute

struct DisputeArgs {
  ModelArgs src;
  std::string protocol = "single";
  std::uint32_t phases = 0;
  std::uint32_t k = 1;
  std::uint32_t m = 1;
  std::optional<std::uint32_t> fault_node;
  std::optional<std::uint64_t> fault_step;
  std::string faulty = "submitter";
  std::string submitter = "honest";
  std::string challenger = "honest";
  std::uint64_t n = 0;
  bool n_from_model = false;
  std::uint64_t deadline = 10;
  std::uint64_t challenge_period = 100;
  std::uint64_t stake = 1000;
  std::uint64_t reward_num = 1;
  std::uint64_t reward_den = 2;
  std::string transcript;
};

/// honest | random | tamper-entrance | wrong-midpoint:R | silent:R, joined with '+'.
dispute::Strategy parse_strategy(const std::string& text, std::uint64_t seed) {
  dispute::Strategy s;
  std::stringstream ss(text);
  std::string part;
  auto round_of = [&](const std::string& p) -> std::uint32_t {
    const auto c = p.find(':');
    if (c == std::string::npos) throw ConfigError("strategy " + p + " needs a round, e.g. " + p + ":2");
    try {
      return static_cast<std::uint32_t>(std::stoul(p.substr(c + 1)));
    } catch (const std::logic_error&) {
      throw ConfigError("bad strategy round: " + p);
    }
  };
  while (std::getline(ss, part, '+')) {
    if (part == "honest") continue;
    if (part == "random") {
      s.random_seed = seed;
    } else if (part == "tamper-entrance") {
      s.tamper_entrance = true;
    } else if (part.rfind("wrong-midpoint", 0) == 0) {
      s.wrong_midpoint_round = round_of(part);
    } else if (part.rfind("silent", 0) == 0) {
      s.silent_after_round = round_of(part);
    } else {
      throw ConfigError("unknown strategy: " + part);
    }
  }
  return s;
}

void write_transcript(const dispute::Transcript& tr, const std::string& path) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  tr.write(out);
  if (!out) throw IoError("write failed: " + path);
}

std::string settle(dispute::ChainSim& chain, std::uint64_t claim_id, std::uint64_t period) {
  chain.advance(period);
  return std::string(
      dispute::settlement_name(dispute::settle_challenge_period(chain, claim_id, chain.now() - chain.claim_posted_at(claim_id), period)));
}

int cmd_dispute(DisputeArgs a) {
  if (a.phases == 1) a.protocol = "single";
  if (a.phases == 2) a.protocol = "two-phase";
  if (a.phases > 2) throw ConfigError("phases must be 1 or 2");
  if (a.protocol != "single" && a.protocol != "two-phase") throw ConfigError("protocol must be single or two-phase");
  if (a.k == 0 || a.m == 0) throw ConfigError("k and m must be positive");
  if (a.faulty != "submitter" && a.faulty != "challenger") throw ConfigError("faulty must be submitter or challenger");
  if (a.fault_node && !a.fault_step) a.fault_step = 0;

  dispute::Strategy sub = parse_strategy(a.submitter, a.src.seed);
  dispute::Strategy ch = parse_strategy(a.challenger, a.src.seed);
  if (a.fault_step) (a.faulty == "submitter" ? sub : ch).fault = dispute::FaultSpec{a.fault_node, *a.fault_step};

  dispute::ChainSim chain;
  dispute::Transcript tr;
  const bool synthetic = a.n > 0;
  if (synthetic && (a.n_from_model || !a.src.model.empty())) throw ConfigError("--n conflicts with a model");
  if (synthetic && a.protocol != "single") throw ConfigError("synthetic traces only support the single protocol");
  if (synthetic && a.fault_node) throw ConfigError("synthetic traces have no nodes");

  std::ostringstream info;
  info << std::boolalpha;
  std::optional<std::uint32_t> pinned_node;
  std::optional<std::uint64_t> pinned_step;
  std::uint32_t rounds = 0;
  dispute::Party winner;
  std::uint64_t claim_id = 0;

  const dispute::DisputeParams params{a.k, a.m, a.deadline, a.reward_num, a.reward_den};
  if (synthetic) {
    Rng rng(a.src.seed, "program");
    const auto initial = fpvm::load_program(dispute::straight_line_program(rng, a.n));
    auto oracle = std::make_shared<PreimageOracle>();
    const auto game = dispute::play_vm_game(initial, oracle, sub, ch, params, chain, &tr, a.n + 1, a.stake);
    const auto& o = game.outcome;
    claim_id = *game.claim.chain_claim_id;
    winner = o.winner;
    rounds = o.rounds;
    pinned_step = o.pinned_step;
    info << "protocol=single n=" << game.claim.trace_len << " padded=" << o.padded_length
         << " bound=" << dispute::interaction_bound(game.claim.trace_len, a.k, a.m) << " disputed=" << o.disputed
         << " timeout=" << o.timeout;
    info << " settlement=" << settle(chain, claim_id, a.challenge_period) << " detail=\"" << o.detail << "\"";
  } else {
    const auto [g, x] = a.src.load();
    if (a.fault_node && !ml::is_compute(g.node(*a.fault_node < g.size() ? *a.fault_node : 0).op)) {
      throw ConfigError("fault node must be a compute node");
    }
    if (a.fault_node && *a.fault_node >= g.size()) throw ConfigError("fault node out of range");
    if (a.protocol == "single") {
      const auto game = multiphase::play_single_phase(g, x, sub, ch, params, chain, &tr, a.stake);
      const auto& o = game.outcome;
      claim_id = 0;
      winner = o.winner;
      rounds = o.rounds;
      pinned_step = o.pinned_step;
      pinned_node = game.pinned_node;
      info << "protocol=single n=" << game.trace_len << " padded=" << o.padded_length
           << " bound=" << dispute::interaction_bound(game.trace_len, a.k, a.m) << " disputed=" << o.disputed
           << " timeout=" << o.timeout;
      info << " settlement=" << settle(chain, claim_id, a.challenge_period) << " detail=\"" << o.detail << "\"";
    } else {
      const multiphase::PhaseConfig cfg{a.k, a.m, a.deadline, a.reward_num, a.reward_den};
      const auto game = multiphase::play_two_phase(g, x, sub, ch, cfg, chain, &tr, a.stake);
      const auto& o = game.outcome;
      claim_id = *game.claim.chain_claim_id;
      winner = o.winner;
      rounds = o.rounds();
      pinned_step = o.pinned_step;
      pinned_node = o.pinned_node;
      info << "protocol=two-phase nodes=" << g.size() << " phase1_rounds=" << o.phase1_rounds
           << " phase2_rounds=" << o.phase2_rounds << " disputed=" << o.disputed << " timeout=" << o.timeout
           << " entrance_rejected=" << o.entrance_rejected << " exit_rejected=" << o.exit_rejected;
      info << " settlement=" << settle(chain, claim_id, a.challenge_period) << " detail=\"" << o.detail << "\"";
    }
  }
  if (!chain.conserved()) throw Error("chain balances not conserved");
  write_transcript(tr, a.transcript);
  std::cout << std::boolalpha << info.str() << "\n";
  std::cout << "winner=" << dispute::party_name(winner) << " rounds=" << rounds << " pinned_node=" << opt_str(pinned_node)
            << " pinned_step=" << opt_str(pinned_step) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// verify-witness

int cmd_verify_witness(const std::string& path) {
  require_file(path, "transcript");
  std::ifstream in(path);
  std::vector<dispute::Json> records;
  try {
    records = dispute::Transcript::parse(in);
  } catch (const Error& e) {
    throw BadInput(e.what());
  }
  int checked = 0;
  for (std::size_t idx = 0; idx < records.size(); ++idx) {
    const auto& r = records[idx];
    if (r.value("kind", "") != "arbitrate") continue;
    std::vector<fpvm::StepWitness> ws;
    try {
      for (const auto& h : r.at("witnesses")) ws.push_back(fpvm::StepWitness::deserialize(from_hex_bytes(h.get<std::string>())));
      const Digest pre = Digest::from_hex(r.at("pre_root").get<std::string>());
      const Digest post = Digest::from_hex(r.at("post_root").get<std::string>());
      const auto res = dispute::arbitrate_steps(pre, post, ws, r.at("j").get<std::uint64_t>());
      std::cout << "record=" << idx + 1 << " phase=" << r.value("phase", "") << " steps=" << ws.size()
                << " reason=" << fpvm::reason_name(res.reason) << " winner=" << dispute::party_name(res.winner) << "\n";
    } catch (const nlohmann::json::exception& e) {
      throw BadInput("record " + std::to_string(idx + 1) + " malformed: " + e.what());
    } catch (const ParseError& e) {
      throw BadInput("record " + std::to_string(idx + 1) + ": " + e.what());
    }
    ++checked;
  }
  if (checked == 0) std::cout << "no arbitrate records\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// security / economics

struct SecurityArgs {
  double p = 0.5;
  double f = 0.5;
  std::uint32_t m = 10;
  std::optional<std::uint32_t> m_max;
};

int cmd_security(const SecurityArgs& a) {
  const auto rows = economics::security_sweep(a.p, a.f, a.m, a.m_max.value_or(a.m));
  std::cout << "p,m,f,P_any,P_majority\n";
  for (const auto& r : rows) {
    std::cout << num(r.p) << "," << r.m << "," << num(r.f) << "," << num(r.any_trust) << "," << num(r.majority_trust)
              << "\n";
  }
  return kOk;
}

int cmd_equilibrium(const economics::GamePayoffs& g) {
  using economics::SubmitterAction;
  using economics::ValidatorAction;
  const auto e = economics::verifier_equilibrium(g);
  auto cell = [&](ValidatorAction v, SubmitterAction s) {
    const auto p = economics::payoff(g, v, s);
    return "(" + num(p.validator) + ", " + num(p.submitter) + ")";
  };
  std::cout << "| validator/submitter | cheat | no cheat |\n|---|---|---|\n";
  std::cout << "| validate | " << cell(ValidatorAction::Validate, SubmitterAction::Cheat) << " | "
            << cell(ValidatorAction::Validate, SubmitterAction::Honest) << " |\n";
  std::cout << "| no validate | " << cell(ValidatorAction::Skip, SubmitterAction::Cheat) << " | "
            << cell(ValidatorAction::Skip, SubmitterAction::Honest) << " |\n\n";
  std::cout << "| C | R | L | B | S | p_c | p_v | interior |\n|---|---|---|---|---|---|---|---|\n";
  std::cout << "| " << num(g.C) << " | " << num(g.R) << " | " << num(g.L) << " | " << num(g.B) << " | " << num(g.S)
            << " | " << num(e.p_c) << " | " << num(e.p_v) << " | " << (e.interior ? "yes" : "no") << " |\n";
  return kOk;
}

int cmd_attention(double r, double t, double C) {
  const auto o = economics::optimal_attention(r, t, C);
  std::cout << "| r | t | C | G* | p_t* | min_cost | feasible |\n|---|---|---|---|---|---|---|\n";
  std::cout << "| " << num(r) << " | " << num(t) << " | " << num(C) << " | " << num(o.G) << " | " << num(o.p_t) << " | "
            << num(o.min_cost) << " | " << (o.feasible ? "yes" : "no") << " |\n";
  return kOk;
}

int cmd_simulate(std::uint64_t seed, std::uint64_t rounds, std::size_t validators, double p_t, std::uint64_t penalty,
                 double lazy) {
  if (rounds == 0 || validators == 0) throw ConfigError("rounds and validators must be positive");
  if (!(lazy >= 0 && lazy <= 1)) throw ConfigError("lazy must be in [0,1]");
  dispute::ChainSim chain;
  const auto sim = economics::simulate_attention(seed, rounds, validators, p_t, penalty, lazy, chain);
  const auto [lo, hi] = sim.band(p_t);
  if (!chain.conserved()) throw Error("chain balances not conserved");
  std::cout << "| rounds | draws | selected | rate | band_lo | band_hi | penalized | burned | submitter_reward |\n"
               "|---|---|---|---|---|---|---|---|---|\n";
  std::cout << "| " << sim.rounds << " | " << sim.draws << " | " << sim.selected << " | " << num(sim.rate()) << " | "
            << num(lo) << " | " << num(hi) << " | " << sim.penalized << " | " << sim.burned << " | "
            << chain.balance("submitter") << " |\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// complexity

int cmd_complexity(const ModelArgs& src, bool fixtures) {
  std::vector<multiphase::ComplexityReport> reports;
  if (fixtures) {
    for (const auto& f : ml::fixture_models()) {
      const auto g = ml::fixture_model(f);
      reports.push_back(multiphase::complexity_report(g, ml::fixture_input(f, g), f.name));
    }
  } else {
    const auto [g, x] = src.load();
    reports.push_back(multiphase::complexity_report(g, x, src.model.empty() ? "generated" : src.model));
  }
  std::cout << "model,nodes,compute_nodes,phase1_commitments,node_steps_total,node_steps_max,single_phase_steps,"
               "product,ratio\n";
  for (const auto& r : reports) {
    std::cout << r.model << "," << r.nodes << "," << r.compute_nodes << "," << r.phase1_commitments << ","
              << r.node_steps_total << "," << r.node_steps_max << "," << r.single_phase_steps << "," << num(r.product)
              << "," << num(r.ratio) << "\n";
  }
  return kOk;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"opML fraud-proof kernel: scenarios and reports"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  std::cout << std::boolalpha;

  std::string config_path;
  auto add_config = [&](CLI::App* sub) { sub->add_option("--config", config_path, "key=value scenario file"); };

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "execute a model, print the claim commitments");
  run.src.add(run_cmd);
  run_cmd->add_option("--output", run.output, "write the output tensor here");
  run_cmd->add_option("--dump-trace", run.dump_trace, "write `step, pc, state_root` per VM step");
  run_cmd->add_option("--threads", run.threads, "native matmul threads")->check(CLI::Range(1u, 256u));
  add_config(run_cmd);

  DisputeArgs dis;
  auto* dis_cmd = app.add_subcommand("dispute", "play a dispute game, print the verdict");
  dis.src.add(dis_cmd);
  dis_cmd->add_option("--protocol", dis.protocol, "single | two-phase");
  dis_cmd->add_option("--phases", dis.phases, "1 | 2 (alias for --protocol)");
  dis_cmd->add_option("--k", dis.k, "checkpoints per round");
  dis_cmd->add_option("--m", dis.m, "steps re-executed by arbitration");
  dis_cmd->add_option("--fault-node", dis.fault_node, "node whose VM run is corrupted");
  dis_cmd->add_option("--fault-step", dis.fault_step, "corrupted step (node-local with --fault-node)");
  dis_cmd->add_option("--faulty", dis.faulty, "party carrying the fault: submitter | challenger");
  dis_cmd->add_option("--submitter", dis.submitter, "submitter strategy");
  dis_cmd->add_option("--challenger", dis.challenger, "challenger strategy");
  dis_cmd->add_option("--n", dis.n, "synthetic straight-line trace of n steps instead of a model");
  dis_cmd->add_flag("--n-from-model", dis.n_from_model, "trace length comes from the model (default)");
  dis_cmd->add_option("--deadline", dis.deadline, "ticks before a silent party forfeits");
  dis_cmd->add_option("--challenge-period", dis.challenge_period, "ticks before an undisputed claim is confirmed");
  dis_cmd->add_option("--stake", dis.stake, "stake per party");
  dis_cmd->add_option("--reward-num", dis.reward_num, "winner's share of the slashed stake, numerator");
  dis_cmd->add_option("--reward-den", dis.reward_den, "winner's share of the slashed stake, denominator");
  dis_cmd->add_option("--transcript", dis.transcript, "write the JSONL transcript here");
  add_config(dis_cmd);

  std::string transcript_path;
  auto* ver_cmd = app.add_subcommand("verify-witness", "re-check the arbitration witnesses of a transcript offline");
  ver_cmd->add_option("transcript", transcript_path, "JSONL transcript")->required();

  SecurityArgs sec;
  auto* sec_cmd = app.add_subcommand("security", "AnyTrust vs majority-trust probabilities (CSV)");
  sec_cmd->add_option("--p", sec.p, "per-validator malice probability");
  sec_cmd->add_option("--m", sec.m, "validators (sweep start with --m-max)");
  sec_cmd->add_option("--m-max", sec.m_max, "sweep m up to this value");
  sec_cmd->add_option("--f", sec.f, "Byzantine tolerance ratio");
  add_config(sec_cmd);

  auto* eco_cmd = app.add_subcommand("economics", "incentive tables");
  eco_cmd->require_subcommand(1);
  economics::GamePayoffs pay;
  auto* eq_cmd = eco_cmd->add_subcommand("equilibrium", "mixed equilibrium of the verification game");
  eq_cmd->add_option("--C", pay.C);
  eq_cmd->add_option("--R", pay.R);
  eq_cmd->add_option("--L", pay.L);
  eq_cmd->add_option("--B", pay.B);
  eq_cmd->add_option("--S", pay.S);
  double att_r = 0.001, att_t = 1, att_c = 0.001;
  auto* att_cmd = eco_cmd->add_subcommand("attention", "cheapest attention-challenge parameters");
  att_cmd->add_option("--r", att_r, "lock-up interest rate");
  att_cmd->add_option("--t", att_t, "response gas fee");
  att_cmd->add_option("--C", att_c, "computation cost");
  std::uint64_t sim_seed = 1, sim_rounds = 10'000, sim_penalty = 10;
  std::size_t sim_validators = 1;
  double sim_pt = 0.1, sim_lazy = 0;
  auto* sim_cmd = eco_cmd->add_subcommand("simulate", "attention-challenge rounds on the simulated chain");
  sim_cmd->add_option("--seed", sim_seed);
  sim_cmd->add_option("--rounds", sim_rounds);
  sim_cmd->add_option("--validators", sim_validators);
  sim_cmd->add_option("--p-t", sim_pt, "response probability");
  sim_cmd->add_option("--penalty", sim_penalty, "deposit G in chain units");
  sim_cmd->add_option("--lazy", sim_lazy, "fraction of validators that never compute");

  ModelArgs cx;
  bool cx_fixtures = false;
  auto* cx_cmd = app.add_subcommand("complexity", "phase-1 commitments and per-node steps vs single-phase steps");
  cx.add(cx_cmd);
  cx_cmd->add_flag("--fixtures", cx_fixtures, "report the three reference models");

  std::string gm_out, gm_dims = "4,8,3", gm_fixture;
  std::uint64_t gm_seed = 1;
  bool gm_argmax = false;
  auto* gm_cmd = app.add_subcommand("gen-model", "write a random MLP model file");
  gm_cmd->add_option("--out", gm_out)->required();
  gm_cmd->add_option("--dims", gm_dims);
  gm_cmd->add_option("--seed", gm_seed);
  gm_cmd->add_flag("--argmax", gm_argmax);
  gm_cmd->add_option("--fixture", gm_fixture, "one of the reference models by name");

  std::string gi_out, gi_model, gi_fixture;
  std::uint64_t gi_seed = 1;
  auto* gi_cmd = app.add_subcommand("gen-input", "write a random input tensor for a model");
  gi_cmd->add_option("--out", gi_out)->required();
  gi_cmd->add_option("--model", gi_model);
  gi_cmd->add_option("--seed", gi_seed);
  gi_cmd->add_option("--fixture", gi_fixture, "input of a reference model by name");

  // Config expansion happens before parsing so flags override file values.
  std::vector<std::string> args(argv + 1, argv + argc);
  if (!args.empty()) args = expand_config(std::move(args));
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  auto find_fixture = [](const std::string& name) {
    for (const auto& f : ml::fixture_models()) {
      if (f.name == name) return f;
    }
    throw ConfigError("unknown fixture: " + name);
  };

  if (*run_cmd) return cmd_run(run);
  if (*dis_cmd) return cmd_dispute(dis);
  if (*ver_cmd) return cmd_verify_witness(transcript_path);
  if (*sec_cmd) return cmd_security(sec);
  if (*eq_cmd) return cmd_equilibrium(pay);
  if (*att_cmd) return cmd_attention(att_r, att_t, att_c);
  if (*sim_cmd) return cmd_simulate(sim_seed, sim_rounds, sim_validators, sim_pt, sim_penalty, sim_lazy);
  if (*cx_cmd) return cmd_complexity(cx, cx_fixtures);
  if (*gm_cmd) {
    const auto g = gm_fixture.empty() ? generated_model(gm_seed, gm_dims, gm_argmax)
                                      : ml::fixture_model(find_fixture(gm_fixture), gm_seed);
    ml::save_model(g, gm_out);
    std::cout << "model_digest=" << hash_bytes(ml::serialize_model(g)).hex() << " nodes=" << g.size() << "\n";
    return kOk;
  }
  if (*gi_cmd) {
    ml::FixedTensor x;
    if (!gi_fixture.empty()) {
      const auto f = find_fixture(gi_fixture);
      x = ml::fixture_input(f, ml::fixture_model(f), gi_seed);
    } else {
      if (gi_model.empty()) throw ConfigError("gen-input needs --model or --fixture");
      require_file(gi_model, "model");
      x = generated_input(gi_seed, ml::load_model(gi_model));
    }
    ml::save_tensor(x, gi_out);
    std::cout << "input_digest=" << hash_bytes(x.serialize()).hex() << "\n";
    return kOk;
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const RangeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const ParseError& e) {
    std::cerr << "malformed input: " << e.what() << "\n";
    return kIo;
  } catch (const BadInput& e) {
    std::cerr << "malformed input: " << e.what() << "\n";
    return kIo;
  } catch (const ml::GraphError& e) {
    std::cerr << "malformed model: " << e.what() << "\n";
    return kIo;
  } catch (const ml::ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}
