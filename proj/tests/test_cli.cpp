#include <opml/dispute/protocol.hpp>

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <sys/wait.h>

namespace {

struct Result {
  int code;
  std::string out;
};

Result cli(const std::string& args) {
  const std::string cmd = std::string(OPML_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) throw std::runtime_error("popen failed");
  std::string out;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string fixture(const std::string& name) { return std::string(OPML_FIXTURE_DIR) + "/" + name; }

std::string tmp(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "opml_cli_test";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

/// key=value pairs of the last line starting with `winner=` plus the line before.
std::map<std::string, std::string> fields(const std::string& out) {
  std::map<std::string, std::string> kv;
  static const std::regex re(R"(([a-z_0-9]+)=("[^"]*"|\S+))");
  for (auto it = std::sregex_iterator(out.begin(), out.end(), re); it != std::sregex_iterator(); ++it) {
    kv[(*it)[1]] = (*it)[2];
  }
  return kv;
}

const std::string kModel = "--model " + fixture("mlp_4_8_3.opml") + " --input " + fixture("mlp_4_8_3.input");

}  // namespace

TEST(CliRun, FixtureGoldenAndReproducible) {
  const auto a = cli("run " + kModel + " --output " + tmp("out1.tensor"));
  const auto b = cli("run " + kModel + " --output " + tmp("out2.tensor"));
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(slurp(tmp("out1.tensor")), slurp(tmp("out2.tensor")));
  const auto kv = fields(a.out);
  if (std::getenv("OPML_HASH") == nullptr) {
    EXPECT_EQ(kv.at("output_digest"), "0552cd649d6474f437df594db82d60474bfec67648ac54433aa5ef806b973e22");
    EXPECT_EQ(kv.at("trace_len"), "1877");
  }
}

TEST(CliRun, DumpTrace) {
  const auto r = cli("run " + kModel + " --dump-trace " + tmp("trace.txt"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream in(tmp("trace.txt"));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(std::to_string(lines), fields(r.out).at("trace_len"));
}

TEST(CliRun, ErrorsAndExitCodes) {
  auto r = cli("run --model /nonexistent/model.opml");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("/nonexistent/model.opml"), std::string::npos);
  {
    std::ofstream(tmp("garbage.opml")) << "not a model";
  }
  r = cli("run --model " + tmp("garbage.opml"));
  EXPECT_EQ(r.code, 3) << r.out;
  r = cli("run --bogus-flag");
  EXPECT_EQ(r.code, 2);
  r = cli("");
  EXPECT_EQ(r.code, 2);
  r = cli("run " + kModel + " --output /nonexistent/dir/out.tensor");
  EXPECT_EQ(r.code, 3) << r.out;
}

TEST(CliDispute, SingleFromModel) {
  const auto r = cli("dispute --protocol single --n-from-model --fault-step 5 --seed 7");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto kv = fields(r.out);
  EXPECT_EQ(kv.at("winner"), "challenger");
  EXPECT_EQ(kv.at("pinned_step"), "5");
  const auto n = std::stoull(kv.at("n"));
  EXPECT_EQ(std::stoul(kv.at("rounds")), opml::dispute::interaction_bound(n, 1));
}

TEST(CliDispute, TwoPhasePinsNode) {
  const auto r = cli("dispute --protocol two-phase --fault-node 3 " + kModel);
  ASSERT_EQ(r.code, 0) << r.out;
  const auto kv = fields(r.out);
  EXPECT_EQ(kv.at("winner"), "challenger");
  EXPECT_EQ(kv.at("pinned_node"), "3");
  EXPECT_EQ(kv.at("phase1_rounds"), "4");
}

TEST(CliDispute, HonestScenario) {
  for (const char* proto : {"single", "two-phase"}) {
    const auto r = cli(std::string("dispute --protocol ") + proto + " " + kModel);
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(fields(r.out).at("winner"), "submitter");
    EXPECT_EQ(fields(r.out).at("settlement"), "confirmed");
  }
}

TEST(CliDispute, VerdictIsDataNotExitCode) {
  const auto r = cli("dispute --n 300 --fault-step 10 --faulty challenger --challenger wrong-midpoint:2");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(fields(r.out).at("winner"), "submitter");
}

TEST(CliDispute, InvalidConfig) {
  EXPECT_EQ(cli("dispute --protocol three-phase").code, 2);
  EXPECT_EQ(cli("dispute --k 0").code, 2);
  EXPECT_EQ(cli("dispute --submitter lazy").code, 2);
  EXPECT_EQ(cli("dispute --fault-node 1").code, 2);  // a Const node
  EXPECT_EQ(cli("dispute --n 50 --protocol two-phase").code, 2);
  EXPECT_EQ(cli("dispute --config /nonexistent.cfg").code, 2);
}

TEST(CliDispute, ConfigFileWithFlagOverride) {
  {
    std::ofstream cfg(tmp("scenario.cfg"));
    cfg << "# two-phase scenario\nphases = 2\nk = 2\nfault.node = 5\nfault.step = 7\nseed = 3\n";
  }
  auto r = cli("dispute --config " + tmp("scenario.cfg"));
  ASSERT_EQ(r.code, 0) << r.out;
  auto kv = fields(r.out);
  EXPECT_EQ(kv.at("protocol"), "two-phase");
  EXPECT_EQ(kv.at("pinned_node"), "5");
  EXPECT_EQ(kv.at("pinned_step"), "7");
  EXPECT_EQ(kv.at("phase1_rounds"), "3");  // ceil(log3 10)
  r = cli("dispute --config " + tmp("scenario.cfg") + " --k 1 --fault-node 8");
  kv = fields(r.out);
  EXPECT_EQ(kv.at("pinned_node"), "8");
  EXPECT_EQ(kv.at("phase1_rounds"), "4");
  {
    std::ofstream cfg(tmp("bad.cfg"));
    cfg << "phases 2\n";
  }
  EXPECT_EQ(cli("dispute --config " + tmp("bad.cfg")).code, 2);
  {
    std::ofstream cfg(tmp("unknown.cfg"));
    cfg << "colour = blue\n";
  }
  EXPECT_EQ(cli("dispute --config " + tmp("unknown.cfg")).code, 2);
}

TEST(CliDispute, TranscriptReproducibleAndVerifiable) {
  const std::string args = "dispute --protocol two-phase --fault-node 4 --fault-step 3 --seed 11 --transcript ";
  ASSERT_EQ(cli(args + tmp("t1.jsonl")).code, 0);
  ASSERT_EQ(cli(args + tmp("t2.jsonl")).code, 0);
  const std::string t1 = slurp(tmp("t1.jsonl"));
  EXPECT_EQ(t1, slurp(tmp("t2.jsonl")));
  EXPECT_NE(t1.find("\"phase\":\"graph\""), std::string::npos);
  EXPECT_NE(t1.find("\"phase\":\"vm\""), std::string::npos);
  const auto v = cli("verify-witness " + tmp("t1.jsonl"));
  ASSERT_EQ(v.code, 0) << v.out;
  EXPECT_NE(v.out.find("reason=post-root-mismatch winner=challenger"), std::string::npos) << v.out;

  {
    std::ofstream(tmp("broken.jsonl")) << "{\"kind\":\"open\"}\n{not json\n";
  }
  EXPECT_EQ(cli("verify-witness " + tmp("broken.jsonl")).code, 3);
  EXPECT_EQ(cli("verify-witness /nonexistent.jsonl").code, 2);
}

TEST(CliReports, Security) {
  auto r = cli("security --p 0.5 --m 10 --f 0.5");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "p,m,f,P_any,P_majority\n0.5,10,0.5,0.9990234375,0.623046875\n");
  r = cli("security --p 0.5 --m 1 --m-max 20 --f 0.5");
  ASSERT_EQ(r.code, 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  double prev = -1;
  int rows = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
    ASSERT_EQ(cols.size(), 5u);
    const double any = std::stod(cols[3]);
    EXPECT_GT(any, prev);
    prev = any;
    ++rows;
  }
  EXPECT_EQ(rows, 20);
  EXPECT_EQ(cli("security --p 1.5").code, 2);
  EXPECT_EQ(cli("security --f 1").code, 2);
}

TEST(CliReports, Economics) {
  auto r = cli("economics attention --r 0.001 --t 1 --C 0.001");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("| 0.001 | 1 | 0.001 | 1 | 0.001 | 0.002 | yes |"), std::string::npos) << r.out;
  r = cli("economics equilibrium --C 1 --R 3 --L 1 --B 2 --S 8");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("| validate | (2, -8) | (-1, -1) |"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("| no validate | (-1, 2) | (0, -1) |"), std::string::npos);
  EXPECT_NE(r.out.find("| 0.25 | 0.3 | yes |"), std::string::npos);
  EXPECT_EQ(cli("economics equilibrium --C 0").code, 2);
  EXPECT_EQ(cli("economics").code, 2);
  r = cli("economics simulate --rounds 2000 --validators 3 --p-t 0.1 --lazy 0.5 --seed 2");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out, cli("economics simulate --rounds 2000 --validators 3 --p-t 0.1 --lazy 0.5 --seed 2").out);
}

TEST(CliGen, FixturesRegenerateByteIdentical) {
  for (const char* name : {"mlp_4_8_3", "mlp_8_16_16_4", "mlp_2_4_2_argmax"}) {
    ASSERT_EQ(cli(std::string("gen-model --fixture ") + name + " --out " + tmp("m.opml")).code, 0);
    ASSERT_EQ(cli(std::string("gen-input --fixture ") + name + " --out " + tmp("x.input")).code, 0);
    if (std::getenv("OPML_HASH") == nullptr) {
      EXPECT_EQ(slurp(tmp("m.opml")), slurp(fixture(std::string(name) + ".opml"))) << name;
      EXPECT_EQ(slurp(tmp("x.input")), slurp(fixture(std::string(name) + ".input"))) << name;
    }
  }
  EXPECT_EQ(cli("gen-model --out " + tmp("m.opml") + " --dims 4").code, 2);
  EXPECT_EQ(cli("gen-input --out " + tmp("x.input")).code, 2);
}

TEST(CliComplexity, FixtureTable) {
  const auto r = cli("complexity --fixtures");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("mlp_4_8_3,10,"), std::string::npos) << r.out;
}
