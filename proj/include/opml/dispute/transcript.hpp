#pragma once

// JSONL game transcript: one object per line. Every record carries "phase"
// ("single", "graph" or "vm") and "kind".

#include <opml/hash.hpp>

#include <nlohmann/json.hpp>

#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace opml::dispute {

using Json = nlohmann::ordered_json;

class Transcript {
 public:
  void set_phase(std::string phase) { phase_ = std::move(phase); }
  const std::string& phase() const { return phase_; }

  void record(const std::string& kind, Json fields) {
    Json rec;
    rec["phase"] = phase_;
    rec["kind"] = kind;
    for (auto& [k, v] : fields.items()) rec[k] = std::move(v);
    records_.push_back(std::move(rec));
  }

  const std::vector<Json>& records() const { return records_; }

  void write(std::ostream& os) const {
    for (const auto& r : records_) os << r.dump() << '\n';
  }

  std::string jsonl() const {
    std::string out;
    for (const auto& r : records_) out += r.dump() + "\n";
    return out;
  }

  /// Parses JSONL; blank lines are skipped.
  static std::vector<Json> parse(std::istream& is) {
    std::vector<Json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        out.push_back(Json::parse(line));
      } catch (const nlohmann::json::exception& e) {
        throw Error("transcript line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    return out;
  }

 private:
  std::string phase_ = "single";
  std::vector<Json> records_;
};

inline Json hex_list(const std::vector<Digest>& ds) {
  Json a = Json::array();
  for (const auto& d : ds) a.push_back(d.hex());
  return a;
}

}  // namespace opml::dispute
