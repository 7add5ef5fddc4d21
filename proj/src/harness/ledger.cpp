#include "noisesteer/harness/ledger.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "noisesteer/errors.hpp"

namespace noisesteer {

namespace {

RunLedger::Record strip(RunLedger::Record r) {
  for (const auto& k : RunLedger::volatile_keys()) r.erase(k);
  return r;
}

}  // namespace

const std::vector<std::string>& RunLedger::monotone_keys() {
  static const std::vector<std::string> keys{"round", "env_steps", "decisions_total", "human_decisions_total"};
  return keys;
}

const std::vector<std::string>& RunLedger::volatile_keys() {
  static const std::vector<std::string> keys{"wall_s", "path"};
  return keys;
}

void RunLedger::append(Record r) {
  if (!r.is_object() || !r.contains("kind") || !r["kind"].is_string()) throw DomainError("ledger record needs a kind");
  for (const auto& k : monotone_keys()) {
    if (!r.contains(k)) continue;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (!it->contains(k)) continue;
      if (r[k].get<double>() < (*it)[k].get<double>()) throw DomainError("ledger counter '" + k + "' decreased");
      break;
    }
  }
  records_.push_back(std::move(r));
}

std::vector<RunLedger::Record> RunLedger::of_kind(std::string_view kind) const {
  std::vector<Record> out;
  for (const auto& r : records_) {
    if (r["kind"].get<std::string>() == kind) out.push_back(r);
  }
  return out;
}

const RunLedger::Record& RunLedger::initial() const {
  for (const auto& r : records_) {
    if (r["kind"] == "initial") return r;
  }
  throw DomainError("ledger has no initial evaluation");
}

const RunLedger::Record& RunLedger::final_eval() const {
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->contains("eval")) return (*it)["eval"];
  }
  throw DomainError("ledger has no evaluation");
}

bool RunLedger::equivalent(const RunLedger& other) const {
  if (records_.size() != other.records_.size()) return false;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (strip(records_[i]) != strip(other.records_[i])) return false;
  }
  return true;
}

void RunLedger::write_jsonl(std::ostream& os) const {
  for (const auto& r : records_) os << r.dump() << '\n';
}

RunLedger RunLedger::read_jsonl(std::istream& is) {
  RunLedger l;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      l.append(Record::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("ledger line " + std::to_string(n) + ": " + e.what());
    }
  }
  return l;
}

void RunLedger::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  write_jsonl(os);
  if (!os) throw ConfigError("write failed: " + path);
}

RunLedger RunLedger::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path);
  return read_jsonl(is);
}

}  // namespace noisesteer
