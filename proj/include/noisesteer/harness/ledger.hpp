#pragma once
// Append-only run record: one JSON object per line. Kinds: "initial" (the
// pre-adaptation evaluation), "round", "checkpoint".

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace noisesteer {

class RunLedger {
 public:
  using Record = nlohmann::ordered_json;

  /// Counters that may never decrease from one record to the next.
  static const std::vector<std::string>& monotone_keys();
  /// Keys ignored by equivalent(): they depend on the host or file layout.
  static const std::vector<std::string>& volatile_keys();

  /// Throws DomainError for a record without "kind" or one that moves a
  /// monotone counter backwards.
  void append(Record r);

  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::vector<Record> of_kind(std::string_view kind) const;
  /// The "initial" record; throws DomainError if absent.
  const Record& initial() const;
  /// Evaluation block of the last record carrying one.
  const Record& final_eval() const;

  /// Equal records after dropping volatile keys.
  bool equivalent(const RunLedger& other) const;

  void write_jsonl(std::ostream& os) const;
  static RunLedger read_jsonl(std::istream& is);
  void save(const std::string& path) const;
  static RunLedger load(const std::string& path);

 private:
  std::vector<Record> records_;
};

}  // namespace noisesteer
