#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace noisesteer {

/// Shape of one action chunk: `horizon` consecutive actions of `action_dim`
/// values, stored flattened step-major.
struct ChunkShape {
  std::size_t horizon = 16;
  std::size_t action_dim = 3;

  std::size_t size() const { return horizon * action_dim; }
  bool operator==(const ChunkShape&) const = default;
};

struct Demo {
  std::vector<double> state;
  std::vector<double> chunk;  // flattened, ChunkShape::size() values
};

/// (state, action chunk) pairs recorded from a demonstrator.
struct DemoSet {
  ChunkShape shape;
  std::size_t state_dim = 0;
  std::vector<Demo> items;

  bool empty() const { return items.empty(); }
  std::size_t size() const { return items.size(); }

  /// Throws ShapeError unless every record matches `shape` and `state_dim`.
  void validate() const;
  void add(Demo d);

  /// Line-delimited records: a header object, then one
  /// {"state":[...],"chunk":[...]} object per line.
  void write_jsonl(std::ostream& os) const;
  static DemoSet read_jsonl(std::istream& is);
  void save(const std::string& path) const;
  static DemoSet load(const std::string& path);
};

}  // namespace noisesteer
