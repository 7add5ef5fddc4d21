#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "noisesteer/numerics/rng.hpp"

namespace noisesteer {

class ArchiveWriter;
class ArchiveReader;

struct Transition {
  std::vector<double> state;
  std::vector<double> noise;
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
  bool operator==(const Transition&) const = default;
};

struct DemoPair {
  std::vector<double> state;
  std::vector<double> noise;  // inverted target z_hat
  bool operator==(const DemoPair&) const = default;
};

/// Fixed-capacity ring of transitions; the oldest entry is evicted first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 33333);

  void add(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  std::uint64_t total_added() const { return added_; }
  /// i-th entry in insertion order among those still held (0 = oldest).
  const Transition& at(std::size_t i) const;
  /// `n` indices drawn uniformly with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

  std::uint64_t checksum() const;
  void save(ArchiveWriter& w) const;
  void load(ArchiveReader& r);

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::uint64_t added_ = 0;
};

/// Append-only store of (state, inverted noise) supervision pairs. Counts
/// reads so schedules that must not touch it can be checked.
class DemoBuffer {
 public:
  void add(DemoPair p) { items_.push_back(std::move(p)); }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const DemoPair& at(std::size_t i) const;
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
  std::uint64_t reads() const { return reads_; }

  std::uint64_t checksum() const;
  void save(ArchiveWriter& w) const;
  void load(ArchiveReader& r);

 private:
  std::vector<DemoPair> items_;
  mutable std::uint64_t reads_ = 0;
};

}  // namespace noisesteer
