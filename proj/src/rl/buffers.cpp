#include "noisesteer/rl/buffers.hpp"

#include "noisesteer/errors.hpp"
#include "noisesteer/numerics/archive.hpp"
#include "noisesteer/numerics/dense_net.hpp"

namespace noisesteer {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::add(Transition t) {
  ++added_;
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw DomainError("replay index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (items_.empty()) return {};
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.index(items_.size());
  return idx;
}

std::uint64_t ReplayBuffer::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& t = at(i);
    h = fnv1a(t.state, h);
    h = fnv1a(t.noise, h);
    const double extra[2] = {t.reward, t.done ? 1.0 : 0.0};
    h = fnv1a(extra, h);
    h = fnv1a(t.next_state, h);
  }
  return h;
}

void ReplayBuffer::save(ArchiveWriter& w) const {
  w.tag("replay-buffer", 1);
  w.put_u64("capacity", capacity_);
  w.put_u64("added", added_);
  w.put_u64("count", items_.size());
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& t = at(i);
    w.put("s", t.state);
    w.put("z", t.noise);
    w.put("r", t.reward);
    w.put("s2", t.next_state);
    w.put_u64("done", t.done);
  }
}

void ReplayBuffer::load(ArchiveReader& r) {
  r.expect_tag("replay-buffer", 1);
  capacity_ = r.get_u64("capacity");
  added_ = r.get_u64("added");
  const auto n = r.get_u64("count");
  items_.clear();
  head_ = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    Transition t;
    t.state = r.get_vector("s");
    t.noise = r.get_vector("z");
    t.reward = r.get_double("r");
    t.next_state = r.get_vector("s2");
    t.done = r.get_u64("done") != 0;
    items_.push_back(std::move(t));
  }
  if (items_.size() == capacity_) head_ = 0;
}

const DemoPair& DemoBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw DomainError("demo index out of range");
  ++reads_;
  return items_[i];
}

std::vector<std::size_t> DemoBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (items_.empty()) return {};
  ++reads_;
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.index(items_.size());
  return idx;
}

std::uint64_t DemoBuffer::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : items_) {
    h = fnv1a(p.state, h);
    h = fnv1a(p.noise, h);
  }
  return h;
}

void DemoBuffer::save(ArchiveWriter& w) const {
  w.tag("demo-buffer", 1);
  w.put_u64("count", items_.size());
  for (const auto& p : items_) {
    w.put("s", p.state);
    w.put("z", p.noise);
  }
}

void DemoBuffer::load(ArchiveReader& r) {
  r.expect_tag("demo-buffer", 1);
  const auto n = r.get_u64("count");
  items_.clear();
  for (std::uint64_t i = 0; i < n; ++i) {
    DemoPair p;
    p.state = r.get_vector("s");
    p.noise = r.get_vector("z");
    items_.push_back(std::move(p));
  }
}

}  // namespace noisesteer
