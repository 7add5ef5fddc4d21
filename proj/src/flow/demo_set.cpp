#include "noisesteer/flow/demo_set.hpp"

#include <fstream>
#include <string>

#include "json.hpp"
#include "noisesteer/errors.hpp"

namespace noisesteer {

namespace {
constexpr const char* kFormat = "noisesteer-demos";
}

void DemoSet::validate() const {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].state.size() != state_dim) {
      throw ShapeError("demo " + std::to_string(i) + ": state has " + std::to_string(items[i].state.size()) +
                       " values, expected " + std::to_string(state_dim));
    }
    if (items[i].chunk.size() != shape.size()) {
      throw ShapeError("demo " + std::to_string(i) + ": chunk has " + std::to_string(items[i].chunk.size()) +
                       " values, expected " + std::to_string(shape.size()));
    }
  }
}

void DemoSet::add(Demo d) {
  if (d.state.size() != state_dim || d.chunk.size() != shape.size()) throw ShapeError("demo does not match set shape");
  items.push_back(std::move(d));
}

void DemoSet::write_jsonl(std::ostream& os) const {
  nlohmann::json header{{"format", kFormat},
                        {"version", 1},
                        {"horizon", shape.horizon},
                        {"action_dim", shape.action_dim},
                        {"state_dim", state_dim},
                        {"count", items.size()}};
  os << header.dump() << '\n';
  for (const auto& d : items) os << nlohmann::json{{"state", d.state}, {"chunk", d.chunk}}.dump() << '\n';
}

DemoSet DemoSet::read_jsonl(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("demo file is empty");
  DemoSet set;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != kFormat) throw FormatError("not a demo file");
    if (header.at("version").get<int>() != 1) throw FormatError("unsupported demo file version");
    set.shape.horizon = header.at("horizon").get<std::size_t>();
    set.shape.action_dim = header.at("action_dim").get<std::size_t>();
    set.state_dim = header.at("state_dim").get<std::size_t>();
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto rec = nlohmann::json::parse(line);
      set.items.push_back({rec.at("state").get<std::vector<double>>(), rec.at("chunk").get<std::vector<double>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed demo file: ") + e.what());
  }
  set.validate();
  return set;
}

void DemoSet::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  write_jsonl(os);
}

DemoSet DemoSet::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path);
  return read_jsonl(is);
}

}  // namespace noisesteer
