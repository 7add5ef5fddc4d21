#include "noisesteer/numerics/rng.hpp"

#include <sstream>

#include "noisesteer/errors.hpp"

namespace noisesteer {

std::string Rng::save_state() const {
  std::ostringstream os;
  os << seed_ << ' ' << engine_;
  return os.str();
}

void Rng::load_state(const std::string& state) {
  std::istringstream is(state);
  is >> seed_ >> engine_;
  if (!is) throw FormatError("corrupt rng state");
}

}  // namespace noisesteer
