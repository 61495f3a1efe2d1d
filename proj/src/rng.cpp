#include "bifleet/rng.hpp"

#include <sstream>

#include "bifleet/common.hpp"

namespace bifleet {

size_t Rng::weighted_index(const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ContractViolation("weighted_index: negative weight");
    total += w;
  }
  if (total <= 0.0) throw ContractViolation("weighted_index: all weights zero");
  double r = next_double() * total;
  double acc = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (r < acc) return i;
  }
  return weights.size() - 1;
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

Rng Rng::deserialize(const std::string& text) {
  Rng r;
  std::istringstream is(text);
  is >> r.engine_;
  if (!is) throw ParseError("Rng::deserialize: malformed engine state");
  return r;
}

}  // namespace bifleet
