#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace abpn {

struct CheckOutcome {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Central-difference checks of every differentiable primitive (float64 and
/// float32-vs-float64), a composite conv→prelu→softmax→matmul→L1 chain and
/// a complete T=1, C=2, α=2 network on an 8×8 input.
std::vector<CheckOutcome> gradient_suite(std::uint64_t seed, const std::string& fault_op = {});

}  // namespace abpn
