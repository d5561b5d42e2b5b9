#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "abpn/autograd.hpp"

namespace abpn {

/// Builds a scalar loss on `tape` from the leaf inputs.
template <class T>
using ScalarFunction = std::function<Var<T>(Tape<T>&, const std::vector<Var<T>>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t skipped = 0;  // coordinates whose step straddles a kink
};

/// Compares reverse-mode gradients against central differences over every
/// coordinate of every input. Error per coordinate is
/// |analytic − numeric| / max(|analytic|, |numeric|, 1e-3·s, 1e-8), where s
/// is the largest gradient magnitude over all inputs. Coordinates where the
/// central differences at `step` and `step`/2 disagree straddle a kink and
/// are skipped.
/// `fault_op`, when non-empty, corrupts that op's backward rule.
GradCheckResult grad_check(const ScalarFunction<double>& fn, const std::vector<Tensor<double>>& inputs,
                           double step = 1e-5, const std::string& fault_op = {});

/// float32 reverse-mode gradients checked against float64 central
/// differences of the same function.
GradCheckResult grad_check_mixed(const ScalarFunction<float>& fn32, const ScalarFunction<double>& fn64,
                                 const std::vector<Tensor<double>>& inputs, double step = 1e-6,
                                 const std::string& fault_op = {});

/// Reduces any output to a scalar as sum(out ⊙ R) with a fixed pseudo-random
/// weighting R, so every output coordinate contributes to the check.
template <class T>
Var<T> random_projection(Tape<T>& tape, const Var<T>& out, std::uint64_t seed);

/// Standard normal samples.
template <class T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double stddev = 1.0);

}  // namespace abpn
