#include "abpn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "abpn/ops.hpp"

namespace abpn {

namespace {

// Coordinates whose gradient nearly cancels are compared against the
// largest gradient of any input instead of their own magnitude.
constexpr double kScaleFloor = 1e-3;
constexpr double kKinkTolerance = 2e-5;

template <class T>
std::vector<Tensor<T>> analytic_gradients(const ScalarFunction<T>& fn, const std::vector<Tensor<double>>& inputs,
                                          const std::string& fault_op) {
  Tape<T> tape;
  if (!fault_op.empty()) tape.inject_fault(fault_op);
  std::vector<Var<T>> leaves;
  for (const auto& t : inputs) leaves.push_back(make_var(t.template cast<T>(), true));
  auto loss = fn(tape, leaves);
  tape.backward(loss);
  std::vector<Tensor<T>> grads;
  for (const auto& leaf : leaves) grads.push_back(leaf->grad.empty() ? Tensor<T>(leaf->value.shape()) : leaf->grad);
  return grads;
}

double evaluate(const ScalarFunction<double>& fn, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape;
  NoGradGuard<double> guard(tape);
  std::vector<Var<double>> leaves;
  for (const auto& t : inputs) leaves.push_back(make_var(t));
  return fn(tape, leaves)->value[0];
}

template <class T>
GradCheckResult compare(const std::vector<Tensor<T>>& analytic, const ScalarFunction<double>& fn64,
                        const std::vector<Tensor<double>>& inputs, double step) {
  GradCheckResult result;
  std::vector<Tensor<double>> probe = inputs;
  auto central = [&](std::size_t i, std::size_t j, double h) {
    const double saved = probe[i][j];
    probe[i][j] = saved + h;
    const double plus = evaluate(fn64, probe);
    probe[i][j] = saved - h;
    const double minus = evaluate(fn64, probe);
    probe[i][j] = saved;
    return (plus - minus) / (2.0 * h);
  };
  std::vector<std::vector<double>> numeric(probe.size()), halved(probe.size());
  double scale = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (std::size_t j = 0; j < probe[i].size(); ++j) {
      numeric[i].push_back(central(i, j, step));
      halved[i].push_back(central(i, j, step / 2));
      scale = std::max({scale, std::abs(numeric[i][j]), std::abs(static_cast<double>(analytic[i][j]))});
    }
  }
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (std::size_t j = 0; j < numeric[i].size(); ++j) {
      // On smooth stretches both step sizes agree to O(h²); a prelu or |x|
      // kink inside the step window pulls them apart.
      const double floor = std::max(kScaleFloor * scale, 1e-8);
      if (std::abs(numeric[i][j] - halved[i][j]) > kKinkTolerance * std::max(std::abs(numeric[i][j]), floor)) {
        ++result.skipped;
        continue;
      }
      const double a = static_cast<double>(analytic[i][j]);
      const double denom = std::max({std::abs(a), std::abs(numeric[i][j]), floor});
      const double err = std::abs(a - numeric[i][j]) / denom;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_input = i;
        result.worst_index = j;
        result.analytic = a;
        result.numeric = numeric[i][j];
      }
    }
  }
  return result;
}

}  // namespace

GradCheckResult grad_check(const ScalarFunction<double>& fn, const std::vector<Tensor<double>>& inputs, double step,
                           const std::string& fault_op) {
  return compare(analytic_gradients(fn, inputs, fault_op), fn, inputs, step);
}

GradCheckResult grad_check_mixed(const ScalarFunction<float>& fn32, const ScalarFunction<double>& fn64,
                                 const std::vector<Tensor<double>>& inputs, double step,
                                 const std::string& fault_op) {
  return compare(analytic_gradients(fn32, inputs, fault_op), fn64, inputs, step);
}

template <class T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <class T>
Var<T> random_projection(Tape<T>& tape, const Var<T>& out, std::uint64_t seed) {
  auto weights = make_var(random_tensor<T>(out->value.shape(), seed));
  return ops::sum(tape, ops::mul(tape, out, weights));
}

template Tensor<float> random_tensor(Shape, std::uint64_t, double);
template Tensor<double> random_tensor(Shape, std::uint64_t, double);
template Var<float> random_projection(Tape<float>&, const Var<float>&, std::uint64_t);
template Var<double> random_projection(Tape<double>&, const Var<double>&, std::uint64_t);

}  // namespace abpn
