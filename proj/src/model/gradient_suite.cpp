#include "abpn/gradient_suite.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "abpn/gradcheck.hpp"
#include "abpn/model.hpp"
#include "abpn/ops.hpp"

namespace abpn {

namespace {

constexpr double kPrimitiveTolerance64 = 1e-6;
constexpr double kPrimitiveTolerance32 = 1e-4;
constexpr double kCompositeTolerance = 1e-4;
// float32 rounding compounds along the five-op chain.
constexpr double kCompositeTolerance32 = 1e-3;

struct Case {
  std::string name;
  ScalarFunction<double> fn64;
  ScalarFunction<float> fn32;
  std::vector<Shape> shapes;
  double tolerance64 = kPrimitiveTolerance64;
  double tolerance32 = kPrimitiveTolerance32;
  double step64 = 1e-5;
  bool check_float32 = true;
};

template <class T>
T literal(const Tape<T>&, double v) {
  return static_cast<T>(v);
}

// Generic lambdas convert to the std::function of either precision.
template <class F>
Case make_case(std::string name, F fn, std::vector<Shape> shapes) {
  return Case{std::move(name), ScalarFunction<double>(fn), ScalarFunction<float>(fn), std::move(shapes)};
}

template <class T>
ModelWeights<T> weights_from_leaves(const NetworkConfig& config, const std::vector<Var<T>>& in, std::size_t first) {
  ModelWeights<T> w;
  const auto layout = parameter_layout(config);
  for (std::size_t i = 0; i < layout.size(); ++i) w.add(Parameter<T>{layout[i].name, layout[i].dims, in[first + i]});
  return w;
}

std::vector<Shape> model_shapes(const NetworkConfig& config, Shape image) {
  std::vector<Shape> shapes{image};
  const auto weights = ModelWeights<double>::zeros(config);
  for (const auto& p : weights.parameters()) shapes.push_back(p.var->value.shape());
  return shapes;
}

Case model_case(std::string name, NetworkConfig config) {
  const Shape image{1, 3, 8, 8};
  auto fn = [config](auto& tape, const auto& in) {
    using T = typename std::decay_t<decltype(in.front()->value)>::value_type;
    const auto weights = weights_from_leaves<T>(config, in, 1);
    ForwardContext<T> ctx{tape, weights, config};
    auto sr = forward(ctx, in[0]);
    auto target = make_var(random_tensor<T>(sr->value.shape(), 99, 0.5));
    return ops::l1_loss(tape, sr, target);
  };
  Case c = make_case(std::move(name), fn, model_shapes(config, image));
  c.tolerance64 = kCompositeTolerance;
  // Hundreds of prelu and |x| kinks; a shorter step rarely straddles one.
  c.step64 = 1e-6;
  c.check_float32 = false;
  return c;
}

std::vector<Tensor<double>> draw_inputs(const Case& c, std::uint64_t seed, const NetworkConfig* model) {
  std::vector<Tensor<double>> inputs;
  for (std::size_t i = 0; i < c.shapes.size(); ++i) inputs.push_back(random_tensor<double>(c.shapes[i], seed + 17 * i));
  if (!model) {
    // Keep primitive inputs clear of the prelu and |x| kinks at zero.
    for (auto& t : inputs)
      for (auto& v : t.data()) v = std::copysign(std::max(std::abs(v), 0.1), v);
  } else {
    // Start from a realistic initialisation rather than unit-variance weights.
    const auto init = ModelWeights<double>::initialize(*model, seed);
    for (std::size_t i = 0; i < init.parameters().size(); ++i) {
      inputs[i + 1] = init.parameters()[i].var->value;
      // Non-zero biases so every bias gradient path is exercised.
      if (init.parameters()[i].name.ends_with(".bias"))
        for (auto& v : inputs[i + 1].data()) v = 0.05 * std::sin(static_cast<double>(i) + v + 1.0);
    }
    for (auto& v : inputs[0].data()) v = 0.5 + 0.25 * std::tanh(v);
  }
  return inputs;
}

}  // namespace

std::vector<CheckOutcome> gradient_suite(std::uint64_t seed, const std::string& fault_op) {
  std::vector<Case> cases;
  cases.push_back(make_case(
      "conv2d k6/s4/p1",
      [](auto& t, const auto& in) { return random_projection(t, ops::conv2d(t, in[0], in[1], in[2], 4, 1), 1); },
      {{2, 2, 8, 8}, {3, 2, 6, 6}, {1, 3, 1, 1}}));
  cases.push_back(make_case(
      "conv2d k3/s1/p1",
      [](auto& t, const auto& in) { return random_projection(t, ops::conv2d(t, in[0], in[1], in[2], 1, 1), 2); },
      {{2, 3, 5, 5}, {2, 3, 3, 3}, {1, 2, 1, 1}}));
  cases.push_back(make_case(
      "conv2d k1 (attention branch)",
      [](auto& t, const auto& in) { return random_projection(t, ops::conv2d(t, in[0], in[1], in[2], 1, 0), 3); },
      {{1, 4, 3, 3}, {4, 4, 1, 1}, {1, 4, 1, 1}}));
  cases.push_back(make_case(
      "deconv2d k6/s4/p1",
      [](auto& t, const auto& in) { return random_projection(t, ops::deconv2d(t, in[0], in[1], in[2], 4, 1), 4); },
      {{2, 2, 2, 2}, {2, 3, 6, 6}, {1, 3, 1, 1}}));
  cases.push_back(make_case(
      "deconv2d k6/s2/p2",
      [](auto& t, const auto& in) { return random_projection(t, ops::deconv2d(t, in[0], in[1], in[2], 2, 2), 5); },
      {{1, 2, 3, 3}, {2, 2, 6, 6}, {1, 2, 1, 1}}));
  cases.push_back(make_case(
      "matmul",
      [](auto& t, const auto& in) { return random_projection(t, ops::matmul(t, in[0], in[1]), 6); },
      {{2, 1, 3, 4}, {2, 1, 4, 5}}));
  cases.push_back(make_case(
      "transpose",
      [](auto& t, const auto& in) { return random_projection(t, ops::transpose(t, in[0]), 7); }, {{1, 2, 3, 4}}));
  cases.push_back(make_case(
      "reshape",
      [](auto& t, const auto& in) { return random_projection(t, ops::reshape(t, in[0], Shape{1, 1, 4, 6}), 8); },
      {{1, 2, 3, 4}}));
  cases.push_back(make_case(
      "softmax_rows",
      [](auto& t, const auto& in) { return random_projection(t, ops::softmax_rows(t, in[0]), 9); }, {{1, 2, 4, 5}}));
  cases.push_back(make_case(
      "prelu",
      [](auto& t, const auto& in) { return random_projection(t, ops::prelu(t, in[0], in[1]), 10); },
      {{2, 3, 4, 4}, {1, 3, 1, 1}}));
  cases.push_back(make_case(
      "add", [](auto& t, const auto& in) { return random_projection(t, ops::add(t, in[0], in[1]), 11); },
      {{1, 2, 3, 3}, {1, 2, 3, 3}}));
  cases.push_back(make_case(
      "sub", [](auto& t, const auto& in) { return random_projection(t, ops::sub(t, in[0], in[1]), 12); },
      {{1, 2, 3, 3}, {1, 2, 3, 3}}));
  cases.push_back(make_case(
      "mul", [](auto& t, const auto& in) { return random_projection(t, ops::mul(t, in[0], in[1]), 13); },
      {{1, 2, 3, 3}, {1, 2, 3, 3}}));
  cases.push_back(make_case(
      "concat_channels",
      [](auto& t, const auto& in) {
        return random_projection(t, ops::concat_channels(t, {in[0], in[1], in[0]}), 14);
      },
      {{2, 1, 3, 3}, {2, 2, 3, 3}}));
  cases.push_back(make_case(
      "sum", [](auto& t, const auto& in) { return ops::sum(t, ops::mul(t, in[0], in[0])); }, {{1, 2, 3, 3}}));
  cases.push_back(make_case(
      "scale", [](auto& t, const auto& in) { return random_projection(t, ops::scale(t, in[0], literal(t, -1.75)), 16); },
      {{1, 2, 3, 3}}));
  cases.push_back(make_case(
      "mean", [](auto& t, const auto& in) { return ops::mean(t, ops::mul(t, in[0], in[1])); },
      {{1, 2, 3, 3}, {1, 2, 3, 3}}));
  cases.push_back(make_case(
      "lp_loss r=1", [](auto& t, const auto& in) { return ops::lp_loss(t, in[0], in[1], 1); },
      {{1, 2, 4, 4}, {1, 2, 4, 4}}));
  cases.push_back(make_case(
      "lp_loss r=2", [](auto& t, const auto& in) { return ops::lp_loss(t, in[0], in[1], 2); },
      {{1, 2, 4, 4}, {1, 2, 4, 4}}));
  cases.push_back(make_case(
      "resample (bicubic x1/2, x2)",
      [](auto& t, const auto& in) {
        auto down = ops::resample(t, in[0], bicubic_matrix(8, 4), bicubic_matrix(6, 3));
        auto up = ops::resample(t, down, bicubic_matrix(4, 8), bicubic_matrix(3, 6));
        return random_projection(t, up, 15);
      },
      {{1, 2, 8, 6}}));

  Case chain = make_case(
      "composite conv->prelu->softmax->matmul->L1",
      [](auto& t, const auto& in) {
        auto x = ops::prelu(t, ops::conv2d(t, in[0], in[1], in[2], 1, 1), in[3]);
        const Shape s = x->value.shape();
        auto rows = ops::softmax_rows(t, ops::reshape(t, x, Shape{s.n, 1, s.c, s.h * s.w}));
        auto projected = ops::matmul(t, rows, in[4]);
        return ops::l1_loss(t, projected, in[5]);
      },
      {{1, 2, 4, 4}, {3, 2, 3, 3}, {1, 3, 1, 1}, {1, 3, 1, 1}, {1, 1, 16, 2}, {1, 1, 3, 2}});
  chain.tolerance64 = kCompositeTolerance;
  chain.tolerance32 = kCompositeTolerance32;
  cases.push_back(std::move(chain));

  NetworkConfig attention_model{2, 2, 1, FusionMode::attention, RefineMode::rbpb};
  NetworkConfig concat_model{2, 2, 2, FusionMode::concatenation, RefineMode::post_bp};
  const std::size_t first_model = cases.size();
  cases.push_back(model_case("model T=1 C=2 x2 attention+rbpb", attention_model));
  cases.push_back(model_case("model T=2 C=2 x2 concatenation+post_bp", concat_model));

  std::vector<CheckOutcome> outcomes;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const Case& c = cases[i];
    const NetworkConfig* model = nullptr;
    if (i == first_model) model = &attention_model;
    if (i == first_model + 1) model = &concat_model;
    const auto inputs = draw_inputs(c, seed + 1000 * i, model);

    const GradCheckResult r64 = grad_check(c.fn64, inputs, c.step64, fault_op);
    outcomes.push_back({c.name + " [float64]", r64.max_rel_error, c.tolerance64, r64.max_rel_error < c.tolerance64});
    if (c.check_float32) {
      const GradCheckResult r32 = grad_check_mixed(c.fn32, c.fn64, inputs, 1e-6, fault_op);
      outcomes.push_back(
          {c.name + " [float32]", r32.max_rel_error, c.tolerance32, r32.max_rel_error < c.tolerance32});
    }
  }
  return outcomes;
}

}  // namespace abpn
