#include <cmath>
#include <stdexcept>

#include "abpn/error.hpp"
#include "abpn/train.hpp"

namespace abpn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (loss_order != 1 && loss_order != 2) throw ConfigError("loss_order must be 1 or 2");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must be in [0,1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

AdamState AdamState::zeros_like(const ModelWeights<float>& weights) {
  AdamState s;
  for (const auto& p : weights.parameters()) {
    s.m.emplace_back(p.var->value.shape());
    s.v.emplace_back(p.var->value.shape());
  }
  return s;
}

void adam_step(ModelWeights<float>& weights, AdamState& state, const TrainConfig& cfg) {
  auto& params = weights.parameters();
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adam_step: optimizer state does not match the parameter list");
  for (const auto& p : params)
    if (p.var->grad.empty()) throw std::invalid_argument("adam_step: missing gradient for " + p.name);

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].var->value.data();
    const auto grad = params[i].var->grad.data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = static_cast<double>(grad[j]) + cfg.weight_decay * value[j];
      m[j] = static_cast<float>(cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g);
      v[j] = static_cast<float>(cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g);
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      value[j] = static_cast<float>(value[j] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

}  // namespace abpn
