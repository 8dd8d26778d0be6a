#include "cadd/optimizer.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace cadd {

void OptimizerConfig::validate() const {
  if (kind != "adam" && kind != "sgd") throw std::invalid_argument("optimizer: kind must be adam or sgd");
  if (!(learning_rate > 0)) throw std::invalid_argument("optimizer: learning rate must be positive");
  if (!(decay > 0) || decay > 1) throw std::invalid_argument("optimizer: decay must lie in (0, 1]");
  if (decay_interval <= 0) throw std::invalid_argument("optimizer: decay interval must be positive");
}

nlohmann::json OptimizerConfig::to_json() const {
  return {{"kind", kind},         {"learning_rate", learning_rate}, {"decay", decay},
          {"decay_interval", decay_interval}, {"beta1", beta1},     {"beta2", beta2},
          {"epsilon", epsilon},   {"momentum", momentum},           {"weight_decay", weight_decay}};
}

OptimizerConfig OptimizerConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys = {"kind",  "learning_rate", "decay",    "decay_interval", "beta1",
                                              "beta2", "epsilon",       "momentum", "weight_decay"};
  for (const auto& [key, _] : j.items())
    if (!kKeys.contains(key)) throw std::invalid_argument("optimizer: unknown key '" + key + "'");
  OptimizerConfig c;
  c.kind = j.value("kind", c.kind);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.decay = j.value("decay", c.decay);
  c.decay_interval = j.value("decay_interval", c.decay_interval);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.validate();
  return c;
}

double scheduled_learning_rate(const OptimizerConfig& config, long step) {
  return config.learning_rate * std::pow(config.decay, static_cast<double>(step / config.decay_interval));
}

Optimizer::Optimizer(const OptimizerConfig& config, std::vector<nn::Parameter*> params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  for (const auto* p : params_) {
    m_.emplace_back(p->size(), 0.0f);
    v_.emplace_back(config_.kind == "adam" ? p->size() : 0, 0.0f);
  }
}

void Optimizer::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Optimizer::step() {
  const double lr = current_learning_rate();
  ++steps_;
  if (config_.kind == "adam") {
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    const auto b1 = static_cast<float>(config_.beta1);
    const auto b2 = static_cast<float>(config_.beta2);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < p.size(); ++k) {
        const float g = p.grad[k] + static_cast<float>(config_.weight_decay) * p.value[k];
        m[k] = b1 * m[k] + (1.0f - b1) * g;
        v[k] = b2 * v[k] + (1.0f - b2) * g * g;
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        p.value[k] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + config_.epsilon));
      }
    }
  } else {
    const auto mu = static_cast<float>(config_.momentum);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      auto& m = m_[i];
      for (std::size_t k = 0; k < p.size(); ++k) {
        const float g = p.grad[k] + static_cast<float>(config_.weight_decay) * p.value[k];
        m[k] = mu * m[k] + g;
        p.value[k] -= static_cast<float>(lr) * m[k];
      }
    }
  }
  zero_grad();
}

}  // namespace cadd
