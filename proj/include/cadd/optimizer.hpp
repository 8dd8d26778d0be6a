#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cadd/nn.hpp"

namespace cadd {

struct OptimizerConfig {
  std::string kind = "adam";  // adam | sgd
  double learning_rate = 1e-4;
  double decay = 0.9;
  int decay_interval = 250;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.0;  // sgd only
  double weight_decay = 0.0;

  void validate() const;
  nlohmann::json to_json() const;
  static OptimizerConfig from_json(const nlohmann::json& j);
};

/// Step-decayed learning rate: lr0 * decay^floor(step / interval).
double scheduled_learning_rate(const OptimizerConfig& config, long step);

class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, std::vector<nn::Parameter*> params);

  /// Applies one update from the accumulated gradients, then clears them.
  void step();
  /// Rate the next call to step() will use.
  double current_learning_rate() const { return scheduled_learning_rate(config_, steps_); }
  long steps() const { return steps_; }
  void zero_grad();

 private:
  OptimizerConfig config_;
  std::vector<nn::Parameter*> params_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  long steps_ = 0;
};

}  // namespace cadd
