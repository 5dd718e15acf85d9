#pragma once

#include <map>
#include <string>
#include <vector>

#include "unicorn/nn.hpp"

namespace unicorn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment buffers keyed by parameter name.
struct AdamState {
  std::size_t step = 0;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
};

/// Bias-corrected Adam over a fixed parameter list.
class Adam {
 public:
  Adam(nn::ParameterList params, AdamConfig config);

  /// Applies one update from the accumulated gradients; parameters with no
  /// gradient are left untouched.
  void step();
  void zero_grad();

  const AdamConfig& config() const { return config_; }
  const AdamState& state() const { return state_; }
  /// Throws ValidationError when names or sizes do not match the parameters.
  void load_state(AdamState state);

 private:
  nn::ParameterList params_;
  AdamConfig config_;
  AdamState state_;
};

}  // namespace unicorn
