#include "unicorn/optim.hpp"

#include <cmath>

#include "unicorn/errors.hpp"

namespace unicorn {

Adam::Adam(nn::ParameterList params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  for (const auto& p : params_) {
    if (state_.first_moment.count(p.name)) throw ValidationError("duplicate parameter name " + p.name);
    state_.first_moment[p.name].assign(p.tensor.size(), 0.0);
    state_.second_moment[p.name].assign(p.tensor.size(), 0.0);
  }
}

void Adam::step() {
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (auto& p : params_) {
    auto grad = p.tensor.grad();
    if (grad.empty()) continue;
    auto values = p.tensor.data();
    auto& m = state_.first_moment[p.name];
    auto& v = state_.second_moment[p.name];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * grad[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::load_state(AdamState state) {
  for (const auto& p : params_) {
    auto m = state.first_moment.find(p.name);
    auto v = state.second_moment.find(p.name);
    if (m == state.first_moment.end() || v == state.second_moment.end())
      throw ValidationError("optimizer state lacks parameter " + p.name);
    if (m->second.size() != p.tensor.size() || v->second.size() != p.tensor.size())
      throw ValidationError("optimizer state size mismatch for " + p.name);
  }
  if (state.first_moment.size() != params_.size()) throw ValidationError("optimizer state has extra parameters");
  state_ = std::move(state);
}

}  // namespace unicorn
