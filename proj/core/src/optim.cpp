#include "ppssl/optim.hpp"

#include <cmath>
#include <numbers>

namespace ppssl::optim {

void SgdConfig::validate() const {
  std::vector<std::string> issues;
  if (!std::isfinite(lr) || lr <= 0.0) issues.push_back("lr must be positive and finite");
  if (!std::isfinite(momentum) || momentum < 0.0 || momentum >= 1.0)
    issues.push_back("momentum must lie in [0, 1)");
  if (!std::isfinite(weight_decay) || weight_decay < 0.0)
    issues.push_back("weight_decay must be nonnegative and finite");
  if (!issues.empty()) throw ConfigError("invalid optimizer configuration", issues);
}

double cosine_lr(double base_lr, long long step, long long total_steps) {
  if (total_steps <= 0) throw ConfigError("cosine schedule needs a positive total step count");
  if (step < 0 || step > total_steps)
    throw StructuralError("schedule step " + std::to_string(step) + " outside [0, " +
                          std::to_string(total_steps) + "]");
  double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

double scheduled_lr(const std::string& schedule, double base_lr, long long step,
                    long long total_steps) {
  if (schedule == "constant") return base_lr;
  if (schedule == "cosine") return cosine_lr(base_lr, step, total_steps);
  throw ConfigError("unknown lr schedule '" + schedule + "'");
}

Sgd::Sgd(std::vector<model::Param> params, SgdConfig cfg) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  for (const auto& p : params_) {
    if (!p.var) throw StructuralError("optimizer given a null parameter");
    if (!p.var->requires_grad)
      throw ConfigError("optimizer given non-trainable parameter '" + p.name + "'");
    auto [it, fresh] = buffers_.emplace(p.name, Tensor(p.var->value.shape()));
    (void)it;
    if (!fresh) throw StructuralError("duplicate parameter name '" + p.name + "'");
  }
}

void Sgd::step(double lr) {
  if (!std::isfinite(lr) || lr < 0.0) throw ConfigError("step lr must be finite and nonnegative");
  for (auto& p : params_) {
    Tensor& v = p.var->value;
    Tensor& buf = buffers_.at(p.name);
    const bool has_grad = p.var->grad_set;
    const Tensor& grad = p.var->grad;
    for (std::int64_t i = 0; i < v.size(); ++i) {
      double g = (has_grad ? grad[i] : 0.0) + cfg_.weight_decay * v[i];
      buf[i] = cfg_.momentum * buf[i] + g;
      v[i] -= lr * buf[i];
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.var->zero_grad();
}

}  // namespace ppssl::optim
