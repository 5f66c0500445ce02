#pragma once

#include <map>
#include <string>
#include <vector>

#include "ppssl/backbone.hpp"
#include "ppssl/tensor.hpp"

namespace ppssl::optim {

struct SgdConfig {
  double lr = 0.03;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  // Throws ConfigError listing every invalid field.
  void validate() const;
};

// base_lr at step 0 decaying to 0 at total_steps along a half cosine.
double cosine_lr(double base_lr, long long step, long long total_steps);

// Dispatch on schedule name: "cosine" or "constant".
double scheduled_lr(const std::string& schedule, double base_lr, long long step,
                    long long total_steps);

// Heavy-ball SGD over named parameters. Weight decay is folded into the
// gradient before the momentum buffer update, and applies to every managed
// parameter each step, grad accumulated or not.
class Sgd {
public:
  Sgd(std::vector<model::Param> params, SgdConfig cfg);

  // One update from the gradients currently accumulated on the parameters.
  void step(double lr);
  void zero_grad();

  const SgdConfig& config() const { return cfg_; }
  const std::vector<model::Param>& params() const { return params_; }

  // Momentum buffers keyed by parameter name; mutable access exists for
  // checkpoint restore only.
  std::map<std::string, Tensor>& buffers() { return buffers_; }
  const std::map<std::string, Tensor>& buffers() const { return buffers_; }

private:
  SgdConfig cfg_;
  std::vector<model::Param> params_;
  std::map<std::string, Tensor> buffers_;
};

}  // namespace ppssl::optim
