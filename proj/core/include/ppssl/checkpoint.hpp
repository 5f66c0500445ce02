#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ppssl/tensor.hpp"

namespace ppssl::train {

// Full training state container. Tensors are ordered and named; the same
// state always serializes to the same bytes, so save -> load -> save is
// byte-identical.
struct Checkpoint {
  std::string settings_text;  // canonical config snapshot of the run
  long long epoch = 0;        // completed epochs
  long long step = 0;         // completed optimizer steps
  long long queue_write_head = 0;
  long long queue_fill = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ppssl::train
