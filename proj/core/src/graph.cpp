#include "ppssl/graph.hpp"

#include <algorithm>

namespace ppssl {

Var make_leaf(Tensor value, bool requires_grad, std::string name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  return n;
}

Var Graph::input(Tensor value, bool requires_grad, std::string name) {
  auto n = make_leaf(std::move(value), grad_enabled_ && requires_grad, std::move(name));
  tape_.push_back(n);
  return n;
}

Var Graph::emplace(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward,
                   std::string name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->name = std::move(name);
  if (grad_enabled_) {
    n->requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                   [](const Var& v) { return v && v->requires_grad; });
    if (n->requires_grad) {
      n->inputs = std::move(inputs);
      n->backward = std::move(backward);
    }
  }
  tape_.push_back(n);
  return n;
}

void Graph::backward(const Var& root) {
  if (!grad_enabled_) throw StructuralError("backward() on a grad-disabled graph");
  if (!root) throw StructuralError("backward() on a null root");
  if (!root->requires_grad)
    throw ContractError("backward(): root does not require grad (no differentiable path)");
  root->ensure_grad();
  root->grad.fill(0.0);
  root->grad.add_scaled(Tensor(root->value.shape(), 1.0), 1.0);
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    Node& n = **it;
    if (n.requires_grad && n.grad_set && n.backward) n.backward(n);
  }
}

}  // namespace ppssl
