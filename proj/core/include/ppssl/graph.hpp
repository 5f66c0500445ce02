#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ppssl/tensor.hpp"

namespace ppssl {

struct Node;
using Var = std::shared_ptr<Node>;

// One value in a computation. Persistent leaves (parameters) live outside
// any Graph and keep their grad across steps until zeroed; intermediate
// nodes are owned by the Graph tape that created them.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation, same shape as value
  bool requires_grad = false;
  bool grad_set = false;
  std::vector<Var> inputs;
  std::function<void(Node&)> backward;  // reads this->grad, accumulates into inputs
  std::string name;

  void ensure_grad() {
    if (grad.empty()) grad = Tensor(value.shape());
    grad_set = true;
  }
  void accumulate(const Tensor& g) {
    ensure_grad();
    grad.add_scaled(g, 1.0);
  }
  void zero_grad() {
    if (!grad.empty()) grad.zero();
    grad_set = false;
  }
};

// Creates a persistent leaf (parameter or constant) not tied to a tape.
Var make_leaf(Tensor value, bool requires_grad, std::string name = "");

// Define-by-run tape. Ops append nodes in construction order, which is a
// valid topological order, so backward() is a reverse sweep. A graph built
// with grad disabled records values only and cannot be backpropagated.
class Graph {
public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  // Tape-owned leaf for per-batch inputs.
  Var input(Tensor value, bool requires_grad = false, std::string name = "");

  // Registers an op node computed by the caller.
  Var emplace(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward,
              std::string name = "");

  // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse, accumulating
  // into every reachable node that requires grad (including leaves outside
  // the tape, e.g. parameters).
  void backward(const Var& root);

  std::size_t tape_size() const { return tape_.size(); }

private:
  bool grad_enabled_;
  std::vector<Var> tape_;
};

}  // namespace ppssl
