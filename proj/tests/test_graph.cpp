#include <doctest.h>

#include "ppssl/graph.hpp"
#include "ppssl/ops.hpp"

using namespace ppssl;

TEST_SUITE("graph") {

TEST_CASE("backward through a chain") {
  auto x = make_leaf(Tensor::from_data({2}, {1.0, -2.0}), true);
  Graph g;
  Var y = ops::scale(g, ops::relu(g, x), 3.0);
  Var s = ops::add(g, y, y);
  // reduce to scalar by dotting with itself
  Var d = ops::rows_dot(g, s, s);  // treats dim0=2 as batch of width-1 rows
  Var loss = g.emplace(Tensor::scalar(d->value[0] + d->value[1]), {d}, [](Node& n) {
    n.inputs[0]->ensure_grad();
    n.inputs[0]->grad[0] += n.grad[0];
    n.inputs[0]->grad[1] += n.grad[0];
  });
  g.backward(loss);
  // loss = sum over relu(x)*3*2 squared = 36 x^2 for x>0
  CHECK(loss->value.item() == doctest::Approx(36.0));
  CHECK(x->grad[0] == doctest::Approx(72.0));
  CHECK(x->grad[1] == doctest::Approx(0.0));
}

TEST_CASE("gradient accumulates across reuse") {
  auto x = make_leaf(Tensor::from_data({1, 2}, {2.0, 3.0}), true);
  Graph g;
  Var d = ops::rows_dot(g, x, x);  // sum x_i^2
  g.backward(d);
  CHECK(x->grad[0] == doctest::Approx(4.0));
  CHECK(x->grad[1] == doctest::Approx(6.0));
}

TEST_CASE("leaf grads persist until zeroed") {
  auto x = make_leaf(Tensor::from_data({1, 1}, {5.0}), true);
  {
    Graph g;
    g.backward(ops::rows_dot(g, x, x));
  }
  CHECK(x->grad[0] == doctest::Approx(10.0));
  {
    Graph g;
    g.backward(ops::rows_dot(g, x, x));
  }
  CHECK(x->grad[0] == doctest::Approx(20.0));
  x->zero_grad();
  CHECK(x->grad[0] == 0.0);
  CHECK_FALSE(x->grad_set);
}

TEST_CASE("grad-disabled graph rejects backward") {
  auto x = make_leaf(Tensor::from_data({1, 1}, {1.0}), true);
  Graph g(false);
  Var y = ops::scale(g, x, 2.0);
  CHECK(y->value[0] == 2.0);
  CHECK_FALSE(y->requires_grad);
  CHECK_THROWS_AS(g.backward(y), StructuralError);
}

TEST_CASE("root without a differentiable path is a contract violation") {
  auto x = make_leaf(Tensor::from_data({1, 1}, {1.0}), false);
  Graph g;
  Var y = ops::scale(g, x, 2.0);
  CHECK_THROWS_AS(g.backward(y), ContractError);
}

TEST_CASE("non-differentiable subgraphs drop their closures") {
  auto x = make_leaf(Tensor::from_data({1, 1}, {1.0}), false);
  Graph g;
  Var y = ops::scale(g, x, 2.0);
  CHECK(y->inputs.empty());
  CHECK_FALSE(static_cast<bool>(y->backward));
}

TEST_CASE("input leaves live on the tape") {
  Graph g;
  Var a = g.input(Tensor::from_data({1, 1}, {4.0}), true);
  Var d = ops::rows_dot(g, a, a);
  g.backward(d);
  CHECK(a->grad[0] == doctest::Approx(8.0));
}

}  // TEST_SUITE
