#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "ppssl/graph.hpp"
#include "ppssl/optim.hpp"
#include "test_support.hpp"

using namespace ppssl;
using namespace ppssl::optim;
using ppssl::testing::rand_tensor;

namespace {

model::Param leaf_param(const std::string& name, Tensor value, bool trainable = true) {
  return {name, make_leaf(std::move(value), trainable, name)};
}

void set_grad(const model::Param& p, const Tensor& g) {
  p.var->zero_grad();
  p.var->accumulate(g);
}

}  // namespace

TEST_SUITE("optim") {

TEST_CASE("single scalar heavy-ball trajectory matches hand computation") {
  auto p = leaf_param("w", Tensor::scalar(1.0));
  Sgd opt({p}, SgdConfig{0.1, 0.9, 0.0});

  set_grad(p, Tensor::scalar(1.0));
  opt.step(0.1);
  CHECK(p.var->value.item() == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(opt.buffers().at("w").item() == doctest::Approx(1.0).epsilon(1e-15));

  set_grad(p, Tensor::scalar(1.0));
  opt.step(0.1);
  // buf = 0.9*1 + 1 = 1.9; w = 0.9 - 0.1*1.9 = 0.71
  CHECK(p.var->value.item() == doctest::Approx(0.71).epsilon(1e-15));
  CHECK(opt.buffers().at("w").item() == doctest::Approx(1.9).epsilon(1e-15));
}

TEST_CASE("weight decay shrinks parameters whose grad was never accumulated") {
  auto p = leaf_param("w", Tensor::scalar(1.0));
  Sgd opt({p}, SgdConfig{1.0, 0.0, 0.1});
  REQUIRE(!p.var->grad_set);
  opt.step(1.0);
  CHECK(p.var->value.item() == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("vector update agrees exactly with a straight-line reference") {
  Rng rng(41);
  const double m = 0.85, wd = 5e-3;
  auto a = leaf_param("a", rand_tensor({3, 4}, rng));
  auto b = leaf_param("b", rand_tensor({7}, rng));
  std::vector<double> ra(a.var->value.raw().begin(), a.var->value.raw().end());
  std::vector<double> rb(b.var->value.raw().begin(), b.var->value.raw().end());
  std::vector<double> bufa(ra.size(), 0.0), bufb(rb.size(), 0.0);

  Sgd opt({a, b}, SgdConfig{0.05, m, wd});
  for (int it = 0; it < 50; ++it) {
    Tensor ga = rand_tensor({3, 4}, rng);
    Tensor gb = rand_tensor({7}, rng);
    set_grad(a, ga);
    set_grad(b, gb);
    const double lr = 0.05 * (1.0 + 0.1 * it);
    opt.step(lr);
    auto ref = [&](std::vector<double>& v, std::vector<double>& buf, const Tensor& g) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double gi = g[std::int64_t(i)] + wd * v[i];
        buf[i] = m * buf[i] + gi;
        v[i] -= lr * buf[i];
      }
    };
    ref(ra, bufa, ga);
    ref(rb, bufb, gb);
    for (std::size_t i = 0; i < ra.size(); ++i) CHECK(a.var->value[std::int64_t(i)] == ra[i]);
    for (std::size_t i = 0; i < rb.size(); ++i) CHECK(b.var->value[std::int64_t(i)] == rb[i]);
  }
}

TEST_CASE("zero_grad clears accumulation on every managed parameter") {
  auto a = leaf_param("a", Tensor::scalar(1.0));
  auto b = leaf_param("b", Tensor::full({2}, 2.0));
  Sgd opt({a, b}, SgdConfig{});
  set_grad(a, Tensor::scalar(3.0));
  set_grad(b, Tensor::full({2}, 4.0));
  opt.zero_grad();
  CHECK(!a.var->grad_set);
  CHECK(!b.var->grad_set);
  // with everything cleared, only weight decay moves the values
  Tensor before_a = a.var->value;
  opt.step(1.0);
  CHECK(a.var->value.item() ==
        doctest::Approx(before_a.item() * (1.0 - opt.config().weight_decay)).epsilon(1e-12));
}

TEST_CASE("restored momentum buffer drives the next step") {
  auto p = leaf_param("w", Tensor::scalar(0.0));
  Sgd opt({p}, SgdConfig{1.0, 0.5, 0.0});
  opt.buffers().at("w")[0] = 1.0;  // as checkpoint restore would do
  opt.step(1.0);
  // buf = 0.5*1 + 0 = 0.5; w = 0 - 0.5
  CHECK(p.var->value.item() == doctest::Approx(-0.5).epsilon(1e-15));
}

TEST_CASE("cosine schedule endpoints, midpoint, and monotonicity") {
  const double base = 0.03;
  CHECK(cosine_lr(base, 0, 100) == doctest::Approx(base).epsilon(1e-15));
  CHECK(cosine_lr(base, 50, 100) == doctest::Approx(base * 0.5).epsilon(1e-12));
  CHECK(cosine_lr(base, 100, 100) == doctest::Approx(0.0).epsilon(1e-15));
  double prev = cosine_lr(base, 0, 37);
  for (long long s = 1; s <= 37; ++s) {
    const double cur = cosine_lr(base, s, 37);
    CHECK(cur <= prev + 1e-15);
    prev = cur;
  }
  CHECK(scheduled_lr("constant", base, 90, 100) == base);
  CHECK(scheduled_lr("cosine", base, 25, 100) ==
        doctest::Approx(base * 0.5 * (1.0 + std::cos(std::numbers::pi * 0.25))).epsilon(1e-13));
}

TEST_CASE("schedule and configuration misuse is rejected") {
  CHECK_THROWS_AS(cosine_lr(0.03, 0, 0), ConfigError);
  CHECK_THROWS_AS(cosine_lr(0.03, -1, 10), StructuralError);
  CHECK_THROWS_AS(cosine_lr(0.03, 11, 10), StructuralError);
  CHECK_THROWS_AS(scheduled_lr("linear", 0.03, 0, 10), ConfigError);

  auto p = leaf_param("w", Tensor::scalar(1.0));
  CHECK_THROWS_AS(Sgd({p}, SgdConfig{-0.1, 0.9, 0.0}), ConfigError);
  CHECK_THROWS_AS(Sgd({p}, SgdConfig{0.1, 1.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(Sgd({p}, SgdConfig{0.1, 0.9, -1.0}), ConfigError);
  try {
    Sgd(std::vector<model::Param>{p}, SgdConfig{-0.1, 1.5, -1.0});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.issues().size() == 3);
  }

  Sgd ok({p}, SgdConfig{});
  CHECK_THROWS_AS(ok.step(-0.01), ConfigError);

  auto frozen = leaf_param("frozen", Tensor::scalar(1.0), false);
  CHECK_THROWS_AS(Sgd({frozen}, SgdConfig{}), ConfigError);

  auto dup = leaf_param("w", Tensor::scalar(2.0));
  CHECK_THROWS_AS(Sgd({p, dup}, SgdConfig{}), StructuralError);
}

TEST_CASE("buffers are keyed by parameter name with matching shapes") {
  Rng rng(5);
  auto a = leaf_param("enc.w", rand_tensor({2, 3}, rng));
  auto b = leaf_param("enc.b", rand_tensor({3}, rng));
  Sgd opt({a, b}, SgdConfig{});
  REQUIRE(opt.buffers().size() == 2);
  CHECK(opt.buffers().at("enc.w").shape() == std::vector<int>{2, 3});
  CHECK(opt.buffers().at("enc.b").shape() == std::vector<int>{3});
  for (const auto& [name, buf] : opt.buffers())
    for (std::int64_t i = 0; i < buf.size(); ++i) CHECK(buf[i] == 0.0);
}

}  // TEST_SUITE
