#include <doctest.h>

#include <cmath>

#include "ppssl/backbone.hpp"
#include "ppssl/ops.hpp"
#include "test_support.hpp"

using namespace ppssl;
using namespace ppssl::model;
using ppssl::testing::rand_tensor;

namespace {
ModelConfig tiny_config(std::uint64_t seed = 11) {
  ModelConfig c;
  c.encoder.profile = "tinycnn";
  c.encoder.width = 8;
  c.proj_dim = 16;
  c.seed = seed;
  return c;
}
}  // namespace

TEST_SUITE("backbone") {

TEST_CASE("tinycnn shape contract") {
  Rng rng(1);
  Encoder enc(EncoderConfig{}, "student.encoder", 3, true);
  Graph g;
  Var x = g.input(rand_tensor({8, 3, 64, 64}, rng));
  EncoderOutput out = enc.forward(g, x);
  CHECK(out.feature_map->value.shape() == std::vector<int>{8, 128, 16, 16});
  CHECK(out.pooled->value.shape() == std::vector<int>{8, 128});
  CHECK(out.taps.size() == 3);
  CHECK(out.feature_map->value.all_finite());
}

TEST_CASE("bias-free tinycnn maps zero to zero") {
  EncoderConfig cfg;
  cfg.conv_bias = false;
  cfg.width = 4;
  Encoder enc(cfg, "e", 5, true);
  Graph g;
  Var x = g.input(Tensor::zeros({2, 3, 16, 16}));
  EncoderOutput out = enc.forward(g, x);
  for (std::int64_t i = 0; i < out.feature_map->value.size(); ++i)
    CHECK(out.feature_map->value[i] == 0.0);
}

TEST_CASE("pooled equals the spatial mean of the feature map") {
  Rng rng(2);
  EncoderConfig cfg;
  cfg.width = 4;
  Encoder enc(cfg, "e", 6, true);
  Graph g;
  Var x = g.input(rand_tensor({2, 3, 16, 16}, rng));
  EncoderOutput out = enc.forward(g, x);
  const auto& fm = out.feature_map->value;
  const int C = fm.dim(1), H = fm.dim(2), W = fm.dim(3);
  for (int b = 0; b < 2; ++b)
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int i = 0; i < H * W; ++i) s += fm[(std::int64_t(b) * C + c) * H * W + i];
      CHECK(out.pooled->value[std::int64_t(b) * C + c] ==
            doctest::Approx(s / (H * W)).epsilon(1e-6));
    }
}

TEST_CASE("same seed and prefix reproduce the init") {
  Encoder a(EncoderConfig{}, "e", 42, true);
  Encoder b(EncoderConfig{}, "e", 42, true);
  REQUIRE(a.params().size() == b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const Tensor& ta = a.params()[i].var->value;
    const Tensor& tb = b.params()[i].var->value;
    REQUIRE(ta.same_shape(tb));
    for (std::int64_t j = 0; j < ta.size(); ++j) CHECK(ta[j] == tb[j]);
  }
}

TEST_CASE("projection head emits unit rows") {
  Rng rng(3);
  ProjectionHead head(HeadConfig{32, 32, 16}, "h", 7, true);
  Graph g;
  Var pooled = g.input(rand_tensor({4, 32}, rng));
  Var q = head.forward(g, pooled);
  REQUIRE(q->value.shape() == std::vector<int>{4, 16});
  for (int b = 0; b < 4; ++b) {
    double n = 0.0;
    for (int j = 0; j < 16; ++j) {
      const double v = q->value[std::int64_t(b) * 16 + j];
      n += v * v;
    }
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("projection head survives an all-zero batch") {
  ProjectionHead head(HeadConfig{8, 8, 4}, "h", 9, true);
  Graph g;
  Var q = head.forward(g, g.input(Tensor::zeros({2, 8})));
  CHECK(q->value.all_finite());
  for (std::int64_t i = 0; i < q->value.size(); ++i) CHECK(q->value[i] == 0.0);
}

TEST_CASE("input scaling leaves the head output unit-norm") {
  Rng rng(4);
  ProjectionHead head(HeadConfig{8, 8, 4}, "h", 10, true);
  Tensor base = rand_tensor({3, 8}, rng);
  Tensor twice = base;
  for (std::int64_t i = 0; i < twice.size(); ++i) twice[i] *= 2.0;
  Graph g;
  Var qa = head.forward(g, g.input(base));
  Var qb = head.forward(g, g.input(twice));
  bool differ = false;
  for (std::int64_t i = 0; i < qa->value.size(); ++i) {
    double n = 0.0;
    (void)n;
    if (std::abs(qa->value[i] - qb->value[i]) > 1e-12) differ = true;
  }
  CHECK(differ);
  for (int b = 0; b < 3; ++b) {
    double n = 0.0;
    for (int j = 0; j < 4; ++j) n += qb->value[std::int64_t(b) * 4 + j] * qb->value[std::int64_t(b) * 4 + j];
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("init_momentum copies and stays a fixed point of ema") {
  ModelState st(tiny_config());
  init_momentum(st);
  auto sp = st.student_params();
  auto mp = st.momentum_params();
  for (std::size_t i = 0; i < sp.size(); ++i)
    for (std::int64_t j = 0; j < sp[i].var->value.size(); ++j)
      CHECK(sp[i].var->value[j] == mp[i].var->value[j]);
  ema_update(st, 0.5);
  for (std::size_t i = 0; i < sp.size(); ++i)
    for (std::int64_t j = 0; j < sp[i].var->value.size(); ++j)
      CHECK(sp[i].var->value[j] == mp[i].var->value[j]);
}

TEST_CASE("ema affine rule is exact") {
  ModelState st(tiny_config());
  init_momentum(st);
  auto sp = st.student_params();
  auto mp = st.momentum_params();
  // move the student away, remember the momentum side
  Rng rng(5);
  for (auto& p : sp)
    for (std::int64_t j = 0; j < p.var->value.size(); ++j) p.var->value[j] += rng.uniform(-1, 1);
  std::vector<Tensor> before;
  for (auto& p : mp) before.push_back(p.var->value);

  const double m = 0.999;
  ema_update(st, m);
  for (std::size_t i = 0; i < mp.size(); ++i)
    for (std::int64_t j = 0; j < mp[i].var->value.size(); ++j) {
      const double want = m * before[i][j] + (1.0 - m) * sp[i].var->value[j];
      CHECK(std::abs(mp[i].var->value[j] - want) <= 1e-12);
    }
}

TEST_CASE("ema edge momenta") {
  ModelState st(tiny_config());
  init_momentum(st);
  auto sp = st.student_params();
  auto mp = st.momentum_params();
  sp[0].var->value[0] = 123.0;
  mp[0].var->value[0] = 1.0;

  ema_update(st, 1.0);  // fixed point
  CHECK(mp[0].var->value[0] == 1.0);
  ema_update(st, 0.0);  // copy
  CHECK(mp[0].var->value[0] == 123.0);
}

TEST_CASE("ema scalar oracle") {
  ModelState st(tiny_config());
  auto sp = st.student_params();
  auto mp = st.momentum_params();
  sp[0].var->value[0] = 0.0;
  mp[0].var->value[0] = 1.0;
  ema_update(st, 0.999);
  CHECK(mp[0].var->value[0] == doctest::Approx(0.999).epsilon(1e-12));
}

TEST_CASE("ema rejects incongruent towers") {
  ModelState st(tiny_config());
  st.momentum_params()[0].var->value = Tensor({1});
  CHECK_THROWS_AS(ema_update(st, 0.999), StructuralError);
  CHECK_THROWS_AS(init_momentum(st), StructuralError);
}

TEST_CASE("momentum tower can never require grad") {
  ModelState st(tiny_config());
  for (const auto& p : st.momentum_params()) CHECK_FALSE(p.var->requires_grad);
  for (const auto& p : st.student_params()) CHECK(p.var->requires_grad);
}

TEST_CASE("invalid encoder profile rejected") {
  EncoderConfig cfg;
  cfg.profile = "vgg";
  CHECK_THROWS_AS(Encoder(cfg, "e", 1, true), ConfigError);
}

TEST_CASE("resnet50 smoke") {
  EncoderConfig cfg;
  cfg.profile = "resnet50";
  Encoder enc(cfg, "e", 1, true);
  CHECK(enc.out_channels() == 2048);
  CHECK(enc.num_stages() == 5);
  Rng rng(6);
  Graph g(false);
  Var x = g.input(rand_tensor({1, 3, 64, 64}, rng, 0.0, 1.0));
  EncoderOutput out = enc.forward(g, x);
  CHECK(out.feature_map->value.shape() == std::vector<int>{1, 2048, 2, 2});
  CHECK(out.pooled->value.shape() == std::vector<int>{1, 2048});
  CHECK(out.taps.size() == 5);
  CHECK(out.feature_map->value.all_finite());
}

}  // TEST_SUITE
