#include <doctest.h>

#include <cmath>
#include <deque>
#include <vector>

#include "ppssl/contrastive.hpp"
#include "ppssl/ops.hpp"
#include "test_support.hpp"

using namespace ppssl;
using namespace ppssl::contrastive;
using ppssl::testing::fd_check;
using ppssl::testing::rand_tensor;

namespace {

Tensor unit_rows(int rows, int dim, Rng& rng) {
  Tensor t({rows, dim});
  for (int r = 0; r < rows; ++r) {
    double n = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double v = rng.uniform(-1.0, 1.0);
      t[std::int64_t(r) * dim + j] = v;
      n += v * v;
    }
    n = std::sqrt(n);
    if (n < 1e-3) {
      t[std::int64_t(r) * dim] = 1.0;
      n = 1.0;
    }
    for (int j = 0; j < dim; ++j) t[std::int64_t(r) * dim + j] /= n;
  }
  return t;
}

Tensor basis_row(int dim, int axis) {
  Tensor t({1, dim});
  t[axis] = 1.0;
  return t;
}

// Straight-line reimplementation of the loss for cross-checking.
double reference_info_nce(const Tensor& q, const Tensor& k_pos, const Tensor& negs, double tau) {
  const int B = q.dim(0), D = q.dim(1);
  const int N = negs.empty() ? 0 : negs.dim(0);
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    std::vector<double> logits(1 + N);
    for (int j = 0; j < D; ++j) logits[0] += q[std::int64_t(b) * D + j] * k_pos[std::int64_t(b) * D + j];
    for (int n = 0; n < N; ++n)
      for (int j = 0; j < D; ++j)
        logits[1 + n] += q[std::int64_t(b) * D + j] * negs[std::int64_t(n) * D + j];
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v / 1.0);
    for (auto& v : logits) v /= tau;
    mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - mx);
    total += (mx + std::log(lse)) - logits[0];
  }
  return total / B;
}

}  // namespace

TEST_SUITE("contrastive") {

TEST_CASE("config validation") {
  ContrastiveConfig c;
  CHECK_NOTHROW(c.validate());
  c.temperature = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.temperature = 0.2;
  c.queue_capacity = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("queue is fifo with eviction") {
  EmbeddingQueue q(4, 3);
  CHECK(q.fill() == 0);
  CHECK(q.negatives().empty());

  // rows a..f are distinct unit basis-ish vectors
  Tensor abc({3, 3});
  abc[0] = 1.0;           // a = e0
  abc[3 + 1] = 1.0;       // b = e1
  abc[6 + 2] = 1.0;       // c = e2
  Tensor def({3, 3});
  def[0] = -1.0;          // d = -e0
  def[3 + 1] = -1.0;      // e = -e1
  def[6 + 2] = -1.0;      // f = -e2

  q.push(abc);
  CHECK(q.fill() == 3);
  q.push(def);
  CHECK(q.fill() == 4);

  // oldest first: a and b evicted, so c, d, e, f remain
  Tensor negs = q.negatives();
  REQUIRE(negs.shape() == std::vector<int>{4, 3});
  const double want[4][3] = {{0, 0, 1}, {-1, 0, 0}, {0, -1, 0}, {0, 0, -1}};
  for (int r = 0; r < 4; ++r)
    for (int j = 0; j < 3; ++j) CHECK(negs[std::int64_t(r) * 3 + j] == want[r][j]);
}

TEST_CASE("exact-capacity push preserves order") {
  Rng rng(1);
  Tensor rows = unit_rows(4, 5, rng);
  EmbeddingQueue q(4, 5);
  q.push(rows);
  Tensor negs = q.negatives();
  REQUIRE(negs.same_shape(rows));
  for (std::int64_t i = 0; i < rows.size(); ++i) CHECK(negs[i] == rows[i]);
}

TEST_CASE("queue rejects bad pushes") {
  EmbeddingQueue q(4, 3);
  CHECK_THROWS_AS(q.push(Tensor({2, 2})), StructuralError);      // wrong dim
  CHECK_THROWS_AS(q.push(Tensor::zeros({5, 3})), ConfigError);   // batch > capacity
  Tensor not_unit = Tensor::full({1, 3}, 0.5);
  CHECK_THROWS_AS(q.push(not_unit), ContractError);
  CHECK_THROWS_AS(EmbeddingQueue(0, 3), ConfigError);
  CHECK_THROWS_AS(EmbeddingQueue(4, 0), ConfigError);
}

TEST_CASE("queue matches a deque model under random batches") {
  Rng rng(7);
  const int K = 13, D = 4;
  EmbeddingQueue q(K, D);
  std::deque<std::vector<double>> model;
  for (int step = 0; step < 200; ++step) {
    const int B = 1 + int(rng.uniform_int(K));
    Tensor batch = unit_rows(B, D, rng);
    q.push(batch);
    for (int r = 0; r < B; ++r) {
      std::vector<double> row(D);
      for (int j = 0; j < D; ++j) row[j] = batch[std::int64_t(r) * D + j];
      model.push_back(std::move(row));
      if (int(model.size()) > K) model.pop_front();
    }
    REQUIRE(q.fill() == int(model.size()));
    Tensor negs = q.negatives();
    for (int r = 0; r < q.fill(); ++r)
      for (int j = 0; j < D; ++j) REQUIRE(negs[std::int64_t(r) * D + j] == model[r][j]);
  }
}

TEST_CASE("restore round-trips and validates") {
  Rng rng(3);
  EmbeddingQueue q(6, 4);
  q.push(unit_rows(5, 4, rng));
  Tensor buf = q.buffer();
  const int head = q.write_head(), fill = q.fill();
  Tensor negs_before = q.negatives();

  EmbeddingQueue r(6, 4);
  r.restore(buf, head, fill);
  Tensor negs_after = r.negatives();
  REQUIRE(negs_before.same_shape(negs_after));
  for (std::int64_t i = 0; i < negs_before.size(); ++i) CHECK(negs_before[i] == negs_after[i]);

  CHECK_THROWS_AS(r.restore(buf, 99, fill), StructuralError);
  CHECK_THROWS_AS(r.restore(buf, head, 99), StructuralError);
  CHECK_THROWS_AS(r.restore(Tensor({2, 2}), 0, 0), StructuralError);
}

TEST_CASE("info_nce hand oracles") {
  // One query aligned with its key against a single orthogonal negative:
  // logits [1, 0], loss log(1 + e^-1). Swapping alignment gives log(1 + e).
  EmbeddingQueue q(4, 2);
  q.push(basis_row(2, 1));

  Tensor query = basis_row(2, 0);
  CHECK(info_nce_value(query, basis_row(2, 0), q, 1.0) ==
        doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-9));

  EmbeddingQueue q2(4, 2);
  q2.push(basis_row(2, 0));
  CHECK(info_nce_value(query, basis_row(2, 1), q2, 1.0) ==
        doctest::Approx(std::log(1.0 + std::exp(1.0))).epsilon(1e-9));
}

TEST_CASE("empty queue reduces to the positive alone") {
  EmbeddingQueue q(8, 3);
  Rng rng(4);
  Tensor query = unit_rows(2, 3, rng);
  Tensor key = unit_rows(2, 3, rng);
  // single logit: softmax is 1 regardless of the value
  CHECK(info_nce_value(query, key, q, 0.2) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("info_nce agrees with a straight-line reimplementation") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int B = 1 + int(rng.uniform_int(5));
    const int D = 2 + int(rng.uniform_int(6));
    const int K = 1 + int(rng.uniform_int(7));
    const int fill = int(rng.uniform_int(K + 1));
    const double tau = rng.uniform(0.1, 2.0);
    EmbeddingQueue q(K, D);
    if (fill > 0) q.push(unit_rows(fill, D, rng));
    Tensor query = unit_rows(B, D, rng);
    Tensor key = unit_rows(B, D, rng);
    const double got = info_nce_value(query, key, q, tau);
    const double want = reference_info_nce(query, key, q.negatives(), tau);
    REQUIRE(got == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("loss is invariant to queue order") {
  Rng rng(11);
  const int D = 4;
  Tensor rows = unit_rows(6, D, rng);
  EmbeddingQueue a(6, D), b(6, D);
  a.push(rows);
  // push the same rows back-to-front
  Tensor rev({6, D});
  for (int r = 0; r < 6; ++r)
    for (int j = 0; j < D; ++j) rev[std::int64_t(r) * D + j] = rows[std::int64_t(5 - r) * D + j];
  b.push(rev);
  Tensor query = unit_rows(3, D, rng);
  Tensor key = unit_rows(3, D, rng);
  CHECK(info_nce_value(query, key, a, 0.2) ==
        doctest::Approx(info_nce_value(query, key, b, 0.2)).epsilon(1e-12));
}

TEST_CASE("loss falls as the pair aligns") {
  EmbeddingQueue q(4, 2);
  Tensor neg({1, 2});
  neg[0] = std::sqrt(0.5);
  neg[1] = -std::sqrt(0.5);
  q.push(neg);
  Tensor query = basis_row(2, 0);
  double prev = -1.0;
  bool first = true;
  // sweep the key from aligned to orthogonal; loss must rise
  for (double theta : {0.0, 0.4, 0.8, 1.2, 1.5707}) {
    Tensor key({1, 2});
    key[0] = std::cos(theta);
    key[1] = std::sin(theta);
    const double loss = info_nce_value(query, key, q, 0.2);
    if (!first) CHECK(loss > prev);
    first = false;
    prev = loss;
  }
}

TEST_CASE("gradient reaches the query through normalization") {
  Rng rng(13);
  const int B = 3, D = 4;
  EmbeddingQueue q(5, D);
  q.push(unit_rows(4, D, rng));
  Tensor key = unit_rows(B, D, rng);
  Var raw = make_leaf(rand_tensor({B, D}, rng), true, "q_raw");
  fd_check(
      [&](Graph& g) {
        Var qn = ops::l2_normalize_rows(g, raw);
        return info_nce(g, qn, key, q, 0.2);
      },
      {raw}, 2e-6);
}

TEST_CASE("info_nce rejects bad arguments") {
  Rng rng(15);
  EmbeddingQueue q(4, 3);
  Tensor query = unit_rows(2, 3, rng);
  Tensor key = unit_rows(2, 3, rng);
  Graph g;
  CHECK_THROWS_AS(info_nce(g, g.input(query), key, q, 0.0), ConfigError);
  CHECK_THROWS_AS(info_nce(g, g.input(query), unit_rows(3, 3, rng), q, 0.2), StructuralError);
  Tensor not_unit = Tensor::full({2, 3}, 0.3);
  CHECK_THROWS_AS(info_nce(g, g.input(not_unit), key, q, 0.2), ContractError);
  CHECK_THROWS_AS(info_nce(g, g.input(query), not_unit, q, 0.2), ContractError);
}

}  // TEST_SUITE
