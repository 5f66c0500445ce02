#include "ppssl/contrastive.hpp"

#include <cmath>

#include "ppssl/ops.hpp"

namespace ppssl::contrastive {

void ContrastiveConfig::validate() const {
  std::vector<std::string> issues;
  if (!(temperature > 0.0)) issues.push_back("temperature must be positive");
  if (queue_capacity < 1) issues.push_back("queue_capacity must be at least 1");
  if (!issues.empty()) {
    std::string msg = "invalid contrastive config:";
    for (const auto& i : issues) msg += "\n  - " + i;
    throw ConfigError(msg, issues);
  }
}

namespace {
void check_unit_rows(const Tensor& rows, const char* where) {
  if (rows.ndim() != 2) throw StructuralError(std::string(where) + ": expected 2-d rows");
  const int n = rows.dim(0), d = rows.dim(1);
  for (int r = 0; r < n; ++r) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      const double v = rows[std::int64_t(r) * d + j];
      s += v * v;
    }
    if (std::abs(std::sqrt(s) - 1.0) > 1e-5)
      throw ContractError(std::string(where) + ": row " + std::to_string(r) +
                          " is not unit-norm (|x| = " + std::to_string(std::sqrt(s)) + ")");
  }
}
}  // namespace

EmbeddingQueue::EmbeddingQueue(int capacity, int dim) : capacity_(capacity), dim_(dim) {
  if (capacity < 1) throw ConfigError("queue capacity must be at least 1");
  if (dim < 1) throw ConfigError("queue dim must be at least 1");
  buffer_ = Tensor({capacity, dim});
}

void EmbeddingQueue::push(const Tensor& keys) {
  if (keys.ndim() != 2 || keys.dim(1) != dim_)
    throw StructuralError("queue push: keys " + keys.shape_str() + " vs dim " +
                          std::to_string(dim_));
  const int b = keys.dim(0);
  if (b > capacity_)
    throw ConfigError("queue push: batch " + std::to_string(b) + " exceeds capacity " +
                      std::to_string(capacity_));
  check_unit_rows(keys, "queue push");
  for (int r = 0; r < b; ++r) {
    double* dst = buffer_.data() + std::int64_t(write_head_) * dim_;
    const double* src = keys.data() + std::int64_t(r) * dim_;
    std::copy(src, src + dim_, dst);
    write_head_ = (write_head_ + 1) % capacity_;
  }
  fill_ = std::min(fill_ + b, capacity_);
}

Tensor EmbeddingQueue::negatives() const {
  Tensor out({fill_, dim_});
  for (int i = 0; i < fill_; ++i) {
    const int row = ((write_head_ - fill_ + i) % capacity_ + capacity_) % capacity_;
    const double* src = buffer_.data() + std::int64_t(row) * dim_;
    std::copy(src, src + dim_, out.data() + std::int64_t(i) * dim_);
  }
  return out;
}

void EmbeddingQueue::restore(Tensor buffer, int write_head, int fill) {
  if (buffer.ndim() != 2 || buffer.dim(0) != capacity_ || buffer.dim(1) != dim_)
    throw StructuralError("queue restore: buffer " + buffer.shape_str() + " vs " +
                          std::to_string(capacity_) + "x" + std::to_string(dim_));
  if (write_head < 0 || write_head >= capacity_ || fill < 0 || fill > capacity_)
    throw StructuralError("queue restore: head/fill out of range");
  buffer_ = std::move(buffer);
  write_head_ = write_head;
  fill_ = fill;
}

Var info_nce(Graph& g, const Var& q, const Tensor& k_pos, const EmbeddingQueue& queue, double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive, got " + std::to_string(tau));
  check_same_shape(q->value, k_pos, "info_nce");
  if (q->value.ndim() != 2 || q->value.dim(1) != queue.dim())
    throw StructuralError("info_nce: q " + q->value.shape_str() + " vs queue dim " +
                          std::to_string(queue.dim()));
  check_unit_rows(q->value, "info_nce q");
  check_unit_rows(k_pos, "info_nce k_pos");

  Var kc = make_leaf(k_pos, false, "k_pos");
  Var l_pos = ops::rows_dot(g, q, kc);
  Var logits = l_pos;
  if (queue.fill() > 0) {
    Var negs = make_leaf(queue.negatives(), false, "queue_negatives");
    Var l_neg = ops::linear(g, q, negs, nullptr);
    logits = ops::concat_cols(g, l_pos, l_neg);
  }
  return ops::softmax_xent_at0(g, ops::scale(g, logits, 1.0 / tau));
}

double info_nce_value(const Tensor& q, const Tensor& k_pos, const EmbeddingQueue& queue,
                      double tau) {
  Graph g(false);
  return info_nce(g, g.input(q), k_pos, queue, tau)->value.item();
}

}  // namespace ppssl::contrastive
