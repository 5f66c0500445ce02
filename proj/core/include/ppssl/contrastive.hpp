#pragma once

#include "ppssl/graph.hpp"

namespace ppssl::contrastive {

struct ContrastiveConfig {
  double temperature = 0.2;
  int queue_capacity = 4096;

  void validate() const;
};

// FIFO ring of unit-norm key rows. Single-writer (the training loop).
class EmbeddingQueue {
public:
  EmbeddingQueue(int capacity, int dim);

  // Appends B unit rows, evicting the oldest once full. B > capacity is a
  // config error; a non-unit row is a contract violation.
  void push(const Tensor& keys);

  // Current negatives, oldest first: fill x dim.
  Tensor negatives() const;

  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  int fill() const { return fill_; }
  int write_head() const { return write_head_; }

  // Checkpoint access. restore validates ranges.
  const Tensor& buffer() const { return buffer_; }
  void restore(Tensor buffer, int write_head, int fill);

private:
  int capacity_, dim_;
  int write_head_ = 0;
  int fill_ = 0;
  Tensor buffer_;  // capacity x dim
};

// Mean over the batch of -log softmax at the positive logit. Per-sample
// logits: [q.k_pos, q.k_1, ..., q.k_fill] / tau, the positive included in
// the denominator. k_pos and the queue are constants: gradient reaches q
// only.
Var info_nce(Graph& g, const Var& q, const Tensor& k_pos, const EmbeddingQueue& queue, double tau);

// Convenience for eval-side oracles and tests: same loss on plain tensors.
double info_nce_value(const Tensor& q, const Tensor& k_pos, const EmbeddingQueue& queue,
                      double tau);

}  // namespace ppssl::contrastive
