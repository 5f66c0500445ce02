#pragma once

#include "ppssl/graph.hpp"

namespace ppssl::ops {

// Elementwise / structural ------------------------------------------------

Var add(Graph& g, const Var& a, const Var& b);  // same shape
Var scale(Graph& g, const Var& a, double c);
Var relu(Graph& g, const Var& x);

// Dense layers ------------------------------------------------------------

// y[B,out] = x[B,in] * W[out,in]^T (+ bias[out]); bias may be null.
Var linear(Graph& g, const Var& x, const Var& weight, const Var& bias);

// NCHW convolution, zero padding. bias may be null.
Var conv2d(Graph& g, const Var& x, const Var& weight, const Var& bias, int stride, int pad);

Var maxpool2d(Graph& g, const Var& x, int kernel, int stride, int pad);

// [B,C,H,W] -> [B,C] spatial mean.
Var global_avg_pool(Graph& g, const Var& x);

// Batch statistics only; the contrastive head never runs in a frozen-stats
// eval mode (the inference feature path bypasses it entirely).
Var batchnorm1d(Graph& g, const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var batchnorm2d(Graph& g, const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// Rows of x flattened per leading dim; y = x / (||x||_2 + eps).
Var l2_normalize_rows(Graph& g, const Var& x, double eps = 1e-12);

// [B,D],[B,D] -> [B,1] per-row dot product.
Var rows_dot(Graph& g, const Var& a, const Var& b);

Var concat_cols(Graph& g, const Var& a, const Var& b);

// Attention-map pieces ----------------------------------------------------

// Per-sample over all non-batch entries: (x - min) / (1e-7 + max).
// Ties on the extrema route the subgradient to the first occurrence.
Var minmax_norm(Graph& g, const Var& x);

// [B,C,H,W] -> [B,1,H,W] per-position maximum over channels.
Var channel_max(Graph& g, const Var& x);

// [B,C,H,W] gated by [B,1,H,W], map broadcast across channels.
Var hadamard_gate(Graph& g, const Var& x, const Var& map);

// Losses ------------------------------------------------------------------

// Mean over rows of -log softmax(logits)[0]; the positive logit sits in
// column 0.
Var softmax_xent_at0(Graph& g, const Var& logits);

// Mean over rows of tau^2 * KL(softmax(t/tau) || softmax(s/tau)).
// Teacher logits are a constant: no gradient is ever produced for them.
Var distill_kl(Graph& g, const Tensor& teacher_logits, const Var& student_logits, double tau);

// Mean over rows of KL(p || q) with q = (w + eps) / sum(w + eps); p rows
// are fixed probability maps, w is a nonnegative map (flattened per row).
Var kl_to_smoothed(Graph& g, const Tensor& p_rows, const Var& w, double eps);

// The min-max normalization constant from the attention definition.
inline constexpr double kAttnNormEps = 1e-7;

}  // namespace ppssl::ops
