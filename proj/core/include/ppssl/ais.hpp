#pragma once

#include <string>
#include <vector>

#include "ppssl/backbone.hpp"
#include "ppssl/graph.hpp"
#include "ppssl/teacher.hpp"

namespace ppssl::ais {

// Frozen description matrix shared by both towers for the whole run.
struct TextCorpus {
  std::vector<std::string> descriptions;
  Tensor embeddings;  // N x d, unit rows, index-aligned with descriptions

  int size() const { return embeddings.empty() ? 0 : embeddings.dim(0); }
  int dim() const { return embeddings.empty() ? 0 : embeddings.dim(1); }
};

// One description per line, `#` starts a comment, blank lines skipped.
std::vector<std::string> load_descriptions(const std::string& path);

TextCorpus build_text_corpus(const std::vector<std::string>& descriptions,
                             const teacher::TeacherProvider& provider);

// 1x1 attention kernel plus the linear map into the teacher's space.
class AttentionHead {
public:
  AttentionHead(int in_channels, int attn_channels, int embed_dim, const std::string& prefix,
                std::uint64_t seed, bool trainable);

  int in_channels() const { return in_channels_; }
  int attn_channels() const { return attn_channels_; }
  int embed_dim() const { return embed_dim_; }
  std::vector<model::Param>& params() { return params_; }
  const std::vector<model::Param>& params() const { return params_; }

  const Var& psi_weight() const { return psi_w_; }
  const Var& psi_bias() const { return psi_b_; }
  const Var& proj_weight() const { return proj_w_; }
  const Var& proj_bias() const { return proj_b_; }

private:
  int in_channels_, attn_channels_, embed_dim_;
  std::vector<model::Param> params_;
  Var psi_w_, psi_b_, proj_w_, proj_b_;
};

// relu -> per-sample min-max norm -> channel max. Shared shape of the
// attention pipeline; the image-side head reuses it on raw pixels.
Var attention_map(Graph& g, const Var& input, const Var& psi_weight, const Var& psi_bias);

// B x 1 x H_f x W_f map in [0, 1).
Var spatial_attention(Graph& g, const Var& feature_map, const AttentionHead& head);

// Gate, pool, project, normalize: B x d unit rows.
Var student_semantic_embedding(Graph& g, const Var& feature_map, const Var& zprime,
                               const AttentionHead& head);

// l = u T^T. The corpus is a constant: gradient reaches u only.
Var semantic_logits(Graph& g, const Var& u, const Tensor& corpus_embeddings);
Tensor semantic_logits_value(const Tensor& u_rows, const Tensor& corpus_embeddings);

// Mean over the batch of tau_d^2 * KL(softmax(l_t/tau_d) || softmax(l_s/tau_d)).
Var ais_loss(Graph& g, const Tensor& teacher_logits, const Var& student_logits, double tau_d);
double ais_loss_value(const Tensor& teacher_logits, const Tensor& student_logits, double tau_d);

}  // namespace ppssl::ais
