#include "ppssl/ais.hpp"

#include <cmath>
#include <fstream>

#include "ppssl/ops.hpp"

namespace ppssl::ais {

std::vector<std::string> load_descriptions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open descriptions file: " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t");
    out.push_back(line.substr(first, last - first + 1));
  }
  if (out.empty()) throw ParseError(path + ": no descriptions found");
  return out;
}

TextCorpus build_text_corpus(const std::vector<std::string>& descriptions,
                             const teacher::TeacherProvider& provider) {
  if (descriptions.size() < 2)
    throw ConfigError("text corpus needs at least 2 descriptions, got " +
                      std::to_string(descriptions.size()));
  const int n = static_cast<int>(descriptions.size());
  const int d = provider.dim();
  TextCorpus corpus;
  corpus.descriptions = descriptions;
  corpus.embeddings = Tensor({n, d});
  for (int i = 0; i < n; ++i) {
    Tensor v = provider.text_embedding(descriptions[i]);
    if (v.size() != d)
      throw StructuralError("provider returned dim " + std::to_string(v.size()) +
                            " for description " + std::to_string(i));
    double norm = 0.0;
    for (int j = 0; j < d; ++j) norm += v[j] * v[j];
    norm = std::sqrt(norm);
    if (std::abs(norm - 1.0) > 1e-5)
      throw ContractError("text embedding " + std::to_string(i) + " is not unit-norm");
    for (int j = 0; j < d; ++j) corpus.embeddings[std::int64_t(i) * d + j] = v[j] / norm;
  }
  return corpus;
}

AttentionHead::AttentionHead(int in_channels, int attn_channels, int embed_dim,
                             const std::string& prefix, std::uint64_t seed, bool trainable)
    : in_channels_(in_channels), attn_channels_(attn_channels), embed_dim_(embed_dim) {
  std::vector<std::string> issues;
  if (in_channels < 1) issues.push_back("attention head input channels must be >= 1");
  if (attn_channels < 1) issues.push_back("attention head channels must be >= 1");
  if (embed_dim < 1) issues.push_back("attention head embed dim must be >= 1");
  if (!issues.empty()) throw ConfigError("invalid attention head config", issues);

  auto add = [&](const std::string& name, Tensor value) {
    Var v = make_leaf(std::move(value), trainable, name);
    params_.push_back({name, v});
    return v;
  };
  psi_w_ = add(prefix + ".psi.weight",
               model::he_normal({attn_channels, in_channels, 1, 1}, in_channels, seed,
                                prefix + ".psi.weight"));
  psi_b_ = add(prefix + ".psi.bias", Tensor::zeros({attn_channels}));
  proj_w_ = add(prefix + ".proj.weight",
                model::he_normal({embed_dim, in_channels}, in_channels, seed, prefix + ".proj.weight"));
  proj_b_ = add(prefix + ".proj.bias", Tensor::zeros({embed_dim}));
}

Var attention_map(Graph& g, const Var& input, const Var& psi_weight, const Var& psi_bias) {
  Var a = ops::relu(g, ops::conv2d(g, input, psi_weight, psi_bias, 1, 0));
  return ops::channel_max(g, ops::minmax_norm(g, a));
}

Var spatial_attention(Graph& g, const Var& feature_map, const AttentionHead& head) {
  if (feature_map->value.ndim() != 4 || feature_map->value.dim(1) != head.in_channels())
    throw StructuralError("spatial_attention: feature map " + feature_map->value.shape_str() +
                          " vs head input channels " + std::to_string(head.in_channels()));
  if (!feature_map->value.all_finite())
    throw ContractError("spatial_attention: non-finite feature map");
  return attention_map(g, feature_map, head.psi_weight(), head.psi_bias());
}

Var student_semantic_embedding(Graph& g, const Var& feature_map, const Var& zprime,
                               const AttentionHead& head) {
  Var gated = ops::hadamard_gate(g, feature_map, zprime);
  Var pooled = ops::global_avg_pool(g, gated);
  Var proj = ops::linear(g, pooled, head.proj_weight(), head.proj_bias());
  return ops::l2_normalize_rows(g, proj);
}

Var semantic_logits(Graph& g, const Var& u, const Tensor& corpus_embeddings) {
  if (corpus_embeddings.ndim() != 2 || u->value.ndim() != 2 ||
      u->value.dim(1) != corpus_embeddings.dim(1))
    throw StructuralError("semantic_logits: embeddings " + u->value.shape_str() + " vs corpus " +
                          corpus_embeddings.shape_str());
  Var t = make_leaf(corpus_embeddings, false, "corpus");
  return ops::linear(g, u, t, nullptr);
}

Tensor semantic_logits_value(const Tensor& u_rows, const Tensor& corpus_embeddings) {
  Graph g(false);
  return semantic_logits(g, g.input(u_rows), corpus_embeddings)->value;
}

Var ais_loss(Graph& g, const Tensor& teacher_logits, const Var& student_logits, double tau_d) {
  return ops::distill_kl(g, teacher_logits, student_logits, tau_d);
}

double ais_loss_value(const Tensor& teacher_logits, const Tensor& student_logits, double tau_d) {
  Graph g(false);
  return ais_loss(g, teacher_logits, g.input(student_logits), tau_d)->value.item();
}

}  // namespace ppssl::ais
