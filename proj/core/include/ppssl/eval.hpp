#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ppssl/ais.hpp"
#include "ppssl/backbone.hpp"
#include "ppssl/data.hpp"
#include "ppssl/tensor.hpp"

namespace ppssl::eval {

// Frozen embeddings with their class ids and the source ids they came
// from. Rows are unit vectors, so cosine similarity is a plain dot.
struct FeatureSet {
  Tensor features;  // M x D
  std::vector<int> labels;
  std::vector<std::string> ids;

  void validate() const;
};

struct RetrievalReport {
  double rank1 = 0.0;  // percent
  double rank5 = 0.0;  // percent
  double map = 0.0;    // percent, mean of per_query_ap x 100
  std::vector<double> per_query_ap;    // one value in [0, 1] per query
  std::vector<int> isolated_queries;   // queries whose class has no other member
};

struct ProbeConfig {
  double fraction = 1.0;  // per-class share of labeled training rows
  double lr = 0.1;
  int epochs = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ProbeReport {
  double top1 = 0.0;  // percent
  double top5 = 0.0;  // percent, top-min(5, C)
};

// v = normalize(avgpool(z' . f(x))) with the gate on, or the plain
// normalized pooled feature with it off. `image` is a single C x H x W
// tensor in eval preprocessing; the result has the encoder's channel
// count and unit norm.
Tensor inference_feature(const model::Encoder& encoder, const ais::AttentionHead& head,
                         const Tensor& image, bool gate);

// test_transform + inference_feature over one manifest split, rows in
// record order.
FeatureSet embed_dataset(const model::Encoder& encoder, const ais::AttentionHead& head,
                         const data::Manifest& manifest, data::Split split,
                         const data::AugPolicy& policy, bool gate);

// Matrix file plus `.ids` and `.labels` sidecars next to it. Import reads
// the sidecars by default; a nonempty labels_path points elsewhere.
void export_features(const FeatureSet& fs, const std::string& features_path);
FeatureSet import_features(const std::string& features_path, const std::string& labels_path = "");

// Every row queries the gallery of all other rows. Ranking is by cosine
// similarity, ties broken toward the lower gallery index; AP is
// non-interpolated over all relevant gallery items. Queries with no
// same-class partner score 0 and are flagged, not dropped.
RetrievalReport retrieval_eval(const FeatureSet& fs);

// Softmax regression on a stratified per-class subsample of the training
// rows, full-batch gradient descent at a constant rate, scored on the
// test rows.
ProbeReport linear_probe(const FeatureSet& train, const FeatureSet& test, const ProbeConfig& cfg);

}  // namespace ppssl::eval
