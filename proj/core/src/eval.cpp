#include "ppssl/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ppssl/ops.hpp"
#include "ppssl/ppse.hpp"
#include "ppssl/rng.hpp"

namespace ppssl::eval {
namespace {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<const MatrixRM>;

MapRM as_matrix(const Tensor& t) { return MapRM(t.raw().data(), t.dim(0), t.dim(1)); }

}  // namespace

void FeatureSet::validate() const {
  if (features.ndim() != 2) throw StructuralError("feature matrix must be M x D");
  const std::size_t m = std::size_t(features.dim(0));
  if (labels.size() != m || ids.size() != m)
    throw StructuralError("labels and ids must align with the feature rows");
  for (int label : labels)
    if (label < 0) throw StructuralError("negative class label in feature set");
  const int d = features.dim(1);
  for (int r = 0; r < features.dim(0); ++r) {
    double sq = 0.0;
    for (int c = 0; c < d; ++c) {
      const double v = features[std::int64_t(r) * d + c];
      if (!std::isfinite(v)) throw StructuralError("non-finite feature value");
      sq += v * v;
    }
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-5)
      throw StructuralError("feature row " + std::to_string(r) + " is not unit-norm");
  }
}

void ProbeConfig::validate() const {
  std::vector<std::string> issues;
  if (!std::isfinite(fraction) || fraction <= 0.0 || fraction > 1.0)
    issues.push_back("fraction must be in (0, 1]");
  if (!std::isfinite(lr) || lr <= 0.0) issues.push_back("lr must be positive");
  if (epochs < 1) issues.push_back("epochs must be at least 1");
  if (!issues.empty()) throw ConfigError("invalid probe configuration", issues);
}

Tensor inference_feature(const model::Encoder& encoder, const ais::AttentionHead& head,
                         const Tensor& image, bool gate) {
  if (image.ndim() != 3) throw StructuralError("inference expects one C x H x W image");
  Tensor batch({1, image.dim(0), image.dim(1), image.dim(2)});
  std::copy(image.raw().begin(), image.raw().end(), batch.raw().begin());

  Graph g(false);
  Var xv = g.input(batch);
  model::EncoderOutput out = encoder.forward(g, xv);
  Var pooled = out.pooled;
  if (gate) {
    Var zprime = ais::spatial_attention(g, out.feature_map, head);
    pooled = ops::global_avg_pool(g, ops::hadamard_gate(g, out.feature_map, zprime));
  }
  const Tensor row = ops::l2_normalize_rows(g, pooled)->value;

  Tensor v({row.dim(1)});
  std::copy(row.raw().begin(), row.raw().end(), v.raw().begin());
  return v;
}

FeatureSet embed_dataset(const model::Encoder& encoder, const ais::AttentionHead& head,
                         const data::Manifest& manifest, data::Split split,
                         const data::AugPolicy& policy, bool gate) {
  const auto records = manifest.split_records(split);
  if (records.empty()) throw ConfigError("the requested split has no records to embed");

  FeatureSet fs;
  fs.labels.reserve(records.size());
  fs.ids.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Tensor image = data::test_transform(records[i], policy);
    const Tensor v = inference_feature(encoder, head, image, gate);
    if (i == 0) fs.features = Tensor({int(records.size()), v.dim(0)});
    std::copy(v.raw().begin(), v.raw().end(),
              fs.features.raw().begin() + std::int64_t(i) * v.size());
    fs.labels.push_back(records[i].label);
    fs.ids.push_back(records[i].id);
  }
  fs.validate();
  return fs;
}

void export_features(const FeatureSet& fs, const std::string& features_path) {
  fs.validate();
  ppse::write_table(features_path, ppse::sidecar_path(features_path, "ids"),
                    {fs.features, fs.ids});
  ppse::write_labels(ppse::sidecar_path(features_path, "labels"), fs.ids, fs.labels);
}

FeatureSet import_features(const std::string& features_path, const std::string& labels_path) {
  const ppse::Table table =
      ppse::read_table(features_path, ppse::sidecar_path(features_path, "ids"));
  const auto labeled = ppse::read_labels(
      labels_path.empty() ? ppse::sidecar_path(features_path, "labels") : labels_path);
  std::map<std::string, int> by_id;
  for (const auto& [id, label] : labeled) by_id.emplace(id, label);

  FeatureSet fs;
  fs.features = table.rows;
  fs.ids = table.ids;
  fs.labels.reserve(table.ids.size());
  for (const std::string& id : table.ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end())
      throw ParseError("label sidecar is missing an entry for '" + id + "'");
    fs.labels.push_back(it->second);
  }
  fs.validate();
  return fs;
}

RetrievalReport retrieval_eval(const FeatureSet& fs) {
  fs.validate();
  const int m = fs.features.dim(0);
  if (m < 2) throw ConfigError("retrieval needs at least two rows");
  if (std::set<int>(fs.labels.begin(), fs.labels.end()).size() < 2)
    throw ConfigError("retrieval needs at least two distinct classes");

  const MapRM x = as_matrix(fs.features);
  const MatrixRM sims = x * x.transpose();

  RetrievalReport report;
  report.per_query_ap.reserve(std::size_t(m));
  int hits1 = 0;
  int hits5 = 0;
  double ap_total = 0.0;
  std::vector<int> order;
  order.reserve(std::size_t(m) - 1);
  for (int q = 0; q < m; ++q) {
    order.clear();
    for (int j = 0; j < m; ++j)
      if (j != q) order.push_back(j);
    // ascending index order in, stable sort by similarity out: the
    // declared (-similarity, index) tie rule
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return sims(q, a) > sims(q, b); });

    int relevant_total = 0;
    for (int j : order) relevant_total += fs.labels[std::size_t(j)] == fs.labels[std::size_t(q)];
    if (relevant_total == 0) {
      report.isolated_queries.push_back(q);
      report.per_query_ap.push_back(0.0);
      continue;
    }

    int hits = 0;
    double ap = 0.0;
    const int top_k = std::min<int>(5, int(order.size()));
    bool in_top5 = false;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      if (fs.labels[std::size_t(order[pos])] != fs.labels[std::size_t(q)]) continue;
      ++hits;
      ap += double(hits) / double(pos + 1);
      if (int(pos) < top_k) in_top5 = true;
    }
    hits1 += fs.labels[std::size_t(order[0])] == fs.labels[std::size_t(q)];
    hits5 += in_top5;
    report.per_query_ap.push_back(ap / double(relevant_total));
    ap_total += report.per_query_ap.back();
  }

  report.rank1 = 100.0 * double(hits1) / double(m);
  report.rank5 = 100.0 * double(hits5) / double(m);
  report.map = 100.0 * ap_total / double(m);
  return report;
}

ProbeReport linear_probe(const FeatureSet& train, const FeatureSet& test,
                         const ProbeConfig& cfg) {
  cfg.validate();
  train.validate();
  test.validate();
  if (train.features.dim(1) != test.features.dim(1))
    throw StructuralError("train and test feature widths differ");

  int num_classes = 0;
  for (int label : train.labels) num_classes = std::max(num_classes, label + 1);
  for (int label : test.labels) num_classes = std::max(num_classes, label + 1);
  if (num_classes < 2) throw ConfigError("probing needs at least two classes");

  // stratified subsample: an independent shuffle per class, floor of the
  // requested share, row order restored for a deterministic sum
  std::vector<std::vector<int>> per_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < train.labels.size(); ++i)
    per_class[std::size_t(train.labels[i])].push_back(int(i));
  std::vector<int> chosen;
  for (int c = 0; c < num_classes; ++c) {
    auto& rows = per_class[std::size_t(c)];
    if (rows.empty()) continue;
    const int keep = int(cfg.fraction * double(rows.size()));
    if (keep < 1)
      throw ConfigError("label fraction " + std::to_string(cfg.fraction) +
                        " leaves class " + std::to_string(c) + " with no training sample");
    Rng rng = Rng::substream(cfg.seed, "probe_subsample", std::uint64_t(c));
    for (std::size_t i = rows.size(); i > 1; --i)
      std::swap(rows[i - 1], rows[std::size_t(rng.uniform_int(std::int64_t(i)))]);
    chosen.insert(chosen.end(), rows.begin(), rows.begin() + keep);
  }
  std::sort(chosen.begin(), chosen.end());

  const int n = int(chosen.size());
  const int d = train.features.dim(1);
  MatrixRM x(n, d);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int row = chosen[std::size_t(i)];
    for (int j = 0; j < d; ++j) x(i, j) = train.features[std::int64_t(row) * d + j];
    y[std::size_t(i)] = train.labels[std::size_t(row)];
  }

  MatrixRM w = MatrixRM::Zero(num_classes, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(num_classes);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    MatrixRM logits = x * w.transpose();
    logits.rowwise() += b.transpose();
    for (int i = 0; i < n; ++i) {
      const double peak = logits.row(i).maxCoeff();
      logits.row(i) = (logits.row(i).array() - peak).exp();
      logits.row(i) /= logits.row(i).sum();
      logits(i, y[std::size_t(i)]) -= 1.0;  // softmax minus one-hot
    }
    logits /= double(n);
    w -= cfg.lr * (logits.transpose() * x);
    b -= cfg.lr * logits.colwise().sum().transpose();
  }

  const MapRM xt = as_matrix(test.features);
  MatrixRM logits = xt * w.transpose();
  logits.rowwise() += b.transpose();
  const int top_k = std::min(5, num_classes);
  int hits1 = 0;
  int hits5 = 0;
  for (int i = 0; i < test.features.dim(0); ++i) {
    const int truth = test.labels[std::size_t(i)];
    // rank of the true class under the (-logit, class index) tie rule
    int better = 0;
    for (int c = 0; c < num_classes; ++c) {
      if (c == truth) continue;
      if (logits(i, c) > logits(i, truth) || (logits(i, c) == logits(i, truth) && c < truth))
        ++better;
    }
    hits1 += better == 0;
    hits5 += better < top_k;
  }

  ProbeReport report;
  report.top1 = 100.0 * double(hits1) / double(test.features.dim(0));
  report.top5 = 100.0 * double(hits5) / double(test.features.dim(0));
  return report;
}

}  // namespace ppssl::eval
