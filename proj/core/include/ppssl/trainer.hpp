#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ppssl/ais.hpp"
#include "ppssl/backbone.hpp"
#include "ppssl/checkpoint.hpp"
#include "ppssl/config.hpp"
#include "ppssl/contrastive.hpp"
#include "ppssl/data.hpp"
#include "ppssl/iadm.hpp"
#include "ppssl/optim.hpp"
#include "ppssl/teacher.hpp"

namespace ppssl::train {

// Exact affine combination of the three terms. A non-finite component is
// reported by name instead of poisoning the update.
double total_loss(double l_cl, double l_ais, double l_iadm, double alpha, double beta);

// One training sample: the two augmented views plus the deterministic
// original, and the stable key the teacher cache is indexed by.
struct Example {
  data::ViewPair views;
  std::string source_id;
};

struct StepMetrics {
  long long step = 0;  // index of the update that produced this row
  double l_cl = 0.0;
  double l_ais = 0.0;   // 0 while the term is skipped
  double l_iadm = 0.0;  // 0 while the term is skipped
  double lr = 0.0;
};

struct FitReport {
  std::vector<StepMetrics> metrics;  // rows appended by this invocation
  std::string final_checkpoint;
};

// Owns the full training state: both towers, the two attention heads, the
// negative queue, the optimizer, and the teacher bridge. Heads exist even
// while their losses are disabled, so the checkpoint layout never depends
// on ablation switches.
class Pipeline {
public:
  Pipeline(config::Settings settings, std::shared_ptr<teacher::TeacherProvider> provider,
           ais::TextCorpus corpus = {});

  const config::Settings& settings() const { return settings_; }
  model::ModelState& state() { return *state_; }
  const model::ModelState& state() const { return *state_; }
  contrastive::EmbeddingQueue& queue() { return queue_; }
  const contrastive::EmbeddingQueue& queue() const { return queue_; }
  ais::AttentionHead& ais_head() { return *ais_head_; }
  iadm::ImageHead& iadm_head() { return *iadm_head_; }
  optim::Sgd& optimizer() { return *opt_; }
  const ais::TextCorpus& corpus() const { return corpus_; }
  teacher::TeacherProvider* provider() const { return provider_.get(); }

  long long epoch() const { return epoch_; }
  long long step() const { return step_; }

  // Whether the term contributes at the given epoch (weight, switch, and
  // warmup delay all considered).
  bool ais_active(long long at_epoch) const;
  bool iadm_active(long long at_epoch) const;

  // Student towers plus both attention heads, the optimizer's view.
  std::vector<model::Param> trainable_params() const;

  // One optimizer update: contrastive loss on the augmented views, the
  // active auxiliary terms, a single joint step, the momentum update, and
  // the queue push.
  StepMetrics train_step(const std::vector<Example>& batch, double lr);

  Checkpoint make_checkpoint() const;
  // Name- and shape-checked restore of a checkpoint produced by a pipeline
  // of the same architecture.
  void restore(const Checkpoint& c);

  // Epoch loop with deterministic per-(epoch, record) augmentation
  // streams. Appends to <run_dir>/metrics.csv and writes checkpoints
  // under <run_dir>/checkpoints/.
  FitReport fit(const data::Manifest& manifest, const std::string& run_dir);

private:
  config::Settings settings_;
  std::shared_ptr<teacher::TeacherProvider> provider_;
  ais::TextCorpus corpus_;
  std::unique_ptr<model::ModelState> state_;
  std::unique_ptr<ais::AttentionHead> ais_head_;
  std::unique_ptr<iadm::ImageHead> iadm_head_;
  contrastive::EmbeddingQueue queue_;
  std::unique_ptr<optim::Sgd> opt_;
  long long epoch_ = 0;
  long long step_ = 0;
};

}  // namespace ppssl::train
