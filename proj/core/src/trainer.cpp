#include "ppssl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "ppssl/ops.hpp"

namespace fs = std::filesystem;

namespace ppssl::train {
namespace {

config::Settings validated(config::Settings s) {
  s.validate();
  return s;
}

Tensor stack_images(const std::vector<Example>& batch, Tensor data::ViewPair::*member) {
  const Tensor& first = batch.front().views.*member;
  if (first.ndim() != 3) throw StructuralError("view tensors must be C x H x W");
  Tensor out({int(batch.size()), first.dim(0), first.dim(1), first.dim(2)});
  const std::int64_t n = first.size();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Tensor& img = batch[b].views.*member;
    check_same_shape(img, first, "train batch");
    std::memcpy(out.raw().data() + std::int64_t(b) * n, img.raw().data(),
                std::size_t(n) * sizeof(double));
  }
  return out;
}

void append_params(std::vector<std::pair<std::string, Tensor>>& out,
                   const std::vector<model::Param>& params) {
  for (const auto& p : params) out.emplace_back(p.name, p.var->value);
}

}  // namespace

double total_loss(double l_cl, double l_ais, double l_iadm, double alpha, double beta) {
  if (!std::isfinite(alpha) || !std::isfinite(beta) || alpha < 0.0 || beta < 0.0)
    throw ConfigError("loss weights must be finite and nonnegative");
  auto check = [](double v, const char* term) {
    if (!std::isfinite(v))
      throw ContractError(std::string("non-finite ") + term + " in the total loss");
  };
  check(l_cl, "l_cl");
  check(l_ais, "l_ais");
  check(l_iadm, "l_iadm");
  return l_cl + alpha * l_ais + beta * l_iadm;
}

Pipeline::Pipeline(config::Settings settings, std::shared_ptr<teacher::TeacherProvider> provider,
                   ais::TextCorpus corpus)
    : settings_(validated(std::move(settings))),
      provider_(std::move(provider)),
      corpus_(std::move(corpus)),
      queue_(settings_.contrastive.queue, settings_.model.proj_dim) {
  model::ModelConfig mc;
  mc.encoder.profile = settings_.model.encoder;
  mc.encoder.width = settings_.model.width;
  mc.encoder.conv_bias = settings_.model.conv_bias;
  mc.proj_hidden = settings_.model.proj_hidden;
  mc.proj_dim = settings_.model.proj_dim;
  mc.seed = settings_.run.seed;
  state_ = std::make_unique<model::ModelState>(mc);
  model::init_momentum(*state_);

  if (settings_.iadm.saliency_layer >= state_->student_encoder.num_stages())
    throw ConfigError("iadm.saliency_layer " + std::to_string(settings_.iadm.saliency_layer) +
                      " is out of range: the encoder has " +
                      std::to_string(state_->student_encoder.num_stages()) + " stages");

  const int cf = state_->student_encoder.out_channels();
  const int ais_channels = settings_.ais.channels ? settings_.ais.channels : cf;
  const int iadm_channels = settings_.iadm.channels ? settings_.iadm.channels : cf;
  ais_head_ = std::make_unique<ais::AttentionHead>(cf, ais_channels, settings_.ais.teacher_dim,
                                                   "ais", settings_.run.seed, true);
  iadm_head_ =
      std::make_unique<iadm::ImageHead>(3, iadm_channels, "iadm", settings_.run.seed, true);

  const bool ais_enabled = !settings_.ais.disable && settings_.ais.alpha > 0.0;
  if (ais_enabled) {
    if (!provider_) throw ConfigError("the ais loss is enabled but no teacher provider was given");
    if (provider_->dim() != settings_.ais.teacher_dim)
      throw ConfigError("ais.teacher_dim (" + std::to_string(settings_.ais.teacher_dim) +
                        ") does not match the teacher provider dimension (" +
                        std::to_string(provider_->dim()) + ")");
    if (corpus_.size() == 0)
      corpus_ = ais::build_text_corpus(ais::load_descriptions(settings_.ais.corpus), *provider_);
    else if (corpus_.dim() != settings_.ais.teacher_dim)
      throw StructuralError("text corpus dimension " + std::to_string(corpus_.dim()) +
                            " does not match ais.teacher_dim " +
                            std::to_string(settings_.ais.teacher_dim));
  }

  opt_ = std::make_unique<optim::Sgd>(
      trainable_params(), optim::SgdConfig{settings_.optim.lr, settings_.optim.momentum,
                                           settings_.optim.weight_decay});
}

bool Pipeline::ais_active(long long at_epoch) const {
  return !settings_.ais.disable && settings_.ais.alpha > 0.0 &&
         at_epoch >= settings_.ais.delay_epochs;
}

bool Pipeline::iadm_active(long long at_epoch) const {
  return !settings_.iadm.disable && settings_.iadm.beta > 0.0 &&
         at_epoch >= settings_.iadm.delay_epochs;
}

std::vector<model::Param> Pipeline::trainable_params() const {
  std::vector<model::Param> out = state_->student_params();
  const auto& ap = ais_head_->params();
  out.insert(out.end(), ap.begin(), ap.end());
  const auto& ip = iadm_head_->params();
  out.insert(out.end(), ip.begin(), ip.end());
  return out;
}

StepMetrics Pipeline::train_step(const std::vector<Example>& batch, double lr) {
  if (batch.empty()) throw ConfigError("empty training batch");
  const bool do_ais = ais_active(epoch_);
  const bool do_iadm = iadm_active(epoch_);

  const Tensor x = stack_images(batch, &data::ViewPair::x);
  const Tensor x_prime = stack_images(batch, &data::ViewPair::x_prime);
  const Tensor original = stack_images(batch, &data::ViewPair::original);

  // keys from the momentum tower, values only
  Tensor k;
  {
    Graph gk(false);
    Var xp = gk.input(x_prime);
    model::EncoderOutput mo = state_->momentum_encoder.forward(gk, xp);
    k = state_->momentum_head.forward(gk, mo.pooled)->value;
  }

  // The saliency side pass runs first: its graph is discarded and the
  // parameter grads it accumulated are wiped before the real backward.
  iadm::GradCamLabel label;
  if (do_iadm) {
    const int layer = settings_.iadm.saliency_layer;
    iadm::Saliency sal = iadm::input_saliency([&](Graph& g) {
      Var o = g.input(original, layer < 0, "original");
      model::EncoderOutput out = state_->student_encoder.forward(g, o);
      Var q = state_->student_head.forward(g, out.pooled);
      Var loss = contrastive::info_nce(g, q, k, queue_, settings_.contrastive.tau);
      Var target = layer < 0 ? o : out.taps.at(std::size_t(layer));
      return std::make_pair(loss, target);
    });
    label = iadm::grad_img(sal.grad, sal.value);
    if (layer >= 0) label = iadm::upsample_label(label, original.dim(2), original.dim(3));
  }
  opt_->zero_grad();

  Graph g;
  Var xv = g.input(x);
  model::EncoderOutput out = state_->student_encoder.forward(g, xv);
  Var q = state_->student_head.forward(g, out.pooled);
  Var objective = contrastive::info_nce(g, q, k, queue_, settings_.contrastive.tau);
  const double l_cl = objective->value.item();

  double l_ais = 0.0;
  if (do_ais) {
    Var zprime = ais::spatial_attention(g, out.feature_map, *ais_head_);
    Var u_s = ais::student_semantic_embedding(g, out.feature_map, zprime, *ais_head_);
    Var logits_s = ais::semantic_logits(g, u_s, corpus_.embeddings);
    Tensor u_t({int(batch.size()), provider_->dim()});
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Tensor row = provider_->image_embedding(batch[b].views.original, batch[b].source_id);
      std::memcpy(u_t.raw().data() + std::int64_t(b) * provider_->dim(), row.raw().data(),
                  std::size_t(provider_->dim()) * sizeof(double));
    }
    const Tensor teacher_logits = ais::semantic_logits_value(u_t, corpus_.embeddings);
    Var term = ais::ais_loss(g, teacher_logits, logits_s, settings_.ais.tau);
    l_ais = term->value.item();
    objective = ops::add(g, objective, ops::scale(g, term, settings_.ais.alpha));
  }

  double l_iadm = 0.0;
  if (do_iadm) {
    Var ov = g.input(original);
    Var w = iadm::image_attention(g, ov, *iadm_head_);
    Var term = iadm::iadm_loss(g, label, w);
    l_iadm = term->value.item();
    objective = ops::add(g, objective, ops::scale(g, term, settings_.iadm.beta));
  }

  total_loss(l_cl, l_ais, l_iadm, settings_.ais.alpha, settings_.iadm.beta);

  g.backward(objective);
  opt_->step(lr);
  model::ema_update(*state_, settings_.optim.ema);
  queue_.push(k);

  StepMetrics m{step_, l_cl, l_ais, l_iadm, lr};
  ++step_;
  state_->step = step_;
  return m;
}

Checkpoint Pipeline::make_checkpoint() const {
  Checkpoint c;
  c.settings_text = settings_.snapshot();
  c.epoch = epoch_;
  c.step = step_;
  c.queue_write_head = queue_.write_head();
  c.queue_fill = queue_.fill();
  append_params(c.tensors, state_->student_params());
  append_params(c.tensors, state_->momentum_params());
  append_params(c.tensors, ais_head_->params());
  append_params(c.tensors, iadm_head_->params());
  for (const auto& [name, buf] : opt_->buffers()) c.tensors.emplace_back("opt." + name, buf);
  c.tensors.emplace_back("queue.buffer", queue_.buffer());
  return c;
}

void Pipeline::restore(const Checkpoint& c) {
  // Enumerate this pipeline's tensors exactly as make_checkpoint does, so
  // name-set equality means the architectures agree.
  Checkpoint own = make_checkpoint();
  if (c.tensors.size() != own.tensors.size())
    throw StructuralError("checkpoint holds " + std::to_string(c.tensors.size()) +
                          " tensors, this pipeline has " + std::to_string(own.tensors.size()));
  for (auto& [name, value] : own.tensors) {
    const Tensor* stored = c.find(name);
    if (!stored) throw StructuralError("checkpoint is missing tensor '" + name + "'");
    if (stored->shape() != value.shape())
      throw StructuralError("checkpoint tensor '" + name + "' has mismatched shape");
  }

  for (const auto& p : state_->student_params()) p.var->value = *c.find(p.name);
  for (const auto& p : state_->momentum_params()) p.var->value = *c.find(p.name);
  for (const auto& p : ais_head_->params()) p.var->value = *c.find(p.name);
  for (const auto& p : iadm_head_->params()) p.var->value = *c.find(p.name);
  for (auto& [name, buf] : opt_->buffers()) buf = *c.find("opt." + name);

  const Tensor* qbuf = c.find("queue.buffer");
  if (c.queue_write_head < 0 || c.queue_write_head >= queue_.capacity() || c.queue_fill < 0 ||
      c.queue_fill > queue_.capacity())
    throw StructuralError("checkpoint queue indices out of range");
  queue_.restore(*qbuf, int(c.queue_write_head), int(c.queue_fill));

  epoch_ = c.epoch;
  step_ = c.step;
  state_->step = step_;
}

FitReport Pipeline::fit(const data::Manifest& manifest, const std::string& run_dir) {
  const auto train_records = manifest.split_records(data::Split::train);
  if (train_records.empty()) throw ConfigError("manifest has no training records");
  const int batch_size = settings_.optim.batch_size;
  const long long steps_per_epoch =
      (static_cast<long long>(train_records.size()) + batch_size - 1) / batch_size;
  const long long total_steps = steps_per_epoch * settings_.optim.epochs;
  const data::AugPolicy policy = config::aug_policy(settings_);

  fs::create_directories(fs::path(run_dir) / "checkpoints");
  const std::string metrics_path = (fs::path(run_dir) / "metrics.csv").string();
  const bool append = epoch_ > 0 && fs::exists(metrics_path) && fs::file_size(metrics_path) > 0;
  std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
  if (!metrics) throw IoError("cannot open '" + metrics_path + "' for writing");
  metrics << std::setprecision(12);
  if (!append) metrics << "step,l_cl,l_ais,l_iadm,lr\n";

  FitReport report;
  for (long long e = epoch_; e < settings_.optim.epochs; ++e) {
    epoch_ = e;
    std::vector<std::size_t> order(train_records.size());
    std::iota(order.begin(), order.end(), std::size_t(0));
    Rng shuffle = Rng::substream(settings_.run.seed, "shuffle", std::uint64_t(e));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[std::size_t(shuffle.uniform_int(std::int64_t(i)))]);

    for (std::size_t start = 0; start < order.size(); start += std::size_t(batch_size)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(batch_size));
      std::vector<Example> batch;
      batch.reserve(end - start);
      for (std::size_t s = start; s < end; ++s) {
        const std::size_t rec_index = order[s];
        const data::ImageRecord& rec = train_records[rec_index];
        Rng aug = Rng::substream(settings_.run.seed, "augment", std::uint64_t(e),
                                 std::uint64_t(rec_index));
        batch.push_back({data::two_view_augment(rec, policy, aug, int(rec_index)), rec.id});
      }
      const double lr = optim::scheduled_lr(settings_.optim.schedule, settings_.optim.lr, step_,
                                            total_steps);
      StepMetrics m = train_step(batch, lr);
      metrics << m.step << "," << m.l_cl << "," << m.l_ais << "," << m.l_iadm << "," << m.lr
              << "\n";
      report.metrics.push_back(m);
    }
    epoch_ = e + 1;
    metrics.flush();
    if (settings_.run.checkpoint_every > 0 && epoch_ % settings_.run.checkpoint_every == 0 &&
        epoch_ < settings_.optim.epochs) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04lld.ckpt", epoch_);
      save_checkpoint((fs::path(run_dir) / "checkpoints" / name).string(), make_checkpoint());
    }
  }

  const std::string final_path = (fs::path(run_dir) / "checkpoints" / "final.ckpt").string();
  save_checkpoint(final_path, make_checkpoint());
  report.final_checkpoint = final_path;
  return report;
}

}  // namespace ppssl::train
