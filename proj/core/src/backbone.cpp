#include "ppssl/backbone.hpp"

#include <cmath>

#include "ppssl/ops.hpp"

namespace ppssl::model {

void EncoderConfig::validate() const {
  std::vector<std::string> issues;
  if (profile != "tinycnn" && profile != "resnet50")
    issues.push_back("encoder profile must be tinycnn or resnet50, got '" + profile + "'");
  if (width < 1) issues.push_back("encoder width must be positive");
  if (!issues.empty()) {
    std::string msg = "invalid encoder config:";
    for (const auto& i : issues) msg += "\n  - " + i;
    throw ConfigError(msg, issues);
  }
}

Tensor he_normal(std::vector<int> shape, std::int64_t fan_in, std::uint64_t seed,
                 const std::string& name) {
  Rng rng = Rng::substream(seed, name);
  const double stddev = std::sqrt(2.0 / double(std::max<std::int64_t>(fan_in, 1)));
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

namespace {

Var named_param(std::vector<Param>& out, const std::string& name, Tensor value, bool trainable) {
  Var v = make_leaf(std::move(value), trainable, name);
  out.push_back({name, v});
  return v;
}

// -- tinycnn --------------------------------------------------------------
// Three 3x3 conv stages (stride 1,2,2), ReLU after each; C_f = 4 * width.

class TinyCnn final : public EncoderImpl {
public:
  TinyCnn(const EncoderConfig& cfg, const std::string& prefix, std::uint64_t seed, bool trainable) {
    const int w = cfg.width;
    chans_ = {3, w, 2 * w, 4 * w};
    strides_ = {1, 2, 2};
    for (int s = 0; s < 3; ++s) {
      const std::string base = prefix + ".conv" + std::to_string(s + 1);
      const int cin = chans_[std::size_t(s)], cout = chans_[std::size_t(s) + 1];
      weights_.push_back(named_param(params_, base + ".weight",
                                     he_normal({cout, cin, 3, 3}, std::int64_t(cin) * 9, seed, base + ".weight"),
                                     trainable));
      biases_.push_back(cfg.conv_bias
                            ? named_param(params_, base + ".bias", Tensor::zeros({cout}), trainable)
                            : nullptr);
    }
  }

  EncoderOutput forward(Graph& g, const Var& batch) const override {
    EncoderOutput out;
    Var h = batch;
    for (int s = 0; s < 3; ++s) {
      h = ops::relu(g, ops::conv2d(g, h, weights_[std::size_t(s)], biases_[std::size_t(s)],
                                   strides_[std::size_t(s)], 1));
      out.taps.push_back(h);
    }
    out.feature_map = h;
    out.pooled = ops::global_avg_pool(g, h);
    return out;
  }

  int out_channels() const override { return chans_.back(); }
  int num_stages() const override { return 3; }

private:
  std::vector<int> chans_;
  std::vector<int> strides_;
  std::vector<Var> weights_;
  std::vector<Var> biases_;
};

}  // namespace

std::unique_ptr<EncoderImpl> make_tinycnn(const EncoderConfig& cfg, const std::string& prefix,
                                          std::uint64_t seed, bool trainable) {
  return std::make_unique<TinyCnn>(cfg, prefix, seed, trainable);
}

Encoder::Encoder(const EncoderConfig& cfg, const std::string& prefix, std::uint64_t seed,
                 bool trainable)
    : cfg_(cfg) {
  cfg.validate();
  if (cfg.profile == "tinycnn")
    impl_ = make_tinycnn(cfg, prefix, seed, trainable);
  else
    impl_ = make_resnet50(cfg, prefix, seed, trainable);
}

// -- projection head ------------------------------------------------------

ProjectionHead::ProjectionHead(const HeadConfig& cfg, const std::string& prefix, std::uint64_t seed,
                               bool trainable)
    : cfg_(cfg) {
  if (cfg.in_dim < 1 || cfg.hidden < 1 || cfg.out_dim < 1)
    throw ConfigError("projection head dims must be positive");
  w1_ = named_param(params_, prefix + ".fc1.weight",
                    he_normal({cfg.hidden, cfg.in_dim}, cfg.in_dim, seed, prefix + ".fc1.weight"),
                    trainable);
  b1_ = named_param(params_, prefix + ".fc1.bias", Tensor::zeros({cfg.hidden}), trainable);
  w2_ = named_param(params_, prefix + ".fc2.weight",
                    he_normal({cfg.out_dim, cfg.hidden}, cfg.hidden, seed, prefix + ".fc2.weight"),
                    trainable);
  b2_ = named_param(params_, prefix + ".fc2.bias", Tensor::zeros({cfg.out_dim}), trainable);
  gamma_ = named_param(params_, prefix + ".bn.gamma", Tensor::full({cfg.out_dim}, 1.0), trainable);
  beta_ = named_param(params_, prefix + ".bn.beta", Tensor::zeros({cfg.out_dim}), trainable);
}

Var ProjectionHead::forward(Graph& g, const Var& pooled) const {
  Var h = ops::relu(g, ops::linear(g, pooled, w1_, b1_));
  Var z = ops::linear(g, h, w2_, b2_);
  Var n = ops::batchnorm1d(g, z, gamma_, beta_);
  return ops::l2_normalize_rows(g, n);
}

// -- model state ----------------------------------------------------------

namespace {
HeadConfig resolve_head(const ModelConfig& cfg, int enc_channels) {
  HeadConfig h;
  h.in_dim = enc_channels;
  h.hidden = cfg.proj_hidden > 0 ? cfg.proj_hidden : enc_channels;
  h.out_dim = cfg.proj_dim;
  return h;
}
}  // namespace

ModelState::ModelState(const ModelConfig& c)
    : cfg(c),
      student_encoder(c.encoder, "student.encoder", c.seed, true),
      momentum_encoder(c.encoder, "momentum.encoder", c.seed, false),
      student_head(resolve_head(c, student_encoder.out_channels()), "student.head", c.seed, true),
      momentum_head(resolve_head(c, momentum_encoder.out_channels()), "momentum.head", c.seed,
                    false) {}

std::vector<Param> ModelState::student_params() const {
  std::vector<Param> out = student_encoder.params();
  const auto& hp = student_head.params();
  out.insert(out.end(), hp.begin(), hp.end());
  return out;
}

std::vector<Param> ModelState::momentum_params() const {
  std::vector<Param> out = momentum_encoder.params();
  const auto& hp = momentum_head.params();
  out.insert(out.end(), hp.begin(), hp.end());
  return out;
}

namespace {
// Congruence: same count, same order, same shapes, names equal after the
// tower prefix.
std::string strip_tower(const std::string& name) {
  const auto dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(dot + 1);
}

void check_congruent(const std::vector<Param>& student, const std::vector<Param>& momentum) {
  if (student.size() != momentum.size())
    throw StructuralError("tower mismatch: " + std::to_string(student.size()) + " student vs " +
                          std::to_string(momentum.size()) + " momentum parameters");
  for (std::size_t i = 0; i < student.size(); ++i) {
    const auto& s = student[i];
    const auto& m = momentum[i];
    if (strip_tower(s.name) != strip_tower(m.name))
      throw StructuralError("tower mismatch at index " + std::to_string(i) + ": " + s.name +
                            " vs " + m.name);
    if (!s.var->value.same_shape(m.var->value))
      throw StructuralError("tower shape mismatch for " + s.name + ": " +
                            s.var->value.shape_str() + " vs " + m.var->value.shape_str());
  }
}
}  // namespace

void init_momentum(ModelState& state) {
  auto student = state.student_params();
  auto momentum = state.momentum_params();
  check_congruent(student, momentum);
  for (std::size_t i = 0; i < student.size(); ++i)
    momentum[i].var->value = student[i].var->value;
}

void ema_update(ModelState& state, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("ema momentum must lie in [0,1]");
  auto student = state.student_params();
  auto momentum = state.momentum_params();
  check_congruent(student, momentum);
  for (std::size_t i = 0; i < student.size(); ++i) {
    Tensor& pm = momentum[i].var->value;
    const Tensor& ps = student[i].var->value;
    for (std::int64_t j = 0; j < pm.size(); ++j) pm[j] = m * pm[j] + (1.0 - m) * ps[j];
  }
}

}  // namespace ppssl::model
