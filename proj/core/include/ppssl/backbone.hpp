#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ppssl/graph.hpp"
#include "ppssl/rng.hpp"

namespace ppssl::model {

// Named persistent leaf. Names are stable across runs and drive both
// checkpoint layout and per-parameter init streams.
struct Param {
  std::string name;
  Var var;
};

struct EncoderConfig {
  std::string profile = "tinycnn";  // tinycnn | resnet50
  bool conv_bias = true;            // tinycnn stages only; resnet convs are bias-free
  int width = 32;                   // tinycnn stem width; stages double it twice

  void validate() const;
};

struct EncoderOutput {
  Var feature_map;        // B x C_f x H_f x W_f, last pre-pooling activation
  Var pooled;             // B x C_f spatial average
  std::vector<Var> taps;  // per-stage activations, index-aligned with stage_names()
};

class EncoderImpl {
public:
  virtual ~EncoderImpl() = default;
  virtual EncoderOutput forward(Graph& g, const Var& batch) const = 0;
  virtual int out_channels() const = 0;
  virtual int num_stages() const = 0;
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

protected:
  std::vector<Param> params_;
};

std::unique_ptr<EncoderImpl> make_tinycnn(const EncoderConfig& cfg, const std::string& prefix,
                                          std::uint64_t seed, bool trainable);
std::unique_ptr<EncoderImpl> make_resnet50(const EncoderConfig& cfg, const std::string& prefix,
                                           std::uint64_t seed, bool trainable);

// Student or momentum tower body. Parameters live in named leaves; the
// momentum tower is built with trainable=false so no gradient can ever
// reach it.
class Encoder {
public:
  Encoder(const EncoderConfig& cfg, const std::string& prefix, std::uint64_t seed, bool trainable);

  EncoderOutput forward(Graph& g, const Var& batch) const { return impl_->forward(g, batch); }
  int out_channels() const { return impl_->out_channels(); }
  int num_stages() const { return impl_->num_stages(); }
  std::vector<Param>& params() { return impl_->params(); }
  const std::vector<Param>& params() const { return impl_->params(); }
  const EncoderConfig& config() const { return cfg_; }

private:
  EncoderConfig cfg_;
  std::unique_ptr<EncoderImpl> impl_;
};

struct HeadConfig {
  int in_dim = 128;
  int hidden = 128;
  int out_dim = 128;
};

// linear -> relu -> linear -> batch norm, then L2 normalization onto the
// unit sphere.
class ProjectionHead {
public:
  ProjectionHead(const HeadConfig& cfg, const std::string& prefix, std::uint64_t seed,
                 bool trainable);

  Var forward(Graph& g, const Var& pooled) const;
  const HeadConfig& config() const { return cfg_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

private:
  HeadConfig cfg_;
  std::vector<Param> params_;
  Var w1_, b1_, w2_, b2_, gamma_, beta_;
};

struct ModelConfig {
  EncoderConfig encoder;
  int proj_hidden = 0;  // 0: match encoder output channels
  int proj_dim = 128;
  std::uint64_t seed = 0;
};

// Both towers plus their projection heads. Single-writer: the training
// thread owns mutation; evaluation works on a loaded copy.
struct ModelState {
  ModelConfig cfg;
  Encoder student_encoder;
  Encoder momentum_encoder;
  ProjectionHead student_head;
  ProjectionHead momentum_head;
  long long step = 0;

  explicit ModelState(const ModelConfig& cfg);

  std::vector<Param> student_params() const;
  std::vector<Param> momentum_params() const;
};

// Copies student values into the momentum tower.
void init_momentum(ModelState& state);

// p_m <- m*p_m + (1-m)*p_s for every momentum parameter. Throws
// StructuralError when the towers are not congruent.
void ema_update(ModelState& state, double m);

// Shared by init code: He-style fan-in scaled normal draw from a stream
// derived from the parameter name, so adding parameters elsewhere never
// shifts this one's values.
Tensor he_normal(std::vector<int> shape, std::int64_t fan_in, std::uint64_t seed,
                 const std::string& name);

}  // namespace ppssl::model
