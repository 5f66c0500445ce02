#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ppssl/backbone.hpp"
#include "ppssl/graph.hpp"

namespace ppssl::iadm {

// Saliency pseudo-label: per-sample probability maps, detached by
// construction (plain tensor, no graph history).
struct GradCamLabel {
  Tensor map;                         // B x 1 x H x W, each sample sums to 1
  std::vector<char> degenerate_rows;  // per sample: saliency was all zero, map fell back to uniform
  bool detached = true;

  bool any_degenerate() const {
    for (char d : degenerate_rows)
      if (d) return true;
    return false;
  }
};

// 1x1 attention kernel over the raw image channels. Independent of the
// feature-side head; only this head's parameters learn from the alignment
// loss.
class ImageHead {
public:
  ImageHead(int in_channels, int attn_channels, const std::string& prefix, std::uint64_t seed,
            bool trainable);

  int in_channels() const { return in_channels_; }
  int attn_channels() const { return attn_channels_; }
  std::vector<model::Param>& params() { return params_; }
  const std::vector<model::Param>& params() const { return params_; }
  const Var& psi_weight() const { return psi_w_; }
  const Var& psi_bias() const { return psi_b_; }

private:
  int in_channels_, attn_channels_;
  std::vector<model::Param> params_;
  Var psi_w_, psi_b_;
};

// Saliency target snapshot: the gradient that becomes Grad-wt plus the
// activation it pairs with in Eq-style products (the raw image, or a tap
// for the layer ablation).
struct Saliency {
  Tensor grad;
  Tensor value;
};

// Runs `build` in a throwaway graph and differentiates its scalar loss
// w.r.t. the returned target, where build returns {loss, target}. The
// graph is dropped afterwards, so no second-order path survives.
// Parameters touched by the pass are left with accumulated grads; the
// caller zeroes them before the main backward.
Saliency input_saliency(const std::function<std::pair<Var, Var>(Graph&)>& build);

// ReLU(grad ⊙ x), channel max, then per-sample normalization into a
// probability map with 1e-8 additive smoothing.
GradCamLabel grad_img(const Tensor& grad_wt, const Tensor& x);

// B x 1 x H x W trainable map in [0, 1).
Var image_attention(Graph& g, const Var& x, const ImageHead& head);

// Mean over the batch of KL(label || smoothed-normalized w). Gradients
// flow into w only; the label is a constant.
Var iadm_loss(Graph& g, const GradCamLabel& label, const Var& w);
double iadm_loss_value(const GradCamLabel& label, const Tensor& w);

// Nearest feature-map label for the layer-ablation path: bilinear
// upsampling of each sample's map to the target spatial size, then
// re-normalization.
GradCamLabel upsample_label(const GradCamLabel& label, int height, int width);

inline constexpr double kMapEps = 1e-8;

}  // namespace ppssl::iadm
