#include "ppssl/iadm.hpp"

#include <algorithm>
#include <cmath>

#include "ppssl/ais.hpp"
#include "ppssl/image.hpp"
#include "ppssl/ops.hpp"

namespace ppssl::iadm {

ImageHead::ImageHead(int in_channels, int attn_channels, const std::string& prefix,
                     std::uint64_t seed, bool trainable)
    : in_channels_(in_channels), attn_channels_(attn_channels) {
  std::vector<std::string> issues;
  if (in_channels < 1) issues.push_back("image head input channels must be >= 1");
  if (attn_channels < 1) issues.push_back("image head channels must be >= 1");
  if (!issues.empty()) throw ConfigError("invalid image head config", issues);

  psi_w_ = make_leaf(model::he_normal({attn_channels, in_channels, 1, 1}, in_channels, seed,
                                      prefix + ".psi.weight"),
                     trainable, prefix + ".psi.weight");
  psi_b_ = make_leaf(Tensor::zeros({attn_channels}), trainable, prefix + ".psi.bias");
  params_.push_back({prefix + ".psi.weight", psi_w_});
  params_.push_back({prefix + ".psi.bias", psi_b_});
}

Saliency input_saliency(const std::function<std::pair<Var, Var>(Graph&)>& build) {
  Graph g;
  auto [loss, target] = build(g);
  if (loss->value.size() != 1)
    throw StructuralError("saliency loss must be scalar, got " + loss->value.shape_str());
  g.backward(loss);
  if (!target->grad_set)
    throw ContractError("loss does not depend on the saliency target (no differentiable path)");
  return {target->grad, target->value};
}

GradCamLabel grad_img(const Tensor& grad_wt, const Tensor& x) {
  check_same_shape(grad_wt, x, "grad_img");
  if (x.ndim() != 4) throw StructuralError("grad_img expects NCHW, got " + x.shape_str());
  const int batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t hw = std::int64_t(h) * w;

  GradCamLabel label;
  label.map = Tensor({batch, 1, h, w});
  label.degenerate_rows.assign(std::size_t(batch), 0);
  for (int b = 0; b < batch; ++b) {
    double* dst = label.map.data() + std::int64_t(b) * hw;
    double sum = 0.0;
    for (std::int64_t p = 0; p < hw; ++p) {
      double best = 0.0;
      for (int c = 0; c < ch; ++c) {
        const std::int64_t i = (std::int64_t(b) * ch + c) * hw + p;
        best = std::max(best, grad_wt[i] * x[i]);
      }
      dst[p] = best;
      sum += best;
    }
    if (sum <= 0.0) label.degenerate_rows[std::size_t(b)] = 1;
    const double denom = sum + double(hw) * kMapEps;
    for (std::int64_t p = 0; p < hw; ++p) dst[p] = (dst[p] + kMapEps) / denom;
  }
  return label;
}

Var image_attention(Graph& g, const Var& x, const ImageHead& head) {
  if (x->value.ndim() != 4 || x->value.dim(1) != head.in_channels())
    throw StructuralError("image_attention: input " + x->value.shape_str() +
                          " vs head input channels " + std::to_string(head.in_channels()));
  if (!x->value.all_finite()) throw ContractError("image_attention: non-finite input");
  return ais::attention_map(g, x, head.psi_weight(), head.psi_bias());
}

Var iadm_loss(Graph& g, const GradCamLabel& label, const Var& w) {
  if (!label.detached) throw ContractError("iadm_loss: label must be detached");
  check_same_shape(label.map, w->value, "iadm_loss");
  return ops::kl_to_smoothed(g, label.map, w, kMapEps);
}

double iadm_loss_value(const GradCamLabel& label, const Tensor& w) {
  Graph g(false);
  return iadm_loss(g, label, g.input(w))->value.item();
}

GradCamLabel upsample_label(const GradCamLabel& label, int height, int width) {
  if (label.map.ndim() != 4 || label.map.dim(1) != 1)
    throw StructuralError("upsample_label expects Bx1xHxW, got " + label.map.shape_str());
  const int batch = label.map.dim(0), h = label.map.dim(2), w = label.map.dim(3);
  const std::int64_t hw = std::int64_t(h) * w;
  GradCamLabel out;
  out.map = Tensor({batch, 1, height, width});
  out.degenerate_rows = label.degenerate_rows;
  const std::int64_t ohw = std::int64_t(height) * width;
  for (int b = 0; b < batch; ++b) {
    Tensor sample({1, h, w});
    std::copy(label.map.data() + std::int64_t(b) * hw, label.map.data() + std::int64_t(b + 1) * hw,
              sample.data());
    Tensor up = img::bilinear_resize(sample, height, width);
    double sum = 0.0;
    for (std::int64_t p = 0; p < ohw; ++p) sum += up[p];
    const double denom = sum + double(ohw) * kMapEps;
    double* dst = out.map.data() + std::int64_t(b) * ohw;
    for (std::int64_t p = 0; p < ohw; ++p) dst[p] = (up[p] + kMapEps) / denom;
  }
  return out;
}

}  // namespace ppssl::iadm
