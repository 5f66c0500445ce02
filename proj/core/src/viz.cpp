#include "ppssl/viz.hpp"

#include <algorithm>
#include <filesystem>

#include "ppssl/ais.hpp"
#include "ppssl/config.hpp"
#include "ppssl/contrastive.hpp"
#include "ppssl/iadm.hpp"
#include "ppssl/image.hpp"
#include "ppssl/ops.hpp"
#include "ppssl/rng.hpp"

namespace fs = std::filesystem;

namespace ppssl::viz {
namespace {

// "class_03/img_017.png" -> "class_03_img_017"
std::string stem_for(const std::string& id) {
  std::string stem = id;
  for (char& c : stem)
    if (c == '/' || c == '\\') c = '_';
  const std::size_t dot = stem.rfind('.');
  if (dot != std::string::npos && dot > 0) stem.resize(dot);
  return stem;
}

// Batch slice b of a B x 1 x H x W map as 1 x H x W.
Tensor map_slice(const Tensor& map, std::size_t b) {
  Tensor out({1, map.dim(2), map.dim(3)});
  std::copy(map.raw().begin() + std::int64_t(b) * out.size(),
            map.raw().begin() + std::int64_t(b + 1) * out.size(), out.raw().begin());
  return out;
}

}  // namespace

void VizConfig::validate() const {
  // the saliency pass normalizes projections over the sampled batch, so a
  // single image cannot carry it
  if (count < 2) throw ConfigError("viz count must be at least 2");
}

Tensor heatmap_image(const Tensor& map, int out_h, int out_w) {
  if (map.ndim() != 3 || map.dim(0) != 1)
    throw StructuralError("heatmaps are single-channel 1 x H x W tensors");
  double lo = map[0];
  double hi = map[0];
  for (std::int64_t i = 0; i < map.size(); ++i) {
    lo = std::min(lo, map[i]);
    hi = std::max(hi, map[i]);
  }
  Tensor scaled({1, map.dim(1), map.dim(2)});
  if (hi > lo)
    for (std::int64_t i = 0; i < map.size(); ++i) scaled[i] = (map[i] - lo) / (hi - lo);
  return img::bilinear_resize(scaled, out_h, out_w);
}

Tensor overlay_image(const Tensor& rgb, const Tensor& heat) {
  if (rgb.ndim() != 3 || rgb.dim(0) != 3) throw StructuralError("overlay base must be 3 x H x W");
  if (heat.ndim() != 3 || heat.dim(0) != 1 || heat.dim(1) != rgb.dim(1) ||
      heat.dim(2) != rgb.dim(2))
    throw StructuralError("overlay heat map must be 1 x H x W matching the image");
  const std::int64_t plane = std::int64_t(rgb.dim(1)) * rgb.dim(2);
  Tensor out(rgb.shape());
  for (std::int64_t i = 0; i < plane; ++i) {
    const double a = 0.6 * std::clamp(heat[i], 0.0, 1.0);
    out[i] = rgb[i] * (1.0 - a) + a;  // red channel gains the tint
    out[plane + i] = rgb[plane + i] * (1.0 - a);
    out[2 * plane + i] = rgb[2 * plane + i] * (1.0 - a);
  }
  return out;
}

std::vector<std::string> visualize(train::Pipeline& pipeline, const data::Manifest& manifest,
                                   data::Split split, const std::string& out_dir,
                                   const VizConfig& cfg) {
  cfg.validate();
  const auto records = manifest.split_records(split);
  if (records.size() < 2)
    throw ConfigError("visualization needs at least two records in the split");
  const data::AugPolicy policy = config::aug_policy(pipeline.settings());

  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::substream(cfg.seed, "viz_sample");
  const std::size_t take = std::min<std::size_t>(std::size_t(cfg.count), records.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + std::size_t(rng.uniform_int(std::int64_t(order.size() - i)));
    std::swap(order[i], order[j]);
  }

  // one joint pass over the sample, exactly the shape of a training batch
  std::vector<Tensor> photos;
  Tensor batch;
  for (std::size_t s = 0; s < take; ++s) {
    const data::ImageRecord& rec = records[order[s]];
    const Tensor image = data::test_transform(rec, policy);
    // display copy straight from the file, before any normalization
    photos.push_back(img::center_crop(
        img::resize_shorter(img::load_png(rec.path), policy.test_resize), policy.test_size,
        policy.test_size));
    if (s == 0) batch = Tensor({int(take), image.dim(0), image.dim(1), image.dim(2)});
    std::copy(image.raw().begin(), image.raw().end(),
              batch.raw().begin() + std::int64_t(s) * image.size());
  }

  Tensor zprime;
  Tensor w;
  {
    Graph g(false);
    Var xv = g.input(batch);
    model::EncoderOutput out = pipeline.state().student_encoder.forward(g, xv);
    zprime = ais::spatial_attention(g, out.feature_map, pipeline.ais_head())->value;
    w = iadm::image_attention(g, xv, pipeline.iadm_head())->value;
  }

  // the label the alignment loss would see: saliency of the contrastive
  // loss against the sample's own momentum keys and the current queue
  Tensor keys;
  {
    Graph g(false);
    Var xv = g.input(batch);
    model::EncoderOutput out = pipeline.state().momentum_encoder.forward(g, xv);
    keys = pipeline.state().momentum_head.forward(g, out.pooled)->value;
  }
  iadm::Saliency sal = iadm::input_saliency([&](Graph& g) {
    Var xv = g.input(batch, true, "image");
    model::EncoderOutput out = pipeline.state().student_encoder.forward(g, xv);
    Var q = pipeline.state().student_head.forward(g, out.pooled);
    Var loss = contrastive::info_nce(g, q, keys, pipeline.queue(),
                                     pipeline.settings().contrastive.tau);
    return std::make_pair(loss, xv);
  });
  const iadm::GradCamLabel label = iadm::grad_img(sal.grad, sal.value);

  fs::create_directories(out_dir);
  std::vector<std::string> written;
  for (std::size_t s = 0; s < take; ++s) {
    const data::ImageRecord& rec = records[order[s]];
    const int h = photos[s].dim(1);
    const int width = photos[s].dim(2);
    const Tensor heat = heatmap_image(map_slice(label.map, s), h, width);
    const std::string stem = (fs::path(out_dir) / stem_for(rec.id)).string();
    const struct {
      std::string path;
      Tensor image;
    } outputs[] = {
        {stem + "_z.png", heatmap_image(map_slice(zprime, s), h, width)},
        {stem + "_w.png", heatmap_image(map_slice(w, s), h, width)},
        {stem + "_gradcam.png", heat},
        {stem + "_overlay.png", overlay_image(photos[s], heat)},
    };
    for (const auto& out : outputs) {
      img::save_png(out.path, out.image);
      written.push_back(out.path);
    }
  }
  return written;
}

}  // namespace ppssl::viz
