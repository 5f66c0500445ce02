#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ppssl/data.hpp"
#include "ppssl/tensor.hpp"
#include "ppssl/trainer.hpp"

namespace ppssl::viz {

struct VizConfig {
  int count = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-image min-max rescale to [0,1] and bilinear upsample to the target
// size. A constant map renders black instead of dividing by zero.
Tensor heatmap_image(const Tensor& map, int out_h, int out_w);

// Red-tinted blend: cold pixels keep the photograph, hot pixels shift
// toward pure red. Both inputs share H x W; heat is a 1-channel [0,1] map.
Tensor overlay_image(const Tensor& rgb, const Tensor& heat);

// For each sampled record of the split, writes four PNGs next to each
// other: the AIS attention z', the trainable image attention w, the
// saliency label, and the label blended over the photograph. Returns every
// path written, grouped per image.
std::vector<std::string> visualize(train::Pipeline& pipeline, const data::Manifest& manifest,
                                   data::Split split, const std::string& out_dir,
                                   const VizConfig& cfg);

}  // namespace ppssl::viz
