#pragma once

#include <string>

#include "ppssl/tensor.hpp"

namespace ppssl::img {

// Images travel as CHW double tensors, RGB, values in [0,1] until the
// normalization step of an augmentation policy maps them elsewhere.

Tensor load_png(const std::string& path);

// Clamps to [0,1] and writes an 8-bit PNG (1 or 3 channels).
void save_png(const std::string& path, const Tensor& chw);

// Half-pixel-center bilinear interpolation with edge clamping.
Tensor bilinear_resize(const Tensor& chw, int out_h, int out_w);

// Resizes so the shorter side equals `target`, preserving aspect ratio.
Tensor resize_shorter(const Tensor& chw, int target);

Tensor crop(const Tensor& chw, int top, int left, int h, int w);

Tensor center_crop(const Tensor& chw, int h, int w);

Tensor hflip(const Tensor& chw);

}  // namespace ppssl::img
