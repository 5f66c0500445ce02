#pragma once

#include <cstdint>
#include <string>

#include "ppssl/tensor.hpp"

namespace ppssl::data {

// Classes share one base shape (body + wing + tail) and differ only in
// fine attributes: stripe count, wing notch, eye dot. 4 x 2 x 2 attribute
// combinations bound num_classes at 16.
struct SyntheticSpec {
  int num_classes = 8;
  int per_class = 64;
  int canvas = 64;
  std::uint64_t seed = 7;
  double background_clutter = 0.1;

  void validate() const;
};

struct RenderedImage {
  Tensor image;  // 3 x S x S in [0,1]
  Tensor mask;   // 1 x S x S, hard-edged {0,1} object coverage
};

// Pure function of (spec, cls, idx). Background, object and clutter draw
// from separate substreams, so changing background_clutter never perturbs
// pixels under the object mask.
RenderedImage render_synthetic(const SyntheticSpec& spec, int cls, int idx);

// Writes PNGs plus a manifest (80/20 round-robin split: within-class index
// % 5 == 0 goes to test). Returns the manifest path.
std::string generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir);

}  // namespace ppssl::data
