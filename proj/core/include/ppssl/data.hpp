#pragma once

#include <array>
#include <string>
#include <vector>

#include "ppssl/rng.hpp"
#include "ppssl/tensor.hpp"

namespace ppssl::data {

enum class Split { train, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct ImageRecord {
  std::string path;  // resolved, loadable as-is
  std::string id;    // the manifest's own relative path: the stable key for
                     // teacher caches and feature exports
  int label = 0;     // consumed by eval only, never by a training loss
  Split split = Split::train;
};

struct Manifest {
  std::vector<ImageRecord> records;
  int num_classes = 0;

  std::vector<ImageRecord> split_records(Split s) const;
};

// One record per line: relative_path<TAB>label<TAB>split. Paths resolve
// against the manifest's directory. Labels must cover 0..max contiguously.
Manifest load_manifest(const std::string& manifest_file);

void write_manifest(const std::string& manifest_file,
                    const std::vector<std::pair<std::string, ImageRecord>>& relative_records);

struct AugPolicy {
  int train_size = 224;
  double crop_scale_min = 0.2;
  double crop_scale_max = 1.0;
  double crop_ratio_min = 3.0 / 4.0;
  double crop_ratio_max = 4.0 / 3.0;
  double flip_prob = 0.5;
  double jitter_prob = 0.8;
  double jitter_brightness = 0.4;
  double jitter_contrast = 0.4;
  double jitter_saturation = 0.4;
  double jitter_hue = 0.1;
  double grayscale_prob = 0.2;
  double blur_prob = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  int test_resize = 256;
  int test_size = 224;
  std::array<double, 3> norm_mean = {0.0, 0.0, 0.0};
  std::array<double, 3> norm_std = {1.0, 1.0, 1.0};

  void validate() const;  // throws ConfigError listing every violation
};

// ImageNet channel statistics, selectable via config.
AugPolicy with_imagenet_stats(AugPolicy p);

struct ViewPair {
  Tensor x;         // 3 x S x S, augmented
  Tensor x_prime;   // 3 x S x S, independently augmented
  Tensor original;  // 3 x S x S, deterministic resize only
  int source_id = 0;
};

// Both views draw fresh augmentation samples from `rng`; `original` is the
// plain resize of the full image with the same normalization and no
// stochastic transform.
ViewPair two_view_augment(const ImageRecord& record, const AugPolicy& policy, Rng& rng,
                          int source_id);
ViewPair two_view_augment_image(const Tensor& chw, const AugPolicy& policy, Rng& rng,
                                int source_id);

// Deterministic eval path: shorter side to test_resize, center-crop
// test_size, normalize.
Tensor test_transform(const ImageRecord& record, const AugPolicy& policy);
Tensor test_transform_image(const Tensor& chw, const AugPolicy& policy);

// The deterministic `original` branch of two_view_augment, exposed for the
// teacher cache, which must see exactly what training feeds the teacher.
Tensor original_transform_image(const Tensor& chw, const AugPolicy& policy);

}  // namespace ppssl::data
