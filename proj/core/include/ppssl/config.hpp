#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ppssl/data.hpp"
#include "ppssl/tensor.hpp"

namespace ppssl::config {

// Flat key-value document. Lines are `[section]` headers, `key = value`
// assignments, blank, or whole-line `#` comments; values are trimmed and
// keep everything else verbatim. Keys are addressed as "section.key".
struct Doc {
  std::map<std::string, std::string> entries;

  static Doc parse_file(const std::string& path);
  static Doc parse_text(const std::string& text, const std::string& origin = "<text>");

  // Inserts or overwrites; the dotted key must be `section.key` with both
  // parts identifier-shaped.
  void set(const std::string& dotted_key, const std::string& value);
};

struct DataSettings {
  std::string manifest;
  int train_size = 224;
  int test_resize = 256;
  int test_size = 224;
  std::string norm = "none";  // none | imagenet

  bool operator==(const DataSettings&) const = default;
};

struct ModelSettings {
  std::string encoder = "tinycnn";  // tinycnn | resnet50
  int width = 32;
  bool conv_bias = true;
  int proj_hidden = 0;  // 0: match encoder output channels
  int proj_dim = 128;

  bool operator==(const ModelSettings&) const = default;
};

struct ContrastiveSettings {
  double tau = 0.2;
  int queue = 4096;

  bool operator==(const ContrastiveSettings&) const = default;
};

struct AisSettings {
  bool disable = false;
  double alpha = 1.2;
  double tau = 2.0;
  int channels = 0;  // 0: match encoder output channels
  int delay_epochs = 0;
  std::string corpus;
  std::string provider = "fixture";  // fixture | cache
  int teacher_dim = 32;
  double kappa = 0.85;
  int fixture_classes = 16;
  std::string image_cache;
  std::string text_cache;

  bool operator==(const AisSettings&) const = default;
};

struct IadmSettings {
  bool disable = false;
  double beta = 0.01;
  int channels = 0;  // 0: match encoder output channels
  int delay_epochs = 0;
  int saliency_layer = -1;  // -1: input pixels, else encoder stage index

  bool operator==(const IadmSettings&) const = default;
};

struct OptimSettings {
  double lr = 0.03;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::string schedule = "cosine";  // cosine | constant
  int epochs = 100;
  int batch_size = 128;
  double ema = 0.999;

  bool operator==(const OptimSettings&) const = default;
};

struct RunSettings {
  std::uint64_t seed = 0;
  std::string dir = "runs";
  int checkpoint_every = 0;  // epochs between checkpoints; 0: final only

  bool operator==(const RunSettings&) const = default;
};

struct Settings {
  DataSettings data;
  ModelSettings model;
  ContrastiveSettings contrastive;
  AisSettings ais;
  IadmSettings iadm;
  OptimSettings optim;
  RunSettings run;

  bool operator==(const Settings&) const = default;

  // Throws ConfigError listing every violated constraint at once.
  void validate() const;

  // Canonical document text; resolve(parse_text(snapshot())) reproduces
  // these settings field for field.
  std::string snapshot() const;
};

// Applies doc entries, then `section.key=value` overrides, over defaults,
// and validates. Unknown keys, unparseable values, and constraint
// violations are all collected into one ConfigError.
Settings resolve(const Doc& doc, const std::vector<std::string>& overrides = {});

// Checks that every file input the training path depends on is declared:
// the manifest, and corpus plus caches while the AIS loss is active.
// Value constraints stay with Settings::validate.
void validate_training_inputs(const Settings& s);

// The augmentation policy implied by the data section.
data::AugPolicy aug_policy(const Settings& s);

}  // namespace ppssl::config
