#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>

#include "ppssl/ppse.hpp"
#include "ppssl/tensor.hpp"

namespace ppssl::teacher {

// Frozen embedding source. Every returned vector is unit-norm and lives in
// a single joint space of dimension dim() shared by the image and text
// sides. Implementations are immutable after construction.
class TeacherProvider {
public:
  virtual ~TeacherProvider() = default;
  virtual int dim() const = 0;

  // Embedding of the deterministic original view of one image, [dim].
  virtual Tensor image_embedding(const Tensor& original, const std::string& source_id) const = 0;

  // Embedding of one corpus description, [dim].
  virtual Tensor text_embedding(const std::string& description) const = 0;
};

std::uint64_t fnv1a64(const void* data, std::size_t len);

// Stable sidecar id for a text cache row.
std::string description_key(const std::string& description);

// Serves embeddings precomputed offline. Image rows are indexed by
// source_id, text rows by description_key. A lookup that the file does not
// cover is an error, never a silent zero vector.
class CacheProvider : public TeacherProvider {
public:
  // Either path may be empty; using the missing side throws.
  CacheProvider(const std::string& image_matrix_path, const std::string& text_matrix_path);

  int dim() const override { return dim_; }
  Tensor image_embedding(const Tensor& original, const std::string& source_id) const override;
  Tensor text_embedding(const std::string& description) const override;

private:
  Tensor lookup(const ppse::Table& table, const std::unordered_map<std::string, int>& index,
                const std::string& key, const std::string& what) const;

  int dim_ = 0;
  std::string image_path_, text_path_;
  ppse::Table image_table_, text_table_;
  std::unordered_map<std::string, int> image_index_, text_index_;
};

struct FixtureConfig {
  int dim = 32;
  int num_classes = 16;  // anchor slots; parsed class ids must stay below this
  std::uint64_t seed = 0;
  double kappa = 0.85;  // weight of the class anchor against content noise

  void validate() const;
};

// Desk-scale stand-in for a pretrained vision-language teacher. Image
// embeddings blend a per-class anchor with noise keyed on the image bytes,
// so same-class images cluster the way a strong teacher's would while
// distinct images still differ. The class is read from the synthetic
// layout's source_id (class_NN/...); everything is a pure function of its
// inputs and the seed.
class FixtureProvider : public TeacherProvider {
public:
  explicit FixtureProvider(const FixtureConfig& cfg);

  int dim() const override { return cfg_.dim; }
  Tensor image_embedding(const Tensor& original, const std::string& source_id) const override;
  Tensor text_embedding(const std::string& description) const override;

  const Tensor& anchor(int cls) const;

private:
  FixtureConfig cfg_;
  std::vector<Tensor> anchors_;
};

// Class id from a synthetic source_id like "class_03/img_017.png".
int parse_synthetic_class(const std::string& source_id);

}  // namespace ppssl::teacher
