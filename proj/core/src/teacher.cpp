#include "ppssl/teacher.hpp"

#include <cctype>
#include <cmath>

#include "ppssl/rng.hpp"

namespace ppssl::teacher {

namespace {

Tensor normalized_or_throw(Tensor v, const std::string& what) {
  double n = 0.0;
  for (std::int64_t i = 0; i < v.size(); ++i) n += v[i] * v[i];
  n = std::sqrt(n);
  if (n < 1e-12) throw ContractError(what + ": zero-norm embedding");
  for (std::int64_t i = 0; i < v.size(); ++i) v[i] /= n;
  return v;
}

Tensor unit_gaussian(int dim, Rng rng) {
  Tensor v({dim});
  for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  return normalized_or_throw(std::move(v), "fixture draw");
}

void check_unit_rows(const Tensor& rows, const std::string& path) {
  const int d = rows.dim(1);
  for (int r = 0; r < rows.dim(0); ++r) {
    double n = 0.0;
    for (int j = 0; j < d; ++j) {
      const double v = rows[std::int64_t(r) * d + j];
      n += v * v;
    }
    if (std::abs(std::sqrt(n) - 1.0) > 1e-5)
      throw ContractError(path + ": row " + std::to_string(r) + " is not unit-norm");
  }
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string description_key(const std::string& description) {
  static const char* hex = "0123456789abcdef";
  std::uint64_t h = fnv1a64(description.data(), description.size());
  std::string out = "txt:";
  for (int i = 15; i >= 0; --i) out += hex[(h >> (4 * i)) & 0xf];
  return out;
}

CacheProvider::CacheProvider(const std::string& image_matrix_path,
                             const std::string& text_matrix_path)
    : image_path_(image_matrix_path), text_path_(text_matrix_path) {
  if (image_path_.empty() && text_path_.empty())
    throw ConfigError("teacher cache: no embedding file given");
  auto load = [&](const std::string& path, ppse::Table& table,
                  std::unordered_map<std::string, int>& index) {
    table = ppse::read_table(path, ppse::sidecar_path(path, ".ids"));
    check_unit_rows(table.rows, path);
    for (int r = 0; r < table.rows.dim(0); ++r) {
      if (!index.emplace(table.ids[r], r).second)
        throw ParseError(path + ": duplicate id '" + table.ids[r] + "'");
    }
    if (dim_ == 0) dim_ = table.rows.dim(1);
    if (dim_ != table.rows.dim(1))
      throw StructuralError("teacher caches disagree on dim: " + std::to_string(dim_) + " vs " +
                            std::to_string(table.rows.dim(1)) + " in " + path);
  };
  if (!image_path_.empty()) load(image_path_, image_table_, image_index_);
  if (!text_path_.empty()) load(text_path_, text_table_, text_index_);
}

Tensor CacheProvider::lookup(const ppse::Table& table,
                             const std::unordered_map<std::string, int>& index,
                             const std::string& key, const std::string& what) const {
  const auto it = index.find(key);
  if (it == index.end()) throw IoError("teacher cache miss: no " + what + " embedding for '" + key + "'");
  const int d = table.rows.dim(1);
  Tensor v({d});
  for (int j = 0; j < d; ++j) v[j] = table.rows[std::int64_t(it->second) * d + j];
  return v;
}

Tensor CacheProvider::image_embedding(const Tensor&, const std::string& source_id) const {
  if (image_path_.empty()) throw ConfigError("teacher cache: no image embedding file configured");
  return lookup(image_table_, image_index_, source_id, "image");
}

Tensor CacheProvider::text_embedding(const std::string& description) const {
  if (text_path_.empty()) throw ConfigError("teacher cache: no text embedding file configured");
  return lookup(text_table_, text_index_, description_key(description), "text");
}

void FixtureConfig::validate() const {
  std::vector<std::string> issues;
  if (dim < 2) issues.push_back("teacher.dim must be >= 2");
  if (num_classes < 1) issues.push_back("teacher.num_classes must be >= 1");
  if (!(kappa >= 0.0 && kappa <= 1.0)) issues.push_back("teacher.kappa must lie in [0, 1]");
  if (!issues.empty()) throw ConfigError("invalid fixture teacher config", issues);
}

FixtureProvider::FixtureProvider(const FixtureConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  anchors_.reserve(cfg_.num_classes);
  for (int c = 0; c < cfg_.num_classes; ++c)
    anchors_.push_back(unit_gaussian(cfg_.dim, Rng::substream(cfg_.seed, "fixture_anchor", c)));
}

const Tensor& FixtureProvider::anchor(int cls) const {
  if (cls < 0 || cls >= int(anchors_.size()))
    throw StructuralError("fixture anchor index out of range: " + std::to_string(cls));
  return anchors_[cls];
}

Tensor FixtureProvider::image_embedding(const Tensor& original, const std::string& source_id) const {
  const int cls = parse_synthetic_class(source_id);
  if (cls >= cfg_.num_classes)
    throw ContractError("fixture teacher configured for " + std::to_string(cfg_.num_classes) +
                        " classes, saw '" + source_id + "'");
  const std::uint64_t content =
      fnv1a64(original.data(), static_cast<std::size_t>(original.size()) * sizeof(double));
  Tensor noise = unit_gaussian(cfg_.dim, Rng::substream(cfg_.seed, "fixture_image_noise", content));
  const double k = cfg_.kappa, residual = std::sqrt(std::max(0.0, 1.0 - k * k));
  Tensor v({cfg_.dim});
  for (int i = 0; i < cfg_.dim; ++i) v[i] = k * anchors_[cls][i] + residual * noise[i];
  return normalized_or_throw(std::move(v), "fixture image embedding");
}

Tensor FixtureProvider::text_embedding(const std::string& description) const {
  const std::uint64_t h = fnv1a64(description.data(), description.size());
  return unit_gaussian(cfg_.dim, Rng::substream(cfg_.seed, "fixture_text", h));
}

int parse_synthetic_class(const std::string& source_id) {
  const auto pos = source_id.find("class_");
  if (pos != std::string::npos) {
    std::size_t i = pos + 6;
    long v = 0;
    bool any = false;
    while (i < source_id.size() && std::isdigit(static_cast<unsigned char>(source_id[i]))) {
      v = v * 10 + (source_id[i] - '0');
      any = true;
      ++i;
    }
    if (any) return static_cast<int>(v);
  }
  throw ContractError("cannot read a class id from source_id '" + source_id +
                      "' (fixture teacher expects the synthetic class_NN layout)");
}

}  // namespace ppssl::teacher
