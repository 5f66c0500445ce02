#include "ppssl/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace ppssl {

namespace {
std::size_t checked_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw StructuralError("negative tensor dimension in " + Tensor::shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
  if (checked_size(shape) != data.size())
    throw StructuralError("tensor data length " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw StructuralError("item() on tensor of shape " + shape_str());
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::add_scaled(const Tensor& other, double a) {
  check_same_shape(*this, other, "add_scaled");
  const double* src = other.data();
  double* dst = data();
  const std::size_t n = data_.size();
  for (std::size_t i = 0; i < n; ++i) dst[i] += a * src[i];
}

std::string Tensor::shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b))
    throw StructuralError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " +
                          b.shape_str());
}

}  // namespace ppssl
