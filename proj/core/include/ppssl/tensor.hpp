#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ppssl {

// Base error type for the library. Subtypes let the CLI map failures to
// exit codes without string matching.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration / precondition on a user-supplied parameter.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& what) : Error(what) {}
  ConfigError(const std::string& what, std::vector<std::string> issues)
      : Error(what), issues_(std::move(issues)) {}
  const std::vector<std::string>& issues() const { return issues_; }

private:
  std::vector<std::string> issues_;
};

// Malformed input file (manifest, corpus, cache, checkpoint payloads).
class ParseError : public Error {
public:
  explicit ParseError(const std::string& what) : Error(what) {}
};

// Shape or parameter-list mismatch between two model structures.
class StructuralError : public Error {
public:
  explicit StructuralError(const std::string& what) : Error(what) {}
};

// Filesystem / codec failure.
class IoError : public Error {
public:
  explicit IoError(const std::string& what) : Error(what) {}
};

// Violated runtime contract (non-unit rows pushed to the queue, missing
// teacher embedding, non-finite loss, ...).
class ContractError : public Error {
public:
  explicit ContractError(const std::string& what) : Error(what) {}
};

// Dense row-major double tensor. Small fixed-rank helper, not a general
// broadcasting library: ops that need structure interpret the shape
// themselves (NCHW for images and feature maps, rows for matrices).
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, double fill);
  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor from_data(std::vector<int> shape, std::vector<double> data);
  static Tensor scalar(double v) { return Tensor({1}, v); }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  double item() const;

  void fill(double v);
  void zero() { fill(0.0); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  // In-place axpy: this += a * other. Shapes must match.
  void add_scaled(const Tensor& other, double a);

  std::string shape_str() const;
  static std::string shape_str(const std::vector<int>& shape);

private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

// Throws StructuralError unless shapes match.
void check_same_shape(const Tensor& a, const Tensor& b, const char* where);

}  // namespace ppssl
