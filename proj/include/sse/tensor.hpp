#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sse {

// Storage precision for model parameters. Arithmetic is always carried out in
// 64-bit; in kFloat32 mode parameter values are rounded to the nearest float
// whenever they are initialized, updated or loaded, so they survive the
// 32-bit checkpoint format unchanged.
enum class Precision { kFloat64, kFloat32 };

Precision precision();
void set_precision(Precision p);

// Rounds `v` to the active storage precision.
double to_storage(double v);

// RAII override of the global precision.
class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p) : saved_(precision()) { set_precision(p); }
  ~PrecisionScope() { set_precision(saved_); }
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision saved_;
};

// Dense row-major 2-D array of doubles.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * cols_, cols_);
  }
  std::span<double> row(std::size_t r) { return std::span<double>(values_).subspan(r * cols_, cols_); }

  const double* data() const { return values_.data(); }
  double* data() { return values_.data(); }

  bool same_shape(const Tensor& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
  bool all_finite() const;
  void fill(double v);

  std::string shape_string() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Plain (untracked) matrix product used by the tape ops and by inference code.
void matmul_into(const Tensor& a, const Tensor& b, Tensor& out);
// out = a * b^T
void matmul_nt_into(const Tensor& a, const Tensor& b, Tensor& out);
// out = a^T * b
void matmul_tn_into(const Tensor& a, const Tensor& b, Tensor& out);
// out += a * b, out += a * b^T, out += a^T * b
void matmul_acc(const Tensor& a, const Tensor& b, Tensor& out);
void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& out);
void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& out);

// Throws NumericError naming `what` when `t` contains NaN or Inf.
void require_finite(const Tensor& t, const char* what);

}  // namespace sse
