#include "sse/tensor.hpp"

#include <algorithm>
#include <Eigen/Core>
#include <atomic>
#include <cmath>
#include <sstream>

#include "sse/errors.hpp"

namespace sse {
namespace {

std::atomic<Precision> g_precision{Precision::kFloat64};

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Tensor& t) { return ConstMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())); }
MutMap view(Tensor& t) { return MutMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())); }

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                       b.shape_string());
}

void ensure_out(Tensor& out, std::size_t rows, std::size_t cols) {
  if (out.rows() != rows || out.cols() != cols) out = Tensor(rows, cols);
}

}  // namespace

Precision precision() { return g_precision.load(std::memory_order_relaxed); }
void set_precision(Precision p) { g_precision.store(p, std::memory_order_relaxed); }

double to_storage(double v) {
  if (precision() == Precision::kFloat32) return static_cast<double>(static_cast<float>(v));
  return v;
}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw DimensionError("Tensor: " + std::to_string(values_.size()) + " values for shape " +
                         shape_string());
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Tensor::from_rows: ragged rows");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(v));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

void matmul_into(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.cols() != b.rows()) shape_fail("matmul", a, b);
  ensure_out(out, a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
}

void matmul_nt_into(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.cols() != b.cols()) shape_fail("matmul_nt", a, b);
  ensure_out(out, a.rows(), b.rows());
  view(out).noalias() = view(a) * view(b).transpose();
}

void matmul_tn_into(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.rows() != b.rows()) shape_fail("matmul_tn", a, b);
  ensure_out(out, a.cols(), b.cols());
  view(out).noalias() = view(a).transpose() * view(b);
}

void matmul_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.cols() != b.rows() || out.rows() != a.rows() || out.cols() != b.cols()) shape_fail("matmul_acc", a, b);
  view(out).noalias() += view(a) * view(b);
}

void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.cols() != b.cols() || out.rows() != a.rows() || out.cols() != b.rows()) shape_fail("matmul_nt_acc", a, b);
  view(out).noalias() += view(a) * view(b).transpose();
}

void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) shape_fail("matmul_tn_acc", a, b);
  view(out).noalias() += view(a).transpose() * view(b);
}

void require_finite(const Tensor& t, const char* what) {
  const auto v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      std::ostringstream os;
      os << what << ": non-finite value " << v[i] << " at (" << i / std::max<std::size_t>(t.cols(), 1) << ","
         << i % std::max<std::size_t>(t.cols(), 1) << ") of " << t.shape_string() << " tensor";
      throw NumericError(os.str());
    }
  }
}

}  // namespace sse
