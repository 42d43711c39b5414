#include "cdcl/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cdcl/error.hpp"

namespace cdcl {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptyPositives: return "EmptyPositives";
    case ErrorCode::TemperatureNonPositive: return "TemperatureNonPositive";
    case ErrorCode::MissingPseudoLabels: return "MissingPseudoLabels";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::NotPrepared: return "NotPrepared";
    case ErrorCode::InvalidRatio: return "InvalidRatio";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorCode::DimensionMismatch, "matrix data length " + std::to_string(data_.size()) +
                                                  " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw Error(ErrorCode::DimensionMismatch, "row index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols_), cols_, out.row(i).begin());
  }
  return out;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix& Matrix::operator+=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) {
    throw Error(ErrorCode::DimensionMismatch, "matrix add shape mismatch");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "dot of unequal lengths");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> v) {
  // Scale by the largest magnitude so tiny or huge entries do not under/overflow.
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) return 0.0;
  double acc = 0.0;
  for (double x : v) {
    const double r = x / scale;
    acc += r * r;
  }
  return scale * std::sqrt(acc);
}

std::vector<double> l2_normalize(std::span<const double> v) {
  const double n = norm2(v);
  if (!(n > kZeroNormCutoff)) throw Error(ErrorCode::ZeroVector, "cannot normalize a vector with norm " + std::to_string(n));
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

Matrix normalize_rows(const Matrix& m, std::vector<double>* norms) {
  Matrix out(m.rows(), m.cols());
  if (norms) norms->assign(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double n = norm2(m.row(r));
    if (!(n > kZeroNormCutoff)) {
      throw Error(ErrorCode::ZeroVector, "row " + std::to_string(r) + " has norm " + std::to_string(n));
    }
    auto src = m.row(r);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) dst[c] = src[c] / n;
    if (norms) (*norms)[r] = n;
  }
  return out;
}

Matrix normalize_rows_backward(const Matrix& z, std::span<const double> norms, const Matrix& grad_z) {
  if (z.rows() != grad_z.rows() || z.cols() != grad_z.cols() || norms.size() != z.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "normalize_rows_backward shapes");
  }
  Matrix out(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto zr = z.row(r);
    auto gr = grad_z.row(r);
    const double proj = dot(zr, gr);
    auto o = out.row(r);
    for (std::size_t c = 0; c < z.cols(); ++c) o[c] = (gr[c] - zr[c] * proj) / norms[r];
  }
  return out;
}

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) throw Error(ErrorCode::EmptyInput, "log_sum_exp of an empty sequence");
  const double m = *std::max_element(xs.begin(), xs.end());
  if (std::isinf(m)) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

void softmax_inplace(std::span<double> xs) {
  if (xs.empty()) return;
  const double m = *std::max_element(xs.begin(), xs.end());
  double acc = 0.0;
  for (double& x : xs) {
    x = std::exp(x - m);
    acc += x;
  }
  for (double& x : xs) x /= acc;
}

GradCheckReport finite_diff_check(const ScalarFunction& f, std::span<const double> analytic_grad,
                                  std::span<const double> point, double h, double tol) {
  if (analytic_grad.size() != point.size()) {
    throw Error(ErrorCode::DimensionMismatch, "gradient and point lengths differ");
  }
  GradCheckReport report;
  std::vector<double> x(point.begin(), point.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic_grad[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    double rel = std::abs(a - numeric) / denom;
    if (std::isnan(rel)) rel = std::numeric_limits<double>::infinity();
    if (rel > report.max_rel_error || (i == 0 && rel >= report.max_rel_error)) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace cdcl
