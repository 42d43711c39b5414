#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cdcl/matrix.hpp"

namespace cdcl {

/// Vectors with norm at or below this are treated as zero.
inline constexpr double kZeroNormCutoff = 1e-12;

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);

/// Returns v / ||v||_2. Throws ZeroVector when ||v||_2 <= kZeroNormCutoff.
std::vector<double> l2_normalize(std::span<const double> v);

/// Normalizes every row; `norms` (optional) receives the pre-normalization row norms.
Matrix normalize_rows(const Matrix& m, std::vector<double>* norms = nullptr);

/// Backpropagates through row normalization: dv = (dz - z (z . dz)) / ||v||.
Matrix normalize_rows_backward(const Matrix& z, std::span<const double> norms, const Matrix& grad_z);

/// Max-shifted log(sum(exp(xs))). Throws EmptyInput on an empty span.
double log_sum_exp(std::span<const double> xs);

/// In-place softmax of a span using the max-shift trick.
void softmax_inplace(std::span<double> xs);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = true;
};

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central-difference gradient check. The relative error per coordinate is
/// |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport finite_diff_check(const ScalarFunction& f, std::span<const double> analytic_grad,
                                  std::span<const double> point, double h, double tol);

}  // namespace cdcl
