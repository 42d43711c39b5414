#pragma once

// Data-parallel dense kernels. Every kernel has a serial reference in
// `kernels::serial` and an OpenMP version in `kernels::parallel`; both compute
// each output element with the same accumulation order, so their results are
// bitwise identical. The unqualified `kernels::` entry points dispatch to the
// parallel versions.

#include <cstddef>
#include <span>
#include <vector>

#include "cdcl/matrix.hpp"

namespace cdcl::kernels {

/// Result of a nearest-center assignment by cosine similarity.
struct Assignment {
  std::vector<int> labels;
  std::vector<double> similarities;
};

namespace serial {
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix matmul_nn(const Matrix& a, const Matrix& b);  // a * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
// Rows of `points` and `centers` are assumed unit-norm; ties go to the lowest index.
Assignment assign_nearest(const Matrix& points, const Matrix& centers);
}  // namespace serial

namespace parallel {
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_nn(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Assignment assign_nearest(const Matrix& points, const Matrix& centers);
}  // namespace parallel

using parallel::assign_nearest;
using parallel::matmul_nn;
using parallel::matmul_nt;
using parallel::matmul_tn;

namespace detail {

inline double dot_strided(const double* a, std::size_t a_stride, const double* b, std::size_t b_stride,
                          std::size_t n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += a[k * a_stride] * b[k * b_stride];
  return acc;
}

// Work below this many multiply-adds stays on one thread.
inline constexpr std::size_t kParallelThreshold = 1u << 14;

void check_nt(const Matrix& a, const Matrix& b);
void check_nn(const Matrix& a, const Matrix& b);
void check_tn(const Matrix& a, const Matrix& b);

}  // namespace detail
}  // namespace cdcl::kernels
