#include <cstdint>

#include "cdcl/error.hpp"
#include "cdcl/kernels.hpp"

namespace cdcl::kernels::parallel {

namespace {
using Index = std::int64_t;

bool worth_parallel(std::size_t rows, std::size_t cols, std::size_t inner) {
  return rows > 1 && rows * cols * inner >= detail::kParallelThreshold;
}
}  // namespace

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  detail::check_nt(a, b);
  Matrix out(a.rows(), b.rows());
  const std::size_t n = a.cols();
  const Index rows = static_cast<Index>(a.rows());
  const double* pa = a.flat().data();
  const double* pb = b.flat().data();
  double* po = out.flat().data();
  const std::size_t bc = b.rows();
#pragma omp parallel for schedule(static) if (worth_parallel(a.rows(), bc, n))
  for (Index i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < bc; ++j) {
      po[static_cast<std::size_t>(i) * bc + j] = detail::dot_strided(pa + static_cast<std::size_t>(i) * n, 1, pb + j * n, 1, n);
    }
  }
  return out;
}

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
  detail::check_nn(a, b);
  Matrix out(a.rows(), b.cols());
  const std::size_t n = a.cols();
  const std::size_t oc = b.cols();
  const Index rows = static_cast<Index>(a.rows());
  const double* pa = a.flat().data();
  const double* pb = b.flat().data();
  double* po = out.flat().data();
#pragma omp parallel for schedule(static) if (worth_parallel(a.rows(), oc, n))
  for (Index i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < oc; ++j) {
      po[static_cast<std::size_t>(i) * oc + j] = detail::dot_strided(pa + static_cast<std::size_t>(i) * n, 1, pb + j, oc, n);
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  detail::check_tn(a, b);
  Matrix out(a.cols(), b.cols());
  const std::size_t n = a.rows();
  const std::size_t ac = a.cols();
  const std::size_t oc = b.cols();
  const Index rows = static_cast<Index>(ac);
  const double* pa = a.flat().data();
  const double* pb = b.flat().data();
  double* po = out.flat().data();
#pragma omp parallel for schedule(static) if (worth_parallel(ac, oc, n))
  for (Index i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < oc; ++j) {
      po[static_cast<std::size_t>(i) * oc + j] = detail::dot_strided(pa + i, ac, pb + j, oc, n);
    }
  }
  return out;
}

Assignment assign_nearest(const Matrix& points, const Matrix& centers) {
  detail::check_nt(points, centers);
  if (centers.rows() == 0) throw Error(ErrorCode::EmptyInput, "assign_nearest needs at least one center");
  Assignment out{std::vector<int>(points.rows(), 0), std::vector<double>(points.rows(), 0.0)};
  const std::size_t d = points.cols();
  const std::size_t k = centers.rows();
  const Index n = static_cast<Index>(points.rows());
  const double* pp = points.flat().data();
  const double* pc = centers.flat().data();
#pragma omp parallel for schedule(static) if (worth_parallel(points.rows(), k, d))
  for (Index i = 0; i < n; ++i) {
    const double* zi = pp + static_cast<std::size_t>(i) * d;
    int best = 0;
    double best_sim = detail::dot_strided(zi, 1, pc, 1, d);
    for (std::size_t m = 1; m < k; ++m) {
      const double s = detail::dot_strided(zi, 1, pc + m * d, 1, d);
      if (s > best_sim) {
        best_sim = s;
        best = static_cast<int>(m);
      }
    }
    out.labels[static_cast<std::size_t>(i)] = best;
    out.similarities[static_cast<std::size_t>(i)] = best_sim;
  }
  return out;
}

}  // namespace cdcl::kernels::parallel
