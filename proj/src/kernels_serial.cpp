#include <string>

#include "cdcl/error.hpp"
#include "cdcl/kernels.hpp"

namespace cdcl::kernels {
namespace detail {

namespace {
[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw Error(ErrorCode::DimensionMismatch, std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                                "x" + std::to_string(b.cols()));
}
}  // namespace

void check_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
}
void check_nn(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_error("matmul_nn", a, b);
}
void check_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_error("matmul_tn", a, b);
}

}  // namespace detail

namespace serial {

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  detail::check_nt(a, b);
  Matrix out(a.rows(), b.rows());
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      out(i, j) = detail::dot_strided(a.row(i).data(), 1, b.row(j).data(), 1, n);
    }
  }
  return out;
}

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
  detail::check_nn(a, b);
  Matrix out(a.rows(), b.cols());
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      out(i, j) = detail::dot_strided(a.row(i).data(), 1, b.flat().data() + j, b.cols(), n);
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  detail::check_tn(a, b);
  Matrix out(a.cols(), b.cols());
  const std::size_t n = a.rows();
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      out(i, j) = detail::dot_strided(a.flat().data() + i, a.cols(), b.flat().data() + j, b.cols(), n);
    }
  }
  return out;
}

Assignment assign_nearest(const Matrix& points, const Matrix& centers) {
  detail::check_nt(points, centers);
  if (centers.rows() == 0) throw Error(ErrorCode::EmptyInput, "assign_nearest needs at least one center");
  Assignment out{std::vector<int>(points.rows(), 0), std::vector<double>(points.rows(), 0.0)};
  for (std::size_t i = 0; i < points.rows(); ++i) {
    int best = 0;
    double best_sim = detail::dot_strided(points.row(i).data(), 1, centers.row(0).data(), 1, points.cols());
    for (std::size_t m = 1; m < centers.rows(); ++m) {
      const double s = detail::dot_strided(points.row(i).data(), 1, centers.row(m).data(), 1, points.cols());
      if (s > best_sim) {
        best_sim = s;
        best = static_cast<int>(m);
      }
    }
    out.labels[i] = best;
    out.similarities[i] = best_sim;
  }
  return out;
}

}  // namespace serial
}  // namespace cdcl::kernels
