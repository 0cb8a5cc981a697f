#include "vreid/linalg.hpp"

#include <cassert>

namespace vreid {

// i-k-j loop order keeps the inner traversal contiguous for both operands.
Mat matmul(const Mat& a, const Mat& b) {
  assert(a.cols == b.rows);
  Mat c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ai = a[i];
    double* ci = c[i];
    for (std::size_t k = 0; k < a.cols; ++k) {
      double v = ai[k];
      if (v == 0.0) continue;
      const double* bk = b[k];
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += v * bk[j];
    }
  }
  return c;
}

Mat matmul_at_b(const Mat& a, const Mat& b) {
  assert(a.rows == b.rows);
  Mat c(a.cols, b.cols);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* ak = a[k];
    const double* bk = b[k];
    for (std::size_t i = 0; i < a.cols; ++i) {
      double v = ak[i];
      if (v == 0.0) continue;
      double* ci = c[i];
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += v * bk[j];
    }
  }
  return c;
}

Mat matmul_a_bt(const Mat& a, const Mat& b) {
  assert(a.cols == b.cols);
  Mat c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ai = a[i];
    double* ci = c[i];
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* bj = b[j];
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
      ci[j] = s;
    }
  }
  return c;
}

}  // namespace vreid
