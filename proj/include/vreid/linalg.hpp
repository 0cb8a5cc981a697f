#ifndef VREID_LINALG_HPP
#define VREID_LINALG_HPP

#include <cstddef>
#include <vector>

namespace vreid {

// Dense row-major double matrix. Sized for head training at desk scale;
// no BLAS dependency on purpose.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double* operator[](std::size_t r) { return a.data() + r * cols; }
  const double* operator[](std::size_t r) const { return a.data() + r * cols; }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// C = A * B
Mat matmul(const Mat& a, const Mat& b);
// C = A^T * B
Mat matmul_at_b(const Mat& a, const Mat& b);
// C = A * B^T
Mat matmul_a_bt(const Mat& a, const Mat& b);

}  // namespace vreid

#endif  // VREID_LINALG_HPP
