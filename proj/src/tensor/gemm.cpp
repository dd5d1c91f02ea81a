#include "gemm.hpp"

#include <Eigen/Core>

namespace magdiff::detail {

template <typename T>
void gemm(bool transpose_a, bool transpose_b, std::size_t m, std::size_t n, std::size_t k,
          const T* a, const T* b, T* c, bool accumulate) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ni = static_cast<Eigen::Index>(n);
  const auto ki = static_cast<Eigen::Index>(k);
  Eigen::Map<Mat> out(c, mi, ni);
  if (!accumulate) out.setZero();
  // Stored shapes: A is [k,m] when transposed, B is [n,k] when transposed.
  if (!transpose_a && !transpose_b) {
    out.noalias() += CMap(a, mi, ki) * CMap(b, ki, ni);
  } else if (transpose_a && !transpose_b) {
    out.noalias() += CMap(a, ki, mi).transpose() * CMap(b, ki, ni);
  } else if (!transpose_a && transpose_b) {
    out.noalias() += CMap(a, mi, ki) * CMap(b, ni, ki).transpose();
  } else {
    out.noalias() += CMap(a, ki, mi).transpose() * CMap(b, ni, ki).transpose();
  }
}

template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t, const float*,
                          const float*, float*, bool);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t, const double*,
                           const double*, double*, bool);

}  // namespace magdiff::detail
