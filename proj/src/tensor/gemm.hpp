#pragma once

#include <cstddef>

namespace magdiff::detail {

/// C[m,n] (+)= op(A) · op(B), all row-major. op(A) is [m,k], op(B) is [k,n].
template <typename T>
void gemm(bool transpose_a, bool transpose_b, std::size_t m, std::size_t n, std::size_t k,
          const T* a, const T* b, T* c, bool accumulate);

}  // namespace magdiff::detail
