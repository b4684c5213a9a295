#pragma once

#include <Eigen/Core>

namespace xview::detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-major C(MxN) = alpha * op(A) * op(B) + beta * C with explicit leading
/// dimensions (row strides) of the stored matrices. op(A) is MxK, op(B) is KxN.
template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda, const T* b, int ldb, T beta,
          T* c, int ldc) {
  using Stride = Eigen::OuterStride<>;
  using Map = Eigen::Map<RowMat<T>, 0, Stride>;
  using CMap = Eigen::Map<const RowMat<T>, 0, Stride>;
  Map cm(c, m, n, Stride(ldc));
  if (beta == T(0)) {
    cm.setZero();
  } else if (beta != T(1)) {
    cm *= beta;
  }
  if (!trans_a && !trans_b) {
    cm.noalias() += alpha * (CMap(a, m, k, Stride(lda)) * CMap(b, k, n, Stride(ldb)));
  } else if (trans_a && !trans_b) {
    cm.noalias() += alpha * (CMap(a, k, m, Stride(lda)).transpose() * CMap(b, k, n, Stride(ldb)));
  } else if (!trans_a && trans_b) {
    cm.noalias() += alpha * (CMap(a, m, k, Stride(lda)) * CMap(b, n, k, Stride(ldb)).transpose());
  } else {
    cm.noalias() += alpha * (CMap(a, k, m, Stride(lda)).transpose() * CMap(b, n, k, Stride(ldb)).transpose());
  }
}

/// Packed operands.
template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, const T* b, T beta, T* c) {
  gemm<T>(trans_a, trans_b, m, n, k, alpha, a, trans_a ? m : k, b, trans_b ? k : n, beta, c, n);
}

}  // namespace xview::detail
