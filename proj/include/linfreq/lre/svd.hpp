#pragma once

#include "linfreq/lre/model.hpp"

namespace linfreq::lre {

// Thin SVD M = U diag(sigma) V^T with sigma sorted descending.
// U is m x k, V is n x k, k = min(m, n).
struct Svd {
  Matrix u;
  Vector sigma;
  Matrix v;
};

// One-sided Jacobi (Hestenes) orthogonalization.
Svd jacobi_svd(const Matrix& m);

// Pseudoinverse keeping the top `rank` singular triplets. Singular values
// below 1e-12 * sigma_max are treated as zero. Throws unless
// 1 <= rank <= min(rows, cols).
Matrix low_rank_pinv(const Matrix& w, std::size_t rank);
Matrix low_rank_pinv(const Svd& svd, std::size_t rank);

}  // namespace linfreq::lre
