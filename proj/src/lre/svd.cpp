#include "linfreq/lre/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "linfreq/error.hpp"

namespace linfreq::lre {

namespace {

// Requires rows >= cols.
Svd jacobi_tall(const Matrix& a) {
  const Eigen::Index n = a.cols();
  Matrix u = a;
  Matrix v = Matrix::Identity(n, n);
  constexpr double kEps = 1e-15;
  for (int sweep = 0; sweep < 80; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = u.col(p).squaredNorm();
        const double beta = u.col(q).squaredNorm();
        const double gamma = u.col(p).dot(u.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= kEps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (auto* m : {&u, &v}) {
          const Vector mp = m->col(p);
          m->col(p) = c * mp - s * m->col(q);
          m->col(q) = s * mp + c * m->col(q);
        }
      }
    }
    if (!rotated) break;
  }
  Vector sigma(n);
  for (Eigen::Index j = 0; j < n; ++j) sigma(j) = u.col(j).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return sigma(x) > sigma(y); });
  Svd out{Matrix(a.rows(), n), Vector(n), Matrix(n, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    out.sigma(j) = sigma(src);
    out.u.col(j) = sigma(src) > 0 ? Vector(u.col(src) / sigma(src)) : Vector::Zero(a.rows());
    out.v.col(j) = v.col(src);
  }
  return out;
}

}  // namespace

Svd jacobi_svd(const Matrix& m) {
  if (m.rows() >= m.cols()) return jacobi_tall(m);
  Svd t = jacobi_tall(m.transpose());
  return {std::move(t.v), std::move(t.sigma), std::move(t.u)};
}

Matrix low_rank_pinv(const Svd& svd, std::size_t rank) {
  const auto k = static_cast<std::size_t>(svd.sigma.size());
  if (rank < 1 || rank > k) {
    throw InvalidArgument("pseudoinverse rank " + std::to_string(rank) + " outside [1, " +
                          std::to_string(k) + "]");
  }
  Matrix pinv = Matrix::Zero(svd.v.rows(), svd.u.rows());
  const double cutoff = 1e-12 * (k > 0 ? svd.sigma(0) : 0.0);
  for (std::size_t i = 0; i < rank; ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    if (!(svd.sigma(j) > cutoff)) break;
    pinv.noalias() += svd.v.col(j) * svd.u.col(j).transpose() / svd.sigma(j);
  }
  return pinv;
}

Matrix low_rank_pinv(const Matrix& w, std::size_t rank) {
  const auto k = static_cast<std::size_t>(std::min(w.rows(), w.cols()));
  if (rank < 1 || rank > k) {
    throw InvalidArgument("pseudoinverse rank " + std::to_string(rank) + " outside [1, " +
                          std::to_string(k) + "]");
  }
  return low_rank_pinv(jacobi_svd(w), rank);
}

}  // namespace linfreq::lre
