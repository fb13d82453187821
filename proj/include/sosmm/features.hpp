#pragma once

#include <cmath>
#include <utility>

#include "sosmm/linalg.hpp"
#include "sosmm/simpleset.hpp"

namespace sosmm {

// Empirical feature map built from well-positioned points: coordinates of the
// abstract features in the basis induced by the leading kernel matrix.
// `power` selects the kernel: 1 for k (m-dimensional features), 2 for k^2
// (m'-dimensional features spanning the phi phi^T space).
class EmpiricalBasis {
public:
  EmpiricalBasis() = default;

  EmpiricalBasis(const SimpleSet& set, const Matrix& base_pts, int power)
      : set_(set), base_(base_pts), power_(power) {
    Matrix k = kernel_matrix(set, base_);
    k = pow_entries(k);
    const double lmax = eig_sym(k).values.maxCoeff();
    if (min_eig(k) <= 1e-10 * std::max(1.0, lmax)) {
      throw ConditioningError("empirical basis: leading kernel matrix is singular");
    }
    k_inv_sqrt_ = inv_sqrt(SymMatrix(k), 1e-12).mat();
  }

  int dim() const { return static_cast<int>(base_.rows()); }
  const Matrix& base_points() const { return base_; }
  const Matrix& k_inv_sqrt() const { return k_inv_sqrt_; }

  // Feature vector of an arbitrary point of the set.
  Vector operator()(const Vector& x) const {
    Vector kx(base_.rows());
    for (int i = 0; i < base_.rows(); ++i)
      kx[i] = pow_val(set_.kernel_unchecked(base_.row(i).transpose(), x));
    return k_inv_sqrt_ * kx;
  }

  // Feature matrix of a point list (rows = feature vectors).
  Matrix features(const Matrix& pts) const {
    Matrix l = kernel_matrix(set_, pts, base_);
    l = pow_entries(l);
    return l * k_inv_sqrt_;
  }

private:
  Matrix pow_entries(Matrix k) const {
    if (power_ == 2) k = k.cwiseProduct(k).eval();
    return k;
  }
  double pow_val(double v) const { return power_ == 2 ? v * v : v; }

  SimpleSet set_ = SimpleSet::make(SetKind::Discrete, 1, 0);
  Matrix base_;
  int power_ = 1;
  Matrix k_inv_sqrt_;
};

// Phi = L K^{-1/2}: rows are the empirical features of every point of `pts`,
// built on the leading m points. Phi Phi^T reproduces the full kernel matrix
// whenever the features span.
inline Matrix empirical_features(const SimpleSet& set, const PointSet& pts) {
  const int m = set.dims().m;
  if (pts.size() < m) throw ConditioningError("empirical_features: needs at least m points");
  const EmpiricalBasis basis(set, pts.pts.topRows(m), 1);
  return basis.features(pts.pts);
}

inline EmpiricalBasis feature_basis(const SimpleSet& set, const PointSet& pts) {
  const int m = set.dims().m;
  if (pts.size() < m) throw ConditioningError("feature_basis: needs at least m points");
  return EmpiricalBasis(set, pts.pts.topRows(m), 1);
}

// Basis for the squared kernel, spanning the m'-dimensional phi phi^T space.
inline EmpiricalBasis squared_feature_basis(const SimpleSet& set, const PointSet& pts) {
  const int mp = set.dims().m_prime;
  if (pts.size() < mp) throw ConditioningError("squared_feature_basis: needs at least m' points");
  return EmpiricalBasis(set, pts.pts.topRows(mp), 2);
}

}  // namespace sosmm
