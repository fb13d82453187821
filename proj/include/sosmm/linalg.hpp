#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <utility>

#include "sosmm/errors.hpp"

namespace sosmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Dense symmetric matrix. The upper triangle is authoritative: construction
// checks that the input is symmetric up to 1e-12 * ||A||_F and then
// symmetrizes exactly.
class SymMatrix {
public:
  SymMatrix() = default;

  explicit SymMatrix(Matrix a, double tol = 1e-12) {
    if (a.rows() != a.cols()) throw InvalidProblem("SymMatrix: not square");
    const double scale = a.norm();
    const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
    if (asym > tol * std::max(1.0, scale)) {
      throw InvalidProblem("SymMatrix: input is not symmetric");
    }
    m_ = 0.5 * (a + a.transpose());
  }

  static SymMatrix identity(int n) { return SymMatrix(Matrix::Identity(n, n)); }

  int order() const { return static_cast<int>(m_.rows()); }
  const Matrix& mat() const { return m_; }
  operator const Matrix&() const { return m_; }

private:
  Matrix m_;
};

struct EigSym {
  Vector values;   // ascending
  Matrix vectors;  // columns
};

// Symmetric eigendecomposition (tridiagonalization + QL); eigenvalues come
// back in ascending order, which keeps runs reproducible.
inline EigSym eig_sym(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
  if (es.info() != Eigen::Success) throw Error("eig_sym: eigensolver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

inline double min_eig(const Matrix& a) { return eig_sym(a).values.minCoeff(); }

inline bool is_psd(const Matrix& a, double tol) {
  const EigSym e = eig_sym(a);
  const double lmax = e.values.cwiseAbs().maxCoeff();
  return e.values.minCoeff() >= -tol * std::max(1.0, lmax);
}

// Moore-Penrose inverse square root of a PSD matrix: eigenvalues below
// rank_tol * lambda_max are treated as zero. X satisfies X K X = projector
// onto range(K).
inline SymMatrix inv_sqrt(const SymMatrix& k, double rank_tol = 1e-10) {
  const EigSym e = eig_sym(k.mat());
  const double lmax = e.values.maxCoeff();
  if (lmax < 0.0) throw NotPsdError("inv_sqrt: matrix is negative");
  if (e.values.minCoeff() < -1e-8 * std::max(1.0, lmax)) {
    throw NotPsdError("inv_sqrt: matrix has a significantly negative eigenvalue");
  }
  Vector d = Vector::Zero(e.values.size());
  for (int i = 0; i < d.size(); ++i) {
    if (e.values[i] > rank_tol * std::max(lmax, 0.0)) d[i] = 1.0 / std::sqrt(e.values[i]);
  }
  Matrix x = e.vectors * d.asDiagonal() * e.vectors.transpose();
  return SymMatrix(std::move(x), 1e-9);
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidProblem("hadamard: dimension mismatch");
  return a.cwiseProduct(b);
}

// svec with sqrt(2)-scaled off-diagonals, so <A,B> = svec(A).svec(B).
inline int svec_dim(int n) { return n * (n + 1) / 2; }

inline Vector svec(const Matrix& a) {
  const int n = static_cast<int>(a.rows());
  Vector v(svec_dim(n));
  int t = 0;
  const double s2 = std::sqrt(2.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) v[t++] = (i == j) ? a(i, j) : s2 * a(i, j);
  return v;
}

inline Matrix smat(const Vector& v, int n) {
  Matrix a(n, n);
  int t = 0;
  const double is2 = 1.0 / std::sqrt(2.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) {
      const double x = (i == j) ? v[t] : is2 * v[t];
      a(i, j) = x;
      a(j, i) = x;
      ++t;
    }
  return a;
}

// Numerical rank: count of eigenvalues above rel_tol * lambda_max.
inline int psd_rank(const Matrix& a, double rel_tol) {
  const EigSym e = eig_sym(a);
  const double lmax = e.values.maxCoeff();
  if (lmax <= 0.0) return 0;
  int r = 0;
  for (int i = 0; i < e.values.size(); ++i)
    if (e.values[i] > rel_tol * lmax) ++r;
  return r;
}

}  // namespace sosmm
