#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "error.hpp"

namespace roadeb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Dense symmetric matrix; symmetry checked on construction.
class SymMatrix {
public:
  SymMatrix() = default;
  explicit SymMatrix(Matrix a, double tol = 1e-12) : a_(std::move(a)) {
    if (a_.rows() != a_.cols()) throw InputError("matrix is not square");
    double scale = a_.size() ? a_.cwiseAbs().maxCoeff() : 0.0;
    double asym = a_.size() ? (a_ - a_.transpose()).cwiseAbs().maxCoeff() : 0.0;
    if (asym > tol * std::max(scale, 1e-300) && asym > 0.0)
      throw InputError("matrix is not symmetric");
    a_ = 0.5 * (a_ + a_.transpose());
  }

  Eigen::Index dim() const { return a_.rows(); }
  const Matrix& mat() const { return a_; }
  operator const Matrix&() const { return a_; }

private:
  Matrix a_;
};

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

inline Matrix solve_spd(const SymMatrix& A, const Matrix& B) {
  if (A.dim() != B.rows()) throw InputError("solve_spd: dimension mismatch");
  Eigen::LLT<Matrix> llt(A.mat());
  if (llt.info() != Eigen::Success) throw NumericalError("not positive definite");
  return llt.solve(B);
}

struct EigenDecomp {
  Vector values;  // ascending
  Matrix vectors; // columns orthonormal
};

inline EigenDecomp sym_eigen(const SymMatrix& A) {
  if (A.dim() == 0) return {Vector(0), Matrix(0, 0)};
  Eigen::SelfAdjointEigenSolver<Matrix> es(A.mat());
  if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

inline Vector sym_eigenvalues(const SymMatrix& A) {
  if (A.dim() == 0) return Vector(0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(A.mat(), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed");
  return es.eigenvalues();
}

inline SymMatrix pinv_psd(const SymMatrix& A, double rank_tol = 1e-10) {
  auto [vals, vecs] = sym_eigen(A);
  const Eigen::Index n = A.dim();
  if (n == 0) return SymMatrix(Matrix(0, 0));
  double top = std::max(vals.cwiseAbs().maxCoeff(), 0.0);
  double cut = rank_tol * top;
  Vector inv = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (vals(i) < -cut) throw NumericalError("pinv_psd: matrix has a negative eigenvalue");
    if (vals(i) > cut) inv(i) = 1.0 / vals(i);
  }
  return SymMatrix(symmetrize(vecs * inv.asDiagonal() * vecs.transpose()));
}

inline double quad_form(const Vector& x, const SymMatrix& A) {
  if (x.size() != A.dim()) throw InputError("quad_form: dimension mismatch");
  return x.dot(A.mat() * x);
}

inline double spectral_norm_sym(const SymMatrix& A) {
  if (A.dim() == 0) return 0.0;
  return sym_eigenvalues(A).cwiseAbs().maxCoeff();
}

inline int numerical_rank(const Matrix& A, double rel_tol = 1e-10) {
  if (A.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(A);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  int rk = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * s(0)) ++rk;
  return rk;
}

// general square solve, used where Sigma may be singular
inline Matrix solve_general(const Matrix& A, const Matrix& B) {
  Eigen::PartialPivLU<Matrix> lu(A);
  Matrix X = lu.solve(B);
  if (!X.allFinite()) throw NumericalError("singular system");
  return X;
}

} // namespace roadeb
