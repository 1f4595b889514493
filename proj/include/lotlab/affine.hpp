#pragma once

#include <Eigen/Dense>
#include <utility>

#include "lotlab/errors.hpp"
#include "lotlab/measures.hpp"

namespace lotlab {

// x |-> matrix * x + shift.
struct AffineMap {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd shift;

  AffineMap(Eigen::MatrixXd a, Eigen::VectorXd b)
      : matrix(std::move(a)), shift(std::move(b)) {
    if (matrix.rows() != matrix.cols() || matrix.rows() != shift.size())
      throw DimensionMismatch("AffineMap: shape mismatch");
  }

  static AffineMap identity(int d) {
    return AffineMap(Eigen::MatrixXd::Identity(d, d),
                     Eigen::VectorXd::Zero(d));
  }

  int dim() const { return static_cast<int>(shift.size()); }

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const {
    return matrix * x + shift;
  }

  // this(other(x)).
  AffineMap compose(const AffineMap& other) const {
    return AffineMap(matrix * other.matrix, matrix * other.shift + shift);
  }

  AffineMap inverse() const {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(matrix);
    if (!lu.isInvertible())
      throw SingularMatrix("AffineMap::inverse: singular matrix");
    Eigen::MatrixXd inv = lu.inverse();
    return AffineMap(inv, -(inv * shift));
  }

  // Symmetric within `sym_tol` and all eigenvalues strictly positive.
  bool is_spd(double sym_tol = 1e-10) const {
    if ((matrix - matrix.transpose()).cwiseAbs().maxCoeff() > sym_tol)
      return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        0.5 * (matrix + matrix.transpose()));
    return es.info() == Eigen::Success && es.eigenvalues().minCoeff() > 0.0;
  }
};

inline DiscreteMeasure pushforward(const DiscreteMeasure& m,
                                   const AffineMap& f) {
  if (f.dim() != m.dim())
    throw DimensionMismatch("pushforward: affine map dimension mismatch");
  return pushforward(m, [&](std::span<const double> x, double* out) {
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), f.dim());
    Eigen::Map<Eigen::VectorXd>(out, f.dim()) = f.matrix * xv + f.shift;
  });
}

// Analytic pushforward of a Gaussian: N(m, S) -> N(Am + b, A S A^T).
inline GaussianMeasure pushforward(const GaussianMeasure& g,
                                   const AffineMap& f) {
  if (f.dim() != g.dim())
    throw DimensionMismatch("pushforward: affine map dimension mismatch");
  Eigen::MatrixXd cov = f.matrix * g.covariance * f.matrix.transpose();
  cov = 0.5 * (cov + cov.transpose().eval());
  return GaussianMeasure(f.matrix * g.mean + f.shift, std::move(cov));
}

}  // namespace lotlab
