#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "lotlab/affine.hpp"
#include "lotlab/errors.hpp"
#include "lotlab/measures.hpp"

namespace lotlab {

namespace detail {

// Symmetric matrix power via eigendecomposition. Eigenvalues are clamped at
// `floor` before the power is applied, so negative powers of nearly singular
// inputs stay finite; callers reject singular inputs beforehand.
inline Eigen::MatrixXd sym_pow(const Eigen::MatrixXd& s, double exponent,
                               double floor = 1e-14) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      0.5 * (s + s.transpose()));
  if (es.info() != Eigen::Success)
    throw SolverFailure("sym_pow: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    ev[i] = std::pow(std::max(ev[i], floor), exponent);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& s) {
  return sym_pow(s, 0.5);
}

}  // namespace detail

// Optimal transport map between Gaussians:
//   x  |->  m2 + S1^{-1/2} (S1^{1/2} S2 S1^{1/2})^{1/2} S1^{-1/2} (x - m1).
// The matrix part is SPD (it is the gradient of a convex potential).
inline AffineMap gaussian_ot_map(const GaussianMeasure& src,
                                 const GaussianMeasure& dst) {
  if (src.dim() != dst.dim())
    throw DimensionMismatch("gaussian_ot_map: dimension mismatch");
  Eigen::MatrixXd s1h = detail::sym_sqrt(src.covariance);
  Eigen::MatrixXd s1ih = detail::sym_pow(src.covariance, -0.5);
  Eigen::MatrixXd mid = detail::sym_sqrt(s1h * dst.covariance * s1h);
  Eigen::MatrixXd a = s1ih * mid * s1ih;
  a = 0.5 * (a + a.transpose().eval());
  return AffineMap(a, dst.mean - a * src.mean);
}

// W2 between Gaussians:
//   W2^2 = ||m1 - m2||^2 + tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2}).
inline double gaussian_w2(const GaussianMeasure& a, const GaussianMeasure& b) {
  if (a.dim() != b.dim())
    throw DimensionMismatch("gaussian_w2: dimension mismatch");
  Eigen::MatrixXd s1h = detail::sym_sqrt(a.covariance);
  Eigen::MatrixXd cross = detail::sym_sqrt(s1h * b.covariance * s1h);
  double t = (a.covariance + b.covariance - 2.0 * cross).trace();
  double d2 = (a.mean - b.mean).squaredNorm() + std::max(0.0, t);
  return std::sqrt(std::max(0.0, d2));
}

// L2(sigma) norm of the affine map x |-> M x + c under sigma = N(m, S):
//   E ||M x + c||^2 = ||M S^{1/2}||_F^2 + ||M m + c||^2.
inline double affine_sigma_norm(const Eigen::MatrixXd& m_part,
                                const Eigen::VectorXd& c_part,
                                const GaussianMeasure& sigma) {
  Eigen::MatrixXd half = m_part * detail::sym_sqrt(sigma.covariance);
  return std::sqrt(half.squaredNorm() +
                   (m_part * sigma.mean + c_part).squaredNorm());
}

// || T_sigma^{S#mu} - S o T_sigma^mu ||_{sigma}: zero exactly when S is
// compatible with the embedding based at sigma for this template.
inline double compatibility_residual(const GaussianMeasure& sigma,
                                     const GaussianMeasure& mu,
                                     const AffineMap& s) {
  if (sigma.dim() != mu.dim() || s.dim() != mu.dim())
    throw DimensionMismatch("compatibility_residual: dimension mismatch");
  GaussianMeasure spm = pushforward(mu, s);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(spm.covariance);
  if (es.eigenvalues().minCoeff() <= 1e-14)
    throw SingularCovariance(
        "compatibility_residual: pushforward covariance not SPD");
  AffineMap t_direct = gaussian_ot_map(sigma, spm);
  AffineMap t_composed = s.compose(gaussian_ot_map(sigma, mu));
  return affine_sigma_norm(t_direct.matrix - t_composed.matrix,
                           t_direct.shift - t_composed.shift, sigma);
}

// Reference construction that is compatible with every shear sharing the
// basis P: sigma = (P^T diag(d) P)(.) + shift pushforward of the template.
inline GaussianMeasure make_compatible_reference(
    const GaussianMeasure& template_measure, const Eigen::MatrixXd& basis_p,
    const Eigen::VectorXd& diag, const Eigen::VectorXd& shift) {
  int d = template_measure.dim();
  if (basis_p.rows() != d || basis_p.cols() != d || diag.size() != d ||
      shift.size() != d)
    throw DimensionMismatch("make_compatible_reference: shape mismatch");
  Eigen::MatrixXd ortho_err =
      basis_p.transpose() * basis_p - Eigen::MatrixXd::Identity(d, d);
  if (ortho_err.cwiseAbs().maxCoeff() > 1e-10)
    throw NonOrthogonalBasis("make_compatible_reference: basis not orthogonal");
  if (diag.minCoeff() <= 0.0)
    throw InvalidArgument("make_compatible_reference: diag must be positive");
  Eigen::MatrixXd c = basis_p.transpose() * diag.asDiagonal() * basis_p;
  c = 0.5 * (c + c.transpose().eval());
  return pushforward(template_measure, AffineMap(c, shift));
}

}  // namespace lotlab
