#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <numbers>
#include <utility>
#include <vector>

#include "lotlab/affine.hpp"
#include "lotlab/errors.hpp"
#include "lotlab/image.hpp"
#include "lotlab/measures.hpp"
#include "lotlab/rng.hpp"

namespace lotlab {

// Planar shear: A = R(theta)^T diag(lambda1, lambda2) R(theta), plus a shift.
// The shift is in pixel units when applied to images and in coordinate units
// when applied to point measures.
struct ShearParams {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double theta_deg = 0.0;
  Eigen::Vector2d shift = Eigen::Vector2d::Zero();
};

inline AffineMap shear_to_affine(const ShearParams& p) {
  if (p.lambda1 <= 0.0 || p.lambda2 <= 0.0)
    throw InvalidArgument("shear_to_affine: lambdas must be positive");
  double t = p.theta_deg * std::numbers::pi / 180.0;
  double c = std::cos(t), s = std::sin(t);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  Eigen::Matrix2d a =
      r.transpose() * Eigen::Vector2d(p.lambda1, p.lambda2).asDiagonal() * r;
  a = 0.5 * (a + a.transpose().eval());
  return AffineMap(a, p.shift);
}

// Sampling intervals for shear parameters. Angles in degrees, theta drawn
// from the half-open interval.
struct ShearRegime {
  double lambda_lo = 0.5, lambda_hi = 1.5;
  double theta_lo = 0.0, theta_hi = 360.0;
  double shift_lo = -5.0, shift_hi = 5.0;

  static ShearRegime mild() { return {0.5, 1.5, 0.0, 360.0, -5.0, 5.0}; }
  static ShearRegime severe() { return {0.5, 2.5, 0.0, 360.0, -5.0, 5.0}; }
};

// Draw order is fixed (lambda1, lambda2, theta, shift_x, shift_y) so that a
// seeded stream reproduces the same transform sequence everywhere.
inline ShearParams sample_shear(const ShearRegime& r, Rng& rng) {
  ShearParams p;
  p.lambda1 = rng.uniform(r.lambda_lo, r.lambda_hi);
  p.lambda2 = rng.uniform(r.lambda_lo, r.lambda_hi);
  p.theta_deg = rng.uniform(r.theta_lo, r.theta_hi);
  p.shift[0] = rng.uniform(r.shift_lo, r.shift_hi);
  p.shift[1] = rng.uniform(r.shift_lo, r.shift_hi);
  return p;
}

// Inverse-mapped shear of a square image with bilinear interpolation.
// Conventions (1-based pixel coordinates, x1 = row, x2 = column):
//   center = (n/2, n/2); for output pixel (i, j), y = (i, j) - center and
//   x = A^{-1}(y - b) + center. Pixels whose pre-image leaves (0, n] in
//   either coordinate are set to zero; out-of-range bilinear taps read as 0.
// An exact-identity map reproduces the input bit for bit.
inline ImageGrid shear_image(const ImageGrid& img, const AffineMap& f) {
  if (f.dim() != 2) throw DimensionMismatch("shear_image: map must be 2-d");
  const int n = img.side;
  Eigen::Matrix2d a = f.matrix;
  double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  if (det == 0.0) throw SingularMatrix("shear_image: singular shear matrix");
  Eigen::Matrix2d inv;
  inv << a(1, 1) / det, -a(0, 1) / det, -a(1, 0) / det, a(0, 0) / det;
  const double cx = n / 2.0, cy = n / 2.0;
  const double bx = f.shift[0], by = f.shift[1];

  auto tap = [&](int i, int j) -> double {
    return (i >= 1 && i <= n && j >= 1 && j <= n) ? img.at(i - 1, j - 1) : 0.0;
  };

  ImageGrid out = ImageGrid::zero(n);
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= n; ++j) {
      double y1 = i - cx - bx;
      double y2 = j - cy - by;
      double x1 = inv(0, 0) * y1 + inv(0, 1) * y2 + cx;
      double x2 = inv(1, 0) * y1 + inv(1, 1) * y2 + cy;
      if (x1 > n || x1 <= 0.0 || x2 > n || x2 <= 0.0) continue;
      double i0 = std::floor(x1), j0 = std::floor(x2);
      double fx = x1 - i0, fy = x2 - j0;
      int i0i = static_cast<int>(i0), j0i = static_cast<int>(j0);
      out.at(i - 1, j - 1) = (1.0 - fx) * (1.0 - fy) * tap(i0i, j0i) +
                             (1.0 - fx) * fy * tap(i0i, j0i + 1) +
                             fx * (1.0 - fy) * tap(i0i + 1, j0i) +
                             fx * fy * tap(i0i + 1, j0i + 1);
    }
  }
  return out;
}

inline ImageGrid shear_image(const ImageGrid& img, const ShearParams& p) {
  return shear_image(img, shear_to_affine(p));
}

// Nonlinear shear with a constant orthonormal basis:
//   x |-> P^T [f_1((Px)_1), ..., f_d((Px)_d)] + b
// with every component strictly increasing. Monotonicity is spot-checked on
// a sample grid at construction.
class GeneralizedShear {
 public:
  GeneralizedShear(Eigen::MatrixXd basis,
                   std::vector<std::function<double(double)>> components,
                   Eigen::VectorXd shift, double check_lo = -10.0,
                   double check_hi = 10.0, int check_points = 65)
      : basis_(std::move(basis)),
        components_(std::move(components)),
        shift_(std::move(shift)) {
    const int d = static_cast<int>(basis_.rows());
    if (basis_.cols() != d || static_cast<int>(components_.size()) != d ||
        shift_.size() != d)
      throw DimensionMismatch("GeneralizedShear: shape mismatch");
    Eigen::MatrixXd err =
        basis_.transpose() * basis_ - Eigen::MatrixXd::Identity(d, d);
    if (err.cwiseAbs().maxCoeff() > 1e-10)
      throw NonOrthogonalBasis("GeneralizedShear: basis not orthonormal");
    for (int c = 0; c < d; ++c) {
      double prev = components_[c](check_lo);
      for (int t = 1; t < check_points; ++t) {
        double u = check_lo + (check_hi - check_lo) * t / (check_points - 1);
        double v = components_[c](u);
        if (!(v > prev))
          throw NotMonotone("GeneralizedShear: component " + std::to_string(c) +
                            " is not strictly increasing");
        prev = v;
      }
    }
  }

  int dim() const { return static_cast<int>(basis_.rows()); }
  const Eigen::MatrixXd& basis() const { return basis_; }
  const Eigen::VectorXd& shift() const { return shift_; }

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const {
    Eigen::VectorXd z = basis_ * x;
    for (Eigen::Index c = 0; c < z.size(); ++c) z[c] = components_[c](z[c]);
    return basis_.transpose() * z + shift_;
  }

 private:
  Eigen::MatrixXd basis_;
  std::vector<std::function<double(double)>> components_;
  Eigen::VectorXd shift_;
};

inline DiscreteMeasure apply_generalized_shear(const DiscreteMeasure& m,
                                               const GeneralizedShear& g) {
  if (g.dim() != m.dim())
    throw DimensionMismatch("apply_generalized_shear: dimension mismatch");
  return pushforward(m, [&](std::span<const double> x, double* out) {
    Eigen::VectorXd v =
        g(Eigen::Map<const Eigen::VectorXd>(x.data(), g.dim()));
    Eigen::Map<Eigen::VectorXd>(out, g.dim()) = v;
  });
}

}  // namespace lotlab
