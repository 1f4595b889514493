#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lotlab/errors.hpp"
#include "lotlab/rng.hpp"

namespace lotlab {

// Discrete probability measure: n weighted atoms in R^d.
// Invariants enforced at construction:
//   - at least one atom,
//   - points.size() == dim * weights.size(),
//   - every weight >= 0,
//   - weights sum to 1. A drift of at most 1e-9 is renormalized away;
//     anything worse is rejected (use normalize() for raw weight vectors).
//     Sums already within 1e-12 are kept bit-for-bit.
// Duplicate atoms are legal and are NOT merged implicitly; see coalesce().
class DiscreteMeasure {
 public:
  DiscreteMeasure(int dim, std::vector<double> points,
                  std::vector<double> weights)
      : dim_(dim), points_(std::move(points)), weights_(std::move(weights)) {
    if (dim_ <= 0) throw InvalidArgument("DiscreteMeasure: dim must be >= 1");
    if (weights_.empty()) throw EmptySupport("DiscreteMeasure: no atoms");
    if (points_.size() != weights_.size() * static_cast<std::size_t>(dim_))
      throw DimensionMismatch("DiscreteMeasure: points/weights size mismatch");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0))
        throw InvalidArgument("DiscreteMeasure: negative or NaN weight");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw InvalidArgument(
          "DiscreteMeasure: weights sum to " + std::to_string(total) +
          ", outside the 1e-9 normalization tolerance");
    if (std::abs(total - 1.0) > 1e-12) {
      for (double& w : weights_) w /= total;
    }
  }

  int dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }

  std::span<const double> point(std::size_t i) const {
    return {points_.data() + i * dim_, static_cast<std::size_t>(dim_)};
  }
  double weight(std::size_t i) const { return weights_[i]; }

  const std::vector<double>& points() const { return points_; }
  const std::vector<double>& weights() const { return weights_; }

  // n x d view of the support.
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
  support_matrix() const {
    return {points_.data(), static_cast<Eigen::Index>(size()), dim_};
  }

  Eigen::VectorXd mean() const {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dim_);
    for (std::size_t i = 0; i < size(); ++i)
      m += weights_[i] * Eigen::Map<const Eigen::VectorXd>(point(i).data(), dim_);
    return m;
  }

  // Hash over (dim, points bytes, weights bytes). Two measures compare equal
  // for reference-identity purposes iff their hashes and sizes agree.
  std::uint64_t structural_hash() const {
    std::uint64_t h = fnv1a64(&dim_, sizeof(dim_));
    h = fnv1a64(points_.data(), points_.size() * sizeof(double), h);
    h = fnv1a64(weights_.data(), weights_.size() * sizeof(double), h);
    return h;
  }

 private:
  int dim_;
  std::vector<double> points_;   // row-major, size dim_ * n
  std::vector<double> weights_;  // size n
};

// Rescales a raw nonnegative weight vector to total mass 1.
// prune_zero drops exactly-zero atoms after rescaling.
inline DiscreteMeasure normalize(int dim, std::vector<double> points,
                                 std::vector<double> weights,
                                 bool prune_zero = false) {
  if (weights.empty()) throw EmptySupport("normalize: no atoms");
  if (points.size() != weights.size() * static_cast<std::size_t>(dim))
    throw DimensionMismatch("normalize: points/weights size mismatch");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidArgument("normalize: negative or NaN weight");
    total += w;
  }
  if (total <= 0.0) throw ZeroTotalMass("normalize: total mass is zero");
  for (double& w : weights) w /= total;
  if (prune_zero) {
    std::vector<double> pts, ws;
    pts.reserve(points.size());
    ws.reserve(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] > 0.0) {
        ws.push_back(weights[i]);
        pts.insert(pts.end(), points.begin() + i * dim,
                   points.begin() + (i + 1) * dim);
      }
    }
    if (ws.empty()) throw ZeroTotalMass("normalize: all atoms pruned");
    return DiscreteMeasure(dim, std::move(pts), std::move(ws));
  }
  return DiscreteMeasure(dim, std::move(points), std::move(weights));
}

inline DiscreteMeasure normalize(const DiscreteMeasure& m,
                                 bool prune_zero = false) {
  return normalize(m.dim(), m.points(), m.weights(), prune_zero);
}

// Merges atoms at bitwise-identical coordinates, summing their weights.
// First occurrence fixes the output order.
inline DiscreteMeasure coalesce(const DiscreteMeasure& m) {
  std::map<std::vector<double>, std::size_t> seen;
  std::vector<double> pts;
  std::vector<double> ws;
  for (std::size_t i = 0; i < m.size(); ++i) {
    auto p = m.point(i);
    std::vector<double> key(p.begin(), p.end());
    auto [it, inserted] = seen.emplace(std::move(key), ws.size());
    if (inserted) {
      pts.insert(pts.end(), p.begin(), p.end());
      ws.push_back(m.weight(i));
    } else {
      ws[it->second] += m.weight(i);
    }
  }
  return DiscreteMeasure(m.dim(), std::move(pts), std::move(ws));
}

// Applies `map` atom-wise; weights are carried over unchanged.
// `map` receives a span of dim() doubles and must write dim() doubles
// into the output pointer.
template <class F>
  requires std::invocable<F&, std::span<const double>, double*>
DiscreteMeasure pushforward(const DiscreteMeasure& m, F&& map) {
  std::vector<double> pts(m.points().size());
  for (std::size_t i = 0; i < m.size(); ++i)
    map(m.point(i), pts.data() + i * m.dim());
  return DiscreteMeasure(m.dim(), std::move(pts), m.weights());
}

// Radius of the smallest origin-centered ball containing the support.
inline double bounded_support_radius(const DiscreteMeasure& m) {
  double r2 = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    double s = 0.0;
    for (double c : m.point(i)) s += c * c;
    r2 = std::max(r2, s);
  }
  return std::sqrt(r2);
}

inline nlohmann::json measure_to_json(const DiscreteMeasure& m) {
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t i = 0; i < m.size(); ++i) {
    auto p = m.point(i);
    points.push_back(std::vector<double>(p.begin(), p.end()));
  }
  return {{"d", m.dim()}, {"points", points}, {"weights", m.weights()}};
}

inline DiscreteMeasure measure_from_json(const nlohmann::json& j) {
  int d = j.at("d").get<int>();
  std::vector<double> weights = j.at("weights").get<std::vector<double>>();
  std::vector<double> pts;
  for (const auto& row : j.at("points")) {
    auto v = row.get<std::vector<double>>();
    if (static_cast<int>(v.size()) != d)
      throw DimensionMismatch("measure_from_json: point of wrong dimension");
    pts.insert(pts.end(), v.begin(), v.end());
  }
  return DiscreteMeasure(d, std::move(pts), std::move(weights));
}

// Gaussian N(mean, covariance) with an SPD covariance.
// Symmetry is required up to 1e-12 (the stored matrix is symmetrized);
// eigenvalues must be strictly positive.
struct GaussianMeasure {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  GaussianMeasure(Eigen::VectorXd mu, Eigen::MatrixXd cov)
      : mean(std::move(mu)), covariance(std::move(cov)) {
    if (covariance.rows() != covariance.cols() ||
        covariance.rows() != mean.size())
      throw DimensionMismatch("GaussianMeasure: shape mismatch");
    double asym = (covariance - covariance.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12)
      throw InvalidArgument("GaussianMeasure: covariance not symmetric");
    covariance = 0.5 * (covariance + covariance.transpose().eval());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
      throw SingularCovariance("GaussianMeasure: covariance not SPD");
  }

  int dim() const { return static_cast<int>(mean.size()); }
};

}  // namespace lotlab
