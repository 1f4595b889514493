#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lotlab/errors.hpp"
#include "lotlab/measures.hpp"
#include "lotlab/ot.hpp"

namespace lotlab {

// Embedding of one measure against a fixed reference: the Monge-map targets,
// flattened block-wise (dim values per reference atom). Distances between
// features are weighted by the reference weights, so the feature only makes
// sense next to the reference it was computed against; reference identity is
// enforced through a structural hash.
struct LotFeature {
  std::shared_ptr<const DiscreteMeasure> reference;
  std::uint64_t reference_hash = 0;
  int dim = 0;
  std::vector<double> values;  // dim * reference->size()

  std::span<const double> block(std::size_t i) const {
    return {values.data() + i * dim, static_cast<std::size_t>(dim)};
  }
};

enum class Extraction { argmax, barycentric };
enum class SolverKind { exact, sinkhorn };

struct EmbedOptions {
  Extraction extraction = Extraction::argmax;
  // Store T(x_i) - x_i instead of raw targets.
  bool centered = false;
  SolverKind solver = SolverKind::exact;
  SinkhornOptions sinkhorn;
  ExactOptions exact;
};

inline LotFeature embed(std::shared_ptr<const DiscreteMeasure> reference,
                        const DiscreteMeasure& measure,
                        const EmbedOptions& opts = {}) {
  if (reference->dim() != measure.dim())
    throw DimensionMismatch("embed: dimension mismatch");
  for (std::size_t i = 0; i < reference->size(); ++i)
    if (reference->weight(i) <= 0.0)
      throw InvalidArgument("embed: reference has a zero-weight atom");

  Coupling plan = opts.solver == SolverKind::exact
                      ? solve_exact(reference, std::make_shared<DiscreteMeasure>(
                                                   measure),
                                    opts.exact)
                      : sinkhorn(reference,
                                 std::make_shared<DiscreteMeasure>(measure),
                                 opts.sinkhorn)
                            .coupling;
  MongeMap monge = opts.extraction == Extraction::argmax
                       ? extract_monge_argmax(plan)
                       : extract_monge_barycentric(plan);

  LotFeature f;
  f.reference = std::move(plan.source);
  f.reference_hash = f.reference->structural_hash();
  f.dim = measure.dim();
  f.values = std::move(monge.targets);
  if (opts.centered) {
    for (std::size_t i = 0; i < f.reference->size(); ++i) {
      auto p = f.reference->point(i);
      for (int d = 0; d < f.dim; ++d) f.values[i * f.dim + d] -= p[d];
    }
  }
  return f;
}

inline LotFeature embed(const DiscreteMeasure& reference,
                        const DiscreteMeasure& measure,
                        const EmbedOptions& opts = {}) {
  return embed(std::make_shared<DiscreteMeasure>(reference), measure, opts);
}

// Reference-weighted L2 between two features of the same reference:
//   sqrt( sum_i w_i ||a_i - b_i||^2 ).
inline double lot_distance(const LotFeature& a, const LotFeature& b) {
  if (a.reference_hash != b.reference_hash ||
      a.values.size() != b.values.size() || a.dim != b.dim)
    throw ReferenceMismatch("lot_distance: features use different references");
  double s = 0.0;
  for (std::size_t i = 0; i < a.reference->size(); ++i)
    s += a.reference->weight(i) * sq_dist(a.block(i), b.block(i));
  return std::sqrt(s);
}

inline std::vector<LotFeature> multi_embed(
    const std::vector<std::shared_ptr<const DiscreteMeasure>>& references,
    const DiscreteMeasure& measure, const EmbedOptions& opts = {}) {
  std::vector<LotFeature> out;
  out.reserve(references.size());
  for (const auto& r : references) out.push_back(embed(r, measure, opts));
  return out;
}

// l_p combination of per-reference distances; p = infinity takes the max.
inline double product_distance(const std::vector<LotFeature>& a,
                               const std::vector<LotFeature>& b, double p) {
  if (a.size() != b.size() || a.empty())
    throw ReferenceMismatch("product_distance: reference lists differ");
  if (!(p >= 1.0))
    throw InvalidArgument("product_distance: p must be >= 1 (or infinity)");
  if (std::isinf(p)) {
    double mx = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      mx = std::max(mx, lot_distance(a[i], b[i]));
    return mx;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += std::pow(lot_distance(a[i], b[i]), p);
  return std::pow(s, 1.0 / p);
}

// Smallest cross-class feature distance; the empirical margin delta*.
inline double empirical_min_separation(const std::vector<LotFeature>& a,
                                       const std::vector<LotFeature>& b) {
  if (a.empty() || b.empty())
    throw InsufficientData("empirical_min_separation: empty class");
  double mn = std::numeric_limits<double>::infinity();
  for (const auto& fa : a)
    for (const auto& fb : b) mn = std::min(mn, lot_distance(fa, fb));
  return mn;
}

// ---- separation-bound calculators ----------------------------------------

// Largest transformation budget L that still guarantees linear separability:
//   L = (w2 - delta) / 2 - epsilon.
inline double transformation_budget(double w2, double delta, double epsilon) {
  double l = (w2 - delta) / 2.0 - epsilon;
  if (!(l > 0.0))
    throw InfeasibleBound("transformation_budget: (w2 - delta)/2 - epsilon <= 0");
  return l;
}

struct SeparationInputs {
  double w2 = 0.0;       // distance between the class templates
  double delta = 0.0;    // embedding defect allowance
  double epsilon = 0.0;  // per-class embedding error
  double r1 = 0.0, r2 = 0.0;  // support radii
  double m_b = 0.0;      // shift budget
};

struct ShearClassBounds {
  int case_id = 0;  // 1: w2 beyond r1+r2+delta+2eps; 2: between the gaps
  double m_max = 0.0;
  std::optional<double> gamma_min;       // case 2 only
  std::pair<double, double> m_b_interval{0.0, 0.0};
  bool m_feasible = false;  // the M interval for this case is nonempty
};

// Shear-family bounds:
//   m_max     = (w2 - delta - 2 eps - 2 m_b + (r1 + r2)) / (r1 + r2)
//   gamma_min = (2 m_b + 2 eps + delta - w2 + r1 + r2) / (r1 + r2)  [case 2]
// Case 1 applies when w2 > r1 + r2 + delta + 2 eps (M must exceed 2 there);
// otherwise case 2 (M must exceed 1). The boundary w2 == r1+r2+delta+2eps
// is assigned to case 2.
inline ShearClassBounds shear_class_bounds(const SeparationInputs& in) {
  double rr = in.r1 + in.r2;
  if (!(rr > 0.0))
    throw InvalidArgument("shear_class_bounds: r1 + r2 must be positive");
  if (in.m_b < 0.0 || in.epsilon < 0.0 || in.delta < 0.0)
    throw InvalidArgument("shear_class_bounds: negative slack parameter");
  double gap = in.w2 - in.delta - 2.0 * in.epsilon;
  if (!(gap > 0.0))
    throw InfeasibleBound("shear_class_bounds: need w2 > delta + 2*epsilon");

  ShearClassBounds out;
  out.m_max = (gap - 2.0 * in.m_b + rr) / rr;
  if (gap > rr) {
    out.case_id = 1;
    out.m_b_interval = {0.0, (gap - rr) / 2.0};
    out.m_feasible = out.m_max > 2.0;
  } else {
    out.case_id = 2;
    out.gamma_min = (2.0 * in.m_b + 2.0 * in.epsilon + in.delta - in.w2 + rr) / rr;
    out.m_b_interval = {0.0, gap / 2.0};
    out.m_feasible = out.m_max > 1.0;
  }
  return out;
}

// Reference count needed to certify a margin delta_star:
//   n = ceil( (delta_star / (w2 - 2 (l + epsilon)))^2 ), at least 1.
inline int min_references(double delta_star, double w2, double l,
                          double epsilon) {
  if (delta_star < 0.0)
    throw InvalidArgument("min_references: delta_star must be >= 0");
  double denom = w2 - 2.0 * (l + epsilon);
  if (!(denom > 0.0))
    throw InfeasibleBound("min_references: need w2 > 2 (l + epsilon)");
  double ratio = delta_star / denom;
  double n = std::ceil(ratio * ratio - 1e-12);
  return std::max(1, static_cast<int>(n));
}

}  // namespace lotlab
