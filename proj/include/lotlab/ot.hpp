#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lotlab/errors.hpp"
#include "lotlab/measures.hpp"

namespace lotlab {

// Transport plan between two discrete measures. plan(i, j) is the mass moved
// from source atom i to target atom j; row sums reproduce the source weights,
// column sums the target weights (within 1e-9 for exact solves).
struct Coupling {
  std::shared_ptr<const DiscreteMeasure> source;
  std::shared_ptr<const DiscreteMeasure> target;
  Eigen::MatrixXd plan;
};

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    double t = a[d] - b[d];
    s += t * t;
  }
  return s;
}

// Sum of plan_ij * ||x_i - y_j||^2 over the nonzero entries.
inline double transport_cost(const Coupling& c) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < c.plan.rows(); ++i)
    for (Eigen::Index j = 0; j < c.plan.cols(); ++j)
      if (c.plan(i, j) != 0.0)
        total += c.plan(i, j) * sq_dist(c.source->point(i), c.target->point(j));
  return total;
}

// Largest absolute marginal violation (rows vs source weights, columns vs
// target weights).
inline double coupling_marginal_error(const Coupling& c) {
  double err = 0.0;
  Eigen::VectorXd rows = c.plan.rowwise().sum();
  Eigen::VectorXd cols = c.plan.colwise().sum();
  for (Eigen::Index i = 0; i < rows.size(); ++i)
    err = std::max(err, std::abs(rows[i] - c.source->weight(i)));
  for (Eigen::Index j = 0; j < cols.size(); ++j)
    err = std::max(err, std::abs(cols[j] - c.target->weight(j)));
  return err;
}

// Sparse serialization: one {i, j, mass} entry per nonzero plan cell.
inline nlohmann::json coupling_to_json(const Coupling& c) {
  nlohmann::json plan = nlohmann::json::array();
  for (Eigen::Index i = 0; i < c.plan.rows(); ++i)
    for (Eigen::Index j = 0; j < c.plan.cols(); ++j)
      if (c.plan(i, j) != 0.0)
        plan.push_back({{"i", i}, {"j", j}, {"mass", c.plan(i, j)}});
  return {{"source", measure_to_json(*c.source)},
          {"target", measure_to_json(*c.target)},
          {"cost", transport_cost(c)},
          {"plan", plan}};
}

struct ExactOptions {
  // Pricing tolerance relative to the largest |cost| entry.
  double price_tol_rel = 1e-12;
  // Pivot cap; 0 derives one from the instance size.
  long max_pivots = 0;
  // Above this many cost entries the matrix is evaluated on the fly instead
  // of being materialized.
  long long cost_cache_limit = 10'000'000;
};

namespace detail {

// Dense squared-distance cost, materialized once.
class DenseCost {
 public:
  DenseCost(const DiscreteMeasure& a, const DiscreteMeasure& b,
            const std::vector<int>& ia, const std::vector<int>& jb)
      : k_(static_cast<int>(jb.size())), c_(ia.size() * jb.size()) {
    for (std::size_t i = 0; i < ia.size(); ++i)
      for (std::size_t j = 0; j < jb.size(); ++j)
        c_[i * jb.size() + j] = sq_dist(a.point(ia[i]), b.point(jb[j]));
  }
  double operator()(int i, int j) const { return c_[(std::size_t)i * k_ + j]; }

 private:
  int k_;
  std::vector<double> c_;
};

// On-the-fly squared-distance cost for instances too large to materialize.
class LazyCost {
 public:
  LazyCost(const DiscreteMeasure& a, const DiscreteMeasure& b,
           const std::vector<int>& ia, const std::vector<int>& jb)
      : a_(&a), b_(&b), ia_(&ia), jb_(&jb) {}
  double operator()(int i, int j) const {
    return sq_dist(a_->point((*ia_)[i]), b_->point((*jb_)[j]));
  }

 private:
  const DiscreteMeasure* a_;
  const DiscreteMeasure* b_;
  const std::vector<int>* ia_;
  const std::vector<int>* jb_;
};

// Network simplex specialized to the dense transportation problem.
// Nodes 0..m-1 are sources, m..m+k-1 targets; the basis is a spanning tree
// held as parent pointers with the arc flow stored on the child node.
// Initial basis: north-west corner staircase. Pricing: cyclic block search
// for the most negative reduced cost within a block. Degenerate (zero-flow)
// pivots are allowed; a pivot cap guards against pathological stalls.
template <class Cost>
class TransportSimplex {
 public:
  TransportSimplex(int m, int k, const double* a, const double* b, Cost cost,
                   double price_tol, long max_pivots)
      : m_(m),
        k_(k),
        n_(m + k),
        a_(a),
        b_(b),
        cost_(std::move(cost)),
        tol_(price_tol),
        max_pivots_(max_pivots) {}

  void solve() {
    init_northwest();
    init_potentials();
    narcs_ = static_cast<long long>(m_) * k_;
    block_ = std::max<long long>(
        64, static_cast<long long>(std::ceil(std::sqrt((double)narcs_))));
    next_arc_ = 0;
    for (;;) {
      long long e = price();
      if (e < 0) break;
      if (++pivots_ > max_pivots_)
        throw SolverFailure("solve_exact: pivot limit exceeded (" +
                            std::to_string(max_pivots_) + ")");
      pivot(static_cast<int>(e / k_), static_cast<int>(e % k_));
    }
  }

  double objective() const {
    double total = 0.0;
    for (int x = 0; x < n_; ++x) {
      if (parent_[x] < 0 || flow_[x] == 0.0) continue;
      auto [i, j] = node_arc(x);
      total += flow_[x] * cost_(i, j);
    }
    return total;
  }

  // f(i, j, flow) over basic arcs with positive flow.
  template <class F>
  void for_each_flow(F&& f) const {
    for (int x = 0; x < n_; ++x) {
      if (parent_[x] < 0 || flow_[x] == 0.0) continue;
      auto [i, j] = node_arc(x);
      f(i, j, flow_[x]);
    }
  }

  long pivots() const { return pivots_; }

 private:
  int m_, k_, n_;
  const double* a_;
  const double* b_;
  Cost cost_;
  double tol_;
  long max_pivots_;
  long pivots_ = 0;

  std::vector<int> parent_, depth_;
  std::vector<double> flow_;  // on the arc to the parent
  std::vector<std::vector<int>> children_;
  std::vector<double> pi_;  // node potentials; reduced cost = c - pi_i + pi_j

  long long narcs_ = 0, block_ = 0, next_arc_ = 0;

  bool is_source(int x) const { return x < m_; }

  std::pair<int, int> node_arc(int x) const {
    int p = parent_[x];
    return is_source(x) ? std::pair<int, int>{x, p - m_}
                        : std::pair<int, int>{p, x - m_};
  }

  void attach(int node, int par, double f) {
    parent_[node] = par;
    flow_[node] = f;
    depth_[node] = depth_[par] + 1;
    children_[par].push_back(node);
  }

  void erase_child(int par, int node) {
    auto& ch = children_[par];
    for (std::size_t t = 0; t < ch.size(); ++t) {
      if (ch[t] == node) {
        ch[t] = ch.back();
        ch.pop_back();
        return;
      }
    }
  }

  void init_northwest() {
    parent_.assign(n_, -1);
    depth_.assign(n_, 0);
    flow_.assign(n_, 0.0);
    children_.assign(n_, {});
    std::vector<double> ra(a_, a_ + m_), rb(b_, b_ + k_);
    int i = 0, j = 0;
    bool new_is_target = true;  // cell (0,0) attaches target 0 under source 0
    for (;;) {
      double f = std::max(0.0, std::min(ra[i], rb[j]));
      if (new_is_target)
        attach(m_ + j, i, f);
      else
        attach(i, m_ + j, f);
      ra[i] -= f;
      rb[j] -= f;
      if (i == m_ - 1 && j == k_ - 1) break;
      if (i == m_ - 1) {
        ++j;
        new_is_target = true;
      } else if (j == k_ - 1) {
        ++i;
        new_is_target = false;
      } else if (ra[i] <= rb[j]) {
        ++i;
        new_is_target = false;
      } else {
        ++j;
        new_is_target = true;
      }
    }
  }

  void init_potentials() {
    pi_.assign(n_, 0.0);
    std::vector<int> stack = {0};
    while (!stack.empty()) {
      int x = stack.back();
      stack.pop_back();
      for (int c : children_[x]) {
        auto [i, j] = node_arc(c);
        pi_[c] = is_source(c) ? cost_(i, j) + pi_[m_ + j] : pi_[i] - cost_(i, j);
        stack.push_back(c);
      }
    }
  }

  // Most negative reduced cost within the first block that holds one;
  // -1 when no arc prices out.
  long long price() {
    long long best_e = -1;
    double best = -tol_;
    long long count = 0;
    for (long long scanned = 0; scanned < narcs_; ++scanned) {
      long long e = next_arc_++;
      if (next_arc_ == narcs_) next_arc_ = 0;
      int i = static_cast<int>(e / k_);
      int j = static_cast<int>(e % k_);
      double r = cost_(i, j) - pi_[i] + pi_[m_ + j];
      if (r < best) {
        best = r;
        best_e = e;
      }
      if (++count == block_) {
        if (best_e >= 0) return best_e;
        count = 0;
      }
    }
    return best_e;
  }

  void pivot(int ei, int ej) {
    int u = ei, v = m_ + ej;
    double r = cost_(ei, ej) - pi_[u] + pi_[v];

    int x = u, y = v;
    while (depth_[x] > depth_[y]) x = parent_[x];
    while (depth_[y] > depth_[x]) y = parent_[y];
    while (x != y) {
      x = parent_[x];
      y = parent_[y];
    }
    int lca = x;

    // Pushing mass around the cycle u -> v -> ... -> u: on the u-side walk a
    // child that is a source sits on a draining arc, on the v-side a child
    // that is a target does.
    double theta = std::numeric_limits<double>::infinity();
    int leave = -1;
    bool leave_on_u = false;
    for (int z = u; z != lca; z = parent_[z]) {
      if (is_source(z) && flow_[z] < theta) {
        theta = flow_[z];
        leave = z;
        leave_on_u = true;
      }
    }
    for (int z = v; z != lca; z = parent_[z]) {
      if (!is_source(z) && flow_[z] < theta) {
        theta = flow_[z];
        leave = z;
        leave_on_u = false;
      }
    }

    for (int z = u; z != lca; z = parent_[z])
      flow_[z] += is_source(z) ? -theta : theta;
    for (int z = v; z != lca; z = parent_[z])
      flow_[z] += is_source(z) ? theta : -theta;

    int e_in = leave_on_u ? u : v;
    int e_out = leave_on_u ? v : u;
    double delta = leave_on_u ? r : -r;

    // Detach the subtree at the leaving arc, re-root it at e_in, hang it
    // under e_out with the entering arc carrying theta.
    erase_child(parent_[leave], leave);
    std::vector<int> path;
    for (int z = e_in;; z = parent_[z]) {
      path.push_back(z);
      if (z == leave) break;
    }
    int prev = e_out;
    double carry = theta;
    for (std::size_t t = 0; t < path.size(); ++t) {
      int cur = path[t];
      int oldp = parent_[cur];
      double oldf = flow_[cur];
      if (t + 1 < path.size()) erase_child(oldp, cur);
      parent_[cur] = prev;
      flow_[cur] = carry;
      children_[prev].push_back(cur);
      prev = cur;
      carry = oldf;
    }

    std::vector<int> stack = {e_in};
    while (!stack.empty()) {
      int z = stack.back();
      stack.pop_back();
      depth_[z] = depth_[parent_[z]] + 1;
      pi_[z] += delta;
      for (int c : children_[z]) stack.push_back(c);
    }
  }
};

struct FilteredInstance {
  std::vector<int> ia, jb;       // original indices of positive-weight atoms
  std::vector<double> aw, bw;    // their weights
};

inline FilteredInstance filter_zero_atoms(const DiscreteMeasure& a,
                                          const DiscreteMeasure& b) {
  FilteredInstance f;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.weight(i) > 0.0) {
      f.ia.push_back(static_cast<int>(i));
      f.aw.push_back(a.weight(i));
    }
  for (std::size_t j = 0; j < b.size(); ++j)
    if (b.weight(j) > 0.0) {
      f.jb.push_back(static_cast<int>(j));
      f.bw.push_back(b.weight(j));
    }
  if (f.ia.empty() || f.jb.empty())
    throw ZeroTotalMass("solve: a measure has no positive-weight atoms");
  return f;
}

template <class Cost>
Coupling run_simplex(std::shared_ptr<const DiscreteMeasure> source,
                     std::shared_ptr<const DiscreteMeasure> target,
                     const FilteredInstance& f, Cost cost, double cmax,
                     const ExactOptions& opts) {
  int m = static_cast<int>(f.ia.size());
  int k = static_cast<int>(f.jb.size());
  long max_pivots = opts.max_pivots > 0
                        ? opts.max_pivots
                        : 2000 + 200L * (m + k);
  double tol = opts.price_tol_rel * std::max(1.0, cmax);
  TransportSimplex<Cost> simplex(m, k, f.aw.data(), f.bw.data(),
                                 std::move(cost), tol, max_pivots);
  simplex.solve();
  Coupling c{std::move(source), std::move(target), {}};
  c.plan = Eigen::MatrixXd::Zero(c.source->size(), c.target->size());
  simplex.for_each_flow([&](int i, int j, double flow) {
    c.plan(f.ia[i], f.jb[j]) += flow;
  });
  double err = coupling_marginal_error(c);
  if (err > 1e-9)
    throw SolverFailure("solve_exact: marginal violation " +
                        std::to_string(err));
  return c;
}

}  // namespace detail

// Exact squared-Euclidean optimal transport via network simplex. The result
// is a vertex of the transportation polytope (at most m+k-1 nonzeros), with
// objective within pricing tolerance of the true optimum. Zero-weight atoms
// are pruned before the solve; their plan rows/columns come back zero.
inline Coupling solve_exact(std::shared_ptr<const DiscreteMeasure> source,
                            std::shared_ptr<const DiscreteMeasure> target,
                            const ExactOptions& opts = {}) {
  if (source->dim() != target->dim())
    throw DimensionMismatch("solve_exact: dimension mismatch");
  auto f = detail::filter_zero_atoms(*source, *target);
  long long narcs = static_cast<long long>(f.ia.size()) * f.jb.size();
  if (narcs <= opts.cost_cache_limit) {
    detail::DenseCost cost(*source, *target, f.ia, f.jb);
    double cmax = 0.0;
    for (std::size_t i = 0; i < f.ia.size(); ++i)
      for (std::size_t j = 0; j < f.jb.size(); ++j)
        cmax = std::max(cmax, cost((int)i, (int)j));
    return detail::run_simplex(std::move(source), std::move(target), f,
                               std::move(cost), cmax, opts);
  }
  detail::LazyCost cost(*source, *target, f.ia, f.jb);
  double cmax = 0.0;
  for (std::size_t i = 0; i < f.ia.size(); ++i)
    for (std::size_t j = 0; j < f.jb.size(); ++j)
      cmax = std::max(cmax, cost((int)i, (int)j));
  return detail::run_simplex(std::move(source), std::move(target), f, cost,
                             cmax, opts);
}

inline Coupling solve_exact(const DiscreteMeasure& source,
                            const DiscreteMeasure& target,
                            const ExactOptions& opts = {}) {
  return solve_exact(std::make_shared<DiscreteMeasure>(source),
                     std::make_shared<DiscreteMeasure>(target), opts);
}

inline double wasserstein2(const DiscreteMeasure& a, const DiscreteMeasure& b,
                           const ExactOptions& opts = {}) {
  return std::sqrt(std::max(0.0, transport_cost(solve_exact(a, b, opts))));
}

struct SinkhornOptions {
  // <= 0 picks 1e-2 * median cost entry.
  double epsilon = 0.0;
  int max_iter = 10000;
  double tol = 1e-9;  // absolute marginal violation
};

struct SinkhornResult {
  Coupling coupling;
  bool converged = false;
  int iterations = 0;
  double marginal_error = 0.0;
  double epsilon = 0.0;  // value actually used
};

// Log-domain Sinkhorn for the entropically regularized problem. On
// non-convergence the best iterate is returned with converged == false;
// no exception is thrown.
inline SinkhornResult sinkhorn(std::shared_ptr<const DiscreteMeasure> source,
                               std::shared_ptr<const DiscreteMeasure> target,
                               const SinkhornOptions& opts = {}) {
  if (source->dim() != target->dim())
    throw DimensionMismatch("sinkhorn: dimension mismatch");
  auto fi = detail::filter_zero_atoms(*source, *target);
  const int m = static_cast<int>(fi.ia.size());
  const int k = static_cast<int>(fi.jb.size());

  Eigen::MatrixXd C(m, k);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j)
      C(i, j) = sq_dist(source->point(fi.ia[i]), target->point(fi.jb[j]));

  double eps = opts.epsilon;
  if (eps <= 0.0) {
    std::vector<double> entries(C.data(), C.data() + C.size());
    auto mid = entries.begin() + entries.size() / 2;
    std::nth_element(entries.begin(), mid, entries.end());
    eps = 1e-2 * *mid;
    if (eps <= 0.0) eps = 1e-2 * C.mean();
    if (eps <= 0.0) eps = 1e-9;
  }

  Eigen::VectorXd f = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd log_a(m), log_b(k);
  for (int i = 0; i < m; ++i) log_a[i] = std::log(fi.aw[i]);
  for (int j = 0; j < k; ++j) log_b[j] = std::log(fi.bw[j]);

  auto lse_over_cols = [&](int i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) mx = std::max(mx, (g[j] - C(i, j)) / eps);
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += std::exp((g[j] - C(i, j)) / eps - mx);
    return mx + std::log(s);
  };
  auto lse_over_rows = [&](int j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) mx = std::max(mx, (f[i] - C(i, j)) / eps);
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += std::exp((f[i] - C(i, j)) / eps - mx);
    return mx + std::log(s);
  };

  SinkhornResult res;
  res.epsilon = eps;
  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    for (int i = 0; i < m; ++i) f[i] = eps * (log_a[i] - lse_over_cols(i));
    // After the f half-step the rows are tight; the column violation below
    // doubles as the convergence measure and as the g update.
    double err = 0.0;
    Eigen::VectorXd L(k);
    for (int j = 0; j < k; ++j) {
      L[j] = lse_over_rows(j);
      double col = std::exp(g[j] / eps + L[j]);
      err = std::max(err, std::abs(col - fi.bw[j]));
    }
    res.iterations = iter;
    res.marginal_error = err;
    if (err < opts.tol) {
      res.converged = true;
      break;
    }
    for (int j = 0; j < k; ++j) g[j] = eps * (log_b[j] - L[j]);
  }

  Coupling c{std::move(source), std::move(target), {}};
  c.plan = Eigen::MatrixXd::Zero(c.source->size(), c.target->size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j)
      c.plan(fi.ia[i], fi.jb[j]) = std::exp((f[i] + g[j] - C(i, j)) / eps);
  res.marginal_error = coupling_marginal_error(c);
  res.coupling = std::move(c);
  return res;
}

inline SinkhornResult sinkhorn(const DiscreteMeasure& source,
                               const DiscreteMeasure& target,
                               const SinkhornOptions& opts = {}) {
  return sinkhorn(std::make_shared<DiscreteMeasure>(source),
                  std::make_shared<DiscreteMeasure>(target), opts);
}

// Map representation of a plan: one target location per source atom.
struct MongeMap {
  std::shared_ptr<const DiscreteMeasure> source;
  int dim = 0;
  std::vector<double> targets;     // dim * source->size()
  std::vector<int> assigned_index; // argmax extraction only; else empty

  std::span<const double> target(std::size_t i) const {
    return {targets.data() + i * dim, static_cast<std::size_t>(dim)};
  }
};

// Row-wise argmax of the plan; ties break toward the lowest target index.
inline MongeMap extract_monge_argmax(const Coupling& c) {
  MongeMap m{c.source, c.source->dim(), {}, {}};
  const auto k = c.plan.cols();
  m.targets.resize(c.source->size() * m.dim);
  m.assigned_index.resize(c.source->size());
  for (Eigen::Index i = 0; i < c.plan.rows(); ++i) {
    Eigen::Index best = 0;
    double bv = c.plan(i, 0);
    for (Eigen::Index j = 1; j < k; ++j)
      if (c.plan(i, j) > bv) {
        bv = c.plan(i, j);
        best = j;
      }
    m.assigned_index[i] = static_cast<int>(best);
    auto p = c.target->point(best);
    std::copy(p.begin(), p.end(), m.targets.begin() + i * m.dim);
  }
  return m;
}

// Row-normalized barycenter of the targets. Rows with zero mass have no
// barycenter and raise ZeroRow.
inline MongeMap extract_monge_barycentric(const Coupling& c) {
  MongeMap m{c.source, c.source->dim(), {}, {}};
  m.targets.assign(c.source->size() * m.dim, 0.0);
  for (Eigen::Index i = 0; i < c.plan.rows(); ++i) {
    double row = c.plan.row(i).sum();
    if (row <= 0.0)
      throw ZeroRow("extract_monge_barycentric: zero-mass plan row " +
                    std::to_string(i));
    for (Eigen::Index j = 0; j < c.plan.cols(); ++j) {
      double w = c.plan(i, j);
      if (w == 0.0) continue;
      auto p = c.target->point(j);
      for (int d = 0; d < m.dim; ++d) m.targets[i * m.dim + d] += w * p[d];
    }
    for (int d = 0; d < m.dim; ++d) m.targets[i * m.dim + d] /= row;
  }
  return m;
}

}  // namespace lotlab
