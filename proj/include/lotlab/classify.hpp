#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lotlab/datasets.hpp"
#include "lotlab/errors.hpp"
#include "lotlab/lot.hpp"
#include "lotlab/measures.hpp"
#include "lotlab/transforms.hpp"

namespace lotlab {

// ---- linear discriminant ---------------------------------------------------

struct LdaModel {
  Eigen::VectorXd weight;
  double bias = 0.0;
  std::pair<int, int> class_labels{0, 1};  // (lower, higher)
};

// Two-class LDA with shrinkage toward the scaled identity:
//   cov_hat = (1 - s) * pooled + s * (tr(pooled)/p) * I
//   weight  = cov_hat^{-1} (mean_lo - mean_hi)
// Equal priors; the boundary passes through the midpoint of the class means.
// The shrinkage target scales with the data, so uniformly rescaled features
// give identical predictions.
inline LdaModel lda_fit(const Eigen::MatrixXd& x, const std::vector<int>& labels,
                        double shrinkage = 0.1) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw DimensionMismatch("lda_fit: labels/rows mismatch");
  if (shrinkage < 0.0 || shrinkage > 1.0)
    throw InvalidArgument("lda_fit: shrinkage must lie in [0, 1]");
  std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw SingleClass("lda_fit: need two classes");
  if (distinct.size() > 2)
    throw InvalidArgument("lda_fit: more than two classes");
  int lo = *distinct.begin(), hi = *distinct.rbegin();

  Eigen::VectorXd m_lo = Eigen::VectorXd::Zero(p), m_hi = Eigen::VectorXd::Zero(p);
  Eigen::Index n_lo = 0, n_hi = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[i] == lo) {
      m_lo += x.row(i).transpose();
      ++n_lo;
    } else {
      m_hi += x.row(i).transpose();
      ++n_hi;
    }
  }
  m_lo /= static_cast<double>(n_lo);
  m_hi /= static_cast<double>(n_hi);

  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd d =
        x.row(i).transpose() - (labels[i] == lo ? m_lo : m_hi);
    pooled.noalias() += d * d.transpose();
  }
  double dof = static_cast<double>(n_lo + n_hi - 2);
  if (dof > 0.0) pooled /= dof;

  double tr = pooled.trace();
  if (!(tr > 0.0))
    throw DegenerateFeatures("lda_fit: zero pooled variance in every direction");
  Eigen::MatrixXd cov_hat =
      (1.0 - shrinkage) * pooled +
      shrinkage * (tr / static_cast<double>(p)) *
          Eigen::MatrixXd::Identity(p, p);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov_hat);
  if (es.info() != Eigen::Success)
    throw SolverFailure("lda_fit: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  double floor = 1e-12 * ev.maxCoeff();
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    ev[i] = 1.0 / std::max(ev[i], floor);
  Eigen::VectorXd w = es.eigenvectors() * ev.asDiagonal() *
                      (es.eigenvectors().transpose() * (m_lo - m_hi));

  LdaModel model;
  model.weight = std::move(w);
  model.bias = -model.weight.dot(0.5 * (m_lo + m_hi));
  model.class_labels = {lo, hi};
  return model;
}

// Scores > 0 (and exact ties) go to the lower label.
inline std::vector<int> lda_predict(const LdaModel& m, const Eigen::MatrixXd& x) {
  if (x.cols() != m.weight.size())
    throw WidthMismatch("lda_predict: feature width mismatch");
  std::vector<int> out(x.rows());
  Eigen::VectorXd score = x * m.weight;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out[i] = (score[i] + m.bias >= 0.0) ? m.class_labels.first
                                        : m.class_labels.second;
  return out;
}

inline double lda_projection(const LdaModel& m, const Eigen::VectorXd& x) {
  return m.weight.dot(x) + m.bias;
}

// ---- data sources ----------------------------------------------------------

// Binary-labeled supply of measures. Class index is 0 or 1; items within a
// class are addressed by pool index, and item generation is deterministic in
// (class, index) so trials can be replayed.
class MeasureSource {
 public:
  virtual ~MeasureSource() = default;
  virtual int pool_size(int cls) const = 0;
  // Measure for (cls, index), sheared when `shear` is provided.
  virtual DiscreteMeasure measure(int cls, int index,
                                  const ShearParams* shear) const = 0;
  // Realization of a Gaussian reference appropriate for this source.
  virtual DiscreteMeasure gaussian_reference(const GaussianMeasure& g,
                                             Rng& rng) const = 0;
  // Class labels reported in downstream artifacts.
  virtual std::pair<int, int> labels() const = 0;
};

// Point clouds drawn from two Gaussians; shears act by pushforward.
class SyntheticGaussianSource : public MeasureSource {
 public:
  SyntheticGaussianSource(GaussianMeasure class_a, GaussianMeasure class_b,
                          int n_atoms, std::uint64_t base_seed,
                          int pool = 100000)
      : a_(std::move(class_a)),
        b_(std::move(class_b)),
        n_atoms_(n_atoms),
        seed_(base_seed),
        pool_(pool) {}

  int pool_size(int) const override { return pool_; }

  DiscreteMeasure measure(int cls, int index,
                          const ShearParams* shear) const override {
    Rng rng = Rng::stream(seed_, (static_cast<std::uint64_t>(cls) << 40) +
                                     static_cast<std::uint64_t>(index));
    DiscreteMeasure m = synthetic_gaussian_class(cls == 0 ? a_ : b_, n_atoms_, rng);
    if (shear) return pushforward(m, shear_to_affine(*shear));
    return m;
  }

  DiscreteMeasure gaussian_reference(const GaussianMeasure& g,
                                     Rng& rng) const override {
    return synthetic_gaussian_class(g, n_atoms_, rng);
  }

  std::pair<int, int> labels() const override { return {0, 1}; }

  int n_atoms() const { return n_atoms_; }

 private:
  GaussianMeasure a_, b_;
  int n_atoms_;
  std::uint64_t seed_;
  int pool_;
};

// Two digit classes from an image set; shears act on the raster.
class ImageClassSource : public MeasureSource {
 public:
  ImageClassSource(const std::vector<ImageGrid>& images,
                   const std::vector<int>& labels, int class_a, int class_b)
      : labels_{class_a, class_b} {
    if (images.size() != labels.size())
      throw CountMismatch("ImageClassSource: images/labels mismatch");
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (labels[i] == class_a) pool_[0].push_back(images[i]);
      else if (labels[i] == class_b) pool_[1].push_back(images[i]);
    }
    if (pool_[0].empty() || pool_[1].empty())
      throw InsufficientData("ImageClassSource: a class has no images");
    side_ = pool_[0][0].side;
  }

  int pool_size(int cls) const override {
    return static_cast<int>(pool_[cls].size());
  }

  DiscreteMeasure measure(int cls, int index,
                          const ShearParams* shear) const override {
    const ImageGrid& img = pool_[cls].at(index);
    if (shear) return image_to_measure(shear_image(img, *shear));
    return image_to_measure(img);
  }

  DiscreteMeasure gaussian_reference(const GaussianMeasure& g,
                                     Rng&) const override {
    return gaussian_grid_reference(g, side_);
  }

  std::pair<int, int> labels() const override { return labels_; }

 private:
  std::vector<ImageGrid> pool_[2];
  std::pair<int, int> labels_;
  int side_ = 0;
};

// ---- references ------------------------------------------------------------

struct ReferenceSpec {
  enum class Kind { gaussian, class_sample, sheared_class_sample };
  Kind kind = Kind::gaussian;
  std::optional<GaussianMeasure> gaussian;  // Kind::gaussian
  int count = 1;                            // class-sample kinds
};

// Builds the reference list. Class-sample references consume pool indices
// 0, 1, 2, ... per class (alternating classes); `reserved_out` reports how
// many leading indices per class must be kept away from train/test draws.
inline std::vector<std::shared_ptr<const DiscreteMeasure>>
materialize_references(const std::vector<ReferenceSpec>& specs,
                       const MeasureSource& source,
                       const std::optional<ShearRegime>& regime,
                       std::uint64_t seed, int* reserved_out = nullptr) {
  std::vector<std::shared_ptr<const DiscreteMeasure>> refs;
  int reserved[2] = {0, 0};
  std::uint64_t stream_id = (1ULL << 32);
  for (const auto& spec : specs) {
    Rng rng = Rng::stream(seed, stream_id++);
    switch (spec.kind) {
      case ReferenceSpec::Kind::gaussian: {
        if (!spec.gaussian)
          throw ConfigError("reference: gaussian spec without parameters");
        refs.push_back(std::make_shared<DiscreteMeasure>(
            source.gaussian_reference(*spec.gaussian, rng)));
        break;
      }
      case ReferenceSpec::Kind::class_sample:
      case ReferenceSpec::Kind::sheared_class_sample: {
        bool sheared = spec.kind == ReferenceSpec::Kind::sheared_class_sample;
        if (sheared && !regime)
          throw ConfigError("reference: sheared-class-sample needs a regime");
        for (int t = 0; t < spec.count; ++t) {
          int cls = t % 2;
          int idx = reserved[cls]++;
          if (idx >= source.pool_size(cls))
            throw InsufficientData("reference: class pool exhausted");
          if (sheared) {
            ShearParams p = sample_shear(*regime, rng);
            refs.push_back(std::make_shared<DiscreteMeasure>(
                source.measure(cls, idx, &p)));
          } else {
            refs.push_back(std::make_shared<DiscreteMeasure>(
                source.measure(cls, idx, nullptr)));
          }
        }
        break;
      }
    }
  }
  if (reserved_out) *reserved_out = std::max(reserved[0], reserved[1]);
  return refs;
}

// ---- trials ----------------------------------------------------------------

struct TrialSpec {
  const MeasureSource* source = nullptr;
  std::optional<ShearRegime> regime;  // nullopt disables shearing
  std::vector<std::shared_ptr<const DiscreteMeasure>> references;
  int n_train = 10;  // per class
  int n_test = 200;  // per class
  int repeats = 10;
  int reserved = 0;  // leading pool indices per class kept for references
  EmbedOptions embed;
  double shrinkage = 0.1;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct TrialReport {
  int n_train_per_class = 0;
  int n_test_per_class = 0;
  int repeats = 0;
  double mean_error = 0.0;
  double std_error = 0.0;  // population std over repeats
  std::vector<double> per_trial_errors;
};

inline nlohmann::json trial_report_to_json(const TrialReport& r) {
  return {{"n_train_per_class", r.n_train_per_class},
          {"n_test_per_class", r.n_test_per_class},
          {"repeats", r.repeats},
          {"mean_error", r.mean_error},
          {"std_error", r.std_error},
          {"per_trial_errors", r.per_trial_errors}};
}

namespace detail {

struct RepeatOutput {
  double error = 0.0;
  std::vector<double> projections;  // signed LDA scores of the test items
  std::vector<int> test_labels;
};

inline RepeatOutput run_repeat(const TrialSpec& spec, int repeat) {
  Rng rng = Rng::stream(spec.seed, static_cast<std::uint64_t>(repeat));
  auto [label_a, label_b] = spec.source->labels();

  // Draw order is pinned: indices for class 0, indices for class 1, then one
  // shear per item in feature order. Everything downstream is deterministic.
  std::vector<int> idx[2];
  for (int cls = 0; cls < 2; ++cls) {
    int pool = spec.source->pool_size(cls);
    int avail = pool - spec.reserved;
    if (avail < spec.n_train + spec.n_test)
      throw InsufficientData(
          "run_binary_trial: class pool " + std::to_string(cls) + " has " +
          std::to_string(avail) + " usable items, needs " +
          std::to_string(spec.n_train + spec.n_test));
    idx[cls] = rng.sample_without_replacement(avail, spec.n_train + spec.n_test);
    for (int& v : idx[cls]) v += spec.reserved;
  }

  struct Item {
    int cls;
    int index;
    bool train;
  };
  std::vector<Item> items;
  items.reserve(2 * (spec.n_train + spec.n_test));
  for (int cls = 0; cls < 2; ++cls)
    for (int t = 0; t < spec.n_train; ++t)
      items.push_back({cls, idx[cls][t], true});
  for (int cls = 0; cls < 2; ++cls)
    for (int t = 0; t < spec.n_test; ++t)
      items.push_back({cls, idx[cls][spec.n_train + t], false});

  std::vector<std::optional<ShearParams>> shears(items.size());
  if (spec.regime)
    for (auto& s : shears) s = sample_shear(*spec.regime, rng);

  Eigen::Index width = 0;
  for (const auto& r : spec.references)
    width += static_cast<Eigen::Index>(r->size()) * r->dim();

  Eigen::MatrixXd train_x(2 * spec.n_train, width);
  Eigen::MatrixXd test_x(2 * spec.n_test, width);
  std::vector<int> train_y, test_y;
  Eigen::Index train_row = 0, test_row = 0;
  for (std::size_t t = 0; t < items.size(); ++t) {
    DiscreteMeasure m = spec.source->measure(
        items[t].cls, items[t].index,
        shears[t] ? &*shears[t] : nullptr);
    Eigen::Index off = 0;
    Eigen::MatrixXd& dst = items[t].train ? train_x : test_x;
    Eigen::Index row = items[t].train ? train_row++ : test_row++;
    for (const auto& ref : spec.references) {
      LotFeature f = embed(ref, m, spec.embed);
      for (std::size_t v = 0; v < f.values.size(); ++v)
        dst(row, off + static_cast<Eigen::Index>(v)) = f.values[v];
      off += static_cast<Eigen::Index>(f.values.size());
    }
    int label = items[t].cls == 0 ? label_a : label_b;
    (items[t].train ? train_y : test_y).push_back(label);
  }

  LdaModel model = lda_fit(train_x, train_y, spec.shrinkage);
  std::vector<int> pred = lda_predict(model, test_x);
  int wrong = 0;
  RepeatOutput out;
  out.projections.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] != test_y[i]) ++wrong;
    out.projections[i] = lda_projection(model, test_x.row(i).transpose());
  }
  out.error = static_cast<double>(wrong) / static_cast<double>(pred.size());
  out.test_labels = std::move(test_y);
  return out;
}

}  // namespace detail

// Repeated shear-embed-classify trials. Each repeat draws its own train/test
// split and shears from a stream derived from (seed, repeat), so results do
// not depend on the number of worker threads.
inline TrialReport run_binary_trial(
    const TrialSpec& spec,
    std::vector<detail::RepeatOutput>* raw_outputs = nullptr) {
  if (spec.source == nullptr)
    throw InvalidArgument("run_binary_trial: no source");
  if (spec.references.empty())
    throw InvalidArgument("run_binary_trial: no references");
  if (spec.n_train < 1 || spec.n_test < 1 || spec.repeats < 1)
    throw InvalidArgument("run_binary_trial: counts must be >= 1");

  std::vector<detail::RepeatOutput> outputs(spec.repeats);
  int jobs = std::max(1, spec.jobs);
  if (jobs == 1) {
    for (int r = 0; r < spec.repeats; ++r) outputs[r] = detail::run_repeat(spec, r);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex err_mutex;
    auto worker = [&] {
      for (;;) {
        int r = next.fetch_add(1);
        if (r >= spec.repeats) return;
        try {
          outputs[r] = detail::run_repeat(spec, r);
        } catch (...) {
          std::scoped_lock lk(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> threads;
    for (int t = 0; t < std::min(jobs, spec.repeats); ++t)
      threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  TrialReport rep;
  rep.n_train_per_class = spec.n_train;
  rep.n_test_per_class = spec.n_test;
  rep.repeats = spec.repeats;
  rep.per_trial_errors.reserve(spec.repeats);
  double sum = 0.0;
  for (const auto& o : outputs) {
    rep.per_trial_errors.push_back(o.error);
    sum += o.error;
  }
  rep.mean_error = sum / spec.repeats;
  double var = 0.0;
  for (double e : rep.per_trial_errors) {
    double d = e - rep.mean_error;
    var += d * d;
  }
  rep.std_error = std::sqrt(var / spec.repeats);
  if (raw_outputs) *raw_outputs = std::move(outputs);
  return rep;
}

}  // namespace lotlab
