#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lotlab/classify.hpp"
#include "lotlab/errors.hpp"
#include "lotlab/measures.hpp"
#include "lotlab/rng.hpp"
#include "lotlab/transforms.hpp"

namespace lotlab {

namespace detail {

// Unknown keys are configuration bugs; fail fast instead of ignoring them.
inline void check_keys(const nlohmann::json& j,
                       std::initializer_list<const char*> allowed,
                       const std::string& context) {
  if (!j.is_object())
    throw ConfigError("config: " + context + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed)
      if (it.key() == a) {
        ok = true;
        break;
      }
    if (!ok)
      throw ConfigError("config: unknown key \"" + it.key() + "\" in " +
                        context);
  }
}

inline GaussianMeasure parse_gaussian(const nlohmann::json& j,
                                      const std::string& context) {
  check_keys(j, {"mean", "cov"}, context);
  auto mean = j.at("mean").get<std::vector<double>>();
  auto cov_rows = j.at("cov").get<std::vector<std::vector<double>>>();
  const int d = static_cast<int>(mean.size());
  if (static_cast<int>(cov_rows.size()) != d)
    throw ConfigError("config: " + context + ": cov has wrong row count");
  Eigen::VectorXd m(d);
  Eigen::MatrixXd c(d, d);
  for (int i = 0; i < d; ++i) {
    m[i] = mean[i];
    if (static_cast<int>(cov_rows[i].size()) != d)
      throw ConfigError("config: " + context + ": cov is not square");
    for (int k = 0; k < d; ++k) c(i, k) = cov_rows[i][k];
  }
  return GaussianMeasure(std::move(m), std::move(c));
}

}  // namespace detail

struct ExperimentConfig {
  std::string dataset;  // "synthetic" | "mnist"

  // synthetic
  std::optional<GaussianMeasure> syn_a, syn_b;
  int n_atoms = 64;
  int pool_size = 100000;

  // mnist
  std::string images_path, labels_path;
  int class_a = 0, class_b = 1;

  std::optional<ShearRegime> regime = ShearRegime::mild();
  std::vector<ReferenceSpec> references;
  std::vector<int> reference_counts;  // prefix sizes; empty = all references
  std::vector<int> n_train{10};
  int n_test = 200;
  int repeats = 10;
  std::uint64_t seed = 0;
  EmbedOptions embed;
  double shrinkage = 0.1;
  std::string output;
};

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  detail::check_keys(
      j,
      {"schema", "dataset", "synthetic", "mnist", "regime", "references",
       "reference_counts", "n_train", "n_test", "repeats", "seed",
       "extraction", "centered", "solver", "shrinkage", "output"},
      "top level");
  if (!j.contains("schema") || j.at("schema").get<int>() != 1)
    throw ConfigError("config: requires \"schema\": 1");

  ExperimentConfig c;
  c.dataset = j.at("dataset").get<std::string>();
  if (c.dataset == "synthetic") {
    const auto& s = j.at("synthetic");
    detail::check_keys(s, {"class_a", "class_b", "n_atoms", "pool_size"},
                       "synthetic");
    c.syn_a = detail::parse_gaussian(s.at("class_a"), "synthetic.class_a");
    c.syn_b = detail::parse_gaussian(s.at("class_b"), "synthetic.class_b");
    if (s.contains("n_atoms")) c.n_atoms = s.at("n_atoms").get<int>();
    if (s.contains("pool_size")) c.pool_size = s.at("pool_size").get<int>();
    if (c.n_atoms < 1) throw ConfigError("config: n_atoms must be >= 1");
  } else if (c.dataset == "mnist") {
    const auto& m = j.at("mnist");
    detail::check_keys(m, {"images", "labels", "class_a", "class_b"}, "mnist");
    c.images_path = m.at("images").get<std::string>();
    c.labels_path = m.at("labels").get<std::string>();
    c.class_a = m.at("class_a").get<int>();
    c.class_b = m.at("class_b").get<int>();
    if (c.class_a == c.class_b)
      throw ConfigError("config: mnist classes must differ");
  } else {
    throw ConfigError("config: dataset must be \"synthetic\" or \"mnist\"");
  }

  if (j.contains("regime")) {
    const auto& r = j.at("regime");
    if (r.is_string()) {
      std::string name = r.get<std::string>();
      if (name == "mild") c.regime = ShearRegime::mild();
      else if (name == "severe") c.regime = ShearRegime::severe();
      else if (name == "none") c.regime.reset();
      else throw ConfigError("config: unknown regime \"" + name + "\"");
    } else {
      detail::check_keys(r, {"lambda", "theta", "shift"}, "regime");
      ShearRegime reg = ShearRegime::mild();
      auto range = [&](const char* key, double& lo, double& hi) {
        if (!r.contains(key)) return;
        auto v = r.at(key).get<std::vector<double>>();
        if (v.size() != 2)
          throw ConfigError(std::string("config: regime.") + key +
                            " must be [lo, hi]");
        lo = v[0];
        hi = v[1];
      };
      range("lambda", reg.lambda_lo, reg.lambda_hi);
      range("theta", reg.theta_lo, reg.theta_hi);
      range("shift", reg.shift_lo, reg.shift_hi);
      if (reg.lambda_lo <= 0.0 || reg.lambda_hi < reg.lambda_lo)
        throw ConfigError("config: bad lambda range");
      c.regime = reg;
    }
  }

  if (!j.contains("references") || !j.at("references").is_array() ||
      j.at("references").empty())
    throw ConfigError("config: references must be a nonempty array");
  for (const auto& r : j.at("references")) {
    ReferenceSpec spec;
    std::string type = r.at("type").get<std::string>();
    if (type == "gaussian") {
      detail::check_keys(r, {"type", "mean", "cov"}, "reference");
      spec.kind = ReferenceSpec::Kind::gaussian;
      nlohmann::json g = {{"mean", r.at("mean")}, {"cov", r.at("cov")}};
      spec.gaussian = detail::parse_gaussian(g, "reference");
    } else if (type == "class-sample" || type == "sheared-class-sample") {
      detail::check_keys(r, {"type", "count"}, "reference");
      spec.kind = type == "class-sample"
                      ? ReferenceSpec::Kind::class_sample
                      : ReferenceSpec::Kind::sheared_class_sample;
      spec.count = r.at("count").get<int>();
      if (spec.count < 1) throw ConfigError("config: reference count < 1");
    } else {
      throw ConfigError("config: unknown reference type \"" + type + "\"");
    }
    c.references.push_back(std::move(spec));
  }

  if (j.contains("reference_counts")) {
    c.reference_counts = j.at("reference_counts").get<std::vector<int>>();
    for (int v : c.reference_counts)
      if (v < 1) throw ConfigError("config: reference_counts entries must be >= 1");
  }
  if (j.contains("n_train")) {
    const auto& nt = j.at("n_train");
    if (nt.is_array()) c.n_train = nt.get<std::vector<int>>();
    else c.n_train = {nt.get<int>()};
    for (int v : c.n_train)
      if (v < 1) throw ConfigError("config: n_train entries must be >= 1");
  }
  if (j.contains("n_test")) c.n_test = j.at("n_test").get<int>();
  if (j.contains("repeats")) c.repeats = j.at("repeats").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("extraction")) {
    std::string e = j.at("extraction").get<std::string>();
    if (e == "argmax") c.embed.extraction = Extraction::argmax;
    else if (e == "barycentric") c.embed.extraction = Extraction::barycentric;
    else throw ConfigError("config: unknown extraction \"" + e + "\"");
  }
  if (j.contains("centered")) c.embed.centered = j.at("centered").get<bool>();
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    detail::check_keys(s, {"type", "epsilon", "max_iter", "tol"}, "solver");
    std::string type = s.at("type").get<std::string>();
    if (type == "exact") {
      c.embed.solver = SolverKind::exact;
    } else if (type == "sinkhorn") {
      c.embed.solver = SolverKind::sinkhorn;
      if (s.contains("epsilon"))
        c.embed.sinkhorn.epsilon = s.at("epsilon").get<double>();
      if (s.contains("max_iter"))
        c.embed.sinkhorn.max_iter = s.at("max_iter").get<int>();
      if (s.contains("tol")) c.embed.sinkhorn.tol = s.at("tol").get<double>();
    } else {
      throw ConfigError("config: unknown solver \"" + type + "\"");
    }
  }
  if (j.contains("shrinkage")) c.shrinkage = j.at("shrinkage").get<double>();
  if (j.contains("output")) c.output = j.at("output").get<std::string>();
  if (c.n_test < 1 || c.repeats < 1)
    throw ConfigError("config: n_test and repeats must be >= 1");
  return c;
}

inline nlohmann::json load_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  return nlohmann::json::parse(in);
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(load_config_json(path));
}

// Stable fingerprint of the parsed config for result provenance columns.
inline std::uint64_t config_hash(const nlohmann::json& j) {
  std::string dump = j.dump();
  return fnv1a64(dump.data(), dump.size());
}

// Relative dataset paths missing from the working directory fall back to
// LOTLAB_DATA_DIR.
inline std::string resolve_data_path(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::exists(path)) return path;
  if (auto dir = data_dir_from_env()) {
    fs::path joined = fs::path(*dir) / path;
    if (fs::exists(joined)) return joined.string();
  }
  throw IoError("dataset file not found: " + path +
                " (also tried LOTLAB_DATA_DIR)");
}

inline std::unique_ptr<MeasureSource> make_source(const ExperimentConfig& c) {
  if (c.dataset == "synthetic") {
    return std::make_unique<SyntheticGaussianSource>(
        *c.syn_a, *c.syn_b, c.n_atoms, c.seed + 0x5eedULL, c.pool_size);
  }
  MnistData data = load_mnist_idx(resolve_data_path(c.images_path),
                                  resolve_data_path(c.labels_path));
  return std::make_unique<ImageClassSource>(data.images, data.labels,
                                            c.class_a, c.class_b);
}

}  // namespace lotlab
