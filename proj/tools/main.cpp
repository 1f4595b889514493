// lotlab command-line front end: config-driven embedding and classification
// experiments, bound calculators, compatibility sweeps, image shearing, and
// fixture generation. All commands are deterministic given (config, seed).
#include <CLI11.hpp>

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lotlab/classify.hpp"
#include "lotlab/config.hpp"
#include "lotlab/gaussian_ot.hpp"
#include "lotlab/io.hpp"
#include "lotlab/lot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lotlab;

namespace {

// CSV field quoting: wrap when the text contains a comma, quote, or newline.
std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string regime_name(const std::optional<ShearRegime>& regime) {
  if (!regime) return "none";
  auto same = [&](const ShearRegime& r) {
    return regime->lambda_lo == r.lambda_lo && regime->lambda_hi == r.lambda_hi &&
           regime->theta_lo == r.theta_lo && regime->theta_hi == r.theta_hi &&
           regime->shift_lo == r.shift_lo && regime->shift_hi == r.shift_hi;
  };
  if (same(ShearRegime::mild())) return "mild";
  if (same(ShearRegime::severe())) return "severe";
  return "custom";
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot open output file: " + path.string());
  return out;
}

void emit_json(const json& j, const std::string& output_file) {
  if (output_file.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream out = open_out(output_file);
    out << j.dump(2) << "\n";
  }
}

json gaussian_to_json(const GaussianMeasure& g) {
  std::vector<double> mean(g.mean.data(), g.mean.data() + g.mean.size());
  std::vector<std::vector<double>> cov;
  for (int r = 0; r < g.dim(); ++r) {
    cov.emplace_back();
    for (int c = 0; c < g.dim(); ++c) cov.back().push_back(g.covariance(r, c));
  }
  return {{"mean", mean}, {"cov", cov}};
}

struct CommonOverrides {
  std::optional<std::uint64_t> seed;
  std::string output;
  int jobs = 1;
};

struct LoadedExperiment {
  json raw;
  ExperimentConfig config;
  std::string hash_hex_str;
};

LoadedExperiment load_experiment(const std::string& config_path,
                                 const CommonOverrides& common) {
  LoadedExperiment e;
  e.raw = load_config_json(config_path);
  e.config = parse_experiment_config(e.raw);
  if (common.seed) e.config.seed = *common.seed;
  if (!common.output.empty()) e.config.output = common.output;
  if (e.config.output.empty()) e.config.output = ".";
  // The hash covers the effective inputs: the file plus any CLI override.
  json hashed = e.raw;
  hashed["seed"] = e.config.seed;
  e.hash_hex_str = hash_hex(config_hash(hashed));
  return e;
}

// ---- embed -----------------------------------------------------------------

int cmd_embed(const std::string& config_path, const CommonOverrides& common) {
  LoadedExperiment e = load_experiment(config_path, common);
  const ExperimentConfig& c = e.config;
  std::unique_ptr<MeasureSource> source = make_source(c);

  int reserved = 0;
  auto references = materialize_references(c.references, *source, c.regime,
                                           c.seed, &reserved);

  // Embeds a fixed per-class slice of the pool (the first items after any
  // reserved reference indices), sheared once per item when a regime is set.
  const int per_class = c.n_train.front() + c.n_test;
  for (int cls = 0; cls < 2; ++cls)
    if (source->pool_size(cls) - reserved < per_class)
      throw InsufficientData("embed: class " + std::to_string(cls) +
                             " pool too small for n_train + n_test items");

  Rng shear_rng = Rng::stream(c.seed, 0xE4BEDULL);
  std::vector<std::string> ids;
  std::vector<DiscreteMeasure> measures;
  auto [label_a, label_b] = source->labels();
  for (int cls = 0; cls < 2; ++cls) {
    for (int t = 0; t < per_class; ++t) {
      int index = reserved + t;
      std::optional<ShearParams> p;
      if (c.regime) p = sample_shear(*c.regime, shear_rng);
      measures.push_back(source->measure(cls, index, p ? &*p : nullptr));
      int label = cls == 0 ? label_a : label_b;
      ids.push_back("c" + std::to_string(label) + "_i" + std::to_string(index));
    }
  }

  fs::create_directories(c.output);
  for (std::size_t r = 0; r < references.size(); ++r) {
    std::vector<LotFeature> features;
    features.reserve(measures.size());
    for (const auto& m : measures)
      features.push_back(embed(references[r], m, c.embed));
    fs::path path = fs::path(c.output) /
                    ("features_ref" + std::to_string(r) + ".csv");
    std::ofstream out = open_out(path);
    write_features_csv(out, features, ids);
  }
  std::cout << "wrote " << references.size() << " feature file(s) for "
            << measures.size() << " measures to " << c.output << "\n";
  return 0;
}

// ---- classify ----------------------------------------------------------------

int run_classify_sweep(const LoadedExperiment& e, const CommonOverrides& common,
                       bool projections) {
  const ExperimentConfig& c = e.config;
  std::unique_ptr<MeasureSource> source = make_source(c);

  int reserved = 0;
  auto references = materialize_references(c.references, *source, c.regime,
                                           c.seed, &reserved);

  std::vector<int> ref_counts = c.reference_counts;
  if (ref_counts.empty()) ref_counts = {static_cast<int>(references.size())};
  for (int v : ref_counts)
    if (v < 1 || v > static_cast<int>(references.size()))
      throw ConfigError("reference_counts entry " + std::to_string(v) +
                        " exceeds the " + std::to_string(references.size()) +
                        " materialized references");

  fs::create_directories(c.output);
  std::ofstream results = open_out(fs::path(c.output) / "results.csv");
  results << "config_hash,n_train,n_refs,regime,mean_error,std_error,error\n";
  std::ofstream proj_out;
  if (projections) {
    proj_out = open_out(fs::path(c.output) / "projections.csv");
    proj_out << "n_train,n_refs,repeat,item,label,projection\n";
  }

  json report = json::array();
  bool any_failed = false;
  for (int n_train : c.n_train) {
    for (int n_refs : ref_counts) {
      results << e.hash_hex_str << "," << n_train << "," << n_refs << ","
              << regime_name(c.regime) << ",";
      try {
        TrialSpec spec;
        spec.source = source.get();
        spec.regime = c.regime;
        spec.references.assign(references.begin(),
                               references.begin() + n_refs);
        spec.n_train = n_train;
        spec.n_test = c.n_test;
        spec.repeats = c.repeats;
        spec.reserved = reserved;
        spec.embed = c.embed;
        spec.shrinkage = c.shrinkage;
        spec.seed = c.seed;
        spec.jobs = common.jobs;
        std::vector<detail::RepeatOutput> raw;
        TrialReport r = run_binary_trial(spec, projections ? &raw : nullptr);
        results << format_g17(r.mean_error) << "," << format_g17(r.std_error)
                << ",\n";
        json entry = trial_report_to_json(r);
        entry["n_refs"] = n_refs;
        entry["config_hash"] = e.hash_hex_str;
        report.push_back(std::move(entry));
        for (std::size_t rep = 0; rep < raw.size(); ++rep)
          for (std::size_t i = 0; i < raw[rep].projections.size(); ++i)
            proj_out << n_train << "," << n_refs << "," << rep << "," << i
                     << "," << raw[rep].test_labels[i] << ","
                     << format_g17(raw[rep].projections[i]) << "\n";
      } catch (const Error& err) {
        any_failed = true;
        results << ",," << csv_escape(err.what()) << "\n";
      }
    }
  }
  std::ofstream rj = open_out(fs::path(c.output) / "report.json");
  rj << report.dump(2) << "\n";
  std::cout << "wrote results.csv" << (projections ? ", projections.csv" : "")
            << " and report.json to " << c.output << "\n";
  return any_failed ? 1 : 0;
}

int run_all_pairs(const LoadedExperiment& e, const CommonOverrides& common) {
  const ExperimentConfig& c = e.config;
  if (c.dataset != "mnist")
    throw ConfigError("--all-pairs requires the mnist dataset");
  MnistData data = load_mnist_idx(resolve_data_path(c.images_path),
                                  resolve_data_path(c.labels_path));

  fs::create_directories(c.output);
  std::ofstream out = open_out(fs::path(c.output) / "pairs.csv");
  out << "config_hash,class_a,class_b,n_train,n_refs,regime,mean_error,"
         "std_error,error\n";
  bool any_failed = false;
  for (int a = 0; a <= 9; ++a) {
    for (int b = a + 1; b <= 9; ++b) {
      out << e.hash_hex_str << "," << a << "," << b << ","
          << c.n_train.front() << ",";
      try {
        ImageClassSource source(data.images, data.labels, a, b);
        int reserved = 0;
        auto references = materialize_references(c.references, source,
                                                 c.regime, c.seed, &reserved);
        out << references.size() << "," << regime_name(c.regime) << ",";
        TrialSpec spec;
        spec.source = &source;
        spec.regime = c.regime;
        spec.references = references;
        spec.n_train = c.n_train.front();
        spec.n_test = c.n_test;
        spec.repeats = c.repeats;
        spec.reserved = reserved;
        spec.embed = c.embed;
        spec.shrinkage = c.shrinkage;
        spec.seed = c.seed;
        spec.jobs = common.jobs;
        TrialReport r = run_binary_trial(spec);
        out << format_g17(r.mean_error) << "," << format_g17(r.std_error)
            << ",\n";
      } catch (const Error& err) {
        any_failed = true;
        out << ",,," << csv_escape(err.what()) << "\n";
      }
    }
  }
  std::cout << "wrote pairs.csv to " << c.output << "\n";
  return any_failed ? 1 : 0;
}

// ---- bounds ------------------------------------------------------------------

int cmd_bounds(double w2, double delta, double epsilon, double r1, double r2,
               double m_b, double l, double delta_star,
               const std::string& output_file) {
  json out;
  try {
    out["transformation_budget"] = transformation_budget(w2, delta, epsilon);
  } catch (const Error& err) {
    out["transformation_budget"] = {{"infeasible", err.what()}};
  }
  try {
    SeparationInputs in;
    in.w2 = w2;
    in.delta = delta;
    in.epsilon = epsilon;
    in.r1 = r1;
    in.r2 = r2;
    in.m_b = m_b;
    ShearClassBounds b = shear_class_bounds(in);
    json jb = {{"case", b.case_id},
               {"m_max", b.m_max},
               {"m_b_interval", {b.m_b_interval.first, b.m_b_interval.second}},
               {"m_feasible", b.m_feasible}};
    if (b.gamma_min) jb["gamma_min"] = *b.gamma_min;
    out["shear_class_bounds"] = std::move(jb);
  } catch (const Error& err) {
    out["shear_class_bounds"] = {{"infeasible", err.what()}};
  }
  try {
    out["min_references"] = min_references(delta_star, w2, l, epsilon);
  } catch (const Error& err) {
    out["min_references"] = {{"infeasible", err.what()}};
  }
  emit_json(out, output_file);
  return 0;
}

// ---- verify-compat -----------------------------------------------------------

int cmd_verify_compat(const std::string& config_path,
                      const std::string& output_file) {
  json j = load_config_json(config_path);
  detail::check_keys(j,
                     {"schema", "template", "basis_theta_deg", "ref_diag",
                      "ref_shift", "side", "extraction", "shears",
                      "rotation_controls"},
                     "top level");
  if (!j.contains("schema") || j.at("schema").get<int>() != 1)
    throw ConfigError("config: requires \"schema\": 1");
  GaussianMeasure mu = detail::parse_gaussian(j.at("template"), "template");
  if (mu.dim() != 2)
    throw ConfigError("verify-compat: template must be 2-d");

  double theta = j.value("basis_theta_deg", 0.0) * std::numbers::pi / 180.0;
  Eigen::Matrix2d p;
  p << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);

  auto vec2 = [&](const char* key, Eigen::Vector2d fallback) {
    if (!j.contains(key)) return fallback;
    auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 2)
      throw ConfigError(std::string("verify-compat: ") + key +
                        " must have two entries");
    return Eigen::Vector2d(v[0], v[1]);
  };
  Eigen::Vector2d ref_diag = vec2("ref_diag", Eigen::Vector2d(1.0, 1.0));
  Eigen::Vector2d ref_shift = vec2("ref_shift", Eigen::Vector2d(0.0, 0.0));
  const int side = j.value("side", 0);

  GaussianMeasure sigma = make_compatible_reference(mu, p, ref_diag, ref_shift);

  EmbedOptions embed_opts;
  embed_opts.extraction = Extraction::barycentric;
  if (j.contains("extraction")) {
    std::string e = j.at("extraction").get<std::string>();
    if (e == "argmax") embed_opts.extraction = Extraction::argmax;
    else if (e == "barycentric") embed_opts.extraction = Extraction::barycentric;
    else throw ConfigError("verify-compat: unknown extraction \"" + e + "\"");
  }

  json out;
  out["reference"] = gaussian_to_json(sigma);
  out["basis_theta_deg"] = j.value("basis_theta_deg", 0.0);
  out["shears"] = json::array();

  std::shared_ptr<const DiscreteMeasure> ref_grid, mu_grid;
  std::optional<LotFeature> mu_feature;
  if (side > 0) {
    ref_grid = std::make_shared<DiscreteMeasure>(
        gaussian_grid_reference(sigma, side));
    mu_grid = std::make_shared<DiscreteMeasure>(
        gaussian_grid_reference(mu, side));
    mu_feature = embed(ref_grid, *mu_grid, embed_opts);
  }

  if (!j.contains("shears") || !j.at("shears").is_array())
    throw ConfigError("verify-compat: shears must be an array");
  for (const auto& sj : j.at("shears")) {
    detail::check_keys(sj, {"lambda", "shift"}, "shear entry");
    auto lam = sj.at("lambda").get<std::vector<double>>();
    if (lam.size() != 2 || lam[0] <= 0.0 || lam[1] <= 0.0)
      throw ConfigError("verify-compat: shear lambda must be two positives");
    Eigen::Vector2d shift(0.0, 0.0);
    if (sj.contains("shift")) {
      auto sv = sj.at("shift").get<std::vector<double>>();
      if (sv.size() != 2)
        throw ConfigError("verify-compat: shear shift must have two entries");
      shift = Eigen::Vector2d(sv[0], sv[1]);
    }
    Eigen::Matrix2d lam_m = Eigen::Vector2d(lam[0], lam[1]).asDiagonal();
    Eigen::Matrix2d a = p.transpose() * lam_m * p;
    AffineMap s(0.5 * (a + a.transpose().eval()), shift);

    json entry = {{"lambda", lam}, {"shift", {shift[0], shift[1]}}};
    entry["analytic_residual"] = compatibility_residual(sigma, mu, s);
    if (side > 0) {
      GaussianMeasure nu = pushforward(mu, s);
      DiscreteMeasure nu_grid = gaussian_grid_reference(nu, side);
      LotFeature nu_feature = embed(ref_grid, nu_grid, embed_opts);
      double lot = lot_distance(*mu_feature, nu_feature);
      double w2 = gaussian_w2(mu, nu);
      entry["w2"] = w2;
      entry["lot"] = lot;
      entry["relative_error"] = std::abs(lot - w2) / (w2 > 0.0 ? w2 : 1.0);
    }
    out["shears"].push_back(std::move(entry));
  }

  if (j.contains("rotation_controls")) {
    out["rotation_controls"] = json::array();
    for (double deg : j.at("rotation_controls").get<std::vector<double>>()) {
      double t = deg * std::numbers::pi / 180.0;
      Eigen::Matrix2d r;
      r << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
      AffineMap s(r, Eigen::Vector2d::Zero());
      out["rotation_controls"].push_back(
          {{"theta_deg", deg},
           {"analytic_residual", compatibility_residual(sigma, mu, s)}});
    }
  }

  emit_json(out, output_file);
  return 0;
}

// ---- shear -------------------------------------------------------------------

int cmd_shear(const std::string& input, const std::string& output,
              const ShearParams& params) {
  ImageGrid img = read_pgm(input);
  ImageGrid sheared = shear_image(img, params);
  if (fs::path(output).has_parent_path())
    fs::create_directories(fs::path(output).parent_path());
  write_pgm(sheared, output);
  std::cout << "wrote " << output << "\n";
  return 0;
}

// ---- fixture -----------------------------------------------------------------

int cmd_fixture(const std::string& output, int count, int side,
                std::uint64_t seed) {
  write_fixture(output, count, side, seed);
  std::cout << "wrote " << count << " images (side " << side << ", seed "
            << seed << ") to " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "lotlab: optimal-transport embeddings, separation bounds, and "
      "shear-robust classification experiments"};
  app.require_subcommand(1);

  CommonOverrides common;
  std::string config_path, output_file;

  // embed
  auto* embed_cmd = app.add_subcommand(
      "embed", "Embed a slice of the dataset against each configured "
               "reference; one feature CSV per reference");
  embed_cmd->add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  std::uint64_t seed_flag = 0;
  auto* embed_seed =
      embed_cmd->add_option("--seed", seed_flag, "override config seed");
  embed_cmd->add_option("--output", common.output, "override output directory");

  // classify
  auto* classify_cmd = app.add_subcommand(
      "classify", "Repeated shear-embed-classify trials; results CSV plus "
                  "JSON report");
  classify_cmd->add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  auto* classify_seed =
      classify_cmd->add_option("--seed", seed_flag, "override config seed");
  classify_cmd->add_option("--output", common.output,
                           "override output directory");
  classify_cmd->add_option("--jobs", common.jobs, "worker threads for repeats")
      ->check(CLI::PositiveNumber);
  bool all_pairs = false, projections = false;
  classify_cmd->add_flag("--all-pairs", all_pairs,
                         "sweep all 45 digit pairs (mnist only)");
  classify_cmd->add_flag("--projections", projections,
                         "also write per-item signed LDA projections");

  // bounds
  auto* bounds_cmd = app.add_subcommand(
      "bounds", "Evaluate separation-bound formulas; JSON to stdout or file");
  double w2 = 0, delta = 0, epsilon = 0, r1 = 0, r2 = 0, m_b = 0, l = 0,
         delta_star = 0;
  bounds_cmd->add_option("--w2", w2, "template distance")->required();
  bounds_cmd->add_option("--delta", delta, "separation allowance");
  bounds_cmd->add_option("--epsilon", epsilon, "per-class embedding error");
  bounds_cmd->add_option("--r1", r1, "support radius, class 1");
  bounds_cmd->add_option("--r2", r2, "support radius, class 2");
  bounds_cmd->add_option("--m-b", m_b, "shift budget");
  bounds_cmd->add_option("--l", l, "transformation budget for min_references");
  bounds_cmd->add_option("--delta-star", delta_star,
                         "target multi-reference margin");
  bounds_cmd->add_option("--output", output_file, "write JSON here");

  // verify-compat
  auto* verify_cmd = app.add_subcommand(
      "verify-compat", "Analytic and discretized compatibility residuals for "
                       "a shear sweep");
  verify_cmd->add_option("--config", config_path, "sweep config (JSON)")
      ->required();
  verify_cmd->add_option("--output", output_file, "write JSON here");

  // shear
  auto* shear_cmd =
      app.add_subcommand("shear", "Apply a shear to a PGM image");
  std::string shear_in, shear_out;
  ShearParams params;
  double shift_x = 0.0, shift_y = 0.0;
  shear_cmd->add_option("--input", shear_in, "input PGM")->required();
  shear_cmd->add_option("--output", shear_out, "output PGM")->required();
  shear_cmd->add_option("--lambda1", params.lambda1, "first-axis scaling");
  shear_cmd->add_option("--lambda2", params.lambda2, "second-axis scaling");
  shear_cmd->add_option("--theta", params.theta_deg, "basis angle (degrees)");
  shear_cmd->add_option("--shift-x", shift_x, "row shift (pixels)");
  shear_cmd->add_option("--shift-y", shift_y, "column shift (pixels)");

  // fixture
  auto* fixture_cmd = app.add_subcommand(
      "fixture", "Generate the deterministic image fixture set");
  std::string fixture_out;
  int fixture_count = 64, fixture_side = 28;
  std::uint64_t fixture_seed = 9001;
  fixture_cmd->add_option("--output", fixture_out, "fixture directory")
      ->required();
  fixture_cmd->add_option("--count", fixture_count, "number of images")
      ->check(CLI::PositiveNumber);
  fixture_cmd->add_option("--side", fixture_side, "image side in pixels")
      ->check(CLI::PositiveNumber);
  fixture_cmd->add_option("--seed", fixture_seed, "generation seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*embed_cmd) {
      if (*embed_seed) common.seed = seed_flag;
      return cmd_embed(config_path, common);
    }
    if (*classify_cmd) {
      if (*classify_seed) common.seed = seed_flag;
      LoadedExperiment e = load_experiment(config_path, common);
      if (all_pairs) return run_all_pairs(e, common);
      return run_classify_sweep(e, common, projections);
    }
    if (*bounds_cmd)
      return cmd_bounds(w2, delta, epsilon, r1, r2, m_b, l, delta_star,
                        output_file);
    if (*verify_cmd) return cmd_verify_compat(config_path, output_file);
    if (*shear_cmd) {
      params.shift = Eigen::Vector2d(shift_x, shift_y);
      return cmd_shear(shear_in, shear_out, params);
    }
    if (*fixture_cmd)
      return cmd_fixture(fixture_out, fixture_count, fixture_side,
                         fixture_seed);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
