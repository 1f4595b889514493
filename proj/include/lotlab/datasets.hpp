#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lotlab/errors.hpp"
#include "lotlab/image.hpp"
#include "lotlab/measures.hpp"
#include "lotlab/rng.hpp"

namespace lotlab {

// ---- IDX files -------------------------------------------------------------

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw TruncatedFile("idx: truncated header in " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

inline std::vector<ImageGrid> load_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_idx_images: cannot open " + path);
  std::uint32_t magic = detail::read_be32(in, path);
  if (magic != 2051)
    throw BadMagic("load_idx_images: magic " + std::to_string(magic) +
                   " != 2051 in " + path);
  std::uint32_t count = detail::read_be32(in, path);
  std::uint32_t rows = detail::read_be32(in, path);
  std::uint32_t cols = detail::read_be32(in, path);
  if (rows != cols)
    throw WidthMismatch("load_idx_images: non-square images in " + path);
  std::vector<ImageGrid> images;
  images.reserve(count);
  std::vector<unsigned char> raw(static_cast<std::size_t>(rows) * cols);
  for (std::uint32_t c = 0; c < count; ++c) {
    in.read(reinterpret_cast<char*>(raw.data()), raw.size());
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
      throw TruncatedFile("load_idx_images: truncated raster in " + path);
    std::vector<double> px(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) px[i] = raw[i];
    images.emplace_back(static_cast<int>(rows), std::move(px));
  }
  return images;
}

inline std::vector<int> load_idx_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_idx_labels: cannot open " + path);
  std::uint32_t magic = detail::read_be32(in, path);
  if (magic != 2049)
    throw BadMagic("load_idx_labels: magic " + std::to_string(magic) +
                   " != 2049 in " + path);
  std::uint32_t count = detail::read_be32(in, path);
  std::vector<unsigned char> raw(count);
  in.read(reinterpret_cast<char*>(raw.data()), raw.size());
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw TruncatedFile("load_idx_labels: truncated labels in " + path);
  return std::vector<int>(raw.begin(), raw.end());
}

struct MnistData {
  std::vector<ImageGrid> images;
  std::vector<int> labels;
};

inline MnistData load_mnist_idx(const std::string& images_path,
                                const std::string& labels_path) {
  MnistData d{load_idx_images(images_path), load_idx_labels(labels_path)};
  if (d.images.size() != d.labels.size())
    throw CountMismatch("load_mnist_idx: " + std::to_string(d.images.size()) +
                        " images vs " + std::to_string(d.labels.size()) +
                        " labels");
  return d;
}

inline void write_idx_images(const std::string& path,
                             const std::vector<ImageGrid>& images) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_idx_images: cannot open " + path);
  int side = images.empty() ? 0 : images[0].side;
  detail::write_be32(out, 2051);
  detail::write_be32(out, static_cast<std::uint32_t>(images.size()));
  detail::write_be32(out, static_cast<std::uint32_t>(side));
  detail::write_be32(out, static_cast<std::uint32_t>(side));
  for (const auto& img : images) {
    if (img.side != side)
      throw WidthMismatch("write_idx_images: images of mixed sizes");
    for (double v : img.pixels) {
      double c = std::round(std::clamp(v, 0.0, 255.0));
      unsigned char b = static_cast<unsigned char>(c);
      out.write(reinterpret_cast<const char*>(&b), 1);
    }
  }
  if (!out) throw IoError("write_idx_images: short write to " + path);
}

inline void write_idx_labels(const std::string& path,
                             const std::vector<int>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_idx_labels: cannot open " + path);
  detail::write_be32(out, 2049);
  detail::write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    unsigned char b = static_cast<unsigned char>(l);
    out.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!out) throw IoError("write_idx_labels: short write to " + path);
}

// ---- image <-> measure -----------------------------------------------------

// Cell-center coordinates in the unit square. Row index grows downward in
// the raster, so it is flipped to mathematical y-up here; the x coordinate
// comes from the column. Orientation cancels in every distance computed
// downstream, but fixing it keeps features comparable across tools.
inline void pixel_center(int row, int col, int side, double* xy) {
  xy[0] = (col + 0.5) / side;
  xy[1] = 1.0 - (row + 0.5) / side;
}

// Normalized measure carried by the nonzero pixels.
inline DiscreteMeasure image_to_measure(const ImageGrid& img) {
  std::vector<double> pts, ws;
  double xy[2];
  for (int r = 0; r < img.side; ++r) {
    for (int c = 0; c < img.side; ++c) {
      double v = img.at(r, c);
      if (v < 0.0)
        throw InvalidArgument("image_to_measure: negative pixel value");
      if (v == 0.0) continue;
      pixel_center(r, c, img.side, xy);
      pts.push_back(xy[0]);
      pts.push_back(xy[1]);
      ws.push_back(v);
    }
  }
  if (ws.empty()) throw ZeroTotalMass("image_to_measure: all pixels are zero");
  return normalize(2, std::move(pts), std::move(ws));
}

// Gaussian density sampled at the side x side cell centers of the unit
// square and renormalized. `degenerate` (optional) is set when one cell
// carries more than 99.9% of the mass, i.e. when the grid no longer
// resolves the density.
inline DiscreteMeasure gaussian_grid_reference(const GaussianMeasure& g,
                                               int side,
                                               bool* degenerate = nullptr) {
  if (g.dim() != 2)
    throw DimensionMismatch("gaussian_grid_reference: need a 2-d Gaussian");
  if (side <= 0) throw InvalidArgument("gaussian_grid_reference: bad side");
  Eigen::Matrix2d cov = g.covariance;
  Eigen::Matrix2d prec = cov.inverse();
  std::vector<double> pts(static_cast<std::size_t>(side) * side * 2);
  std::vector<double> ws(static_cast<std::size_t>(side) * side);
  double xy[2];
  double total = 0.0, mx = 0.0;
  std::size_t idx = 0;
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c, ++idx) {
      pixel_center(r, c, side, xy);
      Eigen::Vector2d z(xy[0] - g.mean[0], xy[1] - g.mean[1]);
      double w = std::exp(-0.5 * z.dot(prec * z));
      pts[2 * idx] = xy[0];
      pts[2 * idx + 1] = xy[1];
      ws[idx] = w;
      total += w;
      mx = std::max(mx, w);
    }
  }
  if (!(mx > 1e-300))
    throw ZeroTotalMass(
        "gaussian_grid_reference: density underflows on the whole grid");
  if (degenerate) *degenerate = mx / total > 0.999;
  return normalize(2, std::move(pts), std::move(ws));
}

// n_atoms i.i.d. draws, uniform weights. Deterministic in (seed).
inline DiscreteMeasure synthetic_gaussian_class(const GaussianMeasure& g,
                                                int n_atoms, Rng& rng) {
  if (n_atoms <= 0)
    throw InvalidArgument("synthetic_gaussian_class: n_atoms must be >= 1");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.covariance);
  Eigen::MatrixXd half = es.eigenvectors() *
                         es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                         es.eigenvectors().transpose();
  const int d = g.dim();
  std::vector<double> pts(static_cast<std::size_t>(n_atoms) * d);
  Eigen::VectorXd z(d);
  for (int i = 0; i < n_atoms; ++i) {
    for (int c = 0; c < d; ++c) z[c] = rng.normal();
    Eigen::Map<Eigen::VectorXd>(pts.data() + static_cast<std::size_t>(i) * d,
                                d) = g.mean + half * z;
  }
  return DiscreteMeasure(
      d, std::move(pts),
      std::vector<double>(n_atoms, 1.0 / static_cast<double>(n_atoms)));
}

inline DiscreteMeasure synthetic_gaussian_class(const GaussianMeasure& g,
                                                int n_atoms,
                                                std::uint64_t seed) {
  Rng rng(seed);
  return synthetic_gaussian_class(g, n_atoms, rng);
}

// ---- test fixture ----------------------------------------------------------

// A fixture image is a single compact quartic dome: a centered smooth shape
// on a black background, like a (very stylized) digit. Smoothness and
// compactness are deliberate: bilinear round-trip error scales with the
// second derivative, clipping error with how close content sits to the
// frame, and the shear tests budget 2% of max intensity. The envelope below
// (radius near 0.41 * side, center offset under 0.018 * side, mild
// eccentricity) keeps shear round trips with lambda in [0.8, 1.25] inside
// that budget. The label (index mod 10) modulates radius, eccentricity and
// orientation so the classes are structurally distinct.
inline ImageGrid fixture_image(int side, std::uint64_t seed,
                               std::uint64_t index) {
  Rng rng = Rng::stream(seed, index);
  const int label = static_cast<int>(index % 10);
  const double level = label / 9.0;

  const double radius = (0.405 + 0.010 * level) * side;
  const double ecc = 0.025 * level;
  const double phi =
      (18.0 * label + rng.uniform(-4.0, 4.0)) * std::numbers::pi / 180.0;
  const double off_r = rng.uniform(0.0, 0.018 * side);
  const double off_a = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double cx = side / 2.0 + off_r * std::cos(off_a);
  const double cy = side / 2.0 + off_r * std::sin(off_a);
  const double amp = rng.uniform(230.0, 250.0);

  const double cph = std::cos(phi), sph = std::sin(phi);
  const double stretch = 1.0 + ecc;
  ImageGrid img = ImageGrid::zero(side);
  const int ss = 4;  // supersampling factor
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      double acc = 0.0;
      for (int a = 0; a < ss; ++a) {
        for (int b = 0; b < ss; ++b) {
          double x = r + 1 + (a + 0.5) / ss - 0.5 - cx;
          double y = c + 1 + (b + 0.5) / ss - 0.5 - cy;
          double u1 = (cph * x + sph * y) / stretch;
          double u2 = (-sph * x + cph * y) * stretch;
          double u = std::hypot(u1, u2) / radius;
          if (u < 1.0) {
            double s = 1.0 - u * u;
            acc += amp * s * s;
          }
        }
      }
      img.at(r, c) = std::round(acc / (ss * ss));
    }
  }
  return img;
}

struct Fixture {
  std::vector<ImageGrid> images;
  std::vector<int> labels;
};

inline Fixture make_fixture(int count, int side, std::uint64_t seed) {
  Fixture f;
  f.images.reserve(count);
  for (int i = 0; i < count; ++i) {
    f.images.push_back(fixture_image(side, seed, static_cast<std::uint64_t>(i)));
    f.labels.push_back(i % 10);
  }
  return f;
}

inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("hash_file: cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char out[19];
  std::snprintf(out, sizeof out, "0x%016llx",
                static_cast<unsigned long long>(h));
  return out;
}

constexpr const char* kFixtureImagesName = "fixture-images-idx3-ubyte";
constexpr const char* kFixtureLabelsName = "fixture-labels-idx1-ubyte";

inline void write_fixture(const std::string& dir, int count, int side,
                          std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Fixture f = make_fixture(count, side, seed);
  std::string images_path = (fs::path(dir) / kFixtureImagesName).string();
  std::string labels_path = (fs::path(dir) / kFixtureLabelsName).string();
  write_idx_images(images_path, f.images);
  write_idx_labels(labels_path, f.labels);
  nlohmann::json manifest = {
      {"count", count},
      {"side", side},
      {"seed", seed},
      {"files",
       {{kFixtureImagesName, hash_hex(hash_file(images_path))},
        {kFixtureLabelsName, hash_hex(hash_file(labels_path))}}}};
  std::ofstream out(fs::path(dir) / "manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw IoError("write_fixture: cannot write manifest");
}

// Loads the committed fixture and verifies the manifest hashes, so silent
// corruption of the binary files cannot skew tests.
inline Fixture load_fixture(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw IoError("load_fixture: missing manifest.json in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(mf);
  for (auto& [name, expected] : manifest.at("files").items()) {
    std::string actual = hash_hex(hash_file((fs::path(dir) / name).string()));
    if (actual != expected.get<std::string>())
      throw IoError("load_fixture: hash mismatch for " + name + " (" + actual +
                    " != " + expected.get<std::string>() + ")");
  }
  MnistData d =
      load_mnist_idx((fs::path(dir) / kFixtureImagesName).string(),
                     (fs::path(dir) / kFixtureLabelsName).string());
  if (static_cast<int>(d.images.size()) != manifest.at("count").get<int>())
    throw CountMismatch("load_fixture: manifest count mismatch");
  return Fixture{std::move(d.images), std::move(d.labels)};
}

// Directory for real datasets (optional integrations).
inline std::optional<std::string> data_dir_from_env() {
  const char* v = std::getenv("LOTLAB_DATA_DIR");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

}  // namespace lotlab
