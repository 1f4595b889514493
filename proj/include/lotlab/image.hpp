#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "lotlab/errors.hpp"

namespace lotlab {

// Square n x n intensity grid, row-major, nonnegative values.
struct ImageGrid {
  int side = 0;
  std::vector<double> pixels;  // side * side

  ImageGrid() = default;
  ImageGrid(int n, std::vector<double> px) : side(n), pixels(std::move(px)) {
    if (n <= 0) throw InvalidArgument("ImageGrid: side must be >= 1");
    if (pixels.size() != static_cast<std::size_t>(n) * n)
      throw WidthMismatch("ImageGrid: pixel count does not match side");
  }
  static ImageGrid zero(int n) {
    return ImageGrid(n, std::vector<double>(static_cast<std::size_t>(n) * n));
  }

  double at(int row, int col) const { return pixels[(std::size_t)row * side + col]; }
  double& at(int row, int col) { return pixels[(std::size_t)row * side + col]; }

  double max_value() const {
    return pixels.empty() ? 0.0
                          : *std::max_element(pixels.begin(), pixels.end());
  }
};

// Binary PGM (P5, maxval <= 255). Values are stored verbatim; write_pgm
// clamps to [0, 255] and rounds to nearest.
inline ImageGrid read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_pgm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw BadMagic("read_pgm: not a binary PGM: " + path);
  auto next_int = [&]() {
    // Skip whitespace and '#' comment lines between header fields.
    int c = in.peek();
    while (c == '#' || std::isspace(c)) {
      if (c == '#') in.ignore(1 << 20, '\n');
      else in.ignore(1);
      c = in.peek();
    }
    long v = -1;
    in >> v;
    if (!in || v < 0) throw TruncatedFile("read_pgm: bad header in " + path);
    return v;
  };
  long w = next_int(), h = next_int(), maxval = next_int();
  if (w != h) throw WidthMismatch("read_pgm: image is not square");
  if (maxval <= 0 || maxval > 255)
    throw InvalidArgument("read_pgm: unsupported maxval");
  in.ignore(1);  // single whitespace before raster
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(raw.data()), raw.size());
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw TruncatedFile("read_pgm: raster shorter than header promises");
  std::vector<double> px(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) px[i] = raw[i];
  return ImageGrid(static_cast<int>(w), std::move(px));
}

inline void write_pgm(const ImageGrid& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_pgm: cannot open " + path);
  out << "P5\n" << img.side << " " << img.side << "\n255\n";
  std::vector<unsigned char> raw(img.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    double v = std::round(std::clamp(img.pixels[i], 0.0, 255.0));
    raw[i] = static_cast<unsigned char>(v);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), raw.size());
  if (!out) throw IoError("write_pgm: short write to " + path);
}

// Debug aid: min-max scales to the full 8-bit range before writing.
inline void write_pgm_scaled(const ImageGrid& img, const std::string& path) {
  double lo = *std::min_element(img.pixels.begin(), img.pixels.end());
  double hi = *std::max_element(img.pixels.begin(), img.pixels.end());
  ImageGrid scaled = img;
  double span = hi - lo;
  for (double& v : scaled.pixels)
    v = span > 0.0 ? 255.0 * (v - lo) / span : 0.0;
  write_pgm(scaled, path);
}

}  // namespace lotlab
