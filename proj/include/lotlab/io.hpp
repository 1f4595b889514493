#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "lotlab/errors.hpp"
#include "lotlab/lot.hpp"

namespace lotlab {

// 17 significant digits: enough to round-trip any double exactly.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// One row per measure; all features must share one reference.
inline void write_features_csv(std::ostream& out,
                               const std::vector<LotFeature>& features,
                               const std::vector<std::string>& row_ids) {
  if (features.empty()) throw InvalidArgument("write_features_csv: no rows");
  if (row_ids.size() != features.size())
    throw CountMismatch("write_features_csv: ids/features mismatch");
  const std::size_t width = features[0].values.size();
  out << "id";
  for (std::size_t v = 0; v < width; ++v) out << ",v" << v;
  out << "\n";
  for (std::size_t r = 0; r < features.size(); ++r) {
    if (features[r].reference_hash != features[0].reference_hash ||
        features[r].values.size() != width)
      throw ReferenceMismatch("write_features_csv: mixed references");
    out << row_ids[r];
    for (double v : features[r].values) out << "," << format_g17(v);
    out << "\n";
  }
}

}  // namespace lotlab
