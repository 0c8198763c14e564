#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dcnas/error.hpp"

namespace dcnas {

// N x dim feature matrix (row-major) with integer labels and named index splits.
struct Dataset {
  std::vector<double> features;
  std::vector<int> labels;
  std::size_t dim = 0;
  std::size_t class_count = 0;
  std::map<std::string, std::vector<std::size_t>> splits;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }

  const std::vector<std::size_t>& split(const std::string& name) const {
    auto it = splits.find(name);
    if (it == splits.end()) throw Error("dataset has no '" + name + "' split");
    return it->second;
  }

  void validate() const {
    if (features.size() != labels.size() * dim) throw DimensionError("feature matrix shape mismatch");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= class_count)
        throw Error("label " + std::to_string(y) + " outside [0, class_count)");
    for (double v : features)
      if (!std::isfinite(v)) throw Error("non-finite feature value");
  }
};

// Contiguous copy of selected rows.
struct Batch {
  std::vector<double> features;
  std::vector<int> labels;
  std::size_t dim = 0;

  std::size_t size() const { return labels.size(); }
  const double* row(std::size_t i) const { return features.data() + i * dim; }
};

inline Batch gather(const Dataset& ds, std::span<const std::size_t> indices) {
  Batch b;
  b.dim = ds.dim;
  b.features.reserve(indices.size() * ds.dim);
  b.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= ds.size()) throw DimensionError("sample index out of range");
    auto r = ds.row(i);
    b.features.insert(b.features.end(), r.begin(), r.end());
    b.labels.push_back(ds.labels[i]);
  }
  return b;
}

inline std::vector<std::size_t> all_indices(const Dataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

}  // namespace dcnas
