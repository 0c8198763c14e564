#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dcnas/dataset.hpp"
#include "dcnas/error.hpp"
#include "dcnas/rng.hpp"

namespace dcnas {

// Stratified split: per class, the first `train_fraction` of a seeded shuffle
// goes to "train", the rest to "test". Both lists are sorted.
inline void stratified_split(Dataset& ds, double train_fraction, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::kSplit);
  std::vector<std::vector<std::size_t>> by_class(ds.class_count);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  std::vector<std::size_t> train, test;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_train =
        static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    train.insert(train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.insert(test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  ds.splits["train"] = std::move(train);
  ds.splits["test"] = std::move(test);
}

// Isotropic Gaussian clusters around simplex vertices e_k / sqrt(2) (pairwise
// distance 1), per-coordinate std `spread`, 80/20 stratified split.
inline Dataset gen_blobs(std::size_t classes, std::size_t per_class, std::size_t d_in, double spread,
                         std::uint64_t seed) {
  if (classes < 2 || per_class < 4) throw Error("gen_blobs needs classes >= 2 and per_class >= 4");
  if (d_in < classes) throw DimensionError("gen_blobs needs d_in >= classes");
  Rng rng = make_rng(seed, Stream::kData, {1});
  std::normal_distribution<double> noise(0.0, spread);
  Dataset ds;
  ds.dim = d_in;
  ds.class_count = classes;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t s = 0; s < per_class; ++s) {
      for (std::size_t j = 0; j < d_in; ++j)
        ds.features.push_back((j == c ? std::numbers::sqrt2 / 2.0 : 0.0) + noise(rng));
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  stratified_split(ds, 0.8, seed);
  return ds;
}

// Interleaved planar spirals, radius t in [0.1, 1] and angle
// 2*pi*(turns*t + k/classes) for class k, plus Gaussian noise, lifted to d_in
// dimensions by a fixed random linear map.
inline Dataset gen_spirals(std::size_t classes, std::size_t per_class, double noise,
                           std::uint64_t seed, std::size_t d_in = 8, double turns = 0.75) {
  if (classes < 2 || classes > 3) throw Error("gen_spirals supports 2 or 3 classes");
  if (per_class < 8) throw Error("gen_spirals needs per_class >= 8");
  if (d_in < 2) throw DimensionError("gen_spirals needs d_in >= 2");
  Rng rng = make_rng(seed, Stream::kData, {2});
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> lift(d_in * 2);
  for (auto& v : lift) v = gauss(rng) / std::sqrt(2.0);

  Dataset ds;
  ds.dim = d_in;
  ds.class_count = classes;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t s = 0; s < per_class; ++s) {
      const double t = 0.1 + 0.9 * static_cast<double>(s) / static_cast<double>(per_class - 1);
      const double theta =
          2.0 * std::numbers::pi * (turns * t + static_cast<double>(c) / static_cast<double>(classes));
      double px = t * std::cos(theta), py = t * std::sin(theta);
      if (noise > 0) {
        px += noise * gauss(rng);
        py += noise * gauss(rng);
      }
      for (std::size_t j = 0; j < d_in; ++j) ds.features.push_back(lift[2 * j] * px + lift[2 * j + 1] * py);
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  stratified_split(ds, 0.8, seed);
  return ds;
}

namespace detail {

inline std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t at,
                               const std::string& path) {
  if (buf.size() < at + 4) throw TruncatedFileError(path + ": truncated header");
  return (std::uint32_t{buf[at]} << 24) | (std::uint32_t{buf[at + 1]} << 16) |
         (std::uint32_t{buf[at + 2]} << 8) | std::uint32_t{buf[at + 3]};
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// IDX image/label pair (MNIST/EMNIST layout). Pixels are flattened row-major
// and scaled to [0, 1]. No splits are assigned.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = detail::read_bytes(images_path);
  const auto lab = detail::read_bytes(labels_path);
  if (detail::read_be32(img, 0, images_path) != kIdxImageMagic)
    throw BadMagicError(images_path + ": not an IDX image file (bad magic)");
  if (detail::read_be32(lab, 0, labels_path) != kIdxLabelMagic)
    throw BadMagicError(labels_path + ": not an IDX label file (bad magic)");
  const std::size_t n = detail::read_be32(img, 4, images_path);
  const std::size_t rows = detail::read_be32(img, 8, images_path);
  const std::size_t cols = detail::read_be32(img, 12, images_path);
  const std::size_t n_labels = detail::read_be32(lab, 4, labels_path);
  if (n != n_labels)
    throw CountMismatchError("image count " + std::to_string(n) + " != label count " +
                             std::to_string(n_labels));
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + n * pixels) throw TruncatedFileError(images_path + ": truncated pixel data");
  if (lab.size() < 8 + n) throw TruncatedFileError(labels_path + ": truncated label data");

  Dataset ds;
  ds.dim = pixels;
  ds.features.resize(n * pixels);
  for (std::size_t i = 0; i < n * pixels; ++i) ds.features[i] = img[16 + i] / 255.0;
  int top = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels.push_back(lab[8 + i]);
    top = std::max(top, ds.labels.back());
  }
  ds.class_count = n == 0 ? 0 : static_cast<std::size_t>(top) + 1;
  return ds;
}

// Inverse of load_idx for datasets whose features are multiples of 1/255.
inline void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols,
                      const std::string& images_path, const std::string& labels_path) {
  if (rows * cols != ds.dim) throw DimensionError("rows x cols must equal the feature dimension");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw IoError("cannot open IDX output files");
  detail::write_be32(img, kIdxImageMagic);
  detail::write_be32(img, static_cast<std::uint32_t>(ds.size()));
  detail::write_be32(img, static_cast<std::uint32_t>(rows));
  detail::write_be32(img, static_cast<std::uint32_t>(cols));
  for (double v : ds.features) img.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  detail::write_be32(lab, kIdxLabelMagic);
  detail::write_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(const std::string& s) {
  const auto lo = s.find_first_not_of(" \t\r");
  if (lo == std::string::npos) return {};
  const auto hi = s.find_last_not_of(" \t\r");
  return s.substr(lo, hi - lo + 1);
}

}  // namespace detail

// Header row, numeric feature columns, one integer label column. Rows are kept
// in file order; error positions are 1-based file line and column numbers.
inline Dataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty())
    throw EmptyDatasetError(path + ": empty file");
  auto header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);
  const auto it = std::find(header.begin(), header.end(), label_column);
  if (it == header.end()) throw SchemaError(path + ": no label column '" + label_column + "'");
  const auto label_at = static_cast<std::size_t>(it - header.begin());

  Dataset ds;
  ds.dim = header.size() - 1;
  int top = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw SchemaError(path + ": row " + std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = detail::trim(cells[c]);
      char* end = nullptr;
      if (c == label_at) {
        const long v = cell.empty() ? 0 : std::strtol(cell.c_str(), &end, 10);
        if (cell.empty() || *end != '\0' || v < 0) throw CsvParseError(line_no, c + 1, cell);
        ds.labels.push_back(static_cast<int>(v));
        top = std::max(top, static_cast<int>(v));
      } else {
        const double v = cell.empty() ? 0.0 : std::strtod(cell.c_str(), &end);
        if (cell.empty() || *end != '\0' || !std::isfinite(v)) throw CsvParseError(line_no, c + 1, cell);
        ds.features.push_back(v);
      }
    }
  }
  if (ds.labels.empty()) throw EmptyDatasetError(path + ": no data rows");
  ds.class_count = static_cast<std::size_t>(top) + 1;
  return ds;
}

}  // namespace dcnas
