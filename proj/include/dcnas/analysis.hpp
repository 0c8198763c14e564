#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include "dcnas/error.hpp"
#include "dcnas/layout.hpp"
#include "dcnas/searchspace.hpp"

namespace dcnas {

struct RoundMetrics {
  std::size_t round = 0;
  double supernet_test_acc = 0.0;
  double argmax_test_acc = 0.0;
  double mean_client_train_loss = 0.0;
  std::size_t min_hamming_to_history = 0;
  double mean_pairwise_hamming = 0.0;
  std::vector<std::size_t> overlap;
  double avg_comm_params = 0.0;
  std::int64_t wall_ms = 0;
};

// Smallest Hamming distance from `sample` to any mask in `history`; an empty
// history reports the mask length.
inline std::size_t min_distance_to_history(const ArchMask& sample, std::span<const ArchMask> history) {
  std::size_t best = sample.size();
  for (const auto& h : history) best = std::min(best, hamming(sample, h));
  return best;
}

inline double mean_pairwise_distance(std::span<const ArchMask> masks) {
  if (masks.size() < 2) throw Error("mean pairwise distance needs at least two masks");
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < masks.size(); ++i)
    for (std::size_t j = i + 1; j < masks.size(); ++j) total += hamming(masks[i], masks[j]);
  const double pairs = static_cast<double>(masks.size()) * static_cast<double>(masks.size() - 1) / 2.0;
  return static_cast<double>(total) / pairs;
}

// Number of masks in which each operation slot is active.
inline std::vector<std::size_t> overlap_vector(std::span<const ArchMask> masks) {
  if (masks.empty()) return {};
  std::vector<std::size_t> out(masks.front().size(), 0);
  for (const auto& m : masks) {
    if (m.size() != out.size()) throw DimensionError("overlap of masks with different lengths");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += m[i];
  }
  return out;
}

// Parameters shipped for one subnet: active op weights, active alphas and the
// always-active classifier head.
inline std::size_t subnet_param_count(const SubnetSpec& s) {
  return s.active_weight_count() + s.active_alpha_count();
}

inline double comm_cost(std::span<const SubnetSpec> subnets) {
  if (subnets.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : subnets) total += static_cast<double>(subnet_param_count(s));
  return total / static_cast<double>(subnets.size());
}

inline std::size_t full_param_count(const ParamLayout& layout) {
  return layout.weight_count() + layout.alpha_count();
}

// Per-round sampling diagnostics of a mask log.
struct RoundDiagnostics {
  std::size_t round = 0;
  std::size_t min_hamming_to_history = 0;
  double mean_pairwise_hamming = 0.0;
  std::vector<std::size_t> overlap;
};

// Groups records by round (ascending). History for round r is every mask of
// rounds < r; the round's minimum is taken over its clients. Rounds with a
// single client report a mean pairwise distance of 0.
inline std::vector<RoundDiagnostics> diagnose(std::span<const MaskRecord> records) {
  std::map<std::size_t, std::vector<ArchMask>> rounds;
  for (const auto& r : records) rounds[r.round].push_back(r.mask);
  std::vector<RoundDiagnostics> out;
  std::vector<ArchMask> history;
  for (const auto& [round, masks] : rounds) {
    RoundDiagnostics d;
    d.round = round;
    d.min_hamming_to_history = masks.front().size();
    for (const auto& m : masks)
      d.min_hamming_to_history = std::min(d.min_hamming_to_history, min_distance_to_history(m, history));
    d.mean_pairwise_hamming = masks.size() >= 2 ? mean_pairwise_distance(masks) : 0.0;
    d.overlap = overlap_vector(masks);
    history.insert(history.end(), masks.begin(), masks.end());
    out.push_back(std::move(d));
  }
  return out;
}

inline void write_diagnostics_csv(std::ostream& out, std::span<const RoundDiagnostics> rows) {
  out << "round,min_hamming_to_history,mean_pairwise_hamming\n";
  for (const auto& d : rows)
    out << d.round << ',' << d.min_hamming_to_history << ',' << d.mean_pairwise_hamming << '\n';
}

inline void write_overlap_csv(std::ostream& out, std::span<const RoundDiagnostics> rows) {
  out << "round";
  const std::size_t n = rows.empty() ? 0 : rows.front().overlap.size();
  for (std::size_t i = 0; i < n; ++i) out << ",b" << i;
  out << '\n';
  for (const auto& d : rows) {
    out << d.round;
    for (std::size_t v : d.overlap) out << ',' << v;
    out << '\n';
  }
}

}  // namespace dcnas
