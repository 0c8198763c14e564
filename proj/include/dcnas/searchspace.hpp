#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dcnas/error.hpp"
#include "dcnas/layout.hpp"
#include "json.hpp"

namespace dcnas {

// Binary selector over the E*K operation slots of the supernet; 1 = keep.
class ArchMask {
 public:
  ArchMask() = default;
  explicit ArchMask(std::vector<std::uint8_t> bits, std::size_t round = 0, std::size_t client = 0)
      : bits_(std::move(bits)), round_(round), client_(client) {
    for (auto& b : bits_) b = b ? 1 : 0;
  }

  static ArchMask ones(std::size_t n) { return ArchMask(std::vector<std::uint8_t>(n, 1)); }
  static ArchMask zeros(std::size_t n) { return ArchMask(std::vector<std::uint8_t>(n, 0)); }

  // Bit 0 is the leftmost character.
  static ArchMask from_string(std::string_view s) {
    std::vector<std::uint8_t> bits;
    bits.reserve(s.size());
    for (char c : s) {
      if (c != '0' && c != '1') throw Error("mask string may only contain '0' and '1'");
      bits.push_back(c == '1');
    }
    return ArchMask(std::move(bits));
  }

  std::string to_string() const {
    std::string s(bits_.size(), '0');
    for (std::size_t i = 0; i < bits_.size(); ++i)
      if (bits_[i]) s[i] = '1';
    return s;
  }

  std::size_t size() const { return bits_.size(); }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }
  void flip(std::size_t i) { bits_[i] ^= 1; }
  std::span<const std::uint8_t> bits() const { return bits_; }

  std::size_t count_ones() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }

  std::size_t round() const { return round_; }
  std::size_t client() const { return client_; }
  ArchMask tagged(std::size_t round, std::size_t client) const {
    ArchMask m = *this;
    m.round_ = round;
    m.client_ = client;
    return m;
  }

  // Equality compares bits only; provenance is informational.
  bool operator==(const ArchMask& o) const { return bits_ == o.bits_; }
  bool operator<(const ArchMask& o) const { return bits_ < o.bits_; }

 private:
  std::vector<std::uint8_t> bits_;
  std::size_t round_ = 0;
  std::size_t client_ = 0;
};

// Leading `active_count` of `channels` hidden channels stay active.
class ChannelMask {
 public:
  ChannelMask(std::size_t active_count, std::size_t channels)
      : active_(active_count), channels_(channels) {
    if (channels_ < 1 || active_ < 1 || active_ > channels_)
      throw DimensionError("channel mask needs 1 <= active_count <= n_c");
  }
  static ChannelMask full(std::size_t channels) { return ChannelMask(channels, channels); }

  std::size_t active_count() const { return active_; }
  std::size_t channels() const { return channels_; }
  bool active(std::size_t c) const { return c < active_; }
  double sparsity() const {
    return 1.0 - static_cast<double>(active_) / static_cast<double>(channels_);
  }
  bool operator==(const ChannelMask&) const = default;

 private:
  std::size_t active_;
  std::size_t channels_;
};

inline double arch_sparsity(const ArchMask& mask) {
  if (mask.size() == 0) return 0.0;
  return static_cast<double>(mask.size() - mask.count_ones()) / static_cast<double>(mask.size());
}

// Channel sparsity that brings an arch-pruned subnet down to the target overall
// sparsity: 1 - min(1, (1 - s_target) / (1 - s_arch)).
inline double channel_sparsity_for_target(double s_target, double s_arch) {
  if (!(s_target >= 0.0 && s_target < 1.0)) throw Error("target sparsity must lie in [0, 1)");
  if (s_arch >= 1.0) throw DegenerateMaskError("architecture mask prunes every operation");
  if (!(s_arch >= 0.0)) throw Error("architecture sparsity must lie in [0, 1)");
  return 1.0 - std::min(1.0, (1.0 - s_target) / (1.0 - s_arch));
}

inline ChannelMask make_channel_mask(double s_channel, std::size_t channels) {
  const double kept = std::round((1.0 - s_channel) * static_cast<double>(channels));
  const auto active = std::max<std::size_t>(1, static_cast<std::size_t>(std::max(0.0, kept)));
  return ChannelMask(std::min(active, channels), channels);
}

struct SparsityBudget {
  double s_target = 0.0;
  double s_arch = 0.0;
  double s_channel = 0.0;
};

inline SparsityBudget make_budget(double s_target, const ArchMask& mask) {
  const double s_arch = arch_sparsity(mask);
  return {s_target, s_arch, channel_sparsity_for_target(s_target, s_arch)};
}

// A subnet: arch mask composed with a channel mask, materialized as per-entry
// activity flags over the flat weight and alpha vectors.
struct SubnetSpec {
  ArchMask arch_mask;
  ChannelMask channel_mask = ChannelMask(1, 1);
  std::vector<std::uint8_t> weight_active;
  std::vector<std::uint8_t> alpha_active;

  std::size_t active_weight_count() const {
    return static_cast<std::size_t>(std::count(weight_active.begin(), weight_active.end(), 1));
  }
  std::size_t active_alpha_count() const {
    return static_cast<std::size_t>(std::count(alpha_active.begin(), alpha_active.end(), 1));
  }
  bool op_active(std::size_t slot) const { return arch_mask[slot]; }
};

// A weight entry is active iff its op's arch bit is set and its output channel
// is below active_count; head entries are always active. An alpha entry is
// active iff its arch bit is set.
inline SubnetSpec compose_masks(const ParamLayout& layout, const ArchMask& arch,
                                const ChannelMask& channel) {
  const auto& cfg = layout.config();
  if (arch.size() != cfg.mask_length())
    throw DimensionError("arch mask length " + std::to_string(arch.size()) +
                         " does not match search space size " +
                         std::to_string(cfg.mask_length()));
  if (channel.channels() != cfg.channels)
    throw DimensionError("channel mask width does not match search space");

  SubnetSpec spec{arch, channel, {}, {}};
  spec.weight_active.resize(layout.weight_count());
  for (std::size_t i = 0; i < layout.weight_count(); ++i) {
    const int slot = layout.slot(i);
    if (slot < 0) {
      spec.weight_active[i] = 1;
      continue;
    }
    const int ch = layout.channel(i);
    spec.weight_active[i] =
        arch[static_cast<std::size_t>(slot)] && (ch < 0 || channel.active(static_cast<std::size_t>(ch)));
  }
  spec.alpha_active.assign(arch.bits().begin(), arch.bits().end());
  return spec;
}

inline SubnetSpec full_subnet(const ParamLayout& layout) {
  return compose_masks(layout, ArchMask::ones(layout.config().mask_length()),
                       ChannelMask::full(layout.config().channels));
}

inline ArchMask complement(const ArchMask& mask) {
  ArchMask out = mask;
  for (std::size_t i = 0; i < out.size(); ++i) out.flip(i);
  return out;
}

inline std::size_t hamming(const ArchMask& a, const ArchMask& b) {
  if (a.size() != b.size()) throw DimensionError("hamming distance of masks with different lengths");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

// Per-edge index of the largest alpha; ties go to the lowest index.
inline std::vector<std::size_t> argmax_subnet(std::span<const double> alpha, std::size_t edges,
                                              std::size_t ops) {
  if (alpha.size() != edges * ops) throw DimensionError("alpha size does not match edges x ops");
  std::vector<std::size_t> choice(edges, 0);
  for (std::size_t e = 0; e < edges; ++e) {
    for (std::size_t k = 1; k < ops; ++k)
      if (alpha[e * ops + k] > alpha[e * ops + choice[e]]) choice[e] = k;
  }
  return choice;
}

inline ArchMask argmax_mask(std::span<const double> alpha, std::size_t edges, std::size_t ops) {
  ArchMask m = ArchMask::zeros(edges * ops);
  const auto choice = argmax_subnet(alpha, edges, ops);
  for (std::size_t e = 0; e < edges; ++e) m.set(e * ops + choice[e], true);
  return m;
}

// One line of the mask log.
struct MaskRecord {
  std::size_t round = 0;
  std::size_t client = 0;
  ArchMask mask;
  double s_arch = 0.0;
  double s_channel = 0.0;
  double s_target = 0.0;

  bool operator==(const MaskRecord& o) const {
    return round == o.round && client == o.client && mask == o.mask && s_arch == o.s_arch &&
           s_channel == o.s_channel && s_target == o.s_target;
  }
};

inline nlohmann::ordered_json to_json(const MaskRecord& r) {
  nlohmann::ordered_json j;
  j["round"] = r.round;
  j["client"] = r.client;
  j["bits"] = r.mask.to_string();
  j["s_arch"] = r.s_arch;
  j["s_channel"] = r.s_channel;
  j["s_target"] = r.s_target;
  return j;
}

inline std::string to_json_line(const MaskRecord& r) { return to_json(r).dump(); }

// Throws ParseError carrying `line_no` on any malformed input.
inline MaskRecord parse_mask_record(std::string_view line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
  }
  if (!j.is_object()) throw ParseError("mask record must be a JSON object", line_no);
  MaskRecord r;
  try {
    r.round = j.at("round").get<std::size_t>();
    r.client = j.at("client").get<std::size_t>();
    r.mask = ArchMask::from_string(j.at("bits").get<std::string>()).tagged(r.round, r.client);
    r.s_arch = j.at("s_arch").get<double>();
    r.s_channel = j.at("s_channel").get<double>();
    r.s_target = j.at("s_target").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad mask record: ") + e.what(), line_no);
  } catch (const Error& e) {
    throw ParseError(e.what(), line_no);
  }
  return r;
}

}  // namespace dcnas
