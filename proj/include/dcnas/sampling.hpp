#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dcnas/error.hpp"
#include "dcnas/rng.hpp"
#include "dcnas/searchspace.hpp"

namespace dcnas {

enum class Strategy {
  kDiversified,
  kDiversifiedReset,
  kDiversifiedReset10,
  kRandom,
  kAntithetic,
  kCommon,
  kComplement,
  kHadamard,
  kNoSampling,
};

inline constexpr Strategy kAllStrategies[] = {
    Strategy::kDiversified, Strategy::kDiversifiedReset, Strategy::kDiversifiedReset10,
    Strategy::kRandom,      Strategy::kAntithetic,       Strategy::kCommon,
    Strategy::kComplement,  Strategy::kHadamard,         Strategy::kNoSampling,
};

inline std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kDiversified: return "diversified";
    case Strategy::kDiversifiedReset: return "diversified_reset";
    case Strategy::kDiversifiedReset10: return "diversified_reset10";
    case Strategy::kRandom: return "random";
    case Strategy::kAntithetic: return "antithetic";
    case Strategy::kCommon: return "common";
    case Strategy::kComplement: return "complement";
    case Strategy::kHadamard: return "hadamard";
    case Strategy::kNoSampling: return "nosampling";
  }
  return "";
}

inline std::optional<Strategy> parse_strategy(std::string_view name) {
  for (Strategy s : kAllStrategies)
    if (strategy_name(s) == name) return s;
  return std::nullopt;
}

inline bool is_diversified(Strategy s) {
  return s == Strategy::kDiversified || s == Strategy::kDiversifiedReset ||
         s == Strategy::kDiversifiedReset10;
}

inline ArchMask random_mask(std::size_t n, Rng& rng) {
  std::vector<std::uint8_t> bits(n);
  for (auto& b : bits) b = fair_bit(rng);
  return ArchMask(std::move(bits));
}

// Rows of the Sylvester Hadamard matrix of order m = next power of two >= n,
// with +1 -> 1 and -1 -> 0, each truncated to n bits. Entry (i, j) of H_m is
// (-1)^popcount(i & j).
inline std::vector<ArchMask> hadamard_codebook(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  std::vector<ArchMask> rows;
  rows.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<std::uint8_t> bits(n);
    for (std::size_t j = 0; j < n; ++j) bits[j] = (std::popcount(i & j) % 2) == 0;
    rows.emplace_back(std::move(bits));
  }
  return rows;
}

// Root with every position p where p mod stride == offset flipped.
inline ArchMask flip_every(const ArchMask& root, std::size_t stride, std::size_t offset) {
  ArchMask out = root;
  for (std::size_t p = offset; p < out.size(); p += stride) out.flip(p);
  return out;
}

// Sampler state between rounds. Randomness for round r is derived from
// (seed, r), so the state is fully described by the fields below and can be
// checkpointed without serializing engine internals.
struct SamplerState {
  Strategy strategy = Strategy::kDiversified;
  std::size_t n = 0;
  std::size_t clients = 0;
  std::uint64_t seed = 0;
  std::size_t round = 1;  // round that the next call emits
  std::vector<ArchMask> parent_nodes;
  std::vector<ArchMask> history;  // every emitted mask, tagged with round/client
};

inline SamplerState init_sampler(Strategy strategy, std::size_t n, std::size_t clients,
                                 std::uint64_t seed) {
  if (n < 1) throw Error("mask length must be positive");
  if (clients < 1) throw Error("client count must be positive");
  SamplerState st{strategy, n, clients, seed, 1, {}, {}};
  if (is_diversified(strategy)) {
    Rng rng = make_rng(seed, Stream::kSampler, {0});
    st.parent_nodes.push_back(random_mask(n, rng));
  }
  return st;
}

namespace detail {

inline bool fresh_root_round(Strategy s, std::size_t round) {
  if (round == 1) return false;  // round 1 uses the random root drawn at init
  if (s == Strategy::kDiversifiedReset) return true;
  if (s == Strategy::kDiversifiedReset10) return (round - 1) % 10 == 0;
  return false;
}

inline std::vector<ArchMask> distinct_in_order(const std::vector<ArchMask>& masks) {
  std::vector<ArchMask> out;
  for (const auto& m : masks)
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  return out;
}

}  // namespace detail

// Emits one mask per client for the current round and advances the state.
inline std::vector<ArchMask> next_round_masks(SamplerState& st) {
  const std::size_t r = st.round;
  const std::size_t n = st.n;
  const std::size_t C = st.clients;
  Rng rng = make_rng(st.seed, Stream::kSampler, {r});
  std::vector<ArchMask> masks;
  masks.reserve(C);

  switch (st.strategy) {
    case Strategy::kDiversified:
    case Strategy::kDiversifiedReset:
    case Strategy::kDiversifiedReset10: {
      ArchMask root;
      if (detail::fresh_root_round(st.strategy, r)) {
        root = random_mask(n, rng);
      } else {
        if (st.parent_nodes.empty()) throw Error("diversified sampler has no parent nodes");
        root = st.parent_nodes[uniform_index(rng, st.parent_nodes.size())];
      }
      for (std::size_t c = 0; c < C; ++c) masks.push_back(flip_every(root, r, c % r));
      st.parent_nodes = detail::distinct_in_order(masks);
      break;
    }
    case Strategy::kRandom:
      for (std::size_t c = 0; c < C; ++c) masks.push_back(random_mask(n, rng));
      break;
    case Strategy::kAntithetic:
      for (std::size_t c = 0; c < C; ++c)
        masks.push_back(c % 2 == 0 ? random_mask(n, rng) : complement(masks.back()));
      break;
    case Strategy::kCommon: {
      const ArchMask m = random_mask(n, rng);
      masks.assign(C, m);
      break;
    }
    case Strategy::kComplement: {
      const ArchMask m = random_mask(n, rng);
      const ArchMask mc = complement(m);
      const std::size_t half = (C + 1) / 2;
      for (std::size_t c = 0; c < C; ++c) masks.push_back(c < half ? m : mc);
      break;
    }
    case Strategy::kHadamard: {
      const auto book = hadamard_codebook(n);
      for (std::size_t c = 0; c < C; ++c) masks.push_back(book[c % book.size()]);
      break;
    }
    case Strategy::kNoSampling:
      masks.assign(C, ArchMask::ones(n));
      break;
  }

  for (std::size_t c = 0; c < C; ++c) {
    masks[c] = masks[c].tagged(r, c);
    st.history.push_back(masks[c]);
  }
  ++st.round;
  return masks;
}

// Reads a JSON-lines mask log and returns its records sorted by (round, client).
// Blank lines are skipped; line numbers in errors are 1-based.
inline std::vector<MaskRecord> sampler_replay(std::istream& in) {
  std::vector<MaskRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_mask_record(line, line_no));
  }
  std::stable_sort(out.begin(), out.end(), [](const MaskRecord& a, const MaskRecord& b) {
    return a.round != b.round ? a.round < b.round : a.client < b.client;
  });
  return out;
}

}  // namespace dcnas
