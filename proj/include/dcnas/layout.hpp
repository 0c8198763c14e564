#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dcnas/error.hpp"

namespace dcnas {

enum class OpKind { kIdentity, kAffineRelu, kAffineTanh, kScale };

inline const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kIdentity: return "identity";
    case OpKind::kAffineRelu: return "affine_relu";
    case OpKind::kAffineTanh: return "affine_tanh";
    case OpKind::kScale: return "scale";
  }
  return "?";
}

// Operation k on every edge is of kind k mod 4.
inline OpKind op_kind(std::size_t k) { return static_cast<OpKind>(k % 4); }

struct SearchSpaceConfig {
  std::size_t edges = 6;
  std::size_t ops = 4;
  std::size_t channels = 16;
  std::size_t d_in = 8;
  std::size_t classes = 3;

  std::size_t mask_length() const { return edges * ops; }

  void validate() const {
    if (edges < 1) throw DimensionError("search space needs at least one edge");
    if (ops < 2) throw DimensionError("search space needs at least two ops per edge");
    if (channels < 2) throw DimensionError("search space needs at least two channels");
    if (d_in < 1 || classes < 2) throw DimensionError("bad input/class dimensions");
  }

  bool operator==(const SearchSpaceConfig&) const = default;
};

// Where each operation's parameters live inside the flat weight vector.
struct OpBlock {
  OpKind kind;
  std::size_t weight_offset = 0;  // n_c x n_c row-major (affine ops only)
  std::size_t weight_size = 0;
  std::size_t bias_offset = 0;    // n_c (affine: bias, scale: per-channel scale)
  std::size_t bias_size = 0;
};

// Flat layout of all trainable weights: op blocks in edge-major, op-minor
// order, followed by the classifier head (classes x n_c, then classes bias).
class ParamLayout {
 public:
  explicit ParamLayout(const SearchSpaceConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t nc = cfg_.channels;
    std::size_t off = 0;
    for (std::size_t e = 0; e < cfg_.edges; ++e) {
      for (std::size_t k = 0; k < cfg_.ops; ++k) {
        OpBlock b{op_kind(k)};
        const std::size_t slot = e * cfg_.ops + k;
        switch (b.kind) {
          case OpKind::kIdentity:
            b.weight_offset = b.bias_offset = off;
            break;
          case OpKind::kAffineRelu:
          case OpKind::kAffineTanh:
            b.weight_offset = off;
            b.weight_size = nc * nc;
            for (std::size_t i = 0; i < nc * nc; ++i) push(slot, static_cast<int>(i / nc));
            off += nc * nc;
            b.bias_offset = off;
            b.bias_size = nc;
            for (std::size_t i = 0; i < nc; ++i) push(slot, static_cast<int>(i));
            off += nc;
            break;
          case OpKind::kScale:
            b.weight_offset = off;
            b.bias_offset = off;
            b.bias_size = nc;
            for (std::size_t i = 0; i < nc; ++i) push(slot, static_cast<int>(i));
            off += nc;
            break;
        }
        blocks_.push_back(b);
      }
    }
    head_weight_offset_ = off;
    for (std::size_t i = 0; i < cfg_.classes * nc + cfg_.classes; ++i) push(-1, -1);
    head_bias_offset_ = off + cfg_.classes * nc;
    total_ = slot_.size();
  }

  const SearchSpaceConfig& config() const { return cfg_; }
  std::size_t weight_count() const { return total_; }
  std::size_t alpha_count() const { return cfg_.mask_length(); }
  const OpBlock& block(std::size_t e, std::size_t k) const { return blocks_[e * cfg_.ops + k]; }
  std::size_t head_weight_offset() const { return head_weight_offset_; }
  std::size_t head_bias_offset() const { return head_bias_offset_; }
  std::size_t head_size() const { return cfg_.classes * cfg_.channels + cfg_.classes; }

  // Operation slot (e*K + k) owning weight entry i, or -1 for the head.
  int slot(std::size_t i) const { return slot_[i]; }
  // Output channel of weight entry i, or -1 when the entry is not channelled.
  int channel(std::size_t i) const { return channel_[i]; }

 private:
  void push(int slot, int channel) {
    slot_.push_back(slot);
    channel_.push_back(channel);
  }

  SearchSpaceConfig cfg_;
  std::vector<OpBlock> blocks_;
  std::vector<int> slot_;
  std::vector<int> channel_;
  std::size_t head_weight_offset_ = 0;
  std::size_t head_bias_offset_ = 0;
  std::size_t total_ = 0;
};

}  // namespace dcnas
