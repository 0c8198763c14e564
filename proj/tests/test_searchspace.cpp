#include <gtest/gtest.h>

#include <random>

#include "dcnas/searchspace.hpp"

using namespace dcnas;

namespace {

ArchMask mask_with_ones(std::size_t n, std::size_t ones) {
  ArchMask m = ArchMask::zeros(n);
  for (std::size_t i = 0; i < ones; ++i) m.set(i, true);
  return m;
}

SearchSpaceConfig toy_space() {
  SearchSpaceConfig c;
  c.edges = 2;
  c.ops = 4;
  c.channels = 8;
  c.d_in = 3;
  c.classes = 2;
  return c;
}

ArchMask random_arch(std::size_t n, std::mt19937_64& rng) {
  ArchMask m = ArchMask::zeros(n);
  for (std::size_t i = 0; i < n; ++i) m.set(i, rng() & 1);
  return m;
}

}  // namespace

TEST(ArchSparsity, Examples) {
  EXPECT_EQ(arch_sparsity(ArchMask::ones(24)), 0.0);
  EXPECT_EQ(arch_sparsity(ArchMask::zeros(24)), 1.0);
  EXPECT_EQ(arch_sparsity(mask_with_ones(24, 12)), 0.5);
}

TEST(ArchMask, StringRoundTripKeepsBitZeroLeftmost) {
  const ArchMask m = ArchMask::from_string("1000");
  EXPECT_TRUE(m[0]);
  EXPECT_FALSE(m[3]);
  EXPECT_EQ(m.to_string(), "1000");
  EXPECT_THROW(ArchMask::from_string("10x1"), Error);
}

TEST(ChannelSparsity, Examples) {
  EXPECT_EQ(channel_sparsity_for_target(0.5, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(channel_sparsity_for_target(0.6, 0.0), 0.6);
  EXPECT_DOUBLE_EQ(channel_sparsity_for_target(0.75, 0.5), 0.5);
}

TEST(ChannelSparsity, RejectsFullyPrunedArchitecture) {
  EXPECT_THROW(channel_sparsity_for_target(0.5, 1.0), DegenerateMaskError);
  EXPECT_THROW(make_budget(0.5, ArchMask::zeros(8)), DegenerateMaskError);
}

TEST(ChannelSparsity, ResultLiesBetweenZeroAndTarget) {
  for (int t = 0; t < 20; ++t)
    for (int a = 0; a < 20; ++a) {
      const double s = channel_sparsity_for_target(t / 20.0, a / 20.0);
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, t / 20.0 + 1e-15);
      if (a >= t) {
        EXPECT_EQ(s, 0.0);
      }
    }
}

TEST(ChannelMask, Examples) {
  EXPECT_EQ(make_channel_mask(0.5, 16).active_count(), 8u);
  EXPECT_EQ(make_channel_mask(0.0, 16).active_count(), 16u);
  EXPECT_EQ(make_channel_mask(0.9, 4).active_count(), 1u);
  EXPECT_THROW(ChannelMask(0, 4), DimensionError);
  EXPECT_THROW(ChannelMask(5, 4), DimensionError);
}

TEST(ChannelMask, LeadingChannelsStayActive) {
  const ChannelMask m = make_channel_mask(0.25, 8);
  for (std::size_t c = 0; c < 6; ++c) EXPECT_TRUE(m.active(c));
  for (std::size_t c = 6; c < 8; ++c) EXPECT_FALSE(m.active(c));
  EXPECT_DOUBLE_EQ(m.sparsity(), 0.25);
}

TEST(ComposeMasks, FullMasksSelectEverything) {
  const ParamLayout layout(toy_space());
  const SubnetSpec s = compose_masks(layout, ArchMask::ones(8), ChannelMask::full(8));
  EXPECT_EQ(s.active_weight_count(), layout.weight_count());
  EXPECT_EQ(s.active_alpha_count(), 8u);
}

// Toy space: per edge identity(0) + two affine ops (8*8 + 8 entries) + scale (8).
TEST(ComposeMasks, HalfChannelsSelectHalfOfEveryOp) {
  const ParamLayout layout(toy_space());
  const SubnetSpec s = compose_masks(layout, ArchMask::ones(8), ChannelMask(4, 8));
  const std::size_t op_entries_full = 2 * (2 * (64 + 8) + 8);
  const std::size_t head = 2 * 8 + 2;
  ASSERT_EQ(layout.weight_count(), op_entries_full + head);
  EXPECT_EQ(s.active_weight_count(), op_entries_full / 2 + head);
  for (std::size_t e = 0; e < 2; ++e)
    for (std::size_t k = 0; k < 4; ++k) {
      const OpBlock& b = layout.block(e, k);
      for (std::size_t i = 0; i < b.weight_size; ++i)
        EXPECT_EQ(s.weight_active[b.weight_offset + i], (i / 8) < 4);
      for (std::size_t i = 0; i < b.bias_size; ++i) EXPECT_EQ(s.weight_active[b.bias_offset + i], i < 4);
    }
}

TEST(ComposeMasks, HalfArchHalfChannelsGivesQuarterDensity) {
  SearchSpaceConfig cfg;  // default 6 x 4 x 16
  const ParamLayout layout(cfg);
  std::mt19937_64 rng(3);
  // One of each op kind per edge kept on alternate edges keeps the count exact:
  // take ops {0,1} on even edges and {2,3} on odd edges.
  ArchMask arch = ArchMask::zeros(24);
  for (std::size_t e = 0; e < 6; ++e)
    for (std::size_t k = 0; k < 4; ++k) arch.set(e * 4 + k, (e % 2 == 0) == (k < 2));
  ASSERT_DOUBLE_EQ(arch_sparsity(arch), 0.5);
  const SubnetSpec s = compose_masks(layout, arch, ChannelMask(8, 16));
  const SubnetSpec full = full_subnet(layout);
  const std::size_t head = layout.head_size();
  const double density = static_cast<double>(s.active_weight_count() - head) /
                         static_cast<double>(full.active_weight_count() - head);
  EXPECT_NEAR(density, 0.25, 1.0 / 16);
}

TEST(ComposeMasks, NeverActivatesAParameterWhoseArchBitIsZero) {
  const ParamLayout layout(toy_space());
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const ArchMask arch = random_arch(8, rng);
    const ChannelMask ch(1 + rng() % 8, 8);
    const SubnetSpec s = compose_masks(layout, arch, ch);
    for (std::size_t i = 0; i < layout.weight_count(); ++i) {
      const int slot = layout.slot(i);
      if (slot >= 0 && !arch[static_cast<std::size_t>(slot)]) {
        EXPECT_FALSE(s.weight_active[i]);
      }
    }
    for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(s.alpha_active[k], arch[k]);
  }
}

TEST(ComposeMasks, RejectsMismatchedDimensions) {
  const ParamLayout layout(toy_space());
  EXPECT_THROW(compose_masks(layout, ArchMask::ones(9), ChannelMask::full(8)), DimensionError);
  EXPECT_THROW(compose_masks(layout, ArchMask::ones(8), ChannelMask::full(4)), DimensionError);
}

// Over the 0.05 grid the composed density matches the target within one
// channel quantum, and never exceeds it by more than that.
TEST(SparsityBudget, GridInvariant) {
  const std::size_t nc = 16;
  for (int t = 0; t < 20; ++t)
    for (int a = 0; a < 20; ++a) {
      const double s_target = t / 20.0, s_arch = a / 20.0;
      const double s_channel = channel_sparsity_for_target(s_target, s_arch);
      const ChannelMask ch = make_channel_mask(s_channel, nc);
      const double density = (1.0 - s_arch) * static_cast<double>(ch.active_count()) / nc;
      EXPECT_LE(density, (1.0 - s_target) + 1.0 / nc);
      if (s_arch < s_target) {
        EXPECT_NEAR(density, 1.0 - s_target, 1.0 / nc);
      } else {
        EXPECT_EQ(s_channel, 0.0);
      }
    }
}

TEST(Complement, Examples) {
  const ArchMask quarter = mask_with_ones(24, 18);  // sparsity 0.25
  EXPECT_DOUBLE_EQ(arch_sparsity(complement(quarter)), 0.75);
  EXPECT_EQ(complement(ArchMask::zeros(6)), ArchMask::ones(6));
}

TEST(Complement, InvolutionAndSparsityFlip) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const ArchMask m = random_arch(1 + rng() % 40, rng);
    EXPECT_EQ(complement(complement(m)), m);
    EXPECT_EQ(complement(m).count_ones(), m.size() - m.count_ones());
    EXPECT_DOUBLE_EQ(arch_sparsity(complement(m)), 1.0 - arch_sparsity(m));
  }
}

TEST(Hamming, Examples) {
  EXPECT_EQ(hamming(ArchMask::from_string("0000"), ArchMask::from_string("1111")), 4u);
  const ArchMask m = ArchMask::from_string("0110");
  EXPECT_EQ(hamming(m, m), 0u);
  EXPECT_EQ(hamming(ArchMask::from_string("1010"), ArchMask::from_string("0101")), 4u);
  EXPECT_THROW(hamming(ArchMask::ones(3), ArchMask::ones(4)), DimensionError);
}

TEST(Hamming, IsAMetric) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 32;
    const ArchMask a = random_arch(n, rng), b = random_arch(n, rng), c = random_arch(n, rng);
    EXPECT_EQ(hamming(a, a), 0u);
    EXPECT_EQ(hamming(a, b), hamming(b, a));
    EXPECT_LE(hamming(a, c), hamming(a, b) + hamming(b, c));
    if (!(a == b)) {
      EXPECT_GT(hamming(a, b), 0u);
    }
  }
}

TEST(ArgmaxSubnet, Examples) {
  const std::vector<double> one{0.1, 0.9, 0.2, 0.3};
  EXPECT_EQ(argmax_subnet(one, 1, 4), std::vector<std::size_t>{1});
  const std::vector<double> ties{0.5, 0.5, 0.5, 0.5};
  EXPECT_EQ(argmax_subnet(ties, 1, 4), std::vector<std::size_t>{0});
}

TEST(ArgmaxSubnet, ShiftInvariantPerEdge) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> alpha(12);
    for (auto& a : alpha) a = g(rng);
    auto shifted = alpha;
    for (std::size_t k = 4; k < 8; ++k) shifted[k] += 3.25;
    EXPECT_EQ(argmax_subnet(alpha, 3, 4), argmax_subnet(shifted, 3, 4));
  }
}

TEST(MaskRecord, JsonFieldOrderAndRoundTrip) {
  const MaskRecord r{3, 1, ArchMask::from_string("0110"), 0.5, 0.0, 0.5};
  const std::string line = to_json_line(r);
  EXPECT_EQ(line, R"({"round":3,"client":1,"bits":"0110","s_arch":0.5,"s_channel":0.0,"s_target":0.5})");
  EXPECT_EQ(parse_mask_record(line, 1), r);
}

TEST(MaskRecord, ParseErrorsCarryLineNumber) {
  try {
    parse_mask_record("{\"round\":1}", 7);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7u);
  }
  EXPECT_THROW(parse_mask_record("not json", 2), ParseError);
}
