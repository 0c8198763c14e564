#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dcnas/dataio.hpp"
#include "dcnas/micromodel.hpp"

using namespace dcnas;

namespace {

SearchSpaceConfig small_space(std::size_t edges = 2, std::size_t ops = 3, std::size_t channels = 4) {
  SearchSpaceConfig c;
  c.edges = edges;
  c.ops = ops;
  c.channels = channels;
  c.d_in = 3;
  c.classes = 3;
  return c;
}

Batch random_batch(std::size_t size, std::size_t dim, std::size_t classes, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Batch b;
  b.dim = dim;
  for (std::size_t i = 0; i < size * dim; ++i) b.features.push_back(g(rng));
  for (std::size_t i = 0; i < size; ++i) b.labels.push_back(static_cast<int>(rng() % classes));
  return b;
}

// Perturbs every parameter so gradients are well away from zero.
SupernetParams random_params(const SearchSpaceConfig& cfg, std::mt19937_64& rng) {
  SupernetParams p = init_supernet(cfg, rng());
  std::normal_distribution<double> g(0.0, 0.6);
  for (auto& w : p.weights) w += g(rng);
  for (auto& a : p.alpha) a += g(rng);
  return p;
}

SubnetSpec random_subnet(const SupernetParams& p, std::mt19937_64& rng) {
  const auto& cfg = p.config();
  ArchMask arch = ArchMask::zeros(cfg.mask_length());
  for (std::size_t i = 0; i < arch.size(); ++i) arch.set(i, rng() % 4 != 0);
  arch.set(0, true);
  return compose_masks(*p.layout, arch, ChannelMask(1 + rng() % cfg.channels, cfg.channels));
}

ArchMask only_op(const SearchSpaceConfig& cfg, std::size_t op) {
  ArchMask m = ArchMask::zeros(cfg.mask_length());
  for (std::size_t e = 0; e < cfg.edges; ++e) m.set(e * cfg.ops + op, true);
  return m;
}

// logits = head(embed(x)) computed directly from the flat parameters.
std::vector<double> linear_path_logits(const SupernetParams& p, const Batch& b) {
  const auto& cfg = p.config();
  const ParamLayout& L = *p.layout;
  std::vector<double> out;
  for (std::size_t s = 0; s < b.size(); ++s) {
    std::vector<double> h(cfg.channels, 0.0);
    for (std::size_t c = 0; c < cfg.channels; ++c)
      for (std::size_t j = 0; j < cfg.d_in; ++j) h[c] += p.embed[c * cfg.d_in + j] * b.features[s * b.dim + j];
    for (std::size_t k = 0; k < cfg.classes; ++k) {
      double z = p.weights[L.head_bias_offset() + k];
      for (std::size_t c = 0; c < cfg.channels; ++c) z += p.weights[L.head_weight_offset() + k * cfg.channels + c] * h[c];
      out.push_back(z);
    }
  }
  return out;
}

}  // namespace

TEST(InitSupernet, DeterministicAndShaped) {
  const auto cfg = small_space();
  const auto a = init_supernet(cfg, 5), b = init_supernet(cfg, 5);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.alpha.size(), 6u);
  EXPECT_EQ(a.embed.size(), 4u * 3u);
  EXPECT_FALSE(a == init_supernet(cfg, 6));
}

TEST(Forward, UniformAlphaGivesUniformMixing) {
  auto p = init_supernet(small_space(2, 4, 4), 1);
  std::fill(p.alpha.begin(), p.alpha.end(), 0.37);
  for (const auto& edge : edge_probabilities(p, full_subnet(*p.layout))) {
    ASSERT_EQ(edge.size(), 4u);
    for (double q : edge) EXPECT_DOUBLE_EQ(q, 0.25);
  }
}

TEST(Forward, SoftmaxExcludesMaskedOps) {
  auto p = init_supernet(small_space(1, 4, 4), 1);
  std::fill(p.alpha.begin(), p.alpha.end(), 0.0);
  const SubnetSpec s = compose_masks(*p.layout, ArchMask::from_string("1010"), ChannelMask::full(4));
  const auto probs = edge_probabilities(p, s);
  ASSERT_EQ(probs[0].size(), 2u);
  EXPECT_DOUBLE_EQ(probs[0][0], 0.5);
}

TEST(Forward, IdentityOnlyEdgesPassThrough) {
  std::mt19937_64 rng(3);
  const auto cfg = small_space(3, 4, 5);
  const auto p = random_params(cfg, rng);
  const Batch b = random_batch(6, cfg.d_in, cfg.classes, rng);
  const SubnetSpec s = compose_masks(*p.layout, only_op(cfg, 0), ChannelMask::full(cfg.channels));
  EXPECT_EQ(forward(p, s, b).logits, linear_path_logits(p, b));
}

TEST(Forward, FullyMaskedEdgeEqualsIdentityOnlyEdge) {
  std::mt19937_64 rng(4);
  const auto cfg = small_space(2, 4, 4);
  const auto p = random_params(cfg, rng);
  const Batch b = random_batch(5, cfg.d_in, cfg.classes, rng);
  const SubnetSpec empty_edge = compose_masks(*p.layout, ArchMask::from_string("01100000"), ChannelMask(3, 4));
  const SubnetSpec id_edge = compose_masks(*p.layout, ArchMask::from_string("01101000"), ChannelMask(3, 4));
  EXPECT_EQ(forward(p, empty_edge, b).logits, forward(p, id_edge, b).logits);
}

TEST(Forward, MaskedWeightsDoNotInfluenceOutput) {
  std::mt19937_64 rng(8);
  const auto cfg = small_space(2, 4, 6);
  auto p = random_params(cfg, rng);
  const Batch b = random_batch(7, cfg.d_in, cfg.classes, rng);
  const SubnetSpec s = random_subnet(p, rng);
  const auto before = forward(p, s, b);
  for (std::size_t i = 0; i < p.weights.size(); ++i)
    if (!s.weight_active[i]) p.weights[i] = 1e3 * (static_cast<double>(i % 7) - 3.0);
  for (std::size_t i = 0; i < p.alpha.size(); ++i)
    if (!s.alpha_active[i]) p.alpha[i] = 50.0;
  const auto after = forward(p, s, b);
  EXPECT_EQ(before.logits, after.logits);
  EXPECT_EQ(before.loss, after.loss);
}

TEST(Forward, RejectsBadInput) {
  const auto p = init_supernet(small_space(), 1);
  Batch b;
  b.dim = 2;
  b.features = {1, 2};
  b.labels = {0};
  EXPECT_THROW(forward(p, full_subnet(*p.layout), b), DimensionError);
  b.dim = 3;
  b.features = {1, 2, std::nan("")};
  EXPECT_THROW(forward(p, full_subnet(*p.layout), b), Error);
}

TEST(Gradients, MaskedParametersGetZero) {
  std::mt19937_64 rng(12);
  const auto cfg = small_space(2, 4, 6);
  const auto p = random_params(cfg, rng);
  const Batch b = random_batch(8, cfg.d_in, cfg.classes, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const SubnetSpec s = random_subnet(p, rng);
    const GradientSet g = gradients(p, s, b);
    for (std::size_t i = 0; i < g.weights.size(); ++i)
      if (!s.weight_active[i]) {
        EXPECT_EQ(g.weights[i], 0.0);
      }
    for (std::size_t i = 0; i < g.alpha.size(); ++i)
      if (!s.alpha_active[i]) {
        EXPECT_EQ(g.alpha[i], 0.0);
      }
  }
}

TEST(Gradients, SingletonEdgeAlphaHasZeroGradient) {
  std::mt19937_64 rng(13);
  const auto cfg = small_space(2, 3, 4);
  const auto p = random_params(cfg, rng);
  const Batch b = random_batch(8, cfg.d_in, cfg.classes, rng);
  const SubnetSpec s = compose_masks(*p.layout, ArchMask::from_string("010111"), ChannelMask::full(4));
  EXPECT_EQ(gradients(p, s, b).alpha[1], 0.0);
}

TEST(Gradients, MatchCentralDifferences) {
  std::mt19937_64 rng(21);
  const auto cfg = small_space(2, 3, 4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_params(cfg, rng);
    const Batch b = random_batch(8, cfg.d_in, cfg.classes, rng);
    EXPECT_LT(finite_diff_check(p, full_subnet(*p.layout), b, 1e-5), 1e-4);
    EXPECT_LT(finite_diff_check(p, random_subnet(p, rng), b, 1e-5), 1e-4);
  }
}

TEST(Gradients, ConstantLossRegionHitsDenominatorFloor) {
  auto p = init_supernet(small_space(), 3);
  const ParamLayout& L = *p.layout;
  for (std::size_t i = 0; i < L.head_size(); ++i) p.weights[L.head_weight_offset() + i] = 0.0;
  for (std::size_t k = 0; k < 3; ++k) p.weights[L.head_bias_offset() + k] = 0.0;
  Batch b;
  b.dim = 3;
  b.features = {0.5, -1, 2, 0.5, -1, 2, 0.5, -1, 2};
  b.labels = {0, 1, 2};
  const GradientSet g = gradients(p, full_subnet(L), b);
  for (double a : g.alpha) EXPECT_EQ(a, 0.0);
  for (double w : g.weights) EXPECT_LT(std::abs(w), 1e-15);
  // Numeric partials are pure rounding noise here; the 1e-8 floor keeps the
  // ratio finite and bounded by noise / 1e-8.
  const double err = finite_diff_check(p, full_subnet(L), b, 1e-5);
  EXPECT_TRUE(std::isfinite(err));
  EXPECT_LT(err * 1e-8, 1e-10);
}

TEST(Gradients, FiniteDifferenceErrorIsUShapedInStep) {
  std::mt19937_64 rng(31);
  const auto cfg = small_space(2, 3, 4);
  const auto p = random_params(cfg, rng);
  const Batch b = random_batch(8, cfg.d_in, cfg.classes, rng);
  const SubnetSpec s = full_subnet(*p.layout);
  const double coarse = finite_diff_check(p, s, b, 1e-2);
  const double mid = finite_diff_check(p, s, b, 1e-5);
  const double fine = finite_diff_check(p, s, b, 1e-10);
  EXPECT_LT(mid, coarse);
  EXPECT_LT(mid, fine);
  EXPECT_THROW(finite_diff_check(p, s, b, 0.0), Error);
}

TEST(Clip, Examples) {
  std::vector<double> zero(5, 0.0);
  clip_in_place(zero, 0.5);
  EXPECT_EQ(zero, std::vector<double>(5, 0.0));

  std::vector<double> unit{0.6, 0.8};
  clip_in_place(unit, 0.5);
  EXPECT_NEAR(l2_norm(unit), 0.5, 1e-15);
  EXPECT_LE(l2_norm(unit), 0.5);

  std::vector<double> small{0.3, 0.0};
  clip_in_place(small, 0.5);
  EXPECT_EQ(small, (std::vector<double>{0.3, 0.0}));
  EXPECT_THROW(clip_in_place(small, 0.0), Error);
}

TEST(Clip, IdempotentAndBounded) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + rng() % 50);
    for (auto& x : v) x = g(rng);
    clip_in_place(v, 0.5);
    EXPECT_LE(l2_norm(v), 0.5);
    const auto once = v;
    clip_in_place(v, 0.5);
    EXPECT_EQ(v, once);
  }
}

TEST(ClipGradients, UsesGlobalNormAcrossGroups) {
  GradientSet g{{0.6}, {0.8}};
  const GradientSet c = clip_gradients(g, 0.5);
  EXPECT_NEAR(c.weights[0], 0.3, 1e-15);
  EXPECT_NEAR(c.alpha[0], 0.4, 1e-15);
}

TEST(Adam, ZeroGradientZeroDecayLeavesParams) {
  std::vector<double> w{1.0, -2.0};
  const std::vector<double> g{0.0, 0.0};
  const std::vector<std::uint8_t> on{1, 1};
  AdamState st(2);
  adam_step(w, g, on, st, AdamConfig{0.1, 0.0});
  EXPECT_EQ(w, (std::vector<double>{1.0, -2.0}));
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  for (double g0 : {3.0, -0.25, 1e-3}) {
    std::vector<double> w{0.0};
    const std::vector<double> g{g0};
    const std::vector<std::uint8_t> on{1};
    AdamState st(1);
    adam_step(w, g, on, st, AdamConfig{0.01, 0.0});
    EXPECT_NEAR(w[0], -0.01 * g0 / (std::abs(g0) + 1e-8), 1e-17);
    EXPECT_NEAR(w[0], g0 > 0 ? -0.01 : 0.01, 1e-7);
  }
}

TEST(Adam, WeightDecayEntersTheGradient) {
  std::vector<double> w{2.0};
  const std::vector<double> g{0.0};
  const std::vector<std::uint8_t> on{1};
  AdamState st(1);
  adam_step(w, g, on, st, AdamConfig{0.01, 0.5});
  EXPECT_NEAR(w[0], 2.0 - 0.01, 1e-9);
}

TEST(Adam, InactiveEntriesAndMomentsUntouched) {
  std::vector<double> w{1.0, 1.0};
  const std::vector<double> g{0.5, 0.5};
  const std::vector<std::uint8_t> on{1, 0};
  AdamState st(2);
  adam_step(w, g, on, st, AdamConfig{0.1, 0.1});
  EXPECT_EQ(w[1], 1.0);
  EXPECT_EQ(st.m[1], 0.0);
  EXPECT_EQ(st.v[1], 0.0);
  EXPECT_NE(w[0], 1.0);
  const std::vector<double> bad{0.0};
  EXPECT_THROW(adam_step(w, bad, on, st, AdamConfig{}), DimensionError);
}

TEST(Adam, ParameterGroupsKeepSeparateState) {
  std::vector<double> w{1.0}, a{1.0};
  const std::vector<double> g{0.3};
  const std::vector<std::uint8_t> on{1};
  AdamState ws(1), as(1);
  adam_step(a, g, on, as, AdamConfig{});
  const AdamState alpha_before = as;
  for (int i = 0; i < 5; ++i) adam_step(w, g, on, ws, AdamConfig{});
  EXPECT_EQ(as.m, alpha_before.m);
  EXPECT_EQ(as.v, alpha_before.v);
  EXPECT_EQ(as.step, alpha_before.step);
}

namespace {

struct BlobFixture : ::testing::Test {
  Dataset data = gen_blobs(2, 60, 3, 0.2, 4);
  SearchSpaceConfig cfg = [] {
    SearchSpaceConfig c;
    c.edges = 2;
    c.ops = 4;
    c.channels = 6;
    c.d_in = 3;
    c.classes = 2;
    return c;
  }();
  std::vector<std::size_t> train, val;
  void SetUp() override {
    const auto& t = data.split("train");
    for (std::size_t i = 0; i < t.size(); ++i) (i % 2 ? val : train).push_back(t[i]);
  }
};

}  // namespace

TEST_F(BlobFixture, MaskedEntriesNeverChange) {
  std::mt19937_64 rng(6);
  const auto p = random_params(cfg, rng);
  const SubnetSpec s = random_subnet(p, rng);
  const auto out = local_search(p, s, data, train, val, TrainingConfig{}, 1).params;
  for (std::size_t i = 0; i < p.weights.size(); ++i)
    if (!s.weight_active[i]) {
      EXPECT_EQ(out.weights[i], p.weights[i]);
    }
  for (std::size_t i = 0; i < p.alpha.size(); ++i)
    if (!s.alpha_active[i]) {
      EXPECT_EQ(out.alpha[i], p.alpha[i]);
    }
  EXPECT_EQ(out.embed, p.embed);
}

TEST_F(BlobFixture, WeightOnlyTrainingDecreasesTrainLoss) {
  TrainingConfig tc;
  tc.lambda_val = 0.0;
  tc.update_alpha = false;
  tc.local_epochs = 1;
  tc.lr_w = 0.01;
  auto p = init_supernet(cfg, 2);
  const SubnetSpec s = full_subnet(*p.layout);
  double prev = mean_loss(p, s, data, train);
  for (int epoch = 0; epoch < 5; ++epoch) {
    p = local_search(p, s, data, train, val, tc, 10 + epoch).params;
    const double now = mean_loss(p, s, data, train);
    EXPECT_LE(now, prev) << "epoch " << epoch;
    prev = now;
  }
  EXPECT_EQ(p.alpha, init_supernet(cfg, 2).alpha);
}

TEST_F(BlobFixture, DeterministicForSameSeed) {
  const auto p = init_supernet(cfg, 2);
  const SubnetSpec s = full_subnet(*p.layout);
  const auto a = local_search(p, s, data, train, val, TrainingConfig{}, 99);
  const auto b = local_search(p, s, data, train, val, TrainingConfig{}, 99);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.last_epoch_train_loss, b.last_epoch_train_loss);
  EXPECT_FALSE(a.params == local_search(p, s, data, train, val, TrainingConfig{}, 98).params);
}

TEST_F(BlobFixture, CyclesShorterSplit) {
  TrainingConfig tc;
  tc.batch_size = 10;
  tc.local_epochs = 2;
  const std::vector<std::size_t> short_val(val.begin(), val.begin() + 5);
  const auto p = init_supernet(cfg, 2);
  const auto r = local_search(p, full_subnet(*p.layout), data, train, short_val, tc, 1);
  EXPECT_EQ(r.steps, 2 * ((train.size() + 9) / 10));
  EXPECT_THROW(local_search(p, full_subnet(*p.layout), data, train, {}, tc, 1), Error);
}

TEST(Evaluate, RandomParamsNearChance) {
  const Dataset data = gen_blobs(3, 200, 3, 0.3, 1);
  SearchSpaceConfig cfg = small_space(2, 4, 6);
  double sum = 0.0;
  const int seeds = 30;
  for (int s = 0; s < seeds; ++s) sum += evaluate_full(init_supernet(cfg, s), data, all_indices(data));
  const double n = static_cast<double>(seeds) * static_cast<double>(data.size());
  EXPECT_NEAR(sum / seeds, 1.0 / 3.0, 3.0 * std::sqrt((1.0 / 3.0) * (2.0 / 3.0) / n) + 0.05);
}

TEST(Evaluate, PerfectLogitsScoreOne) {
  // Identity-only network with an embed/head pair that copies feature k into logit k.
  Dataset ds;
  ds.dim = 3;
  ds.class_count = 3;
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 3; ++j) ds.features.push_back(j == i % 3 ? 1.0 : 0.0);
    ds.labels.push_back(i % 3);
  }
  auto p = init_supernet(small_space(2, 4, 3), 1);
  const auto& cfg = p.config();
  const ParamLayout& L = *p.layout;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t j = 0; j < 3; ++j) {
      p.embed[c * cfg.d_in + j] = c == j;
      p.weights[L.head_weight_offset() + c * 3 + j] = c == j;
    }
  for (std::size_t k = 0; k < 3; ++k) p.weights[L.head_bias_offset() + k] = 0.0;
  const SubnetSpec s = compose_masks(L, only_op(cfg, 0), ChannelMask::full(3));
  EXPECT_EQ(evaluate(p, s, ds, all_indices(ds)), 1.0);
  EXPECT_THROW(evaluate(p, s, ds, {}), Error);
}

TEST(Evaluate, ArgmaxSubnetPicksHighestAlpha) {
  auto p = init_supernet(small_space(2, 3, 4), 1);
  p.alpha = {0.1, 0.9, 0.2, 0.5, 0.5, 0.0};
  const SubnetSpec s = argmax_subnet_spec(p);
  EXPECT_EQ(s.arch_mask.to_string(), "010100");
}
