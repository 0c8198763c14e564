#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include "dcnas/dataset.hpp"
#include "dcnas/error.hpp"
#include "dcnas/layout.hpp"
#include "dcnas/rng.hpp"
#include "dcnas/searchspace.hpp"

namespace dcnas {

struct TrainingConfig {
  double lr_w = 0.001;
  double lr_alpha = 3e-4;
  double lambda_val = 1.0;
  double clip_threshold = 0.5;
  double weight_decay_w = 3e-4;
  double weight_decay_alpha = 1e-3;
  std::size_t local_epochs = 5;
  std::size_t batch_size = 32;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool update_alpha = true;

  void validate() const {
    if (!(lr_w > 0 && lr_alpha > 0 && clip_threshold > 0 && weight_decay_w >= 0 &&
          weight_decay_alpha >= 0 && batch_size > 0 && adam_beta1 > 0 && adam_beta2 > 0 &&
          adam_eps > 0))
      throw Error("training hyperparameters must be positive");
    if (!(lambda_val >= 0)) throw Error("lambda must be non-negative");
  }
};

// Trainable weights (flat, see ParamLayout), architecture parameters alpha
// (E x K row-major) and the fixed input lift (n_c x d_in row-major).
struct SupernetParams {
  std::shared_ptr<const ParamLayout> layout;
  std::vector<double> weights;
  std::vector<double> alpha;
  std::vector<double> embed;

  const SearchSpaceConfig& config() const { return layout->config(); }

  bool operator==(const SupernetParams& o) const {
    return config() == o.config() && weights == o.weights && alpha == o.alpha && embed == o.embed;
  }
};

struct GradientSet {
  std::vector<double> weights;
  std::vector<double> alpha;

  static GradientSet zeros_like(const SupernetParams& p) {
    return {std::vector<double>(p.weights.size(), 0.0), std::vector<double>(p.alpha.size(), 0.0)};
  }
};

inline SupernetParams init_supernet(const SearchSpaceConfig& cfg, std::uint64_t seed) {
  auto layout = std::make_shared<const ParamLayout>(cfg);
  SupernetParams p{layout, std::vector<double>(layout->weight_count(), 0.0),
                   std::vector<double>(cfg.mask_length(), 0.0),
                   std::vector<double>(cfg.channels * cfg.d_in, 0.0)};
  Rng rng = make_rng(seed, Stream::kInit);
  auto uniform = [&](double bound) { return (2.0 * uniform01(rng) - 1.0) * bound; };

  const double w_bound = 1.0 / std::sqrt(static_cast<double>(cfg.channels));
  for (std::size_t e = 0; e < cfg.edges; ++e) {
    for (std::size_t k = 0; k < cfg.ops; ++k) {
      const OpBlock& b = layout->block(e, k);
      for (std::size_t i = 0; i < b.weight_size; ++i) p.weights[b.weight_offset + i] = uniform(w_bound);
      if (b.kind == OpKind::kScale)
        for (std::size_t i = 0; i < b.bias_size; ++i) p.weights[b.bias_offset + i] = 1.0;
    }
  }
  for (std::size_t i = 0; i < cfg.classes * cfg.channels; ++i)
    p.weights[layout->head_weight_offset() + i] = uniform(w_bound);
  for (auto& a : p.alpha) a = uniform(1e-3);
  const double e_bound = std::sqrt(3.0 / static_cast<double>(cfg.d_in));
  for (auto& v : p.embed) v = uniform(e_bound);
  return p;
}

namespace detail {

// Active ops of one edge with their mixing probabilities (softmax over the
// active alphas only).
struct EdgeMix {
  std::vector<std::size_t> ops;
  std::vector<double> prob;
};

inline EdgeMix edge_mix(const SupernetParams& p, const SubnetSpec& net, std::size_t e) {
  const std::size_t K = p.config().ops;
  EdgeMix mix;
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    if (!net.op_active(e * K + k)) continue;
    mix.ops.push_back(k);
    top = std::max(top, p.alpha[e * K + k]);
  }
  double z = 0.0;
  for (std::size_t k : mix.ops) {
    mix.prob.push_back(std::exp(p.alpha[e * K + k] - top));
    z += mix.prob.back();
  }
  for (double& q : mix.prob) q /= z;
  return mix;
}

inline void check_inputs(const SupernetParams& p, const SubnetSpec& net, const Batch& batch) {
  const auto& cfg = p.config();
  if (batch.dim != cfg.d_in)
    throw DimensionError("batch feature dimension " + std::to_string(batch.dim) +
                         " does not match d_in " + std::to_string(cfg.d_in));
  if (net.arch_mask.size() != cfg.mask_length() || net.weight_active.size() != p.weights.size() ||
      net.channel_mask.channels() != cfg.channels)
    throw DimensionError("subnet does not match the search space");
  for (double v : batch.features)
    if (!std::isfinite(v)) throw Error("non-finite input feature");
  for (int y : batch.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= cfg.classes)
      throw DimensionError("label outside the classifier range");
}

// Per-sample activations kept for the backward pass.
struct Trace {
  std::vector<std::vector<double>> h;        // h[0..E], each n_c
  std::vector<std::vector<double>> op_out;   // [e*K+k] masked op output
  std::vector<std::vector<double>> pre_act;  // [e*K+k] affine pre-activation
};

// Mean cross-entropy over the batch. Fills `logits` (B x classes) when given
// and accumulates exact partials into `grad` when given.
inline double evaluate_batch(const SupernetParams& p, const SubnetSpec& net, const Batch& batch,
                             std::vector<double>* logits_out, GradientSet* grad) {
  check_inputs(p, net, batch);
  const auto& cfg = p.config();
  const ParamLayout& L = *p.layout;
  const std::size_t E = cfg.edges, K = cfg.ops, nc = cfg.channels, Cls = cfg.classes;
  const std::size_t a = net.channel_mask.active_count();
  const std::size_t B = batch.size();
  if (B == 0) throw Error("empty batch");

  std::vector<EdgeMix> mixes;
  for (std::size_t e = 0; e < E; ++e) mixes.push_back(edge_mix(p, net, e));

  const double* W = p.weights.data();
  const double* head_w = W + L.head_weight_offset();
  const double* head_b = W + L.head_bias_offset();

  if (logits_out) logits_out->assign(B * Cls, 0.0);
  Trace tr;
  tr.h.assign(E + 1, std::vector<double>(nc, 0.0));
  tr.op_out.assign(E * K, std::vector<double>(nc, 0.0));
  tr.pre_act.assign(E * K, std::vector<double>(nc, 0.0));
  std::vector<double> logits(Cls), dlogits(Cls), dh(nc), dh_in(nc);
  double loss = 0.0;

  for (std::size_t s = 0; s < B; ++s) {
    const double* x = batch.row(s);
    for (std::size_t i = 0; i < nc; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < cfg.d_in; ++j) acc += p.embed[i * cfg.d_in + j] * x[j];
      tr.h[0][i] = acc;
    }

    for (std::size_t e = 0; e < E; ++e) {
      const auto& in = tr.h[e];
      auto& out = tr.h[e + 1];
      std::fill(out.begin(), out.end(), 0.0);
      const EdgeMix& mix = mixes[e];
      if (mix.ops.empty()) {
        for (std::size_t i = 0; i < a; ++i) out[i] = in[i];
        continue;
      }
      for (std::size_t t = 0; t < mix.ops.size(); ++t) {
        const std::size_t k = mix.ops[t];
        const OpBlock& b = L.block(e, k);
        auto& o = tr.op_out[e * K + k];
        auto& z = tr.pre_act[e * K + k];
        std::fill(o.begin(), o.end(), 0.0);
        switch (b.kind) {
          case OpKind::kIdentity:
            for (std::size_t i = 0; i < a; ++i) o[i] = in[i];
            break;
          case OpKind::kAffineRelu:
          case OpKind::kAffineTanh:
            for (std::size_t i = 0; i < a; ++i) {
              const double* row = W + b.weight_offset + i * nc;
              double acc = W[b.bias_offset + i];
              for (std::size_t j = 0; j < nc; ++j) acc += row[j] * in[j];
              z[i] = acc;
              o[i] = b.kind == OpKind::kAffineRelu ? (acc > 0.0 ? acc : 0.0) : std::tanh(acc);
            }
            break;
          case OpKind::kScale:
            for (std::size_t i = 0; i < a; ++i) o[i] = W[b.bias_offset + i] * in[i];
            break;
        }
        const double q = mix.prob[t];
        for (std::size_t i = 0; i < a; ++i) out[i] += q * o[i];
      }
    }

    const auto& hE = tr.h[E];
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < Cls; ++c) {
      double acc = head_b[c];
      for (std::size_t j = 0; j < nc; ++j) acc += head_w[c * nc + j] * hE[j];
      logits[c] = acc;
      top = std::max(top, acc);
    }
    double z = 0.0;
    for (std::size_t c = 0; c < Cls; ++c) z += std::exp(logits[c] - top);
    const double lse = top + std::log(z);
    const auto y = static_cast<std::size_t>(batch.labels[s]);
    loss += lse - logits[y];
    if (logits_out) std::copy(logits.begin(), logits.end(), logits_out->begin() + s * Cls);
    if (!grad) continue;

    // Backward.
    double* gw = grad->weights.data();
    for (std::size_t c = 0; c < Cls; ++c)
      dlogits[c] = (std::exp(logits[c] - lse) - (c == y ? 1.0 : 0.0)) / static_cast<double>(B);
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t c = 0; c < Cls; ++c) {
      for (std::size_t j = 0; j < nc; ++j) {
        gw[L.head_weight_offset() + c * nc + j] += dlogits[c] * hE[j];
        dh[j] += head_w[c * nc + j] * dlogits[c];
      }
      gw[L.head_bias_offset() + c] += dlogits[c];
    }

    for (std::size_t e = E; e-- > 0;) {
      const auto& in = tr.h[e];
      const EdgeMix& mix = mixes[e];
      std::fill(dh_in.begin(), dh_in.end(), 0.0);
      if (mix.ops.empty()) {
        for (std::size_t i = 0; i < a; ++i) dh_in[i] = dh[i];
        dh.swap(dh_in);
        continue;
      }
      double mean_score = 0.0;
      std::vector<double> score(mix.ops.size());
      for (std::size_t t = 0; t < mix.ops.size(); ++t) {
        const auto& o = tr.op_out[e * K + mix.ops[t]];
        double sdot = 0.0;
        for (std::size_t i = 0; i < a; ++i) sdot += dh[i] * o[i];
        score[t] = sdot;
        mean_score += mix.prob[t] * sdot;
      }
      for (std::size_t t = 0; t < mix.ops.size(); ++t) {
        const std::size_t k = mix.ops[t];
        const double q = mix.prob[t];
        grad->alpha[e * K + k] += q * (score[t] - mean_score);
        const OpBlock& b = L.block(e, k);
        switch (b.kind) {
          case OpKind::kIdentity:
            for (std::size_t i = 0; i < a; ++i) dh_in[i] += q * dh[i];
            break;
          case OpKind::kAffineRelu:
          case OpKind::kAffineTanh: {
            const auto& z = tr.pre_act[e * K + k];
            const auto& o = tr.op_out[e * K + k];
            for (std::size_t i = 0; i < a; ++i) {
              const double d_act =
                  b.kind == OpKind::kAffineRelu ? (z[i] > 0.0 ? 1.0 : 0.0) : 1.0 - o[i] * o[i];
              const double dz = q * dh[i] * d_act;
              if (dz == 0.0) continue;
              const double* row = W + b.weight_offset + i * nc;
              double* grow = gw + b.weight_offset + i * nc;
              for (std::size_t j = 0; j < nc; ++j) {
                grow[j] += dz * in[j];
                dh_in[j] += row[j] * dz;
              }
              gw[b.bias_offset + i] += dz;
            }
            break;
          }
          case OpKind::kScale:
            for (std::size_t i = 0; i < a; ++i) {
              gw[b.bias_offset + i] += q * dh[i] * in[i];
              dh_in[i] += q * dh[i] * W[b.bias_offset + i];
            }
            break;
        }
      }
      dh.swap(dh_in);
    }
  }
  return loss / static_cast<double>(B);
}

}  // namespace detail

struct ForwardResult {
  std::vector<double> logits;  // B x classes row-major
  double loss = 0.0;
};

// Chain of E mixed edges over the lifted input: h_0 = embed(x),
// h_e = sum_k p_k * mask(op_k(h_{e-1})), logits = head(h_E).
inline ForwardResult forward(const SupernetParams& params, const SubnetSpec& subnet,
                             const Batch& batch) {
  ForwardResult r;
  r.loss = detail::evaluate_batch(params, subnet, batch, &r.logits, nullptr);
  return r;
}

inline GradientSet gradients(const SupernetParams& params, const SubnetSpec& subnet,
                             const Batch& batch, double* loss_out = nullptr) {
  GradientSet g = GradientSet::zeros_like(params);
  const double loss = detail::evaluate_batch(params, subnet, batch, nullptr, &g);
  if (loss_out) *loss_out = loss;
  return g;
}

// Mixing probabilities of each edge's active ops (empty for a fully masked edge).
inline std::vector<std::vector<double>> edge_probabilities(const SupernetParams& params,
                                                           const SubnetSpec& subnet) {
  std::vector<std::vector<double>> out;
  for (std::size_t e = 0; e < params.config().edges; ++e)
    out.push_back(detail::edge_mix(params, subnet, e).prob);
  return out;
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Rescales `v` to global norm `threshold` when it exceeds it. The result is
// guaranteed to have norm <= threshold so clipping twice changes nothing.
inline void clip_in_place(std::span<double> v, double threshold) {
  if (!(threshold > 0)) throw Error("clip threshold must be positive");
  double norm = l2_norm(v);
  while (norm > threshold) {
    const double scale = std::nextafter(threshold / norm, 0.0);
    for (double& x : v) x *= scale;
    norm = l2_norm(v);
  }
}

inline GradientSet clip_gradients(GradientSet grads, double threshold) {
  std::vector<double> flat(grads.weights);
  flat.insert(flat.end(), grads.alpha.begin(), grads.alpha.end());
  clip_in_place(flat, threshold);
  std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(grads.weights.size()),
            grads.weights.begin());
  std::copy(flat.begin() + static_cast<std::ptrdiff_t>(grads.weights.size()), flat.end(),
            grads.alpha.begin());
  return grads;
}

struct AdamConfig {
  double lr = 0.001;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// One Adam step over the entries flagged in `active`; other entries (and their
// moments) are left untouched. Weight decay is folded into the gradient.
inline void adam_step(std::span<double> params, std::span<const double> grads,
                      std::span<const std::uint8_t> active, AdamState& state,
                      const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != active.size() ||
      params.size() != state.m.size())
    throw DimensionError("adam_step: shape mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!active[i]) continue;
    const double g = grads[i] + cfg.weight_decay * params[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

struct LocalSearchResult {
  SupernetParams params;
  std::size_t steps = 0;
  double last_epoch_train_loss = 0.0;  // mean minibatch loss over the final epoch
};

// Alternating bilevel search on one client: per paired (train, val) minibatch,
// an Adam step on w from the training loss, then an Adam step on alpha from
// the training loss plus lambda times the validation loss. Both gradient sets
// are clipped before the optimizer; the optimizer state starts fresh.
inline LocalSearchResult local_search(SupernetParams params, const SubnetSpec& subnet,
                                      const Dataset& data, std::span<const std::size_t> train,
                                      std::span<const std::size_t> val,
                                      const TrainingConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (train.empty() || val.empty()) throw Error("local search needs non-empty train and val splits");

  AdamState w_state(params.weights.size());
  AdamState a_state(params.alpha.size());
  const AdamConfig w_opt{cfg.lr_w, cfg.weight_decay_w, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  const AdamConfig a_opt{cfg.lr_alpha, cfg.weight_decay_alpha, cfg.adam_beta1, cfg.adam_beta2,
                         cfg.adam_eps};

  std::vector<std::size_t> tr(train.begin(), train.end());
  std::vector<std::size_t> va(val.begin(), val.end());
  const std::size_t B = cfg.batch_size;
  const std::size_t n_tr = (tr.size() + B - 1) / B;
  const std::size_t n_va = (va.size() + B - 1) / B;
  const std::size_t steps_per_epoch = std::max(n_tr, n_va);
  auto slice = [B](const std::vector<std::size_t>& idx, std::size_t b) {
    const std::size_t lo = b * B;
    const std::size_t hi = std::min(idx.size(), lo + B);
    return std::span<const std::size_t>(idx.data() + lo, hi - lo);
  };

  LocalSearchResult result{std::move(params), 0, 0.0};
  SupernetParams& p = result.params;
  Rng rng(seed);
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::shuffle(tr.begin(), tr.end(), rng);
    std::shuffle(va.begin(), va.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const Batch bt = gather(data, slice(tr, s % n_tr));
      const Batch bv = gather(data, slice(va, s % n_va));

      double loss = 0.0;
      GradientSet g = gradients(p, subnet, bt, &loss);
      epoch_loss += loss;
      clip_in_place(g.weights, cfg.clip_threshold);
      adam_step(p.weights, g.weights, subnet.weight_active, w_state, w_opt);

      if (cfg.update_alpha) {
        GradientSet gt = gradients(p, subnet, bt);
        if (cfg.lambda_val != 0.0) {
          const GradientSet gv = gradients(p, subnet, bv);
          for (std::size_t i = 0; i < gt.alpha.size(); ++i) gt.alpha[i] += cfg.lambda_val * gv.alpha[i];
        }
        clip_in_place(gt.alpha, cfg.clip_threshold);
        adam_step(p.alpha, gt.alpha, subnet.alpha_active, a_state, a_opt);
      }
      ++result.steps;
    }
    result.last_epoch_train_loss = epoch_loss / static_cast<double>(steps_per_epoch);
  }
  return result;
}

inline double mean_loss(const SupernetParams& params, const SubnetSpec& subnet, const Dataset& data,
                        std::span<const std::size_t> indices) {
  if (indices.empty()) throw Error("mean_loss on an empty index set");
  return forward(params, subnet, gather(data, indices)).loss;
}

// Top-1 accuracy; ties in the logits resolve to the lowest class index.
inline double evaluate(const SupernetParams& params, const SubnetSpec& subnet, const Dataset& data,
                       std::span<const std::size_t> indices) {
  if (indices.empty()) throw Error("evaluate on an empty dataset");
  const Batch b = gather(data, indices);
  const ForwardResult r = forward(params, subnet, b);
  const std::size_t Cls = params.config().classes;
  std::size_t correct = 0;
  for (std::size_t s = 0; s < b.size(); ++s) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < Cls; ++c)
      if (r.logits[s * Cls + c] > r.logits[s * Cls + best]) best = c;
    correct += static_cast<int>(best) == b.labels[s];
  }
  return static_cast<double>(correct) / static_cast<double>(b.size());
}

inline double evaluate_full(const SupernetParams& params, const Dataset& data,
                            std::span<const std::size_t> indices) {
  return evaluate(params, full_subnet(*params.layout), data, indices);
}

inline SubnetSpec argmax_subnet_spec(const SupernetParams& params) {
  const auto& cfg = params.config();
  return compose_masks(*params.layout, argmax_mask(params.alpha, cfg.edges, cfg.ops),
                       ChannelMask::full(cfg.channels));
}

inline double evaluate_argmax(const SupernetParams& params, const Dataset& data,
                              std::span<const std::size_t> indices) {
  return evaluate(params, argmax_subnet_spec(params), data, indices);
}

// Central-difference check of every active partial (weights and alpha).
// Returns max |analytic - numeric| / max(1e-8, |numeric|).
inline double finite_diff_check(const SupernetParams& params, const SubnetSpec& subnet,
                                const Batch& batch, double eps) {
  if (!(eps > 0)) throw Error("finite-difference step must be positive");
  const GradientSet g = gradients(params, subnet, batch);
  SupernetParams probe = params;
  double worst = 0.0;
  auto check = [&](std::vector<double>& vec, const std::vector<double>& analytic, std::size_t i) {
    const double saved = vec[i];
    vec[i] = saved + eps;
    const double up = forward(probe, subnet, batch).loss;
    vec[i] = saved - eps;
    const double down = forward(probe, subnet, batch).loss;
    vec[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(numeric)));
  };
  for (std::size_t i = 0; i < probe.weights.size(); ++i)
    if (subnet.weight_active[i]) check(probe.weights, g.weights, i);
  for (std::size_t i = 0; i < probe.alpha.size(); ++i)
    if (subnet.alpha_active[i]) check(probe.alpha, g.alpha, i);
  return worst;
}

}  // namespace dcnas
