#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "dcnas/analysis.hpp"
#include "dcnas/checkpoint.hpp"
#include "dcnas/dataset.hpp"
#include "dcnas/error.hpp"
#include "dcnas/micromodel.hpp"
#include "dcnas/rng.hpp"
#include "dcnas/sampling.hpp"
#include "dcnas/searchspace.hpp"

namespace dcnas {

// Per-client target sparsity: an explicit list (one value broadcast to all
// clients when it has a single entry) or a clamped normal draw.
struct SparsitySpec {
  std::vector<double> values{0.5};
  std::optional<std::pair<double, double>> normal;  // (mu, sigma)
};

struct ExperimentConfig {
  std::size_t clients = 8;
  std::size_t rounds = 50;
  Strategy strategy = Strategy::kDiversified;
  SparsitySpec s_target;
  std::optional<double> alpha_iid;  // Dirichlet concentration; nullopt = IID split
  std::uint64_t seed = 0;
  SearchSpaceConfig search_space;
  TrainingConfig training;
  double server_lr = 1.0;
  std::size_t finetune_epochs = 0;
  std::size_t workers = 1;
  bool record_wall_time = true;

  void validate() const {
    if (clients < 1) throw ConfigError("clients", "must be >= 1");
    if (s_target.normal) {
      const auto [mu, sigma] = *s_target.normal;
      if (!(mu >= 0 && mu < 1)) throw ConfigError("s_target", "mean must lie in [0, 1)");
      if (!(sigma >= 0)) throw ConfigError("s_target", "sigma must be non-negative");
    } else {
      if (s_target.values.size() != 1 && s_target.values.size() != clients)
        throw ConfigError("s_target", "needs one value or one per client");
      for (double s : s_target.values)
        if (!(s >= 0 && s < 1)) throw ConfigError("s_target", "entries must lie in [0, 1)");
    }
    if (alpha_iid && !(*alpha_iid > 0)) throw ConfigError("alpha_iid", "must be positive");
    if (!(server_lr > 0)) throw ConfigError("server_lr", "must be positive");
    search_space.validate();
    training.validate();
  }
};

struct PartitionSpec {
  std::vector<std::vector<std::size_t>> shards;
  // Dirichlet draws, proportions[class][client]; empty for IID partitions.
  std::vector<std::vector<double>> proportions;
};

inline PartitionSpec partition_iid(std::size_t n_total, std::size_t clients, std::uint64_t seed) {
  if (clients < 1) throw PartitionError("need at least one client");
  if (n_total < 2 * clients)
    throw PartitionError("need at least 2 samples per client (" + std::to_string(n_total) +
                         " samples for " + std::to_string(clients) + " clients)");
  std::vector<std::size_t> perm(n_total);
  for (std::size_t i = 0; i < n_total; ++i) perm[i] = i;
  Rng rng = make_rng(seed, Stream::kPartition, {0});
  std::shuffle(perm.begin(), perm.end(), rng);
  PartitionSpec out;
  std::size_t at = 0;
  for (std::size_t c = 0; c < clients; ++c) {
    const std::size_t len = n_total / clients + (c < n_total % clients ? 1 : 0);
    out.shards.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(at),
                            perm.begin() + static_cast<std::ptrdiff_t>(at + len));
    at += len;
  }
  return out;
}

// Integer counts summing to `total`, proportional to `weights`: floors first,
// then one extra unit to the largest remainders (ties to the lower index).
inline std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const double> weights) {
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    used += counts[i];
    rem.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; used < total; ++i, ++used) counts[rem[i % rem.size()].second] += 1;
  while (used > total) {  // guards against floor rounding up on pathological weights
    for (std::size_t i = counts.size(); i-- > 0 && used > total;)
      if (counts[i] > 0) --counts[i], --used;
  }
  return counts;
}

inline PartitionSpec partition_dirichlet(std::span<const int> labels, std::size_t clients,
                                         double alpha_iid, std::uint64_t seed) {
  if (clients < 1) throw PartitionError("need at least one client");
  if (!(alpha_iid > 0)) throw PartitionError("Dirichlet concentration must be positive");
  std::size_t classes = 0;
  for (int y : labels) {
    if (y < 0) throw PartitionError("negative label");
    classes = std::max(classes, static_cast<std::size_t>(y) + 1);
  }
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  for (std::size_t k = 0; k < classes; ++k)
    if (by_class[k].empty()) throw PartitionError("class " + std::to_string(k) + " has no samples");

  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    Rng rng = make_rng(seed, Stream::kPartition, {1, attempt});
    std::gamma_distribution<double> gamma(alpha_iid, 1.0);
    PartitionSpec out;
    out.shards.assign(clients, {});
    for (std::size_t k = 0; k < classes; ++k) {
      std::vector<double> prop(clients);
      double sum = 0.0;
      for (auto& p : prop) sum += (p = gamma(rng));
      if (!(sum > 0)) {  // every draw underflowed; fall back to a uniform vector
        std::fill(prop.begin(), prop.end(), 1.0);
        sum = static_cast<double>(clients);
      }
      for (auto& p : prop) p /= sum;
      auto members = by_class[k];
      std::shuffle(members.begin(), members.end(), rng);
      const auto counts = largest_remainder(members.size(), prop);
      std::size_t at = 0;
      for (std::size_t c = 0; c < clients; ++c) {
        out.shards[c].insert(out.shards[c].end(), members.begin() + static_cast<std::ptrdiff_t>(at),
                             members.begin() + static_cast<std::ptrdiff_t>(at + counts[c]));
        at += counts[c];
      }
      out.proportions.push_back(std::move(prop));
    }
    const bool ok = std::all_of(out.shards.begin(), out.shards.end(),
                                [](const auto& s) { return s.size() >= 2; });
    if (!ok) continue;
    for (auto& s : out.shards) std::shuffle(s.begin(), s.end(), rng);
    return out;
  }
  throw PartitionError("Dirichlet partition left a client with fewer than 2 samples after 100 draws");
}

inline std::vector<double> heterogeneous_sparsity(double mu, double sigma, std::size_t clients,
                                                  std::uint64_t seed) {
  if (!(mu >= 0 && mu < 1)) throw Error("mean sparsity must lie in [0, 1)");
  if (!(sigma >= 0)) throw Error("sparsity deviation must be non-negative");
  std::vector<double> out(clients, mu);
  if (sigma == 0) return out;
  Rng rng = make_rng(seed, Stream::kSparsity);
  std::normal_distribution<double> normal(mu, sigma);
  for (auto& s : out) s = std::clamp(normal(rng), 0.0, 0.95);
  return out;
}

inline std::vector<double> resolve_sparsity(const ExperimentConfig& cfg) {
  if (cfg.s_target.normal)
    return heterogeneous_sparsity(cfg.s_target.normal->first, cfg.s_target.normal->second, cfg.clients,
                                  cfg.seed);
  if (cfg.s_target.values.size() == 1) return std::vector<double>(cfg.clients, cfg.s_target.values[0]);
  return cfg.s_target.values;
}

// One client's local data as indices into the shared dataset.
struct ClientDataset {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::size_t n_samples() const { return train.size() + val.size(); }
};

// First half (rounded up) of each shard trains, the rest validates.
inline std::vector<ClientDataset> make_clients(const PartitionSpec& part,
                                               std::span<const std::size_t> index_map) {
  std::vector<ClientDataset> out;
  for (const auto& shard : part.shards) {
    ClientDataset c;
    const std::size_t n_train = shard.size() - shard.size() / 2;
    for (std::size_t i = 0; i < shard.size(); ++i)
      (i < n_train ? c.train : c.val).push_back(index_map[shard[i]]);
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<ClientDataset> partition_clients(const ExperimentConfig& cfg, const Dataset& data) {
  const auto& train = data.split("train");
  PartitionSpec part;
  if (cfg.alpha_iid) {
    std::vector<int> labels;
    for (std::size_t i : train) labels.push_back(data.labels[i]);
    part = partition_dirichlet(labels, cfg.clients, *cfg.alpha_iid, cfg.seed);
  } else {
    part = partition_iid(train.size(), cfg.clients, cfg.seed);
  }
  return make_clients(part, train);
}

struct ClientUpdate {
  std::vector<double> delta_w;
  std::vector<double> delta_alpha;
  SubnetSpec mask;
  std::size_t n_samples = 0;
};

// w += sum_c lr * (N_c / N) * m_c (x) dw_c, and likewise for alpha. Per-position
// sums run in client order; positions outside every mask are not written.
inline SupernetParams aggregate(SupernetParams supernet, std::span<const ClientUpdate> updates,
                                std::size_t n_total, double server_lr = 1.0) {
  std::size_t covered = 0;
  for (const auto& u : updates) {
    if (u.delta_w.size() != supernet.weights.size() || u.delta_alpha.size() != supernet.alpha.size() ||
        u.mask.weight_active.size() != supernet.weights.size() ||
        u.mask.alpha_active.size() != supernet.alpha.size())
      throw DimensionError("client update shape does not match the supernet");
    if (u.n_samples < 1) throw Error("client update with no samples");
    covered += u.n_samples;
  }
  if (covered > n_total) throw Error("client sample counts exceed the total");

  std::vector<double> coef;
  for (const auto& u : updates)
    coef.push_back(server_lr * (static_cast<double>(u.n_samples) / static_cast<double>(n_total)));

  auto apply = [&](std::vector<double>& target, auto delta_of, auto active_of) {
    for (std::size_t i = 0; i < target.size(); ++i) {
      bool touched = false;
      double sum = 0.0;
      for (std::size_t c = 0; c < updates.size(); ++c) {
        if (!active_of(updates[c])[i]) continue;
        touched = true;
        sum += coef[c] * delta_of(updates[c])[i];
      }
      if (touched) target[i] += sum;
    }
  };
  apply(
      supernet.weights, [](const ClientUpdate& u) -> const auto& { return u.delta_w; },
      [](const ClientUpdate& u) -> const auto& { return u.mask.weight_active; });
  apply(
      supernet.alpha, [](const ClientUpdate& u) -> const auto& { return u.delta_alpha; },
      [](const ClientUpdate& u) -> const auto& { return u.mask.alpha_active; });
  return supernet;
}

struct ServerState {
  SupernetParams supernet;
  SamplerState sampler;
  std::size_t round = 0;
  std::vector<RoundMetrics> metrics;
  std::vector<MaskRecord> mask_log;
};

inline ServerState init_server(const ExperimentConfig& cfg) {
  cfg.validate();
  return ServerState{init_supernet(cfg.search_space, cfg.seed),
                     init_sampler(cfg.strategy, cfg.search_space.mask_length(), cfg.clients, cfg.seed),
                     0, {}, {}};
}

inline ServerState server_from_checkpoint(const ExperimentConfig& cfg, const Checkpoint& ck) {
  cfg.validate();
  if (!(ck.params.config() == cfg.search_space))
    throw Error("checkpoint search space does not match the configuration");
  if (!ck.sampler) throw Error("checkpoint carries no sampler state; cannot resume");
  return ServerState{ck.params, *ck.sampler, ck.round, {}, {}};
}

namespace detail {

// Runs job(i) for i in [0, count) on up to `workers` threads. Rethrows the
// first failure after all threads join.
inline void parallel_for(std::size_t count, std::size_t workers,
                         const std::function<void(std::size_t)>& job) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

// Target sparsity each client must meet; the no-sampling baseline always
// trains the full supernet.
inline double effective_target(const ExperimentConfig& cfg, double s_target) {
  return cfg.strategy == Strategy::kNoSampling ? 0.0 : s_target;
}

inline RoundMetrics run_round(ServerState& state, const Dataset& data,
                              std::span<const ClientDataset> clients, std::span<const double> s_targets,
                              const ExperimentConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  if (clients.size() != cfg.clients || s_targets.size() != cfg.clients)
    throw Error("client list does not match the configured client count");
  const std::vector<ArchMask> prior_history = state.sampler.history;
  const std::vector<ArchMask> masks = next_round_masks(state.sampler);
  const std::size_t round = masks.front().round();
  const ParamLayout& layout = *state.supernet.layout;

  std::vector<ClientUpdate> updates(cfg.clients);
  std::vector<double> train_loss(cfg.clients, 0.0);
  std::vector<MaskRecord> records(cfg.clients);
  for (std::size_t c = 0; c < cfg.clients; ++c) {
    const double target = effective_target(cfg, s_targets[c]);
    const SparsityBudget budget = make_budget(target, masks[c]);
    const ChannelMask channel = make_channel_mask(budget.s_channel, cfg.search_space.channels);
    updates[c].mask = compose_masks(layout, masks[c], channel);
    updates[c].n_samples = clients[c].n_samples();
    records[c] = MaskRecord{round, c, masks[c], budget.s_arch, budget.s_channel, target};
  }

  const SupernetParams& start = state.supernet;
  detail::parallel_for(cfg.clients, cfg.workers, [&](std::size_t c) {
    const auto seed = derive_seed(cfg.seed, Stream::kClient, {round, c});
    LocalSearchResult local = local_search(start, updates[c].mask, data, clients[c].train, clients[c].val,
                                           cfg.training, seed);
    ClientUpdate& u = updates[c];
    u.delta_w.assign(start.weights.size(), 0.0);
    u.delta_alpha.assign(start.alpha.size(), 0.0);
    for (std::size_t i = 0; i < start.weights.size(); ++i)
      if (u.mask.weight_active[i]) u.delta_w[i] = local.params.weights[i] - start.weights[i];
    for (std::size_t i = 0; i < start.alpha.size(); ++i)
      if (u.mask.alpha_active[i]) u.delta_alpha[i] = local.params.alpha[i] - start.alpha[i];
    train_loss[c] = local.last_epoch_train_loss;
  });

  std::size_t n_total = 0;
  for (const auto& c : clients) n_total += c.n_samples();
  state.supernet = aggregate(std::move(state.supernet), updates, n_total, cfg.server_lr);

  RoundMetrics m;
  m.round = round;
  const auto& test = data.split("test");
  m.supernet_test_acc = evaluate_full(state.supernet, data, test);
  m.argmax_test_acc = evaluate_argmax(state.supernet, data, test);
  double loss_sum = 0.0;
  for (double l : train_loss) loss_sum += l;
  m.mean_client_train_loss = loss_sum / static_cast<double>(cfg.clients);
  m.min_hamming_to_history = masks.front().size();
  for (const auto& mk : masks)
    m.min_hamming_to_history = std::min(m.min_hamming_to_history, min_distance_to_history(mk, prior_history));
  m.mean_pairwise_hamming = masks.size() >= 2 ? mean_pairwise_distance(masks) : 0.0;
  m.overlap = overlap_vector(masks);
  std::vector<SubnetSpec> subnets;
  for (const auto& u : updates) subnets.push_back(u.mask);
  m.avg_comm_params = comm_cost(subnets);
  if (cfg.record_wall_time)
    m.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                      started)
                    .count();

  state.round = round;
  state.metrics.push_back(m);
  state.mask_log.insert(state.mask_log.end(), records.begin(), records.end());
  return m;
}

// Weights-only finetune of the argmax subnet on each client's data.
inline std::vector<SupernetParams> finetune_argmax(const SupernetParams& supernet, const Dataset& data,
                                                   std::span<const ClientDataset> clients,
                                                   TrainingConfig cfg, std::size_t epochs,
                                                   std::uint64_t seed) {
  cfg.local_epochs = epochs;
  cfg.update_alpha = false;
  const SubnetSpec subnet = argmax_subnet_spec(supernet);
  std::vector<SupernetParams> out;
  for (std::size_t c = 0; c < clients.size(); ++c)
    out.push_back(local_search(supernet, subnet, data, clients[c].train, clients[c].val, cfg,
                               derive_seed(seed, Stream::kFinetune, {c}))
                      .params);
  return out;
}

struct ExperimentResult {
  ServerState state;
  Checkpoint checkpoint;
  std::vector<double> finetune_test_acc;  // per client, empty unless finetuning is enabled
};

struct RunOptions {
  std::optional<Checkpoint> resume;
  std::optional<std::size_t> stop_after;  // last round to execute
  std::function<void(const RoundMetrics&)> on_round;
};

// Runs rounds state.round+1 .. R (or up to stop_after). Test data never
// leaves the server; clients see only their shard of the train split.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& data,
                                       const RunOptions& opts = {}) {
  cfg.validate();
  data.validate();
  if (data.dim != cfg.search_space.d_in)
    throw DimensionError("dataset dimension does not match d_in");
  if (data.class_count > cfg.search_space.classes)
    throw DimensionError("dataset has more classes than the classifier");
  if (data.split("test").empty()) throw Error("dataset needs a non-empty test split");

  const auto clients = partition_clients(cfg, data);
  const auto targets = resolve_sparsity(cfg);
  ExperimentResult res{opts.resume ? server_from_checkpoint(cfg, *opts.resume) : init_server(cfg), {}, {}};
  const std::size_t last = std::min(cfg.rounds, opts.stop_after.value_or(cfg.rounds));
  while (res.state.round < last) {
    const RoundMetrics m = run_round(res.state, data, clients, targets, cfg);
    if (opts.on_round) opts.on_round(m);
  }
  res.checkpoint = Checkpoint{res.state.supernet, res.state.round, res.state.sampler};
  if (cfg.finetune_epochs > 0) {
    const auto tuned = finetune_argmax(res.state.supernet, data, clients, cfg.training, cfg.finetune_epochs,
                                       cfg.seed);
    for (const auto& p : tuned) res.finetune_test_acc.push_back(evaluate_argmax(p, data, data.split("test")));
  }
  return res;
}

inline constexpr const char* kMetricsHeader =
    "round,supernet_test_acc,argmax_test_acc,mean_client_train_loss,min_hamming_to_history,"
    "mean_pairwise_hamming,avg_comm_params,wall_ms";

inline void write_metrics_row(std::ostream& out, const RoundMetrics& m) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(10) << m.round << ',' << m.supernet_test_acc << ',' << m.argmax_test_acc << ','
      << m.mean_client_train_loss << ',' << m.min_hamming_to_history << ',' << m.mean_pairwise_hamming << ','
      << m.avg_comm_params << ',' << m.wall_ms << '\n';
  out.flags(flags);
  out.precision(prec);
}

inline void write_metrics_csv(std::ostream& out, std::span<const RoundMetrics> rows) {
  out << kMetricsHeader << '\n';
  for (const auto& m : rows) write_metrics_row(out, m);
}

inline void write_mask_log(std::ostream& out, std::span<const MaskRecord> records) {
  for (const auto& r : records) out << to_json_line(r) << '\n';
}

}  // namespace dcnas
