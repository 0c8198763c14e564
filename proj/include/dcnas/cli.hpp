#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dcnas/analysis.hpp"
#include "dcnas/checkpoint.hpp"
#include "dcnas/config.hpp"
#include "dcnas/federation.hpp"
#include "dcnas/sampling.hpp"

namespace dcnas::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kPrecedenceNote =
    "Configuration precedence: --set overrides beat config-file values, which beat built-in defaults.";

// Executes a full experiment and writes metrics.csv, masks.jsonl,
// checkpoint.json and config-echo.txt into out_dir.
inline int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides,
                   std::size_t workers, std::ostream& err) {
  ConfigFile cf;
  RunConfig rc;
  try {
    if (!config_path.empty()) cf.merge_file(config_path);
    for (const auto& o : overrides) cf.set_assignment(o);
    rc = build_run_config(cf);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    rc.experiment.workers = workers;
    Dataset data = load_run_dataset(rc);
    namespace fs = std::filesystem;
    const fs::path out = rc.out_dir;
    fs::create_directories(out);
    {
      std::ofstream echo(out / "config-echo.txt");
      cf.write_echo(echo);
    }
    std::ofstream metrics(out / "metrics.csv");
    metrics << kMetricsHeader << '\n';
    RunOptions opts;
    opts.on_round = [&](const RoundMetrics& m) {
      write_metrics_row(metrics, m);
      metrics.flush();
    };
    const ExperimentResult res = run_experiment(rc.experiment, data, opts);
    std::ofstream masks(out / "masks.jsonl");
    write_mask_log(masks, res.state.mask_log);
    save_checkpoint(res.checkpoint, (out / "checkpoint.json").string());
    if (!res.finetune_test_acc.empty()) {
      std::ofstream ft(out / "finetune.csv");
      ft << "client,argmax_finetuned_test_acc\n";
      for (std::size_t c = 0; c < res.finetune_test_acc.size(); ++c)
        ft << c << ',' << res.finetune_test_acc[c] << '\n';
    }
    if (!metrics || !masks) throw IoError("failed writing outputs to " + rc.out_dir);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "run failed: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

struct SampleArgs {
  std::string strategy = "diversified";
  std::size_t n = 24;
  std::size_t clients = 8;
  std::size_t rounds = 50;
  std::uint64_t seed = 0;
  double s_target = 0.5;
};

// Streams the mask log of a sampler run (no training) as JSON lines.
inline int cmd_sample(const SampleArgs& a, std::ostream& out, std::ostream& err) {
  const auto strategy = parse_strategy(a.strategy);
  if (!strategy) {
    err << "unknown strategy '" << a.strategy << "'\n";
    return kExitUsage;
  }
  if (a.n < 1 || a.clients < 1 || !(a.s_target >= 0 && a.s_target < 1)) {
    err << "n and clients must be >= 1 and s-target in [0, 1)\n";
    return kExitUsage;
  }
  SamplerState st = init_sampler(*strategy, a.n, a.clients, a.seed);
  const double target = *strategy == Strategy::kNoSampling ? 0.0 : a.s_target;
  for (std::size_t r = 0; r < a.rounds; ++r) {
    for (const auto& m : next_round_masks(st)) {
      const double s_arch = arch_sparsity(m);
      const double s_channel = s_arch >= 1.0 ? 0.0 : channel_sparsity_for_target(target, s_arch);
      out << to_json_line(MaskRecord{m.round(), m.client(), m, s_arch, s_channel, target}) << '\n';
    }
  }
  return kExitOk;
}

// Reads a mask log ("-" for stdin) and writes diagnostics.csv and overlap.csv.
inline int cmd_analyze(const std::string& log_path, const std::string& out_dir, std::ostream& err) {
  try {
    std::vector<MaskRecord> records;
    if (log_path == "-") {
      records = sampler_replay(std::cin);
    } else {
      std::ifstream in(log_path);
      if (!in) {
        err << "cannot open " << log_path << '\n';
        return kExitFailure;
      }
      records = sampler_replay(in);
    }
    const auto rows = diagnose(records);
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream diag(fs::path(out_dir) / "diagnostics.csv");
    std::ofstream overlap(fs::path(out_dir) / "overlap.csv");
    write_diagnostics_csv(diag, rows);
    write_overlap_csv(overlap, rows);
    if (!diag || !overlap) throw IoError("failed writing diagnostics to " + out_dir);
  } catch (const ParseError& e) {
    err << "malformed mask log: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "analyze failed: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace dcnas::cli
