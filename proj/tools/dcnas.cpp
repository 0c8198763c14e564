#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "dcnas/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Federated supernet search simulator with structured subnet sampling"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  auto* run = app.add_subcommand("run", "Run a federated search experiment");
  run->footer(dcnas::cli::kPrecedenceNote);
  run->add_option("config", config_path, "Config file of `key = value` lines")->check(CLI::ExistingFile);
  run->add_option("--set", overrides, "Override a config key, e.g. --set rounds=10 (repeatable)");
  run->add_option("--workers", workers, "Concurrent client simulations")->check(CLI::PositiveNumber);

  dcnas::cli::SampleArgs sample_args;
  auto* sample = app.add_subcommand("sample", "Stream sampler masks as JSON lines without training");
  sample->add_option("--strategy", sample_args.strategy, "Sampling strategy")->capture_default_str();
  sample->add_option("-n,--bits", sample_args.n, "Mask length")->capture_default_str();
  sample->add_option("-c,--clients", sample_args.clients, "Client count")->capture_default_str();
  sample->add_option("-r,--rounds", sample_args.rounds, "Rounds")->capture_default_str();
  sample->add_option("--seed", sample_args.seed, "Seed")->capture_default_str();
  sample->add_option("--s-target", sample_args.s_target, "Target sparsity recorded in the log")
      ->capture_default_str();

  std::string log_path;
  std::string analyze_out = ".";
  auto* analyze = app.add_subcommand("analyze", "Sampling diagnostics from a mask log");
  analyze->add_option("log", log_path, "Mask log (JSON lines), '-' for stdin")->required();
  analyze->add_option("-o,--out-dir", analyze_out, "Directory for diagnostics.csv and overlap.csv")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dcnas::cli::kExitUsage;
  }

  if (*run) return dcnas::cli::cmd_run(config_path, overrides, workers, std::cerr);
  if (*sample) return dcnas::cli::cmd_sample(sample_args, std::cout, std::cerr);
  if (*analyze) return dcnas::cli::cmd_analyze(log_path, analyze_out, std::cerr);
  return dcnas::cli::kExitUsage;
}
