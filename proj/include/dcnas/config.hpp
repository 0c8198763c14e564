#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dcnas/dataio.hpp"
#include "dcnas/error.hpp"
#include "dcnas/federation.hpp"

namespace dcnas {

// Every accepted key with its default ("" = required). Order is the echo order.
inline const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"strategy", ""},
      {"clients", ""},
      {"rounds", ""},
      {"seed", ""},
      {"s_target", "0.5"},
      {"alpha_iid", "iid"},
      {"dataset", "spirals"},
      {"data_classes", "3"},
      {"data_per_class", "1500"},
      {"data_noise", "0.05"},
      {"data_turns", "0.75"},
      {"data_dim", "8"},
      {"edges", "6"},
      {"ops", "4"},
      {"channels", "16"},
      {"lr_w", "0.001"},
      {"lr_alpha", "0.0003"},
      {"lambda", "1"},
      {"clip", "0.5"},
      {"weight_decay_w", "0.0003"},
      {"weight_decay_alpha", "0.001"},
      {"epochs", "5"},
      {"batch", "32"},
      {"server_lr", "1"},
      {"finetune_epochs", "0"},
      {"record_wall_time", "true"},
      {"out_dir", "out"},
  };
  return keys;
}

// Effective key/value configuration: defaults, then file, then overrides.
class ConfigFile {
 public:
  ConfigFile() {
    for (const auto& [k, v] : config_keys())
      if (!v.empty()) values_[k] = v;
  }

  // `key = value` lines; '#' starts a comment. Unknown keys are rejected.
  void merge_text(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      if (detail::trim(line).empty()) continue;
      set_assignment(line, line_no);
    }
  }

  void merge_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    merge_text(in);
  }

  void set_assignment(const std::string& assignment, std::size_t line_no = 0) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
      const std::string where = line_no ? " on line " + std::to_string(line_no) : "";
      throw ConfigError(detail::trim(assignment), "expected key = value" + where);
    }
    set(detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
  }

  void set(const std::string& key, const std::string& value) {
    const auto& keys = config_keys();
    if (std::none_of(keys.begin(), keys.end(), [&](const auto& kv) { return kv.first == key; }))
      throw ConfigError(key, "unknown configuration key");
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(key, "required key is missing");
    return it->second;
  }

  void check_required() const {
    for (const auto& [k, v] : config_keys())
      if (v.empty()) get(k);
  }

  void write_echo(std::ostream& out) const {
    for (const auto& [k, _] : config_keys()) {
      auto it = values_.find(k);
      if (it != values_.end()) out << k << " = " << it->second << '\n';
    }
  }

 private:
  std::map<std::string, std::string> values_;
};

namespace detail {

inline std::uint64_t parse_uint(const ConfigFile& cf, const std::string& key) {
  const std::string& s = cf.get(key);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(key, "expected a non-negative integer, got '" + s + "'");
  return v;
}

inline double parse_real(const std::string& key, const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || !std::isfinite(v)) throw ConfigError(key, "expected a number, got '" + s + "'");
  return v;
}

inline double parse_real(const ConfigFile& cf, const std::string& key) { return parse_real(key, cf.get(key)); }

inline bool parse_bool(const ConfigFile& cf, const std::string& key) {
  const std::string& s = cf.get(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + s + "'");
}

}  // namespace detail

struct RunConfig {
  ExperimentConfig experiment;
  std::string dataset = "spirals";
  std::size_t data_classes = 3;
  std::size_t data_per_class = 1500;
  double data_noise = 0.05;
  double data_turns = 0.75;
  std::string out_dir = "out";
};

inline RunConfig build_run_config(const ConfigFile& cf) {
  using detail::parse_real;
  using detail::parse_uint;
  cf.check_required();
  RunConfig rc;
  ExperimentConfig& ex = rc.experiment;
  const auto strategy = parse_strategy(cf.get("strategy"));
  if (!strategy) throw ConfigError("strategy", "unknown strategy '" + cf.get("strategy") + "'");
  ex.strategy = *strategy;
  ex.clients = parse_uint(cf, "clients");
  ex.rounds = parse_uint(cf, "rounds");
  ex.seed = parse_uint(cf, "seed");

  const std::string& st = cf.get("s_target");
  if (auto comma = st.find(','); comma != std::string::npos) {
    ex.s_target.normal = std::pair{parse_real("s_target", detail::trim(st.substr(0, comma))),
                                   parse_real("s_target", detail::trim(st.substr(comma + 1)))};
  } else {
    ex.s_target.values = {parse_real("s_target", st)};
  }
  const std::string& ai = cf.get("alpha_iid");
  if (ai != "iid") ex.alpha_iid = parse_real("alpha_iid", ai);

  rc.dataset = cf.get("dataset");
  rc.data_classes = parse_uint(cf, "data_classes");
  rc.data_per_class = parse_uint(cf, "data_per_class");
  rc.data_noise = parse_real(cf, "data_noise");
  rc.data_turns = parse_real(cf, "data_turns");
  ex.search_space.d_in = parse_uint(cf, "data_dim");
  ex.search_space.classes = rc.data_classes;
  ex.search_space.edges = parse_uint(cf, "edges");
  ex.search_space.ops = parse_uint(cf, "ops");
  ex.search_space.channels = parse_uint(cf, "channels");

  TrainingConfig& tr = ex.training;
  tr.lr_w = parse_real(cf, "lr_w");
  tr.lr_alpha = parse_real(cf, "lr_alpha");
  tr.lambda_val = parse_real(cf, "lambda");
  tr.clip_threshold = parse_real(cf, "clip");
  tr.weight_decay_w = parse_real(cf, "weight_decay_w");
  tr.weight_decay_alpha = parse_real(cf, "weight_decay_alpha");
  tr.local_epochs = parse_uint(cf, "epochs");
  tr.batch_size = parse_uint(cf, "batch");
  ex.server_lr = parse_real(cf, "server_lr");
  ex.finetune_epochs = parse_uint(cf, "finetune_epochs");
  ex.record_wall_time = detail::parse_bool(cf, "record_wall_time");
  rc.out_dir = cf.get("out_dir");

  if (!(tr.lr_w > 0)) throw ConfigError("lr_w", "must be positive");
  if (!(tr.lr_alpha > 0)) throw ConfigError("lr_alpha", "must be positive");
  if (!(tr.lambda_val >= 0)) throw ConfigError("lambda", "must be non-negative");
  if (!(tr.clip_threshold > 0)) throw ConfigError("clip", "must be positive");
  if (tr.batch_size < 1) throw ConfigError("batch", "must be >= 1");
  if (ex.search_space.edges < 1) throw ConfigError("edges", "must be >= 1");
  if (ex.search_space.ops < 2) throw ConfigError("ops", "must be >= 2");
  if (ex.search_space.channels < 2) throw ConfigError("channels", "must be >= 2");
  ex.validate();
  return rc;
}

// Loads or generates the dataset named by `dataset` and aligns the search
// space's input and class dimensions with it.
inline Dataset load_run_dataset(RunConfig& rc) {
  auto& ss = rc.experiment.search_space;
  const std::uint64_t seed = rc.experiment.seed;
  Dataset ds;
  if (rc.dataset == "spirals") {
    ds = gen_spirals(rc.data_classes, rc.data_per_class, rc.data_noise, seed, ss.d_in, rc.data_turns);
  } else if (rc.dataset == "blobs") {
    ds = gen_blobs(rc.data_classes, rc.data_per_class, ss.d_in, rc.data_noise, seed);
  } else if (rc.dataset.rfind("idx:", 0) == 0) {
    const std::string paths = rc.dataset.substr(4);
    const auto comma = paths.find(',');
    if (comma == std::string::npos) throw ConfigError("dataset", "idx: expects <images>,<labels>");
    ds = load_idx(paths.substr(0, comma), paths.substr(comma + 1));
    stratified_split(ds, 0.8, seed);
  } else if (rc.dataset.rfind("csv:", 0) == 0) {
    ds = load_csv(rc.dataset.substr(4), "label");
    stratified_split(ds, 0.8, seed);
  } else {
    throw ConfigError("dataset", "expected blobs, spirals, idx:<images>,<labels> or csv:<path>");
  }
  ss.d_in = ds.dim;
  ss.classes = std::max<std::size_t>(2, ds.class_count);
  return ds;
}

}  // namespace dcnas
