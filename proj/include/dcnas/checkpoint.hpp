#pragma once

#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "dcnas/error.hpp"
#include "dcnas/micromodel.hpp"
#include "dcnas/sampling.hpp"
#include "json.hpp"

namespace dcnas {

using ojson = nlohmann::ordered_json;

struct Checkpoint {
  SupernetParams params;
  std::size_t round = 0;
  std::optional<SamplerState> sampler;
};

namespace detail {

inline ojson matrix_json(const std::vector<double>& v, std::size_t offset, std::size_t rows,
                         std::size_t cols) {
  ojson m = ojson::array();
  for (std::size_t r = 0; r < rows; ++r) {
    ojson row = ojson::array();
    for (std::size_t c = 0; c < cols; ++c) row.push_back(v[offset + r * cols + c]);
    m.push_back(std::move(row));
  }
  return m;
}

inline ojson vector_json(const std::vector<double>& v, std::size_t offset, std::size_t n) {
  ojson a = ojson::array();
  for (std::size_t i = 0; i < n; ++i) a.push_back(v[offset + i]);
  return a;
}

inline void read_matrix(const nlohmann::json& j, std::vector<double>& v, std::size_t offset,
                        std::size_t rows, std::size_t cols) {
  if (!j.is_array() || j.size() != rows) throw Error("checkpoint matrix has wrong row count");
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw Error("checkpoint matrix has wrong column count");
    for (std::size_t c = 0; c < cols; ++c) v[offset + r * cols + c] = j[r][c].get<double>();
  }
}

inline void read_vector(const nlohmann::json& j, std::vector<double>& v, std::size_t offset,
                        std::size_t n) {
  if (!j.is_array() || j.size() != n) throw Error("checkpoint vector has wrong length");
  for (std::size_t i = 0; i < n; ++i) v[offset + i] = j[i].get<double>();
}

}  // namespace detail

inline ojson config_json(const SearchSpaceConfig& c) {
  ojson j;
  j["edges"] = c.edges;
  j["ops"] = c.ops;
  j["channels"] = c.channels;
  j["d_in"] = c.d_in;
  j["classes"] = c.classes;
  return j;
}

inline ojson sampler_json(const SamplerState& s) {
  ojson j;
  j["strategy"] = std::string(strategy_name(s.strategy));
  j["n"] = s.n;
  j["clients"] = s.clients;
  j["seed"] = s.seed;
  j["round"] = s.round;
  ojson parents = ojson::array();
  for (const auto& m : s.parent_nodes) parents.push_back(m.to_string());
  j["parent_nodes"] = std::move(parents);
  ojson hist = ojson::array();
  for (const auto& m : s.history) hist.push_back({m.round(), m.client(), m.to_string()});
  j["history"] = std::move(hist);
  return j;
}

inline SamplerState sampler_from_json(const nlohmann::json& j) {
  SamplerState s;
  const auto strategy = parse_strategy(j.at("strategy").get<std::string>());
  if (!strategy) throw Error("checkpoint names an unknown strategy");
  s.strategy = *strategy;
  s.n = j.at("n").get<std::size_t>();
  s.clients = j.at("clients").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.round = j.at("round").get<std::size_t>();
  for (const auto& p : j.at("parent_nodes")) s.parent_nodes.push_back(ArchMask::from_string(p.get<std::string>()));
  for (const auto& h : j.at("history"))
    s.history.push_back(ArchMask::from_string(h.at(2).get<std::string>())
                            .tagged(h.at(0).get<std::size_t>(), h.at(1).get<std::size_t>()));
  return s;
}

// {config, op_weights, alpha, head, round} plus the fixed input lift and,
// when present, the sampler state needed to resume a run.
inline ojson checkpoint_json(const Checkpoint& ck) {
  const SupernetParams& p = ck.params;
  const auto& cfg = p.config();
  const ParamLayout& L = *p.layout;
  ojson j;
  j["config"] = config_json(cfg);
  ojson edges = ojson::array();
  for (std::size_t e = 0; e < cfg.edges; ++e) {
    ojson ops = ojson::array();
    for (std::size_t k = 0; k < cfg.ops; ++k) {
      const OpBlock& b = L.block(e, k);
      ojson op;
      op["kind"] = op_name(b.kind);
      if (b.weight_size > 0) {
        op["weight"] = detail::matrix_json(p.weights, b.weight_offset, cfg.channels, cfg.channels);
        op["bias"] = detail::vector_json(p.weights, b.bias_offset, b.bias_size);
      } else if (b.kind == OpKind::kScale) {
        op["scale"] = detail::vector_json(p.weights, b.bias_offset, b.bias_size);
      }
      ops.push_back(std::move(op));
    }
    edges.push_back(std::move(ops));
  }
  j["op_weights"] = std::move(edges);
  j["alpha"] = detail::matrix_json(p.alpha, 0, cfg.edges, cfg.ops);
  ojson head;
  head["weight"] = detail::matrix_json(p.weights, L.head_weight_offset(), cfg.classes, cfg.channels);
  head["bias"] = detail::vector_json(p.weights, L.head_bias_offset(), cfg.classes);
  j["head"] = std::move(head);
  j["round"] = ck.round;
  j["embed"] = detail::matrix_json(p.embed, 0, cfg.channels, cfg.d_in);
  if (ck.sampler) j["sampler"] = sampler_json(*ck.sampler);
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    SearchSpaceConfig cfg;
    const auto& c = j.at("config");
    cfg.edges = c.at("edges").get<std::size_t>();
    cfg.ops = c.at("ops").get<std::size_t>();
    cfg.channels = c.at("channels").get<std::size_t>();
    cfg.d_in = c.at("d_in").get<std::size_t>();
    cfg.classes = c.at("classes").get<std::size_t>();
    auto layout = std::make_shared<const ParamLayout>(cfg);
    Checkpoint ck{SupernetParams{layout, std::vector<double>(layout->weight_count(), 0.0),
                                 std::vector<double>(cfg.mask_length(), 0.0),
                                 std::vector<double>(cfg.channels * cfg.d_in, 0.0)},
                  j.at("round").get<std::size_t>(), std::nullopt};
    SupernetParams& p = ck.params;
    const auto& edges = j.at("op_weights");
    if (edges.size() != cfg.edges) throw Error("checkpoint op_weights has wrong edge count");
    for (std::size_t e = 0; e < cfg.edges; ++e) {
      if (edges[e].size() != cfg.ops) throw Error("checkpoint op_weights has wrong op count");
      for (std::size_t k = 0; k < cfg.ops; ++k) {
        const OpBlock& b = layout->block(e, k);
        const auto& op = edges[e][k];
        if (b.weight_size > 0) {
          detail::read_matrix(op.at("weight"), p.weights, b.weight_offset, cfg.channels, cfg.channels);
          detail::read_vector(op.at("bias"), p.weights, b.bias_offset, b.bias_size);
        } else if (b.kind == OpKind::kScale) {
          detail::read_vector(op.at("scale"), p.weights, b.bias_offset, b.bias_size);
        }
      }
    }
    detail::read_matrix(j.at("alpha"), p.alpha, 0, cfg.edges, cfg.ops);
    detail::read_matrix(j.at("head").at("weight"), p.weights, layout->head_weight_offset(), cfg.classes,
                        cfg.channels);
    detail::read_vector(j.at("head").at("bias"), p.weights, layout->head_bias_offset(), cfg.classes);
    detail::read_matrix(j.at("embed"), p.embed, 0, cfg.channels, cfg.d_in);
    if (j.contains("sampler")) ck.sampler = sampler_from_json(j.at("sampler"));
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << checkpoint_json(ck).dump(1) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace dcnas
