#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "pathfid/error.hpp"
#include "pathfid/minifid/model.hpp"
#include "pathfid/minifid/tokenizer.hpp"

namespace pathfid::minifid {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  Tokenizer tokenizer;
  ModelParams params;
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},   {"d_model", c.d_model},
          {"n_layers_enc", c.n_layers_enc}, {"n_layers_dec", c.n_layers_dec},
          {"n_heads", c.n_heads},         {"d_ff", c.d_ff},
          {"max_input_block_len", c.max_input_block_len},
          {"max_target_len", c.max_target_len},
          {"rng_seed", c.rng_seed}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_layers_enc = j.at("n_layers_enc").get<int>();
  c.n_layers_dec = j.at("n_layers_dec").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_ff = j.value("d_ff", 0);
  c.max_input_block_len = j.at("max_input_block_len").get<int>();
  c.max_target_len = j.at("max_target_len").get<int>();
  c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  return c;
}

/// JSON registry of named tensors plus config and vocabulary. Doubles are
/// written with round-trip precision.
inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, t] : ck.params) {
    std::vector<double> data(t.data(), t.data() + t.size());
    tensors[name] = {{"rows", t.rows()}, {"cols", t.cols()}, {"data", data}};
  }
  return {{"format", "pathfid-minifid"},
          {"version", kCheckpointVersion},
          {"config", config_to_json(ck.config)},
          {"vocab", ck.tokenizer.vocab()},
          {"tensors", tensors}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "pathfid-minifid") throw Error("minifid", "not a minifid checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw Error("minifid", "unsupported checkpoint version " + j.at("version").dump());
    Checkpoint ck;
    ck.config = config_from_json(j.at("config"));
    ck.tokenizer = Tokenizer(j.at("vocab").get<std::vector<std::string>>());
    for (auto it = j.at("tensors").begin(); it != j.at("tensors").end(); ++it) {
      const auto rows = it.value().at("rows").get<Eigen::Index>();
      const auto cols = it.value().at("cols").get<Eigen::Index>();
      auto data = it.value().at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw Error("minifid", "tensor '" + it.key() + "' has inconsistent shape");
      Mat m(rows, cols);
      std::copy(data.begin(), data.end(), m.data());
      ck.params[it.key()] = std::move(m);
    }
    ModelParams expected = init_params(ck.config);
    for (const auto& [name, t] : expected) {
      if (!ck.params.contains(name)) throw Error("minifid", "checkpoint lacks tensor '" + name + "'");
      const Mat& got = ck.params.at(name);
      if (got.rows() != t.rows() || got.cols() != t.cols())
        throw Error("minifid", "tensor '" + name + "' shape disagrees with config");
    }
    if (ck.tokenizer.size() != ck.config.vocab_size) throw Error("minifid", "vocabulary size disagrees with config");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw Error("minifid", std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path);
  if (!out) throw Error("minifid", "cannot write checkpoint '" + path + "'");
  out << checkpoint_to_json(ck).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("minifid", "cannot open checkpoint '" + path + "'");
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("minifid", std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace pathfid::minifid
