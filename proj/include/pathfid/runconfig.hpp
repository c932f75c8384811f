#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathfid/corpus.hpp"
#include "pathfid/error.hpp"
#include "pathfid/pipeline.hpp"

namespace pathfid {

/// Where a run's questions come from.
struct CorpusSource {
  std::string kind = "synthetic";  // synthetic | hotpot | iirc
  std::string path;
  std::string articles;            // iirc only
  SyntheticConfig synthetic;
};

/// Everything one experiment needs. Settings are dotted keys ("train.steps");
/// a config file, PATHFID_* environment variables and command-line
/// overrides all write through `set`, in that order.
struct RunConfig {
  PipelineConfig pipeline;
  CorpusSource corpus;
  std::string output_dir = "pathfid-out";
  std::optional<std::uint64_t> seed;

  void set(const std::string& key, const std::string& value);
  static const std::vector<std::string>& keys();

  /// Pipeline settings with `seed`, when set, driving both weight init and data order.
  PipelineConfig resolved_pipeline() const {
    PipelineConfig p = pipeline;
    if (seed) {
      p.model.rng_seed = *seed;
      p.hparams.seed = *seed;
    }
    return p;
  }

  void validate() const {
    if (corpus.kind != "synthetic" && corpus.kind != "hotpot" && corpus.kind != "iirc")
      throw Error("cli", "corpus.source must be synthetic, hotpot or iirc");
    if (corpus.kind != "synthetic" && corpus.path.empty()) throw Error("cli", "corpus.path is required for " + corpus.kind);
    if (corpus.kind == "synthetic") corpus.synthetic.validate();
    const auto& h = pipeline.hparams;
    if (h.steps < 1 || h.batch_size < 1 || h.eval_every < 1 || !(h.learning_rate > 0.0) || !(h.clip_norm > 0.0))
      throw Error("cli", "train.* values must be positive");
    minifid::ModelConfig m = pipeline.model;
    m.vocab_size = 8;
    m.validate();
  }
};

namespace detail {

inline long long to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long n = 0;
  try {
    n = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw Error("cli", key + ": expected an integer, got '" + v + "'");
  return n;
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw Error("cli", key + ": expected a number, got '" + v + "'");
  return d;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  std::string l = to_lower(v);
  if (l == "true" || l == "1" || l == "yes") return true;
  if (l == "false" || l == "0" || l == "no") return false;
  throw Error("cli", key + ": expected true or false, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto integer = [](auto field) {
      return [field](RunConfig& c, const std::string& k, const std::string& v) {
        field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(to_int(k, v));
      };
    };
    t["mode"] = [](RunConfig& c, const std::string&, const std::string& v) { c.pipeline.mode = mode_from(v); };
    t["schema"] = [](RunConfig& c, const std::string&, const std::string& v) { c.pipeline.schema = schema_from(v); };
    t["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.seed = static_cast<std::uint64_t>(to_int(k, v));
    };
    t["output_dir"] = [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; };
    t["corpus.source"] = [](RunConfig& c, const std::string&, const std::string& v) { c.corpus.kind = v; };
    t["corpus.path"] = [](RunConfig& c, const std::string&, const std::string& v) { c.corpus.path = v; };
    t["corpus.articles"] = [](RunConfig& c, const std::string&, const std::string& v) { c.corpus.articles = v; };
    t["synthetic.num_instances"] = integer([](RunConfig& c) -> int& { return c.corpus.synthetic.num_instances; });
    t["synthetic.num_distractors"] = integer([](RunConfig& c) -> int& { return c.corpus.synthetic.num_distractors; });
    t["synthetic.hops"] = integer([](RunConfig& c) -> int& { return c.corpus.synthetic.hops; });
    t["synthetic.vocab_size"] = integer([](RunConfig& c) -> int& { return c.corpus.synthetic.vocab_size; });
    t["synthetic.sentences_per_passage"] =
        integer([](RunConfig& c) -> int& { return c.corpus.synthetic.sentences_per_passage; });
    t["synthetic.seed"] = integer([](RunConfig& c) -> std::uint64_t& { return c.corpus.synthetic.rng_seed; });
    t["model.d_model"] = integer([](RunConfig& c) -> int& { return c.pipeline.model.d_model; });
    t["model.n_layers_enc"] = integer([](RunConfig& c) -> int& { return c.pipeline.model.n_layers_enc; });
    t["model.n_layers_dec"] = integer([](RunConfig& c) -> int& { return c.pipeline.model.n_layers_dec; });
    t["model.n_heads"] = integer([](RunConfig& c) -> int& { return c.pipeline.model.n_heads; });
    t["model.d_ff"] = integer([](RunConfig& c) -> int& { return c.pipeline.model.d_ff; });
    t["model.max_target_len"] = integer([](RunConfig& c) -> int& { return c.pipeline.model.max_target_len; });
    t["train.steps"] = integer([](RunConfig& c) -> int& { return c.pipeline.hparams.steps; });
    t["train.batch_size"] = integer([](RunConfig& c) -> int& { return c.pipeline.hparams.batch_size; });
    t["train.eval_every"] = integer([](RunConfig& c) -> int& { return c.pipeline.hparams.eval_every; });
    t["train.learning_rate"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.pipeline.hparams.learning_rate = to_double(k, v);
    };
    t["train.clip_norm"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.pipeline.hparams.clip_norm = to_double(k, v);
    };
    t["train.stop_when_perfect"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.pipeline.hparams.stop_when_perfect = to_bool(k, v);
    };
    return t;
  }();
  return table;
}

inline void flatten(const nlohmann::json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    const auto& v = it.value();
    if (v.is_object()) {
      flatten(v, key, out);
    } else if (v.is_string()) {
      out.emplace_back(key, v.get<std::string>());
    } else if (v.is_boolean() || v.is_number()) {
      out.emplace_back(key, v.dump());
    } else {
      throw Error("cli", key + ": unsupported value " + v.dump());
    }
  }
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& t = detail::setters();
  auto it = t.find(key);
  if (it == t.end()) throw Error("cli", "unknown config key '" + key + "'");
  it->second(*this, key, value);
}

inline const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [name, _] : detail::setters()) out.push_back(name);
    return out;
  }();
  return k;
}

/// PATHFID_ + key upper-cased with dots as underscores: train.steps -> PATHFID_TRAIN_STEPS.
inline std::string env_name(const std::string& key) {
  std::string out = "PATHFID_";
  for (char ch : key) out += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

inline void apply_json(RunConfig& c, const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error("cli", "config must be a JSON object");
  std::vector<std::pair<std::string, std::string>> flat;
  detail::flatten(doc, "", flat);
  for (const auto& [k, v] : flat) c.set(k, v);
}

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

inline void apply_env(RunConfig& c, const EnvLookup& env = process_env) {
  for (const auto& key : RunConfig::keys())
    if (auto v = env(env_name(key))) c.set(key, *v);
}

/// defaults < file < environment < overrides.
inline RunConfig load_run_config(const std::optional<std::string>& path,
                                 const std::vector<std::pair<std::string, std::string>>& overrides = {},
                                 const EnvLookup& env = process_env) {
  RunConfig c;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw Error("cli", "cannot open config file " + *path);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error("cli", "config file " + *path + " is not valid JSON: " + e.what());
    }
    apply_json(c, doc);
  }
  apply_env(c, env);
  for (const auto& [k, v] : overrides) c.set(k, v);
  c.validate();
  return c;
}

inline LoadResult load_corpus(const CorpusSource& src) {
  if (src.kind == "synthetic") return {generate_synthetic(src.synthetic), {}};
  if (src.kind == "hotpot") return load_hotpot(src.path);
  if (src.kind == "iirc") return load_iirc(src.path, src.articles);
  throw Error("cli", "unknown corpus source '" + src.kind + "'");
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cli", "cannot write " + path.string());
  out << content;
}

/// Files written by an end-to-end run.
struct RunArtifacts {
  std::filesystem::path checkpoint, predictions, report_json, report_text, trace_csv;
};

inline RunArtifacts write_artifacts(const std::filesystem::path& dir, const PipelineResult& r) {
  RunArtifacts a{dir / "checkpoint.json", dir / "predictions.jsonl", dir / "report.json", dir / "report.txt",
                 dir / "trace.csv"};
  std::filesystem::create_directories(dir);
  minifid::save_checkpoint(a.checkpoint.string(), r.checkpoint);
  write_file(a.predictions, to_jsonl(r.records));
  write_file(a.report_json, to_json(r.report).dump(2) + "\n");
  write_file(a.report_text, render_text(r.report));
  write_file(a.trace_csv, trace_csv(r.training.trace));
  return a;
}

}  // namespace pathfid
