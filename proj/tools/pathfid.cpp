// Command-line front end: corpus ingestion, block and target inspection,
// training, decoding, scoring and analysis.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pathfid/pathfid.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pathfid;

namespace {

constexpr int kExitError = 1;
constexpr int kExitSchema = 2;

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const std::string& path) {
  if (path == "-") {
    std::ostringstream os;
    os << std::cin.rdbuf();
    return os.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cli", "cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    write_file(path, content);
  }
}

std::vector<QuestionInstance> load_gold(const std::string& path) {
  LoadResult r = load_hotpot(path);
  for (const auto& rej : r.rejected) std::cerr << "rejected " << rej.id << ": " << rej.reason << "\n";
  return r.instances;
}

// Options shared by the commands that assemble a RunConfig.
struct RunFlags {
  std::string config;
  std::vector<std::string> sets;
  std::string mode, schema, corpus, output_dir;
  long long seed = -1;
  int steps = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON run configuration");
    cmd->add_option("--set", sets, "Override a config key (key=value); repeatable");
    cmd->add_option("--mode", mode, "fid | pathfid | pathfid_plus");
    cmd->add_option("--schema", schema, "titles_only | titles_answer | full");
    cmd->add_option("--corpus", corpus, "HotpotQA-format corpus file (default: synthetic)");
    cmd->add_option("--output-dir", output_dir, "Directory for run artifacts");
    cmd->add_option("--seed", seed, "Seed for weight init and data order");
    cmd->add_option("--steps", steps, "Training steps");
  }

  RunConfig resolve() const {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& s : sets) {
      auto eq = s.find('=');
      if (eq == std::string::npos) throw Error("cli", "--set expects key=value, got '" + s + "'");
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!mode.empty()) overrides.emplace_back("mode", mode);
    if (!schema.empty()) overrides.emplace_back("schema", schema);
    if (!corpus.empty()) {
      overrides.emplace_back("corpus.source", "hotpot");
      overrides.emplace_back("corpus.path", corpus);
    }
    if (!output_dir.empty()) overrides.emplace_back("output_dir", output_dir);
    if (seed >= 0) overrides.emplace_back("seed", std::to_string(seed));
    if (steps > 0) overrides.emplace_back("train.steps", std::to_string(steps));
    return load_run_config(config.empty() ? std::nullopt : std::optional<std::string>(config), overrides);
  }
};

std::vector<QuestionInstance> corpus_for(const RunConfig& rc) {
  LoadResult r = load_corpus(rc.corpus);
  for (const auto& rej : r.rejected) std::cerr << "rejected " << rej.id << ": " << rej.reason << "\n";
  if (r.instances.empty()) throw Error("cli", "corpus has no usable instances");
  return r.instances;
}

void print_progress(const std::string& stage, const minifid::EvalSnapshot& s) {
  std::cerr << "[" << stage << "] step " << s.step << " loss " << s.train_loss;
  for (const auto& [name, v] : s.segments) std::cerr << " " << name << "=" << v;
  std::cerr << "\n";
}

// Predictions from either the official {"answer","sp"} object or a JSONL dump.
std::vector<Prediction> load_predictions(const std::string& path, Mode mode, PathSchema schema, EvalOptions& opts) {
  const std::string text = read_text(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw SchemaError("prediction file is empty");
  try {
    json doc = json::parse(text);
    if (doc.is_object() && (doc.contains("answer") || doc.contains("sp"))) {
      OfficialPredictions off = parse_official_predictions(doc);
      opts.score_answers = off.has_answers;
      opts.score_supports = off.has_supports;
      return off.predictions;
    }
  } catch (const json::parse_error&) {
    // not a single document: fall through to JSON lines
  } catch (const Error& e) {
    throw SchemaError(e.what());
  }
  std::vector<Prediction> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(to_prediction(prediction_record_from_json(json::parse(line)), mode, schema));
    } catch (const json::exception& e) {
      throw SchemaError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string summary_csv(const EvalReport& r) {
  std::ostringstream os;
  os << std::setprecision(17) << "metric,em,f1\n";
  auto row = [&](const char* name, const std::optional<Score>& s) {
    if (s) os << name << "," << s->em << "," << s->f1 << "\n";
  };
  row("answer", r.answer);
  row("support", r.support);
  row("joint", r.joint);
  return os.str();
}

std::string analysis_text(const EvalReport& r) {
  std::ostringstream os;
  os << "groundedness (%)\n";
  for (const auto& g : r.groundedness)
    os << "  " << to_string(g.kind) << ": " << (g.percentage ? pathfid::detail::pct(g.percentage, true) : std::string("n/a")) << "\n";
  os << "\nbreakdown\n" << render_breakdown_csv(r) << "\nsupport-F1 buckets\n" << render_buckets_csv(r);
  return os.str();
}

json analysis_json(const EvalReport& r) {
  json full = to_json(r);
  return {{"num_instances", full["num_instances"]},
          {"breakdown", full["breakdown"]},
          {"groundedness", full["groundedness"]},
          {"buckets", full["buckets"]}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pathfid: reasoning-path generation for multi-hop question answering"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "pathfid 1.0.0");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Convert a HotpotQA or IIRC file to the canonical corpus format");
  std::string ingest_source = "hotpot", ingest_input, ingest_articles, ingest_output;
  ingest->add_option("--source", ingest_source, "hotpot | iirc")->check(CLI::IsMember({"hotpot", "iirc"}));
  ingest->add_option("--input", ingest_input, "Input file")->required();
  ingest->add_option("--articles", ingest_articles, "IIRC context articles (JSON object title -> html)");
  ingest->add_option("--output", ingest_output, "Output corpus file")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic bridge corpus");
  SyntheticConfig synth_cfg;
  std::string synth_output;
  synth->add_option("--instances", synth_cfg.num_instances, "Number of questions");
  synth->add_option("--distractors", synth_cfg.num_distractors, "Distractor passages per question");
  synth->add_option("--hops", synth_cfg.hops, "Gold passages per question");
  synth->add_option("--vocab", synth_cfg.vocab_size, "Pseudo-word inventory for titles");
  synth->add_option("--sentences", synth_cfg.sentences_per_passage, "Sentences per passage");
  synth->add_option("--seed", synth_cfg.rng_seed, "Generator seed");
  synth->add_option("--output", synth_output, "Output corpus file (default stdout)");

  // blocks dump
  auto* blocks = app.add_subcommand("blocks", "Input block inspection");
  blocks->require_subcommand(1);
  auto* dump = blocks->add_subcommand("dump", "Write input blocks as JSON lines");
  std::string dump_corpus, dump_mode = "pathfid", dump_output;
  int dump_max_len = 0;
  dump->add_option("--corpus", dump_corpus, "Corpus file")->required();
  dump->add_option("--mode", dump_mode, "fid | pathfid | pathfid_plus");
  dump->add_option("--max-len", dump_max_len, "Token limit per block (default per mode)");
  dump->add_option("--output", dump_output, "Output file (default stdout)");

  // linearize
  auto* lin = app.add_subcommand("linearize", "Write gold reasoning-path targets as JSON lines");
  std::string lin_corpus, lin_schema = "full", lin_output;
  int lin_max_len = 64;
  lin->add_option("--corpus", lin_corpus, "Corpus file")->required();
  lin->add_option("--schema", lin_schema, "titles_only | titles_answer | full");
  lin->add_option("--max-len", lin_max_len, "Target token limit");
  lin->add_option("--output", lin_output, "Output file (default stdout)");

  // parse
  auto* parse_cmd = app.add_subcommand("parse", "Parse generated sequences into reasoning paths");
  std::string parse_schema = "full", parse_input = "-", parse_output;
  std::vector<std::string> parse_text;
  parse_cmd->add_option("--schema", parse_schema, "titles_only | titles_answer | full");
  parse_cmd->add_option("--input", parse_input, "File with one sequence per line (default stdin)");
  parse_cmd->add_option("text", parse_text, "Sequence to parse (instead of --input)");
  parse_cmd->add_option("--output", parse_output, "Output file (default stdout)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  RunFlags train_flags;
  train_flags.attach(train_cmd);
  std::string train_checkpoint, train_trace;
  train_cmd->add_option("--checkpoint", train_checkpoint, "Checkpoint output (default <output-dir>/checkpoint.json)");
  train_cmd->add_option("--trace", train_trace, "Training trace CSV (default <output-dir>/trace.csv)");

  // decode
  auto* decode_cmd = app.add_subcommand("decode", "Decode a corpus with a trained checkpoint");
  std::string dec_checkpoint, dec_corpus, dec_mode = "pathfid", dec_schema = "full", dec_pstar, dec_output;
  decode_cmd->add_option("--checkpoint", dec_checkpoint, "Checkpoint file")->required();
  decode_cmd->add_option("--corpus", dec_corpus, "Corpus file")->required();
  decode_cmd->add_option("--mode", dec_mode, "fid | pathfid | pathfid_plus");
  decode_cmd->add_option("--schema", dec_schema, "titles_only | titles_answer | full");
  decode_cmd->add_option("--first-hop-checkpoint", dec_pstar, "PathFid checkpoint choosing p* (pathfid_plus)");
  decode_cmd->add_option("--output", dec_output, "Prediction dump (default stdout)");

  // score / analyze
  std::string sc_gold, sc_pred, sc_mode = "pathfid", sc_schema = "full", sc_format = "text", sc_report_dir, sc_csv;
  auto* score = app.add_subcommand("score", "Score predictions against gold");
  auto* analyze = app.add_subcommand("analyze", "Groundedness, breakdown and support-F1 bucket analyses");
  for (auto* cmd : {score, analyze}) {
    cmd->add_option("--gold", sc_gold, "Gold corpus file")->required();
    cmd->add_option("--pred", sc_pred, "Prediction dump (JSON lines) or official answer/sp JSON")->required();
    cmd->add_option("--mode", sc_mode, "Mode that produced a prediction dump");
    cmd->add_option("--schema", sc_schema, "Schema that produced a prediction dump");
    cmd->add_option("--format", sc_format, "json | text | csv")->check(CLI::IsMember({"json", "text", "csv"}));
    cmd->add_option("--report-dir", sc_report_dir, "Also write report.json and report.txt here");
  }
  score->add_option("--csv", sc_csv, "Also write the summary table as CSV");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  minifid::ModelConfig gc_cfg;
  gc_cfg.d_model = 32;
  gc_cfg.n_layers_enc = 1;
  gc_cfg.n_layers_dec = 1;
  gc_cfg.n_heads = 2;
  double gc_tol = 1e-4, gc_step = 1e-4;
  std::size_t gc_max_entries = 0;
  gc->add_option("--d-model", gc_cfg.d_model, "Model width");
  gc->add_option("--layers", gc_cfg.n_layers_enc, "Encoder and decoder layers");
  gc->add_option("--heads", gc_cfg.n_heads, "Attention heads");
  gc->add_option("--seed", gc_cfg.rng_seed, "Initialisation seed");
  gc->add_option("--step", gc_step, "Finite-difference step");
  gc->add_option("--tolerance", gc_tol, "Maximum relative error");
  gc->add_option("--max-entries", gc_max_entries, "Entries checked per tensor (0 = all)");

  // e2e
  auto* e2e = app.add_subcommand("e2e", "Run the whole pipeline from a config file");
  std::string e2e_config;
  e2e->add_option("config", e2e_config, "JSON run configuration");
  RunFlags e2e_flags;
  e2e->add_option("--set", e2e_flags.sets, "Override a config key (key=value); repeatable");
  e2e->add_option("--output-dir", e2e_flags.output_dir, "Directory for run artifacts");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      LoadResult r = ingest_source == "iirc" ? load_iirc(ingest_input, ingest_articles) : load_hotpot(ingest_input);
      for (const auto& rej : r.rejected) std::cerr << "rejected " << rej.id << ": " << rej.reason << "\n";
      save_hotpot(ingest_output, r.instances);
      std::cerr << "ingested " << r.instances.size() << " instances, rejected " << r.rejected.size() << "\n";
      return 0;
    }
    if (*synth) {
      emit(synth_output, to_hotpot_json(generate_synthetic(synth_cfg)).dump(1) + "\n");
      return 0;
    }
    if (*dump) {
      const Mode mode = mode_from(dump_mode);
      std::string out;
      for (const auto& q : load_gold(dump_corpus)) {
        std::optional<std::string> p_star;
        if (mode == Mode::pathfid_plus) p_star = gold_first_hop(q);
        const auto bs = build_instance_blocks(q, mode, p_star, dump_max_len > 0 ? std::optional<int>(dump_max_len) : std::nullopt);
        for (std::size_t i = 0; i < bs.size(); ++i)
          out += json{{"instance_id", q.id}, {"block_index", i}, {"kind", to_string(bs[i].kind)}, {"text", bs[i].text()}}
                     .dump() +
                 "\n";
      }
      emit(dump_output, out);
      return 0;
    }
    if (*lin) {
      const PathSchema schema = schema_from(lin_schema);
      std::string out;
      for (const auto& q : load_gold(lin_corpus))
        out += json{{"instance_id", q.id}, {"target", join(target_tokens(q, Mode::pathfid, schema, lin_max_len))}}.dump() +
               "\n";
      emit(lin_output, out);
      return 0;
    }
    if (*parse_cmd) {
      const PathSchema schema = schema_from(parse_schema);
      std::vector<std::string> lines;
      if (!parse_text.empty()) {
        lines.push_back(join(parse_text));
      } else {
        std::istringstream in(read_text(parse_input));
        for (std::string l; std::getline(in, l);) lines.push_back(l);
      }
      std::string out;
      for (const auto& l : lines) {
        ParsedPath p = parse(std::string_view(l), schema);
        out += json{{"raw_sequence", l}, {"parsed", path_to_json(p.path)}, {"diagnostics", p.diagnostics}}.dump() + "\n";
      }
      emit(parse_output, out);
      return 0;
    }
    if (*train_cmd) {
      RunConfig rc = train_flags.resolve();
      PipelineConfig pc = rc.resolved_pipeline();
      const BlockKind kind = pc.mode == Mode::fid ? BlockKind::fid
                             : pc.mode == Mode::pathfid ? BlockKind::path
                                                        : BlockKind::path_plus;
      pc.model.max_input_block_len = default_max_len(kind);
      auto corpus = corpus_for(rc);
      minifid::Tokenizer tok = build_tokenizer(corpus);
      std::vector<std::string> stars;
      for (const auto& q : corpus) stars.push_back(gold_first_hop(q));
      minifid::TrainResult result;
      minifid::Checkpoint ck = train_model(corpus, pc, tok, result, to_string(pc.mode), print_progress,
                                           pc.mode == Mode::pathfid_plus ? &stars : nullptr);
      const fs::path dir = rc.output_dir;
      const std::string ck_path = train_checkpoint.empty() ? (dir / "checkpoint.json").string() : train_checkpoint;
      const std::string trace_path = train_trace.empty() ? (dir / "trace.csv").string() : train_trace;
      if (fs::path(ck_path).has_parent_path()) fs::create_directories(fs::path(ck_path).parent_path());
      minifid::save_checkpoint(ck_path, ck);
      write_file(trace_path, trace_csv(result.trace));
      std::cerr << "best step " << result.best_step << " of " << result.steps_run << "; checkpoint " << ck_path << "\n";
      return 0;
    }
    if (*decode_cmd) {
      PipelineConfig pc;
      pc.mode = mode_from(dec_mode);
      pc.schema = schema_from(dec_schema);
      minifid::Checkpoint ck = minifid::load_checkpoint(dec_checkpoint);
      pc.model = ck.config;
      auto corpus = load_gold(dec_corpus);
      std::vector<std::string> stars;
      if (pc.mode == Mode::pathfid_plus) {
        if (dec_pstar.empty()) throw Error("cli", "pathfid_plus decoding needs --first-hop-checkpoint");
        minifid::Checkpoint first = minifid::load_checkpoint(dec_pstar);
        PipelineConfig fc;
        fc.mode = Mode::pathfid;
        fc.model = first.config;
        for (const auto& rec : predict(first, corpus, fc)) stars.push_back(rec.parsed.hops.empty() ? "" : rec.parsed.hops.front().title);
        for (std::size_t i = 0; i < stars.size(); ++i)
          if (stars[i].empty()) stars[i] = corpus[i].passages.front().title;
      }
      auto records = predict(ck, corpus, pc, pc.mode == Mode::pathfid_plus ? &stars : nullptr);
      emit(dec_output, to_jsonl(records));
      return 0;
    }
    if (*score || *analyze) {
      const Mode mode = mode_from(sc_mode);
      const PathSchema schema = schema_from(sc_schema);
      std::vector<QuestionInstance> gold;
      std::vector<Prediction> preds;
      EvalOptions opts = eval_options(mode, schema);
      try {
        gold = load_gold(sc_gold);
        preds = load_predictions(sc_pred, mode, schema, opts);
      } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return kExitSchema;
      }
      if (auto unknown = unknown_prediction_ids(preds, gold); !unknown.empty()) {
        for (const auto& id : unknown) std::cerr << "unknown instance id: " << id << "\n";
        return kExitSchema;
      }
      EvalReport report;
      try {
        report = evaluate(preds, gold, opts);
      } catch (const Error& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return kExitSchema;
      }
      if (!sc_report_dir.empty()) {
        write_file(fs::path(sc_report_dir) / "report.json", to_json(report).dump(2) + "\n");
        write_file(fs::path(sc_report_dir) / "report.txt", render_text(report));
      }
      if (*score) {
        if (!sc_csv.empty()) write_file(sc_csv, summary_csv(report));
        if (sc_format == "json") std::cout << to_json(report).dump(2) << "\n";
        else if (sc_format == "csv") std::cout << summary_csv(report);
        else std::cout << render_text(report);
      } else {
        if (sc_format == "json") std::cout << analysis_json(report).dump(2) << "\n";
        else if (sc_format == "csv") std::cout << render_breakdown_csv(report) << "\n" << render_buckets_csv(report);
        else std::cout << analysis_text(report);
      }
      return 0;
    }
    if (*gc) {
      gc_cfg.n_layers_dec = gc_cfg.n_layers_enc;
      SyntheticConfig sc;
      sc.num_instances = 1;
      sc.num_distractors = 1;
      sc.sentences_per_passage = 2;
      sc.rng_seed = gc_cfg.rng_seed;
      auto corpus = generate_synthetic(sc);
      minifid::Tokenizer tok = build_tokenizer(corpus);
      gc_cfg.vocab_size = tok.size();
      PipelineConfig pc;
      pc.model = gc_cfg;
      auto ex = make_example(corpus.front(), pc, tok);
      auto report = minifid::gradient_check(gc_cfg, minifid::init_params(gc_cfg), ex.blocks, ex.target, gc_step, gc_max_entries);
      for (const auto& t : report.tensors)
        std::cout << t.name << " entries=" << t.entries << " max_rel=" << t.max_rel_error << " max_abs=" << t.max_abs_error
                  << "\n";
      const bool ok = report.passed(gc_tol);
      std::cout << (ok ? "PASS" : "FAIL") << " max relative error " << report.max_rel_error << " (tolerance " << gc_tol
                << ")\n";
      return ok ? 0 : kExitError;
    }
    if (*e2e) {
      if (e2e_config.empty() || !fs::exists(e2e_config)) {
        std::cerr << (e2e_config.empty() ? "missing config file" : "config file not found: " + e2e_config) << "\n\n"
                  << e2e->help();
        return kExitError;
      }
      e2e_flags.config = e2e_config;
      RunConfig rc = e2e_flags.resolve();
      auto corpus = corpus_for(rc);
      PipelineResult r = run_pipeline(corpus, rc.resolved_pipeline(), nullptr, print_progress);
      write_artifacts(rc.output_dir, r);
      std::cout << render_text(r.report) << "\nartifacts in " << rc.output_dir << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return 0;
}
