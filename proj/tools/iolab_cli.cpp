// iolab: command-line front end for data generation, training, decoding,
// evaluation and sweeps.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "iolab/checkpoint.hpp"
#include "iolab/config.hpp"
#include "iolab/corpus.hpp"
#include "iolab/decoder.hpp"
#include "iolab/evaluation.hpp"
#include "iolab/harness.hpp"
#include "iolab/orders.hpp"

namespace fs = std::filesystem;
using namespace iolab;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

/// Config-file keys exposed as flags on one subcommand.
struct KeyFlags {
  std::string config;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app, const std::vector<std::string>& keys) {
    app->add_option("--config", config, "key = value settings file (flags override it)");
    for (const auto& key : keys) app->add_option("--" + dashed(key), values[key], key);
  }

  Settings resolve(const CLI::App* app) const {
    Settings s = config.empty() ? Settings{} : Settings::from_file(config);
    for (const auto& [key, value] : values) {
      if (app->get_option("--" + dashed(key))->count() > 0) s.set(key, value);
    }
    return s;
  }
};

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  return out;
}

OrderKind order_from(const Settings& s) {
  const auto name = s.require("order");
  const auto kind = parse_order_kind(name);
  if (!kind) throw UsageError("unknown order kind '" + name + "'; valid kinds: " + order_kind_list());
  return *kind;
}

DecodeMode mode_from(const Settings& s) {
  const auto name = s.get_string("mode", "serial");
  if (name != "serial" && name != "parallel") throw UsageError("mode must be serial or parallel, got '" + name + "'");
  return parse_decode_mode(name);
}

double penalty_from(const Settings& s) {
  const double g = s.get_double("eos_penalty", 0.0);
  if (!(g >= 0.0)) throw UsageError("eos_penalty must be non-negative");
  return g;
}

std::vector<ParallelExample> load_pair(const Settings& s, const std::string& src_key, const std::string& tgt_key,
                                       const Vocabulary& vocab) {
  return load_parallel(s.require(src_key), s.require(tgt_key), vocab);
}

/// Maps whitespace tokens to ids without a vocabulary (for text-level BLEU).
struct Interner {
  std::map<std::string, TokenId> ids;
  TokenSeq operator()(const std::string& line) {
    TokenSeq out;
    for (auto& w : split_whitespace(line)) out.push_back(ids.emplace(w, static_cast<TokenId>(ids.size())).first->second);
    return out;
  }
};

std::string format_tau(double tau) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", tau);
  return buf;
}

// ---------------------------------------------------------------- commands

struct GenData {
  std::string task = "copy";
  int vocab_size = 20, min_len = 1, max_len = 10, count = 1000;
  std::uint64_t seed = 0;
  std::string out_src, out_tgt, vocab_out;

  int run() const {
    SyntheticTaskSpec spec;
    try {
      spec = {parse_synthetic_kind(task), vocab_size, min_len, max_len, seed};
      spec.validate();
    } catch (const CorpusError& e) {
      throw UsageError(e.what());
    }
    if (count < 1) throw UsageError("--count must be at least 1");
    const auto data = generate_synthetic(spec, count);
    const auto vocab = with_target_frequencies(synthetic_vocabulary(vocab_size), data);
    save_parallel(out_src, out_tgt, data, vocab);
    if (!vocab_out.empty()) vocab.save(vocab_out);
    std::printf("wrote %d examples (%s)\n", count, task.c_str());
    return 0;
  }
};

int build_vocab(const Settings& s, std::size_t max_size) {
  const auto src = read_tokenized(s.require("train_src"));
  const auto tgt = read_tokenized(s.require("train_tgt"));
  std::vector<std::vector<std::string>> all(src);
  all.insert(all.end(), tgt.begin(), tgt.end());
  const auto joint = build_vocabulary(all, max_size);
  // Ids follow joint frequency; stored frequencies are target-side counts.
  std::vector<ParallelExample> examples;
  for (const auto& t : tgt) examples.push_back({{}, joint.encode(t)});
  const auto vocab = with_target_frequencies(joint, examples);
  vocab.save(s.require("vocab"));
  std::printf("vocabulary of %zu tokens written to %s\n", vocab.ordinary_size(), s.require("vocab").c_str());
  return 0;
}

int train_cmd(const Settings& s, const std::string& metrics_path) {
  const auto vocab = Vocabulary::load(s.require("vocab"));
  auto cfg = TrainConfig::from_settings(s);
  cfg.order = order_from(s);
  if (cfg.checkpoint.empty()) throw UsageError("missing required setting 'checkpoint'");
  cfg.model.vocab_size = static_cast<int>(vocab.size());
  const auto data = load_pair(s, "train_src", "train_tgt", vocab);
  std::vector<ParallelExample> dev;
  if (s.has("dev_src") || s.has("dev_tgt")) dev = load_pair(s, "dev_src", "dev_tgt", vocab);
  std::ofstream metrics;
  if (!metrics_path.empty()) metrics = open_output(metrics_path);
  const auto sink = [&](const std::string& line) {
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    if (metrics.is_open()) metrics << line << '\n' << std::flush;
  };
  try {
    train(cfg, data, vocab, dev, sink);
  } catch (const TrainingDiverged& e) {
    throw RuntimeFailure(std::string(e.what()) + "; last good parameters saved to " + cfg.checkpoint.string());
  }
  std::printf("checkpoint written to %s\n", cfg.checkpoint.string().c_str());
  return 0;
}

struct DecodeArgs {
  std::string input, output, trace;
};

int decode_cmd(const Settings& s, const DecodeArgs& args) {
  const auto vocab = Vocabulary::load(s.require("vocab"));
  const auto ckpt = load_checkpoint(s.require("checkpoint"));
  const TransformerScorer scorer(ckpt.config, ckpt.params);
  const auto mode = mode_from(s);
  const double gamma = penalty_from(s);
  const auto input = args.input.empty() ? s.require("dev_src") : args.input;
  auto out = open_output(args.output);
  std::ofstream trace;
  if (!args.trace.empty()) trace = open_output(args.trace);
  std::size_t n = 0;
  for (const auto& line : read_lines(input)) {
    const auto src = vocab.encode(split_whitespace(line));
    const auto r = decode(scorer, src, DecodeConfig::defaults(mode, src.size(), gamma));
    out << vocab.join(r.output) << '\n';
    if (trace.is_open()) trace << "# " << ++n << '\t' << to_string(r.trace.status) << '\n' << render_trace(r.trace, vocab);
  }
  return 0;
}

struct EvaluateArgs {
  std::string metric = "bleu";
  std::string hyps, refs, sources;
  bool forced = false;
};

int evaluate_cmd(const Settings& s, const EvaluateArgs& args) {
  if (args.metric == "adherence") {
    const auto vocab = Vocabulary::load(s.require("vocab"));
    const OrderSpec order{order_from(s), &vocab};
    const auto ckpt = load_checkpoint(s.require("checkpoint"));
    const TransformerScorer scorer(ckpt.config, ckpt.params);
    const auto dev = load_pair(s, "dev_src", "dev_tgt", vocab);
    const auto report =
        adherence(scorer, order, dev, penalty_from(s), args.forced ? AdherenceMode::forced : AdherenceMode::free);
    std::printf("%s%s\n", report.to_text().c_str(), report.to_record().c_str());
    return 0;
  }
  if (args.metric != "bleu" && args.metric != "length-bins" && args.metric != "exact-match") {
    throw UsageError("unknown metric '" + args.metric + "' (bleu, adherence, length-bins, exact-match)");
  }
  if (args.hyps.empty()) throw UsageError("--hyps is required for metric " + args.metric);
  const std::string refs_path = args.refs.empty() ? s.require("dev_tgt") : args.refs;
  Interner intern;
  std::vector<TokenSeq> hyps, refs;
  for (const auto& l : read_lines(args.hyps)) hyps.push_back(intern(l));
  for (const auto& l : read_lines(refs_path)) refs.push_back(intern(l));
  if (hyps.size() != refs.size()) throw RuntimeFailure("hypothesis and reference line counts differ");
  if (hyps.empty()) throw RuntimeFailure("no sentences to evaluate");
  if (args.metric == "bleu") {
    const auto r = corpus_bleu(hyps, refs);
    std::printf("%s%s\n", r.to_text().c_str(), r.to_record().c_str());
  } else if (args.metric == "exact-match") {
    std::printf("exact_match = %.4f\n", 100.0 * exact_match(hyps, refs));
  } else {
    const std::string src_path = args.sources.empty() ? s.require("dev_src") : args.sources;
    std::vector<TokenSeq> srcs;
    for (const auto& l : read_lines(src_path)) srcs.push_back(intern(l));
    if (srcs.size() != hyps.size()) throw RuntimeFailure("source and hypothesis line counts differ");
    std::printf("%s", length_binned_bleu(hyps, refs, srcs).to_text().c_str());
  }
  return 0;
}

struct SweepArgs {
  std::string taus, penalties, modes, out, records;
};

int sweep_cmd(const Settings& s, const SweepArgs& args) {
  const auto vocab = Vocabulary::load(s.require("vocab"));
  const auto order = order_from(s);
  SweepGrid grid;
  if (!args.taus.empty()) grid.taus = parse_double_list(args.taus);
  if (!args.penalties.empty()) grid.eos_penalties = parse_double_list(args.penalties);
  if (!args.modes.empty()) {
    grid.modes.clear();
    std::istringstream in(args.modes);
    std::string part;
    while (std::getline(in, part, ',')) {
      if (part != "serial" && part != "parallel") throw UsageError("unknown mode '" + part + "'");
      grid.modes.push_back(parse_decode_mode(part));
    }
  }
  if (grid.taus.empty() || grid.eos_penalties.empty() || grid.modes.empty()) throw UsageError("empty sweep grid");
  const auto pattern = s.require("checkpoint");
  std::vector<TauCheckpoint> ckpts;
  for (double tau : grid.taus) {
    std::string path = pattern;
    if (const auto at = path.find("{tau}"); at != std::string::npos) {
      path.replace(at, 5, format_tau(tau));
    } else if (grid.taus.size() > 1) {
      throw UsageError("checkpoint must contain '{tau}' when sweeping several temperatures");
    }
    ckpts.push_back({tau, path});
  }
  const auto dev = load_pair(s, "dev_src", "dev_tgt", vocab);
  const auto result = sweep(grid, ckpts, order, dev, vocab);
  const auto table = result.render_table();
  if (args.out.empty()) {
    std::printf("%s", table.c_str());
  } else {
    open_output(args.out) << table;
  }
  if (!args.records.empty()) open_output(args.records) << result.render_records();
  return 0;
}

int trace_cmd(const Settings& s, const std::string& source) {
  const auto vocab = Vocabulary::load(s.require("vocab"));
  const auto ckpt = load_checkpoint(s.require("checkpoint"));
  const TransformerScorer scorer(ckpt.config, ckpt.params);
  const auto src = vocab.encode(split_whitespace(source));
  const auto r = decode(scorer, src, DecodeConfig::defaults(mode_from(s), src.size(), penalty_from(s)));
  std::printf("%s", render_trace(r.trace, vocab).c_str());
  std::printf("status\t%s\n", std::string(to_string(r.trace.status)).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Insertion-based sequence generation with soft order rewards"};
  app.require_subcommand(1);

  const std::vector<std::string> model_keys{"order", "tau",     "steps",   "batch_size", "lr",      "warmup",
                                            "seed",  "d_model", "n_layers", "n_heads",   "d_ffn",   "dropout",
                                            "max_len", "train_src", "train_tgt", "dev_src", "dev_tgt", "vocab",
                                            "checkpoint", "eval_interval"};

  GenData gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic parallel corpus");
  gen_cmd->add_option("--task", gen.task, "copy, reverse, sort or lexicon-translate");
  gen_cmd->add_option("--vocab-size", gen.vocab_size, "number of ordinary tokens");
  gen_cmd->add_option("--min-len", gen.min_len);
  gen_cmd->add_option("--max-len", gen.max_len);
  gen_cmd->add_option("--count", gen.count, "number of examples");
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--out-src", gen.out_src)->required();
  gen_cmd->add_option("--out-tgt", gen.out_tgt)->required();
  gen_cmd->add_option("--vocab-out", gen.vocab_out, "also write the vocabulary with target frequencies");

  KeyFlags vocab_flags;
  std::size_t max_size = 32000;
  auto* vocab_cmd = app.add_subcommand("build-vocab", "build a vocabulary from training text");
  vocab_flags.attach(vocab_cmd, {"train_src", "train_tgt", "vocab"});
  vocab_cmd->add_option("--max-size", max_size, "maximum number of ordinary tokens");

  KeyFlags train_flags;
  std::string metrics_path;
  auto* train_sub = app.add_subcommand("train", "train a model against an order oracle");
  train_flags.attach(train_sub, model_keys);
  train_sub->add_option("--metrics", metrics_path, "also write metrics lines to this file");

  KeyFlags decode_flags;
  DecodeArgs decode_args;
  auto* decode_sub = app.add_subcommand("decode", "decode a source file");
  decode_flags.attach(decode_sub, {"vocab", "checkpoint", "mode", "eos_penalty", "dev_src"});
  decode_sub->add_option("--input", decode_args.input, "source sentences (default: dev_src)");
  decode_sub->add_option("--output", decode_args.output, "hypotheses file")->required();
  decode_sub->add_option("--trace", decode_args.trace, "decoding traces file");

  KeyFlags eval_flags;
  EvaluateArgs eval_args;
  auto* eval_sub = app.add_subcommand("evaluate", "compute BLEU, adherence or length-binned BLEU");
  eval_flags.attach(eval_sub, {"vocab", "checkpoint", "order", "eos_penalty", "dev_src", "dev_tgt"});
  eval_sub->add_option("--metric", eval_args.metric, "bleu, adherence, length-bins or exact-match");
  eval_sub->add_option("--hyps", eval_args.hyps, "hypotheses file");
  eval_sub->add_option("--refs", eval_args.refs, "references file (default: dev_tgt)");
  eval_sub->add_option("--sources", eval_args.sources, "sources for length bins (default: dev_src)");
  eval_sub->add_flag("--forced", eval_args.forced, "adherence along oracle-valid roll-ins");

  KeyFlags sweep_flags;
  SweepArgs sweep_args;
  auto* sweep_sub = app.add_subcommand("sweep", "temperature x EOS-penalty x mode grid");
  sweep_flags.attach(sweep_sub, {"vocab", "checkpoint", "order", "dev_src", "dev_tgt"});
  sweep_sub->add_option("--taus", sweep_args.taus, "comma-separated (default 0.5,1,2)");
  sweep_sub->add_option("--eos-penalties", sweep_args.penalties, "comma-separated (default 0,0.5,...,8)");
  sweep_sub->add_option("--modes", sweep_args.modes, "comma-separated (default serial,parallel)");
  sweep_sub->add_option("--out", sweep_args.out, "table file (default: stdout)");
  sweep_sub->add_option("--records", sweep_args.records, "machine-readable records file");

  KeyFlags trace_flags;
  std::string trace_source;
  auto* trace_sub = app.add_subcommand("trace", "print the decoding path for one sentence");
  trace_flags.attach(trace_sub, {"vocab", "checkpoint", "mode", "eos_penalty"});
  trace_sub->add_option("--source", trace_source, "space-separated source tokens")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*gen_cmd) return gen.run();
    if (*vocab_cmd) return build_vocab(vocab_flags.resolve(vocab_cmd), max_size);
    if (*train_sub) return train_cmd(train_flags.resolve(train_sub), metrics_path);
    if (*decode_sub) return decode_cmd(decode_flags.resolve(decode_sub), decode_args);
    if (*eval_sub) return evaluate_cmd(eval_flags.resolve(eval_sub), eval_args);
    if (*sweep_sub) return sweep_cmd(sweep_flags.resolve(sweep_sub), sweep_args);
    if (*trace_sub) return trace_cmd(trace_flags.resolve(trace_sub), trace_source);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
  return kUsage;
}
