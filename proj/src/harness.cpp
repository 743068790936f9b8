#include "iolab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace iolab {
namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

struct Adam {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.98;
  static constexpr double kEps = 1e-9;

  explicit Adam(const Parameters<float>& like) : m(like.zeros_like()), v(like.zeros_like()) {}

  void step(Parameters<float>& params, const Parameters<float>& grads, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(kBeta1, t);
    const double c2 = 1.0 - std::pow(kBeta2, t);
    const auto step_size = static_cast<float>(lr * std::sqrt(c2) / c1);
    const auto b1 = static_cast<float>(kBeta1), b2 = static_cast<float>(kBeta2);
    const auto eps = static_cast<float>(kEps * std::sqrt(c2));
    for (std::size_t i = 0; i < params.arrays.size(); ++i) {
      auto mi = m.arrays[i].array();
      auto vi = v.arrays[i].array();
      const auto g = grads.arrays[i].array();
      mi = b1 * mi + (1.0f - b1) * g;
      vi = b2 * vi + (1.0f - b2) * g.square();
      params.arrays[i].array() -= step_size * mi / (vi.sqrt() + eps);
    }
  }

  Parameters<float> m, v;
  int t = 0;
};

std::string metrics_line(int step, double loss, double bleu, double adh) {
  return std::to_string(step) + " " + fmt("%.6f", loss) + " " + fmt("%.4f", bleu) + " " + fmt("%.4f", adh);
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 0) throw UsageError("steps must be non-negative");
  if (batch_size < 1) throw UsageError("batch_size must be at least 1");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw UsageError("tau must be positive and finite");
  if (!(lr > 0.0)) throw UsageError("lr must be positive");
  if (warmup < 0 || (steps > 0 && warmup > steps)) throw UsageError("warmup must lie in [0, steps]");
  if (eval_interval < 0) throw UsageError("eval_interval must be non-negative");
  model.validate();
}

TrainConfig TrainConfig::from_settings(const Settings& s) {
  TrainConfig cfg;
  if (auto name = s.get("order")) {
    const auto kind = parse_order_kind(*name);
    if (!kind) throw UsageError("unknown order kind '" + *name + "'; valid kinds: " + order_kind_list());
    cfg.order = *kind;
  }
  cfg.tau = s.get_double("tau", cfg.tau);
  cfg.batch_size = static_cast<int>(s.get_int("batch_size", cfg.batch_size));
  cfg.steps = static_cast<int>(s.get_int("steps", cfg.steps));
  cfg.lr = s.get_double("lr", cfg.lr);
  cfg.warmup = static_cast<int>(s.get_int("warmup", std::min(cfg.warmup, cfg.steps)));
  cfg.seed = s.get_uint("seed", cfg.seed);
  cfg.eval_interval = static_cast<int>(s.get_int("eval_interval", cfg.eval_interval));
  cfg.checkpoint = s.get_string("checkpoint", "");
  cfg.model.d_model = static_cast<int>(s.get_int("d_model", cfg.model.d_model));
  cfg.model.n_layers = static_cast<int>(s.get_int("n_layers", cfg.model.n_layers));
  cfg.model.n_heads = static_cast<int>(s.get_int("n_heads", cfg.model.n_heads));
  cfg.model.d_ffn = static_cast<int>(s.get_int("d_ffn", cfg.model.d_ffn));
  cfg.model.dropout = s.get_double("dropout", cfg.model.dropout);
  cfg.model.max_len = static_cast<int>(s.get_int("max_len", cfg.model.max_len));
  cfg.model.seed = cfg.seed;
  return cfg;
}

double learning_rate(const TrainConfig& cfg, int step) {
  const double t = std::max(step, 1);
  if (cfg.warmup == 0) return cfg.lr / std::sqrt(t);
  const double w = cfg.warmup;
  return cfg.lr * std::min(t / w, std::sqrt(w / t));
}

TrainingDiverged::TrainingDiverged(int at_step, std::string what, Parameters<float> good)
    : std::runtime_error("training diverged at step " + std::to_string(at_step) + ": " + what),
      step(at_step),
      last_good(std::move(good)) {}

std::vector<BatchItem> make_batch(const InsertionTransformer<float>& model, const Parameters<float>& params,
                                  const TrainConfig& cfg, const Vocabulary& vocab,
                                  std::span<const ParallelExample> data, Rng& rng) {
  const OrderSpec order{cfg.order, &vocab};
  std::vector<BatchItem> items;
  items.reserve(static_cast<std::size_t>(cfg.batch_size));
  for (int b = 0; b < cfg.batch_size; ++b) {
    const auto& ex = data[static_cast<std::size_t>(rng.below(data.size()))];
    BatchItem item;
    item.example = &ex;
    // Targets depend only on what the model sees: re-align the sampled
    // hypothesis greedily from the left, as decoding and adherence do.
    item.canvas = aligned_canvas(rollin_sample(ex.target, rng).hypothesis, ex.target, AlignSide::left);
    const auto actions = valid_actions(item.canvas);
    std::vector<double> posterior;
    if (is_adaptive(cfg.order)) {
      // The target is a constant: computed from a separate no-grad forward.
      posterior = action_log_probs(model.forward(params, ex.source, item.canvas.hypothesis), actions);
    }
    item.policy = build_policy(order, item.canvas, actions, cfg.tau, posterior);
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<TokenSeq> decode_all(const InsertionScorer& scorer, std::span<const ParallelExample> data, DecodeMode mode,
                                 double eos_penalty) {
  std::vector<TokenSeq> out;
  out.reserve(data.size());
  for (const auto& ex : data) {
    out.push_back(decode(scorer, ex.source, DecodeConfig::defaults(mode, ex.source.size(), eos_penalty)).output);
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, std::span<const ParallelExample> data, const Vocabulary& vocab,
                  std::span<const ParallelExample> dev, const LogSink& sink) {
  cfg.validate();
  if (data.empty()) throw UsageError("training data is empty");
  if (cfg.model.vocab_size != static_cast<int>(vocab.size())) {
    throw UsageError("model vocab_size does not match the vocabulary");
  }
  const InsertionTransformer<float> model(cfg.model);
  TrainResult result;
  result.params = model.init();
  auto& params = result.params;
  Parameters<float> grads = params.zeros_like();
  Adam adam(params);
  Rng data_rng(derive_seed(cfg.seed, 10));
  Rng dropout_rng(derive_seed(cfg.seed, 11));
  const OrderSpec order{cfg.order, &vocab};

  auto emit = [&](int step, double loss) {
    double bleu = std::numeric_limits<double>::quiet_NaN(), adh = bleu;
    if (!dev.empty()) {
      const TransformerScorer scorer(cfg.model, params);
      const auto hyps = decode_all(scorer, dev, DecodeMode::serial, 0.0);
      std::vector<TokenSeq> refs;
      for (const auto& ex : dev) refs.push_back(ex.target);
      bleu = corpus_bleu(hyps, refs).bleu;
      adh = adherence(scorer, order, dev).percentage;
    }
    result.metrics_log.push_back(metrics_line(step, loss, bleu, adh));
    if (sink) sink(result.metrics_log.back());
  };

  double interval_loss = 0.0;
  int interval_steps = 0;
  std::vector<TrainingSample> samples;
  for (int step = 1; step <= cfg.steps; ++step) {
    const auto items = make_batch(model, params, cfg, vocab, data, data_rng);
    samples.clear();
    for (const auto& item : items) samples.push_back({&item.example->source, &item.canvas.hypothesis, &item.policy});
    BatchLoss loss;
    try {
      loss = model.backward(params, samples, grads, cfg.model.dropout > 0.0 ? &dropout_rng : nullptr);
    } catch (const NonFiniteLoss& e) {
      if (!cfg.checkpoint.empty()) save_checkpoint(cfg.checkpoint, cfg.model, params);
      throw TrainingDiverged(step, e.what(), params);
    }
    if (!grads.all_finite()) {
      if (!cfg.checkpoint.empty()) save_checkpoint(cfg.checkpoint, cfg.model, params);
      throw TrainingDiverged(step, "non-finite gradient", params);
    }
    adam.step(params, grads, learning_rate(cfg, step));
    result.step_losses.push_back(loss.mean);
    interval_loss += loss.mean;
    ++interval_steps;
    if ((cfg.eval_interval > 0 && step % cfg.eval_interval == 0) || step == cfg.steps) {
      emit(step, interval_loss / interval_steps);
      interval_loss = 0.0;
      interval_steps = 0;
    }
  }
  if (!cfg.checkpoint.empty()) save_checkpoint(cfg.checkpoint, cfg.model, params);
  return result;
}

SweepGrid::SweepGrid() {
  for (int i = 0; i <= 16; ++i) eos_penalties.push_back(0.5 * i);
}

const SweepPoint& SweepResult::at(double tau, double eos_penalty, DecodeMode mode) const {
  for (const auto& p : points) {
    if (p.tau == tau && p.eos_penalty == eos_penalty && p.mode == mode) return p;
  }
  throw SweepError("no sweep point for tau=" + fmt("%g", tau) + " eos_penalty=" + fmt("%g", eos_penalty));
}

std::string SweepResult::render_table() const {
  std::string out = "# order " + std::string(to_string(order)) + "\n";
  for (auto mode : grid.modes) {
    out += "\n## dev BLEU, " + std::string(to_string(mode)) + " decoding (rows: tau, columns: EOS penalty)\n";
    out += "tau";
    for (double g : grid.eos_penalties) out += "\t" + fmt("%.1f", g);
    out += "\n";
    for (double tau : grid.taus) {
      out += fmt("%g", tau);
      for (double g : grid.eos_penalties) out += "\t" + fmt("%.2f", at(tau, g, mode).bleu);
      out += "\n";
    }
  }
  out += "\n## summary: BLEU without penalty (with best penalty)\n";
  out += "tau";
  for (auto mode : grid.modes) out += "\t" + std::string(to_string(mode));
  out += "\n";
  for (double tau : grid.taus) {
    out += fmt("%g", tau);
    for (auto mode : grid.modes) {
      double base = 0.0, best = -1.0;
      for (double g : grid.eos_penalties) {
        const auto& p = at(tau, g, mode);
        if (g == grid.eos_penalties.front()) base = p.bleu;
        best = std::max(best, p.bleu);
      }
      out += "\t" + fmt("%.2f", base) + " (" + fmt("%.2f", best) + ")";
    }
    out += "\n";
  }
  out += "\n## best\n";
  for (const auto& b : best) {
    out += std::string(to_string(b.mode)) + "\ttau=" + fmt("%g", b.tau) + "\teos_penalty=" + fmt("%g", b.eos_penalty) +
           "\tbleu=" + fmt("%.2f", b.bleu) + "\tadherence=" + fmt("%.2f", b.adherence) + "\n";
  }
  return out;
}

std::string SweepResult::render_records() const {
  std::string out;
  for (const auto& p : points) {
    out += "sweep " + fmt("%g", p.tau) + " " + fmt("%g", p.eos_penalty) + " " + std::string(to_string(p.mode)) + " " +
           fmt("%.4f", p.bleu) + " " + fmt("%.4f", p.adherence) + "\n";
  }
  return out;
}

SweepResult sweep(const SweepGrid& grid, std::span<const TauModel> models, OrderKind order,
                  std::span<const ParallelExample> dev, const Vocabulary& vocab) {
  if (grid.taus.empty() || grid.eos_penalties.empty() || grid.modes.empty()) throw SweepError("empty sweep grid");
  if (dev.empty()) throw SweepError("empty dev set");
  SweepResult result;
  result.order = order;
  result.grid = grid;
  std::vector<TokenSeq> refs;
  for (const auto& ex : dev) refs.push_back(ex.target);
  const OrderSpec spec{order, &vocab};

  for (double tau : grid.taus) {
    const auto it = std::find_if(models.begin(), models.end(), [&](const TauModel& m) { return m.tau == tau; });
    if (it == models.end() || it->model == nullptr) {
      throw SweepError("missing checkpoint for grid point tau=" + fmt("%g", tau));
    }
    const TransformerScorer scorer(it->model->config, it->model->params);
    for (double gamma : grid.eos_penalties) {
      const double adh = adherence(scorer, spec, dev, gamma).percentage;
      for (auto mode : grid.modes) {
        const auto hyps = decode_all(scorer, dev, mode, gamma);
        result.points.push_back({tau, gamma, mode, corpus_bleu(hyps, refs).bleu, adh});
      }
    }
  }

  for (auto mode : grid.modes) {
    const SweepPoint* best = nullptr;
    for (const auto& p : result.points) {
      if (p.mode != mode) continue;
      const bool better = best == nullptr || p.bleu > best->bleu ||
                          (p.bleu == best->bleu && (p.eos_penalty < best->eos_penalty ||
                                                    (p.eos_penalty == best->eos_penalty && p.tau < best->tau)));
      if (better) best = &p;
    }
    result.best.push_back(*best);
  }
  return result;
}

SweepResult sweep(const SweepGrid& grid, std::span<const TauCheckpoint> checkpoints, OrderKind order,
                  std::span<const ParallelExample> dev, const Vocabulary& vocab) {
  std::vector<Checkpoint> loaded;
  loaded.reserve(grid.taus.size());
  std::vector<TauModel> models;
  for (double tau : grid.taus) {
    const auto it =
        std::find_if(checkpoints.begin(), checkpoints.end(), [&](const TauCheckpoint& c) { return c.tau == tau; });
    if (it == checkpoints.end() || !std::filesystem::exists(it->path)) {
      throw SweepError("missing checkpoint for grid point tau=" + fmt("%g", tau));
    }
    loaded.push_back(load_checkpoint(it->path));
  }
  for (std::size_t i = 0; i < grid.taus.size(); ++i) models.push_back({grid.taus[i], &loaded[i]});
  return sweep(grid, models, order, dev, vocab);
}

}  // namespace iolab
