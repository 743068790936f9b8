#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "iolab/checkpoint.hpp"
#include "iolab/config.hpp"
#include "iolab/corpus.hpp"
#include "iolab/decoder.hpp"
#include "iolab/evaluation.hpp"
#include "iolab/model.hpp"
#include "iolab/orders.hpp"

namespace iolab {

struct TrainConfig {
  OrderKind order = OrderKind::uniform;
  double tau = 1.0;
  int batch_size = 32;
  int steps = 20000;
  double lr = 3e-3;  // peak
  int warmup = 1000;
  std::uint64_t seed = 1;
  /// Metrics are logged every `eval_interval` steps (0: final step only).
  int eval_interval = 0;
  /// Written at the end of training and on divergence when non-empty.
  std::filesystem::path checkpoint;
  ModelConfig model;

  void validate() const;
  /// Reads the training and model keys from `settings`, starting from the
  /// defaults above. `vocab_size` is not a setting; the caller fills it in.
  static TrainConfig from_settings(const Settings& settings);
};

/// Peak * min(t / warmup, sqrt(warmup / t)) for 1-based step t.
double learning_rate(const TrainConfig& cfg, int step);

struct TrainResult {
  Parameters<float> params;
  /// `step loss dev_bleu adherence` lines.
  std::vector<std::string> metrics_log;
  /// Mean training loss of every step.
  std::vector<double> step_losses;
};

/// Thrown when a step produces a non-finite loss or parameters; carries the
/// parameters from before the failing step.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int step, std::string what, Parameters<float> last_good);
  int step;
  Parameters<float> last_good;
};

using LogSink = std::function<void(const std::string&)>;

/// Roll-in training against the order's oracle. Deterministic given the
/// config (single-threaded). Dev metrics use serial decoding without an EOS
/// penalty and are "nan" when `dev` is empty.
TrainResult train(const TrainConfig& cfg, std::span<const ParallelExample> data, const Vocabulary& vocab,
                  std::span<const ParallelExample> dev = {}, const LogSink& sink = {});

/// The per-example oracle policies and loss/gradient for one batch, exactly
/// as train() computes them (exposed for checks on adaptive orders).
struct BatchItem {
  const ParallelExample* example = nullptr;
  Canvas canvas;
  OraclePolicy policy;
};
std::vector<BatchItem> make_batch(const InsertionTransformer<float>& model, const Parameters<float>& params,
                                  const TrainConfig& cfg, const Vocabulary& vocab,
                                  std::span<const ParallelExample> data, Rng& rng);

struct SweepGrid {
  std::vector<double> taus{0.5, 1.0, 2.0};
  std::vector<double> eos_penalties;  // default 0, 0.5, ..., 8
  std::vector<DecodeMode> modes{DecodeMode::serial, DecodeMode::parallel};

  SweepGrid();
};

struct SweepPoint {
  double tau = 0.0;
  double eos_penalty = 0.0;
  DecodeMode mode = DecodeMode::serial;
  double bleu = 0.0;
  double adherence = 0.0;
};

struct SweepResult {
  OrderKind order = OrderKind::uniform;
  SweepGrid grid;
  std::vector<SweepPoint> points;  // tau-major, then penalty, then mode
  std::vector<SweepPoint> best;    // one per mode, grid order

  const SweepPoint& at(double tau, double eos_penalty, DecodeMode mode) const;
  /// Full BLEU grids per mode plus the summary table (score without penalty
  /// and with the best penalty, per tau and mode).
  std::string render_table() const;
  /// `sweep <tau> <eos_penalty> <mode> <bleu> <adherence>` per point.
  std::string render_records() const;
};

struct TauCheckpoint {
  double tau = 0.0;
  std::filesystem::path path;
};

/// Dev BLEU and adherence for every grid point. Throws SweepError naming the
/// grid point whose checkpoint is missing.
SweepResult sweep(const SweepGrid& grid, std::span<const TauCheckpoint> checkpoints, OrderKind order,
                  std::span<const ParallelExample> dev, const Vocabulary& vocab);

/// Same, with models already in memory (one per tau, matched by value).
struct TauModel {
  double tau = 0.0;
  const Checkpoint* model = nullptr;
};
SweepResult sweep(const SweepGrid& grid, std::span<const TauModel> models, OrderKind order,
                  std::span<const ParallelExample> dev, const Vocabulary& vocab);

class SweepError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decodes every source.
std::vector<TokenSeq> decode_all(const InsertionScorer& scorer, std::span<const ParallelExample> data, DecodeMode mode,
                                 double eos_penalty);

}  // namespace iolab
