#pragma once

#include <limits>
#include <string>
#include <vector>

#include "iolab/canvas.hpp"
#include "iolab/corpus.hpp"
#include "iolab/model.hpp"
#include "iolab/slot_distributions.hpp"

namespace iolab {

/// Anything that yields p(c | l) and p(l) for a (source, hypothesis) pair.
class InsertionScorer {
 public:
  virtual ~InsertionScorer() = default;
  virtual SlotDistributions predict(const TokenSeq& source, const TokenSeq& hypothesis) const = 0;
  /// Longest hypothesis the scorer accepts.
  virtual int max_hypothesis_length() const { return std::numeric_limits<int>::max(); }
};

class TransformerScorer final : public InsertionScorer {
 public:
  TransformerScorer(const ModelConfig& config, const Parameters<float>& params) : model_(config), params_(&params) {}

  SlotDistributions predict(const TokenSeq& source, const TokenSeq& hypothesis) const override {
    return model_.forward(*params_, source, hypothesis);
  }
  int max_hypothesis_length() const override { return model_.config().max_len; }

 private:
  InsertionTransformer<float> model_;
  const Parameters<float>* params_;
};

enum class DecodeMode { serial, parallel };

std::string_view to_string(DecodeMode mode);
DecodeMode parse_decode_mode(std::string_view name);

struct DecodeConfig {
  DecodeMode mode = DecodeMode::serial;
  double eos_penalty = 0.0;
  int max_steps = 64;
  int max_len = 48;

  /// max_len = 2 * source length + 16; max_steps = max_len + 8 (serial) or
  /// ceil(log2(max_len)) + 8 (parallel).
  static DecodeConfig defaults(DecodeMode mode, std::size_t source_length, double eos_penalty = 0.0);
  void validate() const;
};

enum class DecodeStatus { finished, max_steps, max_len };

std::string_view to_string(DecodeStatus status);

struct DecodeStep {
  TokenSeq before;
  /// Applied insertions, indexed on `before`.
  std::vector<InsertionAction> insertions;
  /// Slots whose argmax was EOS in this step.
  std::vector<int> finished_slots;
  TokenSeq after;
};

struct DecodeTrace {
  std::vector<DecodeStep> steps;
  DecodeStatus status = DecodeStatus::finished;
};

struct DecodeResult {
  TokenSeq output;
  DecodeTrace trace;
};

/// Repeated joint argmax over (content, slot) with gamma subtracted from
/// log p(EOS | l); stops when the argmax content is EOS.
DecodeResult decode_serial(const InsertionScorer& scorer, const TokenSeq& source, const DecodeConfig& cfg);

/// Per-slot argmax with the same EOS penalty; every slot not choosing EOS
/// receives its token simultaneously. Stops when all slots choose EOS.
DecodeResult decode_parallel(const InsertionScorer& scorer, const TokenSeq& source, const DecodeConfig& cfg);

DecodeResult decode(const InsertionScorer& scorer, const TokenSeq& source, const DecodeConfig& cfg);

/// The argmax choice for one slot (EOS-penalized) and the joint argmax, as
/// used by the decoders. Special tokens other than EOS and UNK are never chosen.
struct SlotChoice {
  TokenId content = special::kEos;
  double score = -std::numeric_limits<double>::infinity();
};
SlotChoice best_content(const SlotDistributions& dist, int slot, double eos_penalty);
InsertionAction joint_argmax(const SlotDistributions& dist, double eos_penalty);

/// One line per step: `<step><TAB>k=<insertions><TAB><hypothesis>` where the
/// hypothesis is the post-step canvas with this step's insertions written as
/// `[token]`. Steps count from 1; lines end with '\n'.
std::string render_trace(const DecodeTrace& trace, const Vocabulary& vocab);

}  // namespace iolab
