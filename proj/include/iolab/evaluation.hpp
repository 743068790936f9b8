#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "iolab/corpus.hpp"
#include "iolab/decoder.hpp"
#include "iolab/orders.hpp"

namespace iolab {

struct AdherenceReport {
  std::size_t total = 0;
  std::size_t adherent = 0;
  double percentage = 0.0;  // 0 when there were no insertions

  void add(bool is_adherent);
  void merge(const AdherenceReport& other);
  /// `key = value` lines.
  std::string to_text() const;
  /// `adherence <total> <adherent> <percentage>`
  std::string to_record() const;
};

enum class AdherenceMode {
  /// The model decodes freely; steps taken after the hypothesis stops being a
  /// subsequence of the reference count as non-adherent.
  free,
  /// The model's joint argmax is scored, but the canvas advances with its
  /// best action restricted to the valid set, until the reference is complete.
  forced,
};

/// Percentage of serial-decoding insertions that fall in the order's argmin
/// tie set (content and slot both matching) under left alignment. Step limits
/// are the serial DecodeConfig defaults for each source.
AdherenceReport adherence(const InsertionScorer& scorer, const OrderSpec& order,
                          std::span<const ParallelExample> eval_set, double eos_penalty = 0.0,
                          AdherenceMode mode = AdherenceMode::free);

/// Single example; `cfg.mode` is ignored (always serial).
AdherenceReport adherence_one(const InsertionScorer& scorer, const OrderSpec& order, const ParallelExample& example,
                              const DecodeConfig& cfg, AdherenceMode mode = AdherenceMode::free);

inline constexpr int kBleuOrder = 4;

struct BleuReport {
  double bleu = 0.0;  // 0..100
  std::vector<double> sentence_bleu;
  /// Modified n-gram precisions (fractions), orders 1..max_order.
  std::vector<double> precisions;
  double brevity_penalty = 1.0;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;

  std::string to_text() const;
  /// `bleu <bleu> <bp> <hyp_len> <ref_len> <p1> .. <pN>`
  std::string to_record() const;
};

/// Corpus BLEU with clipped n-gram counts, no smoothing. Orders for which the
/// hypotheses contain no n-grams at all are left out of the geometric mean.
/// Throws on an empty or mismatched set.
BleuReport corpus_bleu(std::span<const TokenSeq> hypotheses, std::span<const TokenSeq> references,
                       int max_order = kBleuOrder);

/// Sentence BLEU with exponential smoothing: the k-th order with zero matches
/// uses precision 1 / (2^k * total).
double sentence_bleu(const TokenSeq& hypothesis, const TokenSeq& reference, int max_order = kBleuOrder);

struct LengthBin {
  int lo = 0;
  int hi = 0;
  std::size_t count = 0;
  double mean_bleu = 0.0;
};

struct LengthBinReport {
  std::vector<LengthBin> bins;  // [1,5], [6,10], ..., [46,50]

  std::string to_text() const;
};

/// Mean smoothed sentence BLEU per source-length bin; sources longer than 50
/// tokens are left out.
LengthBinReport length_binned_bleu(std::span<const TokenSeq> hypotheses, std::span<const TokenSeq> references,
                                   std::span<const TokenSeq> sources);

/// Fraction of hypotheses equal to their reference.
double exact_match(std::span<const TokenSeq> hypotheses, std::span<const TokenSeq> references);

}  // namespace iolab
