#include "iolab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "iolab/oracle.hpp"

namespace iolab {
namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

using NgramCounts = std::map<std::vector<TokenId>, std::size_t>;

NgramCounts count_ngrams(const TokenSeq& seq, int n) {
  NgramCounts counts;
  const auto len = static_cast<int>(seq.size());
  for (int i = 0; i + n <= len; ++i) ++counts[TokenSeq(seq.begin() + i, seq.begin() + i + n)];
  return counts;
}

struct NgramStats {
  std::vector<std::size_t> matches, totals;
};

NgramStats ngram_stats(const TokenSeq& hyp, const TokenSeq& ref, int max_order) {
  NgramStats s;
  s.matches.assign(static_cast<std::size_t>(max_order), 0);
  s.totals.assign(static_cast<std::size_t>(max_order), 0);
  for (int n = 1; n <= max_order; ++n) {
    const auto h = count_ngrams(hyp, n);
    const auto r = count_ngrams(ref, n);
    for (const auto& [gram, count] : h) {
      s.totals[static_cast<std::size_t>(n - 1)] += count;
      if (auto it = r.find(gram); it != r.end()) s.matches[static_cast<std::size_t>(n - 1)] += std::min(count, it->second);
    }
  }
  return s;
}

double brevity(std::size_t hyp_len, std::size_t ref_len) {
  if (hyp_len == 0) return 0.0;
  if (hyp_len >= ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

}  // namespace

void AdherenceReport::add(bool is_adherent) {
  ++total;
  if (is_adherent) ++adherent;
  percentage = 100.0 * static_cast<double>(adherent) / static_cast<double>(total);
}

void AdherenceReport::merge(const AdherenceReport& other) {
  total += other.total;
  adherent += other.adherent;
  percentage = total == 0 ? 0.0 : 100.0 * static_cast<double>(adherent) / static_cast<double>(total);
}

std::string AdherenceReport::to_text() const {
  return "total_insertions = " + std::to_string(total) + "\nadherent_insertions = " + std::to_string(adherent) +
         "\npercentage = " + fixed(percentage, 2) + "\n";
}

std::string AdherenceReport::to_record() const {
  return "adherence " + std::to_string(total) + " " + std::to_string(adherent) + " " + fixed(percentage, 4);
}

AdherenceReport adherence_one(const InsertionScorer& scorer, const OrderSpec& order, const ParallelExample& example,
                              const DecodeConfig& cfg, AdherenceMode mode) {
  const int max_len = std::min(cfg.max_len, scorer.max_hypothesis_length());
  AdherenceReport report;
  TokenSeq hyp;
  for (int step = 0; step < cfg.max_steps && static_cast<int>(hyp.size()) < max_len; ++step) {
    const Canvas canvas = aligned_canvas(hyp, example.target, AlignSide::left);
    if (mode == AdherenceMode::forced && canvas.is_aligned() && canvas.length() == static_cast<int>(example.target.size())) {
      break;
    }
    const auto dist = scorer.predict(example.source, hyp);
    const auto chosen = joint_argmax(dist, cfg.eos_penalty);
    if (chosen.is_eos() && mode == AdherenceMode::free) break;

    bool adherent = false;
    std::optional<ValidActionSet> actions;
    if (canvas.is_aligned()) {
      actions = valid_actions(canvas);
      std::vector<double> posterior;
      if (is_adaptive(order.kind)) posterior = action_log_probs(dist, *actions);
      const auto best = best_actions(order, canvas, *actions, posterior);
      adherent = !chosen.is_eos() && std::any_of(best.begin(), best.end(), [&](const InsertionAction& a) {
        return a.content == chosen.content && a.location == chosen.location;
      });
    }
    report.add(adherent);

    if (mode == AdherenceMode::free) {
      hyp = iolab::apply(Canvas(hyp), std::span(&chosen, 1)).hypothesis;
      continue;
    }
    if (!actions) break;  // forced canvases stay aligned by construction
    // Advance with the model's best valid content action.
    const InsertionAction* pick = nullptr;
    double pick_score = -std::numeric_limits<double>::infinity();
    for (const auto& a : actions->flat()) {
      if (a.is_eos()) continue;
      const double s = dist.joint(a.location, a.content);
      if (s > pick_score) {
        pick_score = s;
        pick = &a;
      }
    }
    if (pick == nullptr) break;
    hyp = iolab::apply(canvas, std::span(pick, 1)).hypothesis;
  }
  return report;
}

AdherenceReport adherence(const InsertionScorer& scorer, const OrderSpec& order,
                          std::span<const ParallelExample> eval_set, double eos_penalty, AdherenceMode mode) {
  AdherenceReport total;
  for (const auto& ex : eval_set) {
    const auto cfg = DecodeConfig::defaults(DecodeMode::serial, ex.source.size(), eos_penalty);
    total.merge(adherence_one(scorer, order, ex, cfg, mode));
  }
  return total;
}

std::string BleuReport::to_text() const {
  std::string out = "bleu = " + fixed(bleu, 4) + "\nbrevity_penalty = " + fixed(brevity_penalty, 6) +
                    "\nhypothesis_length = " + std::to_string(hypothesis_length) +
                    "\nreference_length = " + std::to_string(reference_length) + "\n";
  for (std::size_t i = 0; i < precisions.size(); ++i) {
    out += "precision_" + std::to_string(i + 1) + " = " + fixed(precisions[i], 6) + "\n";
  }
  return out;
}

std::string BleuReport::to_record() const {
  std::string out = "bleu " + fixed(bleu, 4) + " " + fixed(brevity_penalty, 6) + " " +
                    std::to_string(hypothesis_length) + " " + std::to_string(reference_length);
  for (double p : precisions) out += " " + fixed(p, 6);
  return out;
}

BleuReport corpus_bleu(std::span<const TokenSeq> hypotheses, std::span<const TokenSeq> references, int max_order) {
  if (hypotheses.empty()) throw std::invalid_argument("empty hypothesis set");
  if (hypotheses.size() != references.size()) throw std::invalid_argument("hypothesis/reference count mismatch");
  if (max_order < 1) throw std::invalid_argument("max_order must be at least 1");
  BleuReport report;
  std::vector<std::size_t> matches(static_cast<std::size_t>(max_order), 0), totals(matches);
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto s = ngram_stats(hypotheses[i], references[i], max_order);
    for (std::size_t n = 0; n < matches.size(); ++n) {
      matches[n] += s.matches[n];
      totals[n] += s.totals[n];
    }
    report.hypothesis_length += hypotheses[i].size();
    report.reference_length += references[i].size();
    report.sentence_bleu.push_back(sentence_bleu(hypotheses[i], references[i], max_order));
  }
  report.brevity_penalty = brevity(report.hypothesis_length, report.reference_length);
  double log_sum = 0.0;
  int used = 0;
  bool zero = false;
  for (std::size_t n = 0; n < matches.size(); ++n) {
    const double p = totals[n] == 0 ? 0.0 : static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
    report.precisions.push_back(p);
    if (totals[n] == 0) continue;
    ++used;
    if (matches[n] == 0) {
      zero = true;
    } else {
      log_sum += std::log(p);
    }
  }
  report.bleu = (zero || used == 0) ? 0.0 : 100.0 * report.brevity_penalty * std::exp(log_sum / used);
  return report;
}

double sentence_bleu(const TokenSeq& hypothesis, const TokenSeq& reference, int max_order) {
  if (hypothesis.empty()) return 0.0;
  const auto s = ngram_stats(hypothesis, reference, max_order);
  double log_sum = 0.0;
  int used = 0;
  double smooth = 1.0;
  for (std::size_t n = 0; n < s.totals.size(); ++n) {
    if (s.totals[n] == 0) continue;
    ++used;
    if (s.matches[n] == 0) {
      smooth *= 2.0;
      log_sum += -std::log(smooth * static_cast<double>(s.totals[n]));
    } else {
      log_sum += std::log(static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]));
    }
  }
  return 100.0 * brevity(hypothesis.size(), reference.size()) * std::exp(log_sum / used);
}

std::string LengthBinReport::to_text() const {
  std::string out;
  for (const auto& b : bins) {
    out += "bin_" + std::to_string(b.lo) + "_" + std::to_string(b.hi) + " = " + std::to_string(b.count) + " " +
           fixed(b.mean_bleu, 4) + "\n";
  }
  return out;
}

LengthBinReport length_binned_bleu(std::span<const TokenSeq> hypotheses, std::span<const TokenSeq> references,
                                   std::span<const TokenSeq> sources) {
  if (hypotheses.size() != references.size() || hypotheses.size() != sources.size()) {
    throw std::invalid_argument("hypothesis/reference/source count mismatch");
  }
  LengthBinReport report;
  for (int lo = 1; lo <= 46; lo += 5) report.bins.push_back({lo, lo + 4, 0, 0.0});
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto len = static_cast<int>(sources[i].size());
    if (len < 1 || len > 50) continue;
    auto& bin = report.bins[static_cast<std::size_t>((len - 1) / 5)];
    ++bin.count;
    bin.mean_bleu += sentence_bleu(hypotheses[i], references[i]);
  }
  for (auto& b : report.bins) {
    if (b.count) b.mean_bleu /= static_cast<double>(b.count);
  }
  return report;
}

double exact_match(std::span<const TokenSeq> hypotheses, std::span<const TokenSeq> references) {
  if (hypotheses.size() != references.size()) throw std::invalid_argument("count mismatch");
  if (hypotheses.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) hits += hypotheses[i] == references[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(hypotheses.size());
}

}  // namespace iolab
