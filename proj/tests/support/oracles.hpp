// Independent reference implementations used by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "iolab/corpus.hpp"
#include "iolab/decoder.hpp"
#include "iolab/model.hpp"
#include "iolab/slot_distributions.hpp"

namespace iolab::testing {

/// Replays fixed insertion paths: for each hypothesis, the (content, slot)
/// pairs the model should prefer. Unscripted slots prefer EOS. The location
/// distribution favours the scripted slots.
class ScriptedScorer final : public InsertionScorer {
 public:
  using Script = std::map<TokenSeq, std::vector<std::pair<TokenId, int>>>;

  ScriptedScorer(int vocab_size, Script script) : vocab_size_(vocab_size), script_(std::move(script)) {}

  SlotDistributions predict(const TokenSeq&, const TokenSeq& hypothesis) const override {
    const int slots = static_cast<int>(hypothesis.size()) + 1;
    std::vector<double> content(static_cast<std::size_t>(slots * vocab_size_), kLow);
    std::vector<double> location(static_cast<std::size_t>(slots), kLow);
    std::vector<TokenId> wanted(static_cast<std::size_t>(slots), special::kEos);
    if (auto it = script_.find(hypothesis); it != script_.end()) {
      for (auto [c, l] : it->second) {
        wanted[static_cast<std::size_t>(l)] = c;
        location[static_cast<std::size_t>(l)] = 0.0;
      }
    }
    for (int l = 0; l < slots; ++l) content[static_cast<std::size_t>(l * vocab_size_ + wanted[l])] = 0.0;
    normalize(content, slots, vocab_size_);
    normalize(location, 1, slots);
    return SlotDistributions(slots, vocab_size_, std::move(content), std::move(location));
  }

 private:
  static constexpr double kLow = -20.0;

  static void normalize(std::vector<double>& v, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
      double* row = v.data() + static_cast<std::size_t>(r * cols);
      double z = 0.0;
      for (int c = 0; c < cols; ++c) z += std::exp(row[c]);
      const double lz = std::log(z);
      for (int c = 0; c < cols; ++c) row[c] -= lz;
    }
  }

  int vocab_size_;
  Script script_;
};

/// The "the man ate a snack" example: vocabulary plus scripted serial and
/// parallel paths.
struct SnackScript {
  static constexpr TokenId kThe = 5, kMan = 6, kAte = 7, kA = 8, kSnack = 9;
  static Vocabulary vocab() { return Vocabulary({{"the", 0}, {"man", 0}, {"ate", 0}, {"a", 0}, {"snack", 0}}); }
  static TokenSeq reference() { return {kThe, kMan, kAte, kA, kSnack}; }
  static ScriptedScorer serial() {
    return ScriptedScorer(10, {{{}, {{kAte, 0}}},
                               {{kAte}, {{kSnack, 1}}},
                               {{kAte, kSnack}, {{kMan, 0}}},
                               {{kMan, kAte, kSnack}, {{kThe, 0}}},
                               {{kThe, kMan, kAte, kSnack}, {{kA, 3}}},
                               {{kThe, kMan, kAte, kA, kSnack}, {{special::kEos, 5}}}});
  }
  static ScriptedScorer parallel() {
    return ScriptedScorer(10, {{{}, {{kAte, 0}}},
                               {{kAte}, {{kMan, 0}, {kSnack, 1}}},
                               {{kMan, kAte, kSnack}, {{kThe, 0}, {kA, 2}}}});
  }
};

/// Per slot, the (content, reference position) insertions that keep the index
/// sequence strictly increasing, found by trying every unused reference
/// position at every slot. A slot that admits nothing gets a lone EOS (-1).
inline std::vector<std::vector<std::pair<TokenId, int>>> brute_force_actions(const TokenSeq& reference,
                                                                             const std::vector<int>& indices) {
  const int k = static_cast<int>(indices.size());
  std::vector<std::vector<std::pair<TokenId, int>>> out(static_cast<std::size_t>(k + 1));
  for (int l = 0; l <= k; ++l) {
    for (int s = 0; s < static_cast<int>(reference.size()); ++s) {
      if (std::find(indices.begin(), indices.end(), s) != indices.end()) continue;
      std::vector<int> extended = indices;
      extended.insert(extended.begin() + l, s);
      if (std::is_sorted(extended.begin(), extended.end())) {
        out[static_cast<std::size_t>(l)].push_back({reference[static_cast<std::size_t>(s)], s});
      }
    }
    if (out[static_cast<std::size_t>(l)].empty()) out[static_cast<std::size_t>(l)].push_back({special::kEos, -1});
    std::sort(out[static_cast<std::size_t>(l)].begin(), out[static_cast<std::size_t>(l)].end());
  }
  return out;
}

/// Every strictly increasing embedding of `hyp` into `ref`.
inline void all_embeddings(const TokenSeq& hyp, const TokenSeq& ref, std::vector<int>& cur,
                           std::vector<std::vector<int>>& out) {
  if (cur.size() == hyp.size()) {
    out.push_back(cur);
    return;
  }
  const int start = cur.empty() ? 0 : cur.back() + 1;
  for (int s = start; s < static_cast<int>(ref.size()); ++s) {
    if (ref[static_cast<std::size_t>(s)] != hyp[cur.size()]) continue;
    cur.push_back(s);
    all_embeddings(hyp, ref, cur, out);
    cur.pop_back();
  }
}

inline std::vector<std::vector<int>> all_embeddings(const TokenSeq& hyp, const TokenSeq& ref) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  all_embeddings(hyp, ref, cur, out);
  return out;
}

/// Corpus BLEU from explicit n-gram multisets. Orders with no hypothesis
/// n-grams are left out of the geometric mean; any zero precision gives 0.
inline double brute_force_bleu(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs, int max_order) {
  std::vector<double> match(static_cast<std::size_t>(max_order), 0.0), total(match);
  double c = 0.0, r = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    c += static_cast<double>(hyps[i].size());
    r += static_cast<double>(refs[i].size());
    for (int n = 1; n <= max_order; ++n) {
      std::map<TokenSeq, int> h, g;
      for (std::size_t a = 0; a + n <= hyps[i].size(); ++a) ++h[TokenSeq(hyps[i].begin() + a, hyps[i].begin() + a + n)];
      for (std::size_t a = 0; a + n <= refs[i].size(); ++a) ++g[TokenSeq(refs[i].begin() + a, refs[i].begin() + a + n)];
      for (const auto& [gram, count] : h) {
        total[static_cast<std::size_t>(n - 1)] += count;
        auto it = g.find(gram);
        if (it != g.end()) match[static_cast<std::size_t>(n - 1)] += std::min(count, it->second);
      }
    }
  }
  double log_sum = 0.0;
  int used = 0;
  for (int n = 0; n < max_order; ++n) {
    if (total[static_cast<std::size_t>(n)] == 0) continue;
    if (match[static_cast<std::size_t>(n)] == 0) return 0.0;
    log_sum += std::log(match[static_cast<std::size_t>(n)] / total[static_cast<std::size_t>(n)]);
    ++used;
  }
  if (used == 0) return 0.0;
  const double bp = c >= r ? 1.0 : (c == 0 ? 0.0 : std::exp(1.0 - r / c));
  return 100.0 * bp * std::exp(log_sum / used);
}

/// Parallel steps of a model that always inserts every span's midpoint:
/// splitting rounds until no span is left, plus the final all-EOS step.
inline int midpoint_schedule_steps(int n) {
  std::vector<int> spans{n};
  int rounds = 0;
  while (std::any_of(spans.begin(), spans.end(), [](int s) { return s > 0; })) {
    std::vector<int> next;
    for (int s : spans) {
      if (s == 0) continue;
      const int left = (s - 1) / 2;
      next.push_back(left);
      next.push_back(s - 1 - left);
    }
    spans = std::move(next);
    ++rounds;
  }
  return rounds + 1;
}

/// Seeded Fisher-Yates over the ordinary ids, drawn straight from the engine.
inline std::vector<TokenId> reference_permutation(int vocab_size, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::vector<TokenId> perm;
  for (int i = 0; i < vocab_size; ++i) perm.push_back(special::kCount + i);
  for (std::size_t i = perm.size(); i > 1; --i) {
    const std::uint64_t threshold = (0 - static_cast<std::uint64_t>(i)) % i;
    std::uint64_t r = engine();
    while (r < threshold) r = engine();
    std::swap(perm[i - 1], perm[r % i]);
  }
  return perm;
}

struct GradCheckStats {
  std::size_t count = 0;
  std::size_t below_tight = 0;
  double worst = 0.0;
  std::string worst_name;
};

/// Central differences of the batch loss against backward(), error measured
/// as |analytic - numeric| / max(1, |analytic|).
inline GradCheckStats gradient_check(const InsertionTransformer<double>& model, Parameters<double> params,
                                     std::span<const TrainingSample> batch, double eps = 1e-3,
                                     double tight = 1e-4) {
  Parameters<double> grads = params.zeros_like();
  model.backward(params, batch, grads, nullptr);
  GradCheckStats stats;
  for (std::size_t a = 0; a < params.arrays.size(); ++a) {
    auto& arr = params.arrays[a];
    for (Eigen::Index i = 0; i < arr.size(); ++i) {
      const double saved = arr.data()[i];
      arr.data()[i] = saved + eps;
      const double up = model.loss(params, batch).mean;
      arr.data()[i] = saved - eps;
      const double down = model.loss(params, batch).mean;
      arr.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = grads.arrays[a].data()[i];
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
      ++stats.count;
      if (err < tight) ++stats.below_tight;
      if (err > stats.worst) {
        stats.worst = err;
        stats.worst_name = params.names[a] + "[" + std::to_string(i) + "]";
      }
    }
  }
  return stats;
}

}  // namespace iolab::testing
