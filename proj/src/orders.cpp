#include "iolab/orders.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace iolab {
namespace {

constexpr std::array<std::string_view, 13> kOrderNames = {
    "uniform",       "binary_tree",    "random",   "l2r",      "r2l",        "common_first", "rare_first",
    "shortest_first", "longest_first", "alpha_az", "alpha_za", "easy_first", "hard_first",
};

// Dense rank (from 0, ties share) of each non-EOS action's key among the
// distinct words of the set; EOS entries get 0.
template <typename Key, typename KeyFn>
std::vector<double> dense_ranks(const ValidActionSet& actions, KeyFn key_of) {
  std::vector<Key> keys;
  for (const auto& a : actions.flat()) {
    if (!a.is_eos()) keys.push_back(key_of(a.content));
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  std::vector<double> out;
  out.reserve(actions.size());
  for (const auto& a : actions.flat()) {
    if (a.is_eos()) {
      out.push_back(0.0);
      continue;
    }
    const auto it = std::lower_bound(keys.begin(), keys.end(), key_of(a.content));
    out.push_back(static_cast<double>(it - keys.begin()));
  }
  return out;
}

const Vocabulary& need_vocab(const OrderSpec& spec) {
  if (spec.vocab == nullptr) throw OrderError(std::string(to_string(spec.kind)) + " order needs a vocabulary");
  return *spec.vocab;
}

}  // namespace

std::string_view to_string(OrderKind kind) { return kOrderNames[static_cast<std::size_t>(kind)]; }

std::optional<OrderKind> parse_order_kind(std::string_view name) {
  for (std::size_t i = 0; i < kOrderNames.size(); ++i) {
    if (kOrderNames[i] == name) return static_cast<OrderKind>(i);
  }
  return std::nullopt;
}

std::string order_kind_list() {
  std::string out;
  for (auto name : kOrderNames) {
    if (!out.empty()) out += ", ";
    out += name;
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::size_t utf8_length(std::string_view text) {
  // Count bytes that are not continuation bytes (10xxxxxx).
  return static_cast<std::size_t>(
      std::count_if(text.begin(), text.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::vector<double> score_all(const OrderSpec& spec, const Canvas& canvas, const ValidActionSet& actions,
                              std::span<const double> posterior) {
  (void)canvas;
  const auto& flat = actions.flat();
  if (is_adaptive(spec.kind)) {
    if (posterior.size() != flat.size()) {
      throw OrderError(std::string(to_string(spec.kind)) + " order needs a posterior for every valid action");
    }
  }

  std::vector<double> out(flat.size(), 0.0);
  auto negate = [&] {
    for (std::size_t i = 0; i < flat.size(); ++i) {
      if (!flat[i].is_eos()) out[i] = -out[i];
    }
  };

  switch (spec.kind) {
    case OrderKind::uniform:
      break;
    case OrderKind::binary_tree: {
      const auto& slots = actions.slots();
      for (std::size_t i = 0; i < flat.size(); ++i) {
        if (flat[i].is_eos()) continue;
        const auto& slot = slots[static_cast<std::size_t>(flat[i].location)];
        const double mid = 0.5 * (slot.begin + slot.end - 1);
        out[i] = std::abs(*flat[i].target_pos - mid);
      }
      break;
    }
    case OrderKind::random: {
      const auto& vocab = need_vocab(spec);
      out = dense_ranks<std::uint64_t>(actions, [&](TokenId c) { return fnv1a64(vocab.token(c)); });
      break;
    }
    case OrderKind::l2r:
    case OrderKind::r2l:
      for (std::size_t i = 0; i < flat.size(); ++i) {
        if (!flat[i].is_eos()) out[i] = *flat[i].target_pos;
      }
      if (spec.kind == OrderKind::r2l) negate();
      break;
    case OrderKind::common_first:
    case OrderKind::rare_first: {
      const auto& vocab = need_vocab(spec);
      // Descending frequency: rank the negated count.
      out = dense_ranks<std::int64_t>(actions, [&](TokenId c) { return -static_cast<std::int64_t>(vocab.frequency(c)); });
      if (spec.kind == OrderKind::rare_first) negate();
      break;
    }
    case OrderKind::shortest_first:
    case OrderKind::longest_first: {
      const auto& vocab = need_vocab(spec);
      out = dense_ranks<std::size_t>(actions, [&](TokenId c) { return utf8_length(vocab.token(c)); });
      if (spec.kind == OrderKind::longest_first) negate();
      break;
    }
    case OrderKind::alpha_az:
    case OrderKind::alpha_za: {
      const auto& vocab = need_vocab(spec);
      // Byte order of UTF-8 coincides with code-point order.
      out = dense_ranks<std::string_view>(actions, [&](TokenId c) { return std::string_view(vocab.token(c)); });
      if (spec.kind == OrderKind::alpha_za) negate();
      break;
    }
    case OrderKind::easy_first:
    case OrderKind::hard_first:
      for (std::size_t i = 0; i < flat.size(); ++i) {
        out[i] = spec.kind == OrderKind::easy_first ? -posterior[i] : posterior[i];
      }
      break;
  }
  return out;
}

double score(const OrderSpec& spec, const InsertionAction& action, const Canvas& canvas, const ValidActionSet& actions,
             std::span<const double> posterior) {
  const auto index = actions.index_of(action);
  if (!index) throw OrderError("action is not in the valid action set");
  return score_all(spec, canvas, actions, posterior)[*index];
}

std::vector<InsertionAction> best_actions(const ValidActionSet& actions, std::span<const double> scores) {
  const auto& flat = actions.flat();
  const bool any_content = std::any_of(flat.begin(), flat.end(), [](const auto& a) { return !a.is_eos(); });
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (flat[i].is_eos() == any_content) continue;
    best = std::min(best, scores[i]);
  }
  std::vector<InsertionAction> out;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (flat[i].is_eos() == any_content) continue;
    if (scores[i] == best) out.push_back(flat[i]);
  }
  return out;
}

std::vector<InsertionAction> best_actions(const OrderSpec& spec, const Canvas& canvas, const ValidActionSet& actions,
                                          std::span<const double> posterior) {
  return best_actions(actions, score_all(spec, canvas, actions, posterior));
}

}  // namespace iolab
