#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "iolab/canvas.hpp"
#include "iolab/corpus.hpp"

namespace iolab {

class OrderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OrderKind {
  uniform,
  binary_tree,
  random,
  l2r,
  r2l,
  common_first,
  rare_first,
  shortest_first,
  longest_first,
  alpha_az,
  alpha_za,
  easy_first,
  hard_first,
};

inline constexpr std::array<OrderKind, 13> kAllOrderKinds = {
    OrderKind::uniform,        OrderKind::binary_tree,   OrderKind::random,        OrderKind::l2r,
    OrderKind::r2l,            OrderKind::common_first,  OrderKind::rare_first,    OrderKind::shortest_first,
    OrderKind::longest_first,  OrderKind::alpha_az,      OrderKind::alpha_za,      OrderKind::easy_first,
    OrderKind::hard_first,
};

std::string_view to_string(OrderKind kind);
std::optional<OrderKind> parse_order_kind(std::string_view name);
/// Comma-separated list of every valid kind string.
std::string order_kind_list();

inline bool is_adaptive(OrderKind kind) { return kind == OrderKind::easy_first || kind == OrderKind::hard_first; }

struct OrderSpec {
  OrderKind kind = OrderKind::uniform;
  const Vocabulary* vocab = nullptr;  // needed by the word-based kinds
};

/// 64-bit FNV-1a over the UTF-8 bytes.
std::uint64_t fnv1a64(std::string_view bytes);
/// Number of Unicode scalar values in a UTF-8 string.
std::size_t utf8_length(std::string_view text);

/// O(a) for every action of `actions`, in flat() order. Lower is better.
///
/// Rank-based kinds rank the distinct non-EOS words of the whole set (all slots
/// pooled) with dense ranks from 0. EOS scores 0 under static kinds. Adaptive
/// kinds read `posterior`, the model's joint log p(c, l) per flat action:
/// easy_first scores -log p(a), hard_first +log p(a).
std::vector<double> score_all(const OrderSpec& spec, const Canvas& canvas, const ValidActionSet& actions,
                              std::span<const double> posterior = {});

/// O(a) for one action; throws if it is not in `actions`.
double score(const OrderSpec& spec, const InsertionAction& action, const Canvas& canvas,
             const ValidActionSet& actions, std::span<const double> posterior = {});

/// The argmin tie set. EOS actions only compete when no content action is
/// left, so a complete canvas yields its EOS actions.
std::vector<InsertionAction> best_actions(const OrderSpec& spec, const Canvas& canvas, const ValidActionSet& actions,
                                          std::span<const double> posterior = {});

/// Same, from precomputed scores (flat order).
std::vector<InsertionAction> best_actions(const ValidActionSet& actions, std::span<const double> scores);

}  // namespace iolab
