#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "iolab/corpus.hpp"
#include "iolab/rng.hpp"

namespace iolab {

class CanvasError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One of the n+1 insertion positions of a length-n hypothesis, with the
/// half-open reference interval [begin, end) of tokens still missing there.
struct Slot {
  int index = 0;
  int begin = 0;
  int end = 0;

  int span_size() const { return end - begin; }
  bool operator==(const Slot&) const = default;
};

struct InsertionAction {
  TokenId content = special::kEos;
  int location = 0;
  std::optional<int> target_pos;

  bool is_eos() const { return content == special::kEos; }
  bool operator==(const InsertionAction&) const = default;
};

/// A partial hypothesis, optionally aligned to the reference it came from.
struct Canvas {
  TokenSeq hypothesis;
  std::optional<TokenSeq> reference;
  std::optional<std::vector<int>> alignment;

  Canvas() = default;
  explicit Canvas(TokenSeq hyp) : hypothesis(std::move(hyp)) {}
  /// Checks that `alignment` is strictly increasing and token-consistent.
  Canvas(TokenSeq hyp, TokenSeq ref, std::vector<int> alignment);

  int length() const { return static_cast<int>(hypothesis.size()); }
  int slot_count() const { return length() + 1; }
  bool is_aligned() const { return reference.has_value() && alignment.has_value(); }

  /// Slots with their missing-token spans. Throws "unaligned canvas".
  std::vector<Slot> slots() const;

  bool operator==(const Canvas&) const = default;
};

/// Valid insertions grouped by slot, plus the slot-major flattened view.
class ValidActionSet {
 public:
  ValidActionSet() = default;
  ValidActionSet(std::vector<Slot> slots, std::vector<std::vector<InsertionAction>> per_slot);

  const std::vector<Slot>& slots() const { return slots_; }
  const std::vector<InsertionAction>& slot(int l) const { return per_slot_[static_cast<std::size_t>(l)]; }
  int slot_count() const { return static_cast<int>(per_slot_.size()); }

  /// All actions, slot-major; the index into this vector is the action index
  /// used by posterior and score vectors elsewhere.
  const std::vector<InsertionAction>& flat() const { return flat_; }
  std::size_t size() const { return flat_.size(); }
  bool empty() const { return flat_.empty(); }
  /// Offset of slot l's first action within flat().
  std::size_t offset(int l) const { return offsets_[static_cast<std::size_t>(l)]; }

  std::optional<std::size_t> index_of(const InsertionAction& action) const;
  bool contains(const InsertionAction& action) const { return index_of(action).has_value(); }

 private:
  std::vector<Slot> slots_;
  std::vector<std::vector<InsertionAction>> per_slot_;
  std::vector<InsertionAction> flat_;
  std::vector<std::size_t> offsets_;
};

/// Per slot, one action per missing reference position; an empty slot gets a
/// single EOS action. Throws CanvasError("unaligned canvas").
ValidActionSet valid_actions(const Canvas& canvas);

/// Uniform subset size, then a uniform subset of that size, with the exact
/// alignment recorded. Throws on an empty reference.
Canvas rollin_sample(const TokenSeq& reference, Rng& rng);

/// Roll-in with the subset size fixed to `k`.
Canvas rollin_sample_size(const TokenSeq& reference, int k, Rng& rng);

enum class AlignSide { left, right };

/// Greedy leftmost or rightmost embedding of `hypothesis` into `reference`;
/// nullopt when it is not a subsequence.
std::optional<std::vector<int>> align(std::span<const TokenId> hypothesis, std::span<const TokenId> reference,
                                      AlignSide side);

/// Copy of `hypothesis` aligned against `reference`, or an unaligned canvas
/// carrying the reference when no embedding exists.
Canvas aligned_canvas(const TokenSeq& hypothesis, const TokenSeq& reference, AlignSide side = AlignSide::left);

/// Simultaneous insertion using pre-insertion slot indices. EOS actions are
/// no-ops. The alignment is carried forward when every inserted action has a
/// target position consistent with it; otherwise it is dropped.
Canvas apply(const Canvas& canvas, std::span<const InsertionAction> actions);

}  // namespace iolab
