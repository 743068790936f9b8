#include "iolab/canvas.hpp"

#include <algorithm>
#include <numeric>

namespace iolab {

Canvas::Canvas(TokenSeq hyp, TokenSeq ref, std::vector<int> align_map)
    : hypothesis(std::move(hyp)), reference(std::move(ref)), alignment(std::move(align_map)) {
  if (alignment->size() != hypothesis.size()) throw CanvasError("alignment length differs from hypothesis");
  const int ref_len = static_cast<int>(reference->size());
  int prev = -1;
  for (std::size_t k = 0; k < hypothesis.size(); ++k) {
    const int pos = (*alignment)[k];
    if (pos <= prev || pos >= ref_len) throw CanvasError("alignment not strictly increasing within reference");
    if ((*reference)[static_cast<std::size_t>(pos)] != hypothesis[k]) throw CanvasError("alignment token mismatch");
    prev = pos;
  }
}

std::vector<Slot> Canvas::slots() const {
  if (!is_aligned()) throw CanvasError("unaligned canvas");
  std::vector<Slot> out;
  out.reserve(hypothesis.size() + 1);
  int begin = 0;
  for (std::size_t k = 0; k < hypothesis.size(); ++k) {
    const int pos = (*alignment)[k];
    out.push_back({static_cast<int>(k), begin, pos});
    begin = pos + 1;
  }
  out.push_back({length(), begin, static_cast<int>(reference->size())});
  return out;
}

ValidActionSet::ValidActionSet(std::vector<Slot> slots, std::vector<std::vector<InsertionAction>> per_slot)
    : slots_(std::move(slots)), per_slot_(std::move(per_slot)) {
  offsets_.reserve(per_slot_.size());
  for (const auto& actions : per_slot_) {
    offsets_.push_back(flat_.size());
    flat_.insert(flat_.end(), actions.begin(), actions.end());
  }
}

std::optional<std::size_t> ValidActionSet::index_of(const InsertionAction& action) const {
  if (action.location < 0 || action.location >= slot_count()) return std::nullopt;
  const auto& actions = per_slot_[static_cast<std::size_t>(action.location)];
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] == action) return offsets_[static_cast<std::size_t>(action.location)] + i;
  }
  return std::nullopt;
}

ValidActionSet valid_actions(const Canvas& canvas) {
  auto slots = canvas.slots();
  const auto& ref = *canvas.reference;
  std::vector<std::vector<InsertionAction>> per_slot(slots.size());
  for (const auto& slot : slots) {
    auto& actions = per_slot[static_cast<std::size_t>(slot.index)];
    if (slot.span_size() == 0) {
      actions.push_back({special::kEos, slot.index, std::nullopt});
      continue;
    }
    for (int s = slot.begin; s < slot.end; ++s) actions.push_back({ref[static_cast<std::size_t>(s)], slot.index, s});
  }
  return ValidActionSet(std::move(slots), std::move(per_slot));
}

Canvas rollin_sample_size(const TokenSeq& reference, int k, Rng& rng) {
  const int n = static_cast<int>(reference.size());
  if (n == 0) throw CanvasError("empty reference");
  if (k < 0 || k > n) throw CanvasError("subset size out of range");
  std::vector<int> indices(static_cast<std::size_t>(n));
  std::iota(indices.begin(), indices.end(), 0);
  // Partial Fisher-Yates: the first k entries form a uniform k-subset.
  for (int i = 0; i < k; ++i) {
    const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(indices[static_cast<std::size_t>(i)], indices[static_cast<std::size_t>(j)]);
  }
  indices.resize(static_cast<std::size_t>(k));
  std::sort(indices.begin(), indices.end());
  TokenSeq hyp;
  hyp.reserve(indices.size());
  for (int i : indices) hyp.push_back(reference[static_cast<std::size_t>(i)]);
  return Canvas(std::move(hyp), reference, std::move(indices));
}

Canvas rollin_sample(const TokenSeq& reference, Rng& rng) {
  if (reference.empty()) throw CanvasError("empty reference");
  const auto k = static_cast<int>(rng.below(reference.size() + 1));
  return rollin_sample_size(reference, k, rng);
}

std::optional<std::vector<int>> align(std::span<const TokenId> hypothesis, std::span<const TokenId> reference,
                                      AlignSide side) {
  const std::size_t n = hypothesis.size(), m = reference.size();
  if (n > m) return std::nullopt;
  std::vector<int> out(n);
  if (side == AlignSide::left) {
    std::size_t j = 0;
    for (std::size_t k = 0; k < n; ++k) {
      while (j < m && reference[j] != hypothesis[k]) ++j;
      if (j == m) return std::nullopt;
      out[k] = static_cast<int>(j++);
    }
  } else {
    std::size_t j = m;
    for (std::size_t k = n; k-- > 0;) {
      while (j > 0 && reference[j - 1] != hypothesis[k]) --j;
      if (j == 0) return std::nullopt;
      out[k] = static_cast<int>(--j);
    }
  }
  return out;
}

Canvas aligned_canvas(const TokenSeq& hypothesis, const TokenSeq& reference, AlignSide side) {
  if (auto a = align(hypothesis, reference, side)) return Canvas(hypothesis, reference, std::move(*a));
  Canvas c(hypothesis);
  c.reference = reference;
  return c;
}

Canvas apply(const Canvas& canvas, std::span<const InsertionAction> actions) {
  const int n = canvas.length();
  // At most one insertion per slot, indexed on the pre-insertion canvas.
  std::vector<const InsertionAction*> by_slot(static_cast<std::size_t>(n + 1), nullptr);
  for (const auto& a : actions) {
    if (a.location < 0 || a.location > n) throw CanvasError("insertion location out of range");
    if (a.is_eos()) continue;
    auto& entry = by_slot[static_cast<std::size_t>(a.location)];
    if (entry != nullptr) throw CanvasError("two insertions in slot " + std::to_string(a.location));
    entry = &a;
  }

  bool keep_alignment = canvas.alignment.has_value();
  TokenSeq hyp;
  std::vector<int> alignment;
  hyp.reserve(static_cast<std::size_t>(n) + actions.size());
  for (int l = 0; l <= n; ++l) {
    if (const auto* a = by_slot[static_cast<std::size_t>(l)]) {
      hyp.push_back(a->content);
      if (keep_alignment && a->target_pos) {
        alignment.push_back(*a->target_pos);
      } else {
        keep_alignment = false;
      }
    }
    if (l < n) {
      hyp.push_back(canvas.hypothesis[static_cast<std::size_t>(l)]);
      if (keep_alignment) alignment.push_back((*canvas.alignment)[static_cast<std::size_t>(l)]);
    }
  }

  if (keep_alignment && canvas.reference) {
    try {
      return Canvas(std::move(hyp), *canvas.reference, std::move(alignment));
    } catch (const CanvasError&) {
      // Target positions inconsistent with the reference: fall through unaligned.
      hyp.clear();
      for (int l = 0; l <= n; ++l) {
        if (const auto* a = by_slot[static_cast<std::size_t>(l)]) hyp.push_back(a->content);
        if (l < n) hyp.push_back(canvas.hypothesis[static_cast<std::size_t>(l)]);
      }
    }
  }
  Canvas out(std::move(hyp));
  out.reference = canvas.reference;
  return out;
}

}  // namespace iolab
