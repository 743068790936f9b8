#include <map>
#include <set>

#include "doctest.h"
#include "iolab/canvas.hpp"
#include "support/oracles.hpp"

using namespace iolab;

namespace {

// the man ate a snack
constexpr TokenId kThe = 5, kMan = 6, kAte = 7, kA = 8, kSnack = 9;
const TokenSeq kSnackRef{kThe, kMan, kAte, kA, kSnack};

std::vector<std::vector<std::pair<TokenId, int>>> per_slot(const ValidActionSet& set) {
  std::vector<std::vector<std::pair<TokenId, int>>> out;
  for (int l = 0; l < set.slot_count(); ++l) {
    std::vector<std::pair<TokenId, int>> slot;
    for (const auto& a : set.slot(l)) {
      CHECK(a.location == l);
      slot.push_back({a.content, a.target_pos.value_or(-1)});
    }
    std::sort(slot.begin(), slot.end());
    out.push_back(slot);
  }
  return out;
}

}  // namespace

TEST_CASE("snack example canvas") {
  const auto canvas = aligned_canvas({kAte, kSnack}, kSnackRef);
  const auto set = valid_actions(canvas);
  REQUIRE(set.slot_count() == 3);
  using V = std::vector<std::pair<TokenId, int>>;
  CHECK(per_slot(set)[0] == V{{kThe, 0}, {kMan, 1}});
  CHECK(per_slot(set)[1] == V{{kA, 3}});
  CHECK(per_slot(set)[2] == V{{special::kEos, -1}});
  CHECK(set.size() == 4);
  CHECK(set.slots()[0] == Slot{0, 0, 2});
  CHECK(set.slots()[1] == Slot{1, 3, 4});
  CHECK(set.slots()[2] == Slot{2, 5, 5});
}

TEST_CASE("complete canvas yields only EOS") {
  const auto set = valid_actions(aligned_canvas(kSnackRef, kSnackRef));
  CHECK(set.size() == 6);
  for (const auto& a : set.flat()) CHECK(a.is_eos());
}

TEST_CASE("unaligned canvas is an error") {
  CHECK_THROWS_WITH_AS(valid_actions(Canvas(TokenSeq{kAte})), "unaligned canvas", CanvasError);
}

TEST_CASE("duplicate tokens give one action per position") {
  const TokenSeq ref{kA, kA, kThe};
  const auto set = valid_actions(aligned_canvas({kThe}, ref));
  using V = std::vector<std::pair<TokenId, int>>;
  CHECK(per_slot(set)[0] == V{{kA, 0}, {kA, 1}});
}

TEST_CASE("valid actions match brute-force enumeration on small references") {
  // All references up to length 5 over 3 tokens (the acceptance run covers 6).
  std::size_t checked = 0;
  for (int n = 1; n <= 5; ++n) {
    int total = 1;
    for (int i = 0; i < n; ++i) total *= 3;
    for (int code = 0; code < total; ++code) {
      TokenSeq ref;
      for (int i = 0, c = code; i < n; ++i, c /= 3) ref.push_back(5 + c % 3);
      for (int mask = 0; mask < (1 << n); ++mask) {
        std::vector<int> idx;
        TokenSeq hyp;
        for (int i = 0; i < n; ++i) {
          if (mask & (1 << i)) {
            idx.push_back(i);
            hyp.push_back(ref[static_cast<std::size_t>(i)]);
          }
        }
        const Canvas canvas(hyp, ref, idx);
        const auto set = valid_actions(canvas);
        REQUIRE(per_slot(set) == testing::brute_force_actions(ref, idx));
        ++checked;
      }
    }
  }
  CHECK(checked > 5000);
}

TEST_CASE("align is greedy leftmost or rightmost") {
  const TokenSeq ref{kA, kThe, kA};
  CHECK(align(TokenSeq{kA}, ref, AlignSide::left) == std::vector<int>{0});
  CHECK(align(TokenSeq{kA}, ref, AlignSide::right) == std::vector<int>{2});
  CHECK(align(TokenSeq{kThe, kA}, ref, AlignSide::left) == std::vector<int>{1, 2});
  CHECK(align(TokenSeq{kThe, kA}, ref, AlignSide::right) == std::vector<int>{1, 2});
  CHECK_FALSE(align(TokenSeq{kMan}, TokenSeq{kA, kThe}, AlignSide::left).has_value());
  CHECK_FALSE(align(TokenSeq{kMan}, TokenSeq{kA, kThe}, AlignSide::right).has_value());
}

TEST_CASE("align agrees with exhaustive embedding search") {
  for (int code = 0; code < 729; ++code) {
    TokenSeq ref;
    for (int i = 0, c = code; i < 6; ++i, c /= 3) ref.push_back(5 + c % 3);
    for (int hcode = 0; hcode < 27; ++hcode) {
      TokenSeq hyp;
      for (int i = 0, c = hcode; i < 3; ++i, c /= 3) hyp.push_back(5 + c % 3);
      const auto all = testing::all_embeddings(hyp, ref);
      const auto left = align(hyp, ref, AlignSide::left);
      const auto right = align(hyp, ref, AlignSide::right);
      REQUIRE(left.has_value() == !all.empty());
      REQUIRE(right.has_value() == !all.empty());
      if (all.empty()) continue;
      // Greedy leftmost is the elementwise minimum of all embeddings, rightmost the maximum.
      std::vector<int> lo = all.front(), hi = all.front();
      for (const auto& e : all) {
        for (std::size_t k = 0; k < e.size(); ++k) {
          lo[k] = std::min(lo[k], e[k]);
          hi[k] = std::max(hi[k], e[k]);
        }
      }
      CHECK(*left == lo);
      CHECK(*right == hi);
    }
  }
}

TEST_CASE("apply") {
  SUBCASE("snack decode rows") {
    Canvas empty;
    const InsertionAction ate{kAte, 0, std::nullopt};
    CHECK(iolab::apply(empty, std::span(&ate, 1)).hypothesis == TokenSeq{kAte});
    const std::vector<InsertionAction> two{{kMan, 0, std::nullopt}, {kSnack, 1, std::nullopt}};
    CHECK(iolab::apply(Canvas(TokenSeq{kAte}), two).hypothesis == TokenSeq{kMan, kAte, kSnack});
    const std::vector<InsertionAction> pre{{kThe, 0, std::nullopt}, {kA, 2, std::nullopt}};
    CHECK(iolab::apply(Canvas(TokenSeq{kMan, kAte, kSnack}), pre).hypothesis == kSnackRef);
  }
  SUBCASE("empty action list and EOS are no-ops") {
    const auto c = aligned_canvas({kAte}, kSnackRef);
    CHECK(iolab::apply(c, {}) == c);
    const InsertionAction eos{special::kEos, 1, std::nullopt};
    CHECK(iolab::apply(c, std::span(&eos, 1)).hypothesis == c.hypothesis);
  }
  SUBCASE("errors") {
    const Canvas c(TokenSeq{kAte});
    const std::vector<InsertionAction> same{{kMan, 0, std::nullopt}, {kThe, 0, std::nullopt}};
    CHECK_THROWS_AS(iolab::apply(c, same), CanvasError);
    const InsertionAction far{kMan, 2, std::nullopt};
    CHECK_THROWS_AS(iolab::apply(c, std::span(&far, 1)), CanvasError);
  }
  SUBCASE("valid actions preserve the alignment") {
    Rng rng(11);
    for (int trial = 0; trial < 500; ++trial) {
      auto canvas = rollin_sample(kSnackRef, rng);
      while (canvas.length() < 5) {
        const auto set = valid_actions(canvas);
        std::vector<InsertionAction> pick;
        for (int l = 0; l < set.slot_count(); ++l) {
          const auto& slot = set.slot(l);
          const auto& a = slot[static_cast<std::size_t>(rng.below(slot.size()))];
          if (!a.is_eos() && rng.below(2) == 0) pick.push_back(a);
        }
        const auto next = iolab::apply(canvas, pick);
        CHECK(next.length() == canvas.length() + static_cast<int>(pick.size()));
        REQUIRE(next.is_aligned());
        canvas = next;
      }
      CHECK(canvas.hypothesis == kSnackRef);
    }
  }
}

TEST_CASE("|A*| = missing tokens + empty slots") {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    TokenSeq ref;
    const auto n = 1 + rng.below(8);
    for (std::size_t i = 0; i < n; ++i) ref.push_back(5 + static_cast<TokenId>(rng.below(3)));
    const auto canvas = rollin_sample(ref, rng);
    const auto set = valid_actions(canvas);
    std::size_t empty = 0;
    for (const auto& s : set.slots()) empty += s.span_size() == 0;
    CHECK(set.size() == ref.size() - canvas.hypothesis.size() + empty);
  }
}

TEST_CASE("roll-in edge cases and uniformity") {
  Rng rng(1);
  CHECK(rollin_sample_size(kSnackRef, 0, rng).hypothesis.empty());
  CHECK(rollin_sample_size(kSnackRef, 5, rng).hypothesis == kSnackRef);
  const TokenSeq ref{5, 6, 7, 8};
  std::map<int, int> sizes;
  std::map<std::vector<int>, int> pairs;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto c = rollin_sample(ref, rng);
    ++sizes[c.length()];
    if (c.length() == 2) ++pairs[*c.alignment];
  }
  for (int k = 0; k <= 4; ++k) CHECK(std::abs(sizes[k] / double(n) - 0.2) < 0.02);
  CHECK(pairs.size() == 6);
}
