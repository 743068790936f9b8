#include <fstream>
#include <sstream>

#include "doctest.h"
#include "iolab/decoder.hpp"
#include "support/oracles.hpp"

using namespace iolab;
using testing::SnackScript;

namespace {

std::string read_fixture(const std::string& name) {
  std::ifstream in(std::string(IOLAB_FIXTURE_DIR) + "/" + name, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Always prefers EOS; optionally by a fixed log-prob margin.
class EosScorer final : public InsertionScorer {
 public:
  explicit EosScorer(double margin) : margin_(margin) {}
  SlotDistributions predict(const TokenSeq&, const TokenSeq& hyp) const override {
    const int slots = static_cast<int>(hyp.size()) + 1;
    std::vector<double> content(static_cast<std::size_t>(slots * 6), -50.0);
    for (int l = 0; l < slots; ++l) {
      content[static_cast<std::size_t>(l * 6 + special::kEos)] = std::log(1.0 - std::exp(-margin_));
      content[static_cast<std::size_t>(l * 6 + 5)] = -margin_;
    }
    std::vector<double> location(static_cast<std::size_t>(slots), -std::log(static_cast<double>(slots)));
    return SlotDistributions(slots, 6, content, location);
  }

 private:
  double margin_;
};

}  // namespace

TEST_CASE("snack serial path") {
  const auto vocab = SnackScript::vocab();
  const auto scorer = SnackScript::serial();
  const auto r = decode_serial(scorer, {5}, DecodeConfig::defaults(DecodeMode::serial, 1));
  CHECK(r.output == SnackScript::reference());
  CHECK(r.trace.status == DecodeStatus::finished);
  REQUIRE(r.trace.steps.size() == 6);
  CHECK(r.trace.steps.back().finished_slots == std::vector<int>{5});
  CHECK(render_trace(r.trace, vocab) == read_fixture("snack_serial.trace"));
  for (std::size_t i = 0; i + 1 < r.trace.steps.size(); ++i) {
    CHECK(r.trace.steps[i].after.size() == r.trace.steps[i].before.size() + 1);
  }
}

TEST_CASE("snack parallel path") {
  const auto vocab = SnackScript::vocab();
  const auto scorer = SnackScript::parallel();
  const auto r = decode_parallel(scorer, {5}, DecodeConfig::defaults(DecodeMode::parallel, 1));
  CHECK(r.output == SnackScript::reference());
  CHECK(r.trace.status == DecodeStatus::finished);
  REQUIRE(r.trace.steps.size() == 4);
  CHECK(r.trace.steps[1].insertions.size() == 2);
  CHECK(r.trace.steps[3].finished_slots == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK(render_trace(r.trace, vocab) == read_fixture("snack_parallel.trace"));
}

TEST_CASE("immediate EOS gives an empty output in one step") {
  const EosScorer scorer(5.0);
  for (auto mode : {DecodeMode::serial, DecodeMode::parallel}) {
    const auto r = decode(scorer, {5, 5}, DecodeConfig::defaults(mode, 2));
    CHECK(r.output.empty());
    CHECK(r.trace.steps.size() == 1);
    CHECK(r.trace.status == DecodeStatus::finished);
  }
}

TEST_CASE("a large EOS penalty runs to max_len") {
  const EosScorer scorer(5.0);
  auto cfg = DecodeConfig::defaults(DecodeMode::serial, 2, 20.0);
  const auto r = decode(scorer, {5, 5}, cfg);
  CHECK(r.trace.status == DecodeStatus::max_len);
  CHECK(static_cast<int>(r.output.size()) == cfg.max_len);
  auto pcfg = DecodeConfig::defaults(DecodeMode::parallel, 2, 20.0);
  const auto p = decode(scorer, {5, 5}, pcfg);
  CHECK(static_cast<int>(p.output.size()) <= pcfg.max_len);
  CHECK(p.trace.status != DecodeStatus::finished);
}

TEST_CASE("penalty only applies to EOS") {
  const EosScorer scorer(0.5);
  for (double g : {0.0, 0.5, 1.0, 2.0}) {
    const auto dist = scorer.predict({}, {5});
    const auto c = best_content(dist, 0, g);
    const double eos = std::log(1.0 - std::exp(-0.5)) - g;
    CHECK(c.content == (eos > -0.5 ? special::kEos : TokenId{5}));
  }
}

TEST_CASE("decode defaults and validation") {
  const auto s = DecodeConfig::defaults(DecodeMode::serial, 10);
  CHECK(s.max_len == 36);
  CHECK(s.max_steps == 44);
  const auto p = DecodeConfig::defaults(DecodeMode::parallel, 10);
  CHECK(p.max_steps == 6 + 8);
  DecodeConfig bad;
  bad.max_steps = 0;
  CHECK_THROWS(bad.validate());
  bad = DecodeConfig{};
  bad.eos_penalty = -1;
  CHECK_THROWS(bad.validate());
  CHECK(parse_decode_mode("parallel") == DecodeMode::parallel);
  CHECK_THROWS(parse_decode_mode("beam"));
}

TEST_CASE("binary-tree schedule step counts") {
  // Perfect midpoint model over references of length n.
  for (int n = 1; n <= 40; ++n) {
    TokenSeq ref;
    for (int i = 0; i < n; ++i) ref.push_back(5 + i % 5);
    testing::ScriptedScorer::Script script;
    Canvas c = aligned_canvas({}, ref);
    while (true) {
      const auto set = valid_actions(c);
      std::vector<std::pair<TokenId, int>> moves;
      std::vector<InsertionAction> apply_now;
      for (const auto& slot : set.slots()) {
        if (slot.span_size() == 0) continue;
        const int s = slot.begin + (slot.span_size() - 1) / 2;
        moves.push_back({ref[static_cast<std::size_t>(s)], slot.index});
        apply_now.push_back({ref[static_cast<std::size_t>(s)], slot.index, s});
      }
      script[c.hypothesis] = moves;
      if (moves.empty()) break;
      c = iolab::apply(c, apply_now);
    }
    const testing::ScriptedScorer scorer(10, script);
    const auto r = decode_parallel(scorer, {5}, DecodeConfig::defaults(DecodeMode::parallel, n));
    CHECK(r.output == ref);
    const int expected = static_cast<int>(std::ceil(std::log2(n + 1.0))) + 1;
    CHECK(testing::midpoint_schedule_steps(n) == expected);
    CHECK(static_cast<int>(r.trace.steps.size()) == expected);
  }
}
