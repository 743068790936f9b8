#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "iolab/harness.hpp"
#include "iolab/oracle.hpp"

using namespace iolab;

namespace {

TrainConfig small_config(const Vocabulary& vocab, OrderKind order, int steps) {
  TrainConfig cfg;
  cfg.order = order;
  cfg.steps = steps;
  cfg.warmup = std::min(steps, 100);
  cfg.batch_size = 8;
  cfg.model.d_model = 16;
  cfg.model.d_ffn = 32;
  cfg.model.n_layers = 1;
  cfg.model.max_len = 16;
  cfg.model.dropout = 0.0;
  cfg.model.vocab_size = static_cast<int>(vocab.size());
  return cfg;
}

}  // namespace

TEST_CASE("settings parsing") {
  const auto s = Settings::parse("# comment\norder = l2r\n tau=0.5 \n\nsteps = 10\n");
  CHECK(s.require("order") == "l2r");
  CHECK(s.get_double("tau", 1.0) == 0.5);
  CHECK(s.get_int("steps", 0) == 10);
  CHECK(s.get_int("batch_size", 7) == 7);
  CHECK_THROWS_AS(Settings::parse("colour = red\n"), UsageError);
  CHECK_THROWS_AS(Settings::parse("just words\n"), UsageError);
  CHECK_THROWS_AS(Settings::parse("tau = warm\n").get_double("tau", 1.0), UsageError);
  CHECK_THROWS_AS(Settings::parse("seed = -3\n").get_uint("seed", 1), UsageError);
  CHECK(parse_double_list("0.5, 1,2") == std::vector<double>{0.5, 1.0, 2.0});
}

TEST_CASE("train config from settings") {
  auto cfg = TrainConfig::from_settings(Settings::parse("order = binary_tree\ntau = 2\nd_model = 32\n"));
  CHECK(cfg.order == OrderKind::binary_tree);
  CHECK(cfg.tau == 2.0);
  CHECK(cfg.model.d_model == 32);
  try {
    TrainConfig::from_settings(Settings::parse("order = sideways\n"));
    FAIL("expected a usage error");
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    for (auto k : kAllOrderKinds) CHECK(msg.find(std::string(to_string(k))) != std::string::npos);
  }
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.warmup = 100;
  CHECK(learning_rate(cfg, 50) == doctest::Approx(5e-4));
  CHECK(learning_rate(cfg, 100) == doctest::Approx(1e-3));
  CHECK(learning_rate(cfg, 400) == doctest::Approx(5e-4));
}

TEST_CASE("zero steps returns the initial parameters") {
  const auto data = generate_synthetic({SyntheticKind::copy, 20, 1, 6, 1}, 50);
  const auto vocab = with_target_frequencies(synthetic_vocabulary(20), data);
  const auto cfg = small_config(vocab, OrderKind::uniform, 0);
  const auto r = train(cfg, data, vocab);
  CHECK(r.params == InsertionTransformer<float>(cfg.model).init());
  CHECK(r.step_losses.empty());
}

TEST_CASE("training reduces the loss and is deterministic") {
  const auto data = generate_synthetic({SyntheticKind::copy, 20, 1, 6, 1}, 2000);
  const auto dev = generate_synthetic({SyntheticKind::copy, 20, 1, 6, 2}, 20);
  const auto vocab = with_target_frequencies(synthetic_vocabulary(20), data);
  auto cfg = small_config(vocab, OrderKind::uniform, 2000);
  cfg.model.d_model = 64;
  cfg.model.d_ffn = 128;
  cfg.model.n_layers = 2;
  cfg.batch_size = 32;
  cfg.eval_interval = 1000;
  const auto a = train(cfg, data, vocab, dev);
  REQUIRE(a.step_losses.size() == 2000);
  // Final loss is the mean of the last 50 steps; one batch is too noisy.
  const double initial = a.step_losses.front();
  double last = 0.0;
  for (std::size_t i = a.step_losses.size() - 50; i < a.step_losses.size(); ++i) last += a.step_losses[i] / 50.0;
  MESSAGE("initial loss " << initial << ", final " << last);
  CHECK(last < 0.1 * initial);
  REQUIRE(a.metrics_log.size() == 2);
  CHECK(a.metrics_log[0].rfind("1000 ", 0) == 0);

  cfg.steps = 200;
  cfg.eval_interval = 100;
  const auto b1 = train(cfg, data, vocab, dev);
  const auto b2 = train(cfg, data, vocab, dev);
  CHECK(b1.metrics_log == b2.metrics_log);
  CHECK(b1.params == b2.params);
}

TEST_CASE("dropout is seeded") {
  const auto data = generate_synthetic({SyntheticKind::reverse, 20, 1, 6, 1}, 100);
  const auto vocab = with_target_frequencies(synthetic_vocabulary(20), data);
  auto cfg = small_config(vocab, OrderKind::l2r, 20);
  cfg.model.dropout = 0.2;
  CHECK(train(cfg, data, vocab).params == train(cfg, data, vocab).params);
}

TEST_CASE("adaptive oracle targets are constants") {
  const auto data = generate_synthetic({SyntheticKind::reverse, 20, 2, 6, 4}, 100);
  const auto vocab = with_target_frequencies(synthetic_vocabulary(20), data);
  const auto cfg = small_config(vocab, OrderKind::easy_first, 1);
  const InsertionTransformer<float> model(cfg.model);
  const auto params = model.init();
  Rng rng(3);
  const auto items = make_batch(model, params, cfg, vocab, data, rng);
  std::vector<TrainingSample> live;
  std::vector<OraclePolicy> frozen;
  for (const auto& item : items) {
    const auto set = valid_actions(item.canvas);
    const auto post = action_log_probs(model.forward(params, item.example->source, item.canvas.hypothesis), set);
    frozen.push_back(build_policy({OrderKind::easy_first, &vocab}, item.canvas, set, cfg.tau, post));
  }
  std::vector<TrainingSample> fixed;
  for (std::size_t i = 0; i < items.size(); ++i) {
    live.push_back({&items[i].example->source, &items[i].canvas.hypothesis, &items[i].policy});
    fixed.push_back({&items[i].example->source, &items[i].canvas.hypothesis, &frozen[i]});
  }
  auto g1 = params.zeros_like(), g2 = params.zeros_like();
  model.backward(params, live, g1);
  model.backward(params, fixed, g2);
  CHECK(g1 == g2);
}

TEST_CASE("sweep grid, tie-breaks and errors") {
  const auto data = generate_synthetic({SyntheticKind::copy, 10, 1, 4, 1}, 200);
  const auto dev = generate_synthetic({SyntheticKind::copy, 10, 1, 4, 2}, 10);
  const auto vocab = with_target_frequencies(synthetic_vocabulary(10), data);
  auto cfg = small_config(vocab, OrderKind::l2r, 30);
  const Checkpoint ckpt{cfg.model, train(cfg, data, vocab).params};

  SweepGrid one;
  one.taus = {1.0};
  one.eos_penalties = {0.0};
  one.modes = {DecodeMode::serial};
  const std::vector<TauModel> models{{1.0, &ckpt}};
  const auto r = sweep(one, models, OrderKind::l2r, dev, vocab);
  REQUIRE(r.points.size() == 1);
  REQUIRE(r.best.size() == 1);
  CHECK(r.best[0].tau == 1.0);

  SweepGrid grid;
  CHECK(grid.eos_penalties.size() == 17);
  CHECK(grid.eos_penalties.back() == 8.0);
  grid.taus = {0.5, 1.0};
  grid.eos_penalties = {0.0, 0.5};
  const std::vector<TauModel> twice{{0.5, &ckpt}, {1.0, &ckpt}};
  const auto full = sweep(grid, twice, OrderKind::l2r, dev, vocab);
  CHECK(full.points.size() == 8);
  for (const auto& best : full.best) {
    for (const auto& p : full.points) {
      if (p.mode == best.mode) CHECK(p.bleu <= best.bleu);
    }
    // Same weights at both temperatures: ties resolve to the smaller tau.
    CHECK(best.tau == 0.5);
  }
  CHECK(full.render_table().find("## summary") != std::string::npos);

  const std::vector<TauCheckpoint> missing{{0.5, "/nonexistent/a.ckpt"}};
  try {
    sweep(grid, missing, OrderKind::l2r, dev, vocab);
    FAIL("expected SweepError");
  } catch (const SweepError& e) {
    CHECK(std::string(e.what()).find("tau=0.5") != std::string::npos);
  }
}
