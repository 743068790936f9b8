#include "iolab/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace iolab {

std::string_view to_string(DecodeMode mode) { return mode == DecodeMode::serial ? "serial" : "parallel"; }

DecodeMode parse_decode_mode(std::string_view name) {
  if (name == "serial") return DecodeMode::serial;
  if (name == "parallel") return DecodeMode::parallel;
  throw std::invalid_argument("unknown decode mode '" + std::string(name) + "' (serial, parallel)");
}

std::string_view to_string(DecodeStatus status) {
  switch (status) {
    case DecodeStatus::finished: return "finished";
    case DecodeStatus::max_steps: return "max_steps";
    case DecodeStatus::max_len: return "max_len";
  }
  return "?";
}

DecodeConfig DecodeConfig::defaults(DecodeMode mode, std::size_t source_length, double eos_penalty) {
  DecodeConfig cfg;
  cfg.mode = mode;
  cfg.eos_penalty = eos_penalty;
  cfg.max_len = 2 * static_cast<int>(source_length) + 16;
  cfg.max_steps = mode == DecodeMode::serial
                      ? cfg.max_len + 8
                      : static_cast<int>(std::ceil(std::log2(static_cast<double>(cfg.max_len)))) + 8;
  return cfg;
}

void DecodeConfig::validate() const {
  if (max_steps < 1) throw std::invalid_argument("max_steps must be at least 1");
  if (max_len < 1) throw std::invalid_argument("max_len must be at least 1");
  if (!(eos_penalty >= 0.0)) throw std::invalid_argument("eos_penalty must be non-negative");
}

namespace {

bool selectable(TokenId c) { return c == special::kEos || c == special::kUnk || !Vocabulary::is_special(c); }

}  // namespace

SlotChoice best_content(const SlotDistributions& dist, int slot, double eos_penalty) {
  SlotChoice best;
  for (TokenId c = 0; c < dist.vocab_size(); ++c) {
    if (!selectable(c)) continue;
    double s = dist.content(slot, c);
    if (c == special::kEos) s -= eos_penalty;
    if (s > best.score) best = {c, s};
  }
  return best;
}

InsertionAction joint_argmax(const SlotDistributions& dist, double eos_penalty) {
  InsertionAction best{special::kEos, 0, std::nullopt};
  double best_score = -std::numeric_limits<double>::infinity();
  for (int l = 0; l < dist.slots(); ++l) {
    const auto choice = best_content(dist, l, eos_penalty);
    const double s = choice.score + dist.location(l);
    if (s > best_score) {
      best_score = s;
      best = {choice.content, l, std::nullopt};
    }
  }
  return best;
}

DecodeResult decode_serial(const InsertionScorer& scorer, const TokenSeq& source, const DecodeConfig& cfg) {
  cfg.validate();
  const int max_len = std::min(cfg.max_len, scorer.max_hypothesis_length());
  DecodeResult result;
  auto& trace = result.trace;
  trace.status = DecodeStatus::max_steps;
  Canvas canvas;
  for (int step = 0; step < cfg.max_steps; ++step) {
    if (canvas.length() >= max_len) {
      trace.status = DecodeStatus::max_len;
      break;
    }
    const auto dist = scorer.predict(source, canvas.hypothesis);
    const auto action = joint_argmax(dist, cfg.eos_penalty);
    DecodeStep rec;
    rec.before = canvas.hypothesis;
    if (action.is_eos()) {
      rec.finished_slots.push_back(action.location);
      rec.after = canvas.hypothesis;
      trace.steps.push_back(std::move(rec));
      trace.status = DecodeStatus::finished;
      break;
    }
    rec.insertions.push_back(action);
    canvas = iolab::apply(canvas, rec.insertions);
    rec.after = canvas.hypothesis;
    trace.steps.push_back(std::move(rec));
  }
  result.output = canvas.hypothesis;
  return result;
}

DecodeResult decode_parallel(const InsertionScorer& scorer, const TokenSeq& source, const DecodeConfig& cfg) {
  cfg.validate();
  const int max_len = std::min(cfg.max_len, scorer.max_hypothesis_length());
  DecodeResult result;
  auto& trace = result.trace;
  trace.status = DecodeStatus::max_steps;
  Canvas canvas;
  for (int step = 0; step < cfg.max_steps; ++step) {
    if (canvas.length() >= max_len) {
      trace.status = DecodeStatus::max_len;
      break;
    }
    const auto dist = scorer.predict(source, canvas.hypothesis);
    DecodeStep rec;
    rec.before = canvas.hypothesis;
    for (int l = 0; l < dist.slots(); ++l) {
      const auto choice = best_content(dist, l, cfg.eos_penalty);
      if (choice.content == special::kEos) {
        rec.finished_slots.push_back(l);
      } else {
        rec.insertions.push_back({choice.content, l, std::nullopt});
      }
    }
    const bool done = rec.insertions.empty();
    const auto room = static_cast<std::size_t>(max_len - canvas.length());
    if (rec.insertions.size() > room) rec.insertions.resize(room);
    canvas = iolab::apply(canvas, rec.insertions);
    rec.after = canvas.hypothesis;
    trace.steps.push_back(std::move(rec));
    if (done) {
      trace.status = DecodeStatus::finished;
      break;
    }
  }
  result.output = canvas.hypothesis;
  return result;
}

DecodeResult decode(const InsertionScorer& scorer, const TokenSeq& source, const DecodeConfig& cfg) {
  return cfg.mode == DecodeMode::serial ? decode_serial(scorer, source, cfg) : decode_parallel(scorer, source, cfg);
}

std::string render_trace(const DecodeTrace& trace, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto& step = trace.steps[i];
    out += std::to_string(i + 1);
    out += "\tk=";
    out += std::to_string(step.insertions.size());
    out += '\t';
    std::vector<int> locations;
    for (const auto& a : step.insertions) locations.push_back(a.location);
    std::sort(locations.begin(), locations.end());
    // Walk the pre-insertion canvas; new tokens precede old token l.
    std::size_t next = 0, ins = 0;
    bool first = true;
    auto emit = [&](TokenId t, bool inserted) {
      if (!first) out += ' ';
      first = false;
      if (inserted) out += '[';
      out += vocab.token(t);
      if (inserted) out += ']';
    };
    for (int l = 0; l <= static_cast<int>(step.before.size()); ++l) {
      if (ins < locations.size() && locations[ins] == l) {
        emit(step.after[next++], true);
        ++ins;
      }
      if (l < static_cast<int>(step.before.size())) emit(step.after[next++], false);
    }
    out += '\n';
  }
  return out;
}

}  // namespace iolab
