#include "iolab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace iolab {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_temperature(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw OracleError("temperature must be positive and finite");
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

double SlotPolicy::probability(TokenId content) const {
  for (std::size_t i = 0; i < contents.size(); ++i) {
    if (contents[i] == content) return std::exp(log_probs[i]);
  }
  return 0.0;
}

OraclePolicy build_policy_from_scores(const ValidActionSet& actions, std::span<const double> scores, double tau) {
  check_temperature(tau);
  if (scores.size() != actions.size()) throw OracleError("score vector does not match the valid action set");

  OraclePolicy policy;
  policy.temperature = tau;
  policy.slots.resize(static_cast<std::size_t>(actions.slot_count()));

  // Pooled reward reference for the location target.
  double pooled_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (!actions.flat()[i].is_eos()) pooled_min = std::min(pooled_min, scores[i]);
  }
  const bool any_content = std::isfinite(pooled_min);
  std::vector<double> slot_mass(policy.slots.size(), kNegInf);

  for (int l = 0; l < actions.slot_count(); ++l) {
    const auto& slot_actions = actions.slot(l);
    auto& sp = policy.slots[static_cast<std::size_t>(l)];
    const std::size_t base = actions.offset(l);
    const std::size_t m = slot_actions.size();

    double slot_min = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) slot_min = std::min(slot_min, scores[base + k]);

    std::vector<double> rewards(m);
    for (std::size_t k = 0; k < m; ++k) rewards[k] = -(scores[base + k] - slot_min) / tau;
    const double norm = log_sum_exp(rewards.data(), m);
    sp.action_log_probs.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
      sp.action_log_probs[k] = rewards[k] - norm;
      const TokenId c = slot_actions[k].content;
      const auto it = std::find(sp.contents.begin(), sp.contents.end(), c);
      if (it == sp.contents.end()) {
        sp.contents.push_back(c);
        sp.log_probs.push_back(sp.action_log_probs[k]);
      } else {
        auto& lp = sp.log_probs[static_cast<std::size_t>(it - sp.contents.begin())];
        lp = log_add(lp, sp.action_log_probs[k]);
      }
      if (any_content && !slot_actions[k].is_eos()) {
        auto& mass = slot_mass[static_cast<std::size_t>(l)];
        mass = log_add(mass, -(scores[base + k] - pooled_min) / tau);
      }
    }
  }

  if (!any_content) std::fill(slot_mass.begin(), slot_mass.end(), 0.0);
  const double total = log_sum_exp(slot_mass.data(), slot_mass.size());
  policy.location_log_probs.resize(slot_mass.size());
  for (std::size_t l = 0; l < slot_mass.size(); ++l) {
    policy.location_log_probs[l] = slot_mass[l] == kNegInf ? kNegInf : slot_mass[l] - total;
  }
  return policy;
}

OraclePolicy build_policy(const OrderSpec& order, const Canvas& canvas, const ValidActionSet& actions, double tau,
                          std::span<const double> posterior) {
  check_temperature(tau);
  const auto scores = score_all(order, canvas, actions, posterior);
  return build_policy_from_scores(actions, scores, tau);
}

SlotLoss slot_kl(const OraclePolicy& policy, const SlotDistributions& model_out) {
  if (model_out.slots() != policy.slot_count()) throw OracleError("model output does not cover every slot");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  SlotLoss loss;
  loss.slot_kl.reserve(policy.slots.size());
  for (int l = 0; l < policy.slot_count(); ++l) {
    const auto& sp = policy.slots[static_cast<std::size_t>(l)];
    double kl = 0.0;
    for (std::size_t i = 0; i < sp.contents.size(); ++i) {
      const double lq = sp.log_probs[i];
      if (lq == kNegInf) continue;
      const double lp = model_out.content(l, sp.contents[i]);
      if (lp == kNegInf) {
        kl = kInf;
        break;
      }
      kl += std::exp(lq) * (lq - lp);
    }
    loss.slot_kl.push_back(std::max(kl, 0.0));
    loss.sequence += loss.slot_kl.back();
  }
  loss.sequence /= static_cast<double>(policy.slots.size());

  for (int l = 0; l < policy.slot_count(); ++l) {
    const double lq = policy.location_log_probs[static_cast<std::size_t>(l)];
    if (lq == kNegInf) continue;
    const double lp = model_out.location(l);
    if (lp == kNegInf) {
      loss.location_kl = kInf;
      break;
    }
    loss.location_kl += std::exp(lq) * (lq - lp);
  }
  loss.location_kl = std::max(loss.location_kl, 0.0);
  return loss;
}

TemperatureDiagnostic temperature_limits_check(const OrderSpec& order, const Canvas& canvas,
                                               const ValidActionSet& actions) {
  if (is_adaptive(order.kind)) throw OracleError("temperature limits are defined for static orders only");
  const auto scores = score_all(order, canvas, actions);
  TemperatureDiagnostic diag;

  const auto cold = build_policy_from_scores(actions, scores, kColdTemperature);
  const auto hot = build_policy_from_scores(actions, scores, kHotTemperature);
  for (int l = 0; l < actions.slot_count(); ++l) {
    const std::size_t base = actions.offset(l);
    const std::size_t m = actions.slot(l).size();
    double slot_min = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) slot_min = std::min(slot_min, scores[base + k]);
    double argmin_mass = 0.0;
    const auto& cold_slot = cold.slots[static_cast<std::size_t>(l)];
    const auto& hot_slot = hot.slots[static_cast<std::size_t>(l)];
    for (std::size_t k = 0; k < m; ++k) {
      if (scores[base + k] == slot_min) argmin_mass += std::exp(cold_slot.action_log_probs[k]);
      diag.max_uniform_deviation = std::max(diag.max_uniform_deviation,
                                            std::abs(std::exp(hot_slot.action_log_probs[k]) - 1.0 / static_cast<double>(m)));
    }
    diag.min_argmin_mass = std::min(diag.min_argmin_mass, argmin_mass);
  }
  diag.one_hot = diag.min_argmin_mass >= 1.0 - 1e-6;
  diag.uniform = diag.max_uniform_deviation <= 1e-4;
  return diag;
}

}  // namespace iolab
