#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "iolab/canvas.hpp"
#include "iolab/orders.hpp"
#include "iolab/slot_distributions.hpp"

namespace iolab {

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Target distribution over one slot's valid contents.
struct SlotPolicy {
  /// Distinct contents in first-appearance order, with their merged
  /// log-probabilities (duplicate positions sum their mass).
  std::vector<TokenId> contents;
  std::vector<double> log_probs;
  /// Per valid action of the slot, same order as ValidActionSet::slot(l).
  std::vector<double> action_log_probs;

  double probability(TokenId content) const;
};

/// Temperature-softmax oracle built from order scores: per-slot content
/// targets plus a location target.
///
/// The location target is each slot's share of the pooled reward mass
/// exp(-O(a)/tau) over content actions; once no content action remains, it is
/// uniform over the slots.
struct OraclePolicy {
  std::vector<SlotPolicy> slots;
  std::vector<double> location_log_probs;
  double temperature = 1.0;

  int slot_count() const { return static_cast<int>(slots.size()); }
};

/// Per-slot KL(q_l || p(.|l)), their mean over slots, and the location KL.
struct SlotLoss {
  std::vector<double> slot_kl;
  double sequence = 0.0;
  double location_kl = 0.0;

  /// The training objective: sequence + location_kl.
  double total() const { return sequence + location_kl; }
};

/// Throws OracleError when tau <= 0 (or not finite).
OraclePolicy build_policy(const OrderSpec& order, const Canvas& canvas, const ValidActionSet& actions, double tau,
                          std::span<const double> posterior = {});

/// Same, from precomputed order scores in flat() order.
OraclePolicy build_policy_from_scores(const ValidActionSet& actions, std::span<const double> scores, double tau);

/// +inf when the model puts zero probability where the oracle has mass.
SlotLoss slot_kl(const OraclePolicy& policy, const SlotDistributions& model_out);

struct TemperatureDiagnostic {
  /// Smallest per-slot mass on the slot's argmin set at tau = 1e-3.
  double min_argmin_mass = 1.0;
  /// Largest |q(a) - 1/m| over slots at tau = 1e6.
  double max_uniform_deviation = 0.0;
  bool one_hot = false;
  bool uniform = false;

  bool ok() const { return one_hot && uniform; }
};

inline constexpr double kColdTemperature = 1e-3;
inline constexpr double kHotTemperature = 1e6;

/// Checks the tau -> 0 and tau -> inf limits for a static order.
TemperatureDiagnostic temperature_limits_check(const OrderSpec& order, const Canvas& canvas,
                                               const ValidActionSet& actions);

}  // namespace iolab
