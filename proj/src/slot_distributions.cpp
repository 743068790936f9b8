#include "iolab/slot_distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace iolab {

SlotDistributions::SlotDistributions(int slots, int vocab_size)
    : slots_(slots),
      vocab_size_(vocab_size),
      content_logp_(static_cast<std::size_t>(slots) * static_cast<std::size_t>(vocab_size), 0.0),
      location_logp_(static_cast<std::size_t>(slots), 0.0) {}

SlotDistributions::SlotDistributions(int slots, int vocab_size, std::vector<double> content_logp,
                                     std::vector<double> location_logp)
    : slots_(slots),
      vocab_size_(vocab_size),
      content_logp_(std::move(content_logp)),
      location_logp_(std::move(location_logp)) {
  if (content_logp_.size() != static_cast<std::size_t>(slots) * static_cast<std::size_t>(vocab_size) ||
      location_logp_.size() != static_cast<std::size_t>(slots)) {
    throw std::invalid_argument("SlotDistributions: shape mismatch");
  }
}

double log_sum_exp(const double* values, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, values[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(values[i] - m);
  return m + std::log(s);
}

double SlotDistributions::max_normalization_error() const {
  double err = std::abs(log_sum_exp(location_logp_.data(), location_logp_.size()));
  for (int l = 0; l < slots_; ++l) {
    const double* row = content_logp_.data() + index(l, 0);
    err = std::max(err, std::abs(log_sum_exp(row, static_cast<std::size_t>(vocab_size_))));
  }
  return err;
}

std::vector<double> action_log_probs(const SlotDistributions& dist, const ValidActionSet& actions) {
  if (dist.slots() != actions.slot_count()) throw std::invalid_argument("slot count mismatch");
  std::vector<double> out;
  out.reserve(actions.size());
  for (const auto& a : actions.flat()) out.push_back(dist.joint(a.location, a.content));
  return out;
}

}  // namespace iolab
