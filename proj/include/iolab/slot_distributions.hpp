#pragma once

#include <cstddef>
#include <vector>

#include "iolab/canvas.hpp"

namespace iolab {

/// Model output for one canvas: per-slot content log-probabilities
/// log p(c | l) and the location log-probabilities log p(l).
class SlotDistributions {
 public:
  SlotDistributions() = default;
  SlotDistributions(int slots, int vocab_size);
  /// Takes row-major (slots x vocab) content log-probs and per-slot location log-probs.
  SlotDistributions(int slots, int vocab_size, std::vector<double> content_logp, std::vector<double> location_logp);

  int slots() const { return slots_; }
  int vocab_size() const { return vocab_size_; }

  double content(int l, TokenId c) const { return content_logp_[index(l, c)]; }
  double& content(int l, TokenId c) { return content_logp_[index(l, c)]; }
  double location(int l) const { return location_logp_[static_cast<std::size_t>(l)]; }
  double& location(int l) { return location_logp_[static_cast<std::size_t>(l)]; }
  /// log p(c, l) = log p(c | l) + log p(l)
  double joint(int l, TokenId c) const { return content(l, c) + location(l); }

  const std::vector<double>& content_logp() const { return content_logp_; }
  const std::vector<double>& location_logp() const { return location_logp_; }

  /// Largest |logsumexp - 0| over content rows and the location vector.
  double max_normalization_error() const;

 private:
  std::size_t index(int l, TokenId c) const {
    return static_cast<std::size_t>(l) * static_cast<std::size_t>(vocab_size_) + static_cast<std::size_t>(c);
  }

  int slots_ = 0;
  int vocab_size_ = 0;
  std::vector<double> content_logp_;
  std::vector<double> location_logp_;
};

/// Joint log p(c, l) for each action of `actions`, in flat() order.
std::vector<double> action_log_probs(const SlotDistributions& dist, const ValidActionSet& actions);

double log_sum_exp(const double* values, std::size_t n);

}  // namespace iolab
