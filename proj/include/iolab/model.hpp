#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "iolab/corpus.hpp"
#include "iolab/oracle.hpp"
#include "iolab/rng.hpp"
#include "iolab/slot_distributions.hpp"

namespace iolab {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an example's loss is NaN or infinite.
class NonFiniteLoss : public ModelError {
 public:
  NonFiniteLoss(std::size_t index, double value);
  std::size_t example_index;
};

struct ModelConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int d_ffn = 128;
  int vocab_size = 0;
  int max_len = 64;
  double dropout = 0.1;
  std::uint64_t seed = 1;
  /// Diagnostic switch; not persisted in checkpoints.
  bool positional_encoding = true;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Named parameter arrays. Biases and vectors are 1 x N rows.
template <typename T>
struct Parameters {
  std::vector<std::string> names;
  std::vector<Matrix<T>> arrays;

  std::size_t size() const { return arrays.size(); }
  std::size_t scalar_count() const;
  const Matrix<T>& get(std::string_view name) const;
  Parameters zeros_like() const;
  void set_zero();
  bool all_finite() const;

  template <typename U>
  Parameters<U> cast() const {
    Parameters<U> out;
    out.names = names;
    out.arrays.reserve(arrays.size());
    for (const auto& a : arrays) out.arrays.push_back(a.template cast<U>());
    return out;
  }

  bool operator==(const Parameters& other) const {
    if (names != other.names || arrays.size() != other.arrays.size()) return false;
    for (std::size_t i = 0; i < arrays.size(); ++i) {
      if (arrays[i].rows() != other.arrays[i].rows() || arrays[i].cols() != other.arrays[i].cols()) return false;
      if (arrays[i] != other.arrays[i]) return false;
    }
    return true;
  }
};

struct AttentionIds {
  int wq, bq, wk, bk, wv, bv, wo, bo;
};
struct NormIds {
  int gain, bias;
};
struct FeedForwardIds {
  int w1, b1, w2, b2;
};
struct EncoderLayerIds {
  NormIds norm1;
  AttentionIds attn;
  NormIds norm2;
  FeedForwardIds ffn;
};
struct DecoderLayerIds {
  NormIds norm1;
  AttentionIds self_attn;
  NormIds norm2;
  AttentionIds cross_attn;
  NormIds norm3;
  FeedForwardIds ffn;
};

/// Array indices into Parameters for every named weight.
struct ParameterLayout {
  int src_embed = 0;
  int tgt_embed = 0;  // tied with the content output matrix
  std::vector<EncoderLayerIds> encoder;
  NormIds encoder_norm{};
  std::vector<DecoderLayerIds> decoder;
  NormIds decoder_norm{};
  int slot_weight = 0;  // 2 d_model x d_model
  int slot_bias = 0;
  int content_bias = 0;
  int location_query = 0;

  std::vector<std::string> names;
  std::vector<std::pair<int, int>> shapes;

  static ParameterLayout build(const ModelConfig& config);
};

/// One training item: the source, a rolled-in hypothesis and its oracle target.
struct TrainingSample {
  const TokenSeq* source = nullptr;
  const TokenSeq* hypothesis = nullptr;
  const OraclePolicy* policy = nullptr;
};

struct BatchLoss {
  double mean = 0.0;
  std::vector<double> per_example;
};

template <typename T>
struct ForwardCache;

/// Encoder / unmasked-decoder transformer with slot and location heads.
///
/// Decoder input is [START] + hypothesis + [END]; adjacent output pairs are
/// concatenated and projected (tanh) to n+1 slot vectors. Content logits are
/// slot vectors times the tied target embedding plus a bias; location logits
/// are slot vectors dotted with a learned query. Layers are pre-norm with a
/// final norm on each stack; the feed-forward activation is tanh-GELU.
template <typename T>
class InsertionTransformer {
 public:
  explicit InsertionTransformer(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return layout_; }

  /// Seeded Xavier-uniform weights, unit norm gains, zero biases.
  Parameters<T> init() const;

  /// Inference forward (no dropout).
  SlotDistributions forward(const Parameters<T>& params, const TokenSeq& source, const TokenSeq& hypothesis) const;

  /// Batch-mean loss (slot KL mean + location KL per example) and its exact
  /// gradient, accumulated into `grads` (which is zeroed first). Dropout masks
  /// are drawn from `dropout_rng` when it is non-null and dropout > 0.
  BatchLoss backward(const Parameters<T>& params, std::span<const TrainingSample> batch, Parameters<T>& grads,
                     Rng* dropout_rng = nullptr) const;

  /// Loss only, same definition as backward().
  BatchLoss loss(const Parameters<T>& params, std::span<const TrainingSample> batch) const;

 private:
  void check_inputs(const TokenSeq& source, const TokenSeq& hypothesis) const;
  void run_forward(const Parameters<T>& params, const TokenSeq& source, const TokenSeq& hypothesis,
                   ForwardCache<T>& cache, Rng* dropout_rng) const;
  double example_loss(const ForwardCache<T>& cache, const OraclePolicy& policy, Matrix<T>* d_content,
                      Matrix<T>* d_location) const;
  void run_backward(const Parameters<T>& params, const ForwardCache<T>& cache, const Matrix<T>& d_content,
                    const Matrix<T>& d_location, Parameters<T>& grads) const;

  ModelConfig config_;
  ParameterLayout layout_;
  Matrix<T> positions_;  // sinusoidal table, (max_len + 2) x d_model
};

extern template class InsertionTransformer<float>;
extern template class InsertionTransformer<double>;
extern template struct Parameters<float>;
extern template struct Parameters<double>;

}  // namespace iolab
