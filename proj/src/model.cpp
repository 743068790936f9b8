#include "iolab/model.hpp"

#include <cmath>
#include <limits>

namespace iolab {

NonFiniteLoss::NonFiniteLoss(std::size_t index, double value)
    : ModelError("non-finite loss " + std::to_string(value) + " at example " + std::to_string(index)),
      example_index(index) {}

void ModelConfig::validate() const {
  if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_ffn < 1 || vocab_size < 1 || max_len < 1) {
    throw ModelError("model dimensions must all be at least 1");
  }
  if (d_model % n_heads != 0) throw ModelError("d_model must be divisible by n_heads");
  if (vocab_size <= special::kEos) throw ModelError("vocab_size must include the special tokens");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ModelError("dropout must lie in [0, 1)");
}

template <typename T>
std::size_t Parameters<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& a : arrays) n += static_cast<std::size_t>(a.size());
  return n;
}

template <typename T>
const Matrix<T>& Parameters<T>::get(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return arrays[i];
  }
  throw ModelError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
Parameters<T> Parameters<T>::zeros_like() const {
  Parameters out;
  out.names = names;
  out.arrays.reserve(arrays.size());
  for (const auto& a : arrays) out.arrays.push_back(Matrix<T>::Zero(a.rows(), a.cols()));
  return out;
}

template <typename T>
void Parameters<T>::set_zero() {
  for (auto& a : arrays) a.setZero();
}

template <typename T>
bool Parameters<T>::all_finite() const {
  for (const auto& a : arrays) {
    if (!a.allFinite()) return false;
  }
  return true;
}

ParameterLayout ParameterLayout::build(const ModelConfig& config) {
  config.validate();
  ParameterLayout layout;
  const int d = config.d_model, f = config.d_ffn, v = config.vocab_size;
  auto add = [&](std::string name, int rows, int cols) {
    layout.names.push_back(std::move(name));
    layout.shapes.emplace_back(rows, cols);
    return static_cast<int>(layout.names.size() - 1);
  };
  auto norm = [&](const std::string& prefix) { return NormIds{add(prefix + ".gain", 1, d), add(prefix + ".bias", 1, d)}; };
  auto attention = [&](const std::string& prefix) {
    AttentionIds ids{};
    ids.wq = add(prefix + ".wq", d, d);
    ids.bq = add(prefix + ".bq", 1, d);
    ids.wk = add(prefix + ".wk", d, d);
    ids.bk = add(prefix + ".bk", 1, d);
    ids.wv = add(prefix + ".wv", d, d);
    ids.bv = add(prefix + ".bv", 1, d);
    ids.wo = add(prefix + ".wo", d, d);
    ids.bo = add(prefix + ".bo", 1, d);
    return ids;
  };
  auto ffn = [&](const std::string& prefix) {
    return FeedForwardIds{add(prefix + ".w1", d, f), add(prefix + ".b1", 1, f), add(prefix + ".w2", f, d),
                          add(prefix + ".b2", 1, d)};
  };

  layout.src_embed = add("src_embed", v, d);
  layout.tgt_embed = add("tgt_embed", v, d);
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    EncoderLayerIds ids{};
    ids.norm1 = norm(p + ".norm1");
    ids.attn = attention(p + ".attn");
    ids.norm2 = norm(p + ".norm2");
    ids.ffn = ffn(p + ".ffn");
    layout.encoder.push_back(ids);
  }
  layout.encoder_norm = norm("encoder.norm");
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string p = "decoder." + std::to_string(l);
    DecoderLayerIds ids{};
    ids.norm1 = norm(p + ".norm1");
    ids.self_attn = attention(p + ".self_attn");
    ids.norm2 = norm(p + ".norm2");
    ids.cross_attn = attention(p + ".cross_attn");
    ids.norm3 = norm(p + ".norm3");
    ids.ffn = ffn(p + ".ffn");
    layout.decoder.push_back(ids);
  }
  layout.decoder_norm = norm("decoder.norm");
  layout.slot_weight = add("slot.weight", 2 * d, d);
  layout.slot_bias = add("slot.bias", 1, d);
  layout.content_bias = add("content.bias", 1, v);
  layout.location_query = add("location.query", 1, d);
  return layout;
}

// ---------------------------------------------------------------------------
// Building blocks

namespace {

constexpr double kNormEps = 1e-5;

template <typename T>
using Column = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct NormCache {
  Matrix<T> xhat;
  Column<T> rstd;
};

template <typename T>
struct AttentionCache {
  Matrix<T> xq, xkv, q, k, v, context;
  std::vector<Matrix<T>> probs;
};

template <typename T>
struct FeedForwardCache {
  Matrix<T> x, pre, act;
};

template <typename T>
void add_row(Matrix<T>& m, const Matrix<T>& row) {
  m.rowwise() += row.row(0);
}

template <typename T>
Matrix<T> norm_forward(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias, NormCache<T>& c) {
  const auto n = x.rows();
  c.xhat.resize(n, x.cols());
  c.rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).mean();
    c.xhat.row(i) = x.row(i).array() - mean;
    const T var = c.xhat.row(i).squaredNorm() / static_cast<T>(x.cols());
    c.rstd(i) = T(1) / std::sqrt(var + static_cast<T>(kNormEps));
    c.xhat.row(i) *= c.rstd(i);
  }
  Matrix<T> y = (c.xhat.array().rowwise() * gain.row(0).array()).matrix();
  add_row(y, bias);
  return y;
}

template <typename T>
Matrix<T> norm_backward(const Matrix<T>& dy, const Matrix<T>& gain, const NormCache<T>& c, Matrix<T>& dgain,
                        Matrix<T>& dbias) {
  dgain.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  Matrix<T> dxhat = (dy.array().rowwise() * gain.row(0).array()).matrix();
  const T inv_d = T(1) / static_cast<T>(dy.cols());
  Matrix<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const T m1 = dxhat.row(i).sum() * inv_d;
    const T m2 = dxhat.row(i).dot(c.xhat.row(i)) * inv_d;
    dx.row(i) = c.rstd(i) * (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2).matrix();
  }
  return dx;
}

template <typename T>
void softmax_rows(Matrix<T>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const T mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp().matrix();
    m.row(i) /= m.row(i).sum();
  }
}

template <typename T>
void log_softmax_rows(Matrix<T>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const T mx = m.row(i).maxCoeff();
    const T lse = mx + std::log((m.row(i).array() - mx).exp().sum());
    m.row(i).array() -= lse;
  }
}

template <typename T>
Matrix<T> attention_forward(const Parameters<T>& p, const AttentionIds& ids, const Matrix<T>& xq, const Matrix<T>& xkv,
                            int heads, AttentionCache<T>& c) {
  const auto& a = p.arrays;
  c.xq = xq;
  c.xkv = xkv;
  c.q.noalias() = xq * a[ids.wq];
  add_row(c.q, a[ids.bq]);
  c.k.noalias() = xkv * a[ids.wk];
  add_row(c.k, a[ids.bk]);
  c.v.noalias() = xkv * a[ids.wv];
  add_row(c.v, a[ids.bv]);
  const auto dk = c.q.cols() / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dk));
  c.probs.resize(static_cast<std::size_t>(heads));
  c.context.resize(xq.rows(), c.q.cols());
  for (int h = 0; h < heads; ++h) {
    auto& pr = c.probs[static_cast<std::size_t>(h)];
    pr.noalias() = c.q.middleCols(h * dk, dk) * c.k.middleCols(h * dk, dk).transpose();
    pr *= scale;
    softmax_rows(pr);
    c.context.middleCols(h * dk, dk).noalias() = pr * c.v.middleCols(h * dk, dk);
  }
  Matrix<T> out;
  out.noalias() = c.context * a[ids.wo];
  add_row(out, a[ids.bo]);
  return out;
}

// Accumulates into dxq and dxkv (which may alias for self-attention).
template <typename T>
void attention_backward(const Matrix<T>& dout, const Parameters<T>& p, const AttentionIds& ids,
                        const AttentionCache<T>& c, int heads, Parameters<T>& g, Matrix<T>& dxq, Matrix<T>& dxkv) {
  const auto& a = p.arrays;
  auto& ga = g.arrays;
  ga[ids.wo].noalias() += c.context.transpose() * dout;
  ga[ids.bo].row(0) += dout.colwise().sum();
  Matrix<T> dctx;
  dctx.noalias() = dout * a[ids.wo].transpose();

  const auto dk = c.q.cols() / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dk));
  Matrix<T> dq(c.q.rows(), c.q.cols()), dkm(c.k.rows(), c.k.cols()), dv(c.v.rows(), c.v.cols());
  for (int h = 0; h < heads; ++h) {
    const auto& pr = c.probs[static_cast<std::size_t>(h)];
    Matrix<T> dp;
    dp.noalias() = dctx.middleCols(h * dk, dk) * c.v.middleCols(h * dk, dk).transpose();
    dv.middleCols(h * dk, dk).noalias() = pr.transpose() * dctx.middleCols(h * dk, dk);
    Matrix<T> ds = pr.cwiseProduct(dp);
    const Column<T> row_sums = ds.rowwise().sum();
    ds -= (pr.array().colwise() * row_sums.array()).matrix();
    ds *= scale;
    dq.middleCols(h * dk, dk).noalias() = ds * c.k.middleCols(h * dk, dk);
    dkm.middleCols(h * dk, dk).noalias() = ds.transpose() * c.q.middleCols(h * dk, dk);
  }
  ga[ids.wq].noalias() += c.xq.transpose() * dq;
  ga[ids.bq].row(0) += dq.colwise().sum();
  ga[ids.wk].noalias() += c.xkv.transpose() * dkm;
  ga[ids.bk].row(0) += dkm.colwise().sum();
  ga[ids.wv].noalias() += c.xkv.transpose() * dv;
  ga[ids.bv].row(0) += dv.colwise().sum();
  dxq.noalias() += dq * a[ids.wq].transpose();
  dxkv.noalias() += dkm * a[ids.wk].transpose();
  dxkv.noalias() += dv * a[ids.wv].transpose();
}

template <typename T>
constexpr T kGeluC = static_cast<T>(0.7978845608028654);  // sqrt(2 / pi)
template <typename T>
constexpr T kGeluA = static_cast<T>(0.044715);

template <typename T>
Matrix<T> ffn_forward(const Parameters<T>& p, const FeedForwardIds& ids, const Matrix<T>& x, FeedForwardCache<T>& c) {
  const auto& a = p.arrays;
  c.x = x;
  c.pre.noalias() = x * a[ids.w1];
  add_row(c.pre, a[ids.b1]);
  c.act = c.pre.unaryExpr([](T z) {
    return T(0.5) * z * (T(1) + std::tanh(kGeluC<T> * (z + kGeluA<T> * z * z * z)));
  });
  Matrix<T> out;
  out.noalias() = c.act * a[ids.w2];
  add_row(out, a[ids.b2]);
  return out;
}

template <typename T>
Matrix<T> ffn_backward(const Matrix<T>& dout, const Parameters<T>& p, const FeedForwardIds& ids,
                       const FeedForwardCache<T>& c, Parameters<T>& g) {
  const auto& a = p.arrays;
  auto& ga = g.arrays;
  ga[ids.w2].noalias() += c.act.transpose() * dout;
  ga[ids.b2].row(0) += dout.colwise().sum();
  Matrix<T> dact;
  dact.noalias() = dout * a[ids.w2].transpose();
  const Matrix<T> slope = c.pre.unaryExpr([](T z) {
    const T t = std::tanh(kGeluC<T> * (z + kGeluA<T> * z * z * z));
    return T(0.5) * (T(1) + t) + T(0.5) * z * (T(1) - t * t) * kGeluC<T> * (T(1) + T(3) * kGeluA<T> * z * z);
  });
  const Matrix<T> dpre = dact.cwiseProduct(slope);
  ga[ids.w1].noalias() += c.x.transpose() * dpre;
  ga[ids.b1].row(0) += dpre.colwise().sum();
  Matrix<T> dx;
  dx.noalias() = dpre * a[ids.w1].transpose();
  return dx;
}

template <typename T>
Matrix<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return {};
  Matrix<T> mask(rows, cols);
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng->uniform() < rate ? T(0) : keep;
  return mask;
}

template <typename T>
void apply_mask(Matrix<T>& x, const Matrix<T>& mask) {
  if (mask.size() != 0) x.array() *= mask.array();
}

}  // namespace

template <typename T>
struct EncoderLayerCache {
  NormCache<T> norm1, norm2;
  AttentionCache<T> attn;
  FeedForwardCache<T> ffn;
  Matrix<T> mask1, mask2;
};

template <typename T>
struct DecoderLayerCache {
  NormCache<T> norm1, norm2, norm3;
  AttentionCache<T> self_attn, cross_attn;
  FeedForwardCache<T> ffn;
  Matrix<T> mask1, mask2, mask3;
};

template <typename T>
struct ForwardCache {
  TokenSeq src_tokens, dec_tokens;
  Matrix<T> src_mask, dec_mask;
  std::vector<EncoderLayerCache<T>> encoder;
  NormCache<T> encoder_norm;
  Matrix<T> memory;
  std::vector<DecoderLayerCache<T>> decoder;
  NormCache<T> decoder_norm;
  Matrix<T> pairs;          // (n+1) x 2d
  Matrix<T> slots;          // (n+1) x d, after tanh
  Matrix<T> content_logp;   // (n+1) x V
  Matrix<T> location_logp;  // (n+1) x 1
};

namespace {

template <typename T>
Matrix<T> positional_table(int length, int d) {
  Matrix<T> pe(length, d);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / d);
      const double angle = pos * rate;
      pe(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
Matrix<T> embed(const Matrix<T>& table, const TokenSeq& tokens, const Matrix<T>* positions) {
  const auto d = table.cols();
  const auto n = static_cast<Eigen::Index>(tokens.size());
  Matrix<T> x(n, d);
  const T scale = std::sqrt(static_cast<T>(d));
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = table.row(tokens[static_cast<std::size_t>(i)]) * scale;
  if (positions) x += positions->topRows(n);
  return x;
}

template <typename T>
void embed_backward(const Matrix<T>& dx, const TokenSeq& tokens, Matrix<T>& dtable) {
  const T scale = std::sqrt(static_cast<T>(dx.cols()));
  for (std::size_t i = 0; i < tokens.size(); ++i) dtable.row(tokens[i]) += dx.row(static_cast<Eigen::Index>(i)) * scale;
}

}  // namespace

// ---------------------------------------------------------------------------
// InsertionTransformer

template <typename T>
InsertionTransformer<T>::InsertionTransformer(ModelConfig config)
    : config_(config),
      layout_(ParameterLayout::build(config)),
      positions_(positional_table<T>(config.max_len + 2, config.d_model)) {}

template <typename T>
Parameters<T> InsertionTransformer<T>::init() const {
  Rng rng(derive_seed(config_.seed, 0x1417));
  Parameters<T> p;
  p.names = layout_.names;
  const double embed_bound = std::sqrt(3.0 / config_.d_model);
  for (std::size_t i = 0; i < layout_.names.size(); ++i) {
    const auto [rows, cols] = layout_.shapes[i];
    const auto& name = layout_.names[i];
    Matrix<T> m = Matrix<T>::Zero(rows, cols);
    const bool is_gain = name.ends_with(".gain");
    const bool is_bias = name.ends_with(".bias") || name.ends_with(".bq") || name.ends_with(".bk") ||
                         name.ends_with(".bv") || name.ends_with(".bo") || name.ends_with(".b1") ||
                         name.ends_with(".b2");
    if (is_gain) {
      m.setOnes();
    } else if (!is_bias) {
      double bound = std::sqrt(6.0 / (rows + cols));
      if (name == "src_embed" || name == "tgt_embed" || name == "location.query") bound = embed_bound;
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<T>(rng.uniform(-bound, bound));
    }
    p.arrays.push_back(std::move(m));
  }
  return p;
}

template <typename T>
void InsertionTransformer<T>::check_inputs(const TokenSeq& source, const TokenSeq& hypothesis) const {
  if (source.empty()) throw ModelError("empty source");
  if (static_cast<int>(source.size()) > config_.max_len || static_cast<int>(hypothesis.size()) > config_.max_len) {
    throw ModelError("sequence longer than max_len " + std::to_string(config_.max_len));
  }
  for (const auto* seq : {&source, &hypothesis}) {
    for (TokenId t : *seq) {
      if (t < 0 || t >= config_.vocab_size) throw ModelError("token id " + std::to_string(t) + " outside vocabulary");
    }
  }
}

template <typename T>
void InsertionTransformer<T>::run_forward(const Parameters<T>& params, const TokenSeq& source,
                                          const TokenSeq& hypothesis, ForwardCache<T>& c, Rng* rng) const {
  check_inputs(source, hypothesis);
  const auto& a = params.arrays;
  const int heads = config_.n_heads;
  const double rate = config_.dropout;

  // Encoder over source [END]; the end marker gives attention something to
  // weigh repeated tokens against, so counts are recoverable.
  c.src_tokens = source;
  c.src_tokens.push_back(special::kEnd);
  Matrix<T> x = embed(a[layout_.src_embed], c.src_tokens, config_.positional_encoding ? &positions_ : nullptr);
  c.src_mask = dropout_mask<T>(x.rows(), x.cols(), rate, rng);
  apply_mask(x, c.src_mask);
  c.encoder.resize(layout_.encoder.size());
  for (std::size_t l = 0; l < layout_.encoder.size(); ++l) {
    const auto& ids = layout_.encoder[l];
    auto& lc = c.encoder[l];
    Matrix<T> h = norm_forward(x, a[ids.norm1.gain], a[ids.norm1.bias], lc.norm1);
    Matrix<T> att = attention_forward(params, ids.attn, h, h, heads, lc.attn);
    lc.mask1 = dropout_mask<T>(att.rows(), att.cols(), rate, rng);
    apply_mask(att, lc.mask1);
    x += att;
    h = norm_forward(x, a[ids.norm2.gain], a[ids.norm2.bias], lc.norm2);
    Matrix<T> ff = ffn_forward(params, ids.ffn, h, lc.ffn);
    lc.mask2 = dropout_mask<T>(ff.rows(), ff.cols(), rate, rng);
    apply_mask(ff, lc.mask2);
    x += ff;
  }
  c.memory = norm_forward(x, a[layout_.encoder_norm.gain], a[layout_.encoder_norm.bias], c.encoder_norm);

  // Decoder over [START] hyp [END], no causal mask
  c.dec_tokens.clear();
  c.dec_tokens.reserve(hypothesis.size() + 2);
  c.dec_tokens.push_back(special::kStart);
  c.dec_tokens.insert(c.dec_tokens.end(), hypothesis.begin(), hypothesis.end());
  c.dec_tokens.push_back(special::kEnd);
  Matrix<T> y = embed(a[layout_.tgt_embed], c.dec_tokens, config_.positional_encoding ? &positions_ : nullptr);
  c.dec_mask = dropout_mask<T>(y.rows(), y.cols(), rate, rng);
  apply_mask(y, c.dec_mask);
  c.decoder.resize(layout_.decoder.size());
  for (std::size_t l = 0; l < layout_.decoder.size(); ++l) {
    const auto& ids = layout_.decoder[l];
    auto& lc = c.decoder[l];
    Matrix<T> h = norm_forward(y, a[ids.norm1.gain], a[ids.norm1.bias], lc.norm1);
    Matrix<T> att = attention_forward(params, ids.self_attn, h, h, heads, lc.self_attn);
    lc.mask1 = dropout_mask<T>(att.rows(), att.cols(), rate, rng);
    apply_mask(att, lc.mask1);
    y += att;
    h = norm_forward(y, a[ids.norm2.gain], a[ids.norm2.bias], lc.norm2);
    att = attention_forward(params, ids.cross_attn, h, c.memory, heads, lc.cross_attn);
    lc.mask2 = dropout_mask<T>(att.rows(), att.cols(), rate, rng);
    apply_mask(att, lc.mask2);
    y += att;
    h = norm_forward(y, a[ids.norm3.gain], a[ids.norm3.bias], lc.norm3);
    Matrix<T> ff = ffn_forward(params, ids.ffn, h, lc.ffn);
    lc.mask3 = dropout_mask<T>(ff.rows(), ff.cols(), rate, rng);
    apply_mask(ff, lc.mask3);
    y += ff;
  }
  const Matrix<T> out = norm_forward(y, a[layout_.decoder_norm.gain], a[layout_.decoder_norm.bias], c.decoder_norm);

  // Slots: adjacent output pairs -> projection -> tanh
  const auto d = out.cols();
  const auto n_slots = out.rows() - 1;
  c.pairs.resize(n_slots, 2 * d);
  c.pairs.leftCols(d) = out.topRows(n_slots);
  c.pairs.rightCols(d) = out.bottomRows(n_slots);
  Matrix<T> z;
  z.noalias() = c.pairs * a[layout_.slot_weight];
  add_row(z, a[layout_.slot_bias]);
  c.slots = z.array().tanh().matrix();

  c.content_logp.noalias() = c.slots * a[layout_.tgt_embed].transpose();
  add_row(c.content_logp, a[layout_.content_bias]);
  log_softmax_rows(c.content_logp);

  c.location_logp.noalias() = c.slots * a[layout_.location_query].transpose();
  Matrix<T> loc_row = c.location_logp.transpose();
  log_softmax_rows(loc_row);
  c.location_logp = loc_row.transpose();
}

template <typename T>
SlotDistributions InsertionTransformer<T>::forward(const Parameters<T>& params, const TokenSeq& source,
                                                   const TokenSeq& hypothesis) const {
  ForwardCache<T> cache;
  run_forward(params, source, hypothesis, cache, nullptr);
  const int slots = static_cast<int>(cache.content_logp.rows());
  const int v = static_cast<int>(cache.content_logp.cols());
  std::vector<double> content(cache.content_logp.data(), cache.content_logp.data() + cache.content_logp.size());
  std::vector<double> location(cache.location_logp.data(), cache.location_logp.data() + cache.location_logp.size());
  return SlotDistributions(slots, v, std::move(content), std::move(location));
}

template <typename T>
double InsertionTransformer<T>::example_loss(const ForwardCache<T>& c, const OraclePolicy& policy,
                                             Matrix<T>* d_content, Matrix<T>* d_location) const {
  const auto n_slots = c.content_logp.rows();
  if (policy.slot_count() != n_slots) throw ModelError("oracle policy does not match the hypothesis slots");
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  const double inv_slots = 1.0 / static_cast<double>(n_slots);

  if (d_content) *d_content = c.content_logp.array().exp().matrix() * static_cast<T>(inv_slots);
  if (d_location) *d_location = c.location_logp.array().exp().matrix();

  double content_kl = 0.0;
  for (Eigen::Index l = 0; l < n_slots; ++l) {
    const auto& sp = policy.slots[static_cast<std::size_t>(l)];
    for (std::size_t i = 0; i < sp.contents.size(); ++i) {
      const double lq = sp.log_probs[i];
      if (lq == kNegInf) continue;
      const double q = std::exp(lq);
      content_kl += q * (lq - static_cast<double>(c.content_logp(l, sp.contents[i])));
      if (d_content) (*d_content)(l, sp.contents[i]) -= static_cast<T>(q * inv_slots);
    }
  }
  double location_kl = 0.0;
  for (Eigen::Index l = 0; l < n_slots; ++l) {
    const double lq = policy.location_log_probs[static_cast<std::size_t>(l)];
    if (lq == kNegInf) continue;
    const double q = std::exp(lq);
    location_kl += q * (lq - static_cast<double>(c.location_logp(l, 0)));
    if (d_location) (*d_location)(l, 0) -= static_cast<T>(q);
  }
  return content_kl * inv_slots + location_kl;
}

template <typename T>
void InsertionTransformer<T>::run_backward(const Parameters<T>& params, const ForwardCache<T>& c,
                                           const Matrix<T>& d_content, const Matrix<T>& d_location,
                                           Parameters<T>& g) const {
  const auto& a = params.arrays;
  auto& ga = g.arrays;
  const int heads = config_.n_heads;

  // Output heads
  ga[layout_.tgt_embed].noalias() += d_content.transpose() * c.slots;
  ga[layout_.content_bias].row(0) += d_content.colwise().sum();
  ga[layout_.location_query].noalias() += d_location.transpose() * c.slots;
  Matrix<T> dslots;
  dslots.noalias() = d_content * a[layout_.tgt_embed];
  dslots.noalias() += d_location * a[layout_.location_query];
  const Matrix<T> dz = dslots.cwiseProduct((T(1) - c.slots.array().square()).matrix());
  ga[layout_.slot_weight].noalias() += c.pairs.transpose() * dz;
  ga[layout_.slot_bias].row(0) += dz.colwise().sum();
  Matrix<T> dpairs;
  dpairs.noalias() = dz * a[layout_.slot_weight].transpose();
  const auto d = c.slots.cols();
  const auto n_slots = c.slots.rows();
  Matrix<T> dout = Matrix<T>::Zero(n_slots + 1, d);
  dout.topRows(n_slots) += dpairs.leftCols(d);
  dout.bottomRows(n_slots) += dpairs.rightCols(d);

  // Decoder
  Matrix<T> dy = norm_backward(dout, a[layout_.decoder_norm.gain], c.decoder_norm, ga[layout_.decoder_norm.gain],
                               ga[layout_.decoder_norm.bias]);
  Matrix<T> dmemory = Matrix<T>::Zero(c.memory.rows(), c.memory.cols());
  for (std::size_t l = layout_.decoder.size(); l-- > 0;) {
    const auto& ids = layout_.decoder[l];
    const auto& lc = c.decoder[l];

    Matrix<T> dbranch = dy;
    apply_mask(dbranch, lc.mask3);
    Matrix<T> dh = ffn_backward(dbranch, params, ids.ffn, lc.ffn, g);
    dy += norm_backward(dh, a[ids.norm3.gain], lc.norm3, ga[ids.norm3.gain], ga[ids.norm3.bias]);

    dbranch = dy;
    apply_mask(dbranch, lc.mask2);
    dh = Matrix<T>::Zero(dy.rows(), dy.cols());
    attention_backward(dbranch, params, ids.cross_attn, lc.cross_attn, heads, g, dh, dmemory);
    dy += norm_backward(dh, a[ids.norm2.gain], lc.norm2, ga[ids.norm2.gain], ga[ids.norm2.bias]);

    dbranch = dy;
    apply_mask(dbranch, lc.mask1);
    dh = Matrix<T>::Zero(dy.rows(), dy.cols());
    attention_backward(dbranch, params, ids.self_attn, lc.self_attn, heads, g, dh, dh);
    dy += norm_backward(dh, a[ids.norm1.gain], lc.norm1, ga[ids.norm1.gain], ga[ids.norm1.bias]);
  }
  apply_mask(dy, c.dec_mask);
  embed_backward(dy, c.dec_tokens, ga[layout_.tgt_embed]);

  // Encoder
  Matrix<T> dx = norm_backward(dmemory, a[layout_.encoder_norm.gain], c.encoder_norm, ga[layout_.encoder_norm.gain],
                               ga[layout_.encoder_norm.bias]);
  for (std::size_t l = layout_.encoder.size(); l-- > 0;) {
    const auto& ids = layout_.encoder[l];
    const auto& lc = c.encoder[l];

    Matrix<T> dbranch = dx;
    apply_mask(dbranch, lc.mask2);
    Matrix<T> dh = ffn_backward(dbranch, params, ids.ffn, lc.ffn, g);
    dx += norm_backward(dh, a[ids.norm2.gain], lc.norm2, ga[ids.norm2.gain], ga[ids.norm2.bias]);

    dbranch = dx;
    apply_mask(dbranch, lc.mask1);
    dh = Matrix<T>::Zero(dx.rows(), dx.cols());
    attention_backward(dbranch, params, ids.attn, lc.attn, heads, g, dh, dh);
    dx += norm_backward(dh, a[ids.norm1.gain], lc.norm1, ga[ids.norm1.gain], ga[ids.norm1.bias]);
  }
  apply_mask(dx, c.src_mask);
  embed_backward(dx, c.src_tokens, ga[layout_.src_embed]);
}

template <typename T>
BatchLoss InsertionTransformer<T>::backward(const Parameters<T>& params, std::span<const TrainingSample> batch,
                                            Parameters<T>& grads, Rng* dropout_rng) const {
  if (batch.empty()) throw ModelError("empty batch");
  if (grads.size() != params.size()) grads = params.zeros_like();
  grads.set_zero();
  BatchLoss result;
  result.per_example.reserve(batch.size());
  const T inv_batch = static_cast<T>(1.0 / static_cast<double>(batch.size()));
  ForwardCache<T> cache;
  Matrix<T> d_content, d_location;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    run_forward(params, *s.source, *s.hypothesis, cache, dropout_rng);
    const double value = example_loss(cache, *s.policy, &d_content, &d_location);
    if (!std::isfinite(value)) throw NonFiniteLoss(i, value);
    result.per_example.push_back(value);
    result.mean += value;
    d_content *= inv_batch;
    d_location *= inv_batch;
    run_backward(params, cache, d_content, d_location, grads);
  }
  result.mean /= static_cast<double>(batch.size());
  return result;
}

template <typename T>
BatchLoss InsertionTransformer<T>::loss(const Parameters<T>& params, std::span<const TrainingSample> batch) const {
  BatchLoss result;
  ForwardCache<T> cache;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    run_forward(params, *batch[i].source, *batch[i].hypothesis, cache, nullptr);
    const double value = example_loss(cache, *batch[i].policy, nullptr, nullptr);
    result.per_example.push_back(value);
    result.mean += value;
  }
  if (!batch.empty()) result.mean /= static_cast<double>(batch.size());
  return result;
}

template struct Parameters<float>;
template struct Parameters<double>;
template class InsertionTransformer<float>;
template class InsertionTransformer<double>;

}  // namespace iolab
