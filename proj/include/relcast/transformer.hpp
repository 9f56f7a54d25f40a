#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "relcast/error.hpp"
#include "relcast/nn.hpp"
#include "relcast/ops.hpp"

namespace relcast {

/// Index of the largest entry; ties go to the lowest index.
template <class It>
std::size_t argmax_lowest(It begin, It end) {
  std::size_t best = 0, i = 0;
  for (It it = begin; it != end; ++it, ++i)
    if (*it > *(begin + static_cast<std::ptrdiff_t>(best))) best = i;
  return best;
}

inline constexpr double kMaskedScore = -1e9;

template <class T>
Tensor<T> causal_mask(std::size_t n) {
  Tensor<T> m({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m.at(i, j) = static_cast<T>(kMaskedScore);
  return m;
}

/// Scaled dot-product attention with `heads` heads over query rows and
/// key/value rows. Set `capture` to collect each head's weight matrix.
template <class T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  std::size_t heads = 1;
  std::vector<Tensor<T>>* capture = nullptr;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet<T>& params, const std::string& name, std::size_t d_model,
                     std::size_t n_heads, std::mt19937_64& rng)
      : wq(params, name + ".q", d_model, d_model, rng),
        wk(params, name + ".k", d_model, d_model, rng),
        wv(params, name + ".v", d_model, d_model, rng),
        wo(params, name + ".o", d_model, d_model, rng),
        heads(n_heads) {
    if (n_heads == 0 || d_model % n_heads != 0) {
      throw ConfigError("attention: d_model " + std::to_string(d_model) +
                        " is not divisible by " + std::to_string(n_heads) + " heads");
    }
  }

  /// Concatenated per-head context, before the output projection.
  Var<T> context(Tape<T>& tape, const Var<T>& query, const Var<T>& memory,
                 const Tensor<T>* mask) const {
    Var<T> q = wq(tape, query), k = wk(tape, memory), v = wv(tape, memory);
    const std::size_t d = q.cols(), dk = d / heads;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
    std::vector<Var<T>> parts;
    for (std::size_t h = 0; h < heads; ++h) {
      Var<T> qh = heads == 1 ? q : slice_cols(q, h * dk, dk);
      Var<T> kh = heads == 1 ? k : slice_cols(k, h * dk, dk);
      Var<T> vh = heads == 1 ? v : slice_cols(v, h * dk, dk);
      Var<T> scores = scale_by(matmul(qh, transpose(kh)), scale);
      if (mask) scores = add(scores, tape.constant(*mask));
      Var<T> w = softmax(scores);
      if (capture) capture->push_back(w.value());
      parts.push_back(matmul(w, vh));
    }
    return heads == 1 ? parts[0] : concat_cols(parts);
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& query, const Var<T>& memory,
                    const Tensor<T>* mask = nullptr) const {
    return wo(tape, context(tape, query, memory, mask));
  }

 private:
  static Var<T> scale_by(const Var<T>& x, T s) { return relcast::scale(x, s); }
};

/// Pre-norm encoder layer: x + SA(LN x), then x + FFN(LN x).
template <class T>
struct EncoderLayer {
  LayerNorm<T> ln1, ln2;
  MultiHeadAttention<T> attn;
  FeedForward<T> ffn;

  EncoderLayer() = default;
  EncoderLayer(ParameterSet<T>& params, const std::string& name, std::size_t d_model,
               std::size_t heads, std::size_t d_ff, std::mt19937_64& rng)
      : ln1(params, name + ".ln1", d_model),
        ln2(params, name + ".ln2", d_model),
        attn(params, name + ".attn", d_model, heads, rng),
        ffn(params, name + ".ffn", d_model, d_ff, rng) {}

  Var<T> operator()(Tape<T>& tape, Var<T> x, double drop) const {
    Var<T> h = ln1(tape, x);
    x = add(x, dropout(attn(tape, h, h), drop));
    return add(x, dropout(ffn(tape, ln2(tape, x)), drop));
  }
};

/// Pre-norm decoder layer: masked self-attention, cross-attention with
/// Q = LN(D) W^Q and K, V = E W^{K,V}, then the feed-forward block.
template <class T>
struct DecoderLayer {
  LayerNorm<T> ln1, ln2, ln3;
  MultiHeadAttention<T> self_attn, cross_attn;
  FeedForward<T> ffn;

  DecoderLayer() = default;
  DecoderLayer(ParameterSet<T>& params, const std::string& name, std::size_t d_model,
               std::size_t heads, std::size_t d_ff, std::mt19937_64& rng)
      : ln1(params, name + ".ln1", d_model),
        ln2(params, name + ".ln2", d_model),
        ln3(params, name + ".ln3", d_model),
        self_attn(params, name + ".self_attn", d_model, heads, rng),
        cross_attn(params, name + ".cross_attn", d_model, heads, rng),
        ffn(params, name + ".ffn", d_model, d_ff, rng) {}

  Var<T> operator()(Tape<T>& tape, Var<T> y, const Var<T>& memory, double drop) const {
    Tensor<T> mask = causal_mask<T>(y.rows());
    Var<T> h = ln1(tape, y);
    y = add(y, dropout(self_attn(tape, h, h, &mask), drop));
    y = add(y, dropout(cross_attn(tape, ln2(tape, y), memory), drop));
    return add(y, dropout(ffn(tape, ln3(tape, y)), drop));
  }
};

/// Sinusoidal table over 2 * max_len + 2 slots. Slot max_len + tau encodes
/// relative time tau, where tau = 0 is the last observed frame.
template <class T>
Tensor<T> sinusoidal_table(std::size_t slots, std::size_t d) {
  Tensor<T> pe({slots, d});
  for (std::size_t pos = 0; pos < slots; ++pos)
    for (std::size_t i = 0; i < d; ++i) {
      double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      double a = static_cast<double>(pos) * freq;
      pe.at(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  return pe;
}

struct Forecast {
  std::vector<std::size_t> ids;
  /// Softmax distribution over predicates at each step.
  std::vector<std::vector<double>> probs;
};

/// Encoder-decoder over per-frame tokens. Target ids index a table of
/// |P| + 1 rows; row |P| is BOS and is never predicted.
template <class T>
struct TransformerCore {
  std::size_t d_model = 0, num_predicates = 0, max_len = 0;
  double dropout_rate = 0.0;
  std::vector<EncoderLayer<T>> encoder;
  std::vector<DecoderLayer<T>> decoder;
  LayerNorm<T> enc_norm, dec_norm;
  Parameter<T>* target_table = nullptr;
  Linear<T> head;
  Tensor<T> pe;

  TransformerCore() = default;
  TransformerCore(ParameterSet<T>& params, const std::string& name, std::size_t d_model_,
                  std::size_t heads, std::size_t enc_layers, std::size_t dec_layers,
                  std::size_t d_ff, std::size_t n_predicates, std::size_t max_len_, double drop,
                  std::mt19937_64& rng)
      : d_model(d_model_), num_predicates(n_predicates), max_len(max_len_), dropout_rate(drop) {
    for (std::size_t l = 0; l < enc_layers; ++l)
      encoder.emplace_back(params, name + ".enc" + std::to_string(l), d_model, heads, d_ff, rng);
    enc_norm = LayerNorm<T>(params, name + ".enc_norm", d_model);
    target_table = params.add_uniform(name + ".target", {n_predicates + 1, d_model}, 1.0, rng);
    for (std::size_t l = 0; l < dec_layers; ++l)
      decoder.emplace_back(params, name + ".dec" + std::to_string(l), d_model, heads, d_ff, rng);
    dec_norm = LayerNorm<T>(params, name + ".dec_norm", d_model);
    head = Linear<T>(params, name + ".head", d_model, n_predicates, rng);
    pe = sinusoidal_table<T>(2 * max_len + 2, d_model);
  }

  std::size_t bos() const { return num_predicates; }

  Var<T> positions(Tape<T>& tape, const std::vector<long>& rel) const {
    std::vector<std::size_t> slots;
    for (long tau : rel) {
      long slot = static_cast<long>(max_len) + tau;
      if (slot < 0 || slot >= static_cast<long>(pe.rows())) {
        throw ContractError("relative position " + std::to_string(tau) + " outside +-" +
                            std::to_string(max_len));
      }
      slots.push_back(static_cast<std::size_t>(slot));
    }
    return gather_rows(tape.constant(pe), slots);
  }

  /// tokens: L x d_model with relative times `rel`.
  Var<T> encode(Tape<T>& tape, const Var<T>& tokens, const std::vector<long>& rel) const {
    if (tokens.rows() > max_len) {
      throw ContractError("encoder input of " + std::to_string(tokens.rows()) +
                          " tokens exceeds the maximum sequence length " + std::to_string(max_len));
    }
    if (tokens.cols() != d_model || rel.size() != tokens.rows()) {
      throw DimensionError("encoder tokens " + shape_str(tokens.shape()) + " vs d_model " +
                           std::to_string(d_model));
    }
    Var<T> x = dropout(add(tokens, positions(tape, rel)), dropout_rate);
    for (const auto& layer : encoder) x = layer(tape, x, dropout_rate);
    return enc_norm(tape, x);
  }

  /// Logits (len(prefix) x |P|); prefix[0] is BOS, step k sits at relative
  /// time k + 1.
  Var<T> decode(Tape<T>& tape, const Var<T>& memory, const std::vector<std::size_t>& prefix) const {
    if (prefix.empty() || prefix[0] != bos()) throw ContractError("decoder prefix must start with BOS");
    if (prefix.size() > max_len) throw ContractError("decoder prefix exceeds the maximum length");
    std::vector<long> rel;
    for (std::size_t k = 0; k < prefix.size(); ++k) rel.push_back(static_cast<long>(k) + 1);
    Var<T> y = add(gather_rows(tape.param(*target_table), prefix), positions(tape, rel));
    y = dropout(y, dropout_rate);
    for (const auto& layer : decoder) y = layer(tape, y, memory, dropout_rate);
    return head(tape, dec_norm(tape, y));
  }

  /// Teacher forcing: [BOS, y_1 .. y_{T-1}] -> logits for y_1 .. y_T.
  Var<T> teacher_forced(Tape<T>& tape, const Var<T>& tokens, const std::vector<long>& rel,
                        const std::vector<std::size_t>& targets) const {
    std::vector<std::size_t> prefix{bos()};
    for (std::size_t k = 0; k + 1 < targets.size(); ++k) prefix.push_back(targets[k]);
    return decode(tape, encode(tape, tokens, rel), prefix);
  }

  /// Greedy autoregressive decoding for `horizon` steps.
  Forecast greedy(Tape<T>& tape, const Var<T>& tokens, const std::vector<long>& rel,
                  std::size_t horizon) const {
    Forecast out;
    if (horizon == 0) return out;
    Var<T> memory = encode(tape, tokens, rel);
    std::vector<std::size_t> prefix{bos()};
    for (std::size_t k = 0; k < horizon; ++k) {
      Var<T> logits = decode(tape, memory, prefix);
      Var<T> probs = softmax(slice_rows(logits, k, 1));
      const auto& p = probs.value().storage();
      std::size_t id = argmax_lowest(p.begin(), p.end());
      out.ids.push_back(id);
      out.probs.emplace_back(p.begin(), p.end());
      prefix.push_back(id);
    }
    return out;
  }
};

}  // namespace relcast
