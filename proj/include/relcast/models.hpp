#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "relcast/checkpoint.hpp"
#include "relcast/data.hpp"
#include "relcast/error.hpp"
#include "relcast/features.hpp"
#include "relcast/nn.hpp"
#include "relcast/ops.hpp"
#include "relcast/stats.hpp"
#include "relcast/stgraph.hpp"
#include "relcast/transformer.hpp"

namespace relcast {

struct ModelConfig {
  std::size_t heads = 32;
  std::size_t enc_layers = 1;
  std::size_t dec_layers = 1;
  std::size_t d_model = 256;
  std::size_t d_graph = 512;
  std::size_t d_sem = 64;
  /// Width of the learned visual fallback; annotated corpora use their own width.
  std::size_t d_vis = 16;
  std::size_t n_gcn_layers = 2;
  std::size_t max_len = 64;
  /// Number of per-horizon heads of the ST-GCN baseline.
  std::size_t max_horizon = 5;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  std::size_t d_ff() const { return 2 * d_model; }

  void validate() const {
    const std::pair<const char*, std::size_t> widths[] = {
        {"heads", heads},   {"enc_layers", enc_layers}, {"dec_layers", dec_layers},
        {"d_model", d_model}, {"d_graph", d_graph},     {"d_sem", d_sem},
        {"d_vis", d_vis},   {"n_gcn_layers", n_gcn_layers}, {"max_len", max_len},
        {"max_horizon", max_horizon}};
    for (const auto& [k, v] : widths)
      if (v == 0) throw ConfigError(std::string("model config: ") + k + " must be positive");
    if (d_model % heads != 0) {
      throw ConfigError("model config: d_model " + std::to_string(d_model) +
                        " is not divisible by heads " + std::to_string(heads));
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model config: dropout must lie in [0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"heads", c.heads},       {"enc_layers", c.enc_layers}, {"dec_layers", c.dec_layers},
          {"d_model", c.d_model},   {"d_graph", c.d_graph},       {"d_sem", c.d_sem},
          {"d_vis", c.d_vis},       {"n_gcn_layers", c.n_gcn_layers}, {"max_len", c.max_len},
          {"max_horizon", c.max_horizon}, {"dropout", c.dropout}, {"seed", c.seed}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be an object");
  ModelConfig c;
  auto size_field = [&](const std::string& k, std::size_t& dst) {
    if (!j.contains(k)) return;
    if (!j[k].is_number_unsigned()) throw ConfigError("model config: '" + k + "' must be a non-negative integer");
    dst = j[k].get<std::size_t>();
  };
  for (const auto& [k, v] : j.items()) {
    static const char* known[] = {"heads", "enc_layers", "dec_layers", "d_model", "d_graph", "d_sem",
                                  "d_vis", "n_gcn_layers", "max_len", "max_horizon", "dropout", "seed"};
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw ConfigError("model config: unknown key '" + k + "'");
    (void)v;
  }
  size_field("heads", c.heads);
  size_field("enc_layers", c.enc_layers);
  size_field("dec_layers", c.dec_layers);
  size_field("d_model", c.d_model);
  size_field("d_graph", c.d_graph);
  size_field("d_sem", c.d_sem);
  size_field("d_vis", c.d_vis);
  size_field("n_gcn_layers", c.n_gcn_layers);
  size_field("max_len", c.max_len);
  size_field("max_horizon", c.max_horizon);
  if (j.contains("dropout")) {
    if (!j["dropout"].is_number()) throw ConfigError("model config: 'dropout' must be a number");
    c.dropout = j["dropout"].get<double>();
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("model config: 'seed' must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  c.validate();
  return c;
}

/// What a model needs to know about its corpus.
struct ModelShape {
  Vocabulary vocab;
  /// Width of annotated visual features; 0 for box-only corpora.
  std::size_t visual_dim = 0;

  std::size_t num_objects() const { return vocab.num_objects(); }
  std::size_t num_predicates() const { return vocab.num_predicates(); }
  bool annotated() const { return visual_dim > 0; }
};

inline ModelShape shape_of(const Corpus& corpus) {
  return {corpus.vocab, corpus_visual_dim(corpus.clips)};
}

enum class Mode { normal, observation };

inline const char* mode_name(Mode m) { return m == Mode::normal ? "normal" : "observation"; }

inline Mode parse_mode(const std::string& s) {
  if (s == "normal") return Mode::normal;
  if (s == "observation") return Mode::observation;
  throw ConfigError("unknown mode '" + s + "' (normal|observation)");
}

/// The frames a model sees for one forecast: the first `history` frames,
/// plus (observation mode) the next `horizon` frames with predicates
/// withheld. `rel` is each frame's time relative to the last history frame.
struct ForecastContext {
  const ClipAnnotation* clip = nullptr;
  std::size_t history = 0, horizon = 0;
  std::size_t last_predicate = 0;
  std::vector<FrameView> frames;
  std::vector<long> rel;
};

inline ForecastContext forecast_context(const ClipAnnotation& clip, std::size_t history,
                                        std::size_t horizon, Mode mode) {
  if (history < 1 || history > clip.frames.size()) {
    throw ContractError("clip '" + clip.clip_id + "': history of " + std::to_string(history) +
                        " frames outside 1.." + std::to_string(clip.frames.size()));
  }
  ForecastContext ctx;
  ctx.clip = &clip;
  ctx.history = history;
  ctx.horizon = horizon;
  ctx.last_predicate = clip.frames[history - 1].predicate;
  for (std::size_t i = 0; i < history; ++i) {
    ctx.frames.push_back({&clip.frames[i], false});
    ctx.rel.push_back(static_cast<long>(i) - static_cast<long>(history - 1));
  }
  if (mode == Mode::observation) {
    if (history + horizon > clip.frames.size()) {
      throw DataError("clip '" + clip.clip_id + "': observation mode needs " +
                      std::to_string(horizon) + " future frames, clip has " +
                      std::to_string(clip.frames.size() - history));
    }
    for (std::size_t k = 0; k < horizon; ++k) {
      ctx.frames.push_back({&clip.frames[history + k], true});
      ctx.rel.push_back(static_cast<long>(k) + 1);
    }
  }
  return ctx;
}

inline ForecastContext forecast_context(const ForecastInstance& inst, Mode mode) {
  return forecast_context(inst.clip(), inst.history(), inst.horizon(), mode);
}

/// Common interface of GCT and the baselines.
template <class T>
class Forecaster {
 public:
  Forecaster(ModelConfig cfg, ModelShape shape)
      : cfg_(std::move(cfg)), shape_(std::move(shape)), init_rng_(cfg_.seed) {
    cfg_.validate();
    if (shape_.num_objects() == 0 || shape_.num_predicates() == 0) {
      throw ConfigError("model needs a non-empty vocabulary");
    }
  }
  Forecaster(const Forecaster&) = delete;
  Forecaster& operator=(const Forecaster&) = delete;
  virtual ~Forecaster() = default;

  virtual std::string name() const = 0;
  /// False for models fitted by counting rather than gradient descent.
  virtual bool trainable() const { return true; }
  virtual void fit(const std::vector<ClipAnnotation>& /*train*/) {}

  /// Logits (horizon x |P|) with the ground-truth future fed back where the
  /// model conditions on its own outputs.
  virtual Var<T> teacher_forced_logits(Tape<T>& tape, const ForecastContext& ctx,
                                       const std::vector<std::size_t>& targets) const = 0;

  /// Greedy forecast of ctx.horizon steps.
  virtual Forecast forecast(const ForecastContext& ctx) const = 0;

  Forecast forecast(const ForecastInstance& inst, Mode mode) const {
    return forecast(forecast_context(inst, mode));
  }

  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }
  const ModelConfig& config() const { return cfg_; }
  const ModelShape& shape() const { return shape_; }

 protected:
  std::size_t visual_width() const { return shape_.annotated() ? shape_.visual_dim : cfg_.d_vis; }

  static Forecast from_logits(const Tensor<T>& logits) {
    Forecast out;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      std::vector<double> row(logits.cols());
      double mx = static_cast<double>(logits.at(r, 0));
      for (std::size_t c = 0; c < logits.cols(); ++c) mx = std::max(mx, static_cast<double>(logits.at(r, c)));
      double z = 0;
      for (std::size_t c = 0; c < logits.cols(); ++c) z += row[c] = std::exp(static_cast<double>(logits.at(r, c)) - mx);
      for (auto& x : row) x /= z;
      out.ids.push_back(argmax_lowest(row.begin(), row.end()));
      out.probs.push_back(std::move(row));
    }
    return out;
  }

  ModelConfig cfg_;
  ModelShape shape_;
  std::mt19937_64 init_rng_;
  ParameterSet<T> params_;
};

/// Per-frame token without the graph: project(visual s|o|u, semantic s|o,
/// predicate embedding, spatial feature).
template <class T>
struct FrameTokenizer {
  const FrameEvidence<T>* evidence = nullptr;
  Linear<T> proj;

  FrameTokenizer() = default;
  FrameTokenizer(ParameterSet<T>& params, const std::string& name, const FrameEvidence<T>& ev,
                 std::size_t d_model, std::mt19937_64& rng)
      : evidence(&ev),
        proj(params, name, 3 * ev.d_vis() + 3 * ev.d_sem() + kSpatialDim, d_model, rng) {}

  Var<T> operator()(Tape<T>& tape, const ClipAnnotation& clip,
                    const std::vector<FrameView>& frames) const {
    const FrameEvidence<T>& ev = *evidence;
    std::vector<Var<T>> rows;
    for (const auto& fv : frames) {
      const KeyFrame& f = *fv.frame;
      try {
        rows.push_back(concat_cols<T>(
            {ev.visual(tape, f, Role::subject, fv.masked), ev.visual(tape, f, Role::object, fv.masked),
             ev.visual(tape, f, Role::union_box, fv.masked), ev.semantic(tape, clip.subject_category),
             ev.semantic(tape, clip.object_category), ev.predicate(tape, f.predicate, fv.masked),
             tape.constant(spatial_row<T>(f, clip.image_size))}));
      } catch (const DataError& e) {
        throw DataError("clip '" + clip.clip_id + "': " + e.what());
      }
    }
    return proj(tape, concat_rows(rows));
  }
};

/// Base of the two encoder-decoder models; subclasses supply the tokens.
template <class T>
class Seq2SeqForecaster : public Forecaster<T> {
 public:
  using Forecaster<T>::Forecaster;

  virtual Var<T> tokens(Tape<T>& tape, const ForecastContext& ctx) const = 0;

  Var<T> teacher_forced_logits(Tape<T>& tape, const ForecastContext& ctx,
                               const std::vector<std::size_t>& targets) const override {
    return core.teacher_forced(tape, tokens(tape, ctx), ctx.rel, targets);
  }

  Forecast forecast(const ForecastContext& ctx) const override {
    if (ctx.horizon == 0) return {};
    Tape<T> tape;
    return core.greedy(tape, tokens(tape, ctx), ctx.rel, ctx.horizon);
  }
  using Forecaster<T>::forecast;

  /// Decodes from externally supplied tokens through the shared path.
  Forecast forecast_from_tokens(const Tensor<T>& tok, const std::vector<long>& rel,
                                std::size_t horizon) const {
    if (horizon == 0) return {};
    Tape<T> tape;
    return core.greedy(tape, tape.constant(tok), rel, horizon);
  }

  TransformerCore<T> core;

 protected:
  void build_core() {
    const ModelConfig& c = this->cfg_;
    core = TransformerCore<T>(this->params_, "core", c.d_model, c.heads, c.enc_layers, c.dec_layers,
                              c.d_ff(), this->shape_.num_predicates(), c.max_len, c.dropout,
                              this->init_rng_);
  }
};

/// Graph-convolutional transformer: ST-graph tokens fused with the spatial
/// feature and category embeddings, then the encoder-decoder.
template <class T>
class GCTForecaster : public Seq2SeqForecaster<T> {
 public:
  GCTForecaster(ModelConfig cfg, ModelShape shape) : Seq2SeqForecaster<T>(std::move(cfg), std::move(shape)) {
    const ModelConfig& c = this->cfg_;
    auto& rng = this->init_rng_;
    evidence = FrameEvidence<T>(this->params_, "evidence", this->shape_.num_objects(),
                                this->shape_.num_predicates(), c.d_sem, this->visual_width(),
                                this->shape_.annotated(), rng);
    graph = SpatialEncoder<T>(this->params_, "graph", evidence, c.d_graph, c.n_gcn_layers, rng);
    token_proj = Linear<T>(this->params_, "token", c.d_graph + kSpatialDim + 2 * c.d_sem, c.d_model, rng);
    this->build_core();
  }

  std::string name() const override { return "gct"; }

  Var<T> tokens(Tape<T>& tape, const ForecastContext& ctx) const override {
    const ClipAnnotation& clip = *ctx.clip;
    const std::size_t n = ctx.frames.size();
    Var<T> g = graph(tape, clip, ctx.frames);
    std::vector<T> sp;
    for (const auto& fv : ctx.frames) {
      auto s = spatial_feature(fv.frame->subject_box, fv.frame->object_box, clip.image_size);
      sp.insert(sp.end(), s.begin(), s.end());
    }
    Var<T> table = tape.param(*evidence.semantic.table);
    Var<T> sem_s = gather_rows(table, std::vector<std::size_t>(n, clip.subject_category));
    Var<T> sem_o = gather_rows(table, std::vector<std::size_t>(n, clip.object_category));
    return token_proj(tape, concat_cols<T>({g, tape.constant(Tensor<T>({n, kSpatialDim}, std::move(sp))),
                                            sem_s, sem_o}));
  }

  FrameEvidence<T> evidence;
  SpatialEncoder<T> graph;
  Linear<T> token_proj;
};

/// GCT with the graph removed: tokens are projected frame features.
template <class T>
class TransformerForecaster : public Seq2SeqForecaster<T> {
 public:
  TransformerForecaster(ModelConfig cfg, ModelShape shape)
      : Seq2SeqForecaster<T>(std::move(cfg), std::move(shape)) {
    const ModelConfig& c = this->cfg_;
    auto& rng = this->init_rng_;
    evidence = FrameEvidence<T>(this->params_, "evidence", this->shape_.num_objects(),
                                this->shape_.num_predicates(), c.d_sem, this->visual_width(),
                                this->shape_.annotated(), rng);
    tokenizer = FrameTokenizer<T>(this->params_, "token", evidence, c.d_model, rng);
    this->build_core();
  }

  std::string name() const override { return "transformer"; }

  Var<T> tokens(Tape<T>& tape, const ForecastContext& ctx) const override {
    return tokenizer(tape, *ctx.clip, ctx.frames);
  }

  FrameEvidence<T> evidence;
  FrameTokenizer<T> tokenizer;
};

enum class CellKind { lstm, gru };

/// PyTorch-layout recurrent cell: gates = x W_ih + b_ih + h W_hh + b_hh,
/// LSTM gate order i, f, g, o; GRU order r, z, n.
template <class T>
struct RecurrentCell {
  CellKind kind = CellKind::lstm;
  std::size_t hidden = 0;
  Linear<T> ih, hh;

  RecurrentCell() = default;
  RecurrentCell(ParameterSet<T>& params, const std::string& name, CellKind k, std::size_t in,
                std::size_t h, std::mt19937_64& rng)
      : kind(k), hidden(h) {
    std::size_t g = k == CellKind::lstm ? 4 : 3;
    ih = Linear<T>(params, name + ".ih", in, g * h, rng);
    hh = Linear<T>(params, name + ".hh", h, g * h, rng);
  }

  struct State {
    Var<T> h, c;
  };

  State zero_state(Tape<T>& tape) const {
    return {tape.constant(Tensor<T>({1, hidden})), tape.constant(Tensor<T>({1, hidden}))};
  }

  State operator()(Tape<T>& tape, const Var<T>& x, const State& s) const {
    const std::size_t h = hidden;
    Var<T> gi = ih(tape, x), gh = hh(tape, s.h);
    if (kind == CellKind::lstm) {
      Var<T> g = add(gi, gh);
      Var<T> i = sigmoid(slice_cols(g, 0, h));
      Var<T> f = sigmoid(slice_cols(g, h, h));
      Var<T> c_hat = tanh(slice_cols(g, 2 * h, h));
      Var<T> o = sigmoid(slice_cols(g, 3 * h, h));
      Var<T> c = add(mul(f, s.c), mul(i, c_hat));
      return {mul(o, tanh(c)), c};
    }
    Var<T> r = sigmoid(add(slice_cols(gi, 0, h), slice_cols(gh, 0, h)));
    Var<T> z = sigmoid(add(slice_cols(gi, h, h), slice_cols(gh, h, h)));
    Var<T> n = tanh(add(slice_cols(gi, 2 * h, h), mul(r, slice_cols(gh, 2 * h, h))));
    // (1 - z) n + z h
    return {add(n, mul(z, sub(s.h, n))), s.c};
  }
};

/// LSTM / GRU baseline over the frame tokens. After the history, each step
/// consumes the embedding of the previous prediction (plus the observed
/// future token in observation mode).
template <class T>
class RecurrentForecaster : public Forecaster<T> {
 public:
  RecurrentForecaster(CellKind kind, ModelConfig cfg, ModelShape shape)
      : Forecaster<T>(std::move(cfg), std::move(shape)) {
    const ModelConfig& c = this->cfg_;
    auto& rng = this->init_rng_;
    const std::size_t np = this->shape_.num_predicates();
    evidence = FrameEvidence<T>(this->params_, "evidence", this->shape_.num_objects(), np, c.d_sem,
                                this->visual_width(), this->shape_.annotated(), rng);
    tokenizer = FrameTokenizer<T>(this->params_, "token", evidence, c.d_model, rng);
    cell = RecurrentCell<T>(this->params_, "cell", kind, c.d_model, c.d_model, rng);
    feedback = this->params_.add_uniform("feedback", {np + 1, c.d_model}, 1.0, rng);
    head = Linear<T>(this->params_, "head", c.d_model, np, rng);
  }

  std::string name() const override { return cell.kind == CellKind::lstm ? "lstm" : "gru"; }

  Var<T> teacher_forced_logits(Tape<T>& tape, const ForecastContext& ctx,
                               const std::vector<std::size_t>& targets) const override {
    std::vector<Var<T>> rows;
    run(tape, ctx, [&](std::size_t k, const Var<T>& logits) {
      rows.push_back(logits);
      return targets.at(k);
    });
    return concat_rows(rows);
  }

  Forecast forecast(const ForecastContext& ctx) const override {
    if (ctx.horizon == 0) return {};
    Tape<T> tape;
    std::vector<Var<T>> rows;
    run(tape, ctx, [&](std::size_t, const Var<T>& logits) {
      rows.push_back(logits);
      const auto& v = logits.value().storage();
      return argmax_lowest(v.begin(), v.end());
    });
    return this->from_logits(concat_rows(rows).value());
  }
  using Forecaster<T>::forecast;

  RecurrentCell<T> cell;
  FrameEvidence<T> evidence;
  FrameTokenizer<T> tokenizer;
  Parameter<T>* feedback = nullptr;
  Linear<T> head;

 private:
  /// `next(k, logits)` returns the id fed back after step k.
  template <class Next>
  void run(Tape<T>& tape, const ForecastContext& ctx, Next next) const {
    Var<T> tok = tokenizer(tape, *ctx.clip, ctx.frames);
    auto state = cell.zero_state(tape);
    for (std::size_t i = 0; i < ctx.history; ++i) state = cell(tape, slice_rows(tok, i, 1), state);
    Var<T> fb = tape.param(*feedback);
    std::size_t prev = this->shape_.num_predicates();  // BOS row
    const bool observing = ctx.frames.size() > ctx.history;
    for (std::size_t k = 0; k < ctx.horizon; ++k) {
      Var<T> x = gather_rows(fb, std::vector<std::size_t>{prev});
      if (observing) x = add(x, slice_rows(tok, ctx.history + k, 1));
      state = cell(tape, dropout(x, this->cfg_.dropout), state);
      prev = next(k, head(tape, dropout(state.h, this->cfg_.dropout)));
    }
  }
};

/// Graph encoder alone: mean-pooled frame tokens into one linear head per
/// horizon step.
template <class T>
class STGCNForecaster : public Forecaster<T> {
 public:
  STGCNForecaster(ModelConfig cfg, ModelShape shape) : Forecaster<T>(std::move(cfg), std::move(shape)) {
    const ModelConfig& c = this->cfg_;
    auto& rng = this->init_rng_;
    const std::size_t np = this->shape_.num_predicates();
    evidence = FrameEvidence<T>(this->params_, "evidence", this->shape_.num_objects(), np, c.d_sem,
                                this->visual_width(), this->shape_.annotated(), rng);
    graph = SpatialEncoder<T>(this->params_, "graph", evidence, c.d_graph, c.n_gcn_layers, rng);
    for (std::size_t k = 0; k < c.max_horizon; ++k)
      heads.emplace_back(this->params_, "head" + std::to_string(k), c.d_graph, np, rng);
  }

  std::string name() const override { return "stgcn"; }

  Var<T> logits(Tape<T>& tape, const ForecastContext& ctx) const {
    if (ctx.horizon > heads.size()) {
      throw ContractError("stgcn: horizon " + std::to_string(ctx.horizon) + " exceeds its " +
                          std::to_string(heads.size()) + " heads");
    }
    Var<T> pooled = dropout(mean_rows(graph(tape, *ctx.clip, ctx.frames)), this->cfg_.dropout);
    std::vector<Var<T>> rows;
    for (std::size_t k = 0; k < ctx.horizon; ++k) rows.push_back(heads[k](tape, pooled));
    return concat_rows(rows);
  }

  Var<T> teacher_forced_logits(Tape<T>& tape, const ForecastContext& ctx,
                               const std::vector<std::size_t>&) const override {
    return logits(tape, ctx);
  }

  Forecast forecast(const ForecastContext& ctx) const override {
    if (ctx.horizon == 0) return {};
    Tape<T> tape;
    return this->from_logits(logits(tape, ctx).value());
  }
  using Forecaster<T>::forecast;

  FrameEvidence<T> evidence;
  SpatialEncoder<T> graph;
  std::vector<Linear<T>> heads;
};

/// Probabilistic baseline: row-normalised predicate transition counts. A
/// predicate never seen transitioning falls back to the marginal predicate
/// frequency. The counts are the parameters, so a checkpoint restores the
/// model exactly. The argmax is taken in exact rationals, ties to the lowest id.
template <class T>
class PMForecaster : public Forecaster<T> {
 public:
  using Rational = boost::multiprecision::cpp_rational;

  PMForecaster(ModelConfig cfg, ModelShape shape) : Forecaster<T>(std::move(cfg), std::move(shape)) {
    const std::size_t np = this->shape_.num_predicates();
    counts = this->params_.add_zeros("pm.counts", {np, np});
    frames = this->params_.add_zeros("pm.frames", {np});
  }

  std::string name() const override { return "pm"; }
  bool trainable() const override { return false; }

  void fit(const std::vector<ClipAnnotation>& train) override {
    TransitionMatrix tm = compute_transition_matrix(train, this->shape_.vocab);
    double transitions = 0;
    for (std::size_t i = 0; i < tm.size(); ++i) transitions += tm.row_count(i);
    if (transitions == 0) throw DataError("pm: training corpus has no predicate transitions");
    const std::size_t np = tm.size();
    frames->value.fill(T(0));
    for (const auto& c : train)
      for (const auto& f : c.frames) frames->value[f.predicate] += T(1);
    for (std::size_t i = 0; i < np; ++i)
      for (std::size_t j = 0; j < np; ++j) counts->value.at(i, j) = static_cast<T>(tm.counts[i][j]);
  }

  /// Effective transition probability i -> j.
  double transition(std::size_t i, std::size_t j) const {
    const std::size_t np = this->shape_.num_predicates();
    double row = 0;
    for (std::size_t k = 0; k < np; ++k) row += count(i, k);
    if (row > 0) return count(i, j) / row;
    double total = 0;
    for (std::size_t k = 0; k < np; ++k) total += frame_count(k);
    return frame_count(j) / total;
  }

  /// e_last M^t for t = 1..horizon.
  std::vector<std::vector<double>> distributions(std::size_t last, std::size_t horizon) const {
    const std::size_t np = check_last(last);
    std::vector<std::vector<double>> m(np, std::vector<double>(np));
    for (std::size_t i = 0; i < np; ++i)
      for (std::size_t j = 0; j < np; ++j) m[i][j] = transition(i, j);
    std::vector<double> d(np, 0.0);
    d[last] = 1.0;
    std::vector<std::vector<double>> out;
    for (std::size_t t = 0; t < horizon; ++t) {
      std::vector<double> nd(np, 0.0);
      for (std::size_t i = 0; i < np; ++i)
        if (d[i] != 0.0)
          for (std::size_t j = 0; j < np; ++j) nd[j] += d[i] * m[i][j];
      d = std::move(nd);
      out.push_back(d);
    }
    return out;
  }

  /// Argmax of e_last M^t for t = 1..horizon, exact.
  std::vector<std::size_t> exact_argmax(std::size_t last, std::size_t horizon) const {
    const std::size_t np = check_last(last);
    std::vector<std::vector<Rational>> m(np, std::vector<Rational>(np));
    long total = 0;
    for (std::size_t k = 0; k < np; ++k) total += std::lround(frame_count(k));
    for (std::size_t i = 0; i < np; ++i) {
      long row = 0;
      for (std::size_t k = 0; k < np; ++k) row += std::lround(count(i, k));
      for (std::size_t j = 0; j < np; ++j)
        m[i][j] = row > 0 ? Rational(std::lround(count(i, j)), row) : Rational(std::lround(frame_count(j)), total);
    }
    std::vector<Rational> d(np, Rational(0));
    d[last] = 1;
    std::vector<std::size_t> out;
    for (std::size_t t = 0; t < horizon; ++t) {
      std::vector<Rational> nd(np, Rational(0));
      for (std::size_t i = 0; i < np; ++i)
        if (d[i] != 0)
          for (std::size_t j = 0; j < np; ++j) nd[j] += d[i] * m[i][j];
      d = std::move(nd);
      out.push_back(argmax_lowest(d.begin(), d.end()));
    }
    return out;
  }

  std::size_t predict(std::size_t last, std::size_t t) const {
    if (t < 1) throw ContractError("pm_predict: horizon must be at least 1");
    return exact_argmax(last, t).back();
  }

  Var<T> teacher_forced_logits(Tape<T>&, const ForecastContext&,
                               const std::vector<std::size_t>&) const override {
    throw UnsupportedError("pm is fitted by counting and has no logits");
  }

  Forecast forecast(const ForecastContext& ctx) const override {
    Forecast out;
    out.probs = distributions(ctx.last_predicate, ctx.horizon);
    out.ids = exact_argmax(ctx.last_predicate, ctx.horizon);
    return out;
  }
  using Forecaster<T>::forecast;

  /// Transition counts [from][to] and per-predicate frame counts.
  Parameter<T>* counts = nullptr;
  Parameter<T>* frames = nullptr;

 private:
  double count(std::size_t i, std::size_t j) const { return static_cast<double>(counts->value.at(i, j)); }
  double frame_count(std::size_t j) const { return static_cast<double>(frames->value[j]); }

  std::size_t check_last(std::size_t last) const {
    const std::size_t np = this->shape_.num_predicates();
    if (last >= np) throw IndexError("pm: predicate id " + std::to_string(last) + " out of range");
    double total = 0;
    for (std::size_t k = 0; k < np; ++k) total += frame_count(k);
    if (total == 0) throw ContractError("pm: model has not been fitted");
    return np;
  }
};

inline const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names = {"gct", "transformer", "stgcn", "lstm", "gru", "pm"};
  return names;
}

template <class T>
std::unique_ptr<Forecaster<T>> make_model(const std::string& name, const ModelConfig& cfg,
                                          const ModelShape& shape) {
  if (name == "gct") return std::make_unique<GCTForecaster<T>>(cfg, shape);
  if (name == "transformer") return std::make_unique<TransformerForecaster<T>>(cfg, shape);
  if (name == "stgcn") return std::make_unique<STGCNForecaster<T>>(cfg, shape);
  if (name == "lstm") return std::make_unique<RecurrentForecaster<T>>(CellKind::lstm, cfg, shape);
  if (name == "gru") return std::make_unique<RecurrentForecaster<T>>(CellKind::gru, cfg, shape);
  if (name == "pm") return std::make_unique<PMForecaster<T>>(cfg, shape);
  throw ConfigError("unknown model '" + name + "' (gct|transformer|stgcn|lstm|gru|pm)");
}

inline nlohmann::json model_metadata(const std::string& name, const ModelConfig& cfg,
                                     const ModelShape& shape) {
  return {{"model", name},
          {"model_config", model_config_to_json(cfg)},
          {"objects", shape.vocab.objects()},
          {"predicates", shape.vocab.predicates()},
          {"visual_dim", shape.visual_dim}};
}

template <class T>
void save_model(const std::string& path, const Forecaster<T>& model) {
  write_checkpoint(path, model_metadata(model.name(), model.config(), model.shape()), model.parameters());
}

/// Rebuilds the model described by a checkpoint and loads its weights.
template <class T>
std::unique_ptr<Forecaster<T>> load_model(const std::string& path) {
  Checkpoint ck = read_checkpoint(path);
  const auto& m = ck.metadata;
  try {
    ModelShape shape{Vocabulary(m.at("objects").get<std::vector<std::string>>(),
                                m.at("predicates").get<std::vector<std::string>>()),
                     m.at("visual_dim").get<std::size_t>()};
    auto model = make_model<T>(m.at("model").get<std::string>(),
                               model_config_from_json(m.at("model_config")), shape);
    load_parameters(ck, model->parameters());
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path + "' metadata: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("checkpoint '" + path + "' metadata: " + e.what());
  }
}

}  // namespace relcast
