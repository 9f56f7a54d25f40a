#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "relcast/gradcheck.hpp"
#include "relcast/models.hpp"

namespace relcast {
namespace {

void randomize(ParameterSet<double>& params, std::uint64_t seed, double sd = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  for (auto& p : params)
    for (auto& v : p->value.storage()) v = n(rng);
}

Tensor<double> random_tensor(Shape s, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Tensor<double> t(std::move(s));
  for (auto& v : t.storage()) v = n(rng);
  return t;
}

// --- attention ---------------------------------------------------------

TEST(Attention, SingleKeyReturnsValue) {
  std::mt19937_64 rng(1);
  ParameterSet<double> params;
  MultiHeadAttention<double> attn(params, "a", 1, 1, rng);
  Tape<double> tape;
  auto q = tape.constant(Tensor<double>({3, 1}, {0.3, -2.0, 5.0}));
  auto mem = tape.constant(Tensor<double>({1, 1}, {1.7}));
  auto ctx = attn.context(tape, q, mem, nullptr).value();
  double v = 1.7 * attn.wv.weight->value[0] + attn.wv.bias->value[0];
  for (std::size_t r = 0; r < 3; ++r) EXPECT_DOUBLE_EQ(ctx.at(r, 0), v);
}

TEST(Attention, TwoTokenHandOracle) {
  std::mt19937_64 rng(1);
  ParameterSet<double> params;
  MultiHeadAttention<double> attn(params, "a", 2, 1, rng);
  for (auto& p : params) p->value.fill(0.0);
  attn.wq.weight->value = Tensor<double>::matrix({{1, 0}, {0, 1}});
  attn.wk.weight->value = Tensor<double>::matrix({{2, 0}, {0, 0}});
  attn.wv.weight->value = Tensor<double>::matrix({{1, 1}, {0, 1}});
  attn.wo.weight->value = Tensor<double>::matrix({{1, 0}, {0, 1}});
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>::matrix({{1, 0}, {0, 1}}));
  auto y = attn(tape, x, x).value();
  // row 0: q=(1,0), k0=(2,0), k1=(0,0); scores (2,0)/sqrt2; v0=(1,1), v1=(0,1)
  double s = 2.0 / std::sqrt(2.0);
  double w0 = std::exp(s) / (std::exp(s) + 1.0);
  EXPECT_NEAR(y.at(0, 0), w0, 1e-15);
  EXPECT_NEAR(y.at(0, 1), 1.0, 1e-15);
  // row 1: q=(0,1) scores (0,0): equal weights
  EXPECT_NEAR(y.at(1, 0), 0.5, 1e-15);
  EXPECT_NEAR(y.at(1, 1), 1.0, 1e-15);
}

TEST(Attention, MultiHeadMatchesDenseOracle) {
  std::mt19937_64 rng(2);
  ParameterSet<double> params;
  const std::size_t d = 4, heads = 2, dk = 2;
  MultiHeadAttention<double> attn(params, "a", d, heads, rng);
  randomize(params, 3);
  auto xq = random_tensor({3, d}, rng);
  auto xm = random_tensor({2, d}, rng);
  auto proj = [](const Tensor<double>& x, const Linear<double>& l) {
    Tensor<double> y({x.rows(), l.out_features()});
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < y.cols(); ++c) {
        double acc = l.bias->value[c];
        for (std::size_t k = 0; k < x.cols(); ++k) acc += x.at(r, k) * l.weight->value.at(k, c);
        y.at(r, c) = acc;
      }
    return y;
  };
  auto q = proj(xq, attn.wq), k = proj(xm, attn.wk), v = proj(xm, attn.wv);
  Tensor<double> ctx({3, d});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < 3; ++i) {
      double sc[2], z = 0;
      for (std::size_t j = 0; j < 2; ++j) {
        sc[j] = 0;
        for (std::size_t c = 0; c < dk; ++c) sc[j] += q.at(i, h * dk + c) * k.at(j, h * dk + c);
        sc[j] = std::exp(sc[j] / std::sqrt(double(dk)));
        z += sc[j];
      }
      for (std::size_t c = 0; c < dk; ++c)
        ctx.at(i, h * dk + c) = (sc[0] * v.at(0, h * dk + c) + sc[1] * v.at(1, h * dk + c)) / z;
    }
  auto expect = proj(ctx, attn.wo);
  Tape<double> tape;
  auto y = attn(tape, tape.constant(xq), tape.constant(xm)).value();
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], expect[i], 1e-12);
}

TEST(Attention, CausalMaskBlocksFuture) {
  std::mt19937_64 rng(4);
  ParameterSet<double> params;
  MultiHeadAttention<double> attn(params, "a", 4, 2, rng);
  std::vector<Tensor<double>> w;
  attn.capture = &w;
  auto mask = causal_mask<double>(3);
  Tape<double> tape;
  auto x = tape.constant(random_tensor({3, 4}, rng));
  attn(tape, x, x, &mask);
  ASSERT_EQ(w.size(), 2u);
  for (const auto& m : w)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = i + 1; j < 3; ++j) EXPECT_EQ(m.at(i, j), 0.0);
}

TEST(Attention, WeightRowsStochasticProperty) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterSet<double> params;
    std::size_t heads = 1 + trial % 3, d = 2 * heads * (1 + trial % 2);
    MultiHeadAttention<double> attn(params, "a", d, heads, rng);
    randomize(params, trial, 2.0);
    std::vector<Tensor<double>> w;
    attn.capture = &w;
    std::size_t lq = 1 + trial % 4, lk = 1 + (trial / 4) % 5;
    Tape<double> tape;
    attn(tape, tape.constant(random_tensor({lq, d}, rng)), tape.constant(random_tensor({lk, d}, rng)));
    for (const auto& m : w)
      for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
          EXPECT_GE(m.at(i, j), 0.0);
          s += m.at(i, j);
        }
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
  }
}

TEST(Attention, IndivisibleHeadsRejected) {
  std::mt19937_64 rng(1);
  ParameterSet<double> params;
  EXPECT_THROW(MultiHeadAttention<double>(params, "a", 6, 4, rng), ConfigError);
}

// --- transformer core --------------------------------------------------

struct CoreFixture {
  std::mt19937_64 rng{11};
  ParameterSet<double> params;
  TransformerCore<double> core;
  CoreFixture(std::size_t d = 4, std::size_t heads = 2, std::size_t np = 3, std::size_t max_len = 8)
      : core(params, "core", d, heads, 1, 1, 2 * d, np, max_len, 0.0, rng) {}
};

TEST(TransformerCore, SinglePositionAttendsToItself) {
  CoreFixture fx;
  std::vector<Tensor<double>> w;
  fx.core.encoder[0].attn.capture = &w;
  Tape<double> tape;
  auto e = fx.core.encode(tape, tape.constant(random_tensor({1, 4}, fx.rng)), {0});
  EXPECT_EQ(e.shape(), (Shape{1, 4}));
  ASSERT_EQ(w.size(), 2u);
  for (const auto& m : w) EXPECT_EQ(m.at(0, 0), 1.0);
}

TEST(TransformerCore, ZeroBranchesLeaveResidualThenLayerNorm) {
  CoreFixture fx;
  for (auto& p : fx.params)
    if (p->name.rfind("core.enc0.", 0) == 0 && p->name.find(".ln") == std::string::npos) p->value.fill(0.0);
  Tensor<double> tok = random_tensor({3, 4}, fx.rng);
  std::vector<long> rel = {-2, -1, 0};
  auto pe = sinusoidal_table<double>(18, 4);
  Tape<double> tape;
  auto e = fx.core.encode(tape, tape.constant(tok), rel).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double x[4], mu = 0, var = 0;
    for (std::size_t c = 0; c < 4; ++c) mu += x[c] = tok.at(r, c) + pe.at(8 + rel[r], c);
    mu /= 4;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= 4;
    for (std::size_t c = 0; c < 4; ++c)
      EXPECT_NEAR(e.at(r, c), (x[c] - mu) / std::sqrt(var + 1e-5), 1e-12);
  }
}

TEST(TransformerCore, PositionalTableValues) {
  auto pe = sinusoidal_table<double>(4, 4);
  EXPECT_DOUBLE_EQ(pe.at(2, 0), std::sin(2.0));
  EXPECT_DOUBLE_EQ(pe.at(2, 1), std::cos(2.0));
  EXPECT_DOUBLE_EQ(pe.at(3, 2), std::sin(3.0 / 100.0));
  EXPECT_DOUBLE_EQ(pe.at(3, 3), std::cos(3.0 / 100.0));
}

TEST(TransformerCore, LengthAndPrefixErrors) {
  CoreFixture fx(4, 2, 3, 4);
  Tape<double> tape;
  EXPECT_THROW(fx.core.encode(tape, tape.constant(Tensor<double>({5, 4})), {-4, -3, -2, -1, 0}),
               ContractError);
  auto e = fx.core.encode(tape, tape.constant(Tensor<double>({2, 4})), {-1, 0});
  EXPECT_THROW(fx.core.decode(tape, e, {}), ContractError);
  EXPECT_THROW(fx.core.decode(tape, e, {0}), ContractError);
  EXPECT_THROW(fx.core.decode(tape, e, {3, 0, 1, 2, 0}), ContractError);
  EXPECT_EQ(fx.core.decode(tape, e, {3, 0}).shape(), (Shape{2, 3}));
}

TEST(TransformerCore, DecoderIsCausal) {
  CoreFixture fx;
  randomize(fx.params, 12);
  Tape<double> tape;
  auto e = fx.core.encode(tape, tape.constant(random_tensor({2, 4}, fx.rng)), {-1, 0});
  auto a = fx.core.decode(tape, e, {3, 0, 1, 2}).value();
  auto b = fx.core.decode(tape, e, {3, 0, 2, 0}).value();
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(a.at(0, c), b.at(0, c));
    EXPECT_EQ(a.at(1, c), b.at(1, c));
  }
  EXPECT_NE(a.at(2, 0), b.at(2, 0));
}

TEST(TransformerCore, GreedyEmptyAndDeterministic) {
  CoreFixture fx;
  randomize(fx.params, 13);
  auto tok = random_tensor({2, 4}, fx.rng);
  Tape<double> t1, t2, t3;
  EXPECT_TRUE(fx.core.greedy(t1, t1.constant(tok), {-1, 0}, 0).ids.empty());
  auto a = fx.core.greedy(t2, t2.constant(tok), {-1, 0}, 4);
  auto b = fx.core.greedy(t3, t3.constant(tok), {-1, 0}, 4);
  EXPECT_EQ(a.ids, b.ids);
  EXPECT_EQ(a.probs, b.probs);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_LT(a.ids[k], 3u);
    EXPECT_EQ(a.probs[k][a.ids[k]], *std::max_element(a.probs[k].begin(), a.probs[k].end()));
  }
}

TEST(TransformerCore, TiesGoToLowestId) {
  CoreFixture fx;
  for (auto& p : fx.params)
    if (p->name.rfind("core.head", 0) == 0) p->value.fill(0.0);
  Tape<double> tape;
  auto f = fx.core.greedy(tape, tape.constant(random_tensor({2, 4}, fx.rng)), {-1, 0}, 3);
  EXPECT_EQ(f.ids, (std::vector<std::size_t>{0, 0, 0}));
}

// --- models ------------------------------------------------------------

ModelConfig tiny_config() {
  ModelConfig c;
  c.heads = 2;
  c.d_model = 4;
  c.d_graph = 4;
  c.d_sem = 3;
  c.d_vis = 2;
  c.n_gcn_layers = 1;
  c.max_len = 8;
  c.max_horizon = 3;
  c.dropout = 0.0;
  c.seed = 5;
  return c;
}

ModelShape tiny_shape(std::size_t visual_dim) {
  return {Vocabulary({"person", "dog"}, {"A", "B", "C"}), visual_dim};
}

ClipAnnotation make_clip(std::size_t frames, std::size_t visual_dim, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  ClipAnnotation c{"m", 0, 1, {100, 100}, {}};
  for (std::size_t i = 0; i < frames; ++i) {
    KeyFrame f;
    f.t = static_cast<int>(i);
    f.predicate = (i * 2 + seed) % 3;
    double x = 10 + 60 * u(rng), y = 10 + 60 * u(rng);
    f.subject_box = {x, y, x + 10 + 10 * u(rng), y + 10 + 10 * u(rng)};
    x = 10 + 60 * u(rng);
    y = 10 + 60 * u(rng);
    f.object_box = {x, y, x + 10 + 10 * u(rng), y + 10 + 10 * u(rng)};
    if (visual_dim) {
      VisualEvidence v;
      for (std::size_t k = 0; k < visual_dim; ++k) {
        v.subject.push_back(u(rng));
        v.object.push_back(u(rng));
        v.union_box.push_back(u(rng));
      }
      f.visual = v;
    }
    c.frames.push_back(f);
  }
  return c;
}

TEST(ModelConfig, ValidationAndJson) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  auto t = tiny_config();
  EXPECT_EQ(model_config_from_json(model_config_to_json(t)), t);
  EXPECT_THROW(model_config_from_json({{"d_modle", 4}}), ConfigError);
  EXPECT_THROW(model_config_from_json({{"d_model", 0}}), ConfigError);
  EXPECT_EQ(model_config_from_json(nlohmann::json::object()), ModelConfig{});
  EXPECT_THROW(make_model<double>("rnn", t, tiny_shape(0)), ConfigError);
}

TEST(Models, TransformerOnlySmallerThanGCT) {
  for (std::size_t vd : {0u, 2u}) {
    auto gct = make_model<double>("gct", tiny_config(), tiny_shape(vd));
    auto to = make_model<double>("transformer", tiny_config(), tiny_shape(vd));
    EXPECT_LT(to->parameters().scalar_count(), gct->parameters().scalar_count());
    auto big_gct = make_model<double>("gct", ModelConfig{}, tiny_shape(vd));
    auto big_to = make_model<double>("transformer", ModelConfig{}, tiny_shape(vd));
    EXPECT_LT(big_to->parameters().scalar_count(), big_gct->parameters().scalar_count());
  }
}

TEST(Models, TokenInjectionSharesDecodePath) {
  auto cfg = tiny_config();
  GCTForecaster<double> gct(cfg, tiny_shape(2));
  TransformerForecaster<double> to(cfg, tiny_shape(2));
  randomize(gct.parameters(), 21);
  randomize(to.parameters(), 22);
  for (auto& p : to.parameters())
    if (p->name.rfind("core.", 0) == 0) p->value = gct.parameters().find(p->name)->value;
  ForecastInstance inst(make_clip(6, 2), 3, 3);
  for (Mode mode : {Mode::normal, Mode::observation}) {
    auto ctx = forecast_context(inst, mode);
    Tape<double> tape;
    Tensor<double> tok = gct.tokens(tape, ctx).value();
    auto direct = gct.forecast(ctx);
    auto injected = to.forecast_from_tokens(tok, ctx.rel, ctx.horizon);
    EXPECT_EQ(direct.ids, injected.ids);
    EXPECT_EQ(direct.probs, injected.probs);
  }
}

TEST(Models, ForecastIsPureAndCausal) {
  for (const auto& name : model_names()) {
    auto m = make_model<double>(name, tiny_config(), tiny_shape(0));
    randomize(m->parameters(), 31);
    if (name == "pm") m->fit({make_clip(6, 0, 1), make_clip(6, 0, 2)});
    ForecastInstance inst(make_clip(6, 0, 3), 3, 3);
    auto other = inst.with_future_labels({2, 2, 2});
    for (Mode mode : {Mode::normal, Mode::observation}) {
      auto a = m->forecast(inst, mode);
      auto b = m->forecast(inst, mode);
      auto c = m->forecast(other, mode);
      EXPECT_EQ(a.ids.size(), 3u) << name;
      EXPECT_EQ(a.ids, b.ids) << name;
      EXPECT_EQ(a.probs, b.probs) << name;
      EXPECT_EQ(a.probs, c.probs) << name;
      for (const auto& p : a.probs) {
        double s = 0;
        for (double x : p) s += x;
        EXPECT_NEAR(s, 1.0, 1e-9) << name;
      }
    }
    EXPECT_TRUE(m->forecast(forecast_context(inst.clip(), 3, 0, Mode::normal)).ids.empty()) << name;
  }
}

TEST(Models, TeacherForcingIsCausalInTargets) {
  for (const char* name : {"gct", "transformer", "lstm", "gru"}) {
    auto m = make_model<double>(name, tiny_config(), tiny_shape(0));
    randomize(m->parameters(), 33);
    ForecastInstance inst(make_clip(6, 0), 3, 3);
    auto ctx = forecast_context(inst, Mode::normal);
    Tape<double> tape;
    auto a = m->teacher_forced_logits(tape, ctx, {0, 1, 2}).value();
    auto b = m->teacher_forced_logits(tape, ctx, {0, 2, 0}).value();
    EXPECT_EQ(a.shape(), (Shape{3, 3}));
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_EQ(a.at(0, c), b.at(0, c)) << name;
      EXPECT_EQ(a.at(1, c), b.at(1, c)) << name;
    }
  }
}

TEST(Models, ObservationNeedsFutureFrames) {
  auto m = make_model<double>("gct", tiny_config(), tiny_shape(0));
  auto clip = make_clip(4, 0);
  EXPECT_THROW(forecast_context(clip, 3, 2, Mode::observation), DataError);
  auto f = m->forecast(forecast_context(clip, 4, 5, Mode::normal));
  EXPECT_EQ(f.ids.size(), 5u);
}

constexpr double kStep = 1e-5, kFloor = 1e-6;

TEST(Models, GradientFloorStillCatchesWrongBackward) {
  // y = sum(x^2) recorded with a deliberately wrong backward of 3x
  std::function<Var<double>(Tape<double>&, const Var<double>&)> f = [](Tape<double>& tape,
                                                                     const Var<double>& x) {
    Tensor<double> sq = x.value();
    for (auto& v : sq.storage()) v *= v;
    Var<double> y = tape.record(sq, true, [x](Tape<double>& tp, std::size_t id) {
      Tensor<double>* g = tp.grad_sink(x.id());
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += 3.0 * x.value()[i] * tp.node(id).grad[i];
    });
    return sum(y);
  };
  Tensor<double> x({1, 3}, {1e-3, 0.5, -2.0});
  EXPECT_GT(finite_diff_check(f, x, kStep, kFloor), 0.3);
}

TEST(Models, GradientCheckEveryModel) {
  for (const char* name : {"gct", "transformer", "stgcn", "lstm", "gru"})
    for (std::size_t vd : {0u, 2u})
      for (Mode mode : {Mode::normal, Mode::observation}) {
        auto m = make_model<double>(name, tiny_config(), tiny_shape(vd));
        randomize(m->parameters(), 41);
        ForecastInstance inst(make_clip(5, vd, 7), 3, 2);
        auto ctx = forecast_context(inst, mode);
        auto targets = inst.future_labels();
        std::function<Var<double>(Tape<double>&)> loss = [&](Tape<double>& tape) {
          return cross_entropy(m->teacher_forced_logits(tape, ctx, targets), targets);
        };
        EXPECT_LT(finite_diff_check(loss, m->parameters(), kStep, kFloor), 1e-4)
            << name << " visual=" << vd << " " << mode_name(mode);
      }
}

TEST(Recurrent, ZeroWeightsPredictLowestId) {
  for (const char* name : {"lstm", "gru"}) {
    auto m = make_model<double>(name, tiny_config(), tiny_shape(0));
    for (auto& p : m->parameters()) p->value.fill(0.0);
    auto f = m->forecast(ForecastInstance(make_clip(6, 0), 2, 4), Mode::normal);
    EXPECT_EQ(f.ids, (std::vector<std::size_t>{0, 0, 0, 0})) << name;
  }
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

TEST(Recurrent, LSTMStepMatchesGateOracle) {
  std::mt19937_64 rng(51);
  ParameterSet<double> params;
  RecurrentCell<double> cell(params, "c", CellKind::lstm, 3, 2, rng);
  randomize(params, 52);
  auto x = random_tensor({1, 3}, rng), h0 = random_tensor({1, 2}, rng), c0 = random_tensor({1, 2}, rng);
  auto gate = [&](std::size_t col) {
    double a = cell.ih.bias->value[col] + cell.hh.bias->value[col];
    for (std::size_t k = 0; k < 3; ++k) a += x[k] * cell.ih.weight->value.at(k, col);
    for (std::size_t k = 0; k < 2; ++k) a += h0[k] * cell.hh.weight->value.at(k, col);
    return a;
  };
  Tape<double> tape;
  auto s = cell(tape, tape.constant(x), {tape.constant(h0), tape.constant(c0)});
  for (std::size_t j = 0; j < 2; ++j) {
    double i = sig(gate(j)), f = sig(gate(2 + j)), g = std::tanh(gate(4 + j)), o = sig(gate(6 + j));
    double c = f * c0[j] + i * g;
    EXPECT_NEAR(s.c.value()[j], c, 1e-14);
    EXPECT_NEAR(s.h.value()[j], o * std::tanh(c), 1e-14);
  }
}

TEST(Recurrent, GRUStepMatchesGateOracle) {
  std::mt19937_64 rng(53);
  ParameterSet<double> params;
  RecurrentCell<double> cell(params, "c", CellKind::gru, 3, 2, rng);
  randomize(params, 54);
  auto x = random_tensor({1, 3}, rng), h0 = random_tensor({1, 2}, rng);
  auto gi = [&](std::size_t col) {
    double a = cell.ih.bias->value[col];
    for (std::size_t k = 0; k < 3; ++k) a += x[k] * cell.ih.weight->value.at(k, col);
    return a;
  };
  auto gh = [&](std::size_t col) {
    double a = cell.hh.bias->value[col];
    for (std::size_t k = 0; k < 2; ++k) a += h0[k] * cell.hh.weight->value.at(k, col);
    return a;
  };
  Tape<double> tape;
  auto s = cell(tape, tape.constant(x), {tape.constant(h0), tape.constant(Tensor<double>({1, 2}))});
  for (std::size_t j = 0; j < 2; ++j) {
    double r = sig(gi(j) + gh(j)), z = sig(gi(2 + j) + gh(2 + j));
    double n = std::tanh(gi(4 + j) + r * gh(4 + j));
    EXPECT_NEAR(s.h.value()[j], (1 - z) * n + z * h0[j], 1e-14);
  }
}

TEST(STGCN, SingleFramePoolingIsIdentity) {
  STGCNForecaster<double> m(tiny_config(), tiny_shape(0));
  randomize(m.parameters(), 61);
  ForecastInstance inst(make_clip(4, 0), 1, 3);
  auto ctx = forecast_context(inst, Mode::normal);
  Tape<double> tape;
  auto tok = m.graph(tape, inst.clip(), ctx.frames);
  auto logits = m.logits(tape, ctx).value();
  EXPECT_EQ(logits.shape(), (Shape{3, 3}));
  for (std::size_t k = 0; k < 3; ++k) {
    auto row = m.heads[k](tape, tok).value();
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(logits.at(k, c), row[c]);
  }
  auto ctx4 = forecast_context(make_clip(6, 0), 1, 4, Mode::normal);
  EXPECT_THROW(m.forecast(ctx4), ContractError);
}

// --- PM ----------------------------------------------------------------

ClipAnnotation chain_clip(const std::string& id, std::vector<std::size_t> preds) {
  ClipAnnotation c{id, 0, 1, {100, 100}, {}};
  for (std::size_t i = 0; i < preds.size(); ++i)
    c.frames.push_back({static_cast<int>(i), preds[i], {10, 10, 30, 30}, {40, 40, 60, 60}, {}});
  return c;
}

ModelShape pm_shape(std::size_t np) {
  std::vector<std::string> preds;
  for (std::size_t i = 0; i < np; ++i) preds.push_back(std::string(1, char('A' + i)));
  return {Vocabulary({"x", "y"}, preds), 0};
}

TEST(PM, HandCountRow) {
  PMForecaster<double> pm(ModelConfig{}, pm_shape(3));
  pm.fit({chain_clip("a", {0, 1, 0, 1, 0, 1}), chain_clip("b", {0, 2})});
  // A->B three times, A->C once
  EXPECT_DOUBLE_EQ(pm.transition(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(pm.transition(0, 1), 0.75);
  EXPECT_DOUBLE_EQ(pm.transition(0, 2), 0.25);
  // C never transitions: marginal over 8 frames (A 4, B 3, C 1)
  EXPECT_DOUBLE_EQ(pm.transition(2, 0), 4.0 / 8);
  EXPECT_DOUBLE_EQ(pm.transition(2, 1), 3.0 / 8);
  EXPECT_DOUBLE_EQ(pm.transition(2, 2), 1.0 / 8);
}

TEST(PM, DeterministicChainAndComposition) {
  PMForecaster<double> pm(ModelConfig{}, pm_shape(3));
  std::vector<ClipAnnotation> clips = {chain_clip("a", {0, 1, 2, 0, 1, 2})};
  pm.fit(clips);
  auto tm = compute_transition_matrix(clips, pm.shape().vocab);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(pm.transition(i, j), tm.probs[i][j]);
  EXPECT_EQ(pm.predict(0, 1), 1u);
  EXPECT_EQ(pm.predict(0, 2), 2u);
  EXPECT_EQ(pm.predict(0, 3), 0u);
  EXPECT_THROW(pm.predict(0, 0), ContractError);
  auto f = pm.forecast(ForecastInstance(chain_clip("q", {1, 2, 0, 1, 2}), 2, 3), Mode::normal);
  EXPECT_EQ(f.ids, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(PM, UniformRowsTieToLowestId) {
  PMForecaster<double> pm(ModelConfig{}, pm_shape(3));
  pm.fit({chain_clip("a", {0, 0, 1, 1, 2, 2, 0, 2, 1, 0})});
  // each row has one transition to every predicate
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(pm.predict(i, 1), 0u);
}

TEST(PM, NoTransitionsIsAnError) {
  PMForecaster<double> pm(ModelConfig{}, pm_shape(3));
  EXPECT_THROW(pm.fit({}), DataError);
  EXPECT_THROW(pm.fit({chain_clip("a", {1})}), DataError);
}

TEST(PM, ThreeStepMatchesPathEnumeration) {
  std::mt19937_64 rng(71);
  std::uniform_int_distribution<std::size_t> pick(0, 2);
  std::vector<ClipAnnotation> clips;
  for (int c = 0; c < 6; ++c) {
    std::vector<std::size_t> p;
    for (int i = 0; i < 7; ++i) p.push_back(pick(rng));
    clips.push_back(chain_clip("c" + std::to_string(c), p));
  }
  PMForecaster<double> pm(ModelConfig{}, pm_shape(3));
  pm.fit(clips);
  // independent oracle: recount, then enumerate all 3-step paths
  double cnt[3][3] = {};
  for (const auto& c : clips)
    for (std::size_t i = 0; i + 1 < c.frames.size(); ++i) cnt[c.frames[i].predicate][c.frames[i + 1].predicate] += 1;
  double m[3][3];
  for (int i = 0; i < 3; ++i) {
    double s = cnt[i][0] + cnt[i][1] + cnt[i][2];
    for (int j = 0; j < 3; ++j) m[i][j] = cnt[i][j] / s;
  }
  for (std::size_t last = 0; last < 3; ++last) {
    double p[3] = {};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        for (int c = 0; c < 3; ++c) p[c] += m[last][a] * m[a][b] * m[b][c];
    std::size_t best = 0;
    for (std::size_t c = 1; c < 3; ++c)
      if (p[c] > p[best]) best = c;
    EXPECT_EQ(pm.predict(last, 3), best);
    auto d = pm.distributions(last, 3)[2];
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(d[c], p[c], 1e-15);
  }
}

TEST(PM, NotTrainable) {
  PMForecaster<double> pm(ModelConfig{}, pm_shape(3));
  EXPECT_FALSE(pm.trainable());
  Tape<double> tape;
  auto ctx = forecast_context(chain_clip("a", {0, 1}), 1, 1, Mode::normal);
  EXPECT_THROW(pm.teacher_forced_logits(tape, ctx, {1}), UnsupportedError);
}

// --- checkpoints -------------------------------------------------------

TEST(ModelCheckpoint, RoundTripRebuildsModel) {
  auto path = (std::filesystem::temp_directory_path() / "relcast_model_rt.bin").string();
  for (const auto& name : model_names()) {
    auto m = make_model<double>(name, tiny_config(), tiny_shape(2));
    randomize(m->parameters(), 81);
    if (name == "pm") m->fit({make_clip(6, 2, 1), make_clip(6, 2, 2)});
    save_model(path, *m);
    auto loaded = load_model<double>(path);
    EXPECT_EQ(loaded->name(), name);
    EXPECT_EQ(loaded->config(), m->config());
    EXPECT_EQ(loaded->shape().vocab, m->shape().vocab);
    for (auto& p : m->parameters())
      for (auto& v : p->value.storage()) v = static_cast<double>(static_cast<float>(v));
    ForecastInstance inst(make_clip(6, 2, 9), 3, 3);
    auto a = m->forecast(inst, Mode::observation), b = loaded->forecast(inst, Mode::observation);
    EXPECT_EQ(a.ids, b.ids) << name;
    EXPECT_EQ(a.probs, b.probs) << name;
  }
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace relcast
