#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "relcast/features.hpp"
#include "relcast/optim.hpp"

namespace relcast {
namespace {

BoundingBox random_box(std::mt19937_64& rng, double w = 100, double h = 100) {
  std::uniform_real_distribution<double> u(0, 1);
  double x1 = u(rng) * w * 0.8, y1 = u(rng) * h * 0.8;
  return {x1, y1, x1 + 1 + u(rng) * (w - x1 - 1), y1 + 1 + u(rng) * (h - y1 - 1)};
}

TEST(BoxDelta, Examples) {
  BoundingBox b{0, 0, 1, 1};
  auto d = box_delta(b, b);
  for (double x : d) EXPECT_EQ(x, 0.0);
  d = box_delta(b, {1, 0, 2, 1});
  EXPECT_DOUBLE_EQ(d[0], 1.0);
  EXPECT_DOUBLE_EQ(d[1], 0.0);
  EXPECT_DOUBLE_EQ(d[2], 0.0);
  EXPECT_DOUBLE_EQ(d[3], 0.0);
  d = box_delta({1, 1, 3, 3}, {0, 0, 4, 4});
  EXPECT_DOUBLE_EQ(d[0], 0.0);
  EXPECT_DOUBLE_EQ(d[1], 0.0);
  EXPECT_DOUBLE_EQ(d[2], std::log(2.0));
  EXPECT_DOUBLE_EQ(d[3], std::log(2.0));
  EXPECT_THROW(box_delta({0, 0, 0, 1}, b), DataError);
}

TEST(Iou, Examples) {
  BoundingBox a{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, {2, 2, 3, 3}), 0.0);
  EXPECT_EQ(iou(a, {1, 0, 2, 1}), 0.0);
  // overlap 1/2, union 3/2
  EXPECT_DOUBLE_EQ(iou(a, {0.5, 0, 1.5, 1}), 1.0 / 3.0);
}

TEST(CenterDist, Examples) {
  ImageSize img{3, 4};
  BoundingBox a{0, 0, 2, 2};
  EXPECT_EQ(center_dist(a, a, img), 0.0);
  // centers at (0,0) and (3,4) on a 3x4 image: distance 5 over diagonal 5
  EXPECT_DOUBLE_EQ(center_dist({-1, -1, 1, 1}, {2, 3, 4, 5}, img), 1.0);
  ImageSize big{30, 40};
  EXPECT_DOUBLE_EQ(center_dist({-1, -1, 1, 1}, {2, 3, 4, 5}, big), 0.1);
  EXPECT_THROW(center_dist(a, a, {0, 0}), ContractError);
}

TEST(SpatialFeature, IdenticalBoxes) {
  BoundingBox b{10, 20, 30, 50};
  auto f = spatial_feature(b, b, {100, 100});
  EXPECT_EQ(f.size(), kSpatialDim);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(f[i], 0.0);
  EXPECT_EQ(f[12], 1.0);
  EXPECT_EQ(f[13], 0.0);
}

TEST(SpatialFeature, CompositionalOracle) {
  std::mt19937_64 rng(4);
  ImageSize img{100, 100};
  for (int trial = 0; trial < 200; ++trial) {
    BoundingBox s = random_box(rng), o = random_box(rng);
    BoundingBox u{std::min(s.x1, o.x1), std::min(s.y1, o.y1), std::max(s.x2, o.x2),
                  std::max(s.y2, o.y2)};
    std::vector<double> expect;
    for (auto [a, b] : {std::pair{s, o}, std::pair{s, u}, std::pair{o, u}}) {
      expect.push_back((b.cx() - a.cx()) / a.width());
      expect.push_back((b.cy() - a.cy()) / a.height());
      expect.push_back(std::log(b.width() / a.width()));
      expect.push_back(std::log(b.height() / a.height()));
    }
    expect.push_back(iou(s, o));
    expect.push_back(center_dist(s, o, img));
    auto f = spatial_feature(s, o, img);
    for (std::size_t i = 0; i < kSpatialDim; ++i) {
      EXPECT_DOUBLE_EQ(f[i], expect[i]);
      EXPECT_TRUE(std::isfinite(f[i]));
    }
    EXPECT_GE(f[12], 0.0);
    EXPECT_LE(f[12], 1.0);
    EXPECT_GE(f[13], 0.0);
  }
}

TEST(SpatialFeature, TranslationAndSymmetryProperties) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> shift(-50, 50);
  for (int trial = 0; trial < 200; ++trial) {
    BoundingBox s = random_box(rng), o = random_box(rng);
    EXPECT_EQ(iou(s, o), iou(o, s));
    auto d = box_delta(s, s);
    for (double x : d) EXPECT_EQ(x, 0.0);
    double dx = shift(rng), dy = shift(rng);
    auto move = [&](BoundingBox b) { return BoundingBox{b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy}; };
    auto f = spatial_feature(s, o, {100, 100});
    auto g = spatial_feature(move(s), move(o), {100, 100});
    for (std::size_t i = 0; i < kSpatialDim; ++i) EXPECT_NEAR(f[i], g[i], 1e-9);
  }
}

TEST(SemanticEmbedding, LookupAndGradients) {
  std::mt19937_64 rng(1);
  ParameterSet<double> params;
  SemanticEmbedding<double> emb(params, "sem", 5, 3, rng);
  Tape<double> tape;
  auto a = emb(tape, 2), b = emb(tape, 2);
  EXPECT_EQ(a.value(), b.value());
  tape.backward(sum(a));
  const auto& g = emb.table->grad;
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(g.at(r, c), r == 2 ? 1.0 : 0.0);
  Tape<double> t2;
  EXPECT_THROW(emb(t2, 5), IndexError);
}

TEST(SemanticEmbedding, AdamStepChangesOnlyTouchedRow) {
  std::mt19937_64 rng(1);
  ParameterSet<double> params;
  SemanticEmbedding<double> emb(params, "sem", 5, 3, rng);
  Tensor<double> before = emb.table->value;
  Tape<double> tape;
  tape.backward(sum(mul(emb(tape, 3), emb(tape, 3))));
  AdamState<double> adam;
  adam.learning_rate = 0.1;
  adam_step(adam, params);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      if (r == 3) {
        EXPECT_NE(emb.table->value.at(r, c), before.at(r, c));
      } else {
        EXPECT_EQ(emb.table->value.at(r, c), before.at(r, c));
      }
    }
}

TEST(SemanticEmbedding, ImportRejectsUnknownNames) {
  std::mt19937_64 rng(1);
  ParameterSet<double> params;
  Vocabulary vocab({"person", "cup"}, {"hold"});
  SemanticEmbedding<double> emb(params, "sem", 2, 2, rng);
  import_embeddings(nlohmann::json{{"cup", {0.5, -0.5}}}, vocab, emb);
  EXPECT_EQ(emb.table->value.at(1, 0), 0.5);
  EXPECT_EQ(emb.table->value.at(1, 1), -0.5);
  EXPECT_THROW(import_embeddings(nlohmann::json{{"dog", {0.5, 0.5}}}, vocab, emb), DataError);
  EXPECT_THROW(import_embeddings(nlohmann::json{{"cup", {0.5}}}, vocab, emb), DataError);
}

KeyFrame frame_with(std::size_t predicate, bool visual) {
  KeyFrame f{3, predicate, {0, 0, 5, 5}, {1, 1, 6, 6}, {}};
  if (visual) f.visual = VisualEvidence{{1, 2}, {3, 4}, {5, 6}};
  return f;
}

TEST(VisualSource, AnnotatedVectorsVerbatim) {
  std::mt19937_64 rng(1);
  ParameterSet<double> params;
  VisualSource<double> vis(params, "vis", 3, 2, true, rng);
  EXPECT_EQ(params.size(), 0u);
  Tape<double> tape;
  EXPECT_EQ(vis(tape, frame_with(1, true), Role::object, false).value(),
            (Tensor<double>({1, 2}, {3, 4})));
  EXPECT_EQ(vis(tape, frame_with(1, true), Role::union_box, true).value(),
            (Tensor<double>({1, 2}, {5, 6})));
  EXPECT_THROW(vis(tape, frame_with(1, false), Role::subject, false), DataError);
}

TEST(VisualSource, FallbackByRoleAndPredicate) {
  std::mt19937_64 rng(1);
  ParameterSet<double> params;
  VisualSource<double> vis(params, "vis", 3, 4, false, rng);
  Tape<double> tape;
  auto a = vis(tape, frame_with(2, false), Role::subject, false);
  auto b = vis(tape, frame_with(2, false), Role::subject, false);
  auto c = vis(tape, frame_with(2, false), Role::object, false);
  auto m1 = vis(tape, frame_with(0, false), Role::subject, true);
  auto m2 = vis(tape, frame_with(1, false), Role::subject, true);
  EXPECT_EQ(a.value(), b.value());
  EXPECT_NE(a.value(), c.value());
  EXPECT_EQ(m1.value(), m2.value());
  EXPECT_NE(m1.value(), a.value());
}

}  // namespace
}  // namespace relcast
