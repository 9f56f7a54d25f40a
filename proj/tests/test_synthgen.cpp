#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "relcast/curation.hpp"
#include "relcast/stats.hpp"
#include "relcast/synthgen.hpp"

namespace relcast {
namespace {

GeneratorConfig base_config() {
  GeneratorConfig cfg;
  cfg.objects = {"person", "cup"};
  cfg.predicates = {"A", "B", "C"};
  cfg.transition = {{0, 1, 0}, {0, 0, 1}, {1, 0, 0}};
  cfg.d_vis = 4;
  cfg.min_length = 5;
  cfg.max_length = 5;
  cfg.seed = 11;
  return cfg;
}

GeneratorConfig coupled_config(double q = 0.5) {
  GeneratorConfig cfg = base_config();
  cfg.predicates = {"A", "B", "C", "D"};
  cfg.transition.clear();
  CouplingRule r;
  r.iou_threshold = 0.3;
  r.contact_probability = q;
  r.next_if_overlap = {1, 2, 3, 0};
  r.next_otherwise = {2, 3, 0, 1};
  cfg.coupling = r;
  cfg.min_length = 6;
  cfg.max_length = 12;
  return cfg;
}

TEST(SampleClip, DeterministicChainFromA) {
  GeneratorConfig cfg = base_config();
  cfg.initial = "explicit";
  cfg.initial_probs = {1, 0, 0};
  auto ds = generate_dataset(cfg, 4);
  for (const auto& c : ds.corpus.clips)
    EXPECT_EQ(c.predicates(), (std::vector<std::size_t>{0, 1, 2, 0, 1}));
}

TEST(SampleClip, ZeroNoiseReproducesPrototypes) {
  GeneratorConfig cfg = base_config();
  cfg.noise_sigma = 0.0;
  auto protos = visual_prototypes(cfg);
  auto ds = generate_dataset(cfg, 3);
  for (const auto& c : ds.corpus.clips)
    for (const auto& f : c.frames) {
      ASSERT_TRUE(f.visual);
      EXPECT_EQ(f.visual->subject, protos[0][f.predicate]);
      EXPECT_EQ(f.visual->object, protos[1][f.predicate]);
      EXPECT_EQ(f.visual->union_box, protos[2][f.predicate]);
    }
}

TEST(SampleClip, EmpiricalTransitionsMatchConfig) {
  GeneratorConfig cfg = base_config();
  cfg.transition = {{0.5, 0.3, 0.2}, {0.1, 0.6, 0.3}, {0.25, 0.25, 0.5}};
  cfg.min_length = 3;
  cfg.max_length = 12;
  cfg.d_vis = 0;
  auto ds = generate_dataset(cfg, 10000);
  auto m = compute_transition_matrix(ds.corpus.clips, ds.corpus.vocab);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(m.probs[i][j], cfg.transition[i][j], 0.02);
}

TEST(SampleClip, PairSpecificMatricesAreUsed) {
  GeneratorConfig cfg = base_config();
  cfg.pair_transitions.push_back({1, 1, {{1, 0, 0}, {1, 0, 0}, {1, 0, 0}}});
  auto ds = generate_dataset(cfg, 200);
  std::size_t checked = 0;
  for (const auto& c : ds.corpus.clips) {
    auto p = c.predicates();
    bool pair = c.subject_category == 1 && c.object_category == 1;
    for (std::size_t i = 1; i < p.size(); ++i) {
      EXPECT_EQ(p[i], pair ? 0u : (p[i - 1] + 1) % 3);
      checked += pair;
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST(GenerateDataset, SameSeedByteIdentical) {
  GeneratorConfig cfg = coupled_config();
  auto dir = std::filesystem::temp_directory_path();
  std::string a = (dir / "relcast_gen_a.json").string(), b = (dir / "relcast_gen_b.json").string();
  save_clips(a, generate_dataset(cfg, 50).corpus);
  save_clips(b, generate_dataset(cfg, 50).corpus);
  EXPECT_EQ(read_text_file(a), read_text_file(b));
  cfg.seed += 1;
  save_clips(b, generate_dataset(cfg, 50).corpus);
  EXPECT_NE(read_text_file(a), read_text_file(b));
  std::remove(a.c_str());
  std::remove(b.c_str());
}

TEST(GenerateDataset, LengthsInRangeAndInvariantsHold) {
  for (auto cfg : {base_config(), coupled_config()}) {
    cfg.min_length = 3;
    cfg.max_length = 30;
    auto ds = generate_dataset(cfg, 300);
    std::set<std::size_t> lengths;
    for (const auto& c : ds.corpus.clips) {
      EXPECT_GE(c.frames.size(), 3u);
      EXPECT_LE(c.frames.size(), 30u);
      lengths.insert(c.frames.size());
      validate_clip(c, ds.corpus.vocab);
    }
    EXPECT_GT(lengths.size(), 10u);
    // the JSON form re-validates on load
    Corpus again = corpus_from_json(corpus_to_json(ds.corpus));
    EXPECT_EQ(again.clips.size(), 300u);
  }
}

TEST(GenerateDataset, ManifestRecordsHashAndSeed) {
  GeneratorConfig cfg = base_config();
  auto ds = generate_dataset(cfg, 2);
  EXPECT_EQ(ds.manifest["seed"], 11u);
  EXPECT_EQ(ds.manifest["config_hash"], generator_config_hash(cfg));
  GeneratorConfig other = cfg;
  other.noise_sigma = 0.2;
  EXPECT_NE(generator_config_hash(other), generator_config_hash(cfg));
  EXPECT_EQ(generator_config_hash(generator_config_from_json(generator_config_to_json(cfg))),
            generator_config_hash(cfg));
}

TEST(GenerateDataset, CategoryAverageSplitFeasible) {
  GeneratorConfig cfg;
  cfg.objects = {"person", "dog", "cup"};
  for (int i = 0; i < 13; ++i) cfg.predicates.push_back("r" + std::to_string(i));
  cfg.transition.assign(13, std::vector<double>(13, 0.4 / 12));
  for (int i = 0; i < 13; ++i) cfg.transition[i][i] = 0.6;
  cfg.seed = 3;
  cfg.min_length = 5;
  cfg.max_length = 15;
  auto ds = generate_dataset(cfg, 650);
  auto split = split_train_test(ds.corpus.clips, SplitMode::category_average(20), 1);
  EXPECT_EQ(split.test.size(), 13u * 20u);
  EXPECT_EQ(split.train.size() + split.test.size(), 650u);
}

TEST(GenerateDataset, CoupledRuleRecoverableFromBoxes) {
  GeneratorConfig cfg = coupled_config();
  auto ds = generate_dataset(cfg, 400);
  std::size_t overlap = 0, apart = 0;
  for (const auto& c : ds.corpus.clips)
    for (std::size_t i = 0; i + 1 < c.frames.size(); ++i) {
      const auto& f = c.frames[i];
      double v = iou(f.subject_box, f.object_box);
      bool hit = v >= cfg.coupling->iou_threshold;
      // the two branches are well separated from the threshold
      EXPECT_TRUE(v == 0.0 || v > 0.5) << v;
      std::size_t expect = hit ? cfg.coupling->next_if_overlap[f.predicate]
                               : cfg.coupling->next_otherwise[f.predicate];
      EXPECT_EQ(c.frames[i + 1].predicate, expect);
      (hit ? overlap : apart) += 1;
    }
  double share = static_cast<double>(overlap) / static_cast<double>(overlap + apart);
  EXPECT_NEAR(share, 0.5, 0.03);
}

TEST(GeneratorConfig, JsonParsingAndValidation) {
  std::string text = R"({
    // comments are allowed
    "objects": 2, "predicates": ["x", "y"],
    "transition": [[0.5, 0.5], [0.2, 0.8]],
    "length": {"min": 4, "max": 9}, "seed": 5
  })";
  auto cfg = generator_config_from_json(parse_json_text(text, "gen"));
  EXPECT_EQ(cfg.objects, (std::vector<std::string>{"obj0", "obj1"}));
  EXPECT_EQ(cfg.max_length, 9u);

  auto j = generator_config_to_json(cfg);
  j["transition"][1] = {0.2, 0.7};
  EXPECT_THROW(generator_config_from_json(j), ConfigError);
  j = generator_config_to_json(cfg);
  j["length"]["min"] = 2;
  EXPECT_THROW(generator_config_from_json(j), ConfigError);
  j = generator_config_to_json(cfg);
  j["length"]["max"] = 31;
  EXPECT_THROW(generator_config_from_json(j), ConfigError);
  j = generator_config_to_json(cfg);
  j["visual"]["noise_sigma"] = -1.0;
  EXPECT_THROW(generator_config_from_json(j), ConfigError);
  j = generator_config_to_json(cfg);
  j["feature_coupled"] = {{"next_if_overlap", {"x", "z"}}};
  EXPECT_THROW(generator_config_from_json(j), ConfigError);
}

// 3x3 stationary distribution by Cramer's rule on pi (M - I) = 0, sum pi = 1,
// replacing the last balance equation by the normalisation.
std::vector<double> stationary_cramer(const Matrix& m) {
  double a[3][3], b[3] = {0, 0, 1};
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) a[j][i] = (j < 2) ? m[i][j] - (i == j ? 1.0 : 0.0) : 1.0;
  auto det = [](double x[3][3]) {
    return x[0][0] * (x[1][1] * x[2][2] - x[1][2] * x[2][1]) -
           x[0][1] * (x[1][0] * x[2][2] - x[1][2] * x[2][0]) +
           x[0][2] * (x[1][0] * x[2][1] - x[1][1] * x[2][0]);
  };
  double d = det(a);
  std::vector<double> pi(3);
  for (int k = 0; k < 3; ++k) {
    double c[3][3];
    for (int r = 0; r < 3; ++r)
      for (int s = 0; s < 3; ++s) c[r][s] = (s == k) ? b[r] : a[r][s];
    pi[k] = det(c) / d;
  }
  return pi;
}

TEST(BayesOptimal, DeterministicAndUniformChains) {
  GeneratorConfig cfg = base_config();
  for (std::size_t t = 1; t <= 6; ++t) EXPECT_NEAR(bayes_optimal_accuracy(cfg, t), 1.0, 1e-9);
  cfg.predicates = {"A", "B"};
  cfg.transition = {{0.5, 0.5}, {0.5, 0.5}};
  for (std::size_t t = 1; t <= 4; ++t) EXPECT_NEAR(bayes_optimal_accuracy(cfg, t), 0.5, 1e-12);
}

TEST(BayesOptimal, ThreeStateChainMatchesEnumeration) {
  GeneratorConfig cfg = base_config();
  cfg.transition = {{.7, .2, .1}, {.1, .8, .1}, {.3, .3, .4}};
  auto pi = stationary_cramer(cfg.transition);
  auto pi_gen = stationary_distribution(cfg.transition);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(pi_gen[i], pi[i], 1e-9);

  double t1 = 0;
  for (int i = 0; i < 3; ++i)
    t1 += pi[i] * std::max({cfg.transition[i][0], cfg.transition[i][1], cfg.transition[i][2]});
  EXPECT_NEAR(bayes_optimal_accuracy(cfg, 1), t1, 1e-9);

  double t2 = 0;
  for (int i = 0; i < 3; ++i) {
    double best = 0;
    for (int j = 0; j < 3; ++j) {
      double p = 0;
      for (int k = 0; k < 3; ++k) p += cfg.transition[i][k] * cfg.transition[k][j];
      best = std::max(best, p);
    }
    t2 += pi[i] * best;
  }
  EXPECT_NEAR(bayes_optimal_accuracy(cfg, 2), t2, 1e-9);
}

TEST(BayesOptimal, PeriodicChainStationaryIsUniform) {
  auto pi = stationary_distribution({{0, 1}, {1, 0}});
  EXPECT_NEAR(pi[0], 0.5, 1e-9);
  EXPECT_NEAR(pi[1], 0.5, 1e-9);
}

TEST(BayesOptimal, CoupledConfigUnsupported) {
  EXPECT_THROW(bayes_optimal_accuracy(coupled_config(), 1), UnsupportedError);
  EXPECT_NEAR(feature_blind_optimum(coupled_config(0.5)), 0.5, 1e-9);
  EXPECT_NEAR(feature_blind_optimum(coupled_config(0.7)), 0.7, 1e-9);
}

}  // namespace
}  // namespace relcast
