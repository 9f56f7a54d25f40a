#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "relcast/data.hpp"
#include "relcast/error.hpp"
#include "relcast/features.hpp"

namespace relcast {

using Matrix = std::vector<std::vector<double>>;

/// Feature-coupled rule: the predicate after frame t is
/// next_if_overlap[p_t] when IoU(subject, object) at t reaches the
/// threshold, next_otherwise[p_t] otherwise. Overlap happens with
/// probability contact_probability, independently per frame.
struct CouplingRule {
  double iou_threshold = 0.3;
  double contact_probability = 0.5;
  std::vector<std::size_t> next_if_overlap;
  std::vector<std::size_t> next_otherwise;
};

struct PairTransition {
  std::size_t subject = 0, object = 0;
  Matrix matrix;
};

struct GeneratorConfig {
  std::vector<std::string> objects;
  std::vector<std::string> predicates;
  Matrix transition;
  std::vector<PairTransition> pair_transitions;
  /// "stationary", "uniform", or explicit probabilities.
  std::string initial = "stationary";
  std::vector<double> initial_probs;
  std::size_t d_vis = 8;
  double noise_sigma = 0.1;
  ImageSize image_size{640, 480};
  double box_step_sigma = 8.0;
  std::size_t min_length = 5, max_length = 12;
  std::optional<CouplingRule> coupling;
  std::uint64_t seed = 0;

  std::size_t num_predicates() const { return predicates.size(); }
  const Matrix& matrix_for(std::size_t s, std::size_t o) const {
    for (const auto& p : pair_transitions)
      if (p.subject == s && p.object == o) return p.matrix;
    return transition;
  }
};

namespace detail {

inline void check_stochastic(const Matrix& m, std::size_t n, const std::string& what) {
  if (m.size() != n) {
    throw ConfigError(what + ": expected " + std::to_string(n) + " rows, got " +
                      std::to_string(m.size()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (m[i].size() != n) throw ConfigError(what + ": row " + std::to_string(i) + " has wrong length");
    double s = 0;
    for (double x : m[i]) {
      if (!(x >= 0.0) || !std::isfinite(x)) {
        throw ConfigError(what + ": row " + std::to_string(i) + " has a negative or non-finite entry");
      }
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) {
      throw ConfigError(what + ": row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
  }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  std::size_t n = a.size(), k = b.size(), m = b.empty() ? 0 : b[0].size();
  Matrix c(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < m; ++j) c[i][j] += a[i][p] * b[p][j];
  return c;
}

inline Matrix identity_matrix(std::size_t n) {
  Matrix m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
  return m;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::size_t draw(const std::vector<double>& probs, std::mt19937_64& rng) {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // rounding slack: last class with positive mass
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0) return i;
  return 0;
}

inline double round_to(double x, double step) { return std::round(x / step) * step; }

}  // namespace detail

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Stream seed of clip `index` under the dataset seed.
inline std::uint64_t clip_seed(std::uint64_t seed, std::uint64_t index) {
  return detail::splitmix64(detail::splitmix64(seed) ^ (index + 1));
}

inline Matrix matrix_power(const Matrix& m, std::size_t t) {
  Matrix result = detail::identity_matrix(m.size()), base = m;
  while (t) {
    if (t & 1) result = detail::matmul(result, base);
    base = detail::matmul(base, base);
    t >>= 1;
  }
  return result;
}

/// Long-run state distribution from `start`: the Cesaro average of
/// start * M^k over 2^40 steps, built by repeated doubling. Well defined for
/// periodic and reducible chains alike.
inline std::vector<double> stationary_distribution(const Matrix& m,
                                                   std::vector<double> start = {}) {
  const std::size_t n = m.size();
  if (start.empty()) start.assign(n, 1.0 / static_cast<double>(n));
  Matrix avg = detail::identity_matrix(n), pw = m;
  for (int k = 0; k < 40; ++k) {
    Matrix shifted = detail::matmul(avg, pw);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) avg[i][j] = 0.5 * (avg[i][j] + shifted[i][j]);
    pw = detail::matmul(pw, pw);
    // squaring doubles any row-sum drift; keep both matrices stochastic
    for (auto* mat : {&avg, &pw})
      for (auto& row : *mat) {
        double s = 0;
        for (double x : row) s += x;
        for (double& x : row) x /= s;
      }
  }
  std::vector<double> pi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) pi[j] += start[i] * avg[i][j];
  return pi;
}

inline void validate_generator_config(const GeneratorConfig& cfg) {
  const std::size_t np = cfg.num_predicates(), no = cfg.objects.size();
  if (no == 0 || np == 0) throw ConfigError("generator: empty object or predicate vocabulary");
  Vocabulary check(cfg.objects, cfg.predicates);
  (void)check;
  if (cfg.min_length < 3 || cfg.max_length > kMaxClipFrames || cfg.min_length > cfg.max_length) {
    throw ConfigError("generator: clip lengths must satisfy 3 <= min <= max <= 30");
  }
  if (!(cfg.noise_sigma >= 0.0) || !(cfg.box_step_sigma >= 0.0)) {
    throw ConfigError("generator: sigmas must be non-negative");
  }
  if (!(cfg.image_size.width > 0 && cfg.image_size.height > 0)) {
    throw ConfigError("generator: image size must be positive");
  }
  if (cfg.coupling) {
    const auto& r = *cfg.coupling;
    if (r.next_if_overlap.size() != np || r.next_otherwise.size() != np) {
      throw ConfigError("generator: coupling tables need one entry per predicate");
    }
    for (std::size_t i = 0; i < np; ++i)
      if (r.next_if_overlap[i] >= np || r.next_otherwise[i] >= np) {
        throw ConfigError("generator: coupling table entry out of range");
      }
    if (!(r.iou_threshold > 0.0 && r.iou_threshold <= 0.5)) {
      throw ConfigError("generator: coupling IoU threshold must lie in (0, 0.5]");
    }
    if (!(r.contact_probability >= 0.0 && r.contact_probability <= 1.0)) {
      throw ConfigError("generator: contact probability must lie in [0, 1]");
    }
  } else {
    detail::check_stochastic(cfg.transition, np, "generator transition");
  }
  for (const auto& p : cfg.pair_transitions) {
    if (p.subject >= no || p.object >= no) throw ConfigError("generator: pair category out of range");
    detail::check_stochastic(p.matrix, np, "generator pair transition");
  }
  if (cfg.initial == "explicit") {
    if (cfg.initial_probs.size() != np) throw ConfigError("generator: initial distribution has wrong length");
    double s = 0;
    for (double x : cfg.initial_probs) {
      if (!(x >= 0.0)) throw ConfigError("generator: initial distribution has a negative entry");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("generator: initial distribution does not sum to 1");
  } else if (cfg.initial != "stationary" && cfg.initial != "uniform") {
    throw ConfigError("generator: unknown initial distribution '" + cfg.initial + "'");
  }
}

inline nlohmann::json generator_config_to_json(const GeneratorConfig& cfg) {
  using nlohmann::json;
  json j = {{"objects", cfg.objects},
            {"predicates", cfg.predicates},
            {"transition", cfg.transition},
            {"initial", cfg.initial == "explicit" ? json(cfg.initial_probs) : json(cfg.initial)},
            {"visual", {{"dim", cfg.d_vis}, {"noise_sigma", cfg.noise_sigma}}},
            {"boxes",
             {{"image_size", {cfg.image_size.width, cfg.image_size.height}},
              {"step_sigma", cfg.box_step_sigma}}},
            {"length", {{"min", cfg.min_length}, {"max", cfg.max_length}}},
            {"seed", cfg.seed}};
  if (!cfg.pair_transitions.empty()) {
    json pairs = json::array();
    for (const auto& p : cfg.pair_transitions)
      pairs.push_back({{"subject", cfg.objects[p.subject]},
                       {"object", cfg.objects[p.object]},
                       {"matrix", p.matrix}});
    j["pair_transitions"] = pairs;
  }
  if (cfg.coupling) {
    auto names = [&](const std::vector<std::size_t>& ids) {
      std::vector<std::string> out;
      for (auto i : ids) out.push_back(cfg.predicates[i]);
      return out;
    };
    j["feature_coupled"] = {{"iou_threshold", cfg.coupling->iou_threshold},
                            {"contact_probability", cfg.coupling->contact_probability},
                            {"next_if_overlap", names(cfg.coupling->next_if_overlap)},
                            {"next_otherwise", names(cfg.coupling->next_otherwise)}};
  }
  return j;
}

inline GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig cfg;
  auto names = [&](const char* key, const char* prefix) {
    if (!j.contains(key)) throw ConfigError(std::string("generator: missing '") + key + "'");
    const auto& v = j.at(key);
    std::vector<std::string> out;
    if (v.is_number_unsigned()) {
      for (std::size_t i = 0; i < v.get<std::size_t>(); ++i) out.push_back(prefix + std::to_string(i));
    } else if (v.is_array()) {
      for (const auto& x : v) out.push_back(x.get<std::string>());
    } else {
      throw ConfigError(std::string("generator: '") + key + "' must be a count or a name list");
    }
    return out;
  };
  try {
    cfg.objects = names("objects", "obj");
    cfg.predicates = names("predicates", "rel");
    Vocabulary vocab(cfg.objects, cfg.predicates);
    auto pred_id = [&](const nlohmann::json& x) -> std::size_t {
      if (x.is_number_unsigned()) return x.get<std::size_t>();
      auto id = vocab.predicate_id(x.get<std::string>());
      if (!id) throw ConfigError("generator: unknown predicate '" + x.get<std::string>() + "'");
      return *id;
    };
    auto obj_id = [&](const nlohmann::json& x) -> std::size_t {
      if (x.is_number_unsigned()) return x.get<std::size_t>();
      auto id = vocab.object_id(x.get<std::string>());
      if (!id) throw ConfigError("generator: unknown object '" + x.get<std::string>() + "'");
      return *id;
    };
    if (j.contains("transition")) cfg.transition = j.at("transition").get<Matrix>();
    if (j.contains("pair_transitions")) {
      for (const auto& p : j.at("pair_transitions"))
        cfg.pair_transitions.push_back(
            {obj_id(p.at("subject")), obj_id(p.at("object")), p.at("matrix").get<Matrix>()});
    }
    if (j.contains("initial")) {
      const auto& v = j.at("initial");
      if (v.is_string()) {
        cfg.initial = v.get<std::string>();
      } else {
        cfg.initial = "explicit";
        cfg.initial_probs = v.get<std::vector<double>>();
      }
    }
    if (j.contains("visual")) {
      cfg.d_vis = j["visual"].value("dim", cfg.d_vis);
      cfg.noise_sigma = j["visual"].value("noise_sigma", cfg.noise_sigma);
    }
    if (j.contains("boxes")) {
      const auto& b = j.at("boxes");
      if (b.contains("image_size")) {
        auto s = b.at("image_size").get<std::vector<double>>();
        if (s.size() != 2) throw ConfigError("generator: image_size needs two numbers");
        cfg.image_size = {s[0], s[1]};
      }
      cfg.box_step_sigma = b.value("step_sigma", cfg.box_step_sigma);
    }
    if (j.contains("length")) {
      cfg.min_length = j["length"].value("min", cfg.min_length);
      cfg.max_length = j["length"].value("max", cfg.max_length);
    }
    if (j.contains("feature_coupled") && !j.at("feature_coupled").is_null()) {
      const auto& f = j.at("feature_coupled");
      CouplingRule r;
      r.iou_threshold = f.value("iou_threshold", r.iou_threshold);
      r.contact_probability = f.value("contact_probability", r.contact_probability);
      const std::size_t np = cfg.predicates.size();
      for (std::size_t p = 0; p < np; ++p) {
        r.next_if_overlap.push_back((p + 1) % np);
        r.next_otherwise.push_back((p + 2) % np);
      }
      if (f.contains("next_if_overlap")) {
        r.next_if_overlap.clear();
        for (const auto& x : f.at("next_if_overlap")) r.next_if_overlap.push_back(pred_id(x));
      }
      if (f.contains("next_otherwise")) {
        r.next_otherwise.clear();
        for (const auto& x : f.at("next_otherwise")) r.next_otherwise.push_back(pred_id(x));
      }
      cfg.coupling = r;
    }
    cfg.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
  validate_generator_config(cfg);
  return cfg;
}

inline std::string generator_config_hash(const GeneratorConfig& cfg) {
  return hex64(fnv1a64(generator_config_to_json(cfg).dump()));
}

/// Per-(role, predicate) prototype vectors, shared by every clip of a
/// dataset.
inline std::vector<std::vector<std::vector<double>>> visual_prototypes(const GeneratorConfig& cfg) {
  std::mt19937_64 rng(detail::splitmix64(cfg.seed ^ 0x70726f746fULL));
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<std::vector<std::vector<double>>> protos(
      3, std::vector<std::vector<double>>(cfg.num_predicates(), std::vector<double>(cfg.d_vis)));
  for (auto& role : protos)
    for (auto& p : role)
      for (auto& x : p) x = n01(rng);
  return protos;
}

namespace detail {

struct BoxWalker {
  double cx, cy, w, h;

  BoundingBox box() const { return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}; }

  void step(double sigma, const ImageSize& img, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, sigma);
    cx = reflect(cx + (sigma > 0 ? n(rng) : 0.0), w / 2, img.width - w / 2);
    cy = reflect(cy + (sigma > 0 ? n(rng) : 0.0), h / 2, img.height - h / 2);
  }

  static double reflect(double x, double lo, double hi) {
    if (hi <= lo) return lo;
    const double span = hi - lo;
    double u = std::fmod(x - lo, 2 * span);
    if (u < 0) u += 2 * span;
    return lo + (u <= span ? u : 2 * span - u);
  }
};

inline BoxWalker random_walker(const ImageSize& img, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> frac(0.12, 0.25);
  BoxWalker b;
  b.w = frac(rng) * img.width;
  b.h = frac(rng) * img.height;
  std::uniform_real_distribution<double> ux(b.w / 2, img.width - b.w / 2);
  std::uniform_real_distribution<double> uy(b.h / 2, img.height - b.h / 2);
  b.cx = ux(rng);
  b.cy = uy(rng);
  return b;
}

inline BoundingBox rounded(const BoundingBox& b, const ImageSize& img) {
  auto r = [](double x) { return round_to(x, 0.01); };
  return {std::max(0.0, r(b.x1)), std::max(0.0, r(b.y1)), std::min(img.width, r(b.x2)),
          std::min(img.height, r(b.y2))};
}

/// Object box overlapping `s` heavily (IoU well above any threshold <= 0.5).
inline BoundingBox contact_box(const BoundingBox& s, const ImageSize& img, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jit(-0.08, 0.08);
  double w = s.width() * (1 + jit(rng)), h = s.height() * (1 + jit(rng));
  double cx = s.cx() + jit(rng) * s.width(), cy = s.cy() + jit(rng) * s.height();
  BoundingBox b{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
  b = {std::max(0.0, b.x1), std::max(0.0, b.y1), std::min(img.width, b.x2), std::min(img.height, b.y2)};
  return b;
}

/// Object box disjoint from `s`, beside it on the roomier horizontal side.
inline BoundingBox apart_box(const BoundingBox& s, const ImageSize& img, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> frac(0.1, 0.2);
  double w = frac(rng) * img.width, h = frac(rng) * img.height;
  double gap = 0.02 * img.width;
  double left_room = s.x1, right_room = img.width - s.x2;
  double x1;
  if (right_room >= left_room) {
    w = std::min(w, right_room - gap);
    std::uniform_real_distribution<double> ux(s.x2 + gap, img.width - w);
    x1 = ux(rng);
  } else {
    w = std::min(w, left_room - gap);
    std::uniform_real_distribution<double> ux(0.0, s.x1 - gap - w);
    x1 = ux(rng);
  }
  std::uniform_real_distribution<double> uy(0.0, img.height - h);
  double y1 = uy(rng);
  return {x1, y1, x1 + w, y1 + h};
}

}  // namespace detail

/// Initial predicate distribution of a (subject, object) pair.
inline std::vector<double> initial_distribution(const GeneratorConfig& cfg, std::size_t s,
                                                std::size_t o) {
  const std::size_t np = cfg.num_predicates();
  if (cfg.initial == "explicit") return cfg.initial_probs;
  if (cfg.initial == "uniform" || cfg.coupling) return std::vector<double>(np, 1.0 / np);
  return stationary_distribution(cfg.matrix_for(s, o));
}

inline ClipAnnotation sample_clip(const GeneratorConfig& cfg, std::mt19937_64& rng,
                                  const std::string& clip_id,
                                  const std::vector<std::vector<std::vector<double>>>& protos) {
  const std::size_t no = cfg.objects.size();
  ClipAnnotation clip;
  clip.clip_id = clip_id;
  clip.image_size = cfg.image_size;
  clip.subject_category = std::uniform_int_distribution<std::size_t>(0, no - 1)(rng);
  clip.object_category = std::uniform_int_distribution<std::size_t>(0, no - 1)(rng);
  const std::size_t len =
      std::uniform_int_distribution<std::size_t>(cfg.min_length, cfg.max_length)(rng);
  const Matrix& m = cfg.matrix_for(clip.subject_category, clip.object_category);

  detail::BoxWalker subj = detail::random_walker(cfg.image_size, rng);
  detail::BoxWalker obj = detail::random_walker(cfg.image_size, rng);
  std::size_t p = detail::draw(initial_distribution(cfg, clip.subject_category, clip.object_category), rng);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma > 0 ? cfg.noise_sigma : 1.0);
  std::uniform_int_distribution<int> gap(1, 3);
  int t = 0;
  for (std::size_t i = 0; i < len; ++i) {
    if (i > 0) t += gap(rng);
    KeyFrame f;
    f.t = t;
    f.predicate = p;
    f.subject_box = detail::rounded(subj.box(), cfg.image_size);
    if (cfg.coupling) {
      bool contact = std::bernoulli_distribution(cfg.coupling->contact_probability)(rng);
      BoundingBox b = contact ? detail::contact_box(f.subject_box, cfg.image_size, rng)
                              : detail::apart_box(f.subject_box, cfg.image_size, rng);
      f.object_box = detail::rounded(b, cfg.image_size);
    } else {
      f.object_box = detail::rounded(obj.box(), cfg.image_size);
    }
    if (cfg.d_vis > 0) {
      VisualEvidence ve;
      for (int role = 0; role < 3; ++role) {
        std::vector<double> v = protos[role][p];
        if (cfg.noise_sigma > 0)
          for (auto& x : v) x += noise(rng);
        (role == 0 ? ve.subject : role == 1 ? ve.object : ve.union_box) = std::move(v);
      }
      f.visual = std::move(ve);
    }
    if (cfg.coupling) {
      // decided on the boxes as written, so the rule is recoverable from the file
      bool overlap = iou(f.subject_box, f.object_box) >= cfg.coupling->iou_threshold;
      p = overlap ? cfg.coupling->next_if_overlap[p] : cfg.coupling->next_otherwise[p];
    } else {
      p = detail::draw(m[p], rng);
    }
    clip.frames.push_back(std::move(f));
    subj.step(cfg.box_step_sigma, cfg.image_size, rng);
    obj.step(cfg.box_step_sigma, cfg.image_size, rng);
  }
  return clip;
}

struct GeneratedDataset {
  Corpus corpus;
  nlohmann::json manifest;
};

inline GeneratedDataset generate_dataset(const GeneratorConfig& cfg, std::size_t n_clips) {
  validate_generator_config(cfg);
  if (n_clips < 1) throw ConfigError("generator: n_clips must be at least 1");
  GeneratedDataset out;
  out.corpus.vocab = Vocabulary(cfg.objects, cfg.predicates);
  auto protos = visual_prototypes(cfg);
  char id[32];
  for (std::size_t i = 0; i < n_clips; ++i) {
    std::mt19937_64 rng(clip_seed(cfg.seed, i));
    std::snprintf(id, sizeof id, "clip_%05zu", i);
    out.corpus.clips.push_back(sample_clip(cfg, rng, id, protos));
    validate_clip(out.corpus.clips.back(), out.corpus.vocab);
  }
  out.manifest = {{"config_hash", generator_config_hash(cfg)},
                  {"seed", cfg.seed},
                  {"n_clips", n_clips},
                  {"config", generator_config_to_json(cfg)}};
  return out;
}

/// Expected accuracy of the best argmax forecaster at horizon t under the
/// generating chain, weighting last-observed states by the stationary
/// distribution and (subject, object) pairs uniformly.
inline double bayes_optimal_accuracy(const GeneratorConfig& cfg, std::size_t t) {
  if (cfg.coupling) {
    throw UnsupportedError("bayes_optimal_accuracy: feature-coupled generators have no pure Markov oracle");
  }
  if (t < 1) throw ContractError("bayes_optimal_accuracy: horizon must be >= 1");
  const std::size_t no = cfg.objects.size();
  auto accuracy_of = [&](const Matrix& m) {
    Matrix mt = matrix_power(m, t);
    std::vector<double> pi = stationary_distribution(m);
    double acc = 0;
    for (std::size_t i = 0; i < m.size(); ++i)
      acc += pi[i] * *std::max_element(mt[i].begin(), mt[i].end());
    return acc;
  };
  if (cfg.pair_transitions.empty()) return accuracy_of(cfg.transition);
  double total = 0;
  for (std::size_t s = 0; s < no; ++s)
    for (std::size_t o = 0; o < no; ++o) total += accuracy_of(cfg.matrix_for(s, o));
  return total / static_cast<double>(no * no);
}

/// Predicate transition matrix induced by a coupling rule once contact is
/// marginalised out.
inline Matrix coupled_transition(const GeneratorConfig& cfg) {
  if (!cfg.coupling) throw ContractError("coupled_transition: generator is not feature-coupled");
  const auto& r = *cfg.coupling;
  const std::size_t np = cfg.num_predicates();
  Matrix m(np, std::vector<double>(np, 0.0));
  for (std::size_t p = 0; p < np; ++p) {
    m[p][r.next_if_overlap[p]] += r.contact_probability;
    m[p][r.next_otherwise[p]] += 1.0 - r.contact_probability;
  }
  return m;
}

/// Accuracy ceiling at t=1 of any forecaster blind to boxes on a
/// feature-coupled corpus. Contact is independent of the predicate history,
/// so the best such forecaster is the argmax of the marginalised chain.
inline double feature_blind_optimum(const GeneratorConfig& cfg) {
  Matrix m = coupled_transition(cfg);
  std::vector<double> pi = stationary_distribution(m);
  double acc = 0;
  for (std::size_t p = 0; p < m.size(); ++p)
    acc += pi[p] * *std::max_element(m[p].begin(), m[p].end());
  return acc;
}

}  // namespace relcast
