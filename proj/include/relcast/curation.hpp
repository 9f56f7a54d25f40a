#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "relcast/data.hpp"
#include "relcast/error.hpp"

namespace relcast {

struct QuantityFilterResult {
  Corpus corpus;
  std::vector<std::string> removed_predicates;
  std::size_t dropped_frames = 0;
  std::size_t dropped_clips = 0;
};

/// Quantity rule: drops predicate classes whose share of all frame-level
/// predicate annotations is below `threshold`, the frames bearing them, and
/// clips left empty. Surviving predicates are re-indexed densely in their
/// original order.
inline QuantityFilterResult quantity_filter(const Corpus& in, double threshold = 0.01) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ContractError("quantity_filter: threshold must lie in (0, 1)");
  }
  const std::size_t np = in.vocab.num_predicates();
  std::vector<std::size_t> counts(np, 0);
  std::size_t total = 0;
  for (const auto& c : in.clips)
    for (const auto& f : c.frames) {
      ++counts[f.predicate];
      ++total;
    }
  QuantityFilterResult out;
  std::vector<std::optional<std::size_t>> remap(np);
  std::vector<std::string> kept;
  for (std::size_t p = 0; p < np; ++p) {
    double share = total ? static_cast<double>(counts[p]) / static_cast<double>(total) : 0.0;
    if (share < threshold) {
      out.removed_predicates.push_back(in.vocab.predicate_name(p));
    } else {
      remap[p] = kept.size();
      kept.push_back(in.vocab.predicate_name(p));
    }
  }
  if (kept.empty()) throw DataError("quantity_filter: every predicate class was filtered out");
  out.corpus.vocab = Vocabulary(in.vocab.objects(), kept);
  for (const auto& c : in.clips) {
    ClipAnnotation clip = c;
    clip.frames.clear();
    for (const auto& f : c.frames) {
      if (!remap[f.predicate]) {
        ++out.dropped_frames;
        continue;
      }
      KeyFrame k = f;
      k.predicate = *remap[f.predicate];
      clip.frames.push_back(std::move(k));
    }
    if (clip.frames.empty()) {
      ++out.dropped_clips;
      continue;
    }
    validate_clip(clip, out.corpus.vocab, {0});
    out.corpus.clips.push_back(std::move(clip));
  }
  return out;
}

/// Collapses every run of a repeated predicate to its first and last frame.
/// Clips with fewer than `min_distinct` distinct predicates are rejected
/// (nullopt).
inline std::optional<ClipAnnotation> select_key_frames(const ClipAnnotation& clip,
                                                       std::size_t min_distinct = 3) {
  std::set<std::size_t> distinct;
  for (const auto& f : clip.frames) distinct.insert(f.predicate);
  if (distinct.size() < min_distinct) return std::nullopt;
  ClipAnnotation out = clip;
  out.frames.clear();
  const auto& fr = clip.frames;
  for (std::size_t i = 0; i < fr.size();) {
    std::size_t j = i;
    while (j + 1 < fr.size() && fr[j + 1].predicate == fr[i].predicate) ++j;
    out.frames.push_back(fr[i]);
    if (j > i) out.frames.push_back(fr[j]);
    i = j + 1;
  }
  return out;
}

inline ClipAnnotation truncate_clip(const ClipAnnotation& clip,
                                    std::size_t max_frames = kMaxClipFrames) {
  ClipAnnotation out = clip;
  if (out.frames.size() > max_frames) out.frames.resize(max_frames);
  return out;
}

/// Most frequent predicate of a clip, ties to the lowest id.
inline std::size_t dominant_predicate(const ClipAnnotation& clip) {
  std::map<std::size_t, std::size_t> counts;
  for (const auto& f : clip.frames) ++counts[f.predicate];
  std::size_t best = 0, best_count = 0;
  for (const auto& [p, n] : counts) {
    if (n > best_count) {
      best = p;
      best_count = n;
    }
  }
  return best;
}

struct SplitMode {
  enum class Kind { category_average, random };
  Kind kind = Kind::random;
  /// category_average: clips drawn per dominant-predicate class.
  std::size_t per_class = 50;
  /// random: test-set size and per-class minimum.
  std::size_t total = 400;
  std::size_t min_per_class = 1;

  static SplitMode category_average(std::size_t n) {
    SplitMode m;
    m.kind = Kind::category_average;
    m.per_class = n;
    return m;
  }
  static SplitMode random(std::size_t n_total, std::size_t min_per_class = 1) {
    SplitMode m;
    m.kind = Kind::random;
    m.total = n_total;
    m.min_per_class = min_per_class;
    return m;
  }
};

struct SplitResult {
  std::vector<ClipAnnotation> train, test;
  std::vector<std::string> warnings;
};

/// Disjoint, covering train/test split, deterministic under `seed`. Clips
/// keep their input order within each side.
inline SplitResult split_train_test(const std::vector<ClipAnnotation>& clips,
                                    const SplitMode& mode, std::uint64_t seed) {
  std::vector<std::size_t> order(clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::map<std::size_t, std::vector<std::size_t>> by_class;  // shuffled order
  for (std::size_t i : order) by_class[dominant_predicate(clips[i])].push_back(i);

  std::vector<bool> in_test(clips.size(), false);
  SplitResult out;
  auto deficient_error = [](const std::vector<std::size_t>& classes, const std::string& why) {
    std::string msg = "split quota infeasible (" + why + "); deficient classes:";
    for (std::size_t c : classes) msg += " " + std::to_string(c);
    throw QuotaError(msg);
  };

  if (mode.kind == SplitMode::Kind::category_average) {
    std::vector<std::size_t> deficient;
    for (const auto& [cls, members] : by_class) {
      if (members.size() < mode.per_class) deficient.push_back(cls);
    }
    if (!deficient.empty()) {
      deficient_error(deficient, "fewer than " + std::to_string(mode.per_class) + " clips");
    }
    for (const auto& [cls, members] : by_class)
      for (std::size_t k = 0; k < mode.per_class; ++k) in_test[members[k]] = true;
  } else {
    if (mode.total > clips.size()) {
      throw QuotaError("split quota infeasible: test size " + std::to_string(mode.total) +
                       " exceeds corpus size " + std::to_string(clips.size()));
    }
    std::size_t needed = 0;
    std::vector<std::size_t> deficient;
    for (const auto& [cls, members] : by_class) {
      if (members.size() < mode.min_per_class) deficient.push_back(cls);
      needed += std::min(members.size(), mode.min_per_class);
    }
    if (needed > mode.total) {
      std::vector<std::size_t> all;
      for (const auto& [cls, members] : by_class) all.push_back(cls);
      deficient_error(all, "test size " + std::to_string(mode.total) + " below " +
                               std::to_string(needed) + " required class representatives");
    }
    if (!deficient.empty()) {
      std::string w = "classes with fewer than " + std::to_string(mode.min_per_class) +
                      " clips:";
      for (std::size_t c : deficient) w += " " + std::to_string(c);
      out.warnings.push_back(w);
    }
    std::size_t taken = 0;
    for (const auto& [cls, members] : by_class)
      for (std::size_t k = 0; k < std::min(members.size(), mode.min_per_class); ++k) {
        in_test[members[k]] = true;
        ++taken;
      }
    for (std::size_t i : order) {
      if (taken >= mode.total) break;
      if (!in_test[i]) {
        in_test[i] = true;
        ++taken;
      }
    }
  }
  for (std::size_t i = 0; i < clips.size(); ++i)
    (in_test[i] ? out.test : out.train).push_back(clips[i]);
  if (out.train.empty()) out.warnings.push_back("training split is empty");
  return out;
}

}  // namespace relcast
