#pragma once

#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "relcast/data.hpp"

namespace relcast {

/// Predicate transition statistics. `counts[i][j]` is the number of
/// adjacent (i -> j) pairs; `probs` is the row-normalised form, zero rows
/// where a predicate never transitions.
struct TransitionMatrix {
  std::vector<std::vector<double>> counts;
  std::vector<std::vector<double>> probs;

  std::size_t size() const { return counts.size(); }
  double row_count(std::size_t i) const {
    double s = 0;
    for (double c : counts[i]) s += c;
    return s;
  }
};

inline TransitionMatrix transition_from_counts(std::vector<std::vector<double>> counts) {
  TransitionMatrix m;
  m.probs.assign(counts.size(), std::vector<double>(counts.size(), 0.0));
  for (std::size_t i = 0; i < counts.size(); ++i) {
    double s = 0;
    for (double c : counts[i]) s += c;
    if (s > 0)
      for (std::size_t j = 0; j < counts.size(); ++j) m.probs[i][j] = counts[i][j] / s;
  }
  m.counts = std::move(counts);
  return m;
}

inline TransitionMatrix compute_transition_matrix(const std::vector<ClipAnnotation>& clips,
                                                  const Vocabulary& vocab) {
  const std::size_t n = vocab.num_predicates();
  std::vector<std::vector<double>> counts(n, std::vector<double>(n, 0.0));
  for (const auto& c : clips)
    for (std::size_t i = 0; i + 1 < c.frames.size(); ++i)
      counts[c.frames[i].predicate][c.frames[i + 1].predicate] += 1.0;
  return transition_from_counts(std::move(counts));
}

struct StatsReport {
  std::size_t clips = 0;
  std::size_t frames = 0;
  /// Occurrences of each object category as subject or object, per clip.
  std::vector<std::size_t> object_counts;
  /// Frame-level predicate annotations per class.
  std::vector<std::size_t> predicate_counts;
  /// Key-frame count -> number of clips.
  std::map<std::size_t, std::size_t> length_histogram;
  /// [object][predicate]: frames where the category takes part (as subject
  /// or object) under that predicate.
  std::vector<std::vector<std::size_t>> cooccurrence;
  TransitionMatrix transitions;
};

inline StatsReport stats_report(const std::vector<ClipAnnotation>& clips, const Vocabulary& vocab) {
  StatsReport r;
  const std::size_t no = vocab.num_objects(), np = vocab.num_predicates();
  r.object_counts.assign(no, 0);
  r.predicate_counts.assign(np, 0);
  r.cooccurrence.assign(no, std::vector<std::size_t>(np, 0));
  for (const auto& c : clips) {
    ++r.clips;
    ++r.object_counts[c.subject_category];
    ++r.object_counts[c.object_category];
    ++r.length_histogram[c.frames.size()];
    for (const auto& f : c.frames) {
      ++r.frames;
      ++r.predicate_counts[f.predicate];
      ++r.cooccurrence[c.subject_category][f.predicate];
      ++r.cooccurrence[c.object_category][f.predicate];
    }
  }
  r.transitions = compute_transition_matrix(clips, vocab);
  return r;
}

inline nlohmann::json stats_to_json(const StatsReport& r, const Vocabulary& vocab) {
  using nlohmann::json;
  json objects = json::object(), predicates = json::object(), hist = json::object();
  for (std::size_t i = 0; i < r.object_counts.size(); ++i)
    objects[vocab.object_name(i)] = r.object_counts[i];
  for (std::size_t i = 0; i < r.predicate_counts.size(); ++i)
    predicates[vocab.predicate_name(i)] = r.predicate_counts[i];
  for (const auto& [len, n] : r.length_histogram) hist[std::to_string(len)] = n;
  return {{"clips", r.clips},
          {"frames", r.frames},
          {"object_counts", objects},
          {"predicate_counts", predicates},
          {"length_histogram", hist},
          {"cooccurrence", r.cooccurrence},
          {"transition_counts", r.transitions.counts},
          {"transition_probs", r.transitions.probs}};
}

inline std::string object_counts_csv(const StatsReport& r, const Vocabulary& vocab) {
  std::ostringstream os;
  os << "object,count\n";
  for (std::size_t i = 0; i < r.object_counts.size(); ++i)
    os << vocab.object_name(i) << ',' << r.object_counts[i] << '\n';
  return os.str();
}

inline std::string predicate_counts_csv(const StatsReport& r, const Vocabulary& vocab) {
  std::ostringstream os;
  os << "predicate,count\n";
  for (std::size_t i = 0; i < r.predicate_counts.size(); ++i)
    os << vocab.predicate_name(i) << ',' << r.predicate_counts[i] << '\n';
  return os.str();
}

inline std::string transitions_csv(const TransitionMatrix& m, const Vocabulary& vocab) {
  std::ostringstream os;
  os.precision(17);
  os << "from,to,count,probability\n";
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j)
      if (m.counts[i][j] > 0)
        os << vocab.predicate_name(i) << ',' << vocab.predicate_name(j) << ','
           << m.counts[i][j] << ',' << m.probs[i][j] << '\n';
  return os.str();
}

inline std::string length_histogram_csv(const StatsReport& r) {
  std::ostringstream os;
  os << "key_frames,clips\n";
  for (const auto& [len, n] : r.length_histogram) os << len << ',' << n << '\n';
  return os.str();
}

}  // namespace relcast
