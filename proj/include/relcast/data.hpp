#pragma once

#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "relcast/error.hpp"

namespace relcast {

/// Object set O and predicate set P with dense 0..n-1 ids.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> objects, std::vector<std::string> predicates)
      : objects_(std::move(objects)), predicates_(std::move(predicates)) {
    index(objects_, object_ids_, "object");
    index(predicates_, predicate_ids_, "predicate");
  }

  const std::vector<std::string>& objects() const { return objects_; }
  const std::vector<std::string>& predicates() const { return predicates_; }
  std::size_t num_objects() const { return objects_.size(); }
  std::size_t num_predicates() const { return predicates_.size(); }

  std::optional<std::size_t> object_id(const std::string& name) const {
    auto it = object_ids_.find(name);
    return it == object_ids_.end() ? std::nullopt : std::optional(it->second);
  }
  std::optional<std::size_t> predicate_id(const std::string& name) const {
    auto it = predicate_ids_.find(name);
    return it == predicate_ids_.end() ? std::nullopt : std::optional(it->second);
  }
  const std::string& object_name(std::size_t id) const { return objects_.at(id); }
  const std::string& predicate_name(std::size_t id) const { return predicates_.at(id); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.objects_ == b.objects_ && a.predicates_ == b.predicates_;
  }

 private:
  static void index(const std::vector<std::string>& names,
                    std::unordered_map<std::string, std::size_t>& ids,
                    const char* what) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (!ids.emplace(names[i], i).second) {
        throw DataError(std::string("duplicate ") + what + " name '" + names[i] + "'");
      }
    }
  }

  std::vector<std::string> objects_, predicates_;
  std::unordered_map<std::string, std::size_t> object_ids_, predicate_ids_;
};

struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  double area() const { return width() * height(); }
  bool valid() const { return x1 < x2 && y1 < y2; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct ImageSize {
  double width = 0, height = 0;
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

enum class Role { subject = 0, object = 1, union_box = 2 };

struct VisualEvidence {
  std::vector<double> subject, object, union_box;

  const std::vector<double>& of(Role r) const {
    switch (r) {
      case Role::subject: return subject;
      case Role::object: return object;
      default: return union_box;
    }
  }
  friend bool operator==(const VisualEvidence&, const VisualEvidence&) = default;
};

struct KeyFrame {
  int t = 0;
  std::size_t predicate = 0;
  BoundingBox subject_box, object_box;
  std::optional<VisualEvidence> visual;

  friend bool operator==(const KeyFrame&, const KeyFrame&) = default;
};

struct ClipAnnotation {
  std::string clip_id;
  std::size_t subject_category = 0;
  std::size_t object_category = 0;
  ImageSize image_size;
  std::vector<KeyFrame> frames;

  std::vector<std::size_t> predicates() const {
    std::vector<std::size_t> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(f.predicate);
    return out;
  }

  friend bool operator==(const ClipAnnotation&, const ClipAnnotation&) = default;
};

struct Corpus {
  Vocabulary vocab;
  std::vector<ClipAnnotation> clips;
};

inline constexpr std::size_t kMaxClipFrames = 30;

/// Observed history (first H frames) and the T frames to forecast. The
/// future frames' evidence is reachable only through future_frame(), which
/// the models consult in observation mode alone.
class ForecastInstance {
 public:
  ForecastInstance(ClipAnnotation clip, std::size_t history, std::size_t horizon)
      : clip_(std::move(clip)), history_(history), horizon_(horizon) {
    if (history_ < 1 || horizon_ < 1 || history_ + horizon_ > clip_.frames.size()) {
      throw ContractError("forecast instance for clip '" + clip_.clip_id +
                          "' needs H>=1, T>=1, H+T<=" +
                          std::to_string(clip_.frames.size()) + " (got H=" +
                          std::to_string(history_) + ", T=" + std::to_string(horizon_) + ")");
    }
  }

  const ClipAnnotation& clip() const { return clip_; }
  std::size_t history() const { return history_; }
  std::size_t horizon() const { return horizon_; }
  const KeyFrame& history_frame(std::size_t i) const { return clip_.frames.at(i); }
  const KeyFrame& future_frame(std::size_t i) const { return clip_.frames.at(history_ + i); }

  std::vector<std::size_t> future_labels() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < horizon_; ++i) out.push_back(future_frame(i).predicate);
    return out;
  }

  /// Copy with the future predicate labels replaced; used by leakage tests.
  ForecastInstance with_future_labels(const std::vector<std::size_t>& labels) const {
    ForecastInstance copy = *this;
    for (std::size_t i = 0; i < horizon_ && i < labels.size(); ++i)
      copy.clip_.frames[history_ + i].predicate = labels[i];
    return copy;
  }

 private:
  ClipAnnotation clip_;
  std::size_t history_, horizon_;
};

/// One instance per clip long enough for `horizon`: H = len - horizon.
inline std::vector<ForecastInstance> make_instances(const std::vector<ClipAnnotation>& clips,
                                                    std::size_t horizon,
                                                    std::size_t* skipped = nullptr) {
  std::vector<ForecastInstance> out;
  std::size_t skip = 0;
  for (const auto& c : clips) {
    if (c.frames.size() < horizon + 1) {
      ++skip;
      continue;
    }
    out.emplace_back(c, c.frames.size() - horizon, horizon);
  }
  if (skipped) *skipped = skip;
  return out;
}

struct ValidationOptions {
  /// 0 disables the length cap (raw ingestion before truncation).
  std::size_t max_frames = kMaxClipFrames;
};

/// Throws DataError naming the clip (and frame) on the first violated
/// invariant.
inline void validate_clip(const ClipAnnotation& clip, const Vocabulary& vocab,
                          const ValidationOptions& opts = {}) {
  auto fail = [&](const std::string& msg) {
    throw DataError("clip '" + clip.clip_id + "': " + msg);
  };
  if (clip.subject_category >= vocab.num_objects()) fail("subject category out of range");
  if (clip.object_category >= vocab.num_objects()) fail("object category out of range");
  if (clip.frames.empty()) fail("no frames");
  if (opts.max_frames && clip.frames.size() > opts.max_frames) {
    fail(std::to_string(clip.frames.size()) + " frames exceed the limit of " +
         std::to_string(opts.max_frames));
  }
  std::optional<std::size_t> d_vis;
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    const KeyFrame& f = clip.frames[i];
    std::string where = "frame t=" + std::to_string(f.t);
    if (i > 0 && f.t <= clip.frames[i - 1].t) {
      fail(where + " breaks strictly increasing frame order (previous t=" +
           std::to_string(clip.frames[i - 1].t) + ")");
    }
    if (f.predicate >= vocab.num_predicates()) fail(where + ": predicate out of range");
    for (const auto* b : {&f.subject_box, &f.object_box}) {
      const char* which = b == &f.subject_box ? "subject_box" : "object_box";
      if (!b->valid()) fail(where + ": " + which + " has x2<=x1 or y2<=y1");
      if (clip.image_size.width > 0 && clip.image_size.height > 0 &&
          (b->x1 < 0 || b->y1 < 0 || b->x2 > clip.image_size.width ||
           b->y2 > clip.image_size.height)) {
        fail(where + ": " + which + " lies outside the image");
      }
    }
    if (f.visual) {
      const auto& v = *f.visual;
      std::size_t n = v.subject.size();
      if (n == 0 || v.object.size() != n || v.union_box.size() != n) {
        fail(where + ": visual vectors must share one non-zero length");
      }
      if (d_vis && *d_vis != n) fail(where + ": visual dimension changes within clip");
      d_vis = n;
    }
  }
}

/// Visual-feature mode of a corpus: every frame annotated (returns d_vis) or
/// none (returns 0). Mixed corpora are a configuration error.
inline std::size_t corpus_visual_dim(const std::vector<ClipAnnotation>& clips) {
  std::optional<std::size_t> dim;
  bool any_missing = false;
  for (const auto& c : clips) {
    for (const auto& f : c.frames) {
      if (!f.visual) {
        any_missing = true;
        continue;
      }
      std::size_t n = f.visual->subject.size();
      if (dim && *dim != n) {
        throw ConfigError("clip '" + c.clip_id + "': visual dimension " +
                          std::to_string(n) + " differs from corpus dimension " +
                          std::to_string(*dim));
      }
      dim = n;
    }
  }
  if (dim && any_missing) {
    throw ConfigError("corpus mixes frames with and without visual features");
  }
  return dim.value_or(0);
}

// --- JSON annotation format -------------------------------------------------

namespace detail {

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

class FieldPath {
 public:
  explicit FieldPath(std::string p) : path_(std::move(p)) {}
  FieldPath key(const std::string& k) const { return FieldPath(path_ + "." + k); }
  FieldPath idx(std::size_t i) const {
    return FieldPath(path_ + "[" + std::to_string(i) + "]");
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(path_ + ": " + msg);
  }
  const std::string& str() const { return path_; }

 private:
  std::string path_;
};

inline const nlohmann::json& field(const nlohmann::json& j, const std::string& k,
                                   const FieldPath& at) {
  if (!j.is_object()) at.fail("expected an object");
  auto it = j.find(k);
  if (it == j.end()) at.fail("missing field '" + k + "'");
  return *it;
}

inline std::vector<double> numbers(const nlohmann::json& j, const FieldPath& at,
                                   std::optional<std::size_t> expect = std::nullopt) {
  if (!j.is_array()) at.fail("expected an array of numbers");
  std::vector<double> out;
  for (const auto& x : j) {
    if (!x.is_number()) at.fail("expected an array of numbers");
    out.push_back(x.get<double>());
  }
  if (expect && out.size() != *expect) {
    at.fail("expected " + std::to_string(*expect) + " numbers, got " +
            std::to_string(out.size()));
  }
  return out;
}

inline std::string string_field(const nlohmann::json& j, const std::string& k,
                                const FieldPath& at) {
  const auto& v = field(j, k, at);
  if (!v.is_string()) at.key(k).fail("expected a string");
  return v.get<std::string>();
}

inline std::vector<std::string> string_list(const nlohmann::json& j, const FieldPath& at) {
  if (!j.is_array()) at.fail("expected an array of strings");
  std::vector<std::string> out;
  for (const auto& x : j) {
    if (!x.is_string()) at.fail("expected an array of strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

inline BoundingBox box_from(const nlohmann::json& j, const FieldPath& at) {
  auto v = numbers(j, at, 4);
  return {v[0], v[1], v[2], v[3]};
}

inline nlohmann::json box_to(const BoundingBox& b) {
  return nlohmann::json::array({b.x1, b.y1, b.x2, b.y2});
}

}  // namespace detail

inline nlohmann::json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return nlohmann::json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(source + ":" + std::to_string(detail::line_of_offset(text, e.byte)) +
                    ": parse error: " + e.what());
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw DataError("failed writing '" + path + "'");
}

inline Corpus corpus_from_json(const nlohmann::json& root, const ValidationOptions& opts = {}) {
  using detail::FieldPath;
  FieldPath top("$");
  const auto& vj = detail::field(root, "vocabulary", top);
  Vocabulary vocab(detail::string_list(detail::field(vj, "objects", top.key("vocabulary")),
                                       top.key("vocabulary").key("objects")),
                   detail::string_list(detail::field(vj, "predicates", top.key("vocabulary")),
                                       top.key("vocabulary").key("predicates")));
  Corpus corpus{vocab, {}};
  const auto& cj = detail::field(root, "clips", top);
  if (!cj.is_array()) top.key("clips").fail("expected an array");
  for (std::size_t ci = 0; ci < cj.size(); ++ci) {
    FieldPath at = top.key("clips").idx(ci);
    const auto& c = cj[ci];
    ClipAnnotation clip;
    clip.clip_id = detail::string_field(c, "clip_id", at);
    auto category = [&](const char* key) {
      std::string name = detail::string_field(c, key, at);
      auto id = vocab.object_id(name);
      if (!id) at.key(key).fail("unknown object category '" + name + "' in clip '" + clip.clip_id + "'");
      return *id;
    };
    clip.subject_category = category("subject");
    clip.object_category = category("object");
    auto size = detail::numbers(detail::field(c, "image_size", at), at.key("image_size"), 2);
    clip.image_size = {size[0], size[1]};
    const auto& fj = detail::field(c, "frames", at);
    if (!fj.is_array()) at.key("frames").fail("expected an array");
    for (std::size_t fi = 0; fi < fj.size(); ++fi) {
      FieldPath fat = at.key("frames").idx(fi);
      const auto& f = fj[fi];
      KeyFrame kf;
      const auto& tj = detail::field(f, "t", fat);
      if (!tj.is_number_integer()) fat.key("t").fail("expected an integer");
      kf.t = tj.get<int>();
      std::string pname = detail::string_field(f, "predicate", fat);
      auto pid = vocab.predicate_id(pname);
      if (!pid) fat.key("predicate").fail("unknown predicate '" + pname + "' in clip '" + clip.clip_id + "'");
      kf.predicate = *pid;
      kf.subject_box = detail::box_from(detail::field(f, "subject_box", fat), fat.key("subject_box"));
      kf.object_box = detail::box_from(detail::field(f, "object_box", fat), fat.key("object_box"));
      if (auto it = f.find("visual"); it != f.end() && !it->is_null()) {
        FieldPath vat = fat.key("visual");
        VisualEvidence ve;
        ve.subject = detail::numbers(detail::field(*it, "subject", vat), vat.key("subject"));
        ve.object = detail::numbers(detail::field(*it, "object", vat), vat.key("object"));
        ve.union_box = detail::numbers(detail::field(*it, "union", vat), vat.key("union"));
        kf.visual = std::move(ve);
      }
      clip.frames.push_back(std::move(kf));
    }
    validate_clip(clip, vocab, opts);
    corpus.clips.push_back(std::move(clip));
  }
  corpus_visual_dim(corpus.clips);
  return corpus;
}

inline nlohmann::json corpus_to_json(const Corpus& corpus) {
  using nlohmann::json;
  json clips = json::array();
  for (const auto& c : corpus.clips) {
    json frames = json::array();
    for (const auto& f : c.frames) {
      json fj = {{"t", f.t},
                 {"predicate", corpus.vocab.predicate_name(f.predicate)},
                 {"subject_box", detail::box_to(f.subject_box)},
                 {"object_box", detail::box_to(f.object_box)}};
      if (f.visual) {
        fj["visual"] = {{"subject", f.visual->subject},
                        {"object", f.visual->object},
                        {"union", f.visual->union_box}};
      }
      frames.push_back(std::move(fj));
    }
    clips.push_back({{"clip_id", c.clip_id},
                     {"subject", corpus.vocab.object_name(c.subject_category)},
                     {"object", corpus.vocab.object_name(c.object_category)},
                     {"image_size", json::array({c.image_size.width, c.image_size.height})},
                     {"frames", std::move(frames)}});
  }
  return {{"vocabulary",
           {{"objects", corpus.vocab.objects()}, {"predicates", corpus.vocab.predicates()}}},
          {"clips", std::move(clips)}};
}

inline Corpus load_clips(const std::string& path, const ValidationOptions& opts = {}) {
  return corpus_from_json(parse_json_text(read_text_file(path), path), opts);
}

inline void save_clips(const std::string& path, const Corpus& corpus) {
  write_text_file(path, corpus_to_json(corpus).dump(1) + "\n");
}

}  // namespace relcast
