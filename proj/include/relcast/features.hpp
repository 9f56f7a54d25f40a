#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "relcast/data.hpp"
#include "relcast/error.hpp"
#include "relcast/ops.hpp"
#include "relcast/tape.hpp"
#include "relcast/tensor.hpp"

namespace relcast {

inline constexpr std::size_t kSpatialDim = 14;

namespace detail {

inline void require_extent(const BoundingBox& b, const char* op) {
  if (!(b.width() > 0) || !(b.height() > 0)) {
    throw DataError(std::string(op) + ": box has zero width or height");
  }
}

}  // namespace detail

/// Box-regression offsets of `b` relative to `a`.
inline std::array<double, 4> box_delta(const BoundingBox& a, const BoundingBox& b) {
  detail::require_extent(a, "box_delta");
  detail::require_extent(b, "box_delta");
  return {(b.cx() - a.cx()) / a.width(), (b.cy() - a.cy()) / a.height(),
          std::log(b.width() / a.width()), std::log(b.height() / a.height())};
}

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

/// Center distance over the image diagonal.
inline double center_dist(const BoundingBox& a, const BoundingBox& b, const ImageSize& img) {
  double diag = std::hypot(img.width, img.height);
  if (!(diag > 0)) throw ContractError("center_dist: image diagonal must be positive");
  return std::hypot(b.cx() - a.cx(), b.cy() - a.cy()) / diag;
}

inline BoundingBox union_box(const BoundingBox& a, const BoundingBox& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
          std::max(a.y2, b.y2)};
}

/// Delta(s,o) | Delta(s,u) | Delta(o,u) | iou(s,o) | dis(s,o), u the union box.
inline std::array<double, kSpatialDim> spatial_feature(const BoundingBox& s, const BoundingBox& o,
                                                       const ImageSize& img) {
  BoundingBox u = union_box(s, o);
  std::array<double, kSpatialDim> f{};
  std::size_t k = 0;
  for (const auto& d : {box_delta(s, o), box_delta(s, u), box_delta(o, u)})
    for (double x : d) f[k++] = x;
  f[k++] = iou(s, o);
  f[k++] = center_dist(s, o, img);
  return f;
}

template <class T>
Tensor<T> spatial_row(const KeyFrame& f, const ImageSize& img) {
  auto s = spatial_feature(f.subject_box, f.object_box, img);
  return Tensor<T>({1, kSpatialDim}, std::vector<T>(s.begin(), s.end()));
}

/// Learnable |O| x d_sem category embedding.
template <class T>
struct SemanticEmbedding {
  Parameter<T>* table = nullptr;

  SemanticEmbedding() = default;
  SemanticEmbedding(ParameterSet<T>& params, const std::string& name, std::size_t num_objects,
                    std::size_t d_sem, std::mt19937_64& rng) {
    table = params.add_uniform(name + ".table", {num_objects, d_sem}, 1.0, rng);
  }

  std::size_t dim() const { return table->value.cols(); }

  Var<T> operator()(Tape<T>& tape, std::size_t category) const {
    return gather_rows(tape.param(*table), std::vector<std::size_t>{category});
  }
};

/// Category-name -> vector file for initialising a SemanticEmbedding.
template <class T>
void import_embeddings(const nlohmann::json& j, const Vocabulary& vocab, SemanticEmbedding<T>& emb) {
  if (!j.is_object()) throw DataError("embedding file: expected an object of name -> vector");
  const std::size_t d = emb.dim();
  for (const auto& [name, vec] : j.items()) {
    auto id = vocab.object_id(name);
    if (!id) throw DataError("embedding file: unknown category '" + name + "'");
    if (!vec.is_array() || vec.size() != d) {
      throw DataError("embedding file: '" + name + "' needs " + std::to_string(d) + " numbers");
    }
    for (std::size_t k = 0; k < d; ++k) {
      if (!vec[k].is_number()) throw DataError("embedding file: '" + name + "' holds a non-number");
      emb.table->value.at(*id, k) = static_cast<T>(vec[k].template get<double>());
    }
  }
}

/// Visual evidence per (frame, role). Annotated corpora supply it verbatim;
/// feature-less corpora use a learned table indexed by (role, predicate),
/// with a mask row standing in for withheld predicates.
template <class T>
struct VisualSource {
  Parameter<T>* fallback = nullptr;
  std::size_t d_vis = 0;
  std::size_t num_predicates = 0;

  VisualSource() = default;
  VisualSource(ParameterSet<T>& params, const std::string& name, std::size_t n_predicates,
               std::size_t dim, bool annotated, std::mt19937_64& rng)
      : d_vis(dim), num_predicates(n_predicates) {
    if (dim == 0) throw ConfigError("visual feature width must be positive");
    if (!annotated) {
      fallback = params.add_uniform(name + ".fallback", {3 * (n_predicates + 1), dim}, 1.0, rng);
    }
  }

  bool annotated() const { return fallback == nullptr; }

  std::size_t fallback_row(Role role, std::size_t predicate, bool masked) const {
    return static_cast<std::size_t>(role) * (num_predicates + 1) +
           (masked ? num_predicates : predicate);
  }

  Var<T> operator()(Tape<T>& tape, const KeyFrame& f, Role role, bool masked) const {
    if (annotated()) {
      if (!f.visual) {
        throw DataError("frame t=" + std::to_string(f.t) + " lacks visual features");
      }
      const auto& v = f.visual->of(role);
      if (v.size() != d_vis) {
        throw DataError("frame t=" + std::to_string(f.t) + ": visual width " +
                        std::to_string(v.size()) + ", model expects " + std::to_string(d_vis));
      }
      return tape.constant(Tensor<T>({1, d_vis}, std::vector<T>(v.begin(), v.end())));
    }
    return gather_rows(tape.param(*fallback),
                       std::vector<std::size_t>{fallback_row(role, f.predicate, masked)});
  }
};

}  // namespace relcast
