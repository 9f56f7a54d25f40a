#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "relcast/data.hpp"
#include "relcast/error.hpp"
#include "relcast/features.hpp"
#include "relcast/nn.hpp"
#include "relcast/ops.hpp"

namespace relcast {

enum class NodeRole { subject = 0, object = 1, predicate = 2 };

inline constexpr std::size_t kNodesPerFrame = 3;
inline constexpr std::size_t kNumSlices = 3;

/// Frame-major node numbering: frame f holds nodes 3f (subject), 3f+1
/// (object), 3f+2 (predicate).
inline std::size_t node_index(std::size_t frame, NodeRole role) {
  return kNodesPerFrame * frame + static_cast<std::size_t>(role);
}

/// Binary adjacency slices of the spatio-temporal graph over `frames`
/// frames: spatial (s-p, o-p within a frame; never object-object), temporal
/// (same role, adjacent frames) and self.
struct GraphTopology {
  std::size_t frames = 0;
  std::array<Tensor<double>, kNumSlices> slices;

  std::size_t nodes() const { return kNodesPerFrame * frames; }
  const Tensor<double>& spatial() const { return slices[0]; }
  const Tensor<double>& temporal() const { return slices[1]; }
  const Tensor<double>& self_loops() const { return slices[2]; }
};

inline GraphTopology graph_topology(std::size_t frames) {
  if (frames < 1) throw ContractError("graph_topology: at least one frame required");
  GraphTopology g;
  g.frames = frames;
  const std::size_t n = g.nodes();
  Tensor<double> spatial({n, n}), temporal({n, n});
  auto link = [](Tensor<double>& a, std::size_t i, std::size_t j) {
    a.at(i, j) = 1.0;
    a.at(j, i) = 1.0;
  };
  for (std::size_t f = 0; f < frames; ++f) {
    std::size_t p = node_index(f, NodeRole::predicate);
    link(spatial, node_index(f, NodeRole::subject), p);
    link(spatial, node_index(f, NodeRole::object), p);
    if (f + 1 < frames)
      for (std::size_t r = 0; r < kNodesPerFrame; ++r)
        link(temporal, kNodesPerFrame * f + r, kNodesPerFrame * (f + 1) + r);
  }
  g.slices = {std::move(spatial), std::move(temporal), Tensor<double>::identity(n)};
  return g;
}

/// D^-1/2 (A with unit diagonal) D^-1/2.
template <class T>
Tensor<T> normalize_slice(const Tensor<T>& a) {
  if (a.rank() != 2 || a.rows() != a.cols()) {
    throw DimensionError("normalize_slice: square matrix required, got " + shape_str(a.shape()));
  }
  const std::size_t n = a.rows();
  Tensor<T> hat = a;
  for (std::size_t i = 0; i < n; ++i) hat.at(i, i) = T{1};
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0;
    for (std::size_t j = 0; j < n; ++j) d += static_cast<double>(hat.at(i, j));
    inv_sqrt[i] = 1.0 / std::sqrt(d);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      hat.at(i, j) = static_cast<T>(static_cast<double>(hat.at(i, j)) * inv_sqrt[i] * inv_sqrt[j]);
  return hat;
}

template <class T>
std::array<Tensor<T>, kNumSlices> normalized_slices(const GraphTopology& g) {
  std::array<Tensor<T>, kNumSlices> out;
  for (std::size_t k = 0; k < kNumSlices; ++k) out[k] = normalize_slice(g.slices[k].cast<T>());
  return out;
}

/// X* = relu(sum_k (A_k X W_k + b_k)) over the adjacency slices.
template <class T>
struct GCNLayer {
  std::array<Linear<T>, kNumSlices> slice;

  GCNLayer() = default;
  GCNLayer(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
           std::mt19937_64& rng) {
    const char* names[kNumSlices] = {"spatial", "temporal", "self"};
    for (std::size_t k = 0; k < kNumSlices; ++k)
      slice[k] = Linear<T>(params, name + "." + names[k], in, out, rng);
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x,
                    const std::array<Tensor<T>, kNumSlices>& adj) const {
    Var<T> acc;
    for (std::size_t k = 0; k < kNumSlices; ++k) {
      if (adj[k].rows() != x.rows()) {
        throw DimensionError("gcn layer: adjacency " + shape_str(adj[k].shape()) +
                             " vs features " + shape_str(x.shape()));
      }
      Var<T> term = slice[k](tape, matmul(tape.constant(adj[k]), x));
      acc = k == 0 ? term : add(acc, term);
    }
    return relu(acc);
  }
};

/// Shared per-frame evidence: category embeddings, visual features and a
/// predicate table whose last row masks withheld predicates.
template <class T>
struct FrameEvidence {
  SemanticEmbedding<T> semantic;
  VisualSource<T> visual;
  Parameter<T>* predicate_table = nullptr;
  std::size_t num_predicates = 0;

  FrameEvidence() = default;
  FrameEvidence(ParameterSet<T>& params, const std::string& name, std::size_t num_objects,
                std::size_t n_predicates, std::size_t d_sem, std::size_t d_vis, bool annotated,
                std::mt19937_64& rng)
      : semantic(params, name + ".semantic", num_objects, d_sem, rng),
        visual(params, name + ".visual", n_predicates, d_vis, annotated, rng),
        num_predicates(n_predicates) {
    predicate_table = params.add_uniform(name + ".predicate", {n_predicates + 1, d_sem}, 1.0, rng);
  }

  std::size_t d_sem() const { return semantic.dim(); }
  std::size_t d_vis() const { return visual.d_vis; }

  Var<T> predicate(Tape<T>& tape, std::size_t p, bool masked) const {
    return gather_rows(tape.param(*predicate_table),
                       std::vector<std::size_t>{masked ? num_predicates : p});
  }
};

/// Frames a model may look at: the history, plus the future frames with
/// their predicates withheld when observing.
struct FrameView {
  const KeyFrame* frame;
  bool masked;
};

inline std::vector<FrameView> visible_frames(const ForecastInstance& inst, bool observation) {
  std::vector<FrameView> out;
  for (std::size_t i = 0; i < inst.history(); ++i) out.push_back({&inst.history_frame(i), false});
  if (observation)
    for (std::size_t i = 0; i < inst.horizon(); ++i) out.push_back({&inst.future_frame(i), true});
  return out;
}

template <class T>
struct STGraph {
  GraphTopology topology;
  std::array<Tensor<T>, kNumSlices> adjacency;
  Var<T> features;  // nodes x d_graph
};

/// Node projections, GCN stack and per-frame readout: the object-level
/// half of the graph-convolutional transformer.
template <class T>
struct SpatialEncoder {
  const FrameEvidence<T>* evidence = nullptr;
  Linear<T> object_proj, predicate_proj, readout;
  std::vector<GCNLayer<T>> layers;
  std::size_t d_graph = 0;

  SpatialEncoder() = default;
  SpatialEncoder(ParameterSet<T>& params, const std::string& name, const FrameEvidence<T>& ev,
                 std::size_t d_graph_, std::size_t n_layers, std::mt19937_64& rng)
      : evidence(&ev), d_graph(d_graph_) {
    if (n_layers < 1) throw ConfigError("spatial encoder needs at least one GCN layer");
    object_proj = Linear<T>(params, name + ".object_proj", ev.d_vis() + ev.d_sem(), d_graph, rng);
    predicate_proj = Linear<T>(params, name + ".predicate_proj",
                               ev.d_vis() + ev.d_sem() + kSpatialDim, d_graph, rng);
    for (std::size_t l = 0; l < n_layers; ++l)
      layers.emplace_back(params, name + ".gcn" + std::to_string(l), d_graph, d_graph, rng);
    readout = Linear<T>(params, name + ".readout", kNodesPerFrame * d_graph, d_graph, rng);
  }

  STGraph<T> build(Tape<T>& tape, const ClipAnnotation& clip,
                   const std::vector<FrameView>& frames) const {
    if (frames.empty()) throw ContractError("build_st_graph: no frames");
    const FrameEvidence<T>& ev = *evidence;
    std::vector<Var<T>> object_rows, predicate_rows;
    for (const auto& fv : frames) {
      const KeyFrame& f = *fv.frame;
      try {
        object_rows.push_back(concat_cols<T>({ev.visual(tape, f, Role::subject, fv.masked),
                                              ev.semantic(tape, clip.subject_category)}));
        object_rows.push_back(concat_cols<T>({ev.visual(tape, f, Role::object, fv.masked),
                                              ev.semantic(tape, clip.object_category)}));
        predicate_rows.push_back(concat_cols<T>(
            {ev.visual(tape, f, Role::union_box, fv.masked), ev.predicate(tape, f.predicate, fv.masked),
             tape.constant(spatial_row<T>(f, clip.image_size))}));
      } catch (const DataError& e) {
        throw DataError("clip '" + clip.clip_id + "': " + e.what());
      }
    }
    Var<T> objects = object_proj(tape, concat_rows(object_rows));
    Var<T> predicates = predicate_proj(tape, concat_rows(predicate_rows));
    // interleave into frame-major [s, o, p] order
    const std::size_t n = frames.size();
    std::vector<std::size_t> order;
    for (std::size_t f = 0; f < n; ++f) {
      order.push_back(2 * f);
      order.push_back(2 * f + 1);
      order.push_back(2 * n + f);
    }
    STGraph<T> g;
    g.topology = graph_topology(n);
    g.adjacency = normalized_slices<T>(g.topology);
    g.features = gather_rows(concat_rows<T>({objects, predicates}), order);
    return g;
  }

  /// Per-frame tokens (frames x d_graph).
  Var<T> encode(Tape<T>& tape, const STGraph<T>& g) const {
    Var<T> x = g.features;
    for (const auto& layer : layers) x = layer(tape, x, g.adjacency);
    const std::size_t n = g.topology.frames;
    std::array<std::vector<std::size_t>, kNodesPerFrame> idx;
    for (std::size_t f = 0; f < n; ++f)
      for (std::size_t r = 0; r < kNodesPerFrame; ++r) idx[r].push_back(kNodesPerFrame * f + r);
    Var<T> per_frame =
        concat_cols<T>({gather_rows(x, idx[0]), gather_rows(x, idx[1]), gather_rows(x, idx[2])});
    return readout(tape, per_frame);
  }

  Var<T> operator()(Tape<T>& tape, const ClipAnnotation& clip,
                    const std::vector<FrameView>& frames) const {
    return encode(tape, build(tape, clip, frames));
  }
};

}  // namespace relcast
