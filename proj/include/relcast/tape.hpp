#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <unordered_map>
#include <utility>
#include <vector>

#include "relcast/error.hpp"
#include "relcast/tensor.hpp"

namespace relcast {

template <class T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// tape is alive.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  Tape<T>& tape() const { return *tape_; }

  const Tensor<T>& value() const { return tape_->node(id_).value; }
  const Tensor<T>& grad() const { return tape_->node(id_).grad; }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const { return tape_->node(id_).requires_grad; }

  T item() const {
    if (size() != 1) {
      throw ContractError("item() on non-scalar of shape " +
                          shape_str(shape()));
    }
    return value()[0];
  }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run record of one forward pass. Nodes are appended in
/// evaluation order, so the node list is already topologically sorted and
/// backward is a single reverse sweep.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
  };

  Tape() = default;
  /// A training tape enables dropout, drawing masks from `rng`.
  Tape(bool training, std::mt19937_64* rng) : training_(training), rng_(rng) {
    if (training_ && rng_ == nullptr) {
      throw ContractError("training tape requires a random engine");
    }
  }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool training() const { return training_; }
  std::mt19937_64& rng() { return *rng_; }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, {}); }

  /// Leaf that receives a gradient on backward().
  Var<T> variable(Tensor<T> value) { return push(std::move(value), true, {}); }

  /// Leaf bound to a parameter; its gradient is added to `p.grad` on
  /// backward(). Repeated use on one tape yields the same node.
  Var<T> param(Parameter<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var<T>(this, it->second);
    Var<T> v = push(p.value, true, {});
    nodes_[v.id()].param = &p;
    param_nodes_.emplace(&p, v.id());
    return v;
  }

  /// Appends an operation result. `backward` must add this node's gradient
  /// contribution into the gradients of its inputs.
  Var<T> record(Tensor<T> value, bool requires_grad, BackwardFn backward) {
    return push(std::move(value), requires_grad,
                requires_grad ? std::move(backward) : BackwardFn{});
  }

  Node& node(std::size_t id) { return nodes_.at(id); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of `id` if it participates in differentiation.
  Tensor<T>* grad_sink(std::size_t id) {
    Node& n = nodes_[id];
    return n.requires_grad ? &n.grad : nullptr;
  }

  void backward(const Var<T>& loss) {
    if (&loss.tape() != this) {
      throw ContractError("backward() on a variable from another tape");
    }
    if (loss.size() != 1) {
      throw ContractError("backward() requires a scalar loss, got shape " +
                          shape_str(loss.shape()));
    }
    for (auto& n : nodes_) {
      if (n.requires_grad) n.grad = Tensor<T>(n.value.shape());
    }
    if (!nodes_[loss.id()].requires_grad) return;
    nodes_[loss.id()].grad[0] = T{1};
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.backward) n.backward(*this, i);
    }
    for (auto& n : nodes_) {
      if (n.param == nullptr) continue;
      auto& dst = n.param->grad.storage();
      const auto& src = n.grad.storage();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }

 private:
  Var<T> push(Tensor<T> value, bool requires_grad, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
  bool training_ = false;
  std::mt19937_64* rng_ = nullptr;
};

}  // namespace relcast
