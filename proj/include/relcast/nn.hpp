#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "relcast/ops.hpp"
#include "relcast/tape.hpp"
#include "relcast/tensor.hpp"

namespace relcast {

/// y = x W + b with W (in x out).
template <class T>
struct Linear {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;

  Linear() = default;
  Linear(ParameterSet<T>& params, const std::string& name, std::size_t in,
         std::size_t out, std::mt19937_64& rng, bool with_bias = true) {
    weight = params.add_weight(name + ".weight", in, out, rng);
    if (with_bias) bias = params.add_zeros(name + ".bias", {out});
  }

  std::size_t in_features() const { return weight->value.shape()[0]; }
  std::size_t out_features() const { return weight->value.shape()[1]; }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    Var<T> y = matmul(x, tape.param(*weight));
    return bias ? add_row(y, tape.param(*bias)) : y;
  }
};

template <class T>
struct LayerNorm {
  Parameter<T>* gain = nullptr;
  Parameter<T>* bias = nullptr;

  LayerNorm() = default;
  LayerNorm(ParameterSet<T>& params, const std::string& name, std::size_t d) {
    gain = params.add_constant(name + ".gain", {d}, T{1});
    bias = params.add_zeros(name + ".bias", {d});
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    return layer_norm(x, tape.param(*gain), tape.param(*bias));
  }
};

/// Two-layer ReLU feed-forward block.
template <class T>
struct FeedForward {
  Linear<T> up, down;

  FeedForward() = default;
  FeedForward(ParameterSet<T>& params, const std::string& name, std::size_t d,
              std::size_t hidden, std::mt19937_64& rng)
      : up(params, name + ".up", d, hidden, rng),
        down(params, name + ".down", hidden, d, rng) {}

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    return down(tape, relu(up(tape, x)));
  }
};

}  // namespace relcast
