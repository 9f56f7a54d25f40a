#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "relcast/error.hpp"
#include "relcast/tape.hpp"
#include "relcast/tensor.hpp"

namespace relcast {

namespace detail {

// C[m x n] += A[m x k] * B[k x n]
template <class T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a,
             const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      T av = a[i * k + p];
      if (av == T{0}) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += A[m x n] * B[k x n]^T
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc{0};
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
template <class T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a,
             const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      T av = a[i * k + p];
      if (av == T{0}) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void require_same_tape(const Var<T>& a, const Var<T>& b) {
  if (&a.tape() != &b.tape()) {
    throw ContractError("operands recorded on different tapes");
  }
}

template <class T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <class T>
void require_finite(const char* op, const Tensor<T>& t) {
  for (T x : t.storage()) {
    if (!std::isfinite(static_cast<double>(x))) {
      throw NumericError(std::string(op) + ": non-finite input");
    }
  }
}

template <class T>
void add_into(Tensor<T>* dst, const Tensor<T>& src) {
  if (dst == nullptr) return;
  auto& d = dst->storage();
  const auto& s = src.storage();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace detail

/// Matrix product of a (rows x k) and b (k x n).
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_tape(a, b);
  if (b.value().rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree for " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor<T> out({m, n});
  detail::gemm_nn(m, k, n, a.value().data().data(), b.value().data().data(),
                  out.data().data());
  std::size_t ia = a.id(), ib = b.id();
  bool rg = a.requires_grad() || b.requires_grad();
  return a.tape().record(std::move(out), rg,
                         [ia, ib, m, k, n](Tape<T>& tp, std::size_t self) {
                           const auto& g = tp.node(self).grad;
                           if (auto* da = tp.grad_sink(ia)) {
                             detail::gemm_nt(m, n, k, g.data().data(),
                                             tp.node(ib).value.data().data(),
                                             da->data().data());
                           }
                           if (auto* db = tp.grad_sink(ib)) {
                             detail::gemm_tn(m, k, n,
                                             tp.node(ia).value.data().data(),
                                             g.data().data(), db->data().data());
                           }
                         });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape("add", a, b);
  Tensor<T> out = a.value();
  const auto& bv = b.value().storage();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape<T>& tp, std::size_t self) {
                           const auto& g = tp.node(self).grad;
                           detail::add_into(tp.grad_sink(ia), g);
                           detail::add_into(tp.grad_sink(ib), g);
                         });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape("sub", a, b);
  Tensor<T> out = a.value();
  const auto& bv = b.value().storage();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape<T>& tp, std::size_t self) {
                           const auto& g = tp.node(self).grad;
                           detail::add_into(tp.grad_sink(ia), g);
                           if (auto* db = tp.grad_sink(ib)) {
                             for (std::size_t i = 0; i < g.size(); ++i)
                               (*db)[i] -= g[i];
                           }
                         });
}

/// Elementwise product.
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape("mul", a, b);
  Tensor<T> out = a.value();
  const auto& bv = b.value().storage();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      std::move(out), a.requires_grad() || b.requires_grad(),
      [ia, ib](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.node(self).grad;
        if (auto* da = tp.grad_sink(ia)) {
          const auto& bv = tp.node(ib).value;
          for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * bv[i];
        }
        if (auto* db = tp.grad_sink(ib)) {
          const auto& av = tp.node(ia).value;
          for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * av[i];
        }
      });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& x : out.storage()) x *= s;
  std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(),
                         [ia, s](Tape<T>& tp, std::size_t self) {
                           const auto& g = tp.node(self).grad;
                           auto* da = tp.grad_sink(ia);
                           for (std::size_t i = 0; i < g.size(); ++i)
                             (*da)[i] += s * g[i];
                         });
}

/// x + c * ones, elementwise.
template <class T>
Var<T> add_scalar(const Var<T>& a, T c) {
  Tensor<T> out = a.value();
  for (auto& x : out.storage()) x += c;
  std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(),
                         [ia](Tape<T>& tp, std::size_t self) {
                           detail::add_into(tp.grad_sink(ia),
                                            tp.node(self).grad);
                         });
}

/// Adds a row vector (size == a.cols()) to every row of a.
template <class T>
Var<T> add_row(const Var<T>& a, const Var<T>& row) {
  detail::require_same_tape(a, row);
  std::size_t r = a.rows(), c = a.cols();
  if (row.size() != c) {
    throw DimensionError("add_row: bias " + shape_str(row.shape()) +
                         " does not match columns of " + shape_str(a.shape()));
  }
  Tensor<T> out = a.value();
  const auto& bv = row.value().storage();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
  std::size_t ia = a.id(), ib = row.id();
  return a.tape().record(std::move(out),
                         a.requires_grad() || row.requires_grad(),
                         [ia, ib, r, c](Tape<T>& tp, std::size_t self) {
                           const auto& g = tp.node(self).grad;
                           detail::add_into(tp.grad_sink(ia), g);
                           if (auto* db = tp.grad_sink(ib)) {
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < c; ++j)
                                 (*db)[j] += g[i * c + j];
                           }
                         });
}

namespace detail {

template <class T, class F, class D>
Var<T> unary(const Var<T>& a, F f, D dfdx_from_y) {
  Tensor<T> out = a.value();
  for (auto& x : out.storage()) x = f(x);
  std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(),
                         [ia, dfdx_from_y](Tape<T>& tp, std::size_t self) {
                           const auto& n = tp.node(self);
                           auto* da = tp.grad_sink(ia);
                           const auto& x = tp.node(ia).value;
                           for (std::size_t i = 0; i < n.grad.size(); ++i)
                             (*da)[i] += n.grad[i] * dfdx_from_y(x[i], n.value[i]);
                         });
}

}  // namespace detail

template <class T>
Var<T> relu(const Var<T>& a) {
  return detail::unary(
      a, [](T x) { return x > T{0} ? x : T{0}; },
      [](T x, T) { return x > T{0} ? T{1} : T{0}; });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  return detail::unary(
      a, [](T x) { return T{1} / (T{1} + std::exp(-x)); },
      [](T, T y) { return y * (T{1} - y); });
}

template <class T>
Var<T> tanh(const Var<T>& a) {
  return detail::unary(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T{1} - y * y; });
}

/// Softmax along the last axis, with max-subtraction.
template <class T>
Var<T> softmax(const Var<T>& a) {
  detail::require_finite("softmax", a.value());
  std::size_t r = a.rows(), c = a.cols();
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < r; ++i) {
    T* row = out.data().data() + i * c;
    T mx = *std::max_element(row, row + c);
    T sum{0};
    for (std::size_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) row[j] /= sum;
  }
  std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(),
                         [ia, r, c](Tape<T>& tp, std::size_t self) {
                           const auto& n = tp.node(self);
                           auto* da = tp.grad_sink(ia);
                           for (std::size_t i = 0; i < r; ++i) {
                             const T* y = n.value.data().data() + i * c;
                             const T* g = n.grad.data().data() + i * c;
                             T dot{0};
                             for (std::size_t j = 0; j < c; ++j) dot += g[j] * y[j];
                             for (std::size_t j = 0; j < c; ++j)
                               (*da)[i * c + j] += y[j] * (g[j] - dot);
                           }
                         });
}

inline constexpr double kLayerNormEpsilon = 1e-5;

/// Per-row normalisation over the last axis followed by gain/bias.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias,
                  T eps = static_cast<T>(kLayerNormEpsilon)) {
  detail::require_same_tape(x, gain);
  detail::require_same_tape(x, bias);
  std::size_t r = x.rows(), d = x.cols();
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) +
                         "/" + shape_str(bias.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  Tensor<T> out(x.shape());
  std::vector<T> xhat(r * d), inv_std(r);
  const auto& xv = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < r; ++i) {
    T mean{0};
    for (std::size_t j = 0; j < d; ++j) mean += xv[i * d + j];
    mean /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) {
      T dv = xv[i * d + j] - mean;
      var += dv * dv;
    }
    var /= static_cast<T>(d);
    inv_std[i] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      T h = (xv[i * d + j] - mean) * inv_std[i];
      xhat[i * d + j] = h;
      out[i * d + j] = gv[j] * h + bv[j];
    }
  }
  std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  bool rg = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
  return x.tape().record(
      std::move(out), rg,
      [ix, ig, ib, r, d, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.node(self).grad;
        const auto& gv = tp.node(ig).value;
        if (auto* dg = tp.grad_sink(ig)) {
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < d; ++j)
              (*dg)[j] += g[i * d + j] * xhat[i * d + j];
        }
        if (auto* db = tp.grad_sink(ib)) {
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < d; ++j) (*db)[j] += g[i * d + j];
        }
        if (auto* dx = tp.grad_sink(ix)) {
          T n = static_cast<T>(d);
          for (std::size_t i = 0; i < r; ++i) {
            T sum_dh{0}, sum_dh_h{0};
            for (std::size_t j = 0; j < d; ++j) {
              T dh = g[i * d + j] * gv[j];
              sum_dh += dh;
              sum_dh_h += dh * xhat[i * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              T dh = g[i * d + j] * gv[j];
              (*dx)[i * d + j] += inv_std[i] / n *
                                  (n * dh - sum_dh - xhat[i * d + j] * sum_dh_h);
            }
          }
        }
      });
}

/// Mean over rows of -log softmax(logits)[target].
template <class T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const std::size_t> targets) {
  detail::require_finite("cross_entropy", logits.value());
  std::size_t b = logits.rows(), k = logits.cols();
  if (targets.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(b) + " rows");
  }
  Tensor<T> probs = logits.value();
  T loss{0};
  for (std::size_t i = 0; i < b; ++i) {
    if (targets[i] >= k) {
      throw IndexError("cross_entropy: target " + std::to_string(targets[i]) +
                       " outside [0, " + std::to_string(k) + ")");
    }
    T* row = probs.data().data() + i * k;
    T mx = *std::max_element(row, row + k);
    T sum{0};
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    T lse = mx + std::log(sum);
    loss += lse - row[targets[i]];
    for (std::size_t j = 0; j < k; ++j) row[j] = std::exp(row[j] - lse);
  }
  loss /= static_cast<T>(b);
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  std::size_t il = logits.id();
  return logits.tape().record(
      Tensor<T>({1}, std::vector<T>{loss}), logits.requires_grad(),
      [il, b, k, probs = std::move(probs), tgt = std::move(tgt)](
          Tape<T>& tp, std::size_t self) {
        T g = tp.node(self).grad[0] / static_cast<T>(b);
        auto* dl = tp.grad_sink(il);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            T onehot = (j == tgt[i]) ? T{1} : T{0};
            (*dl)[i * k + j] += g * (probs[i * k + j] - onehot);
          }
      });
}

template <class T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<std::size_t>& targets) {
  return cross_entropy(logits, std::span<const std::size_t>(targets));
}

/// Horizontal concatenation of matrices with equal row counts.
template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  std::size_t r = parts[0].rows(), total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::require_same_tape(parts[0], p);
    if (p.rows() != r) {
      throw DimensionError("concat_cols: row mismatch " +
                           shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    total += p.cols();
    rg = rg || p.requires_grad();
  }
  Tensor<T> out({r, total});
  std::vector<std::size_t> ids, widths;
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::size_t c = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        out[i * total + off + j] = p.value()[i * c + j];
    ids.push_back(p.id());
    widths.push_back(c);
    off += c;
  }
  return parts[0].tape().record(
      std::move(out), rg,
      [ids = std::move(ids), widths = std::move(widths), r, total](
          Tape<T>& tp, std::size_t self) {
        const auto& g = tp.node(self).grad;
        std::size_t off = 0;
        for (std::size_t q = 0; q < ids.size(); ++q) {
          std::size_t c = widths[q];
          if (auto* d = tp.grad_sink(ids[q])) {
            for (std::size_t i = 0; i < r; ++i)
              for (std::size_t j = 0; j < c; ++j)
                (*d)[i * c + j] += g[i * total + off + j];
          }
          off += c;
        }
      });
}

/// Vertical concatenation of matrices with equal column counts.
template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  std::size_t c = parts[0].cols(), total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::require_same_tape(parts[0], p);
    if (p.cols() != c) {
      throw DimensionError("concat_rows: column mismatch " +
                           shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    total += p.rows();
    rg = rg || p.requires_grad();
  }
  Tensor<T> out({total, c});
  std::vector<std::size_t> ids, sizes;
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().storage().begin(), p.value().storage().end(),
              out.storage().begin() + off);
    ids.push_back(p.id());
    sizes.push_back(p.size());
    off += p.size();
  }
  return parts[0].tape().record(
      std::move(out), rg,
      [ids = std::move(ids), sizes = std::move(sizes)](Tape<T>& tp,
                                                       std::size_t self) {
        const auto& g = tp.node(self).grad;
        std::size_t off = 0;
        for (std::size_t q = 0; q < ids.size(); ++q) {
          if (auto* d = tp.grad_sink(ids[q])) {
            for (std::size_t i = 0; i < sizes[q]; ++i) (*d)[i] += g[off + i];
          }
          off += sizes[q];
        }
      });
}

template <class T>
Var<T> slice_rows(const Var<T>& a, std::size_t begin, std::size_t count) {
  std::size_t c = a.cols();
  if (count == 0 || begin + count > a.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " +
                         shape_str(a.shape()));
  }
  std::vector<T> data(a.value().storage().begin() + begin * c,
                      a.value().storage().begin() + (begin + count) * c);
  std::size_t ia = a.id();
  return a.tape().record(Tensor<T>({count, c}, std::move(data)),
                         a.requires_grad(),
                         [ia, begin, c](Tape<T>& tp, std::size_t self) {
                           const auto& g = tp.node(self).grad;
                           auto* da = tp.grad_sink(ia);
                           for (std::size_t i = 0; i < g.size(); ++i)
                             (*da)[begin * c + i] += g[i];
                         });
}

template <class T>
Var<T> slice_cols(const Var<T>& a, std::size_t begin, std::size_t count) {
  std::size_t r = a.rows(), c = a.cols();
  if (count == 0 || begin + count > c) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " +
                         shape_str(a.shape()));
  }
  Tensor<T> out({r, count});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j)
      out[i * count + j] = a.value()[i * c + begin + j];
  std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(),
                         [ia, begin, r, c, count](Tape<T>& tp, std::size_t self) {
                           const auto& g = tp.node(self).grad;
                           auto* da = tp.grad_sink(ia);
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < count; ++j)
                               (*da)[i * c + begin + j] += g[i * count + j];
                         });
}

template <class T>
Var<T> transpose(const Var<T>& a) {
  std::size_t r = a.rows(), c = a.cols();
  Tensor<T> out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.value()[i * c + j];
  std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(),
                         [ia, r, c](Tape<T>& tp, std::size_t self) {
                           const auto& g = tp.node(self).grad;
                           auto* da = tp.grad_sink(ia);
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j)
                               (*da)[i * c + j] += g[j * r + i];
                         });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  T s{0};
  for (T x : a.value().storage()) s += x;
  std::size_t ia = a.id();
  return a.tape().record(Tensor<T>({1}, std::vector<T>{s}), a.requires_grad(),
                         [ia](Tape<T>& tp, std::size_t self) {
                           T g = tp.node(self).grad[0];
                           for (auto& x : tp.grad_sink(ia)->storage()) x += g;
                         });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T{1} / static_cast<T>(a.size()));
}

/// Column means: (rows x cols) -> (1 x cols).
template <class T>
Var<T> mean_rows(const Var<T>& a) {
  std::size_t r = a.rows(), c = a.cols();
  Tensor<T> out({1, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += a.value()[i * c + j];
  for (auto& x : out.storage()) x /= static_cast<T>(r);
  std::size_t ia = a.id();
  return a.tape().record(std::move(out), a.requires_grad(),
                         [ia, r, c](Tape<T>& tp, std::size_t self) {
                           const auto& g = tp.node(self).grad;
                           auto* da = tp.grad_sink(ia);
                           T inv = T{1} / static_cast<T>(r);
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j)
                               (*da)[i * c + j] += g[j] * inv;
                         });
}

/// Row lookup: (n x d) table, ids -> (len(ids) x d).
template <class T>
Var<T> gather_rows(const Var<T>& table, std::span<const std::size_t> ids) {
  std::size_t n = table.rows(), d = table.cols();
  if (ids.empty()) throw ContractError("gather_rows: empty index list");
  Tensor<T> out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= n) {
      throw IndexError("gather_rows: row " + std::to_string(ids[i]) +
                       " outside table of " + std::to_string(n) + " rows");
    }
    std::copy_n(table.value().storage().begin() + ids[i] * d, d,
                out.storage().begin() + i * d);
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  std::size_t it = table.id();
  return table.tape().record(std::move(out), table.requires_grad(),
                             [it, d, idx = std::move(idx)](Tape<T>& tp,
                                                           std::size_t self) {
                               const auto& g = tp.node(self).grad;
                               auto* dt = tp.grad_sink(it);
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 for (std::size_t j = 0; j < d; ++j)
                                   (*dt)[idx[i] * d + j] += g[i * d + j];
                             });
}

template <class T>
Var<T> gather_rows(const Var<T>& table, const std::vector<std::size_t>& ids) {
  return gather_rows(table, std::span<const std::size_t>(ids));
}

/// Inverted dropout; identity unless the tape is in training mode.
template <class T>
Var<T> dropout(const Var<T>& a, double p) {
  Tape<T>& tp = a.tape();
  if (!tp.training() || p <= 0.0) return a;
  if (p >= 1.0) throw ContractError("dropout rate must be below 1");
  std::bernoulli_distribution keep(1.0 - p);
  Tensor<T> mask(a.shape());
  T s = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : mask.storage()) m = keep(tp.rng()) ? s : T{0};
  return mul(a, tp.constant(std::move(mask)));
}

template <class T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <class T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <class T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }

}  // namespace relcast
