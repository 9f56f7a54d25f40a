#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "relcast/tape.hpp"
#include "relcast/tensor.hpp"

namespace relcast {

namespace detail {

inline double relative_error(double analytic, double numeric, double floor) {
  double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace detail

/// Compares the reverse-mode gradient of scalar `f` at `x` with central
/// differences (f(x + h e_i) - f(x - h e_i)) / 2h. Returns the largest
/// elementwise relative error |a - n| / max(|a|, |n|, floor).
template <class T>
double finite_diff_check(
    const std::function<Var<T>(Tape<T>&, const Var<T>&)>& f,
    const Tensor<T>& x, double h = 1e-5, double floor = 1e-12) {
  Tensor<T> analytic;
  {
    Tape<T> tape;
    Var<T> xv = tape.variable(x);
    Var<T> y = f(tape, xv);
    tape.backward(y);
    analytic = xv.grad();
  }
  auto eval = [&](const Tensor<T>& at) {
    Tape<T> tape;
    return static_cast<double>(f(tape, tape.variable(at)).item());
  };
  double worst = 0.0;
  Tensor<T> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    T orig = probe[i];
    probe[i] = orig + static_cast<T>(h);
    double up = eval(probe);
    probe[i] = orig - static_cast<T>(h);
    double down = eval(probe);
    probe[i] = orig;
    double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, detail::relative_error(
                                static_cast<double>(analytic[i]), numeric, floor));
  }
  return worst;
}

/// Same check against every parameter of a model-level scalar `loss`. A
/// floor near the difference noise keeps exactly-zero directions (e.g. a
/// bias under softmax shift invariance) from reading as relative error 1.
template <class T>
double finite_diff_check(const std::function<Var<T>(Tape<T>&)>& loss,
                         ParameterSet<T>& params, double h = 1e-5, double floor = 1e-12) {
  params.zero_grad();
  {
    Tape<T> tape;
    tape.backward(loss(tape));
  }
  auto eval = [&] {
    Tape<T> tape;
    return static_cast<double>(loss(tape).item());
  };
  double worst = 0.0;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      T orig = p->value[i];
      p->value[i] = orig + static_cast<T>(h);
      double up = eval();
      p->value[i] = orig - static_cast<T>(h);
      double down = eval();
      p->value[i] = orig;
      double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, detail::relative_error(
                                  static_cast<double>(p->grad[i]), numeric, floor));
    }
  }
  return worst;
}

}  // namespace relcast
