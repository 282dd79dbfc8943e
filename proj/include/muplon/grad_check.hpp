#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include "muplon/autodiff.hpp"

namespace muplon::ad {

template <typename T>
using ScalarFn = std::function<Var<T>(Tape<T>&, const Var<T>&)>;

// Compares the tape gradient of f at x against central differences.
// Returns max_i |analytic_i - numeric_i| / max(1, |numeric_i|), or +inf if
// anything evaluates to NaN.
template <typename T>
double grad_check(const ScalarFn<T>& f, const Tensor<T>& x, double eps) {
  Tape<T> tape;
  auto xv = tape.variable(x);
  auto loss = f(tape, xv);
  tape.backward(loss);
  const Tensor<T> analytic = xv.grad();

  auto eval = [&f](const Tensor<T>& point) {
    Tape<T> t;
    return static_cast<double>(f(t, t.constant(point)).item());
  };

  double worst = 0.0;
  Tensor<T> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T orig = probe[i];
    probe[i] = static_cast<T>(orig + eps);
    const double up = eval(probe);
    probe[i] = static_cast<T>(orig - eps);
    const double down = eval(probe);
    probe[i] = orig;
    // The step actually taken after rounding to T.
    const double step = static_cast<double>(static_cast<T>(orig + eps)) -
                        static_cast<double>(static_cast<T>(orig - eps));
    const double numeric = (up - down) / step;
    const double a = static_cast<double>(analytic[i]);
    if (std::isnan(numeric) || std::isnan(a)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

}  // namespace muplon::ad
