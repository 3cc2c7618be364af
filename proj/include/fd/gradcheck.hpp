#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "fd/params.hpp"
#include "fd/tape.hpp"

namespace fd {

template <typename T>
using LeafMap = std::map<std::string, Var<T>>;

template <typename T>
LeafMap<T> bind_all(Tape<T>& tape, const ParameterStore<T>& store,
                    bool requires_grad) {
  LeafMap<T> m;
  for (const auto& [name, tensor] : store) m[name] = tape.leaf(tensor, requires_grad);
  return m;
}

// Verification oracle: compares reverse-mode gradients of an arbitrary
// scalar-valued forward pass against central finite differences, one
// coordinate at a time. Run in 64-bit mode; epsilon around 1e-5.
//
// builder receives a fresh tape plus leaves bound from `params` and must
// rebuild the same forward pass each call (it is invoked 2N+1 times).
// Returns max over coordinates of
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
inline double check_gradients(
    ParameterStore<double>& params,
    const std::function<Var<double>(Tape<double>&, const LeafMap<double>&)>& builder,
    double eps = 1e-5) {
  auto eval = [&]() -> double {
    Tape<double> tape;
    LeafMap<double> leaves = bind_all(tape, params, false);
    const Tensor<double>& v = builder(tape, leaves).value();
    if (v.numel() != 1) throw ShapeError("check_gradients: loss must be scalar");
    if (!std::isfinite(v.values[0]))
      throw NumericError("check_gradients: non-finite loss");
    return v.values[0];
  };

  // Analytic pass.
  std::map<std::string, Tensor<double>> analytic;
  {
    Tape<double> tape;
    LeafMap<double> leaves = bind_all(tape, params, true);
    Var<double> loss = builder(tape, leaves);
    if (loss.value().numel() != 1)
      throw ShapeError("check_gradients: loss must be scalar");
    if (!std::isfinite(loss.value().values[0]))
      throw NumericError("check_gradients: non-finite loss");
    tape.backward(loss);
    for (auto& [name, var] : leaves) {
      const Tensor<double>& g = tape.grad(var);
      analytic[name] = g.empty() ? Tensor<double>::zeros(var.value().shape) : g;
    }
  }

  double max_err = 0.0;
  for (auto& [name, tensor] : params) {
    for (std::size_t i = 0; i < tensor.values.size(); ++i) {
      const double saved = tensor.values[i];
      tensor.values[i] = saved + eps;
      const double f_plus = eval();
      tensor.values[i] = saved - eps;
      const double f_minus = eval();
      tensor.values[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double a = analytic[name].values[i];
      const double err =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (err > max_err) max_err = err;
    }
  }
  return max_err;
}

}  // namespace fd
