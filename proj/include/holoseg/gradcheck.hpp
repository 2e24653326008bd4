#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "holoseg/tensor.hpp"

namespace holoseg {

/// Scalar objective that also reports its analytic gradient when `grad` is
/// non-null.
template <typename Scalar>
using BasicObjective = std::function<Scalar(const BasicTensor<Scalar>& x, BasicTensor<Scalar>* grad)>;

using Objective = BasicObjective<double>;

/// Largest |analytic - numeric| / max(1, |analytic|, |numeric|) over all
/// coordinates, with central differences of the given step.
template <typename Scalar>
Scalar grad_check(const BasicObjective<Scalar>& f, const BasicTensor<Scalar>& x,
                  Scalar step = Scalar(1e-4)) {
  if (!(step > Scalar(0))) throw Error("grad_check: step must be positive");
  BasicTensor<Scalar> analytic;
  f(x, &analytic);
  require_same_shape(x, analytic, "grad_check: gradient");

  BasicTensor<Scalar> probe = x;
  Scalar worst = 0;
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar orig = probe[i];
    probe[i] = orig + step;
    const Scalar plus = f(probe, nullptr);
    probe[i] = orig - step;
    const Scalar minus = f(probe, nullptr);
    probe[i] = orig;
    const Scalar numeric = (plus - minus) / (2 * step);
    const Scalar a = analytic[i];
    const Scalar scale = std::max({Scalar(1), std::abs(a), std::abs(numeric)});
    worst = std::max(worst, std::abs(a - numeric) / scale);
  }
  return worst;
}

}  // namespace holoseg
