#pragma once

#include <functional>
#include <span>

#include "mopro/numkit/autograd.hpp"

namespace mopro::numkit {

struct GradCheckResult {
  /// max_i |analytic_i - numeric_i| / max(1, |analytic_i|)
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  /// False when any evaluation produced a non-finite value.
  bool finite = true;

  bool passed(double tolerance) const { return finite && max_rel_error <= tolerance; }
};

using ScalarFn = std::function<Var(Tape&, Var)>;
using ParamFn = std::function<Var(Tape&)>;

/// Compares the tape gradient of f at x against central differences with
/// step h.
GradCheckResult check_gradient(const ScalarFn& f, const Tensor& x, double h = 1e-5);

/// Same check over every entry of every parameter in `params`; f must read
/// the parameters through Tape::parameter so perturbations are visible.
GradCheckResult check_gradient(const ParamFn& f, std::span<Tensor* const> params,
                               double h = 1e-5);

}  // namespace mopro::numkit
