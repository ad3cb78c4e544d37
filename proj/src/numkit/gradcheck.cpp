#include "mopro/numkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mopro/error.hpp"

namespace mopro::numkit {
namespace {

double scalar_of(const Tape& tape, Var v) {
  const Tensor& t = tape.value(v);
  if (t.size() != 1) throw ContractViolation("check_gradient: f must return a scalar");
  return t[0];
}

void fold(GradCheckResult& res, std::size_t index, double analytic, double numeric) {
  if (!std::isfinite(analytic) || !std::isfinite(numeric)) {
    res.finite = false;
    res.max_rel_error = INFINITY;
    res.worst_index = index;
    return;
  }
  const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
  if (err > res.max_rel_error) {
    res.max_rel_error = err;
    res.worst_index = index;
  }
}

}  // namespace

GradCheckResult check_gradient(const ScalarFn& f, const Tensor& x, double h) {
  std::vector<double> analytic(x.size(), 0.0);
  {
    Tape tape;
    Var in = tape.input(x);
    Var out = f(tape, in);
    scalar_of(tape, out);
    tape.backward(out);
    const Tensor& g = tape.grad(in);
    if (!g.empty()) std::copy(g.data().begin(), g.data().end(), analytic.begin());
  }
  auto eval = [&](const Tensor& at) {
    Tape tape;
    Var in = tape.input(at);
    return scalar_of(tape, f(tape, in));
  };
  GradCheckResult res;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = eval(probe);
    probe[i] = x[i] - h;
    const double fm = eval(probe);
    probe[i] = x[i];
    fold(res, i, analytic[i], (fp - fm) / (2.0 * h));
  }
  return res;
}

GradCheckResult check_gradient(const ParamFn& f, std::span<Tensor* const> params, double h) {
  for (Tensor* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = f(tape);
    scalar_of(tape, out);
    tape.backward(out);
  }
  auto eval = [&] {
    Tape tape;
    return scalar_of(tape, f(tape));
  };
  GradCheckResult res;
  std::size_t flat = 0;
  for (Tensor* p : params) {
    const std::vector<double> analytic(p->grad().begin(), p->grad().end());
    for (std::size_t i = 0; i < p->size(); ++i, ++flat) {
      const double orig = (*p)[i];
      (*p)[i] = orig + h;
      const double fp = eval();
      (*p)[i] = orig - h;
      const double fm = eval();
      (*p)[i] = orig;
      fold(res, flat, analytic[i], (fp - fm) / (2.0 * h));
    }
  }
  return res;
}

}  // namespace mopro::numkit
