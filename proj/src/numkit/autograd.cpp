#include "mopro/numkit/autograd.hpp"

#include <cmath>

#include "mopro/error.hpp"
#include "mopro/numkit/ops.hpp"

namespace mopro::numkit {

Var Tape::constant(Tensor value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(Tensor& param) {
  Node node;
  node.external = &param;
  node.requires_grad = true;
  node.is_parameter = true;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::input(Tensor value) {
  Node node;
  node.owned = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::push(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  Node node;
  node.owned = std::move(value);
  for (Var p : parents) node.requires_grad = node.requires_grad || nodes_[p.id].requires_grad;
  node.parents = std::move(parents);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.external ? *n.external : n.owned;
}

void Tape::accumulate_grad(Var v, std::span<const double> g) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (n.grad.empty() && !g.empty()) n.grad = Tensor(value(v).shape(), 0.0);
  auto dst = n.grad.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void Tape::backward(Var root) {
  if (value(root).size() != 1) {
    throw ContractViolation("backward root must be a scalar, got shape " +
                            shape_string(value(root).shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  const double one = 1.0;
  accumulate_grad(root, std::span<const double>(&one, 1));
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.owned, n.grad);
    if (n.is_parameter) {
      auto dst = n.external->grad();
      auto src = n.grad.data();
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
  }
}

Var matmul(Tape& tape, Var a, Var b) {
  Tensor out = matmul(tape.value(a), tape.value(b));
  return tape.push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    if (t.requires_grad(a)) t.accumulate_grad(a, matmul_nt(g, t.value(b)).data());
    if (t.requires_grad(b)) t.accumulate_grad(b, matmul_tn(t.value(a), g).data());
  });
}

Var add_bias(Tape& tape, Var x, Var bias) {
  Tensor out = tape.value(x);
  add_bias_inplace(out, tape.value(bias));
  return tape.push(std::move(out), {x, bias}, [x, bias](Tape& t, const Tensor&, const Tensor& g) {
    t.accumulate_grad(x, g.data());
    if (t.requires_grad(bias)) {
      std::vector<double> colsum(g.cols(), 0.0);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t j = 0; j < colsum.size(); ++j) colsum[j] += row[j];
      }
      t.accumulate_grad(bias, colsum);
    }
  });
}

Var relu(Tape& tape, Var x) {
  Tensor out = tape.value(x);
  relu_inplace(out);
  return tape.push(std::move(out), {x}, [x](Tape& t, const Tensor&, const Tensor& g) {
    const auto in = t.value(x).data();
    std::vector<double> dx(g.size());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = in[i] > 0.0 ? g[i] : 0.0;
    t.accumulate_grad(x, dx);
  });
}

Var l2_normalize(Tape& tape, Var x) {
  Tensor out = l2_normalize_rows(tape.value(x));
  return tape.push(std::move(out), {x}, [x](Tape& t, const Tensor& unit, const Tensor& g) {
    const Tensor& in = t.value(x);
    std::vector<double> dx(g.size());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const auto yr = unit.row(r);
      const auto gr = g.row(r);
      const double nrm = norm(in.row(r));
      const double proj = dot(yr, gr);
      for (std::size_t j = 0; j < yr.size(); ++j) {
        dx[r * yr.size() + j] = (gr[j] - yr[j] * proj) / nrm;
      }
    }
    t.accumulate_grad(x, dx);
  });
}

Var softmax_rows(Tape& tape, Var logits) {
  Tensor out = softmax_rows(tape.value(logits));
  return tape.push(std::move(out), {logits},
                   [logits](Tape& t, const Tensor& prob, const Tensor& g) {
                     std::vector<double> dx(g.size());
                     for (std::size_t r = 0; r < g.rows(); ++r) {
                       const auto pr = prob.row(r);
                       const auto gr = g.row(r);
                       double inner = 0.0;
                       for (std::size_t j = 0; j < pr.size(); ++j) inner += pr[j] * gr[j];
                       for (std::size_t j = 0; j < pr.size(); ++j) {
                         dx[r * pr.size() + j] = pr[j] * (gr[j] - inner);
                       }
                     }
                     t.accumulate_grad(logits, dx);
                   });
}

Var sum(Tape& tape, Var x) {
  double total = 0.0;
  for (double v : tape.value(x).data()) total += v;
  return tape.push(Tensor({1, 1}, total), {x}, [x](Tape& t, const Tensor&, const Tensor& g) {
    std::vector<double> dx(t.value(x).size(), g[0]);
    t.accumulate_grad(x, dx);
  });
}

}  // namespace mopro::numkit
