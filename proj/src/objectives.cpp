#include "mopro/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mopro/error.hpp"
#include "mopro/numkit/ops.hpp"

namespace mopro::objectives {
namespace {

std::size_t count_active(std::span<const PseudoLabel> labels) {
  return static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](const auto& l) { return !l.is_ood(); }));
}

/// Softmax of `row` in place; returns log-sum-exp of the original row.
double softmax_inplace(std::span<double> row) {
  double mx = -INFINITY;
  for (double v : row) mx = std::max(mx, v);
  double total = 0.0;
  for (auto& v : row) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : row) v /= total;
  return mx + std::log(total);
}

Var scalar_node(Tape& tape, double value, std::vector<Var> parents, numkit::BackwardFn fn) {
  return tape.push(Tensor({1, 1}, value), std::move(parents), std::move(fn));
}

}  // namespace

Var loss_proto(Tape& tape, Var z, const Tensor& prototypes, std::span<const PseudoLabel> labels,
               double tau) {
  const Tensor& zv = tape.value(z);
  if (zv.rows() != labels.size() || zv.cols() != prototypes.cols()) {
    throw DimensionError("loss_proto: z " + numkit::shape_string(zv.shape()) + ", prototypes " +
                         numkit::shape_string(prototypes.shape()));
  }
  const std::size_t active = count_active(labels);
  // weights[i, k] = softmax - onehot, kept for the backward pass.
  Tensor weights = numkit::matmul_nt(zv, prototypes);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto row = weights.row(i);
    if (labels[i].is_ood()) {
      std::fill(row.begin(), row.end(), 0.0);
      continue;
    }
    for (auto& v : row) v /= tau;
    const std::size_t y = labels[i].cls();
    const double target = row[y];
    total += softmax_inplace(row) - target;
    row[y] -= 1.0;
  }
  const double scale = active ? 1.0 / static_cast<double>(active) : 0.0;
  return scalar_node(tape, total * scale, {z},
                     [z, w = std::move(weights), &prototypes, scale, tau](
                         Tape& t, const Tensor&, const Tensor& g) {
                       Tensor dz = numkit::matmul(w, prototypes);
                       const double f = g[0] * scale / tau;
                       for (auto& v : dz.data()) v *= f;
                       t.accumulate_grad(z, dz.data());
                     });
}

Var loss_inst(Tape& tape, Var z, const Tensor& positives, const Tensor& negatives, double tau) {
  const Tensor& zv = tape.value(z);
  if (positives.shape() != zv.shape() || negatives.cols() != zv.cols()) {
    throw DimensionError("loss_inst: z " + numkit::shape_string(zv.shape()) + ", positives " +
                         numkit::shape_string(positives.shape()) + ", negatives " +
                         numkit::shape_string(negatives.shape()));
  }
  const std::size_t b = zv.rows(), r = negatives.rows();
  Tensor neg_logits = numkit::matmul_nt(zv, negatives);
  Tensor w_neg = Tensor::matrix(b, r);
  std::vector<double> w_pos(b);
  std::vector<double> row(r + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    row[0] = numkit::dot(zv.row(i), positives.row(i)) / tau;
    const auto nl = neg_logits.row(i);
    for (std::size_t j = 0; j < r; ++j) row[j + 1] = nl[j] / tau;
    const double pos = row[0];
    total += softmax_inplace(row) - pos;
    w_pos[i] = row[0] - 1.0;
    std::copy(row.begin() + 1, row.end(), w_neg.row(i).begin());
  }
  const double scale = b ? 1.0 / static_cast<double>(b) : 0.0;
  return scalar_node(
      tape, total * scale, {z},
      [z, w_neg = std::move(w_neg), w_pos = std::move(w_pos), &positives, &negatives, scale,
       tau](Tape& t, const Tensor&, const Tensor& g) {
        Tensor dz = numkit::matmul(w_neg, negatives);
        const double f = g[0] * scale / tau;
        for (std::size_t i = 0; i < dz.rows(); ++i) {
          auto dr = dz.row(i);
          const auto pr = positives.row(i);
          for (std::size_t j = 0; j < dr.size(); ++j) dr[j] = (dr[j] + w_pos[i] * pr[j]) * f;
        }
        t.accumulate_grad(z, dz.data());
      });
}

Var loss_ce(Tape& tape, Var p, std::span<const PseudoLabel> labels, std::uint64_t* clamped) {
  const Tensor& pv = tape.value(p);
  if (pv.rows() != labels.size()) {
    throw DimensionError("loss_ce: p " + numkit::shape_string(pv.shape()) + " with " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t active = count_active(labels);
  const double scale = active ? 1.0 / static_cast<double>(active) : 0.0;
  Tensor dp = Tensor::matrix(pv.rows(), pv.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].is_ood()) continue;
    const std::size_t y = labels[i].cls();
    const double py = pv(i, y);
    if (py < kProbFloor) {
      total += -std::log(kProbFloor);
      if (clamped) ++*clamped;
    } else {
      total += -std::log(py);
      dp(i, y) = -scale / py;
    }
  }
  return scalar_node(tape, total * scale, {p},
                     [p, dp = std::move(dp)](Tape& t, const Tensor&, const Tensor& g) {
                       std::vector<double> d(dp.data().begin(), dp.data().end());
                       for (auto& v : d) v *= g[0];
                       t.accumulate_grad(p, d);
                     });
}

double loss_proto(std::span<const double> z, const memory::PrototypeBank& bank,
                  const PseudoLabel& label, double tau) {
  if (label.is_ood()) throw ContractViolation("loss_proto called on an OOD sample");
  if (!bank.all_initialized()) throw StateError("loss_proto: prototypes are not initialized");
  Tape tape;
  Var zv = tape.constant(Tensor({1, z.size()}, std::vector<double>(z.begin(), z.end())));
  const PseudoLabel labels[] = {label};
  return tape.value(loss_proto(tape, zv, bank.prototypes(), labels, tau))[0];
}

double loss_inst(std::span<const double> z, std::span<const double> z_pos,
                 const memory::EmbeddingQueue& queue, double tau) {
  if (!queue.full()) {
    throw StateError("loss_inst: queue holds " + std::to_string(queue.size()) + " of " +
                     std::to_string(queue.capacity()) + " entries");
  }
  Tape tape;
  Var zv = tape.constant(Tensor({1, z.size()}, std::vector<double>(z.begin(), z.end())));
  const Tensor pos({1, z_pos.size()}, std::vector<double>(z_pos.begin(), z_pos.end()));
  return tape.value(loss_inst(tape, zv, pos, queue.storage(), tau))[0];
}

double loss_ce(std::span<const double> p, const PseudoLabel& label, std::uint64_t* clamped) {
  if (label.is_ood()) throw ContractViolation("loss_ce called on an OOD sample");
  Tape tape;
  Var pv = tape.constant(Tensor({1, p.size()}, std::vector<double>(p.begin(), p.end())));
  const PseudoLabel labels[] = {label};
  return tape.value(loss_ce(tape, pv, labels, clamped))[0];
}

LossBreakdown loss_total(Tape& tape, const LossInputs& in, std::span<const PseudoLabel> labels,
                         const LossWeights& weights) {
  LossBreakdown out;
  out.lambda_pro = weights.lambda_pro;
  out.lambda_ins = weights.lambda_ins;
  out.active = count_active(labels);

  std::vector<Var> terms;
  std::vector<double> coeffs;
  Var ce = loss_ce(tape, in.p, labels, &out.ce_clamped);
  out.l_ce = tape.value(ce)[0];
  terms.push_back(ce);
  coeffs.push_back(1.0);

  if (in.bank && !weights.disable_pro) {
    Var pro = loss_proto(tape, in.z, in.bank->prototypes(), labels, in.tau);
    out.l_pro = tape.value(pro)[0];
    terms.push_back(pro);
    coeffs.push_back(weights.lambda_pro);
  }
  if (in.negatives && !weights.disable_ins) {
    if (!in.positives) throw ContractViolation("loss_total: instance term needs positives");
    Var ins = loss_inst(tape, in.z, *in.positives, *in.negatives, in.tau);
    out.l_ins = tape.value(ins)[0];
    terms.push_back(ins);
    coeffs.push_back(weights.lambda_ins);
  }
  out.total = out.l_ce + out.lambda_pro * out.l_pro + out.lambda_ins * out.l_ins;
  out.total_var = tape.push(Tensor({1, 1}, out.total), terms,
                            [terms, coeffs](Tape& t, const Tensor&, const Tensor& g) {
                              for (std::size_t i = 0; i < terms.size(); ++i) {
                                const double d = g[0] * coeffs[i];
                                t.accumulate_grad(terms[i], std::span<const double>(&d, 1));
                              }
                            });
  return out;
}

}  // namespace mopro::objectives
