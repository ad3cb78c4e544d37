#pragma once

#include <cstdint>
#include <span>

#include "mopro/memory.hpp"
#include "mopro/noise.hpp"
#include "mopro/numkit/autograd.hpp"

namespace mopro::objectives {

using noise::PseudoLabel;
using numkit::Tape;
using numkit::Tensor;
using numkit::Var;

/// Probability floor for the cross-entropy term.
inline constexpr double kProbFloor = 1e-12;

// Batch forms. Prototypes, positives and negatives are constants: gradient
// flows only into z (or p). They are held by reference until backward().

/// Mean over non-OOD rows of -log softmax_k(z . c_k / tau)[y_hat]; 0 when
/// every row is OOD.
Var loss_proto(Tape& tape, Var z, const Tensor& prototypes, std::span<const PseudoLabel> labels,
               double tau);

/// Mean over all rows of the InfoNCE term whose denominator holds the
/// positive (row i of `positives`) plus every row of `negatives`.
Var loss_inst(Tape& tape, Var z, const Tensor& positives, const Tensor& negatives, double tau);

/// Mean over non-OOD rows of -log max(p[y_hat], kProbFloor). Each clamped
/// row increments *clamped when given.
Var loss_ce(Tape& tape, Var p, std::span<const PseudoLabel> labels,
            std::uint64_t* clamped = nullptr);

// Single-sample forms. OOD labels are a ContractViolation: masking is the
// caller's job.
double loss_proto(std::span<const double> z, const memory::PrototypeBank& bank,
                  const PseudoLabel& label, double tau);
/// StateError unless the queue is full.
double loss_inst(std::span<const double> z, std::span<const double> z_pos,
                 const memory::EmbeddingQueue& queue, double tau);
double loss_ce(std::span<const double> p, const PseudoLabel& label,
               std::uint64_t* clamped = nullptr);

struct LossWeights {
  double lambda_pro = 1.0;
  double lambda_ins = 1.0;
  /// Ablations: the term is skipped entirely and recorded as 0.
  bool disable_pro = false;
  bool disable_ins = false;
};

struct LossInputs {
  Var z;  // b x d_p online embeddings
  Var p;  // b x K classifier probabilities
  const Tensor* positives = nullptr;  // b x d_p momentum embeddings
  /// Null while the bank is uninitialized; l_pro is then 0.
  const memory::PrototypeBank* bank = nullptr;
  /// Null until the queue is full; l_ins is then 0.
  const Tensor* negatives = nullptr;
  double tau = 0.1;
};

struct LossBreakdown {
  double l_ce = 0.0;
  double l_pro = 0.0;
  double l_ins = 0.0;
  double lambda_pro = 1.0;
  double lambda_ins = 1.0;
  /// l_ce + lambda_pro * l_pro + lambda_ins * l_ins
  double total = 0.0;
  std::size_t active = 0;  // non-OOD rows
  std::uint64_t ce_clamped = 0;
  Var total_var;
};

/// CE and prototypical terms over non-OOD rows only; instance term over all
/// rows.
LossBreakdown loss_total(Tape& tape, const LossInputs& in, std::span<const PseudoLabel> labels,
                         const LossWeights& weights);

}  // namespace mopro::objectives
