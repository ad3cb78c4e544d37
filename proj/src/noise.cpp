#include "mopro/noise.hpp"

#include <string>

#include "mopro/error.hpp"

namespace mopro::noise {

std::size_t PseudoLabel::cls() const {
  if (is_ood()) throw ContractViolation("pseudo-label is OOD and has no class");
  return cls_;
}

std::vector<double> soft_pseudo_label(std::span<const double> p, std::span<const double> s,
                                      double alpha) {
  if (p.size() != s.size()) {
    throw DimensionError("soft_pseudo_label: p has " + std::to_string(p.size()) +
                         " entries, s has " + std::to_string(s.size()));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ContractViolation("alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  std::vector<double> q(p.size());
  for (std::size_t k = 0; k < q.size(); ++k) q[k] = alpha * p[k] + (1.0 - alpha) * s[k];
  return q;
}

PseudoLabel hard_pseudo_label(std::span<const double> q, std::size_t original, double threshold) {
  if (q.empty()) throw DimensionError("hard_pseudo_label: empty q");
  if (original >= q.size()) throw ContractViolation("hard_pseudo_label: label out of range");
  std::size_t best = 0;
  for (std::size_t k = 1; k < q.size(); ++k) {
    if (q[k] > q[best]) best = k;
  }
  if (q[best] > threshold) return PseudoLabel::of_class(best, Rule::Argmax);
  if (q[original] > 1.0 / static_cast<double>(q.size())) {
    return PseudoLabel::of_class(original, Rule::KeepOriginal);
  }
  return PseudoLabel::ood();
}

void RuleCounts::add(Rule r) {
  switch (r) {
    case Rule::Argmax:
      ++argmax;
      break;
    case Rule::KeepOriginal:
      ++kept;
      break;
    case Rule::Ood:
      ++ood;
      break;
    case Rule::Passthrough:
      break;
  }
}

RuleCounts& RuleCounts::operator+=(const RuleCounts& o) {
  argmax += o.argmax;
  kept += o.kept;
  ood += o.ood;
  return *this;
}

BatchCorrection correct_batch(const numkit::Tensor& p, const numkit::Tensor& s,
                              std::span<const std::size_t> original,
                              const CorrectionParams& params) {
  if (p.shape() != s.shape() || p.rows() != original.size()) {
    throw DimensionError("correct_batch: p " + numkit::shape_string(p.shape()) + ", s " +
                         numkit::shape_string(s.shape()) + ", " +
                         std::to_string(original.size()) + " labels");
  }
  BatchCorrection out;
  out.labels.reserve(original.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    const auto q = soft_pseudo_label(p.row(i), s.row(i), params.alpha);
    out.labels.push_back(hard_pseudo_label(q, original[i], params.threshold));
    out.counts.add(out.labels.back().rule());
  }
  return out;
}

}  // namespace mopro::noise
