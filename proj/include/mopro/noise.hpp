#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mopro/numkit/tensor.hpp"

namespace mopro::noise {

/// Which branch of the correction rule produced a label.
enum class Rule : std::uint8_t {
  Argmax,        // max_k q^k > T
  KeepOriginal,  // q^y > 1/K
  Ood,           // neither
  /// Label taken verbatim without consulting q (warm-up).
  Passthrough,
};

/// Corrected label: a class index (0-based) or out-of-distribution.
class PseudoLabel {
 public:
  static PseudoLabel of_class(std::size_t k, Rule rule) { return PseudoLabel(k, rule); }
  static PseudoLabel ood() { return PseudoLabel(kOod, Rule::Ood); }

  bool is_ood() const noexcept { return cls_ == kOod; }
  /// Class index; ContractViolation when OOD.
  std::size_t cls() const;
  Rule rule() const noexcept { return rule_; }

  friend bool operator==(const PseudoLabel&, const PseudoLabel&) = default;

 private:
  static constexpr std::size_t kOod = static_cast<std::size_t>(-1);
  PseudoLabel(std::size_t cls, Rule rule) : cls_(cls), rule_(rule) {}

  std::size_t cls_;
  Rule rule_;
};

/// q = alpha p + (1 - alpha) s. DimensionError on length mismatch,
/// ContractViolation for alpha outside [0, 1].
std::vector<double> soft_pseudo_label(std::span<const double> p, std::span<const double> s,
                                      double alpha);

/// Three-way rule with strict comparisons; argmax ties go to the lowest
/// index. T outside (1/K, 1] is accepted so boundary behaviour can be
/// exercised: T >= 1 disables the argmax branch, T < 1/K makes it fire
/// for every q.
PseudoLabel hard_pseudo_label(std::span<const double> q, std::size_t original, double threshold);

struct RuleCounts {
  std::uint64_t argmax = 0;
  std::uint64_t kept = 0;
  std::uint64_t ood = 0;

  std::uint64_t total() const { return argmax + kept + ood; }
  void add(Rule r);
  RuleCounts& operator+=(const RuleCounts& o);
  friend bool operator==(const RuleCounts&, const RuleCounts&) = default;
};

struct CorrectionParams {
  double alpha = 0.5;
  double threshold = 0.8;
};

struct BatchCorrection {
  std::vector<PseudoLabel> labels;
  RuleCounts counts;
};

/// Row-wise soft + hard labelling of a batch. p and s are b x K.
BatchCorrection correct_batch(const numkit::Tensor& p, const numkit::Tensor& s,
                              std::span<const std::size_t> original, const CorrectionParams& params);

}  // namespace mopro::noise
