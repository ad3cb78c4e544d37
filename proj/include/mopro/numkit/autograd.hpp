#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "mopro/numkit/tensor.hpp"

namespace mopro::numkit {

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

class Tape;
/// Receives the op's own output value and d(root)/d(output).
using BackwardFn =
    std::function<void(Tape& tape, const Tensor& out, const Tensor& out_grad)>;

/// Reverse-mode tape. Nodes are recorded in evaluation order and replayed
/// backwards by backward(). A tape lives for one forward/backward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Copies `value` onto the tape; no gradient flows to it.
  Var constant(Tensor value);
  /// References `param` without copying. After backward(), the accumulated
  /// gradient is added into param.grad(). `param` must outlive the tape.
  Var parameter(Tensor& param);
  /// Differentiable leaf owned by the tape (gradient readable via grad()).
  Var input(Tensor value);

  /// Records an op result. `backward` must accumulate into the parents with
  /// accumulate_grad().
  Var push(Tensor value, std::vector<Var> parents, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient of the last backward() root w.r.t. v (zeros when unreachable).
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  void accumulate_grad(Var v, std::span<const double> g);

  /// Seeds d(root)/d(root) = 1 for a 1-element root and propagates.
  void backward(Var root);

 private:
  struct Node {
    Tensor owned;
    Tensor* external = nullptr;
    Tensor grad;
    std::vector<Var> parents;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_parameter = false;
  };
  std::vector<Node> nodes_;
};

Var matmul(Tape& tape, Var a, Var b);
/// Row-broadcast bias add; bias is 1 x cols.
Var add_bias(Tape& tape, Var x, Var bias);
Var relu(Tape& tape, Var x);
/// Backward applies (I - y y^T) / ||x|| row by row.
Var l2_normalize(Tape& tape, Var x);
Var softmax_rows(Tape& tape, Var logits);
/// Sum of all entries as a 1x1 tensor.
Var sum(Tape& tape, Var x);

}  // namespace mopro::numkit
