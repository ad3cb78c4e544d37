#pragma once

#include <string>
#include <vector>

#include "mopro/numkit/autograd.hpp"
#include "mopro/numkit/rng.hpp"
#include "mopro/numkit/tensor.hpp"

namespace mopro::model {

using numkit::Tape;
using numkit::Tensor;
using numkit::Var;

/// Affine layer y = x W + b with W stored in_dim x out_dim.
struct Linear {
  Tensor weight;
  Tensor bias;

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

/// Rectified MLP producing the representation v. No rectifier on the final
/// layer.
struct EncoderNet {
  std::vector<Linear> layers;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }
};

/// One-hidden-layer MLP whose output rows are l2-normalized.
struct ProjectionHead {
  Linear hidden;
  Linear output;
};

struct ClassifierHead {
  Linear fc;
};

struct NetworkShape {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden = {128, 128};
  std::size_t embed_dim = 64;
  /// 0 means "same as embed_dim".
  std::size_t proj_hidden = 0;
  std::size_t proj_dim = 16;
  std::size_t num_classes = 10;
};

struct OnlineNetwork {
  EncoderNet encoder;
  ProjectionHead projection;
  ClassifierHead classifier;
};

/// EMA copy of encoder + projection. Never touched by the optimizer.
struct MomentumTwin {
  EncoderNet encoder;
  ProjectionHead projection;
};

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

/// Uniform fan-in init: W, b ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
OnlineNetwork init_network(const NetworkShape& shape, numkit::Rng& rng);

/// Exact copy of the online encoder + projection.
MomentumTwin make_twin(const OnlineNetwork& net);

/// Trainable parameters in a fixed order ("encoder.0.weight", ...).
std::vector<NamedParam> parameters(OnlineNetwork& net);
std::vector<NamedParam> parameters(MomentumTwin& twin);
/// Encoder + projection only (the part a twin mirrors).
std::vector<NamedParam> embedding_parameters(OnlineNetwork& net);

struct Embedding {
  Tensor v;  // b x d_e representation
  Tensor z;  // b x d_p unit-norm embedding
};

Tensor forward_encoder(const EncoderNet& enc, const Tensor& batch);
Embedding forward_embed(const EncoderNet& enc, const ProjectionHead& proj, const Tensor& batch);
Tensor forward_classify(const ClassifierHead& head, const Tensor& v);

struct TapeEmbedding {
  Var v;
  Var z;
};

/// Differentiable forward; parameters are registered on `tape`.
TapeEmbedding forward_embed(Tape& tape, EncoderNet& enc, ProjectionHead& proj, Var batch);
Var forward_classify(Tape& tape, ClassifierHead& head, Var v);

/// theta' <- m * theta' + (1 - m) * theta for every parameter pair.
/// Throws StructuralError on any shape mismatch, ContractViolation for m
/// outside [0, 1).
void ema_update_params(MomentumTwin& twin, const OnlineNetwork& online, double m);

}  // namespace mopro::model
