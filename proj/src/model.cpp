#include "mopro/model.hpp"

#include <cmath>

#include "mopro/error.hpp"
#include "mopro/numkit/kernels.hpp"
#include "mopro/numkit/ops.hpp"

namespace mopro::model {
namespace {

Linear init_linear(std::size_t in, std::size_t out, numkit::Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l{Tensor::matrix(in, out), Tensor::matrix(1, out)};
  for (auto& w : l.weight.data()) w = rng.uniform(-bound, bound);
  for (auto& b : l.bias.data()) b = rng.uniform(-bound, bound);
  return l;
}

Tensor apply(const Linear& l, const Tensor& x) {
  Tensor y = numkit::matmul(x, l.weight);
  numkit::add_bias_inplace(y, l.bias);
  return y;
}

Var apply(Tape& tape, Linear& l, Var x) {
  Var y = numkit::matmul(tape, x, tape.parameter(l.weight));
  return numkit::add_bias(tape, y, tape.parameter(l.bias));
}

void push_linear(std::vector<NamedParam>& out, const std::string& prefix, Linear& l) {
  out.push_back({prefix + ".weight", &l.weight});
  out.push_back({prefix + ".bias", &l.bias});
}

void push_embedding(std::vector<NamedParam>& out, EncoderNet& enc, ProjectionHead& proj) {
  for (std::size_t i = 0; i < enc.layers.size(); ++i) {
    push_linear(out, "encoder." + std::to_string(i), enc.layers[i]);
  }
  push_linear(out, "projection.hidden", proj.hidden);
  push_linear(out, "projection.output", proj.output);
}

}  // namespace

OnlineNetwork init_network(const NetworkShape& shape, numkit::Rng& rng) {
  if (shape.input_dim == 0 || shape.embed_dim == 0 || shape.proj_dim == 0 ||
      shape.num_classes == 0) {
    throw ConfigError("network dimensions must be positive");
  }
  OnlineNetwork net;
  std::size_t prev = shape.input_dim;
  for (std::size_t h : shape.hidden) {
    net.encoder.layers.push_back(init_linear(prev, h, rng));
    prev = h;
  }
  net.encoder.layers.push_back(init_linear(prev, shape.embed_dim, rng));
  const std::size_t ph = shape.proj_hidden ? shape.proj_hidden : shape.embed_dim;
  net.projection.hidden = init_linear(shape.embed_dim, ph, rng);
  net.projection.output = init_linear(ph, shape.proj_dim, rng);
  net.classifier.fc = init_linear(shape.embed_dim, shape.num_classes, rng);
  return net;
}

MomentumTwin make_twin(const OnlineNetwork& net) { return {net.encoder, net.projection}; }

std::vector<NamedParam> parameters(OnlineNetwork& net) {
  std::vector<NamedParam> out;
  push_embedding(out, net.encoder, net.projection);
  push_linear(out, "classifier", net.classifier.fc);
  return out;
}

std::vector<NamedParam> embedding_parameters(OnlineNetwork& net) {
  std::vector<NamedParam> out;
  push_embedding(out, net.encoder, net.projection);
  return out;
}

std::vector<NamedParam> parameters(MomentumTwin& twin) {
  std::vector<NamedParam> out;
  push_embedding(out, twin.encoder, twin.projection);
  for (auto& p : out) p.name = "momentum." + p.name;
  return out;
}

Tensor forward_encoder(const EncoderNet& enc, const Tensor& batch) {
  if (batch.cols() != enc.input_dim()) {
    throw DimensionError("encoder expects width " + std::to_string(enc.input_dim()) +
                         ", got batch shape " + numkit::shape_string(batch.shape()));
  }
  Tensor h = batch;
  for (std::size_t i = 0; i < enc.layers.size(); ++i) {
    h = apply(enc.layers[i], h);
    if (i + 1 < enc.layers.size()) numkit::relu_inplace(h);
  }
  return h;
}

Embedding forward_embed(const EncoderNet& enc, const ProjectionHead& proj, const Tensor& batch) {
  Embedding out;
  out.v = forward_encoder(enc, batch);
  Tensor h = apply(proj.hidden, out.v);
  numkit::relu_inplace(h);
  out.z = numkit::l2_normalize_rows(apply(proj.output, h));
  return out;
}

Tensor forward_classify(const ClassifierHead& head, const Tensor& v) {
  return numkit::softmax_rows(apply(head.fc, v));
}

TapeEmbedding forward_embed(Tape& tape, EncoderNet& enc, ProjectionHead& proj, Var batch) {
  if (tape.value(batch).cols() != enc.input_dim()) {
    throw DimensionError("encoder expects width " + std::to_string(enc.input_dim()) +
                         ", got batch shape " + numkit::shape_string(tape.value(batch).shape()));
  }
  Var h = batch;
  for (std::size_t i = 0; i < enc.layers.size(); ++i) {
    h = apply(tape, enc.layers[i], h);
    if (i + 1 < enc.layers.size()) h = numkit::relu(tape, h);
  }
  TapeEmbedding out;
  out.v = h;
  Var p = numkit::relu(tape, apply(tape, proj.hidden, h));
  out.z = numkit::l2_normalize(tape, apply(tape, proj.output, p));
  return out;
}

Var forward_classify(Tape& tape, ClassifierHead& head, Var v) {
  return numkit::softmax_rows(tape, apply(tape, head.fc, v));
}

void ema_update_params(MomentumTwin& twin, const OnlineNetwork& online, double m) {
  if (!(m >= 0.0 && m < 1.0)) {
    throw ContractViolation("EMA momentum must lie in [0, 1), got " + std::to_string(m));
  }
  auto dst = parameters(twin);
  auto src = embedding_parameters(const_cast<OnlineNetwork&>(online));
  if (dst.size() != src.size()) {
    throw StructuralError("momentum twin has " + std::to_string(dst.size()) +
                          " parameter tensors, online network " + std::to_string(src.size()));
  }
  const auto& kt = numkit::kernels::active();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].tensor->shape() != src[i].tensor->shape()) {
      throw StructuralError(dst[i].name + " shape " +
                            numkit::shape_string(dst[i].tensor->shape()) + " vs " +
                            src[i].name + " " + numkit::shape_string(src[i].tensor->shape()));
    }
    kt.axpby(1.0 - m, src[i].tensor->data().data(), m, dst[i].tensor->data().data(),
             dst[i].tensor->size());
  }
}

}  // namespace mopro::model
