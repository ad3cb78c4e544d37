#include "mopro/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "mopro/error.hpp"
#include "mopro/numkit/autograd.hpp"
#include "mopro/numkit/kernels.hpp"
#include "mopro/numkit/ops.hpp"
#include "mopro/objectives.hpp"

namespace mopro::trainer {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using noise::PseudoLabel;
using noise::Rule;

std::vector<std::size_t> widen(std::span<const std::uint32_t> labels) {
  return {labels.begin(), labels.end()};
}

std::size_t warmup_epochs(const TrainConfig& c) {
  return std::min(c.optim.warmup_epochs, c.optim.epochs);
}

double effective_alpha(const MoproConfig& m) { return m.force_alpha_1 ? 1.0 : m.alpha; }

void note(TrainState& s, const char* op) {
  if (s.trace) s.trace->emplace_back(op);
}

void assert_twin_disjoint(TrainState& s) {
  std::set<const Tensor*> trained;
  for (auto& p : model::parameters(s.net)) trained.insert(p.tensor);
  for (auto& p : model::parameters(s.twin)) {
    if (trained.count(p.tensor)) {
      throw StructuralError("momentum parameter '" + p.name + "' is in the optimizer set");
    }
  }
}

void sgd_step(std::vector<model::NamedParam>& params, std::vector<Tensor>& velocity, double lr,
              double mu, double wd) {
  const auto& k = numkit::kernels::active();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].tensor;
    if (!p.has_grad()) {
      p.grad();  // a parameter outside this step's graph still decays
    }
    k.sgd_momentum(p.data().data(), velocity[i].data().data(), p.grad().data(), p.size(), lr,
                   mu, wd);
    p.zero_grad();
  }
}

void init_prototypes(TrainState& s, const datagen::NoisyDataset& ds) {
  const auto emb = model::forward_embed(s.net.encoder, s.net.projection, ds.features);
  const auto labels = widen(ds.noisy_label);
  s.bank.init(emb.z, labels);
  s.warmup_done = true;
}

bool eval_due(const TrainState& s, std::size_t epoch_number) {
  return epoch_number % s.config.eval.every == 0 || epoch_number == s.config.optim.epochs;
}

std::string diagnostic(const TrainState& s, const objectives::LossBreakdown& b,
                       std::span<const std::size_t> idx) {
  std::ostringstream out;
  out << "non-finite loss at epoch " << s.epoch + 1 << " step " << s.step << ": l_ce=" << b.l_ce
      << " l_pro=" << b.l_pro << " l_ins=" << b.l_ins << " total=" << b.total
      << " active=" << b.active << " ce_clamped=" << b.ce_clamped << " batch_first=" << idx.front()
      << " queue=" << s.queue.size() << "/" << s.queue.capacity();
  double worst = 0.0;
  std::string where;
  for (auto& p : model::parameters(const_cast<model::OnlineNetwork&>(s.net))) {
    for (double v : p.tensor->data()) {
      if (!std::isfinite(v) || std::abs(v) > worst) {
        worst = std::isfinite(v) ? std::abs(v) : INFINITY;
        where = p.name;
      }
    }
  }
  out << " max|param|=" << worst << " (" << where << ")";
  return out.str();
}

evalkit::EpochMetrics run_epoch(TrainState& s, const datagen::NoisyDataset& ds,
                                const EvalData& eval) {
  const auto& cfg = s.config;
  const bool warm = !s.warmup_done;
  const double lr = learning_rate(cfg.optim, s.epoch);
  const std::size_t n = ds.size();
  assert_twin_disjoint(s);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  s.rng.shuffle(std::span<std::size_t>(order));

  std::vector<PseudoLabel> epoch_labels(n, PseudoLabel::ood());
  auto params = model::parameters(s.net);
  const objectives::LossWeights weights{cfg.mopro.lambda_pro, cfg.mopro.lambda_ins,
                                        cfg.mopro.disable_pro, cfg.mopro.disable_ins};
  const noise::CorrectionParams correction{effective_alpha(cfg.mopro), cfg.mopro.threshold};
  double sum_ce = 0.0, sum_pro = 0.0, sum_ins = 0.0, sum_total = 0.0;
  noise::RuleCounts counts;

  for (std::size_t start = 0; start < n; start += cfg.optim.batch_size) {
    const std::size_t len = std::min(cfg.optim.batch_size, n - start);
    const auto idx = std::span<const std::size_t>(order).subspan(start, len);
    const Tensor x = numkit::gather_rows(ds.features, idx);
    std::vector<std::size_t> original(len);
    for (std::size_t i = 0; i < len; ++i) original[i] = ds.noisy_label[idx[i]];

    note(s, "augment");
    const Tensor x_weak = datagen::augment(x, cfg.augment.weak, s.rng);
    const Tensor x_strong = datagen::augment(x, cfg.augment.strong, s.rng);

    note(s, "forward_online");
    numkit::Tape tape;
    const auto in = tape.constant(x_weak);
    const auto emb = model::forward_embed(tape, s.net.encoder, s.net.projection, in);
    const auto p = model::forward_classify(tape, s.net.classifier, emb.v);
    note(s, "forward_momentum");
    const Tensor z_mom = model::forward_embed(s.twin.encoder, s.twin.projection, x_strong).z;

    std::vector<PseudoLabel> labels;
    if (warm) {
      for (auto y : original) labels.push_back(PseudoLabel::of_class(y, Rule::Passthrough));
    } else {
      note(s, "prototype_scores");
      const Tensor scores = s.bank.scores(tape.value(emb.z), cfg.mopro.tau);
      note(s, "correct_batch");
      if (cfg.mopro.correction) {
        auto corrected = noise::correct_batch(tape.value(p), scores, original, correction);
        labels = std::move(corrected.labels);
        counts += corrected.counts;
      } else {
        for (auto y : original) {
          labels.push_back(PseudoLabel::of_class(y, Rule::KeepOriginal));
          counts.add(Rule::KeepOriginal);
        }
      }
    }

    note(s, "loss_total");
    const Tensor negatives = s.queue.full() ? s.queue.contents() : Tensor();
    objectives::LossInputs li;
    li.z = emb.z;
    li.p = p;
    li.positives = &z_mom;
    li.bank = warm ? nullptr : &s.bank;
    li.negatives = s.queue.full() ? &negatives : nullptr;
    li.tau = cfg.mopro.tau;
    const auto loss = objectives::loss_total(tape, li, labels, weights);
    if (!std::isfinite(loss.total)) throw NumericError(diagnostic(s, loss, idx));

    tape.backward(loss.total_var);
    note(s, "sgd_step");
    sgd_step(params, s.velocity, lr, cfg.optim.sgd_momentum, cfg.optim.weight_decay);
    note(s, "ema_update");
    model::ema_update_params(s.twin, s.net, cfg.mopro.encoder_momentum);
    if (!warm) {
      note(s, "update_prototypes");
      const Tensor& z = tape.value(emb.z);
      for (std::size_t i = 0; i < len; ++i) {
        if (!labels[i].is_ood()) s.bank.update(labels[i].cls(), z.row(i));
      }
    }
    note(s, "enqueue");
    s.queue.enqueue(z_mom);

    for (std::size_t i = 0; i < len; ++i) epoch_labels[idx[i]] = labels[i];
    const double w = static_cast<double>(len);
    sum_ce += w * loss.l_ce;
    sum_pro += w * loss.l_pro;
    sum_ins += w * loss.l_ins;
    sum_total += w * loss.total;
    ++s.step;
  }
  ++s.epoch;

  evalkit::EpochMetrics m;
  m.epoch = s.epoch;
  m.phase = warm ? "warmup" : "main";
  m.lr = lr;
  const double nn = static_cast<double>(n);
  m.l_ce = sum_ce / nn;
  m.l_pro = sum_pro / nn;
  m.l_ins = sum_ins / nn;
  m.total = sum_total / nn;
  const auto report = evalkit::score_corrections(epoch_labels, ds);
  m.pseudo_acc = report.pseudo_acc.value;
  m.ood_recall = report.ood_recall.value;
  m.ood_precision = report.ood_precision.value;
  m.corr_recall = report.correction_recall.value;
  m.n_argmax = counts.argmax;
  m.n_kept = counts.kept;
  m.n_ood = counts.ood;
  m.knn_acc = kNaN;
  m.calib_err = kNaN;
  if (eval.test && eval_due(s, s.epoch)) {
    const auto pr = probe(s, *eval.test, false);
    m.knn_acc = pr.knn_acc;
    m.calib_err = pr.calibration.error;
  }
  s.history.push_back(m);
  return m;
}

}  // namespace

bool operator==(const TrainState& a, const TrainState& b) {
  auto& na = const_cast<TrainState&>(a);
  auto& nb = const_cast<TrainState&>(b);
  const auto pa = model::parameters(na.net), pb = model::parameters(nb.net);
  const auto ta = model::parameters(na.twin), tb = model::parameters(nb.twin);
  auto same = [](const std::vector<model::NamedParam>& x, const std::vector<model::NamedParam>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].name != y[i].name || !(*x[i].tensor == *y[i].tensor)) return false;
    }
    return true;
  };
  return a.config == b.config && same(pa, pb) && same(ta, tb) && a.bank == b.bank &&
         a.queue == b.queue && a.velocity == b.velocity && a.rng == b.rng &&
         a.epoch == b.epoch && a.step == b.step && a.warmup_done == b.warmup_done &&
         a.history == b.history;
}

void check_compatible(const TrainState& s, const datagen::NoisyDataset& ds) {
  const auto k = s.config.data.num_classes;
  if (ds.num_classes != k) {
    throw StructuralError("class count mismatch: model has K=" + std::to_string(k) +
                          ", dataset has K=" + std::to_string(ds.num_classes));
  }
  if (ds.input_dim != s.config.data.input_dim) {
    throw StructuralError("input dimension mismatch: model has d_x=" +
                          std::to_string(s.config.data.input_dim) + ", dataset has d_x=" +
                          std::to_string(ds.input_dim));
  }
}

TrainState init_state(const TrainConfig& config, const datagen::NoisyDataset& ds) {
  validate(config);
  TrainState s;
  s.config = config;
  check_compatible(s, ds);
  s.rng = numkit::Rng(config.seed);
  s.net = model::init_network(config.model, s.rng);
  s.twin = model::make_twin(s.net);
  s.bank = memory::PrototypeBank(config.data.num_classes, config.model.proj_dim,
                                 config.mopro.proto_momentum, config.mopro.renormalize_prototypes);
  s.queue = memory::EmbeddingQueue(config.mopro.queue_size, config.model.proj_dim);
  for (auto& p : model::parameters(s.net)) s.velocity.emplace_back(p.tensor->shape());
  return s;
}

void warmup(TrainState& s, const datagen::NoisyDataset& ds, const EvalData& eval) {
  if (s.warmup_done || s.epoch != 0) throw StateError("warmup: state is not fresh");
  check_compatible(s, ds);
  const std::size_t w = warmup_epochs(s.config);
  while (s.epoch < w) run_epoch(s, ds, eval);
  init_prototypes(s, ds);
}

evalkit::EpochMetrics train_epoch(TrainState& s, const datagen::NoisyDataset& ds,
                                  const EvalData& eval) {
  if (!s.warmup_done) throw StateError("train_epoch: warm-up has not completed");
  check_compatible(s, ds);
  return run_epoch(s, ds, eval);
}

void train(TrainState& s, const datagen::NoisyDataset& ds, const EvalData& eval,
           const EpochCallback& on_epoch, std::size_t stop_after) {
  check_compatible(s, ds);
  const std::size_t w = warmup_epochs(s.config);
  while (true) {
    if (!s.warmup_done && s.epoch >= w) init_prototypes(s, ds);
    if (s.epoch >= s.config.optim.epochs || (stop_after > 0 && s.epoch >= stop_after)) break;
    const auto m = run_epoch(s, ds, eval);
    if (on_epoch) on_epoch(s, m);
  }
}

std::vector<PseudoLabel> correction_pass(const TrainState& s, const datagen::NoisyDataset& ds) {
  check_compatible(s, ds);
  const auto emb = model::forward_embed(s.net.encoder, s.net.projection, ds.features);
  const Tensor p = model::forward_classify(s.net.classifier, emb.v);
  const auto original = widen(ds.noisy_label);
  std::vector<PseudoLabel> out;
  if (!s.bank.all_initialized()) {
    for (auto y : original) out.push_back(PseudoLabel::of_class(y, Rule::Passthrough));
    return out;
  }
  if (!s.config.mopro.correction) {
    for (auto y : original) out.push_back(PseudoLabel::of_class(y, Rule::KeepOriginal));
    return out;
  }
  const Tensor scores = s.bank.scores(emb.z, s.config.mopro.tau);
  return noise::correct_batch(p, scores, original,
                              {effective_alpha(s.config.mopro), s.config.mopro.threshold})
      .labels;
}

ProbeResult probe(const TrainState& s, const datagen::NoisyDataset& test, bool with_linear) {
  check_compatible(s, test);
  ProbeResult r;
  const Tensor v = model::forward_encoder(s.net.encoder, test.features);
  const auto labels = widen(test.true_label);
  for (auto y : labels) {
    if (y >= s.config.data.num_classes) throw ContractViolation("probe: held-out set contains OOD samples");
  }
  const std::size_t half = test.size() / 2;
  std::vector<std::size_t> fit_idx(half), score_idx(test.size() - half);
  std::iota(fit_idx.begin(), fit_idx.end(), 0);
  std::iota(score_idx.begin(), score_idx.end(), half);
  const Tensor v_fit = numkit::gather_rows(v, fit_idx);
  const Tensor v_score = numkit::gather_rows(v, score_idx);
  const auto y_fit = std::span<const std::size_t>(labels).first(half);
  const auto y_score = std::span<const std::size_t>(labels).subspan(half);
  r.knn_acc = evalkit::knn_probe(v_fit, y_fit, v_score, y_score, s.config.eval.knn_k);
  r.linear_acc = kNaN;
  if (with_linear) {
    evalkit::LinearProbeOptions opt;
    opt.seed = s.config.seed;
    r.linear_acc = evalkit::linear_probe(v_fit, y_fit, v_score, y_score,
                                         s.config.data.num_classes, opt);
  }
  const Tensor p = model::forward_classify(s.net.classifier, v);
  std::vector<double> conf(test.size());
  std::vector<std::uint8_t> correct(test.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    auto row = p.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    conf[i] = row[best];
    correct[i] = best == labels[i];
    hits += correct[i];
  }
  r.test_acc = test.size() ? static_cast<double>(hits) / static_cast<double>(test.size()) : kNaN;
  if (test.size()) r.calibration = evalkit::calibration_error(conf, correct, s.config.eval.calib_bins);
  return r;
}

void finetune_classifier(model::ClassifierHead& head, const Tensor& features,
                         std::span<const std::size_t> labels, const FinetuneOptions& opt) {
  if (features.rows() == 0) throw StateError("finetune_classifier: no samples");
  if (labels.size() != features.rows()) {
    throw DimensionError("finetune_classifier: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(features.rows()) + " rows");
  }
  std::vector<model::NamedParam> params = {{"classifier.fc.weight", &head.fc.weight},
                                           {"classifier.fc.bias", &head.fc.bias}};
  std::vector<Tensor> velocity;
  for (auto& p : params) velocity.emplace_back(p.tensor->shape());
  datagen::SqrtSampler sampler(labels, opt.seed);
  numkit::Rng uniform(opt.seed);
  const std::size_t n = features.rows();
  const std::size_t bs = std::max<std::size_t>(1, opt.batch_size);
  std::vector<std::size_t> idx;
  for (std::size_t e = 0; e < opt.epochs; ++e) {
    double lr = opt.lr;
    for (auto m : opt.lr_milestones) {
      if (e >= m) lr *= opt.lr_decay;
    }
    for (std::size_t done = 0; done < n; done += bs) {
      const std::size_t len = std::min(bs, n - done);
      idx.resize(len);
      for (auto& i : idx) i = opt.sqrt_sampling ? sampler.next() : uniform.below(n);
      std::vector<PseudoLabel> y;
      for (auto i : idx) y.push_back(PseudoLabel::of_class(labels[i], Rule::Passthrough));
      numkit::Tape tape;
      const auto x = tape.constant(numkit::gather_rows(features, idx));
      const auto p = model::forward_classify(tape, head, x);
      tape.backward(objectives::loss_ce(tape, p, y));
      sgd_step(params, velocity, lr, opt.sgd_momentum, opt.weight_decay);
    }
  }
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string frozen_hash(const TrainState& s) {
  auto& ms = const_cast<TrainState&>(s);
  std::vector<std::uint8_t> bytes;
  auto add = [&](const std::string& name, const Tensor& t) {
    bytes.insert(bytes.end(), name.begin(), name.end());
    const auto* raw = reinterpret_cast<const std::uint8_t*>(t.data().data());
    bytes.insert(bytes.end(), raw, raw + t.size() * sizeof(double));
  };
  for (auto& p : model::embedding_parameters(ms.net)) add(p.name, *p.tensor);
  for (auto& p : model::parameters(ms.twin)) add(p.name, *p.tensor);
  add("prototypes", s.bank.prototypes());
  return sha256_hex(bytes);
}

FinetuneReport rebalance_finetune(TrainState& s, const datagen::NoisyDataset& ds) {
  FinetuneReport rep;
  rep.frozen_hash_before = frozen_hash(s);
  const auto labels = correction_pass(s, ds);
  std::vector<std::size_t> keep, y;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].is_ood()) continue;
    keep.push_back(i);
    y.push_back(labels[i].cls());
  }
  rep.kept = keep.size();
  rep.dropped_ood = labels.size() - keep.size();
  if (keep.empty()) throw StateError("rebalance_finetune: every sample was judged OOD");
  const Tensor v = model::forward_encoder(s.net.encoder, numkit::gather_rows(ds.features, keep));
  const auto& f = s.config.finetune;
  FinetuneOptions opt{f.epochs, f.lr, f.lr_milestones, f.lr_decay, f.batch_size,
                      f.sgd_momentum, f.weight_decay, f.sqrt_sampling,
                      s.config.seed ^ 0x9e3779b97f4a7c15ULL};
  finetune_classifier(s.net.classifier, v, y, opt);
  rep.frozen_hash_after = frozen_hash(s);
  if (rep.frozen_hash_after != rep.frozen_hash_before) {
    throw StateError("rebalance_finetune: frozen parameters changed");
  }
  return rep;
}

}  // namespace mopro::trainer
