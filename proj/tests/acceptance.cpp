// Acceptance run: one PASS/FAIL line per criterion, detail lines indented.
// Exit status is nonzero when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mopro/config.hpp"
#include "mopro/datagen.hpp"
#include "mopro/evalkit.hpp"
#include "mopro/memory.hpp"
#include "mopro/model.hpp"
#include "mopro/noise.hpp"
#include "mopro/numkit/gradcheck.hpp"
#include "mopro/numkit/ops.hpp"
#include "mopro/numkit/parallel.hpp"
#include "mopro/numkit/rng.hpp"
#include "mopro/objectives.hpp"
#include "mopro/trainer.hpp"

using namespace mopro;
using noise::PseudoLabel;
using noise::Rule;
using numkit::Rng;
using numkit::Tape;
using numkit::Tensor;
using numkit::Var;

namespace {

constexpr int kSeeds = 5;

// Pinned from five reference seeds at the default config: mean - 3 sd, never
// below the stated floor.
constexpr double kPseudoAccFloor = 0.8;
constexpr double kCorruptedRecallFloor = 0.8;
constexpr double kOodRecallFloor = 0.7;
constexpr double kOodPrecisionFloor = 0.7;
constexpr double kPseudoAccRef = 0.9959;
constexpr double kCorruptedRecallRef = 0.9897;
constexpr double kOodRecallRef = 0.4326;
constexpr double kOodPrecisionRef = 0.9251;

int failures = 0;

void verdict(int n, const char* name, bool pass, const std::string& detail) {
  std::printf("criterion %2d %s: %s  %s\n", n, pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void note(const std::string& s) {
  std::printf("    %s\n", s.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Tensor normal_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t({r, c});
  for (double& v : t.data()) v = rng.normal();
  return t;
}

Tensor unit_rows(std::size_t r, std::size_t c, Rng& rng) {
  return numkit::l2_normalize_rows(normal_matrix(r, c, rng));
}

std::vector<PseudoLabel> random_labels(std::size_t b, std::size_t K, Rng& rng, bool allow_ood) {
  std::vector<PseudoLabel> out;
  for (std::size_t i = 0; i < b; ++i) {
    if (allow_ood && rng.below(4) == 0) out.push_back(PseudoLabel::ood());
    else out.push_back(PseudoLabel::of_class(rng.below(K), Rule::Argmax));
  }
  if (std::all_of(out.begin(), out.end(), [](const PseudoLabel& l) { return l.is_ood(); }))
    out[0] = PseudoLabel::of_class(0, Rule::Argmax);
  return out;
}

// 1. Gradients ------------------------------------------------------------

void criterion_gradients() {
  Rng rng(101);
  double worst_loss = 0.0, worst_prim = 0.0;
  int instances = 0;
  bool finite = true;
  auto track = [&](const numkit::GradCheckResult& r, double& worst) {
    finite = finite && r.finite;
    worst = std::max(worst, r.max_rel_error);
    ++instances;
  };
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = 2 + rng.below(4), K = 2 + rng.below(4), d = 2 + rng.below(4),
                      R = 1 + rng.below(6);
    const auto labels = random_labels(b, K, rng, true);
    Tensor x = normal_matrix(b, d, rng), logits = normal_matrix(b, K, rng);
    const Tensor pos = unit_rows(b, d, rng), neg = unit_rows(R, d, rng), protos = unit_rows(K, d, rng);
    memory::PrototypeBank bank(K, d, 0.999);
    for (std::size_t k = 0; k < K; ++k) bank.set_prototype(k, protos.row(k));
    const double tau = 0.05 + 0.5 * rng.uniform();

    track(numkit::check_gradient(
              [&](Tape& t, Var v) { return objectives::loss_ce(t, numkit::softmax_rows(t, v), labels); },
              logits),
          worst_loss);
    track(numkit::check_gradient(
              [&](Tape& t, Var v) {
                return objectives::loss_proto(t, numkit::l2_normalize(t, v), protos, labels, tau);
              },
              x),
          worst_loss);
    track(numkit::check_gradient(
              [&](Tape& t, Var v) {
                return objectives::loss_inst(t, numkit::l2_normalize(t, v), pos, neg, tau);
              },
              x),
          worst_loss);
    Tensor* params[] = {&x, &logits};
    objectives::LossWeights w{0.1 + 2 * rng.uniform(), 0.1 + 2 * rng.uniform()};
    track(numkit::check_gradient(
              [&](Tape& t) {
                objectives::LossInputs in;
                in.z = numkit::l2_normalize(t, t.parameter(x));
                in.p = numkit::softmax_rows(t, t.parameter(logits));
                in.positives = &pos;
                in.negatives = &neg;
                in.bank = &bank;
                in.tau = tau;
                return objectives::loss_total(t, in, labels, w).total_var;
              },
              params),
          worst_loss);

    const Tensor wd = normal_matrix(d, 1, rng), wk = normal_matrix(K, 1, rng);
    track(numkit::check_gradient(
              [&](Tape& t, Var v) {
                return numkit::sum(t, numkit::matmul(t, numkit::l2_normalize(t, v), t.constant(wd)));
              },
              x),
          worst_prim);
    track(numkit::check_gradient(
              [&](Tape& t, Var v) {
                return numkit::sum(t, numkit::matmul(t, numkit::softmax_rows(t, v), t.constant(wk)));
              },
              logits),
          worst_prim);
  }
  const bool pass = finite && worst_loss <= 1e-4 && worst_prim <= 1e-6;
  verdict(1, "gradient correctness", pass,
          fmt("%.0f checks; losses max rel err %.2e (<= 1e-4), normalize/softmax %.2e (<= 1e-6)",
              instances, worst_loss, worst_prim));
}

// 2. Noise rule -----------------------------------------------------------

struct Verdict {
  bool ood;
  std::size_t cls;
  Rule rule;
};

// Straight from the rule table, written without reference to the library.
Verdict table(const std::vector<double>& q, std::size_t y, double T) {
  std::size_t arg = 0;
  for (std::size_t k = 0; k < q.size(); ++k)
    if (q[k] > q[arg]) arg = k;
  if (q[arg] > T) return {false, arg, Rule::Argmax};
  if (q[y] > 1.0 / static_cast<double>(q.size())) return {false, y, Rule::KeepOriginal};
  return {true, 0, Rule::Ood};
}

void criterion_noise_rule() {
  Rng rng(202);
  int mismatches = 0, boundary = 0, exact_t = 0;
  std::map<Rule, int> seen;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t K = 2 + rng.below(9);
    const double invK = 1.0 / static_cast<double>(K);
    const double T = invK + (1.0 - invK) * rng.uniform();
    const std::size_t y = rng.below(K);
    std::vector<double> q(K);
    const int kind = trial % 5;
    if (kind == 0) {
      std::fill(q.begin(), q.end(), invK);
      ++boundary;
    } else if (kind == 1) {
      // q^y sits exactly on 1/K; the rest share the remaining mass.
      double rest = 0.0;
      for (std::size_t k = 0; k < K; ++k) rest += (q[k] = k == y ? 0.0 : rng.uniform());
      for (std::size_t k = 0; k < K; ++k) q[k] = k == y ? invK : q[k] / rest * (1.0 - invK);
      ++boundary;
    } else {
      double s = 0.0;
      for (double& v : q) s += (v = -std::log(1.0 - rng.uniform()));
      for (double& v : q) v /= s;
      if (kind == 2) {
        q[rng.below(K)] = T;  // max exactly at the threshold, not a probability vector
        ++exact_t;
      }
    }
    const auto got = noise::hard_pseudo_label(q, y, T);
    const auto want = table(q, y, T);
    const bool same = got.is_ood() == want.ood && got.rule() == want.rule &&
                      (want.ood || got.cls() == want.cls);
    mismatches += !same;
    ++seen[want.rule];
  }
  verdict(2, "noise-rule oracle", mismatches == 0,
          fmt("10000 tuples, %.0f mismatches; %.0f on the 1/K boundary, %.0f with max q = T", mismatches,
              boundary, exact_t));
  note(fmt("argmax %.0f, keep-original %.0f, ood %.0f", seen[Rule::Argmax], seen[Rule::KeepOriginal],
           seen[Rule::Ood]));
}

// 3. EMA closed form ------------------------------------------------------

void criterion_ema() {
  Rng rng(303);
  const double m = 0.9;
  const double mt = std::pow(m, 100);
  double worst_proto = 0.0, worst_param = 0.0;

  const std::size_t K = 4, d = 6;
  const Tensor c0 = unit_rows(K, d, rng), z = unit_rows(K, d, rng);
  memory::PrototypeBank bank(K, d, m, false);
  for (std::size_t k = 0; k < K; ++k) bank.set_prototype(k, c0.row(k));
  for (int t = 0; t < 100; ++t)
    for (std::size_t k = 0; k < K; ++k) bank.update(k, z.row(k));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < d; ++j)
      worst_proto = std::max(worst_proto, std::abs(bank.prototype(k)[j] - (mt * c0(k, j) + (1 - mt) * z(k, j))));

  model::NetworkShape shape;
  shape.input_dim = 5;
  shape.hidden = {7};
  shape.embed_dim = 4;
  shape.proj_hidden = 4;
  shape.proj_dim = 3;
  shape.num_classes = 3;
  model::OnlineNetwork start = model::init_network(shape, rng);
  model::OnlineNetwork target = model::init_network(shape, rng);
  model::MomentumTwin twin = model::make_twin(start);
  const model::MomentumTwin x0 = twin;
  for (int t = 0; t < 100; ++t) model::ema_update_params(twin, target, m);
  auto got = model::parameters(twin);
  auto from = model::parameters(const_cast<model::MomentumTwin&>(x0));
  auto to = model::embedding_parameters(target);
  for (std::size_t i = 0; i < got.size(); ++i)
    for (std::size_t j = 0; j < got[i].tensor->size(); ++j)
      worst_param = std::max(worst_param, std::abs((*got[i].tensor)[j] -
                                                   (mt * (*from[i].tensor)[j] + (1 - mt) * (*to[i].tensor)[j])));
  verdict(3, "EMA closed form", worst_proto <= 1e-12 && worst_param <= 1e-12,
          fmt("t=100, m=0.9: prototypes max err %.2e, parameters %.2e (<= 1e-12)", worst_proto, worst_param));
}

// 4. Queue ----------------------------------------------------------------

void criterion_queue() {
  Rng rng(404);
  int bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t cap = 1 + rng.below(20), dim = 1 + rng.below(4);
    memory::EmbeddingQueue q(cap, dim);
    std::deque<std::vector<double>> oracle;
    const std::size_t pushes = rng.below(15);
    for (std::size_t p = 0; p < pushes; ++p) {
      const Tensor z = unit_rows(1 + rng.below(2 * cap), dim, rng);
      q.enqueue(z);
      for (std::size_t r = 0; r < z.rows(); ++r) {
        oracle.emplace_back(z.row(r).begin(), z.row(r).end());
        if (oracle.size() > cap) oracle.pop_front();
      }
    }
    const Tensor c = q.contents();
    bool ok = q.size() == oracle.size() && q.full() == (oracle.size() == cap);
    for (std::size_t r = 0; ok && r < oracle.size(); ++r)
      for (std::size_t j = 0; j < dim; ++j) ok = ok && c(r, j) == oracle[r][j];
    bad += !ok;
  }
  verdict(4, "queue semantics", bad == 0, fmt("1000 randomized trials vs list oracle, %.0f disagreements", bad));
}

// 5. Masking --------------------------------------------------------------

void criterion_masking() {
  Rng rng(505);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 2 + rng.below(8), K = 2 + rng.below(5), d = 2 + rng.below(5),
                      R = 1 + rng.below(8);
    const auto labels = random_labels(b, K, rng, true);
    const Tensor z = unit_rows(b, d, rng), pos = unit_rows(b, d, rng), neg = unit_rows(R, d, rng),
                 protos = unit_rows(K, d, rng);
    const Tensor p = numkit::softmax_rows(normal_matrix(b, K, rng));
    memory::PrototypeBank bank(K, d, 0.999);
    for (std::size_t k = 0; k < K; ++k) bank.set_prototype(k, protos.row(k));
    memory::EmbeddingQueue queue(R, d);
    queue.enqueue(neg);
    const double tau = 0.1 + 0.3 * rng.uniform();
    const objectives::LossWeights w{rng.uniform() * 2, rng.uniform() * 2};

    Tape tape;
    objectives::LossInputs in;
    in.z = tape.constant(z);
    in.p = tape.constant(p);
    in.positives = &pos;
    in.negatives = &neg;
    in.bank = &bank;
    in.tau = tau;
    const auto out = objectives::loss_total(tape, in, labels, w);

    // Brute force: CE and prototype terms over in-distribution rows only,
    // instance term over every row.
    double ce = 0, pro = 0, ins = 0;
    std::size_t active = 0;
    for (std::size_t i = 0; i < b; ++i) {
      double den = 0;
      const double pos_logit = numkit::dot(z.row(i), pos.row(i)) / tau;
      den += std::exp(pos_logit);
      for (std::size_t r = 0; r < R; ++r) den += std::exp(numkit::dot(z.row(i), neg.row(r)) / tau);
      ins += -(pos_logit - std::log(den));
      if (labels[i].is_ood()) continue;
      ++active;
      const std::size_t y = labels[i].cls();
      ce += -std::log(std::max(p(i, y), objectives::kProbFloor));
      double pden = 0;
      for (std::size_t k = 0; k < K; ++k) pden += std::exp(numkit::dot(z.row(i), protos.row(k)) / tau);
      pro += -(numkit::dot(z.row(i), protos.row(y)) / tau - std::log(pden));
    }
    const double want_ce = active ? ce / active : 0.0;
    const double want_pro = active ? pro / active : 0.0;
    const double want_ins = ins / static_cast<double>(b);
    const double want = want_ce + w.lambda_pro * want_pro + w.lambda_ins * want_ins;
    worst = std::max({worst, std::abs(out.total - want), std::abs(out.l_ce - want_ce),
                      std::abs(out.l_pro - want_pro), std::abs(out.l_ins - want_ins)});
  }
  verdict(5, "masking semantics", worst <= 1e-12,
          fmt("200 mixed batches vs per-sample recomputation, max abs err %.2e (<= 1e-12)", worst));
}

// 8. Calibration ----------------------------------------------------------

double brute_calibration(const std::vector<double>& conf, const std::vector<std::uint8_t>& ok, std::size_t B) {
  std::vector<double> sc(B), sa(B), n(B);
  for (std::size_t i = 0; i < conf.size(); ++i) {
    std::size_t b = 0;
    for (std::size_t e = 1; e < B; ++e)
      if (conf[i] > static_cast<double>(e) / static_cast<double>(B)) b = e;
    sc[b] += conf[i];
    sa[b] += ok[i];
    n[b] += 1;
  }
  double e = 0;
  for (std::size_t b = 0; b < B; ++b) {
    if (n[b] == 0) continue;
    const double gap = (sc[b] - sa[b]) / n[b];
    e += n[b] / static_cast<double>(conf.size()) * gap * gap;
  }
  return std::sqrt(e);
}

void criterion_calibration() {
  Rng rng(808);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(400), B = 1 + rng.below(20);
    std::vector<double> c(n);
    std::vector<std::uint8_t> ok(n);
    for (std::size_t i = 0; i < n; ++i) {
      // A share of confidences lands exactly on bin edges.
      c[i] = i % 5 == 0 ? static_cast<double>(rng.below(B + 1)) / static_cast<double>(B) : rng.uniform();
      ok[i] = rng.uniform() < c[i];
    }
    worst = std::max(worst, std::abs(evalkit::calibration_error(c, ok, B).error - brute_calibration(c, ok, B)));
  }
  const std::vector<double> c(10, 0.8);
  const std::vector<std::uint8_t> ok = {1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
  const double single = evalkit::calibration_error(c, ok, 1).error;
  verdict(8, "calibration metric", worst <= 1e-12 && std::abs(single - 0.3) <= 1e-12,
          fmt("200 random inputs, max abs err %.2e (<= 1e-12); single bin (0.8, 0.5) = %.17g", worst, single));
}

// 6, 7, 10. Benchmark -----------------------------------------------------

struct Run {
  evalkit::CorrectionReport report;
  std::vector<PseudoLabel> labels;
  std::vector<evalkit::EpochMetrics> history;
  double knn = 0.0;
};

Run benchmark(const datagen::GeneratedData& d, std::uint64_t seed, const std::string& ablation) {
  trainer::TrainConfig c;
  c.seed = c.data.seed = seed;
  if (!ablation.empty()) trainer::apply_ablation(c, ablation);
  trainer::TrainState s = trainer::init_state(c, d.train);
  trainer::train(s, d.train, {&d.test});
  Run r;
  r.labels = trainer::correction_pass(s, d.train);
  r.report = evalkit::score_corrections(r.labels, d.train);
  r.history = s.history;
  r.knn = s.history.back().knn_acc;
  return r;
}

struct Stats {
  double mean = 0.0, sd = 0.0, min = 1e300;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  for (double x : v) s.mean += x, s.min = std::min(s.min, x);
  s.mean /= static_cast<double>(v.size());
  for (double x : v) s.sd += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(s.sd / static_cast<double>(v.size() - 1));
  return s;
}

// Prints criteria 6 and 7; returns the criterion 10 line for later.
std::pair<bool, std::string> benchmark_criteria() {
  const std::vector<std::string> variants = {"", "wo_pro", "wo_ins", "wo_s", "ce_only"};
  std::map<std::string, std::vector<Run>> runs;
  for (int seed = 0; seed < kSeeds; ++seed) {
    trainer::TrainConfig c;
    c.data.seed = static_cast<std::uint64_t>(seed);
    const auto data = datagen::generate(c.data);
    for (const auto& v : variants) {
      const auto t0 = std::chrono::steady_clock::now();
      runs[v].push_back(benchmark(data, static_cast<std::uint64_t>(seed), v));
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const auto& r = runs[v].back().report;
      std::printf("    seed %d %-8s pseudo_acc %.4f corrupted_recall %.4f ood_p %.4f ood_r %.4f knn %.4f (%.1fs)\n",
                  seed, v.empty() ? "full" : v.c_str(), r.pseudo_acc.value, r.correction_recall.value,
                  r.ood_precision.value, r.ood_recall.value, runs[v].back().knn, secs);
      std::fflush(stdout);
    }
  }

  auto collect = [&](const std::string& v, auto get) {
    std::vector<double> out;
    for (const auto& r : runs[v]) out.push_back(get(r));
    return stats(out);
  };
  const Stats acc = collect("", [](const Run& r) { return r.report.pseudo_acc.value; });
  const Stats rec = collect("", [](const Run& r) { return r.report.correction_recall.value; });
  const Stats oodr = collect("", [](const Run& r) { return r.report.ood_recall.value; });
  const Stats oodp = collect("", [](const Run& r) { return r.report.ood_precision.value; });

  const double t_acc = std::max(kPseudoAccFloor, kPseudoAccRef);
  const double t_rec = std::max(kCorruptedRecallFloor, kCorruptedRecallRef);
  const double t_oodr = std::max(kOodRecallFloor, kOodRecallRef);
  const double t_oodp = std::max(kOodPrecisionFloor, kOodPrecisionRef);
  note(fmt("reference mean - 3 sd: pseudo_acc %.4f, corrupted recall %.4f, ood recall %.4f, ood precision %.4f",
           acc.mean - 3 * acc.sd, rec.mean - 3 * rec.sd, oodr.mean - 3 * oodr.sd, oodp.mean - 3 * oodp.sd));
  const bool pass_a = acc.mean >= t_acc && rec.mean >= t_rec;
  const bool pass_b = oodr.mean >= t_oodr && oodp.mean >= t_oodp;
  verdict(6, "desk-scale benchmark", pass_a && pass_b,
          std::string(pass_a ? "(a) pass" : "(a) FAIL") + (pass_b ? ", (b) pass" : ", (b) FAIL"));
  note(fmt("(a) in-dist pseudo_acc %.4f (>= %.4f), corrupted recall %.4f (>= %.4f), baseline 0.6", acc.mean, t_acc,
           rec.mean, t_rec));
  note(fmt("(b) ood recall %.4f (>= %.4f), ood precision %.4f (>= %.4f)", oodr.mean, t_oodr, oodp.mean, t_oodp));

  int loss_down = 0, monotone = 0;
  double worst_drop = 0.0;
  for (const auto& r : runs[""]) {
    loss_down += r.history.back().total < r.history.front().total;
    bool mono = true;
    for (std::size_t e = 1; e < std::min<std::size_t>(20, r.history.size()); ++e) {
      const double drop = r.history[e - 1].pseudo_acc - r.history[e].pseudo_acc;
      mono = mono && drop <= 0.0;
      worst_drop = std::max(worst_drop, drop);
    }
    monotone += mono;
  }
  note(fmt("final total loss below epoch 1 in %.0f/5 seeds", loss_down));
  note(fmt("pseudo_acc non-decreasing over epochs 1-20 in %.0f/5 seeds (largest epoch-to-epoch drop %.4f)",
           monotone, worst_drop));

  std::map<std::string, double> knn;
  for (const auto& v : variants) knn[v] = collect(v, [](const Run& r) { return r.knn; }).mean;
  bool order = true;
  for (const char* v : {"wo_pro", "wo_ins", "wo_s"}) order = order && knn[""] >= knn[v] && knn[v] >= knn["ce_only"];
  verdict(7, "ablation ordering", order,
          fmt("mean kNN: full %.4f, wo_pro %.4f, wo_ins %.4f, wo_s %.4f", knn[""], knn["wo_pro"], knn["wo_ins"],
              knn["wo_s"]) +
              fmt(", ce_only %.4f", knn["ce_only"]));

  bool degenerate = true;
  std::uint64_t kept = 0;
  for (const auto& r : runs["ce_only"]) {
    for (const auto& m : r.history) {
      degenerate = degenerate && m.l_pro == 0.0 && m.l_ins == 0.0 && m.n_argmax == 0 && m.n_ood == 0;
      kept += m.n_kept;
    }
    for (const auto& l : r.labels) degenerate = degenerate && l.rule() == Rule::KeepOriginal;
  }
  return {degenerate && kept > 0,
          fmt("5 seeds: l_pro = l_ins = 0 every epoch, %.0f keep-original firings, no argmax or ood",
              static_cast<double>(kept))};
}

// 9. Determinism and resumption ------------------------------------------

void criterion_determinism() {
  trainer::TrainConfig c;
  const auto d = datagen::generate(c.data);
  auto csv_of = [](const trainer::TrainState& s) {
    return evalkit::render_metrics(s.history, evalkit::MetricsFormat::Csv);
  };
  trainer::TrainState a = trainer::init_state(c, d.train);
  trainer::train(a, d.train, {&d.test});
  trainer::TrainState b = trainer::init_state(c, d.train);
  trainer::train(b, d.train, {&d.test});
  const bool same = csv_of(a) == csv_of(b);

  trainer::TrainState part = trainer::init_state(c, d.train);
  trainer::train(part, d.train, {&d.test}, {}, c.optim.epochs / 2);
  trainer::TrainState resumed = trainer::decode_checkpoint(trainer::encode_checkpoint(part));
  trainer::train(resumed, d.train, {&d.test});
  const bool resume = csv_of(resumed) == csv_of(a) &&
                      trainer::encode_checkpoint(resumed) == trainer::encode_checkpoint(a);
  verdict(9, "determinism and resumption", same && resume,
          std::string("single-threaded rerun CSV ") + (same ? "bitwise equal" : "DIFFERS") +
              "; resume at epoch " + std::to_string(c.optim.epochs / 2) + " " +
              (resume ? "matches the uninterrupted run (CSV and checkpoint bytes)" : "DIFFERS"));
}

}  // namespace

int main() {
  numkit::set_threads(1);
  criterion_gradients();
  criterion_noise_rule();
  criterion_ema();
  criterion_queue();
  criterion_masking();
  const auto [degenerate, detail] = benchmark_criteria();
  criterion_calibration();
  criterion_determinism();
  verdict(10, "ce_only degeneracy", degenerate, detail);
  std::printf("%d criterion line(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
