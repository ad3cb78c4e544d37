#include "mopro/evalkit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "mopro/error.hpp"
#include "mopro/numkit/ops.hpp"
#include "mopro/numkit/rng.hpp"

namespace mopro::evalkit {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool same(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b) ||
         (std::isnan(a) && std::isnan(b));
}

struct Column {
  const char* name;
  bool required;
};

const std::vector<Column>& all_columns() {
  static const std::vector<Column> cols = {
      {"epoch", true},       {"l_ce", true},          {"l_pro", true},
      {"l_ins", true},       {"total", true},         {"pseudo_acc", true},
      {"ood_recall", true},  {"ood_precision", true}, {"knn_acc", true},
      {"calib_err", true},   {"corr_recall", false},  {"n_argmax", false},
      {"n_kept", false},     {"n_ood", false},        {"phase", false},
      {"lr", false},
  };
  return cols;
}

std::vector<std::string> fields(const EpochMetrics& m) {
  return {std::to_string(m.epoch), num(m.l_ce),          num(m.l_pro),
          num(m.l_ins),            num(m.total),         num(m.pseudo_acc),
          num(m.ood_recall),       num(m.ood_precision), num(m.knn_acc),
          num(m.calib_err),        num(m.corr_recall),   std::to_string(m.n_argmax),
          std::to_string(m.n_kept), std::to_string(m.n_ood), m.phase,
          num(m.lr)};
}

void assign(EpochMetrics& m, const std::string& col, const std::string& text,
            std::uint64_t offset) {
  if (col == "phase") {
    m.phase = text;
    return;
  }
  char* end = nullptr;
  if (col == "epoch" || col == "n_argmax" || col == "n_kept" || col == "n_ood") {
    const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
    if (text.empty() || *end != '\0') throw ParseError("bad integer in column '" + col + "'", offset);
    if (col == "epoch") m.epoch = v;
    if (col == "n_argmax") m.n_argmax = v;
    if (col == "n_kept") m.n_kept = v;
    if (col == "n_ood") m.n_ood = v;
    return;
  }
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || *end != '\0') throw ParseError("bad number in column '" + col + "'", offset);
  double* slot = col == "l_ce"            ? &m.l_ce
                 : col == "l_pro"         ? &m.l_pro
                 : col == "l_ins"         ? &m.l_ins
                 : col == "total"         ? &m.total
                 : col == "pseudo_acc"    ? &m.pseudo_acc
                 : col == "ood_recall"    ? &m.ood_recall
                 : col == "ood_precision" ? &m.ood_precision
                 : col == "knn_acc"       ? &m.knn_acc
                 : col == "calib_err"     ? &m.calib_err
                 : col == "corr_recall"   ? &m.corr_recall
                 : col == "lr"            ? &m.lr
                                          : nullptr;
  if (slot) *slot = v;
}

std::vector<EpochMetrics> parse_csv(const std::string& text) {
  std::vector<EpochMetrics> out;
  std::vector<std::string> header;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t line_start = pos;
    pos = eol + 1;
    if (line.empty()) continue;
    std::vector<std::pair<std::string, std::size_t>> cells;
    std::size_t c = 0;
    while (true) {
      const std::size_t comma = line.find(',', c);
      cells.emplace_back(line.substr(c, comma - c), line_start + c);
      if (comma == std::string::npos) break;
      c = comma + 1;
    }
    if (first) {
      for (auto& [name, off] : cells) header.push_back(name);
      for (const auto& col : all_columns()) {
        if (col.required && std::find(header.begin(), header.end(), col.name) == header.end()) {
          throw ParseError(std::string("missing required column '") + col.name + "'", line_start);
        }
      }
      first = false;
      continue;
    }
    if (cells.size() != header.size()) {
      throw ParseError("row has " + std::to_string(cells.size()) + " fields, header has " +
                           std::to_string(header.size()),
                       line_start);
    }
    EpochMetrics m;
    for (std::size_t i = 0; i < cells.size(); ++i) assign(m, header[i], cells[i].first, cells[i].second);
    out.push_back(m);
  }
  if (first) throw ParseError("empty metrics file: no header", 0);
  return out;
}

std::vector<EpochMetrics> parse_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), e.byte);
  }
  if (!doc.is_array()) throw ParseError("metrics JSON must be an array", 0);
  std::vector<EpochMetrics> out;
  for (const auto& rec : doc) {
    EpochMetrics m;
    for (const auto& col : all_columns()) {
      if (!rec.contains(col.name)) {
        if (col.required) throw ParseError(std::string("missing required field '") + col.name + "'", 0);
        continue;
      }
      const auto& v = rec.at(col.name);
      std::string as_text;
      if (v.is_null()) as_text = "nan";
      else if (v.is_string()) as_text = v.get<std::string>();
      else if (v.is_number_unsigned()) as_text = std::to_string(v.get<std::uint64_t>());
      else if (v.is_number()) as_text = num(v.get<double>());
      else throw ParseError(std::string("bad value for field '") + col.name + "'", 0);
      assign(m, col.name, as_text, 0);
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace

Rate Rate::of(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return {kNaN, false, num, den};
  return {static_cast<double>(num) / static_cast<double>(den), true, num, den};
}

CorrectionReport score_corrections(std::span<const noise::PseudoLabel> labels,
                                   const datagen::NoisyDataset& ds) {
  if (labels.size() != ds.size()) {
    throw DimensionError("score_corrections: " + std::to_string(labels.size()) +
                         " pseudo-labels for " + std::to_string(ds.size()) + " samples");
  }
  CorrectionReport r;
  r.n = labels.size();
  std::uint64_t id_right = 0, changed = 0, changed_right = 0, corrupted_right = 0;
  std::uint64_t ood_pred = 0, ood_true = 0, ood_hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& l = labels[i];
    switch (l.rule()) {
      case noise::Rule::Argmax: ++r.n_argmax; break;
      case noise::Rule::KeepOriginal: ++r.n_kept; break;
      case noise::Rule::Ood: ++r.n_ood; break;
      case noise::Rule::Passthrough: ++r.n_passthrough; break;
    }
    const bool truly_ood = ds.is_ood[i] != 0;
    ood_pred += l.is_ood();
    ood_true += truly_ood;
    ood_hit += l.is_ood() && truly_ood;
    if (truly_ood) continue;
    ++r.n_in_dist;
    const bool right = !l.is_ood() && l.cls() == ds.true_label[i];
    id_right += right;
    if (!l.is_ood() && l.cls() != ds.noisy_label[i]) {
      ++changed;
      changed_right += right;
    }
    if (ds.corrupted(i)) {
      ++r.n_corrupted;
      corrupted_right += right;
    }
  }
  r.pseudo_acc = Rate::of(id_right, r.n_in_dist);
  r.correction_precision = Rate::of(changed_right, changed);
  r.correction_recall = Rate::of(corrupted_right, r.n_corrupted);
  r.ood_precision = Rate::of(ood_hit, ood_pred);
  r.ood_recall = Rate::of(ood_hit, ood_true);
  return r;
}

double knn_probe(const Tensor& train, std::span<const std::size_t> train_labels,
                 const Tensor& test, std::span<const std::size_t> test_labels, std::size_t k) {
  if (train.rows() == 0 || train_labels.empty()) throw StateError("knn_probe: empty train set");
  if (k == 0 || k % 2 == 0) throw ConfigError("knn_probe: k must be odd and positive, got " + std::to_string(k));
  if (train_labels.size() != train.rows() || test_labels.size() != test.rows() ||
      train.cols() != test.cols()) {
    throw DimensionError("knn_probe: train " + numkit::shape_string(train.shape()) + " / " +
                         std::to_string(train_labels.size()) + " labels, test " +
                         numkit::shape_string(test.shape()) + " / " +
                         std::to_string(test_labels.size()) + " labels");
  }
  if (test.rows() == 0) return kNaN;
  const Tensor sims = numkit::matmul_nt(numkit::l2_normalize_rows(test), numkit::l2_normalize_rows(train));
  const std::size_t n = train.rows();
  const std::size_t kk = std::min(k, n);
  const std::size_t classes = *std::max_element(train_labels.begin(), train_labels.end()) + 1;
  std::vector<std::size_t> order(n);
  std::vector<std::size_t> votes(classes);
  std::size_t hits = 0;
  for (std::size_t q = 0; q < test.rows(); ++q) {
    auto row = sims.row(q);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return row[a] != row[b] ? row[a] > row[b] : a < b;
                      });
    std::fill(votes.begin(), votes.end(), 0);
    for (std::size_t i = 0; i < kk; ++i) ++votes[train_labels[order[i]]];
    const auto best = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    hits += best == test_labels[q];
  }
  return static_cast<double>(hits) / static_cast<double>(test.rows());
}

double linear_probe(const Tensor& train, std::span<const std::size_t> train_labels,
                    const Tensor& test, std::span<const std::size_t> test_labels,
                    std::size_t num_classes, const LinearProbeOptions& opt) {
  if (train.rows() == 0) throw StateError("linear_probe: empty train set");
  if (train_labels.size() != train.rows() || test_labels.size() != test.rows() ||
      train.cols() != test.cols()) {
    throw DimensionError("linear_probe: train " + numkit::shape_string(train.shape()) +
                         ", test " + numkit::shape_string(test.shape()));
  }
  const std::size_t d = train.cols();
  Tensor w = Tensor::matrix(d, num_classes);
  Tensor b = Tensor::matrix(1, num_classes);
  numkit::Rng rng(opt.seed);
  std::vector<std::size_t> idx(train.rows());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t bs = std::max<std::size_t>(1, opt.batch_size);
  for (std::size_t e = 0; e < opt.epochs; ++e) {
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t s = 0; s < idx.size(); s += bs) {
      const std::size_t len = std::min(bs, idx.size() - s);
      auto batch_idx = std::span<const std::size_t>(idx).subspan(s, len);
      const Tensor x = numkit::gather_rows(train, batch_idx);
      Tensor logits = numkit::matmul(x, w);
      numkit::add_bias_inplace(logits, b);
      Tensor g = numkit::softmax_rows(logits);
      for (std::size_t r = 0; r < len; ++r) g(r, train_labels[batch_idx[r]]) -= 1.0;
      for (auto& v : g.data()) v /= static_cast<double>(len);
      const Tensor gw = numkit::matmul_tn(x, g);
      for (std::size_t i = 0; i < w.size(); ++i) {
        w.data()[i] -= opt.lr * (gw.data()[i] + opt.weight_decay * w.data()[i]);
      }
      for (std::size_t c = 0; c < num_classes; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < len; ++r) acc += g(r, c);
        b(0, c) -= opt.lr * acc;
      }
    }
  }
  if (test.rows() == 0) return kNaN;
  Tensor logits = numkit::matmul(test, w);
  numkit::add_bias_inplace(logits, b);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < test.rows(); ++r) {
    auto row = logits.row(r);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    hits += best == test_labels[r];
  }
  return static_cast<double>(hits) / static_cast<double>(test.rows());
}

CalibrationReport calibration_error(std::span<const double> conf,
                                    std::span<const std::uint8_t> correct, std::size_t bins) {
  if (conf.empty()) throw StateError("calibration_error: no samples");
  if (bins == 0) throw ConfigError("calibration_error: bins must be >= 1");
  if (conf.size() != correct.size()) {
    throw DimensionError("calibration_error: " + std::to_string(conf.size()) + " confidences, " +
                         std::to_string(correct.size()) + " flags");
  }
  const double nb = static_cast<double>(bins);
  auto edge = [&](std::size_t b) { return static_cast<double>(b) / nb; };
  std::vector<double> conf_sum(bins, 0.0), hit_sum(bins, 0.0);
  CalibrationReport rep;
  rep.bins.resize(bins);
  for (std::size_t i = 0; i < conf.size(); ++i) {
    const double c = conf[i];
    if (!(c >= 0.0 && c <= 1.0)) {
      throw ContractViolation("calibration_error: confidence " + std::to_string(c) + " outside [0, 1]");
    }
    // Bin b holds (edge(b), edge(b+1)]; 0 joins the first bin. Nudge the
    // estimate so the result agrees with direct edge comparisons.
    std::size_t b = static_cast<std::size_t>(std::max(0.0, std::ceil(c * nb) - 1.0));
    b = std::min(b, bins - 1);
    while (b > 0 && c <= edge(b)) --b;
    while (b + 1 < bins && c > edge(b + 1)) ++b;
    conf_sum[b] += c;
    hit_sum[b] += correct[i] ? 1.0 : 0.0;
    ++rep.bins[b].count;
  }
  const double n = static_cast<double>(conf.size());
  double acc = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    auto& bin = rep.bins[b];
    if (bin.count == 0) continue;
    const double cnt = static_cast<double>(bin.count);
    bin.conf_mean = conf_sum[b] / cnt;
    bin.accuracy = hit_sum[b] / cnt;
    const double gap = bin.conf_mean - bin.accuracy;
    acc += (cnt / n) * gap * gap;
  }
  rep.error = std::sqrt(acc);
  return rep;
}

bool operator==(const EpochMetrics& a, const EpochMetrics& b) {
  return a.epoch == b.epoch && same(a.l_ce, b.l_ce) && same(a.l_pro, b.l_pro) &&
         same(a.l_ins, b.l_ins) && same(a.total, b.total) && same(a.pseudo_acc, b.pseudo_acc) &&
         same(a.ood_recall, b.ood_recall) && same(a.ood_precision, b.ood_precision) &&
         same(a.knn_acc, b.knn_acc) && same(a.calib_err, b.calib_err) &&
         same(a.corr_recall, b.corr_recall) && a.n_argmax == b.n_argmax &&
         a.n_kept == b.n_kept && a.n_ood == b.n_ood && a.phase == b.phase && same(a.lr, b.lr);
}

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& c : all_columns()) {
      if (c.required) v.emplace_back(c.name);
    }
    return v;
  }();
  return names;
}

std::string render_metrics(std::span<const EpochMetrics> records, MetricsFormat format) {
  std::ostringstream out;
  const auto& cols = all_columns();
  if (format == MetricsFormat::Csv) {
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i].name;
    out << '\n';
    for (const auto& m : records) {
      const auto f = fields(m);
      for (std::size_t i = 0; i < f.size(); ++i) out << (i ? "," : "") << f[i];
      out << '\n';
    }
    return out.str();
  }
  out << "[";
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto f = fields(records[r]);
    out << (r ? ",\n " : "\n ") << "{";
    for (std::size_t i = 0; i < f.size(); ++i) {
      std::string v = f[i];
      if (std::string(cols[i].name) == "phase") v = nlohmann::json(v).dump();
      else if (v == "nan" || v == "inf" || v == "-inf") v = "null";
      out << (i ? ", " : "") << '"' << cols[i].name << "\": " << v;
    }
    out << "}";
  }
  out << (records.empty() ? "]\n" : "\n]\n");
  return out.str();
}

void emit_metrics(std::span<const EpochMetrics> records, const std::filesystem::path& path,
                  MetricsFormat format) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write metrics to '" + path.string() + "'");
  f << render_metrics(records, format);
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

std::vector<EpochMetrics> parse_metrics(const std::string& text, MetricsFormat format) {
  return format == MetricsFormat::Csv ? parse_csv(text) : parse_json(text);
}

std::vector<EpochMetrics> read_metrics(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open metrics file '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  const auto fmt = path.extension() == ".json" ? MetricsFormat::Json : MetricsFormat::Csv;
  return parse_metrics(ss.str(), fmt);
}

}  // namespace mopro::evalkit
