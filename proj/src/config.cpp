#include "mopro/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "mopro/error.hpp"

namespace mopro::trainer {
namespace {

namespace pt = boost::property_tree;

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const TrainConfig&)> render;
  std::function<void(TrainConfig&, const std::string&)> parse;
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument("not a finite number");
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  if (s.empty() || s.front() == '-') throw std::invalid_argument("not a nonnegative integer");
  std::size_t used = 0;
  const auto v = std::stoull(s, &used);
  if (used != s.size()) throw std::invalid_argument("not a nonnegative integer");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("not a boolean (true/false)");
}

std::vector<std::size_t> to_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(static_cast<std::size_t>(to_u64(item.substr(b, e - b + 1))));
  }
  return out;
}

std::string from_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

template <typename T>
Field f_double(std::string sec, std::string key, T TrainConfig::*part, double T::*member) {
  return {sec, key, [=](const TrainConfig& c) { return fmt_double(c.*part.*member); },
          [=](TrainConfig& c, const std::string& s) { c.*part.*member = to_double(s); }};
}
template <typename T, typename U>
Field f_uint(std::string sec, std::string key, T TrainConfig::*part, U T::*member) {
  return {sec, key, [=](const TrainConfig& c) { return std::to_string(c.*part.*member); },
          [=](TrainConfig& c, const std::string& s) { c.*part.*member = static_cast<U>(to_u64(s)); }};
}
template <typename T>
Field f_bool(std::string sec, std::string key, T TrainConfig::*part, bool T::*member) {
  return {sec, key, [=](const TrainConfig& c) { return std::string(c.*part.*member ? "true" : "false"); },
          [=](TrainConfig& c, const std::string& s) { c.*part.*member = to_bool(s); }};
}
template <typename T>
Field f_list(std::string sec, std::string key, T TrainConfig::*part,
             std::vector<std::size_t> T::*member) {
  return {sec, key, [=](const TrainConfig& c) { return from_list(c.*part.*member); },
          [=](TrainConfig& c, const std::string& s) { c.*part.*member = to_list(s); }};
}
Field f_aug(std::string key, double datagen::AugmentPolicy::*member, bool strong) {
  return {"augment", key,
          [=](const TrainConfig& c) {
            return fmt_double((strong ? c.augment.strong : c.augment.weak).*member);
          },
          [=](TrainConfig& c, const std::string& s) {
            datagen::AugmentPolicy& policy = strong ? c.augment.strong : c.augment.weak;
            policy.*member = to_double(s);
          }};
}

const std::vector<Field>& fields() {
  using datagen::AugmentPolicy;
  using datagen::DataConfig;
  static const std::vector<Field> f = {
      {"run", "seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
       [](TrainConfig& c, const std::string& s) { c.seed = to_u64(s); }},
      {"run", "ablation", [](const TrainConfig& c) { return c.ablation; },
       [](TrainConfig& c, const std::string& s) { c.ablation = s; }},

      f_uint("data", "num_classes", &TrainConfig::data, &DataConfig::num_classes),
      f_uint("data", "input_dim", &TrainConfig::data, &DataConfig::input_dim),
      f_uint("data", "n_per_class", &TrainConfig::data, &DataConfig::n_per_class),
      f_uint("data", "test_per_class", &TrainConfig::data, &DataConfig::test_per_class),
      f_double("data", "cluster_spread", &TrainConfig::data, &DataConfig::cluster_spread),
      f_double("data", "min_separation", &TrainConfig::data, &DataConfig::min_separation),
      f_double("data", "ood_spread_factor", &TrainConfig::data, &DataConfig::ood_spread_factor),
      f_double("data", "noise_rate", &TrainConfig::data, &DataConfig::noise_rate),
      f_double("data", "ood_rate", &TrainConfig::data, &DataConfig::ood_rate),
      {"data", "noise_mode",
       [](const TrainConfig& c) {
         return std::string(c.data.noise_mode == datagen::NoiseMode::Uniform ? "uniform" : "pairwise");
       },
       [](TrainConfig& c, const std::string& s) {
         if (s == "uniform") c.data.noise_mode = datagen::NoiseMode::Uniform;
         else if (s == "pairwise") c.data.noise_mode = datagen::NoiseMode::Pairwise;
         else throw std::invalid_argument("must be uniform or pairwise");
       }},
      f_uint("data", "seed", &TrainConfig::data, &DataConfig::seed),

      f_list("model", "hidden", &TrainConfig::model, &model::NetworkShape::hidden),
      f_uint("model", "embed_dim", &TrainConfig::model, &model::NetworkShape::embed_dim),
      f_uint("model", "proj_hidden", &TrainConfig::model, &model::NetworkShape::proj_hidden),
      f_uint("model", "proj_dim", &TrainConfig::model, &model::NetworkShape::proj_dim),

      f_uint("train", "epochs", &TrainConfig::optim, &OptimConfig::epochs),
      f_uint("train", "warmup_epochs", &TrainConfig::optim, &OptimConfig::warmup_epochs),
      f_uint("train", "batch_size", &TrainConfig::optim, &OptimConfig::batch_size),
      f_double("train", "lr", &TrainConfig::optim, &OptimConfig::lr),
      f_list("train", "lr_milestones", &TrainConfig::optim, &OptimConfig::lr_milestones),
      f_double("train", "lr_decay", &TrainConfig::optim, &OptimConfig::lr_decay),
      f_double("train", "sgd_momentum", &TrainConfig::optim, &OptimConfig::sgd_momentum),
      f_double("train", "weight_decay", &TrainConfig::optim, &OptimConfig::weight_decay),

      f_double("mopro", "tau", &TrainConfig::mopro, &MoproConfig::tau),
      f_double("mopro", "alpha", &TrainConfig::mopro, &MoproConfig::alpha),
      f_double("mopro", "threshold", &TrainConfig::mopro, &MoproConfig::threshold),
      f_double("mopro", "proto_momentum", &TrainConfig::mopro, &MoproConfig::proto_momentum),
      f_double("mopro", "encoder_momentum", &TrainConfig::mopro, &MoproConfig::encoder_momentum),
      f_uint("mopro", "queue_size", &TrainConfig::mopro, &MoproConfig::queue_size),
      f_double("mopro", "lambda_pro", &TrainConfig::mopro, &MoproConfig::lambda_pro),
      f_double("mopro", "lambda_ins", &TrainConfig::mopro, &MoproConfig::lambda_ins),
      f_bool("mopro", "renormalize_prototypes", &TrainConfig::mopro, &MoproConfig::renormalize_prototypes),
      f_bool("mopro", "disable_pro", &TrainConfig::mopro, &MoproConfig::disable_pro),
      f_bool("mopro", "disable_ins", &TrainConfig::mopro, &MoproConfig::disable_ins),
      f_bool("mopro", "force_alpha_1", &TrainConfig::mopro, &MoproConfig::force_alpha_1),
      f_bool("mopro", "correction", &TrainConfig::mopro, &MoproConfig::correction),

      f_aug("weak_sigma", &AugmentPolicy::sigma, false),
      f_aug("strong_sigma", &AugmentPolicy::sigma, true),
      f_aug("strong_dropout", &AugmentPolicy::dropout, true),
      f_aug("strong_scale_lo", &AugmentPolicy::scale_lo, true),
      f_aug("strong_scale_hi", &AugmentPolicy::scale_hi, true),

      f_bool("finetune", "enabled", &TrainConfig::finetune, &FinetuneConfig::enabled),
      f_uint("finetune", "epochs", &TrainConfig::finetune, &FinetuneConfig::epochs),
      f_double("finetune", "lr", &TrainConfig::finetune, &FinetuneConfig::lr),
      f_list("finetune", "lr_milestones", &TrainConfig::finetune, &FinetuneConfig::lr_milestones),
      f_double("finetune", "lr_decay", &TrainConfig::finetune, &FinetuneConfig::lr_decay),
      f_uint("finetune", "batch_size", &TrainConfig::finetune, &FinetuneConfig::batch_size),
      f_double("finetune", "sgd_momentum", &TrainConfig::finetune, &FinetuneConfig::sgd_momentum),
      f_double("finetune", "weight_decay", &TrainConfig::finetune, &FinetuneConfig::weight_decay),
      f_bool("finetune", "sqrt_sampling", &TrainConfig::finetune, &FinetuneConfig::sqrt_sampling),

      f_uint("eval", "every", &TrainConfig::eval, &EvalConfig::every),
      f_uint("eval", "knn_k", &TrainConfig::eval, &EvalConfig::knn_k),
      f_uint("eval", "calib_bins", &TrainConfig::eval, &EvalConfig::calib_bins),
  };
  return f;
}

// Line of `key` inside `[section]`, for error messages (0 when not found).
std::size_t line_of(const std::string& text, const std::string& section, const std::string& key) {
  std::istringstream in(text);
  std::string line, current;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == ';' || line[b] == '#') continue;
    if (line[b] == '[') {
      const auto e = line.find(']', b);
      current = line.substr(b + 1, e == std::string::npos ? std::string::npos : e - b - 1);
      continue;
    }
    const auto eq = line.find('=', b);
    std::string k = line.substr(b, eq == std::string::npos ? std::string::npos : eq - b);
    k.erase(k.find_last_not_of(" \t") + 1);
    if (current == section && k == key) return n;
  }
  return 0;
}

[[noreturn]] void reject(const std::string& field, const std::string& range) {
  throw ConfigError("invalid value for '" + field + "': must be " + range);
}

void sync_shape(TrainConfig& c) {
  c.model.input_dim = c.data.input_dim;
  c.model.num_classes = c.data.num_classes;
}

}  // namespace

bool operator==(const TrainConfig& a, const TrainConfig& b) {
  return render_config(a) == render_config(b);
}

void validate(const TrainConfig& c) {
  datagen::validate(c.data);
  datagen::validate(c.augment);
  const double k = static_cast<double>(c.data.num_classes);
  const auto& m = c.mopro;
  if (!(m.tau > 0.0)) reject("mopro.tau", "> 0");
  if (!(m.alpha >= 0.0 && m.alpha <= 1.0)) reject("mopro.alpha", "in [0, 1]");
  if (m.correction) {
    if (!(m.threshold > 1.0 / k && m.threshold <= 1.0)) reject("mopro.threshold", "in (1/K, 1]");
  } else if (!(m.threshold > 1.0 / k)) {
    reject("mopro.threshold", "> 1/K");
  }
  if (!(m.proto_momentum >= 0.0 && m.proto_momentum < 1.0)) reject("mopro.proto_momentum", "in [0, 1)");
  if (!(m.encoder_momentum >= 0.0 && m.encoder_momentum < 1.0)) reject("mopro.encoder_momentum", "in [0, 1)");
  if (m.queue_size < 1) reject("mopro.queue_size", ">= 1");
  if (!(m.lambda_pro >= 0.0)) reject("mopro.lambda_pro", ">= 0");
  if (!(m.lambda_ins >= 0.0)) reject("mopro.lambda_ins", ">= 0");
  const auto& o = c.optim;
  if (o.epochs < 1) reject("train.epochs", ">= 1");
  if (o.batch_size < 1) reject("train.batch_size", ">= 1");
  if (!(o.lr > 0.0)) reject("train.lr", "> 0");
  if (!(o.lr_decay > 0.0 && o.lr_decay <= 1.0)) reject("train.lr_decay", "in (0, 1]");
  if (!(o.sgd_momentum >= 0.0 && o.sgd_momentum < 1.0)) reject("train.sgd_momentum", "in [0, 1)");
  if (!(o.weight_decay >= 0.0)) reject("train.weight_decay", ">= 0");
  const auto& s = c.model;
  if (s.hidden.empty()) reject("model.hidden", "a nonempty list of positive widths");
  for (auto h : s.hidden) {
    if (h == 0) reject("model.hidden", "a nonempty list of positive widths");
  }
  if (s.embed_dim < 1) reject("model.embed_dim", ">= 1");
  if (s.proj_dim < 1) reject("model.proj_dim", ">= 1");
  if (s.input_dim != c.data.input_dim || s.num_classes != c.data.num_classes) {
    throw ConfigError("model shape disagrees with [data] input_dim/num_classes");
  }
  const auto& f = c.finetune;
  if (f.enabled) {
    if (f.batch_size < 1) reject("finetune.batch_size", ">= 1");
    if (!(f.lr > 0.0)) reject("finetune.lr", "> 0");
    if (!(f.lr_decay > 0.0 && f.lr_decay <= 1.0)) reject("finetune.lr_decay", "in (0, 1]");
    if (!(f.sgd_momentum >= 0.0 && f.sgd_momentum < 1.0)) reject("finetune.sgd_momentum", "in [0, 1)");
    if (!(f.weight_decay >= 0.0)) reject("finetune.weight_decay", ">= 0");
  }
  if (c.eval.every < 1) reject("eval.every", ">= 1");
  if (c.eval.knn_k < 1 || c.eval.knn_k % 2 == 0) reject("eval.knn_k", "an odd integer >= 1");
  if (c.eval.calib_bins < 1) reject("eval.calib_bins", ">= 1");
}

TrainConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  std::map<std::pair<std::string, std::string>, const Field*> index;
  std::set<std::string> sections;
  for (const auto& f : fields()) {
    index[{f.section, f.key}] = &f;
    sections.insert(f.section);
  }
  TrainConfig c;
  for (const auto& [sec, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config line " + std::to_string(line_of(text, "", sec)) + ": key '" + sec +
                        "' outside any section");
    }
    if (!sections.count(sec)) throw ConfigError("unknown config section [" + sec + "]");
    for (const auto& [key, node] : body) {
      const std::size_t line = line_of(text, sec, key);
      auto it = index.find({sec, key});
      if (it == index.end()) {
        throw ConfigError("config line " + std::to_string(line) + ": unknown key '" + sec + "." + key + "'");
      }
      try {
        it->second->parse(c, node.data());
      } catch (const std::exception& e) {
        throw ConfigError("config line " + std::to_string(line) + ": bad value '" + node.data() +
                          "' for '" + sec + "." + key + "': " + e.what());
      }
    }
  }
  sync_shape(c);
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string render_config(const TrainConfig& c) {
  std::string out, section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      out += (section.empty() ? "[" : "\n[") + f.section + "]\n";
      section = f.section;
    }
    out += f.key + " = " + f.render(c) + "\n";
  }
  return out;
}

void apply_ablation(TrainConfig& c, const std::string& name) {
  if (name == "wo_pro") {
    c.mopro.disable_pro = true;
  } else if (name == "wo_ins") {
    c.mopro.disable_ins = true;
  } else if (name == "wo_s") {
    c.mopro.force_alpha_1 = true;
  } else if (name == "ce_only") {
    c.mopro.disable_pro = true;
    c.mopro.disable_ins = true;
    c.mopro.force_alpha_1 = true;
    c.mopro.threshold = 1.01;
    c.mopro.correction = false;
  } else {
    throw ConfigError("unknown ablation '" + name + "': must be wo_pro, wo_ins, wo_s or ce_only");
  }
  c.ablation = name;
}

std::vector<std::size_t> lr_milestones(const OptimConfig& o) {
  if (!o.lr_milestones.empty()) return o.lr_milestones;
  const double e = static_cast<double>(o.epochs);
  return {static_cast<std::size_t>(std::llround(e * 2.0 / 3.0)),
          static_cast<std::size_t>(std::llround(e * 8.0 / 9.0))};
}

double learning_rate(const OptimConfig& o, std::size_t epoch) {
  double lr = o.lr;
  for (auto m : lr_milestones(o)) {
    if (epoch >= m) lr *= o.lr_decay;
  }
  return lr;
}

}  // namespace mopro::trainer
