// mopro: dataset generation, training, evaluation and plotting.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "mopro/config.hpp"
#include "mopro/datagen.hpp"
#include "mopro/error.hpp"
#include "mopro/evalkit.hpp"
#include "mopro/numkit/kernels.hpp"
#include "mopro/numkit/parallel.hpp"
#include "mopro/plot.hpp"
#include "mopro/trainer.hpp"

#ifndef MOPRO_BUILD_ID
#define MOPRO_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mopro;

namespace {

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfig = 3,
  kIo = 4,
  kStructural = 5,
  kNumeric = 6,
  kState = 7,
};

struct Options {
  std::string config;
  std::string dataset;
  std::string test;
  std::string out = ".";
  std::string resume;
  std::string ablate;
  std::string threads = "1";
  std::string checkpoint;
  std::string metrics;
  std::int64_t seed = -1;
  std::size_t stop_after = 0;
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("mopro");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("MOPRO_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else spdlog::set_level(spdlog::level::info);
}

void set_threads(const std::string& t) {
  if (t == "1") numkit::set_threads(1);
  else if (t == "auto") numkit::set_threads(numkit::hardware_threads());
  else throw ConfigError("invalid value for '--threads': must be 1 or auto");
}

trainer::TrainConfig resolve_config(const Options& o) {
  trainer::TrainConfig c = o.config.empty() ? trainer::TrainConfig{} : trainer::load_config(o.config);
  if (!o.ablate.empty()) trainer::apply_ablation(c, o.ablate);
  trainer::validate(c);
  return c;
}

std::string file_sha256(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open '" + p.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return trainer::sha256_hex(bytes);
}

json config_json(const trainer::TrainConfig& c) {
  json out = json::object();
  std::istringstream in(trainer::render_config(c));
  std::string line, section;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = line.substr(1, line.size() - 2);
      out[section] = json::object();
      continue;
    }
    const auto eq = line.find(" = ");
    out[section][line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + p.string() + "'");
  f << text;
}

void write_manifest(const fs::path& dir, const std::string& command, const trainer::TrainConfig& c,
                    const json& extra) {
  json m = {{"command", command},
            {"build", MOPRO_BUILD_ID},
            {"seed", c.seed},
            {"data_seed", c.data.seed},
            {"ablation", c.ablation},
            {"output_dir", fs::absolute(dir).string()},
            {"kernels", numkit::kernels::isa_name(numkit::kernels::active().isa)},
            {"threads", numkit::threads()},
            {"config", config_json(c)}};
  m.update(extra);
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  write_text(dir / "config.ini", trainer::render_config(c));
}

fs::path default_test_path(const fs::path& dataset) {
  return dataset.parent_path() / (dataset.stem().string() + ".test.mpds");
}

int cmd_generate(const Options& o) {
  auto c = resolve_config(o);
  if (o.seed >= 0) c.data.seed = static_cast<std::uint64_t>(o.seed);
  fs::create_directories(o.out);
  const auto data = datagen::generate(c.data);
  const fs::path dir(o.out);
  datagen::save(data.train, dir / "dataset.mpds");
  datagen::save(data.test, dir / "dataset.test.mpds");
  write_manifest(dir, "generate", c,
                 {{"dataset", {{"path", (dir / "dataset.mpds").string()},
                               {"sha256", file_sha256(dir / "dataset.mpds")},
                               {"samples", data.train.size()}}},
                  {"test_dataset", {{"path", (dir / "dataset.test.mpds").string()},
                                    {"sha256", file_sha256(dir / "dataset.test.mpds")},
                                    {"samples", data.test.size()}}}});
  spdlog::info("wrote {} train and {} test samples to {}", data.train.size(), data.test.size(),
               dir.string());
  return kOk;
}

int cmd_train(const Options& o) {
  if (o.dataset.empty()) throw ConfigError("train requires --dataset");
  set_threads(o.threads);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  const auto ds = datagen::load(o.dataset);
  const fs::path test_path = o.test.empty() ? default_test_path(o.dataset) : fs::path(o.test);
  datagen::NoisyDataset test;
  trainer::EvalData eval;
  if (fs::exists(test_path)) {
    test = datagen::load(test_path);
    eval.test = &test;
  } else {
    spdlog::warn("no held-out set at {}; probe columns will be nan", test_path.string());
  }

  trainer::TrainState state;
  if (!o.resume.empty()) {
    state = trainer::load_checkpoint(o.resume);
    trainer::check_compatible(state, ds);
    spdlog::info("resumed from {} at epoch {}", o.resume, state.epoch);
  } else {
    auto c = resolve_config(o);
    if (o.seed >= 0) c.seed = static_cast<std::uint64_t>(o.seed);
    state = trainer::init_state(c, ds);
  }
  const auto& c = state.config;
  write_manifest(dir, "train", c,
                 {{"dataset", {{"path", o.dataset}, {"sha256", file_sha256(o.dataset)}}},
                  {"test_dataset", eval.test ? json{{"path", test_path.string()},
                                                    {"sha256", file_sha256(test_path)}}
                                             : json(nullptr)},
                  {"resumed_from", o.resume}});

  const fs::path csv = dir / "metrics.csv";
  const fs::path ckpt = dir / "checkpoint.mpck";
  trainer::train(
      state, ds, eval,
      [&](const trainer::TrainState& s, const evalkit::EpochMetrics& m) {
        evalkit::emit_metrics(s.history, csv, evalkit::MetricsFormat::Csv);
        trainer::save_checkpoint(s, ckpt);
        spdlog::info("epoch {:>3}/{} [{}] total={:.4f} ce={:.4f} pro={:.4f} ins={:.4f} "
                     "pseudo_acc={:.4f} ood_p={:.3f} ood_r={:.3f} knn={:.4f}",
                     m.epoch, c.optim.epochs, m.phase, m.total, m.l_ce, m.l_pro, m.l_ins,
                     m.pseudo_acc, m.ood_precision, m.ood_recall, m.knn_acc);
      },
      o.stop_after);
  evalkit::emit_metrics(state.history, csv, evalkit::MetricsFormat::Csv);
  evalkit::emit_metrics(state.history, dir / "metrics.json", evalkit::MetricsFormat::Json);
  if (state.epoch < c.optim.epochs) {
    spdlog::info("stopped after epoch {}; resume with --resume {}", state.epoch, ckpt.string());
    return kOk;
  }
  if (c.finetune.enabled) {
    const auto rep = trainer::rebalance_finetune(state, ds);
    spdlog::info("rebalance finetune: kept {} samples, dropped {} as OOD", rep.kept, rep.dropped_ood);
  }
  trainer::save_checkpoint(state, dir / "model.mpck");
  spdlog::info("wrote {}", (dir / "model.mpck").string());
  return kOk;
}

json rate_json(const evalkit::Rate& r) {
  return {{"value", r.defined ? json(r.value) : json(nullptr)},
          {"defined", r.defined},
          {"num", r.num},
          {"den", r.den}};
}

int cmd_eval(const Options& o) {
  if (o.checkpoint.empty() || o.dataset.empty()) throw ConfigError("eval requires --checkpoint and --dataset");
  set_threads(o.threads);
  const auto state = trainer::load_checkpoint(o.checkpoint);
  const auto ds = datagen::load(o.dataset);
  trainer::check_compatible(state, ds);
  const fs::path dir(o.out);
  fs::create_directories(dir);

  const auto labels = trainer::correction_pass(state, ds);
  const auto r = evalkit::score_corrections(labels, ds);
  json report = {{"checkpoint", o.checkpoint},
                 {"dataset", o.dataset},
                 {"correction",
                  {{"n", r.n},
                   {"n_in_dist", r.n_in_dist},
                   {"n_corrupted", r.n_corrupted},
                   {"pseudo_acc", rate_json(r.pseudo_acc)},
                   {"correction_precision", rate_json(r.correction_precision)},
                   {"correction_recall", rate_json(r.correction_recall)},
                   {"ood_precision", rate_json(r.ood_precision)},
                   {"ood_recall", rate_json(r.ood_recall)},
                   {"n_argmax", r.n_argmax},
                   {"n_kept", r.n_kept},
                   {"n_ood", r.n_ood},
                   {"n_passthrough", r.n_passthrough}}}};
  std::string csv = "metric,value\n";
  auto row = [&](const std::string& k, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    csv += k + "," + buf + "\n";
  };
  row("pseudo_acc", r.pseudo_acc.value);
  row("correction_precision", r.correction_precision.value);
  row("correction_recall", r.correction_recall.value);
  row("ood_precision", r.ood_precision.value);
  row("ood_recall", r.ood_recall.value);

  const fs::path test_path = o.test.empty() ? default_test_path(o.dataset) : fs::path(o.test);
  if (fs::exists(test_path)) {
    const auto test = datagen::load(test_path);
    const auto p = trainer::probe(state, test, true);
    json bins = json::array();
    for (const auto& b : p.calibration.bins) {
      bins.push_back({{"conf_mean", b.conf_mean}, {"accuracy", b.accuracy}, {"count", b.count}});
    }
    report["probes"] = {{"test_dataset", test_path.string()},
                        {"knn_acc", p.knn_acc},
                        {"linear_acc", p.linear_acc},
                        {"test_acc", p.test_acc}};
    report["calibration"] = {{"error", p.calibration.error}, {"bins", bins}};
    row("knn_acc", p.knn_acc);
    row("linear_acc", p.linear_acc);
    row("test_acc", p.test_acc);
    row("calib_err", p.calibration.error);
  }
  write_text(dir / "eval.json", report.dump(2) + "\n");
  write_text(dir / "eval.csv", csv);
  spdlog::info("pseudo_acc={:.4f} ood_precision={:.4f} ood_recall={:.4f}", r.pseudo_acc.value,
               r.ood_precision.value, r.ood_recall.value);
  return kOk;
}

int cmd_plot(const Options& o) {
  if (o.metrics.empty()) throw ConfigError("plot requires --metrics");
  const auto records = evalkit::read_metrics(o.metrics);
  fs::create_directories(o.out);
  for (const auto& p : plot::write_training_plots(records, o.out)) spdlog::info("wrote {}", p.string());
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Momentum prototypes for learning with noisy labels"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory");
  };
  auto* gen = app.add_subcommand("generate", "write a synthetic noisy dataset");
  common(gen);
  gen->add_option("--seed", o.seed, "dataset seed (overrides [data] seed)");

  auto* tr = app.add_subcommand("train", "train on a dataset");
  common(tr);
  tr->add_option("--dataset", o.dataset, "training set (.mpds)")->required();
  tr->add_option("--test", o.test, "held-out set (default: <dataset>.test.mpds)");
  tr->add_option("--seed", o.seed, "training seed (overrides [run] seed)");
  tr->add_option("--resume", o.resume, "checkpoint to resume from");
  tr->add_option("--ablate", o.ablate, "ablation (w/o_pro is accepted for wo_pro)")
      ->transform([](std::string s) {
        if (s.rfind("w/o_", 0) == 0) s = "wo_" + s.substr(4);
        return s;
      })
      ->check(CLI::IsMember({"wo_pro", "wo_ins", "wo_s", "ce_only"}));
  tr->add_option("--threads", o.threads, "1 or auto")->check(CLI::IsMember({"1", "auto"}));
  tr->add_option("--stop-after", o.stop_after, "stop once this many epochs are complete");

  auto* ev = app.add_subcommand("eval", "score a checkpoint");
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint (.mpck)")->required();
  ev->add_option("--dataset", o.dataset, "dataset with ground truth")->required();
  ev->add_option("--test", o.test, "held-out set (default: <dataset>.test.mpds)");
  ev->add_option("--out", o.out, "output directory");
  ev->add_option("--threads", o.threads, "1 or auto")->check(CLI::IsMember({"1", "auto"}));

  auto* pl = app.add_subcommand("plot", "render metrics as SVG");
  pl->add_option("--metrics", o.metrics, "metrics CSV or JSON")->required();
  pl->add_option("--out", o.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (gen->parsed()) return cmd_generate(o);
  if (tr->parsed()) return cmd_train(o);
  if (ev->parsed()) return cmd_eval(o);
  return cmd_plot(o);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kConfig;
  } catch (const ParseError& e) {
    spdlog::error("parse: {}", e.what());
    return kIo;
  } catch (const IoError& e) {
    spdlog::error("io: {}", e.what());
    return kIo;
  } catch (const StructuralError& e) {
    spdlog::error("structure: {}", e.what());
    return kStructural;
  } catch (const NumericError& e) {
    spdlog::error("numeric: {}", e.what());
    return kNumeric;
  } catch (const DegenerateInputError& e) {
    spdlog::error("degenerate input: {}", e.what());
    return kNumeric;
  } catch (const StateError& e) {
    spdlog::error("state: {}", e.what());
    return kState;
  } catch (const std::exception& e) {
    spdlog::error("internal: {}", e.what());
    return kInternal;
  }
}
