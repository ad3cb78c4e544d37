#include <cmath>

#include "binary_io.hpp"
#include "mopro/error.hpp"
#include "mopro/trainer.hpp"

namespace mopro::trainer {
namespace {

constexpr char kMagic[4] = {'M', 'P', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

void put_params(io::ByteWriter& w, const std::vector<model::NamedParam>& params) {
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.str(p.name);
    w.u64(p.tensor->rows());
    w.u64(p.tensor->cols());
    w.f64s(p.tensor->data());
  }
}

void get_params(io::ByteReader& r, const std::vector<model::NamedParam>& params) {
  const std::uint32_t count = r.u32();
  if (count != params.size()) {
    throw StructuralError("checkpoint holds " + std::to_string(count) + " parameter blocks, model expects " +
                          std::to_string(params.size()));
  }
  for (const auto& p : params) {
    const std::string name = r.str();
    if (name != p.name) throw StructuralError("checkpoint block '" + name + "' where '" + p.name + "' expected");
    const std::uint64_t rows = r.u64(), cols = r.u64();
    if (rows != p.tensor->rows() || cols != p.tensor->cols()) {
      throw StructuralError("parameter '" + name + "' is " + std::to_string(rows) + "x" +
                            std::to_string(cols) + " in the checkpoint, model expects " +
                            numkit::shape_string(p.tensor->shape()));
    }
    const auto data = r.f64s(rows * cols);
    std::copy(data.begin(), data.end(), p.tensor->data().begin());
  }
}

void put_metrics(io::ByteWriter& w, const evalkit::EpochMetrics& m) {
  w.u64(m.epoch);
  for (double v : {m.l_ce, m.l_pro, m.l_ins, m.total, m.pseudo_acc, m.ood_recall, m.ood_precision,
                   m.knn_acc, m.calib_err, m.corr_recall, m.lr}) {
    w.f64(v);
  }
  w.u64(m.n_argmax);
  w.u64(m.n_kept);
  w.u64(m.n_ood);
  w.str(m.phase);
}

evalkit::EpochMetrics get_metrics(io::ByteReader& r) {
  evalkit::EpochMetrics m;
  m.epoch = r.u64();
  for (double* v : {&m.l_ce, &m.l_pro, &m.l_ins, &m.total, &m.pseudo_acc, &m.ood_recall,
                    &m.ood_precision, &m.knn_acc, &m.calib_err, &m.corr_recall, &m.lr}) {
    *v = r.f64();
  }
  m.n_argmax = r.u64();
  m.n_kept = r.u64();
  m.n_ood = r.u64();
  m.phase = r.str();
  return m;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const TrainState& state) {
  auto& s = const_cast<TrainState&>(state);
  io::ByteWriter w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(kVersion);
  w.str(render_config(s.config));
  put_params(w, model::parameters(s.net));
  w.u32(static_cast<std::uint32_t>(s.velocity.size()));
  for (const auto& v : s.velocity) {
    w.u64(v.size());
    w.f64s(v.data());
  }
  put_params(w, model::parameters(s.twin));

  w.u64(s.bank.num_classes());
  w.u64(s.bank.dim());
  for (std::size_t k = 0; k < s.bank.num_classes(); ++k) w.u8(s.bank.initialized(k) ? 1 : 0);
  w.f64s(s.bank.prototypes().data());

  w.u64(s.queue.capacity());
  w.u64(s.queue.dim());
  w.u64(s.queue.size());
  w.u64(s.queue.cursor());
  w.f64s(s.queue.storage().data());

  w.str(s.rng.serialize());
  w.u64(s.epoch);
  w.u64(s.step);
  w.u8(s.warmup_done ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(s.history.size()));
  for (const auto& m : s.history) put_metrics(w, m);
  return std::move(w.bytes());
}

TrainState decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  for (char c : kMagic) {
    if (r.u8() != static_cast<std::uint8_t>(c)) r.fail("bad magic, expected 'MPCK'");
  }
  const std::uint16_t version = r.u16();
  if (version != kVersion) {
    throw StructuralError("unsupported checkpoint version " + std::to_string(version) +
                          " (this build reads " + std::to_string(kVersion) + ")");
  }
  TrainState s;
  s.config = parse_config(r.str());
  validate(s.config);
  numkit::Rng scratch(0);
  s.net = model::init_network(s.config.model, scratch);
  s.twin = model::make_twin(s.net);
  get_params(r, model::parameters(s.net));
  const std::uint32_t nv = r.u32();
  const auto params = model::parameters(s.net);
  if (nv != params.size()) throw StructuralError("velocity block count does not match the model");
  for (const auto& p : params) {
    const std::uint64_t len = r.u64();
    if (len != p.tensor->size()) throw StructuralError("velocity for '" + p.name + "' has the wrong length");
    s.velocity.emplace_back(p.tensor->shape(), r.f64s(len));
  }
  get_params(r, model::parameters(s.twin));

  const std::uint64_t k = r.u64(), dim = r.u64();
  if (k != s.config.data.num_classes || dim != s.config.model.proj_dim) {
    throw StructuralError("prototype block is " + std::to_string(k) + "x" + std::to_string(dim) +
                          ", config expects " + std::to_string(s.config.data.num_classes) + "x" +
                          std::to_string(s.config.model.proj_dim));
  }
  std::vector<std::uint8_t> init(k);
  for (auto& f : init) f = r.u8();
  const auto protos = r.f64s(k * dim);
  s.bank = memory::PrototypeBank(k, dim, s.config.mopro.proto_momentum,
                                 s.config.mopro.renormalize_prototypes);
  for (std::size_t c = 0; c < k; ++c) {
    if (init[c]) s.bank.set_prototype(c, std::span<const double>(protos).subspan(c * dim, dim));
  }

  const std::uint64_t cap = r.u64(), qdim = r.u64(), qsize = r.u64(), cursor = r.u64();
  if (cap != s.config.mopro.queue_size || qdim != s.config.model.proj_dim || qsize > cap ||
      cursor >= std::max<std::uint64_t>(cap, 1)) {
    throw StructuralError("queue block does not match the config");
  }
  s.queue = memory::EmbeddingQueue::restore(cap, qdim, qsize, cursor, r.f64s(cap * qdim));

  s.rng = numkit::Rng::deserialize(r.str());
  s.epoch = r.u64();
  s.step = r.u64();
  s.warmup_done = r.u8() != 0;
  const std::uint32_t nh = r.u32();
  for (std::uint32_t i = 0; i < nh; ++i) s.history.push_back(get_metrics(r));
  if (r.remaining() != 0) r.fail("trailing bytes after checkpoint");
  return s;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  io::write_file(path.string(), encode_checkpoint(state));
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path.string()));
}

}  // namespace mopro::trainer
