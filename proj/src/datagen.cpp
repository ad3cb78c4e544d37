#include "mopro/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binary_io.hpp"
#include "mopro/error.hpp"

namespace mopro::datagen {
namespace {

constexpr char kMagic[4] = {'M', 'P', 'D', 'S'};
constexpr std::uint16_t kVersion = 1;

void require(bool ok, const std::string& field, const std::string& range) {
  if (!ok) throw ConfigError("invalid value for '" + field + "': must be " + range);
}

Tensor draw_centroids(const DataConfig& c, numkit::Rng& rng) {
  // Expected pairwise distance of N(0, s^2 I) points is s * sqrt(2 d); aim a
  // quarter above the required minimum and reject until it holds.
  const double scale =
      1.25 * c.min_separation / std::sqrt(2.0 * static_cast<double>(c.input_dim));
  Tensor centroids = Tensor::matrix(c.num_classes, c.input_dim);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    for (auto& v : centroids.data()) v = scale * rng.normal();
    double closest = INFINITY;
    for (std::size_t a = 0; a < c.num_classes; ++a) {
      for (std::size_t b = a + 1; b < c.num_classes; ++b) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < c.input_dim; ++j) {
          const double d = centroids(a, j) - centroids(b, j);
          d2 += d * d;
        }
        closest = std::min(closest, std::sqrt(d2));
      }
    }
    if (closest >= c.min_separation) return centroids;
  }
  throw ConfigError("could not place centroids at min_separation " +
                    std::to_string(c.min_separation) + " in " + std::to_string(c.input_dim) +
                    " dimensions");
}

std::uint32_t corrupt(std::uint32_t y, const DataConfig& c, numkit::Rng& rng) {
  const auto k = static_cast<std::uint32_t>(c.num_classes);
  if (c.noise_mode == NoiseMode::Pairwise) return (y + 1) % k;
  const auto r = static_cast<std::uint32_t>(rng.below(k - 1));
  return r >= y ? r + 1 : r;
}

struct Sample {
  std::vector<double> x;
  std::uint32_t noisy, truth;
  bool ood;
};

NoisyDataset assemble(const DataConfig& c, std::vector<Sample>& samples, double noise_rate,
                      double ood_rate) {
  NoisyDataset ds;
  ds.num_classes = c.num_classes;
  ds.input_dim = c.input_dim;
  ds.noise_rate = noise_rate;
  ds.ood_rate = ood_rate;
  ds.seed = c.seed;
  ds.features = Tensor::matrix(samples.size(), c.input_dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::copy(samples[i].x.begin(), samples[i].x.end(), ds.features.row(i).begin());
    ds.noisy_label.push_back(samples[i].noisy);
    ds.true_label.push_back(samples[i].truth);
    ds.is_ood.push_back(samples[i].ood ? 1 : 0);
  }
  return ds;
}

}  // namespace

void validate(const DataConfig& c) {
  require(c.num_classes >= 2, "num_classes", ">= 2");
  require(c.input_dim >= 1, "input_dim", ">= 1");
  require(c.cluster_spread > 0.0, "cluster_spread", "> 0");
  require(c.min_separation > 0.0, "min_separation", "> 0");
  require(c.ood_spread_factor > 0.0, "ood_spread_factor", "> 0");
  require(c.noise_rate >= 0.0 && c.noise_rate <= 1.0, "noise_rate", "in [0, 1]");
  require(c.ood_rate >= 0.0 && c.ood_rate < 1.0, "ood_rate", "in [0, 1)");
}

GeneratedData generate(const DataConfig& c) {
  validate(c);
  numkit::Rng rng(c.seed);
  GeneratedData out;
  out.centroids = draw_centroids(c, rng);
  std::vector<double> grand(c.input_dim, 0.0);
  for (std::size_t k = 0; k < c.num_classes; ++k) {
    for (std::size_t j = 0; j < c.input_dim; ++j) grand[j] += out.centroids(k, j);
  }
  for (auto& g : grand) g /= static_cast<double>(c.num_classes);

  auto cluster_point = [&](std::size_t k) {
    std::vector<double> x(c.input_dim);
    for (std::size_t j = 0; j < c.input_dim; ++j) {
      x[j] = out.centroids(k, j) + c.cluster_spread * rng.normal();
    }
    return x;
  };

  std::vector<Sample> train;
  for (std::size_t k = 0; k < c.num_classes; ++k) {
    for (std::size_t i = 0; i < c.n_per_class; ++i) {
      Sample s{cluster_point(k), static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k),
               false};
      if (rng.uniform() < c.noise_rate) s.noisy = corrupt(s.truth, c, rng);
      train.push_back(std::move(s));
    }
  }
  const double in_dist = static_cast<double>(train.size());
  const auto n_ood = static_cast<std::size_t>(std::llround(c.ood_rate / (1.0 - c.ood_rate) * in_dist));
  const double ood_sigma = c.ood_spread_factor * c.cluster_spread;
  for (std::size_t i = 0; i < n_ood; ++i) {
    std::vector<double> x(c.input_dim);
    for (std::size_t j = 0; j < c.input_dim; ++j) x[j] = grand[j] + ood_sigma * rng.normal();
    const auto noisy = static_cast<std::uint32_t>(rng.below(c.num_classes));
    train.push_back({std::move(x), noisy, kOodLabel, true});
  }
  rng.shuffle(std::span<Sample>(train));
  out.train = assemble(c, train, c.noise_rate, c.ood_rate);

  std::vector<Sample> test;
  for (std::size_t k = 0; k < c.num_classes; ++k) {
    for (std::size_t i = 0; i < c.test_per_class; ++i) {
      test.push_back({cluster_point(k), static_cast<std::uint32_t>(k),
                      static_cast<std::uint32_t>(k), false});
    }
  }
  rng.shuffle(std::span<Sample>(test));
  out.test = assemble(c, test, 0.0, 0.0);
  return out;
}

void validate(const AugmentPair& p) {
  require(p.weak.sigma >= 0.0, "weak_sigma", ">= 0");
  require(p.strong.sigma > p.weak.sigma, "strong_sigma", "> weak_sigma");
  require(p.strong.dropout >= 0.0 && p.strong.dropout < 1.0, "strong_dropout", "in [0, 1)");
  require(p.strong.scale_lo > 0.0 && p.strong.scale_lo <= p.strong.scale_hi, "strong_scale",
          "0 < scale_lo <= scale_hi");
}

void augment(std::span<const double> x, std::span<double> out, const AugmentPolicy& policy,
             numkit::Rng& rng) {
  if (policy.kind == AugmentKind::Weak) {
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] + policy.sigma * rng.normal();
    return;
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double scale = rng.uniform(policy.scale_lo, policy.scale_hi);
    const double noise = policy.sigma * rng.normal();
    const bool drop = rng.uniform() < policy.dropout;
    out[j] = drop ? 0.0 : x[j] * scale + noise;
  }
}

Tensor augment(const Tensor& x, const AugmentPolicy& policy, numkit::Rng& rng) {
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) augment(x.row(r), out.row(r), policy, rng);
  return out;
}

SqrtSampler::SqrtSampler(std::span<const std::size_t> labels, std::uint64_t seed) : rng_(seed) {
  if (labels.empty()) throw StateError("sqrt_sampler: empty label set");
  const std::size_t k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> counts(k, 0);
  for (auto y : labels) ++counts[y];
  cumulative_.reserve(labels.size());
  double acc = 0.0;
  for (auto y : labels) {
    acc += 1.0 / std::sqrt(static_cast<double>(counts[y]));
    cumulative_.push_back(acc);
  }
  class_mass_.resize(k);
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) total += std::sqrt(static_cast<double>(counts[c]));
  for (std::size_t c = 0; c < k; ++c) {
    class_mass_[c] = std::sqrt(static_cast<double>(counts[c])) / total;
  }
}

std::size_t SqrtSampler::next() {
  const double u = rng_.uniform() * cumulative_.back();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                               cumulative_.size() - 1);
}

double SqrtSampler::class_probability(std::size_t k) const {
  return k < class_mass_.size() ? class_mass_[k] : 0.0;
}

std::vector<std::uint8_t> encode(const NoisyDataset& ds) {
  io::ByteWriter w;
  for (char ch : kMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u16(kVersion);
  w.u64(ds.num_classes);
  w.u64(ds.input_dim);
  w.u64(ds.size());
  w.f64(ds.noise_rate);
  w.f64(ds.ood_rate);
  w.u64(ds.seed);
  w.f64s(ds.features.data());
  for (auto v : ds.noisy_label) w.u32(v);
  for (auto v : ds.true_label) w.u32(v);
  for (auto v : ds.is_ood) w.u8(v);
  return std::move(w.bytes());
}

NoisyDataset decode(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  for (char ch : kMagic) {
    if (r.u8() != static_cast<std::uint8_t>(ch)) r.fail("bad magic, expected 'MPDS'");
  }
  const std::uint16_t version = r.u16();
  if (version != kVersion) r.fail("unsupported dataset version " + std::to_string(version));
  NoisyDataset ds;
  ds.num_classes = r.u64();
  ds.input_dim = r.u64();
  const std::uint64_t n = r.u64();
  ds.noise_rate = r.f64();
  ds.ood_rate = r.f64();
  ds.seed = r.u64();
  if (ds.input_dim != 0 && n > r.remaining() / (8 * ds.input_dim)) r.fail("truncated features");
  auto feats = r.f64s(n * ds.input_dim);
  ds.features = Tensor({n, ds.input_dim}, std::move(feats));
  if (n > r.remaining() / 9) r.fail("truncated label blocks");
  ds.noisy_label.resize(n);
  ds.true_label.resize(n);
  ds.is_ood.resize(n);
  for (auto& v : ds.noisy_label) v = r.u32();
  for (auto& v : ds.true_label) v = r.u32();
  for (auto& v : ds.is_ood) v = r.u8();
  if (r.remaining() != 0) r.fail("trailing bytes after dataset");
  for (std::uint64_t i = 0; i < n; ++i) {
    if (ds.noisy_label[i] >= ds.num_classes) r.fail("noisy label out of range");
    if (ds.is_ood[i] != (ds.true_label[i] == kOodLabel ? 1 : 0)) r.fail("inconsistent OOD flag");
  }
  return ds;
}

void save(const NoisyDataset& ds, const std::filesystem::path& path) {
  io::write_file(path.string(), encode(ds));
}

NoisyDataset load(const std::filesystem::path& path) { return decode(io::read_file(path.string())); }

}  // namespace mopro::datagen
