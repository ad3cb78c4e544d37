#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <numeric>

#include "mopro/error.hpp"
#include "mopro/memory.hpp"
#include "mopro/numkit/ops.hpp"
#include "mopro/numkit/rng.hpp"

using namespace mopro;
using namespace mopro::memory;
using numkit::Rng;

namespace {

Tensor unit_rows(std::size_t b, std::size_t d, Rng& rng) {
  Tensor t({b, d});
  for (double& v : t.data()) v = rng.normal();
  return numkit::l2_normalize_rows(t);
}

Tensor one_hot_row(std::size_t d, std::size_t k) {
  Tensor t({1, d});
  t[k] = 1.0;
  return t;
}

}  // namespace

TEST(Queue, FifoEvictsOldest) {
  EmbeddingQueue q(4, 5);
  for (std::size_t i = 0; i < 5; ++i) q.enqueue(one_hot_row(5, i));
  EXPECT_EQ(q.size(), 4u);
  Tensor c = q.contents();
  for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(c(r, r + 1), 1.0);
  for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(c(r, 0), 0.0);
}

TEST(Queue, FullBatchIntoEmptyQueue) {
  Rng rng(1);
  EmbeddingQueue q(4, 3);
  Tensor z = unit_rows(4, 3, rng);
  q.enqueue(z);
  EXPECT_TRUE(q.full());
  EXPECT_EQ(q.contents(), z);
}

TEST(Queue, InterleavedBatchesKeepArrivalOrder) {
  Rng rng(2);
  EmbeddingQueue q(4, 3);
  Tensor a = unit_rows(3, 3, rng), b = unit_rows(3, 3, rng);
  q.enqueue(a);
  q.enqueue(b);
  Tensor c = q.contents();
  const double* expect[4] = {a.row(2).data(), b.row(0).data(), b.row(1).data(), b.row(2).data()};
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(c(r, j), expect[r][j]);
}

TEST(Queue, BatchLargerThanCapacityKeepsTail) {
  Rng rng(3);
  EmbeddingQueue q(3, 2);
  Tensor z = unit_rows(7, 2, rng);
  q.enqueue(z);
  Tensor c = q.contents();
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(c(r, j), z(r + 4, j));
}

TEST(Queue, RandomPushesMatchNaiveList) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t cap = 1 + rng.below(9), dim = 1 + rng.below(4);
    EmbeddingQueue q(cap, dim);
    std::deque<std::vector<double>> oracle;
    const std::size_t pushes = rng.below(12);
    for (std::size_t p = 0; p < pushes; ++p) {
      Tensor z = unit_rows(1 + rng.below(2 * cap), dim, rng);
      q.enqueue(z);
      for (std::size_t r = 0; r < z.rows(); ++r) {
        oracle.emplace_back(z.row(r).begin(), z.row(r).end());
        if (oracle.size() > cap) oracle.pop_front();
      }
      ASSERT_LE(q.size(), cap);
    }
    Tensor c = q.contents();
    ASSERT_EQ(q.size(), oracle.size());
    for (std::size_t r = 0; r < oracle.size(); ++r)
      for (std::size_t j = 0; j < dim; ++j) ASSERT_EQ(c(r, j), oracle[r][j]);
  }
}

TEST(Queue, RejectsNonUnitRowsWithoutWriting) {
  EmbeddingQueue q(4, 2);
  Tensor z = Tensor::from_rows({{1, 0}, {1, 1}});
  EXPECT_THROW(q.enqueue(z), ContractViolation);
  EXPECT_EQ(q.size(), 0u);
}

TEST(Queue, WidthMismatch) {
  EmbeddingQueue q(4, 2);
  EXPECT_THROW(q.enqueue(Tensor::from_rows({{1, 0, 0}})), DimensionError);
}

TEST(Queue, RestoreRoundTrip) {
  Rng rng(5);
  EmbeddingQueue q(5, 3);
  q.enqueue(unit_rows(7, 3, rng));
  EmbeddingQueue r =
      EmbeddingQueue::restore(q.capacity(), q.dim(), q.size(), q.cursor(), q.storage().storage());
  EXPECT_EQ(q, r);
  EXPECT_THROW(EmbeddingQueue::restore(5, 3, 6, 0, q.storage().storage()), StructuralError);
}

TEST(Prototypes, HandComputedUpdate) {
  PrototypeBank raw(1, 2, 0.999, false);
  raw.set_prototype(0, std::vector<double>{1.0, 0.0});
  std::vector<double> z = {0.0, 1.0};
  raw.update(0, z);
  EXPECT_NEAR(raw.prototype(0)[0], 0.999, 1e-15);
  EXPECT_NEAR(raw.prototype(0)[1], 0.001, 1e-15);

  PrototypeBank bank(1, 2, 0.999);
  bank.set_prototype(0, std::vector<double>{1.0, 0.0});
  bank.update(0, z);
  EXPECT_NEAR(bank.prototype(0)[0], 0.9999995, 1e-7);
  EXPECT_NEAR(bank.prototype(0)[1], 0.0010010, 1e-7);
  EXPECT_NEAR(numkit::norm(bank.prototype(0)), 1.0, 1e-15);
}

TEST(Prototypes, FixedPoint) {
  Rng rng(6);
  Tensor c = unit_rows(1, 4, rng);
  PrototypeBank bank(1, 4, 0.9);
  bank.set_prototype(0, c.row(0));
  bank.update(0, c.row(0));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(bank.prototype(0)[j], c[j], 1e-15);
}

TEST(Prototypes, BareEmaConvergesToRepeatedTarget) {
  PrototypeBank bank(1, 3, 0.999, false);
  bank.set_prototype(0, std::vector<double>{1.0, 0.0, 0.0});
  std::vector<double> z = {0.0, 0.6, 0.8};
  for (int t = 0; t < 5000; ++t) bank.update(0, z);
  const auto c = bank.prototype(0);
  const double cosang = numkit::dot(c, z) / numkit::norm(c);
  EXPECT_LT(std::acos(std::min(1.0, cosang)), 1e-2);
}

TEST(Prototypes, RenormalizedAngleFollowsRecurrence) {
  // tan(theta') = m sin(theta) / (m cos(theta) + 1 - m)
  PrototypeBank bank(1, 3, 0.999);
  bank.set_prototype(0, std::vector<double>{1.0, 0.0, 0.0});
  std::vector<double> z = {0.0, 0.6, 0.8};
  double theta = std::acos(0.0);
  for (int t = 0; t < 5000; ++t) {
    bank.update(0, z);
    theta = std::atan2(0.999 * std::sin(theta), 0.999 * std::cos(theta) + 0.001);
  }
  const double got = std::acos(std::min(1.0, numkit::dot(bank.prototype(0), z)));
  EXPECT_NEAR(got, theta, 1e-6);
  EXPECT_LT(got, 2e-2);
}

TEST(Prototypes, BareEmaClosedForm) {
  Rng rng(8);
  Tensor c0 = unit_rows(1, 5, rng), z = unit_rows(1, 5, rng);
  const double m = 0.95;
  PrototypeBank bank(1, 5, m, false);
  bank.set_prototype(0, c0.row(0));
  for (int t = 0; t < 100; ++t) bank.update(0, z.row(0));
  const double mt = std::pow(m, 100);
  for (std::size_t j = 0; j < 5; ++j)
    EXPECT_NEAR(bank.prototype(0)[j], mt * c0[j] + (1 - mt) * z[j], 1e-12);
}

TEST(Prototypes, ZeroMomentumReplaces) {
  Rng rng(9);
  Tensor c = unit_rows(1, 3, rng), z = unit_rows(1, 3, rng);
  PrototypeBank bank(1, 3, 0.0);
  bank.set_prototype(0, c.row(0));
  bank.update(0, z.row(0));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(bank.prototype(0)[j], z[j]);
}

TEST(Prototypes, StayUnitNormUnderRandomUpdates) {
  Rng rng(10);
  PrototypeBank bank(3, 4, 0.7);
  Tensor z0 = unit_rows(3, 4, rng);
  std::vector<std::size_t> labels = {0, 1, 2};
  bank.init(z0, labels);
  for (int t = 0; t < 500; ++t) bank.update(rng.below(3), unit_rows(1, 4, rng).row(0));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(numkit::norm(bank.prototype(k)), 1.0, 1e-12);
}

TEST(Prototypes, InitOneSamplePerClass) {
  Rng rng(11);
  Tensor z = unit_rows(3, 4, rng);
  std::vector<std::size_t> labels = {2, 0, 1};
  PrototypeBank bank(3, 4, 0.999);
  bank.init(z, labels);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_NEAR(bank.prototype(2)[j], z(0, j), 1e-15);
    EXPECT_NEAR(bank.prototype(0)[j], z(1, j), 1e-15);
  }
  EXPECT_TRUE(bank.all_initialized());
}

TEST(Prototypes, InitAntipodalPairIsDegenerate) {
  Tensor z = Tensor::from_rows({{1, 0}, {-1, 0}, {0, 1}});
  std::vector<std::size_t> labels = {0, 0, 1};
  PrototypeBank bank(2, 2, 0.999);
  try {
    bank.init(z, labels);
    FAIL();
  } catch (const DegenerateInputError& e) {
    EXPECT_NE(std::string(e.what()).find("class 0"), std::string::npos) << e.what();
  }
}

TEST(Prototypes, InitEmptyClassIsDegenerate) {
  Tensor z = Tensor::from_rows({{1, 0}});
  std::vector<std::size_t> labels = {0};
  PrototypeBank bank(2, 2, 0.999);
  EXPECT_THROW(bank.init(z, labels), DegenerateInputError);
}

TEST(Prototypes, InitMatchesBruteForceMeans) {
  Rng rng(12);
  const std::size_t K = 4, d = 6, n = 100;
  Tensor z = unit_rows(n, d, rng);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % K;
  PrototypeBank bank(K, d, 0.9);
  bank.init(z, labels);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] == k)
        for (std::size_t j = 0; j < d; ++j) mean[j] += z(i, j);
    double nrm = 0.0;
    for (double v : mean) nrm += v * v;
    nrm = std::sqrt(nrm);
    for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(bank.prototype(k)[j], mean[j] / nrm, 1e-12);
  }
}

TEST(Prototypes, UpdateBeforeInitIsStateError) {
  PrototypeBank bank(2, 2, 0.9);
  std::vector<double> z = {1.0, 0.0};
  EXPECT_THROW(bank.update(0, z), StateError);
  EXPECT_THROW(bank.scores(std::span<const double>(z), 0.1), StateError);
}

TEST(Scores, SingleClass) {
  PrototypeBank bank(1, 2, 0.9);
  bank.set_prototype(0, std::vector<double>{0.0, 1.0});
  std::vector<double> z = {1.0, 0.0};
  auto s = bank.scores(std::span<const double>(z), 0.1);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0], 1.0);
}

TEST(Scores, HandSoftmax) {
  PrototypeBank bank(2, 2, 0.9);
  bank.set_prototype(0, std::vector<double>{1.0, 0.0});
  bank.set_prototype(1, std::vector<double>{0.0, 1.0});
  std::vector<double> z = {1.0, 0.0};
  auto s = bank.scores(std::span<const double>(z), 1.0);
  const double e = std::exp(1.0);
  EXPECT_NEAR(s[0], e / (e + 1), 1e-15);
  EXPECT_NEAR(s[1], 1 / (e + 1), 1e-15);
}

TEST(Scores, EquidistantIsUniform) {
  PrototypeBank bank(3, 3, 0.9);
  for (std::size_t k = 0; k < 3; ++k) bank.set_prototype(k, one_hot_row(3, k).row(0));
  const double c = 1.0 / std::sqrt(3.0);
  std::vector<double> z = {c, c, c};
  for (double v : bank.scores(std::span<const double>(z), 0.1)) EXPECT_NEAR(v, 1.0 / 3, 1e-15);
}

TEST(Scores, PermutationEquivariant) {
  Rng rng(13);
  Tensor c = unit_rows(4, 5, rng), z = unit_rows(1, 5, rng);
  PrototypeBank a(4, 5, 0.9), b(4, 5, 0.9);
  const std::size_t perm[4] = {2, 0, 3, 1};
  for (std::size_t k = 0; k < 4; ++k) {
    a.set_prototype(k, c.row(k));
    b.set_prototype(k, c.row(perm[k]));
  }
  auto sa = a.scores(z.row(0), 0.2);
  auto sb = b.scores(z.row(0), 0.2);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(sb[k], sa[perm[k]], 1e-15);
}

TEST(Scores, BatchFormMatchesRows) {
  Rng rng(14);
  Tensor c = unit_rows(3, 4, rng), z = unit_rows(5, 4, rng);
  PrototypeBank bank(3, 4, 0.9);
  std::vector<std::size_t> labels = {0, 1, 2};
  bank.init(c, labels);
  Tensor s = bank.scores(z, 0.1);
  for (std::size_t r = 0; r < 5; ++r) {
    auto row = bank.scores(z.row(r), 0.1);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(s(r, k), row[k], 1e-15);
  }
}

TEST(Scores, NonPositiveTemperature) {
  PrototypeBank bank(1, 2, 0.9);
  bank.set_prototype(0, std::vector<double>{1.0, 0.0});
  std::vector<double> z = {1.0, 0.0};
  EXPECT_THROW(bank.scores(std::span<const double>(z), 0.0), ConfigError);
}
