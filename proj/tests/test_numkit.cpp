#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mopro/error.hpp"
#include "mopro/numkit/autograd.hpp"
#include "mopro/numkit/gradcheck.hpp"
#include "mopro/numkit/ops.hpp"
#include "mopro/numkit/parallel.hpp"
#include "mopro/numkit/rng.hpp"

using namespace mopro::numkit;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t({r, c});
  for (double& v : t.data()) v = rng.normal();
  return t;
}

// Textbook triple loop, summed in index order.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

Tensor transpose(const Tensor& a) {
  Tensor t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tensor eye = Tensor::from_rows({{1, 0}, {0, 1}});
  Tensor m = Tensor::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(eye, m), m);
}

TEST(Matmul, RowTimesColumn) {
  Tensor out = matmul(Tensor::from_rows({{1, 2}}), Tensor::from_rows({{3}, {4}}));
  ASSERT_EQ(out.shape(), (Shape{1, 1}));
  EXPECT_EQ(out[0], 11.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const mopro::DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("2x3"), std::string::npos) << e.what();
  }
}

TEST(Matmul, TransposedVariantsAgreeWithNaiveProduct) {
  Rng rng(3);
  for (std::size_t trial = 0; trial < 10; ++trial) {
    const std::size_t m = 1 + rng.below(9), k = 1 + rng.below(11), n = 1 + rng.below(7);
    Tensor a = random_matrix(m, k, rng), b = random_matrix(k, n, rng);
    Tensor ref = naive_matmul(a, b);
    Tensor got = matmul(a, b);
    Tensor nt = matmul_nt(a, transpose(b));
    Tensor tn = matmul_tn(transpose(a), b);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_NEAR(got[i], ref[i], 1e-12);
      EXPECT_NEAR(nt[i], ref[i], 1e-12);
      EXPECT_NEAR(tn[i], ref[i], 1e-12);
    }
  }
}

TEST(Matmul, GradientOfSumIsRowBroadcastOfRowSums) {
  Rng rng(11);
  Tensor a = random_matrix(3, 4, rng);
  Tensor b = random_matrix(4, 2, rng);
  Tape tape;
  Var va = tape.input(a);
  Var vb = tape.constant(b);
  tape.backward(sum(tape, matmul(tape, va, vb)));
  const Tensor& g = tape.grad(va);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(g(i, k), b(k, 0) + b(k, 1), 1e-14);

  auto f = [&](Tape& t, Var x) { return sum(t, matmul(t, x, t.constant(b))); };
  EXPECT_TRUE(check_gradient(f, a).passed(1e-6));
}

TEST(L2Normalize, ThreeFourFive) {
  Tensor out = l2_normalize_rows(Tensor::from_rows({{3, 4}}));
  EXPECT_DOUBLE_EQ(out[0], 0.6);
  EXPECT_DOUBLE_EQ(out[1], 0.8);
}

TEST(L2Normalize, UnitVectorIsFixed) {
  Tensor u = Tensor::from_rows({{0, 1, 0}});
  EXPECT_EQ(l2_normalize_rows(u), u);
}

TEST(L2Normalize, ZeroRowIsDegenerate) {
  EXPECT_THROW(l2_normalize_rows(Tensor::from_rows({{1, 1}, {0, 0}})), mopro::DegenerateInputError);
}

TEST(L2Normalize, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_matrix(3, 5, rng);
    Tensor w = random_matrix(3, 5, rng);
    auto f = [&](Tape& t, Var v) {
      // Weighted sum so the gradient is not trivially zero.
      Var y = l2_normalize(t, v);
      return sum(t, matmul(t, y, t.constant(transpose(w))));
    };
    auto r = check_gradient(f, x);
    EXPECT_TRUE(r.passed(1e-6)) << r.max_rel_error;
  }
}

TEST(L2Normalize, SumOfNormalizedRows) {
  Rng rng(8);
  Tensor x = random_matrix(4, 3, rng);
  auto f = [](Tape& t, Var v) { return sum(t, l2_normalize(t, v)); };
  EXPECT_LE(check_gradient(f, x).max_rel_error, 1e-6);
}

TEST(Softmax, ZerosAreUniform) {
  Tensor p = softmax_rows(Tensor::from_rows({{0, 0}}));
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Softmax, HandComputedPair) {
  Tensor p = softmax_rows(Tensor::from_rows({{1, 0}}));
  const double e = std::exp(1.0);
  EXPECT_NEAR(p[0], e / (e + 1), 1e-15);
  EXPECT_NEAR(p[1], 1 / (e + 1), 1e-15);
  EXPECT_NEAR(p[0], 0.73106, 1e-5);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  Tensor p = softmax_rows(Tensor::from_rows({{1000, 0}}));
  EXPECT_EQ(p[0], 1.0);
  EXPECT_GE(p[1], 0.0);
  EXPECT_LT(p[1], 1e-300);
}

TEST(Softmax, RowsSumToOneAndStayInsideUnitInterval) {
  Rng rng(2);
  Tensor x = random_matrix(50, 7, rng);
  for (double& v : x.data()) v *= 5.0;
  Tensor p = softmax_rows(x);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (double v : p.row(r)) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Softmax, NanInputIsNumericError) {
  EXPECT_THROW(softmax_rows(Tensor::from_rows({{0, std::nan("")}})), mopro::NumericError);
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_matrix(2, 4, rng);
    Tensor w = random_matrix(4, 1, rng);
    auto f = [&](Tape& t, Var v) { return sum(t, matmul(t, softmax_rows(t, v), t.constant(w))); };
    auto r = check_gradient(f, x);
    EXPECT_TRUE(r.passed(1e-6)) << r.max_rel_error;
  }
}

TEST(GradCheck, QuadraticIsExactUnderCentralDifferences) {
  Tensor x = Tensor::from_rows({{3.0}});
  auto f = [](Tape& t, Var v) {
    return t.push(Tensor({1, 1}, t.value(v)[0] * t.value(v)[0]), {v},
                  [v](Tape& tt, const Tensor&, const Tensor& g) {
                    const double d = 2.0 * tt.value(v)[0] * g[0];
                    tt.accumulate_grad(v, std::span<const double>(&d, 1));
                  });
  };
  Tape tape;
  Var v = tape.input(x);
  tape.backward(f(tape, v));
  EXPECT_DOUBLE_EQ(tape.grad(v)[0], 6.0);
  EXPECT_LT(check_gradient(f, x).max_rel_error, 1e-9);
}

TEST(GradCheck, DetectsAWrongBackward) {
  Tensor x = Tensor::from_rows({{1.0, 2.0}});
  auto f = [](Tape& t, Var v) {
    double s = 0.0;
    for (double e : t.value(v).data()) s += e * e;
    return t.push(Tensor({1, 1}, s), {v}, [v](Tape& tt, const Tensor&, const Tensor&) {
      std::vector<double> g(2, 1.0);
      tt.accumulate_grad(v, g);
    });
  };
  EXPECT_FALSE(check_gradient(f, x).passed(1e-4));
}

TEST(GradCheck, MlpParameters) {
  Rng rng(21);
  Tensor w1 = random_matrix(4, 6, rng), b1 = random_matrix(1, 6, rng);
  Tensor w2 = random_matrix(6, 3, rng);
  Tensor x = random_matrix(5, 4, rng);
  Tensor* params[] = {&w1, &b1, &w2};
  auto f = [&](Tape& t) {
    Var h = relu(t, add_bias(t, matmul(t, t.constant(x), t.parameter(w1)), t.parameter(b1)));
    Var p = softmax_rows(t, matmul(t, h, t.parameter(w2)));
    return sum(t, l2_normalize(t, p));
  };
  EXPECT_TRUE(check_gradient(f, params).passed(1e-6));
}

TEST(Tape, BackwardRequiresScalarRoot) {
  Tape tape;
  Var v = tape.input(Tensor({2, 2}, 1.0));
  EXPECT_THROW(tape.backward(v), mopro::ContractViolation);
}

TEST(Tape, ParameterGradientAccumulatesIntoTensor) {
  Tensor w = Tensor::from_rows({{2.0, -1.0}});
  Tape tape;
  tape.backward(sum(tape, tape.parameter(w)));
  EXPECT_EQ(w.grad()[0], 1.0);
  EXPECT_EQ(w.grad()[1], 1.0);
}

TEST(Rng, EqualSeedsGiveEqualStreams) {
  Rng a(1234), b(1234);
  bool same = true;
  for (int i = 0; i < 1000000; ++i) same = same && a.next_u64() == b.next_u64();
  EXPECT_TRUE(same);
}

TEST(Rng, SerializeRoundTripContinuesStream) {
  Rng a(9);
  for (int i = 0; i < 17; ++i) a.normal();
  Rng b = Rng::deserialize(a.serialize());
  EXPECT_EQ(a, b);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.uniform(), b.uniform());
}

TEST(Rng, BelowIsInRangeAndRoughlyUniform) {
  Rng rng(4);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) hist[rng.below(7)]++;
  for (int h : hist) EXPECT_NEAR(h, 10000, 500);
}

TEST(Rng, NormalMoments) {
  Rng rng(6);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Parallel, RowSplitDoesNotChangeResults) {
  Rng rng(31);
  Tensor a = random_matrix(257, 33, rng), b = random_matrix(33, 19, rng);
  set_threads(1);
  Tensor one = matmul(a, b);
  Tensor nt1 = matmul_nt(a, a);
  set_threads(4);
  Tensor four = matmul(a, b);
  Tensor nt4 = matmul_nt(a, a);
  set_threads(1);
  EXPECT_EQ(one, four);
  EXPECT_EQ(nt1, nt4);
}

TEST(Ops, GatherRows) {
  Tensor x = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
  std::vector<std::size_t> idx = {2, 0, 2};
  EXPECT_EQ(gather_rows(x, idx), Tensor::from_rows({{5, 6}, {1, 2}, {5, 6}}));
}
