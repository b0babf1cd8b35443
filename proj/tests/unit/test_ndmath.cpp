#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "sdsa/ndmath.hpp"

using namespace sdsa;
using nd::Mat;
using nd::Vec;

namespace {

// Kernels may fuse multiply-adds, so agreement is to rounding only.
void expect_close(const std::vector<double>& got, const std::vector<double>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12) << i;
}

}  // namespace

TEST(Affine, MatchesHandComputation) {
  Mat w(2, 3, {1, 2, 3, -1, 0, 4});
  Vec x{1, 1, 2};
  Vec b{0.5, -1};
  Vec y = nd::affine(w, x, b);
  EXPECT_DOUBLE_EQ(y[0], 9.5);
  EXPECT_DOUBLE_EQ(y[1], 6.0);
}

TEST(Affine, ShapeMismatchThrows) {
  Mat w(2, 3);
  EXPECT_THROW(nd::affine(w, Vec{1, 2}, Vec{0, 0}), ShapeError);
  EXPECT_THROW(nd::affine(w, Vec{1, 2, 3}, Vec{0}), ShapeError);
}

TEST(Affine, NonFiniteResultThrows) {
  Mat w(1, 1, {1e308});
  EXPECT_THROW(nd::affine(w, Vec{1e308}, Vec{0}), NumericError);
}

TEST(Mat, ConstructorRejectsWrongValueCount) {
  EXPECT_THROW(Mat(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Mat, Transposed) {
  Mat m(2, 3, {1, 2, 3, 4, 5, 6});
  Mat t = m.transposed();
  ASSERT_EQ(t.rows(), 3u);
  EXPECT_EQ(t(2, 1), 6);
  EXPECT_EQ(t(0, 1), 4);
}

TEST(Kernels, MatchNaiveLoops) {
  nd::RngStream rng(7);
  const std::size_t rows = 13, cols = 9, n = 5;
  std::vector<double> w(rows * cols), x(cols), g(rows), a(n * rows), b(n * cols);
  for (auto* v : {&w, &x, &g, &a, &b})
    for (double& e : *v) e = rng.normal(0, 1);

  // wt is w transposed (cols × rows); y = W x
  std::vector<double> wt(cols * rows);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) wt[j * rows + i] = w[i * cols + j];
  std::vector<double> y(rows, 0.25), ref(rows, 0.25);
  nd::gemv_transposed_acc(wt.data(), cols, rows, x.data(), y.data());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) ref[i] += wt[j * rows + i] * x[j];
  expect_close(y, ref);

  std::vector<double> yt(cols, 0.0), reft(cols, 0.0);
  nd::gemv_t_acc(w.data(), rows, cols, g.data(), yt.data());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) reft[j] += w[i * cols + j] * g[i];
  expect_close(yt, reft);

  std::vector<double> m(rows * cols, 1.0), refm(rows * cols, 1.0);
  nd::outer_acc(g.data(), rows, x.data(), cols, m.data());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) refm[i * cols + j] += g[i] * x[j];
  expect_close(m, refm);

  std::vector<double> mm(rows * cols, 0.0), refmm(rows * cols, 0.0);
  nd::gemm_tn_acc(a.data(), rows, b.data(), cols, n, rows, cols, mm.data());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      for (std::size_t t = 0; t < n; ++t) refmm[i * cols + j] += a[t * rows + i] * b[t * cols + j];
  for (std::size_t k = 0; k < mm.size(); ++k) EXPECT_NEAR(mm[k], refmm[k], 1e-12);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  Vec s{1.0, -2.0, 0.5, 3.0};
  Vec p = nd::stable_softmax(s);
  double sum = 0;
  for (double v : p) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-15);
  Vec shifted = s;
  for (double& v : shifted) v += 1000.0;
  Vec q = nd::stable_softmax(shifted);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-15);
}

TEST(Softmax, HugeScoresStayFinite) {
  Vec p = nd::stable_softmax(Vec{1000.0, 1000.0});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Softmax, EmptyThrows) { EXPECT_THROW(nd::stable_softmax(Vec{}), DomainError); }

TEST(Sigmoid, SymmetricAndSaturatesWithoutOverflow) {
  for (double x : {0.0, 0.3, 2.0, 40.0}) EXPECT_NEAR(nd::sigmoid(x) + nd::sigmoid(-x), 1.0, 1e-15);
  EXPECT_EQ(nd::sigmoid(0.0), 0.5);
  EXPECT_TRUE(std::isfinite(nd::sigmoid(-1000.0)));
}

TEST(Fnv, KnownVectors) {
  EXPECT_EQ(nd::fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(nd::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(nd::fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Rng, SameSeedSameSequence) {
  nd::RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, CopyForksSequence) {
  nd::RngStream a(3);
  a.uniform();
  nd::RngStream b = a;
  EXPECT_EQ(a.uniform(), b.uniform());
}

TEST(Rng, UniformRangesAndMoments) {
  nd::RngStream rng(11);
  double sum = 0, sumsq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double o = rng.uniform_open();
    ASSERT_GT(o, 0.0);
    ASSERT_LT(o, 1.0);
    sum += u;
    sumsq += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
  EXPECT_NEAR(sumsq / n - std::pow(sum / n, 2), 1.0 / 12.0, 0.002);
}

TEST(Rng, NormalConsumesTwoDrawsAndHasRightMoments) {
  nd::RngStream rng(5);
  rng.normal(0, 0);
  EXPECT_EQ(rng.counter(), 2u);
  double sum = 0, sumsq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal(1.0, 2.0);
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 1.0, 0.03);
  EXPECT_NEAR(std::sqrt(sumsq / n - mean * mean), 2.0, 0.03);
}

TEST(Rng, ExponentialMean) {
  nd::RngStream rng(9);
  double sum = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.exponential(3.0);
    ASSERT_GE(v, 0.0);
    sum += v;
  }
  EXPECT_NEAR(sum / n, 3.0, 0.05);
}

TEST(Rng, DerivedStreamsIgnoreBaseCounter) {
  nd::RngStream base(42);
  nd::RngStream a = nd::derive_stream(base, "x");
  base.next_u64();
  nd::RngStream b = nd::derive_stream(base, "x");
  EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(nd::derive_stream(base, "x").next_u64(), nd::derive_stream(base, "y").next_u64());
}

TEST(Rng, DistinctLabelsGiveDistinctSeeds) {
  nd::RngStream base(1);
  std::set<std::uint64_t> seeds;
  for (int i = 0; i < 1000; ++i)
    seeds.insert(nd::derive_stream(base, "sample:" + std::to_string(i)).seed());
  EXPECT_EQ(seeds.size(), 1000u);
}

TEST(RelativeError, UsesUnitFloor) {
  EXPECT_DOUBLE_EQ(nd::relative_error(1e-9, 2e-9), 1e-9);
  EXPECT_DOUBLE_EQ(nd::relative_error(100.0, 101.0), 1.0 / 101.0);
}

TEST(FiniteDiff, QuadraticIsExact) {
  auto f = [](const Vec& x) { return 3.0 * x[0] * x[0] + x[0] * x[1] - 2.0 * x[1]; };
  Vec g = nd::finite_diff_gradient(f, Vec{1.5, -0.5});
  EXPECT_NEAR(g[0], 6.0 * 1.5 - 0.5, 1e-8);
  EXPECT_NEAR(g[1], 1.5 - 2.0, 1e-8);
}

TEST(FiniteDiff, RejectsBadStepAndNonFiniteValues) {
  auto f = [](const Vec& x) { return x[0]; };
  EXPECT_THROW(nd::finite_diff_gradient(f, Vec{1.0}, 0.0), DomainError);
  auto g = [](const Vec& x) { return std::log(x[0]); };
  EXPECT_THROW(nd::finite_diff_gradient(g, Vec{0.0}), NumericError);
}

TEST(AllFinite, DetectsNanAndInf) {
  EXPECT_TRUE(nd::all_finite(Vec{1, 2}.span()));
  EXPECT_FALSE(nd::all_finite(Vec{1, NAN}.span()));
  EXPECT_FALSE(nd::all_finite(Vec{INFINITY}.span()));
}

TEST(Affine, IdentityAndSumRow) {
  Vec y = nd::affine(Mat(2, 2, {1, 0, 0, 1}), Vec{3, -1}, Vec{0, 0});
  EXPECT_EQ(y, (Vec{3, -1}));
  EXPECT_EQ(nd::affine(Mat(1, 2, {1, 1}), Vec{2, 5}, Vec{-7}), Vec{0});
}

TEST(Affine, RandomMatchesScalarLoop) {
  nd::RngStream rng(7);
  Mat w(3, 4);
  for (double& v : w.span()) v = rng.normal(0, 1);
  Vec x(4), b(3);
  for (double& v : x) v = rng.normal(0, 1);
  for (double& v : b) v = rng.normal(0, 1);
  Vec y = nd::affine(w, x, b);
  for (std::size_t i = 0; i < 3; ++i) {
    double acc = b[i];
    for (std::size_t j = 0; j < 4; ++j) acc += w(i, j) * x[j];
    EXPECT_NEAR(y[i], acc, 1e-12);
  }
}

TEST(Softmax, SingleAndPair) {
  EXPECT_EQ(nd::stable_softmax(Vec{5}), Vec{1.0});
  EXPECT_EQ(nd::stable_softmax(Vec{0, 0}), (Vec{0.5, 0.5}));
}

TEST(Sigmoid, DeepNegativeTailMatchesStableForm) {
  const double s = nd::sigmoid(-800.0);
  EXPECT_FALSE(std::isnan(s));
  EXPECT_GE(s, 0.0);
  EXPECT_LE(s, 1e-300);
  EXPECT_EQ(s, std::exp(-800.0) / (1.0 + std::exp(-800.0)));
  EXPECT_EQ(nd::tanh_act(0.0), 0.0);
}

TEST(Rng, LabelsAndSeedsSeparateStreams) {
  nd::RngStream base(42);
  auto a = nd::derive_stream(base, "region:Iowa");
  auto b = nd::derive_stream(base, "region:Iowa");
  EXPECT_EQ(a, b);
  auto x = nd::derive_stream(base, "a"), y = nd::derive_stream(base, "b");
  bool differ = false;
  for (int i = 0; i < 1000; ++i) differ |= x.next_u64() != y.next_u64();
  EXPECT_TRUE(differ);
  EXPECT_NE(nd::derive_stream(nd::RngStream(43), "a").next_u64(),
            nd::derive_stream(nd::RngStream(42), "a").next_u64());
}

TEST(FiniteDiff, AnalyticCases) {
  Vec g = nd::finite_diff_gradient([](const Vec& x) { return x[0] * x[0]; }, Vec{3});
  EXPECT_NEAR(g[0], 6.0, 1e-6);
  Vec z = nd::finite_diff_gradient([](const Vec&) { return 4.0; }, Vec{1, 2});
  EXPECT_EQ(z, (Vec{0, 0}));
  Vec s = nd::finite_diff_gradient(
      [](const Vec& x) { return x[0] * x[0] + x[1] * x[1] + x[2] * x[2]; }, Vec{1, 2, 3});
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(s[i], 2.0 * (i + 1), 1e-6);
}

TEST(Softmax, PermutationEquivariant) {
  nd::RngStream rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.next_u64() % 9;
    std::vector<double> s(n);
    for (double& v : s) v = rng.normal(0, 5);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.next_u64() % i]);
    std::vector<double> ps(n);
    for (std::size_t i = 0; i < n; ++i) ps[i] = s[perm[i]];
    const Vec p = nd::stable_softmax(std::span<const double>(s));
    const Vec q = nd::stable_softmax(std::span<const double>(ps));
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(q[i], p[perm[i]], 1e-15);
      sum += p[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Rng, TenThousandDrawsReproduce) {
  nd::RngStream base(2024);
  nd::RngStream a = nd::derive_stream(base, "region:iowa");
  nd::RngStream b = nd::derive_stream(nd::RngStream(2024), "region:iowa");
  for (int i = 0; i < 10000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64()) << i;
}

TEST(Elementwise, MatchScalarFormsOnRandomInputs) {
  nd::RngStream rng(5);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.normal(0, 10);
    EXPECT_EQ(nd::sigmoid(x), x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)));
    EXPECT_EQ(nd::tanh_act(x), std::tanh(x));
  }
}

TEST(FiniteDiff, QuadraticFormMatchesAx) {
  // f(x) = ½ xᵀAx with A symmetric positive definite, so ∇f = Ax.
  const double A[3][3] = {{4, 1, 0.5}, {1, 3, -0.2}, {0.5, -0.2, 2}};
  auto f = [&](const Vec& x) {
    double s = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s += 0.5 * x[i] * A[i][j] * x[j];
    return s;
  };
  nd::RngStream rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Vec x{rng.normal(0, 2), rng.normal(0, 2), rng.normal(0, 2)};
    const Vec g = nd::finite_diff_gradient(f, x);
    for (int i = 0; i < 3; ++i) {
      double ax = 0;
      for (int j = 0; j < 3; ++j) ax += A[i][j] * x[j];
      EXPECT_LT(nd::relative_error(g[i], ax), 1e-6);
    }
  }
}

TEST(Kernels, ArraySigmoidAndTanhMatchStd) {
  std::vector<double> xs;
  for (double x = -40.0; x <= 40.0; x += 0.0137) xs.push_back(x);
  for (double x : {0.0, -0.0, 1e-300, -1e-12, 700.0, -745.0, 1e6, -1e6}) xs.push_back(x);
  for (std::size_t len : {xs.size(), std::size_t{1}, std::size_t{3}, std::size_t{5}}) {
    std::vector<double> s(xs.begin(), xs.begin() + len), t = s;
    nd::sigmoid_inplace(s.data(), len);
    nd::tanh_inplace(t.data(), len);
    for (std::size_t i = 0; i < len; ++i) {
      const double x = xs[i];
      const double ws = 1.0 / (1.0 + std::exp(-x));
      EXPECT_NEAR(s[i], ws, 4e-16 * std::max(ws, 1e-300) + 1e-300) << x;
      EXPECT_NEAR(t[i], std::tanh(x), 1e-15) << x;
      EXPECT_EQ(std::signbit(t[i]), std::signbit(x)) << x;
    }
  }
}

TEST(Kernels, ArrayFormIndependentOfPosition) {
  std::vector<double> a = {0.3, -1.7, 2.2, 0.9, -0.4, 5.1, -3.3};
  auto whole = a;
  nd::tanh_inplace(whole.data(), whole.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    double one = a[i];
    nd::tanh_inplace(&one, 1);
    EXPECT_EQ(one, whole[i]) << i;
  }
}
