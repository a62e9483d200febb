#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "autothink/distill.hpp"

using namespace autothink::distill;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

// Plain-loop recomputation, independent of the library helpers.
double scalar_uld(const std::vector<double>& zt, const std::vector<double>& zs) {
  auto probs = [](const std::vector<double>& z) {
    double mx = z[0];
    for (double v : z) mx = v > mx ? v : mx;
    std::vector<double> p;
    double s = 0;
    for (double v : z) s += std::exp(v - mx);
    for (double v : z) p.push_back(std::exp(v - mx) / s);
    std::sort(p.rbegin(), p.rend());
    return p;
  };
  auto a = probs(zt), b = probs(zs);
  while (a.size() < b.size()) a.push_back(0);
  while (b.size() < a.size()) b.push_back(0);
  double l = 0;
  for (std::size_t i = 0; i < a.size(); ++i) l += std::fabs(a[i] - b[i]);
  return l;
}

std::vector<double> row(const Matrix& m, Eigen::Index r) {
  return {m.row(r).data(), m.row(r).data() + m.cols()};
}

}  // namespace

TEST(Softmax, Examples) {
  const std::vector<double> z0{0, 0};
  EXPECT_EQ(softmax_row(z0), (std::vector<double>{0.5, 0.5}));
  for (double c : {-800.0, 0.0, 3.0, 700.0}) {
    const std::vector<double> z{c, c, c};
    for (double p : softmax_row(z)) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
  }
  const std::vector<double> z2{std::log(2.0), 0};
  const auto p = softmax_row(z2);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(UldPosition, Examples) {
  const std::vector<double> u3{1. / 3, 1. / 3, 1. / 3}, u2{0.5, 0.5}, one_hot{1, 0};
  EXPECT_EQ(uld_position_loss(u3, u3), 0.0);
  EXPECT_NEAR(uld_position_loss(u3, u2), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(uld_position_loss(one_hot, u2), 1.0, 1e-15);
  EXPECT_EQ(uld_position_loss(u3, u2), uld_position_loss(u2, u3));
  const std::vector<double> a{0.7, 0.2, 0.1}, b{0.1, 0.7, 0.2};
  EXPECT_EQ(uld_position_loss(a, b), 0.0);
}

TEST(UldLoss, IdentityIsZero) {
  const LogitMatrix t(mat({{1, 2, 3}, {0, -1, 4}}));
  const auto r = uld_loss(t, t);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.grad_student.cwiseAbs().maxCoeff(), 0.0);
}

TEST(UldLoss, HandSizedMismatchedVocab) {
  const LogitMatrix t(mat({{10, 0, 0}}));
  const LogitMatrix s(mat({{0, 0}}));
  const auto r = uld_loss(t, s);
  const double e10 = std::exp(10.0), z = e10 + 2;
  const double want = std::fabs(e10 / z - 0.5) + std::fabs(1 / z - 0.5) + 1 / z;
  EXPECT_NEAR(r.loss, want, 1e-14);
  EXPECT_NEAR(r.loss, scalar_uld({10, 0, 0}, {0, 0}), 1e-14);
  EXPECT_EQ(r.per_position.size(), 1u);
}

TEST(UldLoss, PermutationInvariance) {
  const LogitMatrix t(mat({{0.3, 1.2, -0.4, 2.0}}));
  const LogitMatrix s1(mat({{0.1, 0.5, 0.9, -1.0}}));
  const LogitMatrix s2(mat({{-1.0, 0.9, 0.1, 0.5}}));
  EXPECT_NEAR(uld_loss(t, s1).loss, uld_loss(t, s2).loss, 1e-15);
}

TEST(UldLoss, ShapeMismatch) {
  const LogitMatrix t(mat({{1, 2}, {3, 4}}));
  const LogitMatrix s(mat({{1, 2}}));
  EXPECT_THROW(uld_loss(t, s), ShapeMismatch);
}

TEST(LogitMatrix, Validation) {
  EXPECT_THROW(LogitMatrix(mat({{1}})), std::invalid_argument);
  EXPECT_THROW(LogitMatrix(mat({{1, NAN}})), std::invalid_argument);
  EXPECT_THROW(LogitMatrix(mat({{1, INFINITY}})), std::invalid_argument);
}

TEST(UldLoss, BoundsAndScalarAgreement) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd(0, 2);
  std::uniform_int_distribution<int> pv(1, 4), vv(2, 12);
  for (int trial = 0; trial < 200; ++trial) {
    const int P = pv(gen), Vt = vv(gen), Vs = vv(gen);
    Matrix a(P, Vt), b(P, Vs);
    for (int i = 0; i < a.size(); ++i) a.data()[i] = nd(gen);
    for (int i = 0; i < b.size(); ++i) b.data()[i] = nd(gen);
    const auto r = uld_loss(LogitMatrix(a), LogitMatrix(b));
    double mean = 0;
    for (int p = 0; p < P; ++p) {
      const double want = scalar_uld(row(a, p), row(b, p));
      EXPECT_NEAR(r.per_position[p], want, 1e-12);
      EXPECT_GE(r.per_position[p], 0.0);
      EXPECT_LE(r.per_position[p], 2.0);
      mean += want / P;
    }
    EXPECT_NEAR(r.loss, mean, 1e-12);
  }
}

TEST(UldLoss, GradientMatchesFiniteDifferences) {
  const LogitMatrix t(mat({{0.2, -1.0, 0.7, 1.5}, {0.0, 0.3, -0.8, 0.9}}));
  const LogitMatrix s(mat({{1.1, -0.3, 0.4}, {-0.6, 0.25, 1.3}}));
  EXPECT_LT(max_gradient_check_error(t, s), 1e-4);
}

TEST(Mtp, TargetRows) {
  const LogitMatrix t(Matrix::Zero(5, 3));
  EXPECT_EQ(align_mtp_targets(t, {2, 0.3}, 1), (std::vector<Eigen::Index>{2, 3}));
  EXPECT_EQ(align_mtp_targets(t, {3, 0.3}, 3), (std::vector<Eigen::Index>{4}));
  EXPECT_EQ(align_mtp_targets(t, {1, 0.3}, 0), (std::vector<Eigen::Index>{1}));
  EXPECT_TRUE(align_mtp_targets(t, {2, 0.3}, 4).empty());
  EXPECT_THROW(align_mtp_targets(t, {1, 0.3}, 5), std::out_of_range);
}

TEST(Mtp, ZeroWeightIsMainLoss) {
  const LogitMatrix t(mat({{1, 0, 2}, {0, 1, 0}, {3, 1, 0}}));
  const LogitMatrix main(mat({{0, 0, 1}, {1, 1, 0}, {0, 2, 0}}));
  const std::vector<LogitMatrix> heads{LogitMatrix(mat({{5, 0, 0}, {0, 5, 0}, {0, 0, 5}}))};
  EXPECT_EQ(mtp_distill_loss(t, main, heads, {1, 0.0}), uld_loss(t, main).loss);
}

TEST(Mtp, PerfectHeadsAddNothing) {
  const Matrix tm = mat({{1, 0, 2}, {0, 1, 0}, {3, 1, 0}, {0.5, 0.2, 0.1}});
  const LogitMatrix t(tm);
  const LogitMatrix main(mat({{0, 0, 1}, {1, 1, 0}, {0, 2, 0}, {1, 1, 1}}));
  std::vector<LogitMatrix> heads;
  for (int j = 1; j <= 2; ++j) {
    Matrix h = Matrix::Zero(4, 3);
    h.topRows(4 - j) = tm.bottomRows(4 - j);
    heads.emplace_back(h);
  }
  EXPECT_NEAR(mtp_distill_loss(t, main, heads, {2, 0.3}), uld_loss(t, main).loss, 1e-15);
}

TEST(Mtp, HandSizedScalarRecompute) {
  const Matrix tm = mat({{2, 0}, {0, 1}, {1, 1}});
  const Matrix mm = mat({{0, 1}, {1, 1}, {3, 0}});
  const Matrix hm = mat({{0.5, 0}, {0, 2}, {9, 9}});
  const double main = (scalar_uld({2, 0}, {0, 1}) + scalar_uld({0, 1}, {1, 1}) + scalar_uld({1, 1}, {3, 0})) / 3;
  // head 1 pairs teacher rows 1,2 with head rows 0,1; head row 2 is unused
  const double head = (scalar_uld({0, 1}, {0.5, 0}) + scalar_uld({1, 1}, {0, 2})) / 2;
  const std::vector<LogitMatrix> heads{LogitMatrix(hm)};
  EXPECT_NEAR(mtp_distill_loss(LogitMatrix(tm), LogitMatrix(mm), heads, {1, 0.3}), main + 0.3 * head, 1e-14);
}

TEST(Mtp, HeadsWithoutTargetsSkipped) {
  const LogitMatrix t(mat({{1, 0}, {0, 1}}));
  const LogitMatrix main(mat({{0, 0}, {0, 0}}));
  const std::vector<LogitMatrix> heads{main, main, main};
  const double h1 = uld_loss(LogitMatrix(mat({{0, 1}})), LogitMatrix(mat({{0, 0}}))).loss;
  EXPECT_NEAR(mtp_distill_loss(t, main, heads, {3, 0.5}), uld_loss(t, main).loss + 0.5 * h1, 1e-15);
}

TEST(Mtp, ShapeChecks) {
  const LogitMatrix t(mat({{1, 0}, {0, 1}}));
  const LogitMatrix main(mat({{0, 0}, {0, 0}}));
  const LogitMatrix odd(mat({{0, 0, 0}, {0, 0, 0}}));
  EXPECT_THROW(mtp_distill_loss(t, main, std::vector<LogitMatrix>{}, {1, 0.3}), ShapeMismatch);
  EXPECT_THROW(mtp_distill_loss(t, main, std::vector<LogitMatrix>{odd}, {1, 0.3}), ShapeMismatch);
}

TEST(PairwiseSum, MatchesNaive) {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / static_cast<double>(i + 1);
  double naive = 0;
  for (double x : v) naive += x;
  EXPECT_NEAR(pairwise_sum(v), naive, 1e-12);
}
