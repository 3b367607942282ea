#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "helen/error.hpp"
#include "helen/metrics.hpp"
#include "oracles.hpp"

using namespace helen;

namespace {

// AUC x100 of the 21 (model, dataset) cells, Adam then Helen, in matching order
const std::vector<double> kAdamAuc{79.271, 79.122, 79.413, 79.279, 79.245, 78.924, 77.108,
                                   81.364, 81.375, 81.332, 81.366, 81.401, 81.277, 81.411,
                                   63.520, 63.570, 63.660, 63.166, 63.052, 63.209, 63.059};
const std::vector<double> kHelenAuc{79.279, 79.147, 79.409, 79.303, 79.250, 79.400, 79.100,
                                    81.434, 81.421, 81.402, 81.471, 81.422, 81.382, 81.468,
                                    63.620, 63.691, 63.711, 63.752, 63.753, 63.802, 63.848};

}  // namespace

TEST_CASE("logloss of a coin flip") {
  CHECK(logloss(std::vector<double>{1.0}, std::vector<double>{0.5}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("confident correct predictions hit the clipping floor") {
  const std::vector<double> y{1, 0, 1, 0};
  const std::vector<double> p{1.0, 0.0, 1.0, 0.0};
  const double l = logloss(y, p);
  CHECK(l > 0.0);
  CHECK(l < 2e-6);
  CHECK(l == doctest::Approx(-std::log(1.0 - 1e-7)).epsilon(1e-9));
  // confidently wrong predictions are bounded by the clip too
  CHECK(logloss(std::vector<double>{1.0}, std::vector<double>{0.0}) == doctest::Approx(-std::log(1e-7)));
}

TEST_CASE("logloss matches a scalar loop") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> y(100), p(100);
    for (std::size_t i = 0; i < 100; ++i) {
      y[i] = u(rng) < 0.3 ? 1.0 : 0.0;
      p[i] = u(rng);
    }
    CHECK(logloss(y, p) == doctest::Approx(oracle::scalar_logloss(y, p)).epsilon(1e-13));
  }
}

TEST_CASE("logloss input errors") {
  CHECK_THROWS_AS(logloss(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}), ValueError);
  CHECK_THROWS_AS(logloss(std::vector<double>{}, std::vector<double>{}), ValueError);
}

TEST_CASE("AUC of two ordered samples") {
  CHECK(auc(std::vector<double>{0, 1}, std::vector<double>{0.2, 0.8}) == 1.0);
  CHECK(auc(std::vector<double>{1, 0}, std::vector<double>{0.2, 0.8}) == 0.0);
}

TEST_CASE("all-tied scores give AUC 1/2") {
  CHECK(auc(std::vector<double>{0, 1, 1, 0, 1}, std::vector<double>(5, 0.3)) == 0.5);
}

TEST_CASE("AUC equals the pairwise count") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> level(0, 6);  // coarse scores force ties
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> y(30), s(30);
    for (std::size_t i = 0; i < 30; ++i) {
      y[i] = coin(rng);
      s[i] = level(rng) * 0.1;
    }
    y[0] = 0;
    y[1] = 1;
    CHECK(std::abs(auc(y, s) - oracle::pairwise_auc(y, s)) < 1e-12);
  }
}

TEST_CASE("AUC is invariant under strictly monotone transforms") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<double> y(200), s(200), cubed(200), shifted(200);
  for (std::size_t i = 0; i < 200; ++i) {
    y[i] = i % 3 == 0 ? 1.0 : 0.0;
    s[i] = nd(rng) + 0.5 * y[i];
    cubed[i] = s[i] * s[i] * s[i];
    shifted[i] = std::exp(2.0 * s[i]) + 7.0;
  }
  CHECK(auc(y, s) == auc(y, cubed));
  CHECK(auc(y, s) == auc(y, shifted));
}

TEST_CASE("AUC needs both classes") {
  CHECK_THROWS_AS(auc(std::vector<double>{1, 1}, std::vector<double>{0.1, 0.2}), ValueError);
  CHECK_THROWS_AS(auc(std::vector<double>{0, 1}, std::vector<double>{0.1}), ValueError);
}

TEST_CASE("t-test of identical samples") {
  const std::vector<double> a{1.0, 2.5, 3.0};
  const auto r = paired_t_test(a, a);
  CHECK(r.t == 0.0);
  CHECK(r.p == 1.0);
}

TEST_CASE("constant non-zero differences have no variance") {
  const std::vector<double> a{2, 3, 4, 5};
  const std::vector<double> b{1, 2, 3, 4};
  CHECK_THROWS_AS(paired_t_test(a, b), ValueError);
  CHECK_THROWS_AS(paired_t_test(std::vector<double>{1.0}, std::vector<double>{0.0}), ValueError);
  CHECK_THROWS_AS(paired_t_test(a, std::vector<double>{1, 2}), ValueError);
}

TEST_CASE("t-test matches the textbook statistic") {
  const std::vector<double> a{5.1, 4.9, 6.2, 5.8, 6.0, 5.5};
  const std::vector<double> b{4.8, 5.0, 5.6, 5.1, 5.9, 5.0};
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) d.push_back(a[i] - b[i]);
  double m = 0.0;
  for (double x : d) m += x;
  m /= 6.0;
  double ss = 0.0;
  for (double x : d) ss += (x - m) * (x - m);
  const double t = m / (std::sqrt(ss / 5.0) / std::sqrt(6.0));
  const auto r = paired_t_test(a, b);
  CHECK(r.t == doctest::Approx(t).epsilon(1e-13));
  CHECK(r.dof == 5);
}

TEST_CASE("t-test is antisymmetric") {
  const auto ab = paired_t_test(kHelenAuc, kAdamAuc);
  const auto ba = paired_t_test(kAdamAuc, kHelenAuc);
  CHECK(ab.t == -ba.t);
  CHECK(ab.p == ba.p);
}

TEST_CASE("Student t p-value against closed forms") {
  for (double t : {0.0, 0.3, 1.0, 2.5, 10.0, 100.0}) {
    // one degree of freedom is Cauchy; two has an algebraic tail
    CHECK(student_t_two_sided_p(t, 1.0) == doctest::Approx(1.0 - 2.0 / std::numbers::pi * std::atan(t)).epsilon(1e-10));
    CHECK(student_t_two_sided_p(t, 2.0) == doctest::Approx(1.0 - t / std::sqrt(2.0 + t * t)).epsilon(1e-10));
    CHECK(student_t_two_sided_p(-t, 7.0) == student_t_two_sided_p(t, 7.0));
  }
  // two-sided 5% critical value at 20 dof
  CHECK(student_t_two_sided_p(2.085963447, 20.0) == doctest::Approx(0.05).epsilon(1e-8));
  CHECK_THROWS_AS(student_t_two_sided_p(1.0, 0.0), ValueError);
}

TEST_CASE("21 reference AUC pairs give p near 8e-3") {
  const auto r = paired_t_test(kHelenAuc, kAdamAuc);
  CHECK(r.dof == 20);
  CHECK(r.t > 0.0);
  CHECK(r.p > 8e-3 / 2.0);
  CHECK(r.p < 8e-3 * 2.0);
  CHECK(r.t == doctest::Approx(2.767441572987497).epsilon(1e-12));
  CHECK(r.p == doctest::Approx(0.011881129094847969).epsilon(1e-9));
}

TEST_CASE("mean and sample variance") {
  const std::vector<double> x{63.52, 63.57, 63.66};
  CHECK(mean(x) == doctest::Approx(63.5833333333).epsilon(1e-12));
  CHECK(sample_variance(x) == doctest::Approx(0.00503333333).epsilon(1e-6));
  CHECK(sample_variance(x) * 2.0 / 3.0 == doctest::Approx(0.00335555556).epsilon(1e-6));
  CHECK_THROWS_AS(sample_variance(std::vector<double>{1.0}), ValueError);
  CHECK_THROWS_AS(mean(std::vector<double>{}), ValueError);
}
