#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "helen/error.hpp"
#include "helen/graph.hpp"
#include "helen/model.hpp"
#include "helen/objective.hpp"
#include "helen/tensor.hpp"
#include "oracles.hpp"

using namespace helen;

namespace {

// One dense scalar used as the logit of every sample.
struct ScalarLogit {
  LayoutPtr layout = std::make_shared<const Layout>(1, std::vector<std::size_t>{1}, 1);
  ParamSpace params{layout};
  CompGraph graph;

  explicit ScalarLogit(double z, std::uint8_t label = 1)
      : graph(layout, Batch{1, {0}, {static_cast<double>(label)}}) {
    params[0] = z;
    graph.bce_with_logits(graph.dense(0, 1, 1));
  }
};

LayoutPtr quad_layout() { return std::make_shared<const Layout>(2, std::vector<std::size_t>{1}, 1); }

// 3 coordinates total: 2 dense + 1 embedding row of width 1
QuadraticObjective diag_quadratic() {
  std::vector<double> a(9, 0.0);
  a[0] = 3.0;
  a[4] = 1.0;
  a[8] = 2.0;
  return QuadraticObjective(quad_layout(), a);
}

}  // namespace

TEST_CASE("tensor shape must match data length") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ValueError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.all_finite());
  t(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
  CHECK(Tensor::scalar(4.0).rows() == 1);
}

TEST_CASE("forward at zero parameters gives ln 2 for every family") {
  const auto ds = oracle::toy_dataset(4, 50, 32, 3);
  for (auto fam : {ModelFamily::Dnn, ModelFamily::Pnn, ModelFamily::DeepFm}) {
    CtrModel model({fam, 4, {16, 16}}, ds.schema.vocab_sizes());
    ParamSpace p(model.layout());
    auto obj = model.objective(ds.batch(0, ds.size()));
    CHECK(obj.loss(p) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
}

TEST_CASE("single sample logit loss and derivative") {
  ScalarLogit zero(0.0);
  CHECK(zero.graph.forward(zero.params) == doctest::Approx(0.693147180559945));
  const GradMap g = zero.graph.backward();
  CHECK(g[0] == doctest::Approx(-0.5).epsilon(1e-15));

  ScalarLogit pos(1.7);
  CHECK(pos.graph.forward(pos.params) == doctest::Approx(std::log1p(std::exp(-1.7))).epsilon(1e-14));
  ScalarLogit neg(-30.0, 0);
  CHECK(neg.graph.forward(neg.params) == doctest::Approx(std::log1p(std::exp(-30.0))).epsilon(1e-12));
}

TEST_CASE("sigmoid derivative at zero") {
  auto layout = std::make_shared<const Layout>(1, std::vector<std::size_t>{1}, 1);
  CompGraph g(layout, Batch{1, {0}, {1.0}});
  g.sum(g.sigmoid(g.dense(0, 1, 1)));
  ParamSpace p(layout);
  CHECK(g.forward(p) == doctest::Approx(0.5));
  CHECK(g.backward()[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("DNN forward matches a straight-line reimplementation") {
  const auto ds = oracle::toy_dataset(3, 10, 8, 11);
  CtrModel model({ModelFamily::Dnn, 2, {4}}, ds.schema.vocab_sizes());
  ParamSpace p = model.init_params(5);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0.0, 0.5);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = nd(rng);  // make ReLUs mixed

  const auto z = model.logits(p, ds.batch(0, ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(z[i] == doctest::Approx(oracle::logit(model, p, ds.samples[i])).epsilon(1e-13));
  auto obj = model.objective(ds.batch(0, ds.size()));
  CHECK(obj.loss(p) == doctest::Approx(oracle::mean_loss(model, p, ds)).epsilon(1e-13));
}

TEST_CASE("non-finite values name the offending node") {
  ScalarLogit s(0.0);
  s.params[0] = std::numeric_limits<double>::infinity();
  try {
    s.graph.forward(s.params);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("dense#0") != std::string::npos);
  }
}

TEST_CASE("backward before forward is a usage error") {
  ScalarLogit s(0.0);
  CHECK_THROWS_AS(s.graph.backward(), UsageError);
  CHECK_THROWS_AS(s.graph.value(0), UsageError);
}

TEST_CASE("graph construction rejects malformed inputs") {
  auto layout = std::make_shared<const Layout>(4, std::vector<std::size_t>{3}, 2);
  CHECK_THROWS_AS(CompGraph(layout, Batch{1, {3}, {1.0}}), ValueError);
  CHECK_THROWS_AS(CompGraph(layout, Batch{2, {0, 1}, {1.0}}), ValueError);
  CompGraph g(layout, Batch{1, {0, 1}, {1.0, 0.0}});
  const NodeId e = g.gather(0, 0, 2);
  const NodeId w = g.dense(0, 2, 2);
  CHECK_THROWS_AS(g.add(e, g.dense(0, 1, 2)), ValueError);
  CHECK_THROWS_AS(g.affine(e, g.dense(0, 1, 2), std::nullopt), ValueError);
  CHECK_THROWS_AS(g.dense(3, 1, 2), ValueError);
  CHECK_THROWS_AS(g.gather(0, 1, 2), ValueError);
  CHECK_THROWS_AS(g.bce_with_logits(g.affine(e, w, std::nullopt)), ValueError);
}

TEST_CASE("linear model gradient check is at rounding level") {
  const auto ds = oracle::toy_dataset(3, 20, 16, 2);
  auto layout = std::make_shared<const Layout>(0, ds.schema.vocab_sizes(), 1);
  CompGraph g(layout, ds.batch(0, ds.size()));
  std::vector<NodeId> parts;
  for (std::size_t j = 0; j < 3; ++j) parts.push_back(g.gather(j, 0, 1));
  g.sum(g.row_sum(g.concat(parts)));
  std::vector<CompGraph> graphs;
  graphs.push_back(std::move(g));
  GraphObjective obj(std::move(graphs));
  ParamSpace p(layout);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = nd(rng);
  const auto r = grad_check(obj, p);
  CHECK(r.max_rel_error < 1e-9);
  CHECK(r.coords_checked >= 16);
}

TEST_CASE("DeepFM 4-sample batch gradient check") {
  const auto ds = oracle::toy_dataset(4, 50, 4, 7);
  CtrModel model({ModelFamily::DeepFm, 4, {16, 16}}, ds.schema.vocab_sizes());
  ParamSpace p = model.init_params(3);
  auto obj = model.objective(ds.batch(0, 4));
  CHECK(grad_check(obj, p, {1e-5, 64, 3}).max_rel_error < 1e-6);
}

TEST_CASE("every family passes gradient check over five seeds") {
  for (auto fam : {ModelFamily::Dnn, ModelFamily::Pnn, ModelFamily::DeepFm}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto ds = oracle::toy_dataset(4, 50, 64, seed);
      CtrModel model({fam, 4, {16, 16}}, ds.schema.vocab_sizes());
      ParamSpace p = model.init_params(seed);
      auto obj = model.objective(ds.batch(0, ds.size()));
      const auto r = grad_check(obj, p, {1e-5, 64, seed});
      INFO(to_string(fam), " seed ", seed);
      CHECK(r.max_rel_error < 1e-5);
    }
  }
}

TEST_CASE("analytic gradient matches an independent finite-difference oracle") {
  const auto ds = oracle::toy_dataset(3, 8, 12, 4);
  CtrModel model({ModelFamily::Pnn, 2, {3}}, ds.schema.vocab_sizes());
  ParamSpace p = model.init_params(2);
  auto obj = model.objective(ds.batch(0, ds.size()));
  const GradMap g = obj.gradient(p);
  auto f = [&](const std::vector<double>& w) { return oracle::mean_loss(model, ParamSpace(model.layout(), w), ds); };
  const auto fd = oracle::fd_gradient(f, p.flatten());
  double gmax = 0.0;
  for (double x : fd) gmax = std::max(gmax, std::abs(x));
  // central differences at h = 1e-6 carry ~1e-10 roundoff on a loss of order 1
  for (std::size_t i = 0; i < fd.size(); ++i) CHECK(std::abs(g[i] - fd[i]) < 1e-6 * gmax + 1e-9);
}

TEST_CASE("blocks of absent features are exactly zero") {
  const auto ds = oracle::toy_dataset(4, 50, 8, 5);
  CtrModel model({ModelFamily::DeepFm, 4, {16, 16}}, ds.schema.vocab_sizes());
  ParamSpace p = model.init_params(1);
  auto obj = model.objective(ds.batch(0, ds.size()));
  const GradMap g = obj.gradient(p);
  for (std::size_t j = 0; j < 4; ++j) {
    std::vector<std::uint32_t> present;
    for (const auto& s : ds.samples) present.push_back(s.features[j]);
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    CHECK(g.touched()[j] == present);
    for (std::uint32_t k = 0; k < 50; ++k) {
      if (std::binary_search(present.begin(), present.end(), k)) continue;
      for (double x : g.embed(j, k)) CHECK(x == 0.0);
    }
  }
}

TEST_CASE("repeated evaluation is bit-identical") {
  const auto ds = oracle::toy_dataset(4, 50, 32, 6);
  CtrModel model({ModelFamily::Pnn, 4, {16, 16}}, ds.schema.vocab_sizes());
  ParamSpace p = model.init_params(2);
  auto obj = model.objective(ds.batch(0, ds.size()));
  double l1 = 0.0, l2 = 0.0;
  const auto g1 = obj.gradient(p, &l1).flatten();
  const auto g2 = obj.gradient(p, &l2).flatten();
  CHECK(l1 == l2);
  CHECK(g1 == g2);
  CHECK(obj.gradient_evals() == 2);
}

TEST_CASE("hvp on a diagonal quadratic") {
  auto q = diag_quadratic();
  ParamSpace w(q.layout(), {0.3, -0.2, 0.7});
  GradMap v(q.layout(), {1.0, 0.0, 0.0});
  const GradMap hv = hvp(q, w, v);
  CHECK(hv[0] == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(std::abs(hv[1]) < 1e-6);
  CHECK(std::abs(hv[2]) < 1e-6);
  CHECK(q.gradient_evals() == 2);

  const GradMap ex = hvp(q, w, v, HvpMethod::Exact);
  CHECK(ex[0] == 3.0);
  CHECK(ex[1] == 0.0);
}

TEST_CASE("hvp of the zero direction is zero without evaluating") {
  auto q = diag_quadratic();
  ParamSpace w(q.layout(), {1.0, 2.0, 3.0});
  const GradMap hv = hvp(q, w, GradMap(q.layout()));
  for (double x : hv.values()) CHECK(x == 0.0);
  CHECK(q.gradient_evals() == 0);
}

TEST_CASE("hvp rejects a direction with another layout") {
  auto q = diag_quadratic();
  ParamSpace w(q.layout());
  auto other = std::make_shared<const Layout>(3, std::vector<std::size_t>{1}, 1);
  CHECK_THROWS_AS(hvp(q, w, GradMap(other)), ValueError);
}

TEST_CASE("finite-difference hvp is symmetric on DeepFM") {
  const auto ds = oracle::toy_dataset(4, 50, 64, 8);
  CtrModel model({ModelFamily::DeepFm, 4, {16, 16}}, ds.schema.vocab_sizes());
  ParamSpace p = model.init_params(8);
  auto obj = model.objective(ds.batch(0, ds.size()));
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    GradMap u(model.layout(), oracle::random_unit(rng, p.size()));
    GradMap v(model.layout(), oracle::random_unit(rng, p.size()));
    const double uhv = u.dot(hvp(obj, p, v));
    const double vhu = v.dot(hvp(obj, p, u));
    CHECK(std::abs(uhv - vhu) / std::max(std::abs(uhv), 1e-12) < 1e-3);
  }
}

TEST_CASE("exact and finite-difference hvp agree on toy configs") {
  for (auto fam : {ModelFamily::Dnn, ModelFamily::Pnn, ModelFamily::DeepFm}) {
    const auto ds = oracle::toy_dataset(4, 50, 64, 12);
    CtrModel model({fam, 4, {16, 16}}, ds.schema.vocab_sizes());
    ParamSpace p = model.init_params(12);
    auto obj = model.objective(ds.batch(0, ds.size()));
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
      GradMap v(model.layout(), oracle::random_unit(rng, p.size()));
      const GradMap fd = hvp(obj, p, v, HvpMethod::FiniteDifference);
      const GradMap ex = hvp(obj, p, v, HvpMethod::Exact);
      GradMap diff = fd;
      diff.axpy(-1.0, ex);
      INFO(to_string(fam), " trial ", trial);
      CHECK(diff.norm() / ex.norm() < 1e-3);
    }
  }
}

TEST_CASE("a fixed step across a ReLU kink measures the jump, not the curvature") {
  const auto ds = oracle::toy_dataset(4, 50, 64, 12);
  CtrModel model({ModelFamily::Dnn, 4, {16, 16}}, ds.schema.vocab_sizes());
  ParamSpace p = model.init_params(12);
  auto obj = model.objective(ds.batch(0, ds.size()));
  std::mt19937_64 rng(5);
  oracle::random_unit(rng, p.size());
  GradMap v(model.layout(), oracle::random_unit(rng, p.size()));
  ParamSpace up = p;
  up.axpy(1e-4, v);
  ParamSpace down = p;
  down.axpy(-1e-4, v);
  const bool crosses = obj.regime(up) != obj.regime(p) || obj.regime(down) != obj.regime(p);
  REQUIRE(crosses);

  // the naive quotient at h = 1e-4, by hand
  GradMap naive = obj.gradient(up);
  naive.axpy(-1.0, obj.gradient(down));
  for (double& x : naive.values()) x /= 2e-4;
  const GradMap ex = hvp(obj, p, v, HvpMethod::Exact);
  GradMap bad = naive;
  bad.axpy(-1.0, ex);
  CHECK(bad.norm() / ex.norm() > 1.0);

  GradMap good = hvp(obj, p, v);
  good.axpy(-1.0, ex);
  CHECK(good.norm() / ex.norm() < 1e-6);
}

TEST_CASE("exact hvp matches an independently assembled block Hessian") {
  const auto ds = oracle::toy_dataset(3, 6, 24, 14);
  CtrModel model({ModelFamily::DeepFm, 3, {5}}, ds.schema.vocab_sizes());
  ParamSpace p = model.init_params(4);
  for (std::size_t i = model.layout()->dense_dim(); i < p.size(); ++i) p[i] *= 30.0;
  auto obj = model.objective(ds.batch(0, ds.size()));
  const std::size_t off = model.layout()->offset(BlockId::embed(1, 1));
  const std::size_t d = model.layout()->block_dim();
  auto f = [&](const std::vector<double>& w) { return oracle::mean_loss(model, ParamSpace(model.layout(), w), ds); };
  const Eigen::MatrixXd ref = oracle::fd_block_hessian(f, p.flatten(), off, d);
  const Eigen::MatrixXd got = oracle::assemble(
      [&](const std::vector<double>& e) {
        GradMap v(model.layout());
        std::copy(e.begin(), e.end(), v.values().begin() + static_cast<std::ptrdiff_t>(off));
        const GradMap hv = hvp(obj, p, v, HvpMethod::Exact);
        return std::vector<double>(hv.values().begin() + static_cast<std::ptrdiff_t>(off),
                                   hv.values().begin() + static_cast<std::ptrdiff_t>(off + d));
      },
      d);
  CHECK((got - ref).norm() / ref.norm() < 1e-5);
  CHECK((got - got.transpose()).norm() < 1e-12 * got.norm());
}
