#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "../core/src/omgp_detail.hpp"
#include "doctest.h"
#include "popform/errors.hpp"
#include "popform/omgp.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace popform;
using namespace popform::omgp;
using gp::MeanParams;

namespace {

std::vector<double> grid_points(std::size_t n, double lo, double hi) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return x;
}

ComponentParams comp(double sv, double l, double fn, double zeta, double a, gp::Part part = gp::Part::Real) {
  return {{sv, l}, {fn, zeta, a, part, +1}};
}

// Single-member data with repeated inputs.
struct Single {
  std::vector<double> x, y;
};

Single single_member(std::size_t copies, std::uint64_t seed) {
  const std::vector<frf::BladeSpec> spec{{"b", {{52.0, 0.04, 1.0}}}};
  const auto ds = frf::synthesize_population(spec, {48.0, 56.0}, 40);
  const auto t = frf::build_training_set(ds, copies, 0.05, 40 * copies, seed);
  return {t.inputs, t.targets_real};
}

oracle::Vector vec(std::span<const double> v) {
  return Eigen::Map<const oracle::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_vector(std::span<const double> v) { return {v.begin(), v.end()}; }

double row_sum_error(const Matrix& r) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < r.rows(); ++i) worst = std::max(worst, std::abs(r.row(i).sum() - 1.0));
  return worst;
}

}  // namespace

TEST_CASE("single component") {
  const auto d = single_member(3, 2);
  OmgpModel m(d.x, d.y, gp::Part::Real, {comp(0.02, 1.1, 52.3, 0.05, 0.9)}, 0.3);
  SUBCASE("responsibilities are all ones after an E-step") {
    const auto e = e_step(m);
    CHECK(e.responsibilities().minCoeff() == 1.0);
  }
  SUBCASE("bound equals the exact GP log marginal likelihood") {
    const auto& p = m.components()[0].params;
    const oracle::Vector mean = gp::mean_vector(p.mean, d.x);
    oracle::Matrix cov = oracle::se_kernel(0.02, 1.1, d.x, d.x);
    cov.diagonal().array() += 0.09;
    const double exact = oracle::log_gaussian(vec(d.y), mean, cov);
    CHECK(oracle::rel_err(m.elbo(), exact) <= 1e-6);
  }
}

TEST_CASE("E-step behaviour") {
  SUBCASE("a point on one of two well separated curves goes to that curve") {
    const auto x = grid_points(30, 48.0, 56.0);
    std::vector<double> xs, ys;
    const MeanParams a{50.0, 0.05, 1.0, gp::Part::Imaginary, +1};
    const MeanParams b{54.0, 0.05, 1.0, gp::Part::Imaginary, +1};
    const Vector ma = gp::mean_vector(a, x), mb = gp::mean_vector(b, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      xs.push_back(x[i]);
      ys.push_back(ma[static_cast<Eigen::Index>(i)]);
      xs.push_back(x[i]);
      ys.push_back(mb[static_cast<Eigen::Index>(i)]);
    }
    // Probe at the second curve's peak, where the curves differ by far more than 10 sigma.
    std::vector<double> peak{54.0};
    xs.push_back(54.0);
    ys.push_back(gp::mean_vector(b, peak)[0]);
    OmgpModel m(xs, ys, gp::Part::Imaginary, {{{1e-4, 1.0}, a}, {{1e-4, 1.0}, b}}, 0.05);
    m = e_step(m);
    CHECK(m.responsibilities()(static_cast<Eigen::Index>(xs.size() - 1), 1) > 0.99);
  }
  SUBCASE("identical components split every row evenly") {
    const auto d = single_member(2, 4);
    const auto c = comp(0.02, 1.0, 52.0, 0.04, 1.0);
    const auto m = e_step(OmgpModel(d.x, d.y, gp::Part::Real, {c, c, c}, 0.2));
    CHECK((m.responsibilities().array() - 1.0 / 3.0).abs().maxCoeff() <= 1e-12);
  }
  SUBCASE("bound never decreases along E-steps and rows stay normalized") {
    const auto p = fixture::population(300, 5);
    const double s = fixture::residual_sigma(p, gp::Part::Real);
    auto comps = fixture::truth_components(p.specs, gp::Part::Real, 0.05 * s * s);
    for (auto& c : comps) c.mean.natural_frequency_hz += 0.4;
    OmgpModel m(p.train.inputs, p.train.targets_real, gp::Part::Real, comps, 1.5 * s);
    double prev = m.elbo();
    for (int t = 0; t < 8; ++t) {
      m = e_step(m, 1);
      CHECK(m.elbo() >= prev - 1e-8);
      CHECK(row_sum_error(m.responsibilities()) <= 1e-12);
      prev = m.elbo();
    }
    CHECK(m.elbo_trace().size() == 8);
  }
}

TEST_CASE("collapsed bound gradients match finite differences") {
  const auto p = fixture::population(120, 8, 30);
  const auto m = fixture::truth_model(p, gp::Part::Imaginary, 1);
  const auto x = m.x();
  const auto y = m.y();
  for (std::size_t j = 0; j < m.k(); ++j) {
    Vector pi = m.responsibilities().col(static_cast<Eigen::Index>(j));
    // Push a few points to the floor so the dropped-point terms are exercised.
    for (Eigen::Index i = 0; i < 5; ++i) pi[i] = 0.0;
    const auto set = detail::make_active_set(x, y, pi);
    const auto base = m.components()[j].params;
    const std::vector<double> theta{std::log(base.kernel.signal_variance), std::log(base.kernel.lengthscale),
                                    base.mean.natural_frequency_hz, std::log(base.mean.damping_ratio),
                                    std::log(base.mean.residue), std::log(m.sigma())};
    const auto value = [&](const std::vector<double>& t) {
      ComponentParams c = base;
      c.kernel.signal_variance = std::exp(t[0]);
      c.kernel.lengthscale = std::exp(t[1]);
      c.mean.natural_frequency_hz = t[2];
      c.mean.damping_ratio = std::exp(t[3]);
      c.mean.residue = std::exp(t[4]);
      const auto e = detail::evaluate_component(x, y, c, std::exp(t[5]), pi, set, detail::EvalMode::Value);
      return e.bound + e.dropped_term;
    };
    const auto g = detail::evaluate_component(x, y, base, m.sigma(), pi, set, detail::EvalMode::Gradient);
    for (std::size_t c = 0; c < 6; ++c) {
      const double analytic = c < 5 ? g.grad[c] : g.grad_log_sigma;
      const double fd = oracle::fd_partial(value, theta, c, 1e-5);
      CHECK(analytic == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("labels") {
  const auto d = single_member(1, 3);
  const auto c = comp(0.02, 1.0, 52.0, 0.04, 1.0);
  OmgpModel m(d.x, d.y, gp::Part::Real, {c, c, c}, 0.2);
  SUBCASE("uniform rows go to the first component") {
    for (auto l : map_train_labels(m)) CHECK(l == 0);
  }
  SUBCASE("one-hot rows go to their component") {
    std::vector<std::size_t> want(d.x.size());
    for (std::size_t i = 0; i < want.size(); ++i) want[i] = (i * 7) % 3;
    m.set_responsibilities(fixture::one_hot(want, 3));
    CHECK(map_train_labels(m) == want);
  }
  SUBCASE("permutation accuracy") {
    const std::vector<std::size_t> truth{0, 0, 1, 1, 2, 2};
    const std::vector<std::size_t> relabelled{2, 2, 0, 0, 1, 1};
    CHECK(permutation_accuracy(relabelled, truth) == 1.0);
    const std::vector<std::size_t> one_wrong{2, 2, 0, 1, 1, 1};
    CHECK(permutation_accuracy(one_wrong, truth) == doctest::Approx(5.0 / 6.0));
    CHECK_THROWS_AS(permutation_accuracy(std::vector<std::size_t>{0}, truth), InvalidInput);
  }
}

TEST_CASE("prediction") {
  const auto p = fixture::population(200, 6, 40);
  const auto m0 = fixture::truth_model(p, gp::Part::Real, 0);

  SUBCASE("one-hot responsibilities reproduce a GP on each subset") {
    const auto xs = grid_points(23, 48.0, 56.0);
    const auto post = predict(m0, xs);
    const double s2 = m0.sigma() * m0.sigma();
    for (std::size_t j = 0; j < m0.k(); ++j) {
      std::vector<double> xj, yj;
      for (std::size_t i = 0; i < m0.n(); ++i)
        if (p.truth[i] == j) {
          xj.push_back(m0.x()[i]);
          yj.push_back(m0.y()[i]);
        }
      const auto& c = m0.components()[j].params;
      const auto ref = oracle::condition(
          gp::mean_vector(c.mean, xj), gp::mean_vector(c.mean, xs),
          oracle::se_kernel(c.kernel.signal_variance, c.kernel.lengthscale, xj, xj),
          oracle::se_kernel(c.kernel.signal_variance, c.kernel.lengthscale, xs, xj),
          oracle::se_kernel(c.kernel.signal_variance, c.kernel.lengthscale, xs, xs),
          oracle::Vector::Constant(static_cast<Eigen::Index>(xj.size()), s2), vec(yj));
      oracle::Matrix cov = ref.cov;
      cov.diagonal().array() += s2;
      CHECK(oracle::max_rel_err(post[j].mean, ref.mean) <= 1e-6);
      CHECK(oracle::max_rel_err(post[j].covariance, cov) <= 1e-6);
    }
  }
  SUBCASE("far from the data the prediction reverts to the prior") {
    const std::vector<double> far{400.0, 500.0};
    const auto post = predict(m0, far);
    for (std::size_t j = 0; j < m0.k(); ++j) {
      const auto& c = m0.components()[j].params;
      const Vector prior = gp::mean_vector(c.mean, far);
      CHECK(oracle::max_rel_err(post[j].mean, prior) <= 1e-9);
      const double var = c.kernel.signal_variance + m0.sigma() * m0.sigma();
      CHECK(post[j].covariance(0, 0) == doctest::Approx(var).epsilon(1e-9));
    }
  }
  SUBCASE("empty query") {
    const auto post = predict(m0, std::vector<double>{});
    REQUIRE(post.size() == m0.k());
    CHECK(post[0].size() == 0);
  }
  SUBCASE("identical components with even responsibilities give identical posteriors") {
    const auto c = comp(0.05, 1.0, 52.0, 0.04, 1.0);
    OmgpModel m(to_vector(m0.x()), to_vector(m0.y()),
                gp::Part::Real, {c, c}, 0.3);
    const auto post = predict(m, grid_points(9, 48.0, 56.0));
    CHECK(post[0].mean == post[1].mean);
    CHECK(post[0].covariance == post[1].covariance);
  }
}

TEST_CASE("classification and evidence") {
  const auto p = fixture::population(200, 7, 40);
  const auto m = fixture::truth_model(p, gp::Part::Real, 2);
  const auto xs = grid_points(15, 48.5, 55.5);
  const auto post = predict(m, xs);

  SUBCASE("a component's predictive mean is classified to that component") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z(0.0, 1e-3 * m.sigma());
    for (std::size_t j = 0; j < m.k(); ++j) {
      std::vector<double> y(xs.size());
      for (std::size_t i = 0; i < xs.size(); ++i) y[i] = post[j].mean[static_cast<Eigen::Index>(i)] + z(rng);
      const auto c = classify_new(m, xs, y);
      CHECK(c.label == j);
      CHECK(std::exp(c.log_posterior[j]) > 0.99);
      double total = 0.0;
      for (double lp : c.log_posterior) total += std::exp(lp);
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
  SUBCASE("evidence agrees with a naive linear-space sum") {
    const auto xs10 = grid_points(10, 49.0, 55.0);
    const auto post10 = predict(m, xs10);
    std::vector<double> y(10);
    for (std::size_t i = 0; i < 10; ++i)
      y[i] = 0.5 * (post10[0].mean[static_cast<Eigen::Index>(i)] + post10[1].mean[static_cast<Eigen::Index>(i)]);
    const EvidenceEvaluator ev(m, xs10);
    const auto dens = ev.component_log_densities(y);
    for (std::size_t j = 0; j < dens.size(); ++j)
      CHECK(oracle::rel_err(dens[j], oracle::log_gaussian(vec(y), post10[j].mean, post10[j].covariance)) <= 1e-9);
    const double naive = oracle::naive_mixture(dens);
    REQUIRE(std::isfinite(naive));
    CHECK(oracle::rel_err(log_evidence(m, xs10, y), naive) <= 1e-12);
  }
  SUBCASE("mixture sandwich") {
    std::vector<double> y(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) y[i] = post[2].mean[static_cast<Eigen::Index>(i)] * 1.05;
    const EvidenceEvaluator ev(m, xs);
    const auto dens = ev.component_log_densities(y);
    const double mx = *std::max_element(dens.begin(), dens.end());
    const double e = ev.log_evidence(y);
    CHECK(e <= mx);
    CHECK(e >= mx - std::log(4.0));
  }
  SUBCASE("single component evidence is one Gaussian") {
    const auto d = single_member(2, 9);
    OmgpModel one(d.x, d.y, gp::Part::Real, {comp(0.02, 1.0, 52.0, 0.04, 1.0)}, 0.2);
    const auto p1 = predict(one, xs);
    std::vector<double> y(xs.size(), 0.3);
    CHECK(log_evidence(one, xs, y) == gp::log_gaussian(vec(y), p1[0]));
  }
  SUBCASE("identical components give a uniform posterior") {
    const auto d = single_member(2, 9);
    const auto c = comp(0.02, 1.0, 52.0, 0.04, 1.0);
    OmgpModel same(d.x, d.y, gp::Part::Real, {c, c, c, c}, 0.2);
    std::vector<double> y(xs.size(), 0.3);
    for (double lp : classify_new(same, xs, y).log_posterior) CHECK(lp == doctest::Approx(std::log(0.25)).epsilon(1e-12));
  }
  SUBCASE("duplicating every component leaves the evidence unchanged") {
    std::vector<double> y(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) y[i] = post[1].mean[static_cast<Eigen::Index>(i)];
    const EvidenceEvaluator ev(m, xs);
    auto dens = ev.component_log_densities(y);
    dens.insert(dens.end(), dens.begin(), dens.end());
    const std::vector<double> w(dens.size(), -std::log(static_cast<double>(dens.size())));
    CHECK(oracle::rel_err(log_mixture(dens, w), ev.log_evidence(y)) <= 1e-12);
  }
}

TEST_CASE("relabelling components permutes outputs only") {
  const auto p = fixture::population(200, 10, 40);
  const auto m = fixture::truth_model(p, gp::Part::Real, 1);
  const std::vector<std::size_t> perm{2, 0, 3, 1};  // new j holds old perm[j]
  auto params = m.parameters();
  std::vector<ComponentParams> permuted;
  Matrix r(m.responsibilities().rows(), 4);
  for (std::size_t j = 0; j < 4; ++j) {
    permuted.push_back(params[perm[j]]);
    r.col(static_cast<Eigen::Index>(j)) = m.responsibilities().col(static_cast<Eigen::Index>(perm[j]));
  }
  const OmgpModel q(to_vector(m.x()), to_vector(m.y()),
                    gp::Part::Real, permuted, m.sigma(), r);
  CHECK(oracle::rel_err(q.elbo(), m.elbo()) <= 1e-10);
  const auto lm = map_train_labels(m);
  const auto lq = map_train_labels(q);
  for (std::size_t i = 0; i < lm.size(); ++i) CHECK(perm[lq[i]] == lm[i]);

  const auto xs = grid_points(12, 48.5, 55.5);
  const auto post = predict(m, xs);
  std::vector<double> y(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) y[i] = post[3].mean[static_cast<Eigen::Index>(i)] * 0.98;
  CHECK(oracle::rel_err(log_evidence(q, xs, y), log_evidence(m, xs, y)) <= 1e-10);
  const auto cm = classify_new(m, xs, y);
  const auto cq = classify_new(q, xs, y);
  CHECK(perm[cq.label] == cm.label);
}

TEST_CASE("log-sum-exp") {
  SUBCASE("matches the naive sum where representable") {
    const std::vector<double> dens{-3.2, -1.1, -7.5, -0.4};
    const std::vector<double> w(4, -std::log(4.0));
    CHECK(oracle::rel_err(log_mixture(dens, w), oracle::naive_mixture(dens)) <= 1e-12);
  }
  SUBCASE("finite where the naive sum underflows") {
    const std::vector<double> dens{-800.0, -900.0, -1200.0};
    const std::vector<double> w(3, -std::log(3.0));
    CHECK(std::isinf(oracle::naive_mixture(dens)));
    const double v = log_mixture(dens, w);
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(-800.0 - std::log(3.0) + std::log1p(std::exp(-100.0))).epsilon(1e-14));
  }
  SUBCASE("empty and mismatched input") {
    CHECK(std::isinf(log_sum_exp(std::vector<double>{})));
    CHECK_THROWS_AS(log_mixture(std::vector<double>{1.0}, std::vector<double>{}), InvalidInput);
  }
}

TEST_CASE("model construction checks") {
  const std::vector<double> x{50.0, 51.0}, y{1.0, 2.0};
  const auto c = comp(0.02, 1.0, 52.0, 0.04, 1.0);
  CHECK_THROWS_AS(OmgpModel(x, y, gp::Part::Real, {c, c, c}, 0.2), InvalidInput);
  CHECK_THROWS_AS(OmgpModel(x, {1.0}, gp::Part::Real, {c}, 0.2), InvalidInput);
  CHECK_THROWS_AS(OmgpModel(x, y, gp::Part::Real, {c}, -1.0), InvalidInput);
  OmgpModel m(x, y, gp::Part::Real, {c, c}, 0.2);
  Matrix bad(2, 2);
  bad << 0.7, 0.7, 0.5, 0.5;
  CHECK_THROWS_AS(m.set_responsibilities(bad), InvalidInput);
  CHECK_THROWS_AS(HyperBoxes::from_data(x, std::vector<double>{1.0, 1.0}), InvalidInput);
}
