#include "dfl/filter.hpp"
#include "dfl/parallel.hpp"
#include "dfl/stats.hpp"
#include "random_instances.hpp"

#include <doctest.h>

#include <cmath>

using namespace dfl;

namespace {

Mat two_state_A() {
  Mat A(2, 2);
  A << -1, 1, 2, -2;
  return A;
}

Vec v2(double a, double b) {
  Vec out(2);
  out << a, b;
  return out;
}

FilterPath single_point(const Vec& pi) {
  FilterPath fp;
  fp.pi = {pi};
  fp.log_mass = {0.0};
  return fp;
}

// Log of pi_1/pi_2 from the Euler filter and from the exact static-Bayes formula on one Brownian path.
std::pair<double, double> static_bayes_log_ratio(int n, std::uint64_t path) {
  const Model m(Mat::Zero(2, 2), v2(0, 1), v2(0.5, 0.5), 1.0);
  const TimeGrid g(1.0, n);
  Stream s(99, path, StreamRole::noise);
  std::vector<double> z(g.points(), 0.0);
  for (int k = 0; k < n; ++k) z[k + 1] = z[k] + std::sqrt(g.dt()) * s.normal();
  const FilterPath fp = run_zakai(m, z, g);
  return {std::log(fp.pi[n](0) / fp.pi[n](1)), -z[n] + 0.5};
}

}  // namespace

TEST_CASE("single Euler step by hand") {
  Vec h(2);
  h << 1, 0;
  const Model m(two_state_A(), h, v2(1, 0), 1.0);
  const double pi[2] = {1, 0};
  double out[2];
  int clamps = 0;
  const double r = zakai_step(m, pi, 0.1, 0.01, out, clamps, 1);
  CHECK(r == doctest::Approx(1.1).epsilon(1e-14));
  CHECK(out[0] * r == doctest::Approx(1.09).epsilon(1e-14));
  CHECK(out[1] * r == doctest::Approx(0.01).epsilon(1e-14));
  CHECK(clamps == 0);
}

TEST_CASE("no observation coupling reproduces the matrix exponential") {
  const Model m(two_state_A(), v2(0, 0), v2(1, 0), 1.0);
  for (int n : {100, 400}) {
    const TimeGrid g(1.0, n);
    const FilterPath fp = run_zakai(m, std::vector<double>(g.points(), 0.0), g);
    const double e = std::exp(-3.0);
    const Vec exact = v2(2.0 / 3.0 + e / 3.0, 1.0 / 3.0 - e / 3.0);
    CHECK(((fp.pi[n] - exact).cwiseAbs().array() / exact.array()).maxCoeff() <= 5.0 * g.dt());
    CHECK((marginal_law(m, 1.0) - exact).cwiseAbs().maxCoeff() <= 1e-13);
  }
  const TimeGrid g(20.0, 2000);
  const FilterPath fp = run_zakai(m, std::vector<double>(g.points(), 0.0), g);
  CHECK((fp.pi.back() - v2(2.0 / 3.0, 1.0 / 3.0)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("static Bayes filter: weak error is O(dt), pathwise error is O(sqrt(dt))") {
  const int paths = 4000;
  std::vector<double> rms_by_n;
  for (int n : {250, 1000}) {
    std::vector<double> err(paths), sq(paths);
    for (int i = 0; i < paths; ++i) {
      const auto [euler, exact] = static_bayes_log_ratio(n, i);
      err[i] = euler - exact;
      sq[i] = err[i] * err[i];
    }
    const MeanSE bias = mean_se(err);
    CHECK(std::abs(bias.mean) <= 5.0 / n + 3.0 * bias.se);
    rms_by_n.push_back(std::sqrt(mean_se(sq).mean));
  }
  // quartering dt halves the pathwise error
  CHECK(rms_by_n[0] / rms_by_n[1] == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("conditional moments and consistency") {
  CHECK(estimate_conditional_moment(single_point(v2(0.3, 0.7)), v2(1, -1), 0) == doctest::Approx(-0.4));
  CHECK_THROWS_AS(estimate_conditional_moment(single_point(v2(0.3, 0.7)), v2(1, -1), 1), InvalidArgument);
  CHECK(consistency_check(single_point(v2(0.3, 0.7)), v2(5, 1)) == 0.0);

  const Model m = reference_model();
  const TimeGrid g(1.0, 200);
  const SamplePath p = simulate_path(m, g, 4, 0, Measure::P);
  const FilterPath fp = run_zakai(m, p.z, g);
  CHECK(estimate_conditional_moment(fp, Vec::Ones(3), 150) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(estimate_conditional_moment(fp, Vec::LinSpaced(3, 0, 2), 0) == pair(m.prior(), Vec::LinSpaced(3, 0, 2)));
  CHECK(consistency_check(fp, Vec::Ones(3)) <= 1e-15);
  CHECK(consistency_check(fp, Vec::Random(3)) <= 1e-12);
}

TEST_CASE("total mass underflow reports the step") {
  const Model m(two_state_A(), v2(1, 1), v2(0.5, 0.5), 1.0);
  const TimeGrid g(1.0, 10);
  std::vector<double> z(g.points(), 0.0);
  for (int k = 3; k < g.points(); ++k) z[k] = -5.0;
  try {
    run_zakai(m, z, g);
    FAIL("expected a numerical failure");
  } catch (const NumericalFailure& e) {
    CHECK(e.step == 3);
  }
}

TEST_CASE("averaged filter reproduces the law of the state") {
  const Model m = reference_model();
  const TimeGrid g(1.0, 200);
  const Ensemble e = simulate_ensemble(m, g, 20000, 12, Measure::P);
  const FilterEnsemble fe = run_filter_ensemble(m, e);
  const Vec law = marginal_law(m, 1.0);
  for (int x = 0; x < 3; ++x) {
    std::vector<double> v(e.size());
    for (int i = 0; i < e.size(); ++i) v[i] = fe.pi(g.n_steps, i)[x];
    const MeanSE s = mean_se(v);
    CHECK(std::abs(s.mean - law(x)) <= 3.0 * s.se + g.dt());
  }
}

TEST_CASE("filter beats simple competitors in mean square") {
  const Model m = reference_model();
  const TimeGrid g(1.0, 200);
  const Ensemble e = simulate_ensemble(m, g, 20000, 13, Measure::P);
  const FilterEnsemble fe = run_filter_ensemble(m, e);
  const Vec f = Vec::LinSpaced(3, 0, 2);
  const int N = e.size(), n = g.n_steps;
  std::vector<double> zT(N), fx(N), est(N);
  for (int i = 0; i < N; ++i) {
    zT[i] = e.z(i, n);
    fx[i] = f(e.x(i, n));
    est[i] = pair(Eigen::Map<const Vec>(fe.pi(n, i), 3), f);
  }
  const LinearFit lf = linear_fit(zT, fx);
  const double prior_mean = pair(marginal_law(m, 1.0), f);
  std::vector<double> e_filter(N), e_prior(N), e_lin(N);
  for (int i = 0; i < N; ++i) {
    e_filter[i] = std::pow(fx[i] - est[i], 2);
    e_prior[i] = std::pow(fx[i] - prior_mean, 2);
    e_lin[i] = std::pow(fx[i] - lf.intercept - lf.slope * zT[i], 2);
  }
  const double mf = mean_se(e_filter).mean;
  CHECK(mf <= mean_se(e_prior).mean);
  CHECK(mf <= mean_se(e_lin).mean);
}

TEST_CASE("parallel filter ensemble is bit-identical to the serial reference") {
  const Model m = reference_model();
  const TimeGrid g(1.0, 40);
  const int saved = worker_count();
  set_worker_count(3);
  const Ensemble e = simulate_ensemble(m, g, 777, 21, Measure::Ptilde);
  CHECK(run_filter_ensemble(m, e) == run_filter_ensemble_serial(m, e));
  const FilterPath one = run_zakai(m, e.z_path(5), g);
  const FilterPath from_ens = run_filter_ensemble(m, e).path(5);
  for (int k = 0; k < g.points(); ++k) {
    CHECK(one.pi[k] == from_ens.pi[k]);
    CHECK(one.log_mass[k] == from_ens.log_mass[k]);
  }
  set_worker_count(saved);
}

TEST_CASE("property: filter stays on the simplex") {
  testing::RandomModelSource src(301);
  for (int n = 0; n < testing::kInstances; ++n) {
    const int d = src.dim();
    const Model m = src.model(d);
    // coarse grids provoke clamping
    const TimeGrid g(1.0, 10 + n % 20);
    const SamplePath p = simulate_path(m, g, 500 + n, n, Measure::Ptilde);
    const FilterPath fp = run_zakai(m, p.z, g);
    double worst_sum = 0.0, min_entry = 1.0;
    for (const Vec& pi : fp.pi) {
      worst_sum = std::max(worst_sum, std::abs(pi.sum() - 1.0));
      min_entry = std::min(min_entry, pi.minCoeff());
    }
    CHECK(worst_sum <= 1e-12);
    CHECK(min_entry >= 0.0);
    CHECK(consistency_check(fp, src.function(d)) <= 1e-12);
  }
}
