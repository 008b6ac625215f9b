#include "dfl/dual.hpp"
#include "dfl/parallel.hpp"
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

Vec vec(std::initializer_list<double> xs) {
  Vec out(xs.size());
  int i = 0;
  for (double x : xs) out(i++) = x;
  return out;
}

struct Bundle {
  Model m;
  TimeGrid g;
  Ensemble e;
  FilterEnsemble fe;
};

Bundle make(const Model& m, int n_steps, int N, std::uint64_t seed, Measure ms = Measure::Ptilde) {
  const TimeGrid g(m.T(), n_steps);
  Ensemble e = simulate_ensemble(m, g, N, seed, ms);
  FilterEnsemble fe = run_filter_ensemble(m, e);
  return {m, g, std::move(e), std::move(fe)};
}

double half_var(const Vec& law, const Vec& f) {
  const double a = pair(law, f);
  return 0.5 * (pair(law, hadamard(f, f)) - a * a);
}

}  // namespace

TEST_CASE("lagrangian hand values") {
  const Model m(two_state_A(), vec({0, 1}), vec({0.5, 0.5}), 1.0);
  CHECK(lagrangian(vec({1, 0}), vec({0, 1}), vec({0, 0}), 1.0, m) == doctest::Approx(1.0));
  CHECK(lagrangian(vec({0.3, 0.9}), vec({2, 2}), vec({-0.7, -0.7}), 0.7, m) == doctest::Approx(0.0));
  const double base = lagrangian(vec({0.3, 0.9}), vec({1, -2}), vec({0.1, 0.4}), 0.2, m);
  CHECK(lagrangian(vec({0.6, 1.8}), vec({1, -2}), vec({0.1, 0.4}), 0.2, m) == doctest::Approx(2 * base));
  CHECK_THROWS_AS(lagrangian(vec({1, 0, 0}), vec({0, 1}), vec({0, 0}), 1.0, m), InvalidArgument);
}

TEST_CASE("Gauss-Hermite integrates normal moments") {
  const GaussHermite gh(10);
  auto moment = [&](int p) {
    double s = 0;
    for (int q = 0; q < 10; ++q) s += gh.weights[q] * std::pow(gh.nodes[q], p);
    return s;
  };
  CHECK(moment(0) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(std::abs(moment(1)) <= 1e-13);
  CHECK(moment(2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(moment(4) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(moment(6) == doctest::Approx(15.0).epsilon(1e-12));
  CHECK_THROWS_AS(GaussHermite(0), InvalidArgument);
}

TEST_CASE("filtering cost on the initial value") {
  const FilteringCost c(reference_model());
  const Vec y0 = vec({0, 1, 2}), prior = Vec::Constant(3, 1.0 / 3.0);
  CHECK(c.g(y0, 2, prior) == doctest::Approx(0.5));
  CHECK(c.g(y0, 1, prior) == doctest::Approx(0.0));
}

TEST_CASE("no observation coupling: cost converges to half the terminal variance at first order") {
  // with h = 0 the filter is deterministic, so the time-discretization bias dominates the sampling error
  const Model m(reference_model().A(), Vec::Zero(3), Vec::Constant(3, 1.0 / 3.0), 1.0);
  const Vec F = vec({0, 1, 2});
  const double exact = half_var(marginal_law(m, 1.0), F);
  double bias[2], gap[2];
  for (int r = 0; r < 2; ++r) {
    const Bundle b = make(m, 100 << r, 20000, 41);
    const OdeSolution sol = solve_backward_ode(m, F, Control::constant(b.g, 0.0), b.g);
    const ControlEvaluation ev = evaluate_control(sol, b.e, b.fe);
    const CostBreakdown cb = cost(ev);
    CHECK(cb.total == doctest::Approx(cb.initial_term + cb.running_term));
    bias[r] = cb.total - exact;
    gap[r] = check_martingale(ev).gap.mean;
    CHECK(std::abs(bias[r]) <= b.g.dt() * exact);
    const MeanSE rhs = mean_se(ev.terminal_sq);
    CHECK(std::abs(rhs.mean - exact) <= 3.0 * rhs.se);
  }
  CHECK(bias[0] / bias[1] == doctest::Approx(2.0).epsilon(0.15));
  CHECK(gap[0] / gap[1] == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("constant terminal values are estimated for free") {
  const Model m = reference_model();
  const Bundle b = make(m, 50, 4000, 42);
  const OdeSolution zero = solve_backward_ode(m, Vec::Constant(3, 2.5), Control::constant(b.g, 0.0), b.g);
  const ControlEvaluation ev0 = evaluate_control(zero, b.e, b.fe);
  const CostBreakdown c0 = cost(ev0);
  CHECK(std::abs(c0.total) <= 1e-12);
  for (double t : ev0.terminal_sq) CHECK(t <= 1e-24);

  EvalBuffer buf(3, 16);
  zero.eval(10, b.fe.pi(10, 0), buf);
  CHECK(std::abs(buf.ustar) <= 1e-15);

  const OdeSolution half = solve_backward_ode(m, Vec::Constant(3, 2.5), Control::constant(b.g, 0.5), b.g);
  const ControlEvaluation ev = evaluate_control(half, b.e, b.fe);
  const CostBreakdown c = cost(ev);
  CHECK(c.total > 3.0 * c.std_error);
  const DualityReport r = check_duality(ev, nullptr);
  CHECK(r.terminal_ptilde.pass);
}

TEST_CASE("quadrupling the sample size halves the standard error") {
  const Model m = reference_model();
  const Vec F = vec({0, 1, 2});
  const TimeGrid g(1.0, 50);
  const OdeSolution sol = solve_backward_ode(m, F, Control::constant(g, 0.0), g);
  const Bundle small = make(m, 50, 5000, 43), big = make(m, 50, 20000, 44);
  const double ratio = cost(evaluate_control(sol, small.e, small.fe)).std_error /
                       cost(evaluate_control(sol, big.e, big.fe)).std_error;
  CHECK(ratio == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("duality identity for deterministic controls") {
  const Model m = reference_model();
  const Bundle b = make(m, 100, 20000, 45);
  const Bundle p = make(m, 100, 20000, 46, Measure::P);
  const Vec F = vec({0, 1, 2});
  for (const Control& u : {Control::constant(b.g, 0.0), Control::constant(b.g, 0.5), Control::ramp(b.g, 0.5, -1.0)}) {
    const OdeSolution sol = solve_backward_ode(m, F, u, b.g);
    const ControlEvaluation ev = evaluate_control(sol, b.e, b.fe);
    const ControlEvaluation evp = evaluate_control(sol, p.e, p.fe);
    const DualityReport r = check_duality(ev, &evp);
    CHECK(r.checkpoints.front().diff == 0.0);
    CHECK(r.pass);
  }
  // at t = T with u = 0 the right side is half the variance of F(X_T)
  const OdeSolution zero = solve_backward_ode(m, F, Control::constant(b.g, 0.0), b.g);
  const ControlEvaluation evp = evaluate_control(zero, p.e, p.fe);
  const MeanSE rhs = mean_se(evp.terminal_sq);
  CHECK(std::abs(rhs.mean - half_var(marginal_law(m, 1.0), F)) <= 3.0 * rhs.se);
}

TEST_CASE("value function oracles") {
  const Model m = reference_model();
  const Bundle b = make(m, 100, 20000, 47);
  const ValueFunctionReport c = value_function(m, b.e, b.fe, Vec::Constant(3, 4.0), 60);
  CHECK(std::abs(c.direct.mean) <= 1e-12);
  CHECK(std::abs(c.filter_form.mean) <= 1e-12);
  const Vec zeta = vec({0, 1, 2});
  const ValueFunctionReport v0 = value_function(m, b.e, b.fe, zeta, 0);
  CHECK(v0.filter_form.mean == doctest::Approx(half_var(m.prior(), zeta)).epsilon(1e-12));
  CHECK(std::abs(v0.direct.mean - half_var(m.prior(), zeta)) <= 3.0 * v0.direct.se);
  for (int k : {25, 50, 100}) {
    const ValueFunctionReport r = value_function(m, b.e, b.fe, zeta, k);
    CHECK(r.direct.mean >= -3.0 * r.direct.se);
    CHECK(r.pass);
  }
  CHECK_THROWS_AS(value_function(m, b.e, b.fe, zeta, 101), InvalidArgument);
}

TEST_CASE("evaluation kernel is bit-identical to its serial reference") {
  const Model m = reference_model();
  const Bundle b = make(m, 40, 3000, 48);
  const TerminalCondition F = TerminalCondition::deterministic(vec({0, 1, 2}));
  const RegressionSolution sol = solve_regression(m, F, Control::optimal(), b.e, b.fe);
  const int saved = worker_count();
  set_worker_count(3);
  EvalOptions par, ser;
  ser.parallel = false;
  par.collect_drift_points = ser.collect_drift_points = true;
  const ControlEvaluation a = evaluate_control(sol, b.e, b.fe, par), c = evaluate_control(sol, b.e, b.fe, ser);
  set_worker_count(saved);
  CHECK(a.J == c.J);
  CHECK(a.m_mean == c.m_mean);
  CHECK(a.m_se == c.m_se);
  CHECK(a.dp_cond == c.dp_cond);
  CHECK(a.terminal_sq == c.terminal_sq);
}

TEST_CASE("suboptimal controls cost more than the optimal one") {
  const Model m = reference_model();
  const Bundle b = make(m, 100, 20000, 49);
  const TerminalCondition F = TerminalCondition::deterministic(vec({0, 1, 2}));
  const RegressionSolution opt = solve_regression(m, F, Control::optimal(), b.e, b.fe);
  const RegressionSolution pert = solve_regression(m, F, Control::optimal(0.5), b.e, b.fe);
  const OdeSolution zero = solve_backward_ode(m, F.F, Control::constant(b.g, 0.0), b.g);
  const ControlEvaluation e0 = evaluate_control(opt, b.e, b.fe), e1 = evaluate_control(zero, b.e, b.fe),
                          e2 = evaluate_control(pert, b.e, b.fe);
  const OptimalCostReport r = check_optimal_cost({&e0, &e1, &e2});
  CHECK(r.candidates[0].pass);
  CHECK(r.candidates[1].excess.mean > 3.0 * r.candidates[1].excess.se);
  CHECK(r.candidates[2].excess.mean > 3.0 * r.candidates[2].excess.se);
  const MartingaleReport mo = check_martingale(e0), mp = check_martingale(e2), mz = check_martingale(e1);
  CHECK(mo.is_supermartingale);
  CHECK(mp.is_supermartingale);
  CHECK(mz.is_supermartingale);
  CHECK(mp.gap.mean < -3.0 * mp.gap.se);
}

TEST_CASE("property: lagrangian is nonnegative and scales with sigma") {
  testing::RandomModelSource src(501);
  for (int n = 0; n < testing::kInstances; ++n) {
    const int d = src.dim();
    const Model m = src.model(d);
    const Vec sigma = src.prob(d) * src.uniform(0.1, 5.0), y = src.function(d), v = src.function(d);
    const double u = src.uniform(-2, 2), c = src.uniform(0.1, 10);
    const double l = lagrangian(sigma, y, v, u, m);
    CHECK(l >= 0.0);
    CHECK(lagrangian(c * sigma, y, v, u, m) == doctest::Approx(c * l).epsilon(1e-12));
  }
}
