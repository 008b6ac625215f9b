#include "dfl/bsde.hpp"
#include "dfl/parallel.hpp"
#include "dfl/stats.hpp"
#include "random_instances.hpp"

#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>

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

double rel_err(const Vec& a, const Vec& b) { return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff()); }

}  // namespace

TEST_CASE("optimal control hand values") {
  CHECK(optimal_control(vec({0.5, 0.5}), vec({0, 1}), vec({0, 0}), vec({0, 1})) == doctest::Approx(-0.25));
  // constant h or constant y leaves only -pi(v)
  const Vec pi = vec({0.2, 0.3, 0.5}), v = vec({1, -2, 0.5});
  CHECK(optimal_control(pi, vec({3, -1, 2}), v, Vec::Constant(3, 0.7)) == doctest::Approx(-pair(pi, v)));
  CHECK(optimal_control(pi, Vec::Constant(3, 4.0), v, vec({-1, 0, 1})) == doctest::Approx(-pair(pi, v)));
  CHECK_THROWS_AS(optimal_control(pi, vec({1, 2}), v, v), InvalidArgument);
}

TEST_CASE("backward ODE: terminal value and constants") {
  const Model m = reference_model();
  const TimeGrid g(1.0, 200);
  const Vec F = vec({0, 1, 2});
  const OdeSolution zero = solve_backward_ode(m, F, Control::constant(g, 0.0), g);
  CHECK(zero.y(200) == F);
  for (int k : {0, 50, 199}) CHECK(rel_err(zero.y(k), (m.A() * (1.0 - g.t(k))).exp() * F) <= 1e-8);
  const OdeSolution ones = solve_backward_ode(m, Vec::Ones(3), Control::constant(g, 0.0), g);
  for (int k = 0; k <= 200; ++k) CHECK((ones.y(k) - Vec::Ones(3)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("backward ODE: variation of constants oracle") {
  const Model m(two_state_A(), vec({0, 1}), vec({0.5, 0.5}), 1.0);
  const TimeGrid g(1.0, 200);
  const OdeSolution s = solve_backward_ode(m, Vec::Zero(2), Control::constant(g, 1.0), g);
  // integral of exp(A s) h over [0, 1] from the augmented exponential
  Mat aug = Mat::Zero(3, 3);
  aug.topLeftCorner(2, 2) = m.A();
  aug.topRightCorner(2, 1) = m.h();
  const Vec oracle = aug.exp().topRightCorner(2, 1);
  CHECK(rel_err(s.y(0), oracle) <= 1e-8);
}

TEST_CASE("backward ODE rejects bad input") {
  const Model m = reference_model();
  const TimeGrid g(1.0, 10);
  CHECK_THROWS_AS(solve_backward_ode(m, vec({1, 2}), Control::constant(g, 0.0), g), InvalidArgument);
  CHECK_THROWS_AS(solve_backward_ode(m, vec({1, 2, 3}), Control::optimal(), g), InvalidArgument);
  CHECK_THROWS_AS(solve_backward_ode(m, vec({1, 2, 3}), Control::deterministic({1.0, 2.0}), g), InvalidArgument);
}

TEST_CASE("S process") {
  const std::vector<double> z{0.0, 0.1, 0.3}, zero(3, 0.0), u{2.0, 1.0, 0.0};
  const Vec prior = vec({0.5, 0.5}), y0 = vec({0, 1});
  const auto s0 = s_process(y0, prior, zero, z);
  CHECK(s0 == std::vector<double>{0.5, 0.5, 0.5});
  const auto s = s_process(y0, prior, u, z);
  CHECK(s[1] == doctest::Approx(0.3));
  CHECK(s[2] == doctest::Approx(0.1));
}

TEST_CASE("monomial basis") {
  CHECK(n_monomials(2, 2) == 6);
  CHECK(n_monomials(1, 3) == 4);
  CHECK(n_monomials(4, 0) == 1);
  const double s[2] = {2.0, 3.0};
  double out[6];
  eval_monomials(2, 2, s, out);
  CHECK(std::vector<double>(out, out + 6) == std::vector<double>{1, 2, 3, 4, 6, 9});
}

TEST_CASE("regression matches the backward ODE on the deterministic case") {
  const Model m = reference_model();
  const TimeGrid g(1.0, 200);
  const Ensemble e = simulate_ensemble(m, g, 10000, 3, Measure::Ptilde);
  const FilterEnsemble fe = run_filter_ensemble(m, e);
  const Control u = Control::ramp(g, 0.5, -1.0);
  const Vec F = vec({0, 1, 2});
  const RegressionSolution reg = solve_regression(m, TerminalCondition::deterministic(F), u, e, fe);
  const OdeSolution ode = solve_backward_ode(m, F, u, g);
  const double err = solution_distance(reg, ode, fe);
  // calibration constant of the N^{-1/2} term: the error budget left after the dt part
  const double c = std::max(0.0, err / 5.0 - g.dt()) * std::sqrt(double(e.size()));
  MESSAGE("max-norm error " << err << ", calibration constant c = " << c);
  CHECK(err <= 5.0 * (g.dt() + 1.0 / std::sqrt(double(e.size()))));
  const RepresentationCheck rc = representation_check(reg, e, fe);
  CHECK(rc.rms_mismatch <= 3.0 * rc.residual_scale + 1e-12);
}

TEST_CASE("zero driver with a deterministic terminal keeps Y constant and V null") {
  const Model m(Mat::Zero(3, 3), Vec::Zero(3), Vec::Constant(3, 1.0 / 3.0), 1.0);
  const TimeGrid g(1.0, 50);
  const Ensemble e = simulate_ensemble(m, g, 2000, 4, Measure::Ptilde);
  const FilterEnsemble fe = run_filter_ensemble(m, e);
  const Vec F = vec({1, -1, 3});
  const RegressionSolution reg =
      solve_regression(m, TerminalCondition::deterministic(F), Control::constant(g, 0.0), e, fe);
  EvalBuffer b(3, 16);
  for (int k : {0, 10, 49})
    for (int i : {0, 999}) {
      reg.eval(k, fe.pi(k, i), b);
      for (int x = 0; x < 3; ++x) {
        CHECK(b.Y[x] == doctest::Approx(F(x)).epsilon(1e-12));
        CHECK(std::abs(b.V[x]) <= 1e-12);
      }
    }
}

TEST_CASE("observation-linear terminal under a zero driver has V equal to G on average") {
  Vec h(2);
  h << 0, 1;
  const Model m(Mat::Zero(2, 2), h, vec({0.5, 0.5}), 1.0);
  const TimeGrid g(1.0, 50);
  const Ensemble e = simulate_ensemble(m, g, 20000, 6, Measure::Ptilde);
  const FilterEnsemble fe = run_filter_ensemble(m, e);
  const Vec F = vec({1, 2}), G = vec({0.5, -1});
  const RegressionSolution reg =
      solve_regression(m, TerminalCondition::observation_linear(F, G), Control::constant(g, 0.0), e, fe);
  // with A = 0 and u = 0 only h v enters the driver; Y_k = E[xi | Z_k] - h V dt
  EvalBuffer b(2, 16);
  std::vector<double> v0(e.size()), v1(e.size());
  const int k = 25;
  for (int i = 0; i < e.size(); ++i) {
    reg.eval(k, fe.pi(k, i), b);
    v0[i] = b.V[0];
    v1[i] = b.V[1];
  }
  CHECK(mean_se(v0).mean == doctest::Approx(G(0)).epsilon(0.05));
  CHECK(mean_se(v1).mean == doctest::Approx(G(1)).epsilon(0.05));
  const RepresentationCheck rc = representation_check(reg, e, fe);
  CHECK(rc.rms_mismatch <= 3.0 * rc.residual_scale);
}

TEST_CASE("regression input validation and diagnostics") {
  const Model m = reference_model();
  const TimeGrid g(1.0, 20);
  const Ensemble small = simulate_ensemble(m, g, 500, 1, Measure::Ptilde);
  const FilterEnsemble fs = run_filter_ensemble(m, small);
  const TerminalCondition F = TerminalCondition::deterministic(vec({0, 1, 2}));
  CHECK_THROWS_AS(solve_regression(m, F, Control::optimal(), small, fs), InvalidArgument);
  const Ensemble underP = simulate_ensemble(m, g, 1000, 1, Measure::P);
  CHECK_THROWS_AS(solve_regression(m, F, Control::optimal(), underP, run_filter_ensemble(m, underP)),
                  InvalidArgument);

  const Ensemble e = simulate_ensemble(m, g, 2000, 2, Measure::Ptilde);
  const FilterEnsemble fe = run_filter_ensemble(m, e);
  RegressionOptions o;
  o.picard_iterations = 3;
  const RegressionSolution reg = solve_regression(m, F, Control::optimal(), e, fe, o);
  CHECK(reg.fits()[0].degree == 0);
  CHECK(!reg.warnings().empty());
  for (const auto& f : reg.fits()) {
    CHECK(std::isfinite(f.picard_residual));
    CHECK(f.r2 <= 1.0 + 1e-12);
  }
}

TEST_CASE("regression is independent of the worker count") {
  const Model m = reference_model();
  const TimeGrid g(1.0, 20);
  const Ensemble e = simulate_ensemble(m, g, 3000, 9, Measure::Ptilde);
  const FilterEnsemble fe = run_filter_ensemble(m, e);
  const TerminalCondition F = TerminalCondition::deterministic(vec({0, 1, 2}));
  const int saved = worker_count();
  set_worker_count(1);
  const RegressionSolution a = solve_regression(m, F, Control::optimal(0.5), e, fe);
  set_worker_count(3);
  const RegressionSolution b = solve_regression(m, F, Control::optimal(0.5), e, fe);
  set_worker_count(saved);
  for (int k = 0; k < g.n_steps; ++k) {
    CHECK(a.fits()[k].bE == b.fits()[k].bE);
    CHECK(a.fits()[k].bV == b.fits()[k].bV);
  }
}

TEST_CASE("property: backward ODE is affine in the control") {
  testing::RandomModelSource src(401);
  for (int n = 0; n < testing::kInstances; ++n) {
    const int d = src.dim();
    const Model m = src.model(d);
    const TimeGrid g(1.0, 20);
    const Vec F = src.function(d);
    std::vector<double> u1(g.points()), u2(g.points()), mix(g.points());
    const double a = src.uniform(-1.0, 2.0);
    for (int k = 0; k < g.points(); ++k) {
      u1[k] = src.uniform(-1, 1);
      u2[k] = src.uniform(-1, 1);
      mix[k] = a * u1[k] + (1 - a) * u2[k];
    }
    const OdeSolution s1 = solve_backward_ode(m, F, Control::deterministic(u1), g);
    const OdeSolution s2 = solve_backward_ode(m, F, Control::deterministic(u2), g);
    const OdeSolution sm = solve_backward_ode(m, F, Control::deterministic(mix), g);
    double worst = 0.0, scale = 1.0;
    for (int k = 0; k < g.points(); ++k) {
      worst = std::max(worst, (sm.y(k) - (a * s1.y(k) + (1 - a) * s2.y(k))).cwiseAbs().maxCoeff());
      scale = std::max(scale, s1.y(k).cwiseAbs().maxCoeff() + s2.y(k).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-12 * scale * (1 + std::abs(a)));
  }
}

TEST_CASE("property: optimal control ignores constant shifts of y") {
  testing::RandomModelSource src(402);
  for (int n = 0; n < testing::kInstances; ++n) {
    const int d = src.dim();
    const Vec pi = src.prob(d), y = src.function(d), v = src.function(d), h = src.function(d);
    const double c = src.uniform(-10, 10);
    const double a = optimal_control(pi, y, v, h), b = optimal_control(pi, y + Vec::Constant(d, c), v, h);
    CHECK(std::abs(a - b) <= 1e-12 * (1 + std::abs(c)) * 10);
  }
}
