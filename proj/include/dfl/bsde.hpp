#pragma once

#include "dfl/filter.hpp"
#include "dfl/model.hpp"
#include "dfl/pathsim.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dfl {

// -(pi(hy) - pi(h)pi(y)) - pi(v)
double optimal_control(const Vec& pi, const Vec& y, const Vec& v, const Vec& h);
double optimal_control(int d, const double* pi, const double* y, const double* v, const double* h);

struct Control {
  enum class Kind { deterministic, feedback, optimal };
  using Rule = std::function<double(double t, std::span<const double> pi, std::span<const double> y,
                                    std::span<const double> v)>;

  Kind kind = Kind::deterministic;
  std::vector<double> u;  // deterministic: one value per grid point
  Rule rule;              // feedback
  double offset = 0.0;    // optimal: closed-form law plus a constant
  std::string label;

  static Control deterministic(std::vector<double> u, std::string label = "table");
  static Control constant(const TimeGrid& g, double c);
  static Control ramp(const TimeGrid& g, double intercept, double slope);
  static Control optimal(double offset = 0.0);
  static Control feedback(Rule r, std::string label);

  bool is_deterministic() const { return kind == Kind::deterministic; }
  double value(int k, double t, int d, const double* pi, const double* y, const double* v, const double* h) const;
};

struct TerminalCondition {
  enum class Kind { deterministic, path_functional };
  using Functional = std::function<void(std::span<const double> z, double* out)>;

  Kind kind = Kind::deterministic;
  Vec F;
  Functional functional;
  std::string label;

  static TerminalCondition deterministic(Vec F);
  // F + G * z_T
  static TerminalCondition observation_linear(Vec F, Vec G);

  bool is_deterministic() const { return kind == Kind::deterministic; }
  void value(std::span<const double> z, double* out) const;
};

// Forward-form driver: dY = f(Y, V, U, t) dt + V dZ.
struct Driver {
  virtual ~Driver() = default;
  virtual void f(int d, const double* y, const double* v, double u, double t, double* out) const = 0;
};

// f = -(A y + h (u + v))
struct FilteringDriver final : Driver {
  explicit FilteringDriver(const Model& m) : A(m.A()), h(m.h()) {}
  void f(int d, const double* y, const double* v, double u, double t, double* out) const override;
  Mat A;
  Vec h;
};

// Scratch for one evaluation; one per thread.
struct EvalBuffer {
  explicit EvalBuffer(int d, int p = 16) : E(d), V(d), Y(d), Yp(d), f(d), phi(p) {}
  std::vector<double> E, V, Y, Yp, f, phi;
  double U = 0.0, ustar = 0.0, picard_residual = 0.0;
};

enum class SolverKind { backward_ode, regression };

// (Y, V, U) at grid index k < n as a function of the filter state.
class BsdeSolution {
 public:
  BsdeSolution(const Model& m, TimeGrid g, Control c, TerminalCondition term)
      : model_(m), grid_(g), control_(std::move(c)), terminal_(std::move(term)) {}
  virtual ~BsdeSolution() = default;

  virtual SolverKind solver() const = 0;
  virtual void eval(int k, const double* pi, EvalBuffer& b) const = 0;

  const Model& model() const { return model_; }
  const TimeGrid& grid() const { return grid_; }
  const Control& control() const { return control_; }
  const TerminalCondition& terminal() const { return terminal_; }

 protected:
  Model model_;
  TimeGrid grid_;
  Control control_;
  TerminalCondition terminal_;
};

class OdeSolution final : public BsdeSolution {
 public:
  OdeSolution(const Model& m, TimeGrid g, Control c, TerminalCondition term, std::vector<Vec> y)
      : BsdeSolution(m, g, std::move(c), std::move(term)), y_(std::move(y)) {}
  SolverKind solver() const override { return SolverKind::backward_ode; }
  void eval(int k, const double* pi, EvalBuffer& b) const override;
  const Vec& y(int k) const { return y_.at(k); }

 private:
  std::vector<Vec> y_;
};

// -dY/dt = A Y + h u, Y_T = F, by RK4 with u linear between grid points.
OdeSolution solve_backward_ode(const Model& m, const Vec& F, const Control& u, const TimeGrid& g);

enum class VEstimator { demeaned, plain };

struct RegressionOptions {
  int basis_degree = 2;
  // Feedback laws see the one-step predictor E_k when 0; n > 0 runs n Picard sweeps on Y_k.
  int picard_iterations = 0;
  VEstimator v_estimator = VEstimator::demeaned;
  double max_condition = 1e10;
  int min_paths = 1000;
};

struct StepFit {
  int degree = 0;
  int n_features = 1;
  std::vector<double> mean, scale;  // standardization of pi_1..pi_{d-1}
  Mat bE, bV;                       // n_features x d
  double r2 = 1.0;                  // fit of Y_{k+1} on features
  double residual_ms = 0.0;         // mean |Y_{k+1} - E_k - V_k dz|^2
  double condition = 1.0;
  double picard_residual = 0.0;     // max over paths
};

class RegressionSolution final : public BsdeSolution {
 public:
  RegressionSolution(const Model& m, TimeGrid g, Control c, TerminalCondition term, RegressionOptions o,
                     std::shared_ptr<const Driver> drv)
      : BsdeSolution(m, g, std::move(c), std::move(term)), opts_(o), driver_(std::move(drv)), fits_(g.n_steps) {}

  SolverKind solver() const override { return SolverKind::regression; }
  void eval(int k, const double* pi, EvalBuffer& b) const override;

  const RegressionOptions& options() const { return opts_; }
  const std::vector<StepFit>& fits() const { return fits_; }
  std::vector<StepFit>& fits() { return fits_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  std::vector<std::string>& warnings() { return warnings_; }
  int max_features() const;

 private:
  RegressionOptions opts_;
  std::shared_ptr<const Driver> driver_;
  std::vector<StepFit> fits_;
  std::vector<std::string> warnings_;
};

// Number of monomials of total degree <= deg in m variables.
int n_monomials(int m, int deg);
// Monomials ordered by degree, so a lower-degree basis is a prefix.
void eval_monomials(int m, int deg, const double* s, double* out);

RegressionSolution solve_regression(const Model& m, const TerminalCondition& term, const Control& c,
                                    const Ensemble& e, const FilterEnsemble& fe, RegressionOptions o = {});

// Terminal value on path i of an ensemble.
Vec terminal_value(const TerminalCondition& term, const Ensemble& e, int i);

// s(k) = mu(y0) - sum_{j<k} u_j dz_j
std::vector<double> s_process(const Vec& y0, const Vec& prior, std::span<const double> u, std::span<const double> z);

// Per-grid materialization of the solution along one path.
struct BsdePath {
  std::vector<Vec> y, v;
  std::vector<double> u, s;
};
BsdePath materialize(const BsdeSolution& sol, const Ensemble& e, const FilterEnsemble& fe, int i);

struct RepresentationCheck {
  double rms_mismatch = 0.0;  // RMS of |xi - (Y_0 + sum V dz + sum f dt)|
  double residual_scale = 0.0;  // sqrt(sum_k mean |per-step residual|^2)
  double ratio() const { return residual_scale > 0 ? rms_mismatch / residual_scale : (rms_mismatch > 0 ? INFINITY : 0.0); }
};
RepresentationCheck representation_check(const RegressionSolution& sol, const Ensemble& e, const FilterEnsemble& fe);

// max_k max_x RMS over paths of Y^reg_k(x) - Y^ref_k(x); reference is any other solution.
double solution_distance(const BsdeSolution& a, const BsdeSolution& b, const FilterEnsemble& fe);

}  // namespace dfl
