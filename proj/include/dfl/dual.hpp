#pragma once

#include "dfl/bsde.hpp"
#include "dfl/filter.hpp"
#include "dfl/model.hpp"
#include "dfl/pathsim.hpp"
#include "dfl/stats.hpp"

#include <string>
#include <vector>

namespace dfl {

// l = sigma(Gamma(y))/2 + sigma((u + v)^2)/2
double lagrangian(const Vec& sigma, const Vec& y, const Vec& v, double u, const Model& m);

// Generic cost: terminal cost g on the initial value plus a running Lagrangian.
struct CostFunctional {
  virtual ~CostFunctional() = default;
  virtual double g(const Vec& y0, int x0, const Vec& prior) const = 0;
  virtual double running(const Vec& sigma, const Vec& y, const Vec& v, double u) const = 0;
};

struct FilteringCost final : CostFunctional {
  explicit FilteringCost(const Model& m) : model(m) {}
  double g(const Vec& y0, int x0, const Vec& prior) const override;
  double running(const Vec& sigma, const Vec& y, const Vec& v, double u) const override {
    return lagrangian(sigma, y, v, u, model);
  }
  Model model;
};

// Probabilists' Gauss-Hermite rule: sum_q w_q f(x_q) ~ E f(xi), xi ~ N(0,1).
struct GaussHermite {
  explicit GaussHermite(int q);
  std::vector<double> nodes, weights;
};

// Exact one-step running cost of the discrete system:
//   L_k = ( E_k[ sigma_{k+1}((Y_{k+1} + U_k dz)^2) ] - sigma_k(Y_k^2) ) / 2,
// with the conditional expectation over dz ~ N(0, dt) taken by Gauss-Hermite. It tends to l dt.
struct EvalOptions {
  int quadrature_nodes = 10;
  std::vector<int> checkpoints;  // grid indices; empty means {0, n/4, n/2, 3n/4, n}
  bool collect_drift_points = false;
  bool parallel = true;
};

// Everything the checks need from one (solution, ensemble) pair. Per-path vectors have N entries.
struct ControlEvaluation {
  std::string label;
  Measure measure = Measure::Ptilde;
  double dt = 0.0;
  std::vector<int> checkpoints;
  double initial_exact = 0.0;               // Var_mu(Y_0)/2
  std::vector<double> initial_sampled;      // (Y_0(X_0) - mu(Y_0))^2 / 2
  std::vector<double> running;              // sum_k L_k
  std::vector<double> running_rect;         // sum_k l_k dt, left rectangles
  std::vector<double> J;                    // initial_sampled + running
  std::vector<std::vector<double>> rhs;     // per checkpoint: D_t (Y_t(X_t) - S_t)^2 / 2 + sum_{k>=j} L_k
  std::vector<std::vector<double>> rhs_rect;
  std::vector<std::vector<double>> M_at;    // per checkpoint: M_t per path
  std::vector<double> terminal_sq;          // D_T (F(X_T) - S_T)^2 / 2 (D = 1 under P)
  std::vector<double> benchmark_sq;         // D_T (F(X_T) - pi_T(F))^2 / 2
  std::vector<double> t, m_mean, m_se, drift_pred, drift_obs, drift_cond, s_mean;  // per grid index
  std::vector<double> dp_pred, dp_cond, dp_raw;  // per (path, step), when collected
};

ControlEvaluation evaluate_control(const BsdeSolution& sol, const Ensemble& e, const FilterEnsemble& fe,
                                   const EvalOptions& o = {});

struct CostBreakdown {
  double initial_term = 0.0, initial_exact = 0.0, running_term = 0.0, running_rect = 0.0, total = 0.0;
  double std_error = 0.0;
  MeanSE initial_agreement;  // sampled minus filter form
};
CostBreakdown cost(const ControlEvaluation& ev);

struct Comparison {
  std::string name;
  double lhs = 0.0, rhs = 0.0, diff = 0.0, se = 0.0, tol = 0.0;
  bool pass = false;
};

struct DualityReport {
  std::vector<Comparison> checkpoints;  // J against the cost-to-go at each checkpoint
  std::vector<Comparison> rect_checkpoints;  // same with the left-rectangle Lagrangian
  Comparison terminal_ptilde;           // J against the D-weighted terminal form
  Comparison terminal_p;                // J against the plain-P terminal form
  Comparison forms;                     // the two terminal forms against each other
  double allowance = 0.0;
  bool pass = false;
};

// allowance = allowance_coef * dt * |J|
DualityReport check_duality(const ControlEvaluation& ptilde, const ControlEvaluation* p,
                            double allowance_coef = 0.05);

struct MartingaleReport {
  std::vector<Comparison> increments;  // E[M_t] - E[M_0] per checkpoint
  double max_abs_over_se = 0.0;
  bool is_martingale = false;
  bool is_supermartingale = false;
  MeanSE gap;                          // E[M_T] - E[M_0]
  double predicted_gap = 0.0;          // integrated -s (U - U*)^2 / 2
};
MartingaleReport check_martingale(const ControlEvaluation& ev);

struct DriftReport {
  LinearFit conditional;  // E_k[dM] on predictor
  LinearFit raw;          // dM on predictor
  double slope_bias = 0.0;
  bool pass = false;
};
DriftReport check_drift_identity(const ControlEvaluation& ev);

struct CandidateCost {
  std::string label;
  MeanSE J;
  MeanSE excess;           // J - benchmark, paired
  double predicted_gap = 0.0;
  bool pass = false;
};

struct OptimalCostReport {
  MeanSE benchmark;
  std::vector<CandidateCost> candidates;  // first is the optimal control
  bool pass = false;
};
// evs[0] must be the optimal control; all evaluations share one P-tilde ensemble.
OptimalCostReport check_optimal_cost(const std::vector<const ControlEvaluation*>& evs);

struct ValueFunctionReport {
  MeanSE direct, filter_form, diff;
  bool pass = false;
};
ValueFunctionReport value_function(const Model& m, const Ensemble& e, const FilterEnsemble& fe, const Vec& zeta,
                                   int k);

}  // namespace dfl
