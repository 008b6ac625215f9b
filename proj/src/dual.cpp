#include "dfl/dual.hpp"

#include "dfl/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace dfl {

double lagrangian(const Vec& sigma, const Vec& y, const Vec& v, double u, const Model& m) {
  if (sigma.size() != m.d() || y.size() != m.d() || v.size() != m.d())
    throw InvalidArgument("lagrangian: dimension mismatch");
  const Vec uv = (v.array() + u).matrix();
  return 0.5 * pair(sigma, carre_du_champ(m.A(), y)) + 0.5 * pair(sigma, hadamard(uv, uv));
}

double FilteringCost::g(const Vec& y0, int x0, const Vec& prior) const {
  const double r = y0(x0) - pair(prior, y0);
  return 0.5 * r * r;
}

GaussHermite::GaussHermite(int q) {
  if (q < 1 || q > 64) throw InvalidArgument("GaussHermite: node count must be in 1..64");
  // Golub-Welsch on the Jacobi matrix of the monic probabilists' Hermite recurrence
  Mat J = Mat::Zero(q, q);
  for (int i = 1; i < q; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(double(i));
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  nodes.resize(q);
  weights.resize(q);
  for (int i = 0; i < q; ++i) {
    nodes[i] = es.eigenvalues()(i);
    weights[i] = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
  }
}

namespace {

constexpr int kMaxD = 64;

std::vector<int> default_checkpoints(int n) { return {0, n / 4, n / 2, (3 * n) / 4, n}; }

double variance_under(int d, const double* pi, const double* y) {
  double a = 0, b = 0;
  for (int x = 0; x < d; ++x) {
    a += pi[x] * y[x];
    b += pi[x] * y[x] * y[x];
  }
  return std::max(0.0, b - a * a);
}

struct PathState {
  std::vector<double> S, cum, cum_rect;
};

}  // namespace

ControlEvaluation evaluate_control(const BsdeSolution& sol, const Ensemble& e, const FilterEnsemble& fe,
                                   const EvalOptions& o) {
  const Model& mdl = sol.model();
  const int N = e.size(), n = e.grid().n_steps, d = mdl.d();
  if (d > kMaxD) throw InvalidArgument("evaluate_control: d exceeds " + std::to_string(kMaxD));
  if (fe.size() != N || fe.grid().n_steps != n || sol.grid().n_steps != n)
    throw InvalidArgument("evaluate_control: ensemble, filter and solution grids differ");
  const double dt = e.grid().dt(), sdt = std::sqrt(dt);
  const GaussHermite gh(o.quadrature_nodes);
  const int Q = o.quadrature_nodes;
  const bool weighted = e.measure() == Measure::Ptilde;

  ControlEvaluation ev;
  ev.label = sol.control().label;
  ev.measure = e.measure();
  ev.dt = dt;
  ev.checkpoints = o.checkpoints.empty() ? default_checkpoints(n) : o.checkpoints;
  const int C = int(ev.checkpoints.size());
  ev.initial_sampled.resize(N);
  ev.running.resize(N);
  ev.running_rect.resize(N);
  ev.J.resize(N);
  ev.rhs.assign(C, std::vector<double>(N));
  ev.rhs_rect.assign(C, std::vector<double>(N));
  ev.M_at.assign(C, std::vector<double>(N));
  ev.terminal_sq.resize(N);
  ev.benchmark_sq.resize(N);
  ev.t.resize(n + 1);
  ev.m_mean.resize(n + 1);
  ev.m_se.resize(n + 1);
  ev.s_mean.resize(n + 1);
  ev.drift_pred.assign(n + 1, 0.0);
  ev.drift_obs.assign(n + 1, 0.0);
  ev.drift_cond.assign(n + 1, 0.0);
  if (o.collect_drift_points) {
    ev.dp_pred.resize(std::size_t(N) * n);
    ev.dp_cond.resize(std::size_t(N) * n);
    ev.dp_raw.resize(std::size_t(N) * n);
  }

  PathState ps{std::vector<double>(N), std::vector<double>(N, 0.0), std::vector<double>(N, 0.0)};
  // per-checkpoint D-weighted dual term and cumulative cost at that checkpoint
  std::vector<std::vector<double>> dual_at(C, std::vector<double>(N)), cum_at(C, std::vector<double>(N)),
      cumr_at(C, std::vector<double>(N));
  std::vector<double> mk(N), pred(N), cond(N), sk(N);
  const int pmax = 64;
  std::vector<EvalBuffer> bufs(worker_count(), EvalBuffer(d, pmax));
  std::vector<std::vector<double>> zbuf(worker_count(), std::vector<double>(n + 1));
  const Mat& A = mdl.A();

  for (int k = 0; k <= n; ++k) {
    ev.t[k] = e.grid().t(k);
    const auto cp = std::find(ev.checkpoints.begin(), ev.checkpoints.end(), k);
    const int ci = cp == ev.checkpoints.end() ? -1 : int(cp - ev.checkpoints.begin());

    parallel_for(
        N,
        [&](int i) {
          EvalBuffer& b = bufs[thread_index()];
          const double* pi = fe.pi(k, i);
          const double mass = std::exp(fe.log_mass(k, i));
          double Y[kMaxD], V[kMaxD];
          double U = 0.0, ustar = 0.0;
          if (k < n) {
            sol.eval(k, pi, b);
            std::copy(b.Y.begin(), b.Y.end(), Y);
            std::copy(b.V.begin(), b.V.end(), V);
            U = b.U;
            ustar = b.ustar;
          } else {
            sol.terminal().value(e.z_path(i), Y);
            std::fill(V, V + d, 0.0);
          }
          if (k == 0) {
            double s0 = 0.0;
            for (int x = 0; x < d; ++x) s0 += mdl.prior()(x) * Y[x];
            ps.S[i] = s0;
            const double r = Y[e.x(i, 0)] - s0;
            ev.initial_sampled[i] = 0.5 * r * r;
          }
          const double value = 0.5 * mass * variance_under(d, pi, Y);
          const double w = weighted ? std::exp(e.log_d(i, k)) : 1.0;
          const double r = Y[e.x(i, k)] - ps.S[i];
          if (ci >= 0) {
            dual_at[ci][i] = 0.5 * w * r * r;
            cum_at[ci][i] = ps.cum[i];
            cumr_at[ci][i] = ps.cum_rect[i];
          }
          mk[i] = value - ps.cum[i];
          sk[i] = ps.S[i];
          if (k == n) {
            ev.terminal_sq[i] = 0.5 * w * r * r;
            double piF = 0.0;
            for (int x = 0; x < d; ++x) piF += pi[x] * Y[x];
            const double rb = Y[e.x(i, k)] - piF;
            ev.benchmark_sq[i] = 0.5 * w * rb * rb;
            return;
          }

          // left-rectangle continuous Lagrangian
          double gam = 0.0, uv = 0.0;
          for (int x = 0; x < d; ++x) {
            double g = 0.0;
            for (int j = 0; j < d; ++j)
              if (j != x) g += A(x, j) * (Y[x] - Y[j]) * (Y[x] - Y[j]);
            gam += pi[x] * g;
            uv += pi[x] * (U + V[x]) * (U + V[x]);
          }
          const double lrect = 0.5 * mass * (gam + uv) * dt;

          // one-step conditional expectations over dz
          double sy2 = 0.0;
          for (int x = 0; x < d; ++x) sy2 += pi[x] * Y[x] * Y[x];
          double next_sq = 0.0, next_val = 0.0;
          double pin[kMaxD], Yn[kMaxD];
          int clamps = 0;
          std::vector<double>& zb = zbuf[thread_index()];
          const bool path_terminal = k + 1 == n && !sol.terminal().is_deterministic();
          if (path_terminal) {
            auto zp = e.z_path(i);
            std::copy(zp.begin(), zp.end(), zb.begin());
          }
          for (int q = 0; q < Q; ++q) {
            const double dz = gh.nodes[q] * sdt;
            const double ratio = zakai_step(mdl, pi, dz, dt, pin, clamps, k + 1);
            if (k + 1 < n) {
              sol.eval(k + 1, pin, b);
              std::copy(b.Y.begin(), b.Y.end(), Yn);
            } else if (path_terminal) {
              zb[n] = zb[n - 1] + dz;
              sol.terminal().value(zb, Yn);
            } else {
              sol.terminal().value(e.z_path(i), Yn);
            }
            double acc = 0.0;
            for (int x = 0; x < d; ++x) acc += pin[x] * (Yn[x] + U * dz) * (Yn[x] + U * dz);
            next_sq += gh.weights[q] * mass * ratio * acc;
            next_val += gh.weights[q] * 0.5 * mass * ratio * variance_under(d, pin, Yn);
          }
          const double L = 0.5 * (next_sq - mass * sy2);
          pred[i] = -0.5 * mass * (U - ustar) * (U - ustar) * dt;
          cond[i] = next_val - value - L;
          if (o.collect_drift_points) {
            const std::size_t idx = std::size_t(k) * N + i;
            ev.dp_pred[idx] = pred[i];
            ev.dp_cond[idx] = cond[i];
          }
          ps.S[i] -= U * e.dz(i, k);
          ps.cum[i] += L;
          ps.cum_rect[i] += lrect;
        },
        o.parallel);

    const MeanSE ms = mean_se(mk);
    ev.m_mean[k] = ms.mean;
    ev.m_se[k] = ms.se;
    ev.s_mean[k] = mean_se(sk).mean;
    if (o.collect_drift_points && k > 0) {
      // raw increment of M over step k-1: mk now holds M_k
      for (int i = 0; i < N; ++i) {
        const std::size_t idx = std::size_t(k - 1) * N + i;
        ev.dp_raw[idx] = mk[i] - ev.dp_raw[idx];
      }
    }
    if (o.collect_drift_points && k < n)
      for (int i = 0; i < N; ++i) ev.dp_raw[std::size_t(k) * N + i] = mk[i];
    if (ci >= 0) ev.M_at[ci] = mk;
    if (k < n) {
      ev.drift_pred[k] = mean_se(pred).mean / dt;
      ev.drift_cond[k] = mean_se(cond).mean / dt;
    }
  }
  for (int k = 0; k < n; ++k) ev.drift_obs[k] = (ev.m_mean[k + 1] - ev.m_mean[k]) / dt;

  double init_exact = 0.0;
  {
    EvalBuffer b(d, pmax);
    sol.eval(0, fe.pi(0, 0), b);
    init_exact = 0.5 * variance_under(d, mdl.prior().data(), b.Y.data());
  }
  ev.initial_exact = init_exact;
  for (int i = 0; i < N; ++i) {
    ev.running[i] = ps.cum[i];
    ev.running_rect[i] = ps.cum_rect[i];
    ev.J[i] = ev.initial_sampled[i] + ps.cum[i];
    for (int c = 0; c < C; ++c) {
      ev.rhs[c][i] = dual_at[c][i] + (ps.cum[i] - cum_at[c][i]);
      ev.rhs_rect[c][i] = dual_at[c][i] + (ps.cum_rect[i] - cumr_at[c][i]);
    }
  }
  return ev;
}

CostBreakdown cost(const ControlEvaluation& ev) {
  CostBreakdown c;
  c.initial_term = mean_se(ev.initial_sampled).mean;
  c.initial_exact = ev.initial_exact;
  c.running_term = mean_se(ev.running).mean;
  c.running_rect = mean_se(ev.running_rect).mean;
  const MeanSE j = mean_se(ev.J);
  c.total = c.initial_term + c.running_term;
  c.std_error = j.se;
  std::vector<double> ex(ev.initial_sampled.size(), ev.initial_exact);
  c.initial_agreement = paired_diff(ev.initial_sampled, ex);
  return c;
}

namespace {

Comparison compare_paired(const std::string& name, const std::vector<double>& a, const std::vector<double>& b,
                          double allowance) {
  Comparison c;
  c.name = name;
  c.lhs = mean_se(a).mean;
  c.rhs = mean_se(b).mean;
  const MeanSE d = paired_diff(a, b);
  c.diff = d.mean;
  c.se = d.se;
  c.tol = 3.0 * d.se + allowance;
  c.pass = std::abs(c.diff) <= c.tol;
  return c;
}

Comparison compare_independent(const std::string& name, const std::vector<double>& a, const std::vector<double>& b,
                               double allowance) {
  Comparison c;
  c.name = name;
  const MeanSE ma = mean_se(a), mb = mean_se(b);
  c.lhs = ma.mean;
  c.rhs = mb.mean;
  c.diff = ma.mean - mb.mean;
  c.se = std::sqrt(ma.se * ma.se + mb.se * mb.se);
  c.tol = 3.0 * c.se + allowance;
  c.pass = std::abs(c.diff) <= c.tol;
  return c;
}

std::string cp_name(const ControlEvaluation& ev, int c) {
  return "t=" + std::to_string(ev.t[ev.checkpoints[c]]);
}

}  // namespace

DualityReport check_duality(const ControlEvaluation& pt, const ControlEvaluation* p, double allowance_coef) {
  DualityReport r;
  const double J = std::abs(mean_se(pt.J).mean);
  r.allowance = allowance_coef * pt.dt * J;
  r.pass = true;
  for (std::size_t c = 0; c < pt.checkpoints.size(); ++c) {
    r.checkpoints.push_back(compare_paired(cp_name(pt, int(c)), pt.J, pt.rhs[c], r.allowance));
    r.pass = r.pass && r.checkpoints.back().pass;
    // the rectangle rule enters J as well, so both sides use it
    std::vector<double> Jr(pt.J.size());
    for (std::size_t i = 0; i < Jr.size(); ++i) Jr[i] = pt.initial_sampled[i] + pt.running_rect[i];
    r.rect_checkpoints.push_back(compare_paired(cp_name(pt, int(c)), Jr, pt.rhs_rect[c], r.allowance));
  }
  r.terminal_ptilde = compare_paired("terminal D-weighted", pt.J, pt.terminal_sq, r.allowance);
  r.pass = r.pass && r.terminal_ptilde.pass;
  if (p) {
    r.terminal_p = compare_independent("terminal plain-P", pt.J, p->terminal_sq, r.allowance);
    r.forms = compare_independent("terminal forms", pt.terminal_sq, p->terminal_sq, 0.0);
    r.pass = r.pass && r.terminal_p.pass && r.forms.pass;
  }
  return r;
}

MartingaleReport check_martingale(const ControlEvaluation& ev) {
  MartingaleReport r;
  const int C = int(ev.checkpoints.size());
  r.is_martingale = true;
  r.is_supermartingale = true;
  for (int c = 0; c < C; ++c) {
    Comparison cmp;
    cmp.name = cp_name(ev, c);
    const MeanSE d = paired_diff(ev.M_at[c], ev.M_at[0]);
    cmp.lhs = mean_se(ev.M_at[c]).mean;
    cmp.rhs = mean_se(ev.M_at[0]).mean;
    cmp.diff = d.mean;
    cmp.se = d.se;
    cmp.tol = 3.0 * d.se;
    cmp.pass = std::abs(d.mean) <= cmp.tol;
    if (c > 0) r.max_abs_over_se = std::max(r.max_abs_over_se, d.se > 0 ? std::abs(d.mean) / d.se : 0.0);
    r.is_martingale = r.is_martingale && cmp.pass;
    r.increments.push_back(cmp);
    for (int c2 = c + 1; c2 < C; ++c2) {
      const MeanSE inc = paired_diff(ev.M_at[c2], ev.M_at[c]);
      if (inc.mean > 3.0 * inc.se) r.is_supermartingale = false;
    }
  }
  r.gap = paired_diff(ev.M_at[C - 1], ev.M_at[0]);
  const int k0 = ev.checkpoints.front(), k1 = ev.checkpoints.back();
  for (int k = k0; k < k1; ++k) r.predicted_gap += ev.drift_pred[k] * ev.dt;
  return r;
}

DriftReport check_drift_identity(const ControlEvaluation& ev) {
  if (ev.dp_pred.empty()) throw InvalidArgument("check_drift_identity: evaluation did not collect drift points");
  DriftReport r;
  r.conditional = linear_fit(ev.dp_pred, ev.dp_cond);
  r.raw = linear_fit(ev.dp_pred, ev.dp_raw);
  r.slope_bias = std::abs(r.conditional.slope - 1.0);
  r.pass = r.conditional.slope >= 0.9 && r.conditional.slope <= 1.1 && r.conditional.r2 >= 0.8 &&
           std::abs(r.raw.intercept) <= 3.0 * r.raw.intercept_se;
  return r;
}

OptimalCostReport check_optimal_cost(const std::vector<const ControlEvaluation*>& evs) {
  if (evs.size() < 3) throw InvalidArgument("check_optimal_cost: need the optimal control and two others");
  OptimalCostReport r;
  r.benchmark = mean_se(evs[0]->benchmark_sq);
  r.pass = true;
  for (std::size_t c = 0; c < evs.size(); ++c) {
    const ControlEvaluation& ev = *evs[c];
    CandidateCost cc;
    cc.label = ev.label;
    cc.J = mean_se(ev.J);
    cc.excess = paired_diff(ev.J, evs[0]->benchmark_sq);
    for (std::size_t k = 0; k + 1 < ev.t.size(); ++k) cc.predicted_gap -= ev.drift_pred[k] * ev.dt;
    if (c == 0)
      cc.pass = std::abs(cc.excess.mean) <= 3.0 * cc.excess.se;
    else
      cc.pass = cc.excess.mean > 3.0 * cc.excess.se && cc.excess.mean > cc.predicted_gap - 3.0 * cc.excess.se;
    r.pass = r.pass && cc.pass;
    r.candidates.push_back(cc);
  }
  return r;
}

ValueFunctionReport value_function(const Model& m, const Ensemble& e, const FilterEnsemble& fe, const Vec& zeta,
                                   int k) {
  if (zeta.size() != m.d()) throw InvalidArgument("value_function: dimension mismatch");
  if (k < 0 || k > e.grid().n_steps) throw InvalidArgument("value_function: index out of range");
  const int N = e.size(), d = m.d();
  const bool weighted = e.measure() == Measure::Ptilde;
  std::vector<double> a(N), b(N);
  parallel_for(N, [&](int i) {
    const double* pi = fe.pi(k, i);
    double pz = 0.0;
    for (int x = 0; x < d; ++x) pz += pi[x] * zeta(x);
    const double w = weighted ? std::exp(e.log_d(i, k)) : 1.0;
    const double r = zeta(e.x(i, k)) - pz;
    a[i] = 0.5 * w * r * r;
    b[i] = 0.5 * std::exp(fe.log_mass(k, i)) * variance_under(d, pi, zeta.data());
  });
  ValueFunctionReport r;
  r.direct = mean_se(a);
  r.filter_form = mean_se(b);
  r.diff = paired_diff(a, b);
  r.pass = std::abs(r.diff.mean) <= 3.0 * r.diff.se + 1e-15;
  return r;
}

}  // namespace dfl
