#include "dfl/bsde.hpp"

#include "dfl/parallel.hpp"
#include "dfl/stats.hpp"

#include <algorithm>
#include <cmath>

namespace dfl {

double optimal_control(int d, const double* pi, const double* y, const double* v, const double* h) {
  double phy = 0, ph = 0, py = 0, pv = 0;
  for (int x = 0; x < d; ++x) {
    phy += pi[x] * h[x] * y[x];
    ph += pi[x] * h[x];
    py += pi[x] * y[x];
    pv += pi[x] * v[x];
  }
  return -(phy - ph * py) - pv;
}

double optimal_control(const Vec& pi, const Vec& y, const Vec& v, const Vec& h) {
  const auto d = pi.size();
  if (y.size() != d || v.size() != d || h.size() != d) throw InvalidArgument("optimal_control: dimension mismatch");
  return optimal_control(int(d), pi.data(), y.data(), v.data(), h.data());
}

Control Control::deterministic(std::vector<double> u, std::string label) {
  Control c;
  c.kind = Kind::deterministic;
  c.u = std::move(u);
  c.label = std::move(label);
  return c;
}

Control Control::constant(const TimeGrid& g, double v) {
  return deterministic(std::vector<double>(g.points(), v), "constant " + std::to_string(v));
}

Control Control::ramp(const TimeGrid& g, double a, double b) {
  std::vector<double> u(g.points());
  for (int k = 0; k < g.points(); ++k) u[k] = a + b * g.t(k);
  return deterministic(std::move(u), "ramp");
}

Control Control::optimal(double offset) {
  Control c;
  c.kind = Kind::optimal;
  c.offset = offset;
  c.label = offset == 0.0 ? "optimal" : "optimal + " + std::to_string(offset);
  return c;
}

Control Control::feedback(Rule r, std::string label) {
  Control c;
  c.kind = Kind::feedback;
  c.rule = std::move(r);
  c.label = std::move(label);
  return c;
}

double Control::value(int k, double t, int d, const double* pi, const double* y, const double* v,
                      const double* h) const {
  switch (kind) {
    case Kind::deterministic:
      return u[k];
    case Kind::optimal:
      return optimal_control(d, pi, y, v, h) + offset;
    case Kind::feedback:
      return rule(t, {pi, std::size_t(d)}, {y, std::size_t(d)}, {v, std::size_t(d)});
  }
  return 0.0;
}

TerminalCondition TerminalCondition::deterministic(Vec F) {
  TerminalCondition t;
  t.kind = Kind::deterministic;
  t.F = std::move(F);
  t.label = "deterministic";
  return t;
}

TerminalCondition TerminalCondition::observation_linear(Vec F, Vec G) {
  if (F.size() != G.size()) throw InvalidArgument("observation_linear: F and G differ in length");
  TerminalCondition t;
  t.kind = Kind::path_functional;
  t.F = F;
  t.label = "observation-linear";
  t.functional = [F, G](std::span<const double> z, double* out) {
    const double zT = z.back();
    for (Eigen::Index x = 0; x < F.size(); ++x) out[x] = F(x) + G(x) * zT;
  };
  return t;
}

void TerminalCondition::value(std::span<const double> z, double* out) const {
  if (kind == Kind::deterministic)
    std::copy(F.data(), F.data() + F.size(), out);
  else
    functional(z, out);
}

void FilteringDriver::f(int d, const double* y, const double* v, double u, double, double* out) const {
  for (int x = 0; x < d; ++x) {
    double ay = 0.0;
    for (int j = 0; j < d; ++j) ay += A(x, j) * y[j];
    out[x] = -(ay + h(x) * (u + v[x]));
  }
}

void OdeSolution::eval(int k, const double* pi, EvalBuffer& b) const {
  const int d = model_.d();
  const Vec& y = y_[k];
  const Vec& yn = y_[k + 1];
  for (int x = 0; x < d; ++x) {
    b.Y[x] = y(x);
    b.Yp[x] = y(x);
    b.E[x] = yn(x);
    b.V[x] = 0.0;
  }
  b.U = control_.u[k];
  b.ustar = optimal_control(d, pi, b.Y.data(), b.V.data(), model_.h().data());
  b.picard_residual = 0.0;
}

OdeSolution solve_backward_ode(const Model& m, const Vec& F, const Control& c, const TimeGrid& g) {
  if (!c.is_deterministic()) throw InvalidArgument("solve_backward_ode: control must be deterministic");
  if (int(c.u.size()) != g.points())
    throw InvalidArgument("solve_backward_ode: control has " + std::to_string(c.u.size()) + " values, grid has " +
                          std::to_string(g.points()));
  if (F.size() != m.d()) throw InvalidArgument("solve_backward_ode: terminal dimension mismatch");
  const Mat& A = m.A();
  const Vec& h = m.h();
  const double dt = g.dt();
  std::vector<Vec> y(g.points());
  y[g.n_steps] = F;
  auto rhs = [&](const Vec& Y, double u) -> Vec { return A * Y + h * u; };
  for (int k = g.n_steps - 1; k >= 0; --k) {
    const double u1 = c.u[k + 1], u0 = c.u[k], um = 0.5 * (u0 + u1);
    const Vec& Y = y[k + 1];
    const Vec k1 = rhs(Y, u1);
    const Vec k2 = rhs(Y + 0.5 * dt * k1, um);
    const Vec k3 = rhs(Y + 0.5 * dt * k2, um);
    const Vec k4 = rhs(Y + dt * k3, u0);
    y[k] = Y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return OdeSolution(m, g, c, TerminalCondition::deterministic(F), std::move(y));
}

int n_monomials(int m, int deg) {
  // C(m + deg, deg)
  long r = 1;
  for (int i = 1; i <= deg; ++i) r = r * (m + i) / i;
  return int(r);
}

void eval_monomials(int m, int deg, const double* s, double* out) {
  int last[64];
  out[0] = 1.0;
  last[0] = 0;
  int begin = 0, end = 1, pos = 1;
  for (int p = 1; p <= deg; ++p) {
    for (int r = begin; r < end; ++r)
      for (int j = (p == 1 ? 0 : last[r]); j < m; ++j) {
        out[pos] = out[r] * s[j];
        last[pos] = j;
        ++pos;
      }
    begin = end;
    end = pos;
  }
}

int RegressionSolution::max_features() const {
  return n_monomials(model_.d() - 1, opts_.basis_degree);
}

void RegressionSolution::eval(int k, const double* pi, EvalBuffer& b) const {
  const StepFit& fit = fits_[k];
  const int d = model_.d(), m = d - 1;
  double s[64];
  for (int j = 0; j < m; ++j) s[j] = (pi[j] - fit.mean[j]) / fit.scale[j];
  eval_monomials(m, fit.degree, s, b.phi.data());
  for (int x = 0; x < d; ++x) {
    double e = 0.0, v = 0.0;
    for (int r = 0; r < fit.n_features; ++r) {
      e += b.phi[r] * fit.bE(r, x);
      v += b.phi[r] * fit.bV(r, x);
    }
    b.E[x] = e;
    b.V[x] = v;
  }
  const double t = grid_.t(k), dt = grid_.dt();
  const double* h = model_.h().data();
  std::copy(b.E.begin(), b.E.end(), b.Yp.begin());
  double U = control_.value(k, t, d, pi, b.Yp.data(), b.V.data(), h);
  b.picard_residual = 0.0;
  if (!control_.is_deterministic()) {
    for (int it = 0; it < opts_.picard_iterations; ++it) {
      driver_->f(d, b.E.data(), b.V.data(), U, t, b.f.data());
      for (int x = 0; x < d; ++x) b.Yp[x] = b.E[x] - b.f[x] * dt;
      const double Un = control_.value(k, t, d, pi, b.Yp.data(), b.V.data(), h);
      b.picard_residual = std::abs(Un - U);
      U = Un;
    }
  }
  driver_->f(d, b.E.data(), b.V.data(), U, t, b.f.data());
  for (int x = 0; x < d; ++x) b.Y[x] = b.E[x] - b.f[x] * dt;
  b.U = U;
  b.ustar = optimal_control(d, pi, b.Yp.data(), b.V.data(), h);
}

Vec terminal_value(const TerminalCondition& term, const Ensemble& e, int i) {
  Vec out(e.d());
  term.value(e.z_path(i), out.data());
  return out;
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double max_of(const std::vector<double>& v) { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); }

}  // namespace

RegressionSolution solve_regression(const Model& m, const TerminalCondition& term, const Control& c,
                                    const Ensemble& e, const FilterEnsemble& fe, RegressionOptions o) {
  const int N = e.size(), d = m.d(), mv = d - 1, n = e.grid().n_steps;
  if (N < o.min_paths)
    throw InvalidArgument("solve_regression: " + std::to_string(N) + " paths, need at least " +
                          std::to_string(o.min_paths));
  if (e.measure() != Measure::Ptilde) throw InvalidArgument("solve_regression: ensemble must be simulated under P-tilde");
  if (fe.size() != N || fe.grid().n_steps != n) throw InvalidArgument("solve_regression: filter/ensemble mismatch");
  if (c.is_deterministic() && int(c.u.size()) != e.grid().points())
    throw InvalidArgument("solve_regression: control length does not match grid");
  if (o.basis_degree < 0 || o.basis_degree > 4) throw InvalidArgument("solve_regression: basis degree must be in 0..4");
  if (n_monomials(mv, o.basis_degree) > 60) throw InvalidArgument("solve_regression: basis too large");

  RegressionSolution sol(m, e.grid(), c, term, o, std::make_shared<FilteringDriver>(m));
  const int pmax = sol.max_features();
  const double dt = e.grid().dt();
  std::vector<EvalBuffer> bufs(worker_count(), EvalBuffer(d, pmax));
  RowMat Phi(N, pmax), Ynext(N, d), Vt(N, d);
  std::vector<double> picres(N), col(N);

  for (int k = n - 1; k >= 0; --k) {
    parallel_for(N, [&](int i) {
      if (k + 1 == n) {
        term.value(e.z_path(i), Ynext.row(i).data());
        picres[i] = 0.0;
      } else {
        EvalBuffer& b = bufs[thread_index()];
        sol.eval(k + 1, fe.pi(k + 1, i), b);
        for (int x = 0; x < d; ++x) Ynext(i, x) = b.Y[x];
        picres[i] = b.picard_residual;
      }
    });
    if (k + 1 < n) sol.fits()[k + 1].picard_residual = max_of(picres);

    StepFit& fit = sol.fits()[k];
    fit.mean.assign(mv, 0.0);
    fit.scale.assign(mv, 1.0);
    for (int j = 0; j < mv; ++j) {
      for (int i = 0; i < N; ++i) col[i] = fe.pi(k, i)[j];
      const double mu = pairwise_sum(col) / N;
      for (int i = 0; i < N; ++i) col[i] = (col[i] - mu) * (col[i] - mu);
      const double sd = std::sqrt(pairwise_sum(col) / N);
      fit.mean[j] = mu;
      fit.scale[j] = sd > 0.0 ? sd : 1.0;
    }
    parallel_for(N, [&](int i) {
      double s[64];
      const double* p = fe.pi(k, i);
      for (int j = 0; j < mv; ++j) s[j] = (p[j] - fit.mean[j]) / fit.scale[j];
      eval_monomials(mv, o.basis_degree, s, Phi.row(i).data());
    });

    Mat G;
    int deg = o.basis_degree;
    for (;; --deg) {
      const int p = n_monomials(mv, deg);
      G = Phi.leftCols(p).transpose() * Phi.leftCols(p) / double(N);
      Eigen::SelfAdjointEigenSolver<Mat> es(G, Eigen::EigenvaluesOnly);
      const double lmin = es.eigenvalues().minCoeff(), lmax = es.eigenvalues().maxCoeff();
      fit.condition = lmin > 0.0 ? lmax / lmin : INFINITY;
      if (fit.condition <= o.max_condition || deg == 0) break;
    }
    if (deg < o.basis_degree)
      sol.warnings().push_back("step " + std::to_string(k) + ": basis degree lowered from " +
                               std::to_string(o.basis_degree) + " to " + std::to_string(deg) +
                               (k == 0 ? " (filter is deterministic at t = 0)" : " (ill-conditioned design)"));
    fit.degree = deg;
    fit.n_features = n_monomials(mv, deg);
    const int p = fit.n_features;
    const auto P = Phi.leftCols(p);
    const Eigen::LDLT<Mat> ldlt(G);
    fit.bE = ldlt.solve(Mat(P.transpose() * Ynext) / double(N));
    const RowMat Ehat = P * fit.bE;
    for (int i = 0; i < N; ++i) {
      const double w = e.dz(i, k) / dt;
      if (o.v_estimator == VEstimator::demeaned)
        Vt.row(i) = (Ynext.row(i) - Ehat.row(i)) * w;
      else
        Vt.row(i) = Ynext.row(i) * w;
    }
    fit.bV = ldlt.solve(Mat(P.transpose() * Vt) / double(N));
    const RowMat Vhat = P * fit.bV;

    const Eigen::RowVectorXd ybar = Ynext.colwise().mean();
    double sst = 0, sse = 0, res = 0;
    for (int i = 0; i < N; ++i) {
      sst += (Ynext.row(i) - ybar).squaredNorm();
      sse += (Ynext.row(i) - Ehat.row(i)).squaredNorm();
      res += (Ynext.row(i) - Ehat.row(i) - Vhat.row(i) * e.dz(i, k)).squaredNorm();
    }
    // targets that are constant up to rounding have no variance to explain
    fit.r2 = sst > 1e-20 * N * (1.0 + ybar.squaredNorm()) ? 1.0 - sse / sst : 1.0;
    fit.residual_ms = res / N;
  }
  {
    EvalBuffer b(d, pmax);
    sol.eval(0, fe.pi(0, 0), b);
    sol.fits()[0].picard_residual = b.picard_residual;
  }
  return sol;
}

std::vector<double> s_process(const Vec& y0, const Vec& prior, std::span<const double> u, std::span<const double> z) {
  if (u.size() != z.size()) throw InvalidArgument("s_process: control and path lengths differ");
  std::vector<double> s(z.size());
  s[0] = pair(prior, y0);
  for (std::size_t k = 0; k + 1 < z.size(); ++k) s[k + 1] = s[k] - u[k] * (z[k + 1] - z[k]);
  return s;
}

BsdePath materialize(const BsdeSolution& sol, const Ensemble& e, const FilterEnsemble& fe, int i) {
  const int n = sol.grid().n_steps, d = sol.model().d();
  BsdePath p;
  p.y.resize(n + 1);
  p.v.resize(n + 1);
  p.u.resize(n + 1);
  EvalBuffer b(d, 64);
  for (int k = 0; k < n; ++k) {
    sol.eval(k, fe.pi(k, i), b);
    p.y[k] = Eigen::Map<const Vec>(b.Y.data(), d);
    p.v[k] = Eigen::Map<const Vec>(b.V.data(), d);
    p.u[k] = b.U;
  }
  p.y[n] = terminal_value(sol.terminal(), e, i);
  p.v[n] = Vec::Zero(d);
  // no control acts after the last step; carry the final value for display
  p.u[n] = sol.control().is_deterministic() ? sol.control().u[n] : p.u[n - 1];
  p.s = s_process(p.y[0], sol.model().prior(), p.u, e.z_path(i));
  return p;
}

RepresentationCheck representation_check(const RegressionSolution& sol, const Ensemble& e, const FilterEnsemble& fe) {
  const int N = e.size(), d = sol.model().d(), n = e.grid().n_steps;
  const double dt = e.grid().dt();
  const FilteringDriver drv(sol.model());
  std::vector<EvalBuffer> bufs(worker_count(), EvalBuffer(d, 64));
  std::vector<double> sq(N);
  parallel_for(N, [&](int i) {
    EvalBuffer& b = bufs[thread_index()];
    Vec acc(d), xi(d);
    sol.eval(0, fe.pi(0, i), b);
    for (int x = 0; x < d; ++x) acc(x) = b.Y[x];
    for (int k = 0; k < n; ++k) {
      if (k > 0) sol.eval(k, fe.pi(k, i), b);
      drv.f(d, b.E.data(), b.V.data(), b.U, e.grid().t(k), b.f.data());
      for (int x = 0; x < d; ++x) acc(x) += b.V[x] * e.dz(i, k) + b.f[x] * dt;
    }
    sol.terminal().value(e.z_path(i), xi.data());
    sq[i] = (xi - acc).squaredNorm();
  });
  RepresentationCheck r;
  r.rms_mismatch = std::sqrt(pairwise_sum(sq) / N);
  double s = 0.0;
  for (const auto& f : sol.fits()) s += f.residual_ms;
  r.residual_scale = std::sqrt(s);
  return r;
}

double solution_distance(const BsdeSolution& a, const BsdeSolution& b, const FilterEnsemble& fe) {
  const int N = fe.size(), d = a.model().d(), n = a.grid().n_steps;
  std::vector<EvalBuffer> ba(worker_count(), EvalBuffer(d, 64)), bb(worker_count(), EvalBuffer(d, 64));
  std::vector<double> sq(std::size_t(N) * d), col(N);
  double worst = 0.0;
  for (int k = 0; k < n; ++k) {
    parallel_for(N, [&](int i) {
      EvalBuffer& x1 = ba[thread_index()];
      EvalBuffer& x2 = bb[thread_index()];
      a.eval(k, fe.pi(k, i), x1);
      b.eval(k, fe.pi(k, i), x2);
      for (int x = 0; x < d; ++x) sq[std::size_t(x) * N + i] = (x1.Y[x] - x2.Y[x]) * (x1.Y[x] - x2.Y[x]);
    });
    for (int x = 0; x < d; ++x)
      worst = std::max(worst, std::sqrt(pairwise_sum({sq.data() + std::size_t(x) * N, std::size_t(N)}) / N));
  }
  return worst;
}

}  // namespace dfl
