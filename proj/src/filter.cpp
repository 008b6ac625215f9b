#include "dfl/filter.hpp"

#include "dfl/parallel.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

namespace dfl {

double FilterPath::mass(int k) const { return std::exp(log_mass.at(k)); }

double zakai_step(const Model& m, const double* pi, double dz, double dt, double* out, int& clamps, int step) {
  const int d = m.d();
  const Mat& A = m.A();
  const Vec& h = m.h();
  double tot = 0.0;
  for (int x = 0; x < d; ++x) {
    double drift = 0.0;
    for (int j = 0; j < d; ++j) drift += A(j, x) * pi[j];
    double r = pi[x] + drift * dt + h(x) * pi[x] * dz;
    if (r < 0.0) {
      r = 0.0;
      ++clamps;
    }
    out[x] = r;
    tot += r;
  }
  if (!(tot > 0.0) || !std::isfinite(tot))
    throw NumericalFailure("filter mass underflow: every entry clamped to 0", step);
  for (int x = 0; x < d; ++x) out[x] /= tot;
  return tot;
}

FilterPath run_zakai(const Model& m, std::span<const double> z, const TimeGrid& g) {
  if (int(z.size()) != g.points()) throw InvalidArgument("run_zakai: observation path does not match grid");
  FilterPath fp;
  fp.grid = g;
  fp.pi.assign(g.points(), Vec(m.d()));
  fp.log_mass.assign(g.points(), 0.0);
  fp.pi[0] = m.prior();
  int clamps = 0;
  for (int k = 0; k < g.n_steps; ++k) {
    const double r = zakai_step(m, fp.pi[k].data(), z[k + 1] - z[k], g.dt(), fp.pi[k + 1].data(), clamps, k + 1);
    fp.log_mass[k + 1] = fp.log_mass[k] + std::log(r);
  }
  fp.clamp_events = clamps;
  return fp;
}

double estimate_conditional_moment(const FilterPath& fp, const Vec& f, int k) {
  if (k < 0 || k >= int(fp.pi.size()))
    throw InvalidArgument("estimate_conditional_moment: index " + std::to_string(k) + " out of range");
  return pair(fp.pi[k], f);
}

double consistency_check(const FilterPath& fp, const Vec& f) {
  double worst = 0.0;
  for (std::size_t k = 0; k < fp.pi.size(); ++k) {
    const Vec s = fp.sigma(int(k));
    const double s1 = s.sum();
    worst = std::max(worst, std::abs(pair(s, f) - s1 * pair(fp.pi[k], f)) / s1);
  }
  return worst;
}

FilterEnsemble::FilterEnsemble(TimeGrid g, int n_paths, int d)
    : grid_(g), n_(n_paths), d_(d), pi_(std::size_t(g.points()) * n_paths * d), log_mass_(std::size_t(g.points()) * n_paths) {}

FilterPath FilterEnsemble::path(int i) const {
  FilterPath fp;
  fp.grid = grid_;
  for (int k = 0; k < grid_.points(); ++k) {
    fp.pi.push_back(Eigen::Map<const Vec>(pi(k, i), d_));
    fp.log_mass.push_back(log_mass(k, i));
  }
  return fp;
}

namespace {

long filter_one(const Model& m, const Ensemble& e, FilterEnsemble& fe, int i) {
  const int d = m.d();
  const double dt = e.grid().dt();
  std::copy(m.prior().data(), m.prior().data() + d, fe.pi(0, i));
  fe.log_mass(0, i) = 0.0;
  int clamps = 0;
  for (int k = 0; k < e.grid().n_steps; ++k) {
    const double r = zakai_step(m, fe.pi(k, i), e.dz(i, k), dt, fe.pi(k + 1, i), clamps, k + 1);
    fe.log_mass(k + 1, i) = fe.log_mass(k, i) + std::log(r);
  }
  return clamps;
}

}  // namespace

FilterEnsemble run_filter_ensemble(const Model& m, const Ensemble& e) {
  FilterEnsemble fe(e.grid(), e.size(), m.d());
  std::vector<long> clamps(e.size());
  parallel_for(e.size(), [&](int i) { clamps[i] = filter_one(m, e, fe, i); });
  long tot = 0;
  for (long c : clamps) tot += c;
  fe.set_clamp_events(tot);
  return fe;
}

FilterEnsemble run_filter_ensemble_serial(const Model& m, const Ensemble& e) {
  FilterEnsemble fe(e.grid(), e.size(), m.d());
  long clamps = 0;
  for (int i = 0; i < e.size(); ++i) clamps += filter_one(m, e, fe, i);
  fe.set_clamp_events(clamps);
  return fe;
}

Vec marginal_law(const Model& m, double t) {
  const Mat E = (m.At() * t).exp();
  return E * m.prior();
}

}  // namespace dfl
