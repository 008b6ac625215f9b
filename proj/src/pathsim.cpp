#include "dfl/pathsim.hpp"

#include "dfl/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace dfl {

TimeGrid::TimeGrid(double T_, int n) : T(T_), n_steps(n) {
  if (!(T_ > 0.0)) throw InvalidArgument("TimeGrid: horizon must be positive");
  if (n < 1) throw InvalidArgument("TimeGrid: n_steps must be >= 1, got " + std::to_string(n));
}

const char* measure_name(Measure m) { return m == Measure::P ? "P" : "P-tilde"; }

namespace {

int draw_categorical(const Vec& p, Stream& rng) {
  const double u = rng.uniform();
  double c = 0.0;
  const int d = int(p.size());
  for (int j = 0; j < d; ++j) {
    c += p(j);
    if (u < c) return j;
  }
  // u landed in the rounding slack above the last cumulative sum
  for (int j = d - 1; j >= 0; --j)
    if (p(j) > 0.0) return j;
  return d - 1;
}

}  // namespace

ChainSample simulate_ctmc(const Model& m, const TimeGrid& g, Stream& rng) {
  ChainSample out;
  out.x.resize(g.points());
  int x = draw_categorical(m.prior(), rng);
  const int d = m.d();
  double t = 0.0;
  int k = 0;
  Vec jump_p(d);
  while (k < g.points()) {
    const double rate = m.exit_rate(x);
    const double t_next = rate > 0.0 ? t + rng.exponential(rate) : INFINITY;
    // left limits: a jump exactly on a grid point is not yet visible there
    while (k < g.points() && g.t(k) <= t_next) out.x[k++] = x;
    if (k >= g.points()) break;
    for (int j = 0; j < d; ++j) jump_p(j) = j == x ? 0.0 : m.A()(x, j) / rate;
    x = draw_categorical(jump_p, rng);
    t = t_next;
    out.jumps.push_back({t, x});
  }
  return out;
}

Observation simulate_observation(const Model& m, std::span<const int> x, const TimeGrid& g, Stream& rng,
                                 Measure measure) {
  if (int(x.size()) != g.points()) throw InvalidArgument("simulate_observation: state path does not match grid");
  Observation o;
  o.w.assign(g.points(), 0.0);
  o.z.assign(g.points(), 0.0);
  const double dt = g.dt(), sq = std::sqrt(dt);
  for (int k = 0; k < g.n_steps; ++k) {
    const double hdt = m.h()(x[k]) * dt;
    const double xi = sq * rng.normal();
    if (measure == Measure::P) {
      o.w[k + 1] = o.w[k] + xi;
      o.z[k + 1] = o.z[k] + hdt + xi;
    } else {
      o.z[k + 1] = o.z[k] + xi;
      o.w[k + 1] = o.w[k] + (xi - hdt);
    }
  }
  return o;
}

double logd_form_gap(const Model& m, const TimeGrid& g, std::span<const int> x, std::span<const double> w,
                     std::span<const double> z) {
  const double dt = g.dt();
  double a = 0.0, b = 0.0, gap = 0.0;
  for (int k = 0; k < g.n_steps; ++k) {
    const double hk = m.h()(x[k]);
    a += hk * (z[k + 1] - z[k]) - 0.5 * hk * hk * dt;
    b += hk * (w[k + 1] - w[k]) + 0.5 * hk * hk * dt;
    gap = std::max(gap, std::abs(a - b) / std::max(1.0, std::abs(a)));
  }
  return gap;
}

std::vector<double> change_of_measure(const Model& m, const TimeGrid& g, std::span<const int> x,
                                      std::span<const double> w, std::span<const double> z) {
  const int np = g.points();
  if (int(x.size()) != np || int(w.size()) != np || int(z.size()) != np)
    throw InvalidArgument("change_of_measure: path length does not match grid");
  const double dt = g.dt();
  std::vector<double> ld(np, 0.0);
  double drift = 0.0;
  for (int k = 0; k < g.n_steps; ++k) {
    const double hk = m.h()(x[k]);
    ld[k + 1] = ld[k] + hk * (z[k + 1] - z[k]) - 0.5 * hk * hk * dt;
    drift += hk * dt;
    const double mismatch = std::abs((z[k + 1] - w[k + 1]) - drift);
    if (mismatch > 1e-9 * (1.0 + std::abs(z[k + 1]) + std::abs(w[k + 1])))
      throw DataIntegrityError("change_of_measure: z - w differs from the integrated drift by " +
                               std::to_string(mismatch) + " at step " + std::to_string(k + 1));
  }
  const double gap = logd_form_gap(m, g, x, w, z);
  if (gap > 1e-9)
    throw DataIntegrityError("change_of_measure: log D forms disagree, relative gap " + std::to_string(gap));
  return ld;
}

SamplePath simulate_path(const Model& m, const TimeGrid& g, std::uint64_t seed, std::uint64_t index,
                         Measure measure) {
  Stream chain(seed, index, StreamRole::chain);
  Stream noise(seed, index, StreamRole::noise);
  auto cs = simulate_ctmc(m, g, chain);
  auto ob = simulate_observation(m, cs.x, g, noise, measure);
  SamplePath p;
  p.log_d = change_of_measure(m, g, cs.x, ob.w, ob.z);
  p.x = std::move(cs.x);
  p.jumps = std::move(cs.jumps);
  p.w = std::move(ob.w);
  p.z = std::move(ob.z);
  return p;
}

Ensemble::Ensemble(TimeGrid g, Measure measure, std::uint64_t seed, int n_paths, int d)
    : grid_(g), measure_(measure), seed_(seed), n_(n_paths), d_(d) {
  if (n_paths < 1) throw InvalidArgument("Ensemble: need at least one path");
  const std::size_t tot = std::size_t(n_paths) * g.points();
  x_.resize(tot);
  w_.resize(tot);
  z_.resize(tot);
  log_d_.resize(tot);
  jumps_.resize(n_paths);
}

SamplePath Ensemble::path(int i) const {
  SamplePath p;
  const auto b = idx(i, 0), e = idx(i, 0) + grid_.points();
  p.x.assign(x_.begin() + b, x_.begin() + e);
  p.w.assign(w_.begin() + b, w_.begin() + e);
  p.z.assign(z_.begin() + b, z_.begin() + e);
  p.log_d.assign(log_d_.begin() + b, log_d_.begin() + e);
  p.jumps = jumps_[i];
  return p;
}

void Ensemble::store(int i, SamplePath&& p) {
  const auto b = idx(i, 0);
  std::copy(p.x.begin(), p.x.end(), x_.begin() + b);
  std::copy(p.w.begin(), p.w.end(), w_.begin() + b);
  std::copy(p.z.begin(), p.z.end(), z_.begin() + b);
  std::copy(p.log_d.begin(), p.log_d.end(), log_d_.begin() + b);
  jumps_[i] = std::move(p.jumps);
}

bool Ensemble::operator==(const Ensemble& o) const {
  auto same_jumps = [&] {
    for (int i = 0; i < n_; ++i) {
      if (jumps_[i].size() != o.jumps_[i].size()) return false;
      for (std::size_t j = 0; j < jumps_[i].size(); ++j)
        if (jumps_[i][j].t != o.jumps_[i][j].t || jumps_[i][j].state != o.jumps_[i][j].state) return false;
    }
    return true;
  };
  return n_ == o.n_ && seed_ == o.seed_ && measure_ == o.measure_ && x_ == o.x_ && w_ == o.w_ && z_ == o.z_ &&
         log_d_ == o.log_d_ && same_jumps();
}

Ensemble simulate_ensemble(const Model& m, const TimeGrid& g, int n_paths, std::uint64_t seed, Measure measure) {
  Ensemble e(g, measure, seed, n_paths, m.d());
  std::vector<double> gap(n_paths);
  parallel_for(n_paths, [&](int i) {
    auto p = simulate_path(m, g, seed, std::uint64_t(i), measure);
    gap[i] = logd_form_gap(m, g, p.x, p.w, p.z);
    e.store(i, std::move(p));
  });
  e.set_logd_gap(*std::max_element(gap.begin(), gap.end()));
  return e;
}

Ensemble simulate_ensemble_serial(const Model& m, const TimeGrid& g, int n_paths, std::uint64_t seed,
                                  Measure measure) {
  Ensemble e(g, measure, seed, n_paths, m.d());
  double gap = 0.0;
  for (int i = 0; i < n_paths; ++i) {
    auto p = simulate_path(m, g, seed, std::uint64_t(i), measure);
    gap = std::max(gap, logd_form_gap(m, g, p.x, p.w, p.z));
    e.store(i, std::move(p));
  }
  e.set_logd_gap(gap);
  return e;
}

}  // namespace dfl
