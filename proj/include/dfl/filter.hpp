#pragma once

#include "dfl/model.hpp"
#include "dfl/pathsim.hpp"

#include <span>
#include <vector>

namespace dfl {

// Normalized filter plus log of the unnormalized mass: sigma_k = exp(log_mass_k) * pi_k.
struct FilterPath {
  TimeGrid grid;
  std::vector<Vec> pi;
  std::vector<double> log_mass;
  long clamp_events = 0;

  double mass(int k) const;
  Vec sigma(int k) const { return mass(k) * pi[k]; }
};

// One Euler step of the Zakai equation from a normalized state:
// rho' = pi + A^T pi dt + h*pi dz, clamped at 0. Writes the renormalized state to out and
// returns the mass ratio |rho'|_1. Throws NumericalFailure (tagged with step) on total underflow.
double zakai_step(const Model& m, const double* pi, double dz, double dt, double* out, int& clamps, int step);

FilterPath run_zakai(const Model& m, std::span<const double> z, const TimeGrid& g);

double estimate_conditional_moment(const FilterPath& fp, const Vec& f, int k);

// max_k |sigma_k(f) - sigma_k(1) pi_k(f)| / sigma_k(1)
double consistency_check(const FilterPath& fp, const Vec& f);

// Filter for every path of an ensemble, stored step-major: pi(k, i) is contiguous in d.
class FilterEnsemble {
 public:
  FilterEnsemble(TimeGrid g, int n_paths, int d);

  const TimeGrid& grid() const { return grid_; }
  int size() const { return n_; }
  int d() const { return d_; }

  const double* pi(int k, int i) const { return pi_.data() + (std::size_t(k) * n_ + i) * d_; }
  double* pi(int k, int i) { return pi_.data() + (std::size_t(k) * n_ + i) * d_; }
  double log_mass(int k, int i) const { return log_mass_[std::size_t(k) * n_ + i]; }
  double& log_mass(int k, int i) { return log_mass_[std::size_t(k) * n_ + i]; }
  long clamp_events() const { return clamps_; }
  void set_clamp_events(long c) { clamps_ = c; }

  FilterPath path(int i) const;
  bool operator==(const FilterEnsemble& o) const {
    return n_ == o.n_ && pi_ == o.pi_ && log_mass_ == o.log_mass_ && clamps_ == o.clamps_;
  }

 private:
  TimeGrid grid_;
  int n_, d_;
  std::vector<double> pi_, log_mass_;
  long clamps_ = 0;
};

FilterEnsemble run_filter_ensemble(const Model& m, const Ensemble& e);
FilterEnsemble run_filter_ensemble_serial(const Model& m, const Ensemble& e);

// exp(A^T t) prior, the law of X_t.
Vec marginal_law(const Model& m, double t);

}  // namespace dfl
