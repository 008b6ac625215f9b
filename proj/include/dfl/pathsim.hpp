#pragma once

#include "dfl/model.hpp"
#include "dfl/rng.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dfl {

struct TimeGrid {
  double T = 1.0;
  int n_steps = 1;

  TimeGrid() = default;
  TimeGrid(double T_, int n);
  double dt() const { return T / n_steps; }
  double t(int k) const { return k * dt(); }
  int points() const { return n_steps + 1; }
};

enum class Measure { P, Ptilde };
const char* measure_name(Measure m);

struct Jump {
  double t;
  int state;  // post-jump state, 0-indexed
};

// One joint realization on the grid. States are 0-indexed here.
struct SamplePath {
  std::vector<int> x;
  std::vector<Jump> jumps;
  std::vector<double> w, z, log_d;
};

struct ChainSample {
  std::vector<int> x;
  std::vector<Jump> jumps;
};

// Exact holding-time construction, recorded at grid points.
ChainSample simulate_ctmc(const Model& m, const TimeGrid& g, Stream& rng);

struct Observation {
  std::vector<double> w, z;
};

Observation simulate_observation(const Model& m, std::span<const int> x, const TimeGrid& g, Stream& rng,
                                 Measure measure);

// log D_{t_k} = sum_{j<k} h(x_j) dz_j - h(x_j)^2 dt / 2, cross-checked against the dW form.
std::vector<double> change_of_measure(const Model& m, const TimeGrid& g, std::span<const int> x,
                                      std::span<const double> w, std::span<const double> z);

SamplePath simulate_path(const Model& m, const TimeGrid& g, std::uint64_t seed, std::uint64_t index, Measure measure);

// Path-major storage: entry (i, k) lives at i * points + k.
class Ensemble {
 public:
  Ensemble(TimeGrid g, Measure measure, std::uint64_t seed, int n_paths, int d);

  const TimeGrid& grid() const { return grid_; }
  Measure measure() const { return measure_; }
  std::uint64_t seed() const { return seed_; }
  int size() const { return n_; }
  int d() const { return d_; }

  int x(int i, int k) const { return x_[idx(i, k)]; }
  double w(int i, int k) const { return w_[idx(i, k)]; }
  double z(int i, int k) const { return z_[idx(i, k)]; }
  double dz(int i, int k) const { return z_[idx(i, k + 1)] - z_[idx(i, k)]; }
  double log_d(int i, int k) const { return log_d_[idx(i, k)]; }
  std::span<const double> z_path(int i) const { return {z_.data() + idx(i, 0), std::size_t(grid_.points())}; }
  std::span<const int> x_path(int i) const { return {x_.data() + idx(i, 0), std::size_t(grid_.points())}; }
  const std::vector<Jump>& jumps(int i) const { return jumps_[i]; }

  SamplePath path(int i) const;
  void store(int i, SamplePath&& p);

  // Largest |logD form A - logD form B| relative, over all paths; filled at generation.
  double max_logd_form_gap() const { return logd_gap_; }
  void set_logd_gap(double g) { logd_gap_ = g; }

  bool operator==(const Ensemble& o) const;

 private:
  std::size_t idx(int i, int k) const { return std::size_t(i) * grid_.points() + k; }
  TimeGrid grid_;
  Measure measure_;
  std::uint64_t seed_;
  int n_, d_;
  std::vector<int> x_;
  std::vector<double> w_, z_, log_d_;
  std::vector<std::vector<Jump>> jumps_;
  double logd_gap_ = 0.0;
};

// OpenMP kernel and its serial reference; bit-identical by construction.
Ensemble simulate_ensemble(const Model& m, const TimeGrid& g, int n_paths, std::uint64_t seed, Measure measure);
Ensemble simulate_ensemble_serial(const Model& m, const TimeGrid& g, int n_paths, std::uint64_t seed,
                                  Measure measure);

// Maximum relative disagreement of the two log D accumulation forms on one path.
double logd_form_gap(const Model& m, const TimeGrid& g, std::span<const int> x, std::span<const double> w,
                     std::span<const double> z);

}  // namespace dfl
