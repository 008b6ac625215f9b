#pragma once

#include "dfl/bsde.hpp"
#include "dfl/dual.hpp"
#include "dfl/filter.hpp"
#include "dfl/pathsim.hpp"

#include <string>
#include <utility>
#include <vector>

namespace dfl {

// Shortest round-trip text for a double; output is locale- and thread-independent.
std::string fmt_num(double v);

// path_id,k,t,x,w,z,log_d (states 1-indexed)
void write_ensemble_csv(const std::string& path, const Ensemble& e, int n_paths);
// path_id,k,t,log_mass,pi_1..pi_d
void write_filter_csv(const std::string& path, const FilterEnsemble& fe, int n_paths);
// path_id,k,t,y_1..y_d,v_1..v_d,u,s
void write_bsde_csv(const std::string& path, const BsdeSolution& sol, const Ensemble& e, const FilterEnsemble& fe,
                    int n_paths);
// k,t,m_mean,m_se,drift_pred,drift_obs
void write_martingale_csv(const std::string& path, const ControlEvaluation& ev);

// Ordered key = value report.
class Report {
 public:
  void add(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }
  void add(const std::string& key, const char* value) { entries_.emplace_back(key, value); }
  void add(const std::string& key, double value) { entries_.emplace_back(key, fmt_num(value)); }
  void add(const std::string& key, int value) { entries_.emplace_back(key, std::to_string(value)); }
  void add(const std::string& key, long value) { entries_.emplace_back(key, std::to_string(value)); }
  void add(const std::string& key, bool value) { entries_.emplace_back(key, value ? "true" : "false"); }
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string text() const;
  void write(const std::string& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace dfl
