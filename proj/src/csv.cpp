#include "dfl/csv.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

namespace dfl {

std::string fmt_num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

}  // namespace

void write_ensemble_csv(const std::string& path, const Ensemble& e, int n_paths) {
  auto out = open_out(path);
  out << "path_id,k,t,x,w,z,log_d\n";
  const int np = std::min(n_paths, e.size());
  for (int i = 0; i < np; ++i)
    for (int k = 0; k < e.grid().points(); ++k)
      out << i << ',' << k << ',' << fmt_num(e.grid().t(k)) << ',' << e.x(i, k) + 1 << ',' << fmt_num(e.w(i, k))
          << ',' << fmt_num(e.z(i, k)) << ',' << fmt_num(e.log_d(i, k)) << '\n';
}

void write_filter_csv(const std::string& path, const FilterEnsemble& fe, int n_paths) {
  auto out = open_out(path);
  out << "path_id,k,t,log_mass";
  for (int x = 1; x <= fe.d(); ++x) out << ",pi_" << x;
  out << '\n';
  const int np = std::min(n_paths, fe.size());
  for (int i = 0; i < np; ++i)
    for (int k = 0; k < fe.grid().points(); ++k) {
      out << i << ',' << k << ',' << fmt_num(fe.grid().t(k)) << ',' << fmt_num(fe.log_mass(k, i));
      for (int x = 0; x < fe.d(); ++x) out << ',' << fmt_num(fe.pi(k, i)[x]);
      out << '\n';
    }
}

void write_bsde_csv(const std::string& path, const BsdeSolution& sol, const Ensemble& e, const FilterEnsemble& fe,
                    int n_paths) {
  auto out = open_out(path);
  const int d = sol.model().d();
  out << "path_id,k,t";
  for (int x = 1; x <= d; ++x) out << ",y_" << x;
  for (int x = 1; x <= d; ++x) out << ",v_" << x;
  out << ",u,s\n";
  const int np = std::min(n_paths, e.size());
  for (int i = 0; i < np; ++i) {
    const BsdePath p = materialize(sol, e, fe, i);
    for (int k = 0; k < e.grid().points(); ++k) {
      out << i << ',' << k << ',' << fmt_num(e.grid().t(k));
      for (int x = 0; x < d; ++x) out << ',' << fmt_num(p.y[k](x));
      for (int x = 0; x < d; ++x) out << ',' << fmt_num(p.v[k](x));
      out << ',' << fmt_num(p.u[k]) << ',' << fmt_num(p.s[k]) << '\n';
    }
  }
}

void write_martingale_csv(const std::string& path, const ControlEvaluation& ev) {
  auto out = open_out(path);
  out << "k,t,m_mean,m_se,drift_pred,drift_obs\n";
  for (std::size_t k = 0; k < ev.t.size(); ++k)
    out << k << ',' << fmt_num(ev.t[k]) << ',' << fmt_num(ev.m_mean[k]) << ',' << fmt_num(ev.m_se[k]) << ','
        << fmt_num(ev.drift_pred[k]) << ',' << fmt_num(ev.drift_obs[k]) << '\n';
}

std::string Report::text() const {
  std::string s;
  for (const auto& [k, v] : entries_) s += k + " = " + v + "\n";
  return s;
}

void Report::write(const std::string& path) const {
  auto out = open_out(path);
  out << text();
}

}  // namespace dfl
