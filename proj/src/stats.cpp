#include "dfl/stats.hpp"

#include "dfl/model.hpp"

#include <cmath>

namespace dfl {

double pairwise_sum(std::span<const double> x) {
  constexpr std::size_t leaf = 64;
  if (x.size() <= leaf) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t h = x.size() / 2;
  return pairwise_sum(x.first(h)) + pairwise_sum(x.subspan(h));
}

MeanSE mean_se(std::span<const double> x) {
  MeanSE r;
  r.n = x.size();
  if (x.empty()) return r;
  r.mean = pairwise_sum(x) / double(x.size());
  if (x.size() < 2) return r;
  std::vector<double> sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - r.mean) * (x[i] - r.mean);
  const double var = pairwise_sum(sq) / double(x.size() - 1);
  r.se = std::sqrt(var / double(x.size()));
  return r;
}

MeanSE paired_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("paired_diff: length mismatch");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return mean_se(d);
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) throw InvalidArgument("linear_fit: need matching samples, n >= 3");
  const std::size_t n = x.size();
  LinearFit f;
  f.n = n;
  const double mx = pairwise_sum(x) / double(n), my = pairwise_sum(y) / double(n);
  std::vector<double> sxx(n), sxy(n), syy(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx[i] = dx * dx;
    sxy[i] = dx * dy;
    syy[i] = dy * dy;
  }
  const double Sxx = pairwise_sum(sxx), Sxy = pairwise_sum(sxy), Syy = pairwise_sum(syy);
  if (Sxx <= 0.0) throw InvalidArgument("linear_fit: regressor has zero variance");
  f.slope = Sxy / Sxx;
  f.intercept = my - f.slope * mx;
  const double sse = std::max(0.0, Syy - f.slope * Sxy);
  f.r2 = Syy > 0.0 ? 1.0 - sse / Syy : 1.0;
  const double s2 = sse / double(n - 2);
  f.slope_se = std::sqrt(s2 / Sxx);
  f.intercept_se = std::sqrt(s2 * (1.0 / double(n) + mx * mx / Sxx));
  return f;
}

double loglog_slope(const std::vector<double>& n, const std::vector<double>& err) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < n.size(); ++i) {
    lx.push_back(std::log(n[i]));
    ly.push_back(std::log(err[i]));
  }
  const double mx = pairwise_sum(lx) / double(lx.size()), my = pairwise_sum(ly) / double(ly.size());
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  return sxy / sxx;
}

}  // namespace dfl
