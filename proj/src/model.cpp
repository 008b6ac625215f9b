#include "dfl/model.hpp"

#include <cmath>
#include <sstream>

namespace dfl {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void require_same(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b)
    throw InvalidArgument(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                          std::to_string(b) + ")");
}

}  // namespace

std::vector<std::string> diagnose_rate_matrix(const Mat& A) {
  std::vector<std::string> out;
  if (A.rows() != A.cols()) {
    out.push_back("A must be square, got " + std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
    return out;
  }
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      if (!std::isfinite(A(i, j))) {
        out.push_back("A(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") is not finite");
        continue;
      }
      if (i != j && A(i, j) < 0.0)
        out.push_back("A(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") = " + fmt(A(i, j)) +
                      " is a negative off-diagonal rate");
      row += A(i, j);
    }
    if (std::abs(row) > kRowSumTol)
      out.push_back("row " + std::to_string(i + 1) + " of A sums to " + fmt(row) + ", expected 0");
  }
  return out;
}

std::vector<std::string> diagnose_prob_vector(const Vec& mu, const std::string& name) {
  std::vector<std::string> out;
  double s = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (!(mu(i) >= 0.0))
      out.push_back(name + "(" + std::to_string(i + 1) + ") = " + fmt(mu(i)) + " is negative or not finite");
    s += mu(i);
  }
  if (std::abs(s - 1.0) > kSimplexTol)
    out.push_back(name + " violates the simplex: entries sum to " + fmt(s) + ", expected 1");
  return out;
}

std::vector<std::string> Model::diagnose(const Mat& A, const Vec& h, const Vec& prior, double T) {
  std::vector<std::string> out;
  if (h.size() < 2) out.push_back("state space needs d >= 2, got d = " + std::to_string(h.size()));
  if (A.rows() != h.size() || A.cols() != h.size())
    out.push_back("A is " + std::to_string(A.rows()) + "x" + std::to_string(A.cols()) + " but h has length " +
                  std::to_string(h.size()));
  if (prior.size() != h.size())
    out.push_back("prior has length " + std::to_string(prior.size()) + " but h has length " +
                  std::to_string(h.size()));
  for (auto& s : diagnose_rate_matrix(A)) out.push_back(std::move(s));
  for (auto& s : diagnose_prob_vector(prior)) out.push_back(std::move(s));
  for (Eigen::Index i = 0; i < h.size(); ++i)
    if (!std::isfinite(h(i))) out.push_back("h(" + std::to_string(i + 1) + ") is not finite");
  if (!(T > 0.0) || !std::isfinite(T)) out.push_back("horizon T = " + fmt(T) + " must be positive");
  return out;
}

Model::Model(Mat A, Vec h, Vec prior, double T)
    : A_(std::move(A)), h_(std::move(h)), prior_(std::move(prior)), T_(T) {
  auto diag = diagnose(A_, h_, prior_, T_);
  if (!diag.empty()) {
    std::string msg = "invalid model:";
    for (auto& s : diag) msg += "\n  " + s;
    throw InvalidArgument(msg);
  }
  At_ = A_.transpose();
}

Vec carre_du_champ(const Mat& A, const Vec& f) {
  require_same(A.rows(), f.size(), "carre_du_champ");
  require_same(A.cols(), f.size(), "carre_du_champ");
  const auto d = f.size();
  Vec g = Vec::Zero(d);
  for (Eigen::Index x = 0; x < d; ++x)
    for (Eigen::Index j = 0; j < d; ++j) {
      if (j == x) continue;
      const double df = f(x) - f(j);
      g(x) += A(x, j) * df * df;
    }
  return g;
}

double pair(const Vec& mu, const Vec& f) {
  require_same(mu.size(), f.size(), "pair");
  return mu.dot(f);
}

Vec hadamard(const Vec& f, const Vec& g) {
  require_same(f.size(), g.size(), "hadamard");
  return f.cwiseProduct(g);
}

Model reference_model() {
  Mat A(3, 3);
  A << -2, 1, 1, 1, -3, 2, 2, 2, -4;
  Vec h(3);
  h << -1, 0, 1;
  return Model(A, h, Vec::Constant(3, 1.0 / 3.0), 1.0);
}

}  // namespace dfl
