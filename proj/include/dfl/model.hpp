#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace dfl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Error taxonomy shared by every module.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DataIntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalFailure : std::runtime_error {
  NumericalFailure(const std::string& what, int step_index)
      : std::runtime_error(what + " (step " + std::to_string(step_index) + ")"), step(step_index) {}
  int step;
};

inline constexpr double kRowSumTol = 1e-12;
inline constexpr double kSimplexTol = 1e-12;

// Every violated invariant, 1-indexed in messages. Empty means valid.
std::vector<std::string> diagnose_rate_matrix(const Mat& A);
std::vector<std::string> diagnose_prob_vector(const Vec& mu, const std::string& name = "prior");

// Immutable hidden Markov model: generator A (row convention, A(x,j) = rate x->j),
// observation function h, prior, horizon T.
class Model {
 public:
  Model(Mat A, Vec h, Vec prior, double T);

  static std::vector<std::string> diagnose(const Mat& A, const Vec& h, const Vec& prior, double T);

  int d() const { return static_cast<int>(h_.size()); }
  const Mat& A() const { return A_; }
  const Mat& At() const { return At_; }
  const Vec& h() const { return h_; }
  const Vec& prior() const { return prior_; }
  double T() const { return T_; }
  double exit_rate(int x) const { return -A_(x, x); }

 private:
  Mat A_, At_;
  Vec h_, prior_;
  double T_;
};

// Gamma(f)(x) = sum_j A(x,j) (f(x) - f(j))^2
Vec carre_du_champ(const Mat& A, const Vec& f);

// mu(f) for a probability or any nonnegative weight vector.
double pair(const Vec& mu, const Vec& f);

Vec hadamard(const Vec& f, const Vec& g);

// Reference three-state model used throughout the acceptance suite.
Model reference_model();

}  // namespace dfl
