#pragma once

#include "dfl/model.hpp"

#include <random>

namespace dfl::testing {

inline constexpr int kInstances = 1000;

// Random valid generator, observation function and prior of dimension 2..5.
struct RandomModelSource {
  explicit RandomModelSource(std::uint64_t seed) : gen(seed) {}

  int dim() { return std::uniform_int_distribution<int>(2, 5)(gen); }

  Mat rate_matrix(int d) {
    std::uniform_real_distribution<double> u(0.0, 3.0);
    std::bernoulli_distribution sparse(0.2);
    Mat A = Mat::Zero(d, d);
    for (int x = 0; x < d; ++x) {
      for (int j = 0; j < d; ++j)
        if (j != x && !sparse(gen)) A(x, j) = u(gen);
      A(x, x) = -(A.row(x).sum() - A(x, x));
    }
    return A;
  }

  Vec function(int d, double scale = 2.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Vec f(d);
    for (int x = 0; x < d; ++x) f(x) = u(gen);
    return f;
  }

  Vec prob(int d) {
    std::gamma_distribution<double> g(1.0, 1.0);
    Vec p(d);
    for (int x = 0; x < d; ++x) p(x) = g(gen);
    return p / p.sum();
  }

  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen); }

  Model model(int d) { return Model(rate_matrix(d), function(d, 1.5), prob(d), 1.0); }

  std::mt19937_64 gen;
};

}  // namespace dfl::testing
