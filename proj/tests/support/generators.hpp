#pragma once

// Seeded generators for property-style tests.

#include "transpar/diffcore.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace transpar::testing {

using diff::Matrix;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin() { return integer(0, 1) == 1; }

  Matrix matrix(Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = uniform(-scale, scale);
    return m;
  }

  Eigen::VectorXd vector(Eigen::Index n, double scale = 1.0) {
    Eigen::VectorXd v(n);
    for (Eigen::Index k = 0; k < n; ++k) v(k) = uniform(-scale, scale);
    return v;
  }

  /// Values drawn from a small grid so that ties are common.
  Eigen::VectorXd tied_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index k = 0; k < n; ++k) v(k) = 0.25 * integer(-4, 4);
    return v;
  }

  std::vector<int> labels(std::size_t n, int classes) {
    std::vector<int> y(n);
    for (auto& v : y) v = integer(0, classes - 1);
    return y;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace transpar::testing
