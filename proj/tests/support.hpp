#pragma once

#include "nss/common.hpp"

#include <random>

namespace nss::testing {

inline Mat random_matrix(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Mat M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = cplx(g(rng), g(rng));
  return M;
}

inline Vec random_vector(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = cplx(g(rng), g(rng));
  return v;
}

inline Mat random_hermitian(std::mt19937_64& rng, int n) {
  Mat M = random_matrix(rng, n);
  return (M + M.adjoint()) / 2.0;
}

// Similarity close to the identity plus a random part, condition number O(10).
inline Mat well_conditioned(std::mt19937_64& rng, int n) {
  return Mat::Identity(n, n) + 0.3 * random_matrix(rng, n) / std::sqrt(double(n));
}

// Block diagonal Jordan matrix from (eigenvalue, block sizes).
inline Mat jordan_matrix(const std::vector<std::pair<cplx, int>>& blocks) {
  int n = 0;
  for (auto& b : blocks) n += b.second;
  Mat J = Mat::Zero(n, n);
  int at = 0;
  for (auto& [lam, size] : blocks) {
    for (int k = 0; k < size; ++k) {
      J(at + k, at + k) = lam;
      if (k > 0) J(at + k - 1, at + k) = 1.0;
    }
    at += size;
  }
  return J;
}

}  // namespace nss::testing
