#pragma once

#include <random>

#include "psmom/schur_scaling.hpp"
#include "psmom/types.hpp"

namespace testing {

inline psmom::MatrixXc random_matrix(int rows, int cols, std::mt19937& rng) {
  std::normal_distribution<double> g;
  psmom::MatrixXc m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) m(i, j) = {g(rng), g(rng)};
  }
  return m;
}

inline psmom::VectorXc random_vector(int n, std::mt19937& rng) {
  return random_matrix(n, 1, rng);
}

// R = R_1 R_2 ... R_{L-1}, each R_k the identity plus alpha blocks in row p
inline psmom::MatrixXc materialize_right(const psmom::ScalingSet& s) {
  const int n = s.size();
  const auto& o = s.offsets;
  psmom::MatrixXc r = psmom::MatrixXc::Identity(n, n);
  for (const auto& step : s.steps) {
    psmom::MatrixXc rk = psmom::MatrixXc::Identity(n, n);
    const int p = step.leaf;
    for (size_t c = 0; c < step.neighbors.size(); ++c) {
      const int j = step.neighbors[c];
      rk.block(o[p], o[j], o[p + 1] - o[p], o[j + 1] - o[j]) = step.right[c];
    }
    r = r * rk;
  }
  return r;
}

// L = L_{L-1} ... L_1, each L_k the identity plus alpha' blocks in column p
inline psmom::MatrixXc materialize_left(const psmom::ScalingSet& s) {
  const int n = s.size();
  const auto& o = s.offsets;
  psmom::MatrixXc l = psmom::MatrixXc::Identity(n, n);
  for (const auto& step : s.steps) {
    psmom::MatrixXc lk = psmom::MatrixXc::Identity(n, n);
    const int p = step.leaf;
    for (size_t c = 0; c < step.neighbors.size(); ++c) {
      const int j = step.neighbors[c];
      lk.block(o[j], o[p], o[j + 1] - o[j], o[p + 1] - o[p]) =
          s.symmetric ? psmom::MatrixXc(step.right[c].transpose()) : step.left[c];
    }
    l = lk * l;
  }
  return l;
}

}  // namespace testing
