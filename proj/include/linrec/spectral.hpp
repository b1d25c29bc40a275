// Copyright 2026 The linrec authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "linrec/common.hpp"
#include "linrec/interactions.hpp"

namespace linrec {

// Item-space eigenbasis of the Gram matrix X^T X, the sufficient statistic
// shared by every closed-form model. sigma holds the singular values of X
// (square roots of the Gram eigenvalues), non-increasing; V columns are the
// matching orthonormal eigenvectors under the sign convention that each
// column's largest-magnitude entry is positive (ties to the lowest index).
struct SpectralDecomposition {
  Eigen::VectorXd sigma;  // r entries, sigma_1 >= ... >= sigma_r > tol
  Eigen::MatrixXd basis;  // n x r, orthonormal columns (V)
  double rank_tolerance = 0.0;
  std::uint32_t data_fingerprint = 0;

  Eigen::Index rank() const { return sigma.size(); }
  Eigen::Index num_items() const { return basis.rows(); }

  void require_rank(Eigen::Index k, const char* op) const {
    if (k < 1 || k > rank())
      throw NumericError(std::string(op) + ": requested rank " +
                         std::to_string(k) + " exceeds available rank " +
                         std::to_string(rank()));
  }
};

struct GramEigenOptions {
  // sigma_i below this threshold are treated as zero. Negative means the
  // default of 1e-10 * sigma_1, which sits below the eigensolver's noise
  // floor of roughly eps * sigma_1^2: exactly collinear columns may survive
  // it as tiny spurious directions, so pass an explicit tolerance to prune
  // them.
  double rank_tolerance = -1.0;
  // Dense eigendecomposition working set is estimated at 3 n^2 doubles; the
  // call refuses outright rather than thrash once the estimate exceeds this.
  std::size_t memory_budget_bytes = std::size_t{2} << 30;
};

// Builds the dense n x n Gram matrix of a sparse binary matrix.
inline Eigen::MatrixXd gram_matrix(const InteractionMatrix& data) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.num_items);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  for (const auto& row : data.rows) {
    for (std::size_t a = 0; a < row.size(); ++a)
      for (std::size_t b = a; b < row.size(); ++b)
        gram(row[a], row[b]) += 1.0;
  }
  gram = gram.selfadjointView<Eigen::Upper>();
  return gram;
}

namespace detail {

inline void apply_sign_convention(Eigen::MatrixXd& basis) {
  for (Eigen::Index c = 0; c < basis.cols(); ++c) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index r = 0; r < basis.rows(); ++r) {
      double a = std::abs(basis(r, c));
      if (a > best_abs + 0.0) {  // strict: ties keep the lowest index
        best_abs = a;
        best = r;
      }
    }
    if (basis(best, c) < 0.0) basis.col(c) = -basis.col(c);
  }
}

}  // namespace detail

// Symmetric eigendecomposition of X^T X. Eigenvalues below rank_tolerance^2
// are discarded, so all retained sigma exceed the tolerance.
inline SpectralDecomposition gram_eigen(const InteractionMatrix& data,
                                        const GramEigenOptions& opts = {}) {
  if (data.num_items == 0 || data.num_interactions() == 0)
    throw DataError("gram_eigen: empty interaction matrix");
  const std::size_t n = data.num_items;
  const std::size_t estimate = 3 * n * n * sizeof(double);
  if (estimate > opts.memory_budget_bytes)
    throw NumericError(
        "gram_eigen: " + std::to_string(n) + " items need ~" +
        std::to_string(estimate) + " bytes, over the budget of " +
        std::to_string(opts.memory_budget_bytes) +
        " (dense eigendecomposition does not scale past desk-sized item "
        "counts; raise the budget only if the host can take it)");

  Eigen::MatrixXd gram = gram_matrix(data);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success)
    throw NumericError("gram_eigen: eigendecomposition failed to converge");

  // Eigen returns eigenvalues ascending; flip to non-increasing.
  Eigen::VectorXd evals = solver.eigenvalues().reverse();
  Eigen::MatrixXd basis = solver.eigenvectors().rowwise().reverse();

  const double sigma_max = evals(0) > 0.0 ? std::sqrt(evals(0)) : 0.0;
  double tol = opts.rank_tolerance >= 0.0 ? opts.rank_tolerance
                                          : 1e-10 * sigma_max;
  Eigen::Index r = 0;
  while (r < evals.size() && evals(r) > tol * tol) ++r;
  if (r == 0) throw NumericError("gram_eigen: matrix is numerically zero");

  SpectralDecomposition spec;
  spec.sigma = evals.head(r).array().sqrt();
  spec.basis = basis.leftCols(r);
  spec.rank_tolerance = tol;
  spec.data_fingerprint = data.fingerprint();
  detail::apply_sign_convention(spec.basis);
  return spec;
}

// Projects a sparse binary row onto the eigenbasis: z = V_k^T x_u.
inline Eigen::VectorXd project_row(const SpectralDecomposition& spec,
                                   const std::vector<std::uint32_t>& items,
                                   Eigen::Index k) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(k);
  for (std::uint32_t item : items)
    z += spec.basis.row(item).head(k).transpose();
  return z;
}

// Left singular factors U_k = X V_k diag(1/sigma), reconstructed on demand.
inline Eigen::MatrixXd left_factors(const InteractionMatrix& data,
                                    const SpectralDecomposition& spec,
                                    Eigen::Index k) {
  spec.require_rank(k, "left_factors");
  const Eigen::Index m = static_cast<Eigen::Index>(data.num_users);
  Eigen::MatrixXd u(m, k);
  for (Eigen::Index row = 0; row < m; ++row)
    u.row(row) = project_row(spec, data.rows[row], k).transpose();
  for (Eigen::Index c = 0; c < k; ++c) u.col(c) /= spec.sigma(c);
  return u;
}

}  // namespace linrec
