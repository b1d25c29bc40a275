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
#include <map>
#include <string>
#include <vector>

#include "linrec/common.hpp"

namespace linrec {

// Where a model came from: fit name, scalar hyperparameters, fingerprints of
// the matrices it was built from, and any warnings raised during fitting.
struct Provenance {
  std::string model;
  std::map<std::string, double> params;
  std::vector<double> lambdas;  // per-dimension regularizers when applicable
  std::uint32_t data_fingerprint = 0;
  std::uint32_t spectral_fingerprint = 0;
  std::vector<std::string> notes;

  void note(const std::string& msg) { notes.push_back(msg); }
};

// Item-to-item similarity model W, either materialized (n x n) or factored
// as diag(left) * V diag(d) V^T * diag(right) with empty scales meaning ones.
// The zero_diagonal flag is honored by materialize() and all scoring paths.
struct SimilarityModel {
  enum class Kind { Dense, Factored };

  Kind kind = Kind::Dense;
  Eigen::MatrixXd dense;        // Kind::Dense; diagonal already zeroed if set
  Eigen::MatrixXd basis;        // Kind::Factored: V_k, n x k
  Eigen::VectorXd diag_ratios;  // d, k entries
  Eigen::VectorXd sigma;        // spectrum slice kept for retuning (optional)
  Eigen::VectorXd left_scale;   // n entries or empty
  Eigen::VectorXd right_scale;  // n entries or empty
  bool zero_diagonal = false;
  Provenance provenance;

  Eigen::Index num_items() const {
    return kind == Kind::Dense ? dense.rows() : basis.rows();
  }
  Eigen::Index factored_rank() const {
    return kind == Kind::Factored ? diag_ratios.size() : Eigen::Index{0};
  }
  bool has_left_scale() const { return left_scale.size() > 0; }
  bool has_right_scale() const { return right_scale.size() > 0; }

  // W_ii for a factored model, before any zero_diagonal removal.
  double factored_diagonal_entry(Eigen::Index i) const {
    double v =
        (basis.row(i).transpose().array().square() * diag_ratios.array())
            .sum();
    if (has_left_scale()) v *= left_scale(i);
    if (has_right_scale()) v *= right_scale(i);
    return v;
  }

  Eigen::MatrixXd materialize() const {
    if (kind == Kind::Dense) return dense;
    Eigen::MatrixXd left = basis;
    if (has_left_scale()) left.array().colwise() *= left_scale.array();
    Eigen::MatrixXd right = basis;
    if (has_right_scale()) right.array().colwise() *= right_scale.array();
    Eigen::MatrixXd w = left * diag_ratios.asDiagonal() * right.transpose();
    if (zero_diagonal) w.diagonal().setZero();
    return w;
  }
};

// Factorized model X ~ P Q^T. SpectralMf carries the spectrum slice it was
// built from so unseen users can be folded in through the encoder view; Wmf
// folds users in with one regularized least-squares step against Q.
struct FactorModel {
  enum class Kind { SpectralMf, Wmf };

  Kind kind = Kind::SpectralMf;
  Eigen::MatrixXd user_factors;  // P, m x k
  Eigen::MatrixXd item_factors;  // Q, n x k
  double shrinkage = 0.0;        // lambda' (SpectralMf) / lambda (Wmf)
  double alpha = 1.0;            // Wmf confidence weight on observed entries
  Eigen::VectorXd sigma;         // k entries (SpectralMf only)
  std::vector<double> objective_trace;  // Wmf, one entry per half-step
  Provenance provenance;

  Eigen::Index rank() const { return item_factors.cols(); }
  Eigen::Index num_items() const { return item_factors.rows(); }
};

// Per-dimension score accumulation shared by evaluation and grid search:
// adds V[:, from..to) * w[from..to) to scores, one column at a time in
// ascending order. The fixed per-column order means a sweep split at any
// rank boundary is bit-identical to a single pass over the union, which is
// what makes eigen-reuse grid cells match from-scratch fits.
inline void accumulate_factored_scores(const Eigen::MatrixXd& basis,
                                       const Eigen::VectorXd& weights,
                                       Eigen::Index from, Eigen::Index to,
                                       Eigen::VectorXd& scores) {
  for (Eigen::Index c = from; c < to; ++c)
    scores += basis.col(c) * weights(c);
}

}  // namespace linrec
