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
#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "linrec/common.hpp"
#include "linrec/interactions.hpp"
#include "linrec/model.hpp"
#include "linrec/rng.hpp"

namespace linrec {

// Weighted matrix factorization with confidence weights: observed entries
// carry weight alpha, missing entries weight 1.
struct WmfConfig {
  Eigen::Index k = 10;
  double lambda = 0.1;
  double alpha = 10.0;
  int iterations = 15;
  std::uint64_t seed = 42;

  void validate() const {
    if (k < 1) throw ConfigError("wmf: k must be positive");
    if (lambda < 0) throw ConfigError("wmf: lambda must be nonnegative");
    if (alpha < 1.0) throw ConfigError("wmf: alpha must be at least 1");
    if (iterations < 1) throw ConfigError("wmf: iterations must be positive");
  }
};

namespace detail {

// Least-squares update for every row of `factors`, holding `other` fixed.
// The per-row system is the fixed side's Gram matrix plus a correction for
// the alpha-weighted observed entries, so cost scales with observed entries
// rather than the full matrix.
inline void wmf_half_step(Eigen::MatrixXd& factors,
                          const Eigen::MatrixXd& other,
                          const std::vector<std::vector<std::uint32_t>>& lists,
                          double lambda, double alpha,
                          std::atomic<bool>& warned) {
  const Eigen::Index k = other.cols();
  Eigen::MatrixXd gram = other.transpose() * other;
  parallel_for(lists.size(), [&](std::size_t row) {
    Eigen::MatrixXd system = gram;
    system.diagonal().array() += lambda;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
    for (std::uint32_t idx : lists[row]) {
      Eigen::VectorXd v = other.row(idx).transpose();
      system.noalias() += (alpha - 1.0) * v * v.transpose();
      rhs += alpha * v;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
    Eigen::VectorXd solution = ldlt.solve(rhs);
    if (ldlt.info() != Eigen::Success || !solution.allFinite()) {
      if (!warned.exchange(true))
        log_warn("wmf: singular subproblem, regularizing by lambda + 1e-10");
      system.diagonal().array() += 1e-10;
      solution = system.ldlt().solve(rhs);
    }
    factors.row(row) = solution.transpose();
  });
}

// Weighted objective sum_{u,i} C_ui (x_ui - p_u.q_i)^2 + lambda(|P|^2+|Q|^2).
// The all-ones background term is trace((P^T P)(Q^T Q)); observed entries
// swap their weight-1 contribution for the alpha-weighted one.
inline double wmf_objective(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q,
                            const std::vector<std::vector<std::uint32_t>>& rows,
                            double lambda, double alpha) {
  double background =
      ((p.transpose() * p) * (q.transpose() * q)).trace();
  std::vector<double> partial(rows.size());
  parallel_for(rows.size(), [&](std::size_t u) {
    double acc = 0.0;
    for (std::uint32_t i : rows[u]) {
      double s = p.row(u).dot(q.row(i));
      double r = 1.0 - s;
      acc += alpha * r * r - s * s;
    }
    partial[u] = acc;
  });
  double observed = 0.0;
  for (double v : partial) observed += v;
  return background + observed +
         lambda * (p.squaredNorm() + q.squaredNorm());
}

}  // namespace detail

// Alternating least squares: exact row updates of P then Q per round, with
// the objective recorded after every half-step. Initialization is a seeded
// Gaussian scaled by 0.01 (P rows first, then Q rows).
inline FactorModel fit_wmf(const InteractionMatrix& data,
                           const WmfConfig& cfg) {
  cfg.validate();
  const Eigen::Index m = static_cast<Eigen::Index>(data.num_users);
  const Eigen::Index n = static_cast<Eigen::Index>(data.num_items);
  if (cfg.k > std::min(m, n))
    throw ConfigError("wmf: k exceeds min(num_users, num_items)");

  std::vector<std::vector<std::uint32_t>> cols(data.num_items);
  for (std::size_t u = 0; u < data.num_users; ++u)
    for (std::uint32_t i : data.rows[u])
      cols[i].push_back(static_cast<std::uint32_t>(u));

  Rng rng(cfg.seed);
  Eigen::MatrixXd p(m, cfg.k);
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index c = 0; c < cfg.k; ++c)
      p(r, c) = 0.01 * rng.next_gaussian();
  Eigen::MatrixXd q(n, cfg.k);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < cfg.k; ++c)
      q(r, c) = 0.01 * rng.next_gaussian();

  FactorModel model;
  model.objective_trace.reserve(static_cast<std::size_t>(cfg.iterations) * 2);
  std::atomic<bool> warned{false};
  for (int round = 0; round < cfg.iterations; ++round) {
    detail::wmf_half_step(p, q, data.rows, cfg.lambda, cfg.alpha, warned);
    model.objective_trace.push_back(
        detail::wmf_objective(p, q, data.rows, cfg.lambda, cfg.alpha));
    detail::wmf_half_step(q, p, cols, cfg.lambda, cfg.alpha, warned);
    model.objective_trace.push_back(
        detail::wmf_objective(p, q, data.rows, cfg.lambda, cfg.alpha));
  }

  model.kind = FactorModel::Kind::Wmf;
  model.user_factors = std::move(p);
  model.item_factors = std::move(q);
  model.shrinkage = cfg.lambda;
  model.alpha = cfg.alpha;
  model.provenance.model = "wmf";
  model.provenance.params["k"] = static_cast<double>(cfg.k);
  model.provenance.params["lambda"] = cfg.lambda;
  model.provenance.params["alpha"] = cfg.alpha;
  model.provenance.params["iterations"] = cfg.iterations;
  model.provenance.params["seed"] = static_cast<double>(cfg.seed);
  model.provenance.data_fingerprint = data.fingerprint();
  return model;
}

}  // namespace linrec
