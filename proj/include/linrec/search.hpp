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
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "linrec/closed_form.hpp"
#include "linrec/common.hpp"
#include "linrec/eval.hpp"
#include "linrec/interactions.hpp"
#include "linrec/metrics.hpp"
#include "linrec/model.hpp"
#include "linrec/rng.hpp"
#include "linrec/spectral.hpp"

namespace linrec {

struct GridSpec {
  std::vector<double> lambdas;
  std::vector<Eigen::Index> ks;  // ascending
  MetricSpec metric{MetricSpec::Kind::Ndcg, 100};

  void validate() const {
    if (lambdas.empty() || ks.empty())
      throw ConfigError("grid: lambda and k lists must be nonempty");
    for (double l : lambdas)
      if (l < 0) throw ConfigError("grid: lambdas must be nonnegative");
    for (std::size_t i = 0; i + 1 < ks.size(); ++i)
      if (ks[i] >= ks[i + 1])
        throw ConfigError("grid: ks must be strictly ascending");
    if (ks.front() < 1) throw ConfigError("grid: ks must be positive");
  }
};

struct GridCell {
  double lambda = 0.0;
  Eigen::Index k = 0;
  double value = 0.0;
  bool best = false;
};

struct GridResult {
  std::vector<GridCell> cells;  // sorted by value descending
  MetricSpec metric;

  const GridCell& best() const {
    if (cells.empty()) throw ConfigError("grid result is empty");
    return cells.front();
  }

  std::string to_csv() const {
    std::string out = "lambda,k," + metric.name() + ",best\n";
    for (const GridCell& cell : cells) {
      out += format_double(cell.lambda) + "," + std::to_string(cell.k) + "," +
             format_double(cell.value) + "," + (cell.best ? "1" : "0") + "\n";
    }
    return out;
  }
};

// Sweeps every (lambda, k) pair against one eigendecomposition. The
// decomposition is computed once by the caller; for fixed lambda the score
// vectors grow incrementally by column range as k increases, so each cell
// costs only the marginal columns yet remains bit-identical to a
// from-scratch fit_lrr + evaluate of that cell.
inline GridResult grid_search(const SpectralDecomposition& spec,
                              const Dataset& data, const GridSpec& grid,
                              bool exclude_seen = true) {
  grid.validate();
  const Eigen::Index kmax = grid.ks.back();
  spec.require_rank(kmax, "grid_search");
  const std::vector<FoldPair>& folds = data.validation_folds.empty()
                                           ? data.test_folds
                                           : data.validation_folds;
  if (folds.empty()) throw DataError("grid_search: no folds to evaluate");

  const std::size_t num_folds = folds.size();
  std::vector<Eigen::VectorXd> fold_z(num_folds);
  parallel_for(num_folds, [&](std::size_t f) {
    fold_z[f] = project_row(spec, folds[f].input_items, kmax);
  });

  const std::size_t num_ks = grid.ks.size();
  const std::size_t num_cells = grid.lambdas.size() * num_ks;
  std::vector<double> per_user(num_cells * num_folds);

  for (std::size_t li = 0; li < grid.lambdas.size(); ++li) {
    Eigen::VectorXd ratios(kmax);
    for (Eigen::Index i = 0; i < kmax; ++i)
      ratios(i) = lrr_ratio(spec.sigma(i), grid.lambdas[li]);
    parallel_for(num_folds, [&](std::size_t f) {
      Eigen::VectorXd weights = ratios.cwiseProduct(fold_z[f]);
      Eigen::VectorXd scores = Eigen::VectorXd::Zero(spec.num_items());
      Eigen::Index done = 0;
      for (std::size_t ki = 0; ki < num_ks; ++ki) {
        accumulate_factored_scores(spec.basis, weights, done, grid.ks[ki],
                                   scores);
        done = grid.ks[ki];
        Eigen::VectorXd masked = scores;
        if (exclude_seen)
          for (std::uint32_t item : folds[f].input_items)
            masked(item) = -std::numeric_limits<double>::infinity();
        std::vector<std::uint32_t> ranked =
            top_k_indices(masked, grid.metric.k);
        per_user[(li * num_ks + ki) * num_folds + f] =
            grid.metric.compute(ranked, folds[f].held_out_items);
      }
    });
  }

  GridResult result;
  result.metric = grid.metric;
  for (std::size_t li = 0; li < grid.lambdas.size(); ++li) {
    for (std::size_t ki = 0; ki < num_ks; ++ki) {
      GridCell cell;
      cell.lambda = grid.lambdas[li];
      cell.k = grid.ks[ki];
      std::vector<double> column(
          per_user.begin() +
              static_cast<std::ptrdiff_t>((li * num_ks + ki) * num_folds),
          per_user.begin() +
              static_cast<std::ptrdiff_t>((li * num_ks + ki + 1) * num_folds));
      cell.value = detail::mean_in_order(column);
      result.cells.push_back(cell);
    }
  }
  std::stable_sort(result.cells.begin(), result.cells.end(),
                   [](const GridCell& a, const GridCell& b) {
                     return a.value > b.value;
                   });
  result.cells.front().best = true;
  return result;
}

struct TuneConfig {
  double lambda0 = 1.0;
  double c = 0.0;        // half-range of the per-dimension search interval
  double t_scale = 1.0;  // score scaling inside the ranking loss
  int epochs = 10;
  std::size_t batch_size = 2048;
  std::uint64_t seed = 42;
  double learning_rate = 0.01;
  double dropout_rate = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (lambda0 < 0) throw ConfigError("tune: lambda must be nonnegative");
    if (c < 0) throw ConfigError("tune: c must be nonnegative");
    if (t_scale <= 0) throw ConfigError("tune: t-scale must be positive");
    if (epochs < 0) throw ConfigError("tune: epochs must be nonnegative");
    if (batch_size < 1) throw ConfigError("tune: batch size must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
      throw ConfigError("tune: dropout rate must lie in [0,1)");
    if (learning_rate <= 0)
      throw ConfigError("tune: learning rate must be positive");
  }
};

struct Triplet {
  std::uint32_t user;
  std::uint32_t pos;
  std::uint32_t neg;
};

// Result of the per-dimension regularizer search: raw parameters alpha_i,
// the derived lambda_i = lambda + c*tanh(alpha_i), the per-epoch mean loss
// over a fixed probe sample, and the resulting similarity model.
struct TunedModel {
  Eigen::VectorXd alphas;
  std::vector<double> lambdas;
  double lambda0 = 0.0;
  double c = 0.0;
  std::vector<double> loss_trace;
  SimilarityModel model;
};

namespace detail {

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow for large |x|.
inline double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Adaptive first-order optimizer with bias-corrected first and second
// moment estimates.
struct Adam {
  double lr, beta1, beta2, epsilon;
  Eigen::VectorXd m, v;
  long step_count = 0;

  Adam(Eigen::Index size, const TuneConfig& cfg)
      : lr(cfg.learning_rate),
        beta1(cfg.beta1),
        beta2(cfg.beta2),
        epsilon(cfg.epsilon),
        m(Eigen::VectorXd::Zero(size)),
        v(Eigen::VectorXd::Zero(size)) {}

  void step(const Eigen::VectorXd& grad, Eigen::VectorXd& params) {
    ++step_count;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    double mc = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    double vc = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    params.array() -=
        lr * (m.array() / mc) / ((v.array() / vc).sqrt() + epsilon);
  }
};

// Uniform triplet sampler over users with at least one positive and one
// negative item; the negative is rejection-sampled outside the user's row.
struct TripletSampler {
  const InteractionMatrix& train;
  std::vector<std::uint32_t> eligible;

  explicit TripletSampler(const InteractionMatrix& data) : train(data) {
    for (std::uint32_t u = 0; u < data.num_users; ++u) {
      std::size_t degree = data.rows[u].size();
      if (degree >= 1 && degree < data.num_items) eligible.push_back(u);
    }
    if (eligible.empty())
      throw DataError(
          "triplet sampling: no user has both a positive and a negative item");
  }

  Triplet next(Rng& rng) const {
    std::uint32_t u = eligible[rng.next_index(eligible.size())];
    const auto& row = train.rows[u];
    std::uint32_t i =
        row[rng.next_index(row.size())];
    std::uint32_t j;
    std::size_t guard = 0;
    do {
      j = static_cast<std::uint32_t>(rng.next_index(train.num_items));
      if (++guard > 100000)
        throw NumericError("triplet sampling: negative draw did not converge");
    } while (std::binary_search(row.begin(), row.end(), j));
    return Triplet{u, i, j};
  }
};

inline std::size_t steps_per_epoch(const InteractionMatrix& train,
                                   std::size_t batch_size) {
  std::size_t n = train.num_interactions();
  return std::max<std::size_t>(1, (n + batch_size - 1) / batch_size);
}

}  // namespace detail

// Mean pairwise ranking loss -log sigmoid(t * (score(u,i) - score(u,j)))
// over explicit triplets, scoring with the user's full training row.
inline double bpr_loss(const SimilarityModel& model,
                       const std::vector<Triplet>& triplets, double t_scale,
                       const InteractionMatrix& train) {
  if (triplets.empty()) throw ConfigError("bpr_loss: no triplets");
  std::unordered_map<std::uint32_t, Eigen::VectorXd> cache;
  double total = 0.0;
  for (const Triplet& t : triplets) {
    if (t.user >= train.num_users)
      throw DataError("bpr_loss: triplet user out of range");
    const auto& row = train.rows[t.user];
    if (!std::binary_search(row.begin(), row.end(), t.pos) ||
        std::binary_search(row.begin(), row.end(), t.neg))
      throw DataError("bpr_loss: malformed triplet (i must be observed, "
                      "j unobserved)");
    auto it = cache.find(t.user);
    if (it == cache.end())
      it = cache.emplace(t.user, score_user(model, row)).first;
    double diff = it->second(t.pos) - it->second(t.neg);
    total += detail::stable_softplus(-t_scale * diff);
  }
  return total / static_cast<double>(triplets.size());
}

// Gradient search over per-dimension regularization strengths. Each
// lambda_i = lambda + c*tanh(alpha_i) stays strictly inside (lambda-c,
// lambda+c); alpha starts at 0 so the initial model is exactly the
// constant-lambda closed form. One epoch is ceil(interactions/batch_size)
// batches of sampled (user, positive, negative) triplets; the optional
// dropout zeroes entries of the user's input row and rescales the survivors
// by 1/(1-rate).
inline TunedModel tune_lambdas(const SpectralDecomposition& spec,
                               Eigen::Index k, const InteractionMatrix& train,
                               const TuneConfig& cfg) {
  cfg.validate();
  spec.require_rank(k, "tune_lambdas");
  if (spec.data_fingerprint != train.fingerprint())
    log_warn("tune_lambdas: decomposition fingerprint differs from the "
             "training matrix");

  TunedModel tuned;
  tuned.lambda0 = cfg.lambda0;
  tuned.c = cfg.c;
  tuned.alphas = Eigen::VectorXd::Zero(k);

  Eigen::VectorXd sigma2 = spec.sigma.head(k).array().square();
  Eigen::VectorXd lambdas(k);
  Eigen::VectorXd ratios(k);
  auto refresh = [&] {
    for (Eigen::Index i = 0; i < k; ++i) {
      lambdas(i) = cfg.lambda0 + cfg.c * std::tanh(tuned.alphas(i));
      ratios(i) = sigma2(i) / (sigma2(i) + lambdas(i));
    }
  };
  refresh();

  detail::TripletSampler sampler(train);
  detail::Adam adam(k, cfg);
  Rng rng(cfg.seed);
  const std::size_t steps = detail::steps_per_epoch(train, cfg.batch_size);
  const double keep = 1.0 - cfg.dropout_rate;

  // The per-epoch loss is measured on one fixed epoch-sized probe sample so
  // that trace entries are comparable across epochs; fresh minibatch means
  // would bury the tuner's small real improvements under sampling noise.
  // Training batches themselves stay freshly sampled.
  Rng probe_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t probe_count =
      std::min<std::size_t>(steps * cfg.batch_size, 16384);
  std::vector<Eigen::VectorXd> probe_g;
  probe_g.reserve(probe_count);
  {
    std::vector<Eigen::VectorXd> z_cache(train.num_users);
    std::vector<bool> cached(train.num_users, false);
    for (std::size_t i = 0; i < probe_count; ++i) {
      Triplet t = sampler.next(probe_rng);
      if (!cached[t.user]) {
        z_cache[t.user] = project_row(spec, train.rows[t.user], k);
        cached[t.user] = true;
      }
      probe_g.push_back(z_cache[t.user].cwiseProduct(
          (spec.basis.row(t.pos).head(k) - spec.basis.row(t.neg).head(k))
              .transpose()));
    }
  }
  auto probe_loss = [&] {
    double total = 0.0;
    for (const Eigen::VectorXd& g : probe_g)
      total += detail::stable_softplus(-cfg.t_scale * ratios.dot(g));
    return total / static_cast<double>(probe_g.size());
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t step = 0; step < steps; ++step) {
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(k);
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        Triplet t = sampler.next(rng);
        Eigen::VectorXd z = Eigen::VectorXd::Zero(k);
        for (std::uint32_t item : train.rows[t.user]) {
          if (cfg.dropout_rate > 0.0 && rng.next_double() < cfg.dropout_rate)
            continue;
          z += spec.basis.row(item).head(k).transpose();
        }
        if (cfg.dropout_rate > 0.0) z /= keep;
        // Score difference decomposes per dimension as d_i * g_i with
        // g_i = z_i (V_pos,i - V_neg,i).
        Eigen::VectorXd g =
            z.cwiseProduct((spec.basis.row(t.pos).head(k) -
                            spec.basis.row(t.neg).head(k))
                               .transpose());
        double diff = cfg.t_scale * ratios.dot(g);
        double coef = -detail::stable_sigmoid(-diff) * cfg.t_scale;
        for (Eigen::Index i = 0; i < k; ++i) {
          double denom = sigma2(i) + lambdas(i);
          double d_ratio = -sigma2(i) / (denom * denom);
          double th = std::tanh(tuned.alphas(i));
          grad(i) += coef * g(i) * d_ratio * cfg.c * (1.0 - th * th);
        }
      }
      grad /= static_cast<double>(cfg.batch_size);
      adam.step(grad, tuned.alphas);
      refresh();
    }
    tuned.loss_trace.push_back(probe_loss());
  }

  tuned.lambdas.assign(lambdas.data(), lambdas.data() + k);
  tuned.model = fit_lrr(spec, k, RegularizerSpec::per_dimension(tuned.lambdas));
  tuned.model.provenance.model = "lrr_tuned";
  tuned.model.provenance.params["lambda"] = cfg.lambda0;
  tuned.model.provenance.params["c"] = cfg.c;
  tuned.model.provenance.params["t_scale"] = cfg.t_scale;
  tuned.model.provenance.params["epochs"] = cfg.epochs;
  tuned.model.provenance.params["seed"] = static_cast<double>(cfg.seed);
  tuned.model.provenance.data_fingerprint = train.fingerprint();
  return tuned;
}

// CSV exports backing the loss and regularizer diagnostics.
inline std::string loss_trace_csv(const std::vector<double>& trace) {
  std::string out = "epoch,loss\n";
  for (std::size_t e = 0; e < trace.size(); ++e)
    out += std::to_string(e) + "," + format_double(trace[e]) + "\n";
  return out;
}

inline std::string tuned_lambdas_csv(const TunedModel& tuned) {
  std::string out = "i,sigma_i,lambda_i,d_i\n";
  for (Eigen::Index i = 0; i < tuned.alphas.size(); ++i) {
    out += std::to_string(i) + "," + format_double(tuned.model.sigma(i)) +
           "," + format_double(tuned.lambdas[static_cast<std::size_t>(i)]) +
           "," + format_double(tuned.model.diag_ratios(i)) + "\n";
  }
  return out;
}

}  // namespace linrec
