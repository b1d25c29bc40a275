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
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "linrec/common.hpp"
#include "linrec/interactions.hpp"
#include "linrec/metrics.hpp"
#include "linrec/model.hpp"

namespace linrec {

// One ranking metric at one cutoff, e.g. recall@20 or ndcg@100.
struct MetricSpec {
  enum class Kind { Recall, Ndcg };

  Kind kind = Kind::Recall;
  std::size_t k = 20;

  std::string name() const {
    return (kind == Kind::Recall ? "recall@" : "ndcg@") + std::to_string(k);
  }

  static MetricSpec parse(const std::string& text) {
    auto at = text.find('@');
    if (at == std::string::npos)
      throw ConfigError("metric must look like recall@20 or ndcg@100, got '" +
                        text + "'");
    std::string head = text.substr(0, at);
    MetricSpec spec;
    if (head == "recall")
      spec.kind = Kind::Recall;
    else if (head == "ndcg")
      spec.kind = Kind::Ndcg;
    else
      throw ConfigError("unknown metric '" + head + "'");
    try {
      spec.k = static_cast<std::size_t>(std::stoul(text.substr(at + 1)));
    } catch (const std::exception&) {
      throw ConfigError("bad metric cutoff in '" + text + "'");
    }
    if (spec.k == 0) throw ConfigError("metric cutoff must be positive");
    return spec;
  }

  double compute(const std::vector<std::uint32_t>& ranked,
                 const std::vector<std::uint32_t>& held) const {
    return kind == Kind::Recall ? recall_at_k(ranked, held, k)
                                : ndcg_at_k(ranked, held, k);
  }
};

struct EvalOptions {
  std::vector<MetricSpec> metrics{{MetricSpec::Kind::Recall, 20},
                                  {MetricSpec::Kind::Recall, 50},
                                  {MetricSpec::Kind::Ndcg, 100}};
  bool exclude_seen = true;
  bool retain_per_user = false;
};

struct MetricValue {
  MetricSpec spec;
  double mean = 0.0;
  std::vector<double> per_user;  // filled only when retained
};

struct EvalReport {
  std::string protocol;
  Provenance provenance;
  std::size_t num_users = 0;
  std::size_t skipped_users = 0;
  std::vector<MetricValue> values;

  double at(const std::string& name) const {
    for (const MetricValue& v : values)
      if (v.spec.name() == name) return v.mean;
    throw ConfigError("no metric named '" + name + "' in report");
  }

  nlohmann::json to_json() const {
    nlohmann::json metrics = nlohmann::json::object();
    for (const MetricValue& v : values) metrics[v.spec.name()] = v.mean;
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [key, value] : provenance.params) params[key] = value;
    return nlohmann::json{{"protocol", protocol},
                          {"model", provenance.model},
                          {"params", params},
                          {"num_users", num_users},
                          {"skipped_users", skipped_users},
                          {"metrics", metrics}};
  }

  std::string to_text() const {
    std::string out;
    for (const MetricValue& v : values)
      out += v.spec.name() + " " + format_double(v.mean) + "\n";
    return out;
  }
};

// Scores every item for one visit history against a similarity model:
// scores = x_u W with binary x_u over input_items. Seen items drop to
// -infinity when exclude_seen is set.
inline Eigen::VectorXd score_user(const SimilarityModel& model,
                                  const std::vector<std::uint32_t>& input,
                                  bool exclude_seen = false) {
  if (input.empty()) throw DataError("score_user: empty fold-in set");
  const Eigen::Index n = model.num_items();
  Eigen::VectorXd scores = Eigen::VectorXd::Zero(n);
  if (model.kind == SimilarityModel::Kind::Dense) {
    for (std::uint32_t item : input)
      scores += model.dense.row(item).transpose();
  } else {
    const Eigen::Index k = model.factored_rank();
    Eigen::VectorXd z = Eigen::VectorXd::Zero(k);
    for (std::uint32_t item : input) {
      if (model.has_left_scale())
        z += model.left_scale(item) * model.basis.row(item).transpose();
      else
        z += model.basis.row(item).transpose();
    }
    Eigen::VectorXd weights = model.diag_ratios.cwiseProduct(z);
    accumulate_factored_scores(model.basis, weights, 0, k, scores);
    if (model.has_right_scale()) scores.array() *= model.right_scale.array();
    if (model.zero_diagonal) {
      // Diagonal removal happens after any head/tail scaling, so subtract
      // the scaled W_ii contribution of each input item.
      for (std::uint32_t item : input)
        scores(item) -= model.factored_diagonal_entry(item);
    }
  }
  if (exclude_seen)
    for (std::uint32_t item : input)
      scores(item) = -std::numeric_limits<double>::infinity();
  return scores;
}

namespace detail {

// Fold-in for a weighted factor model: one alternating-least-squares user
// update against the item factors, with confidence alpha on observed entries.
inline Eigen::VectorXd wmf_fold_in(const FactorModel& model,
                                   const Eigen::MatrixXd& item_gram,
                                   const std::vector<std::uint32_t>& input) {
  const Eigen::Index k = model.rank();
  Eigen::MatrixXd system = item_gram;
  system.diagonal().array() += model.shrinkage;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
  for (std::uint32_t item : input) {
    Eigen::VectorXd q = model.item_factors.row(item).transpose();
    system.noalias() += (model.alpha - 1.0) * q * q.transpose();
    rhs += model.alpha * q;
  }
  return system.ldlt().solve(rhs);
}

}  // namespace detail

// Scores every item for one visit history against a factor model. Spectral
// factor models fold in through the eigenbasis, reproducing the encoder
// view x_u V_k diag(max(0, 1 - lambda'/sigma)) V_k^T; weighted models run
// one ridge fold-in solve.
inline Eigen::VectorXd score_user(const FactorModel& model,
                                  const std::vector<std::uint32_t>& input,
                                  bool exclude_seen = false) {
  if (input.empty()) throw DataError("score_user: empty fold-in set");
  const Eigen::Index k = model.rank();
  Eigen::VectorXd scores;
  if (model.kind == FactorModel::Kind::SpectralMf) {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(k);
    for (std::uint32_t item : input)
      z += model.item_factors.row(item).transpose();
    Eigen::VectorXd p(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      double shrunk = model.sigma(i) - model.shrinkage;
      p(i) = shrunk > 0.0 ? z(i) * (shrunk / model.sigma(i)) : 0.0;
    }
    scores = model.item_factors * p;
  } else {
    Eigen::MatrixXd gram = model.item_factors.transpose() * model.item_factors;
    Eigen::VectorXd p = detail::wmf_fold_in(model, gram, input);
    scores = model.item_factors * p;
  }
  if (exclude_seen)
    for (std::uint32_t item : input)
      scores(item) = -std::numeric_limits<double>::infinity();
  return scores;
}

namespace detail {

// Sums in index order, independent of how the values were produced.
inline double mean_in_order(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

// Shared fold loop: the scorer maps a fold-in item set to masked scores;
// ranking and per-user metrics run in parallel, the reduction walks folds in
// order so results do not depend on thread count.
template <typename Scorer>
EvalReport evaluate_with(Scorer&& scorer, const std::vector<FoldPair>& folds,
                         const EvalOptions& options) {
  if (folds.empty()) throw DataError("evaluate: no folds to evaluate");
  if (options.metrics.empty()) throw ConfigError("evaluate: no metrics given");
  std::size_t max_k = 0;
  for (const MetricSpec& m : options.metrics) max_k = std::max(max_k, m.k);

  const std::size_t num_folds = folds.size();
  const std::size_t num_metrics = options.metrics.size();
  std::vector<double> per_user(num_folds * num_metrics);

  parallel_for(num_folds, [&](std::size_t f) {
    const FoldPair& fold = folds[f];
    Eigen::VectorXd scores = scorer(fold.input_items);
    std::vector<std::uint32_t> ranked = top_k_indices(scores, max_k);
    for (std::size_t j = 0; j < num_metrics; ++j)
      per_user[f * num_metrics + j] =
          options.metrics[j].compute(ranked, fold.held_out_items);
  });

  EvalReport report;
  report.num_users = num_folds;
  for (std::size_t j = 0; j < num_metrics; ++j) {
    MetricValue value;
    value.spec = options.metrics[j];
    std::vector<double> column(num_folds);
    for (std::size_t f = 0; f < num_folds; ++f)
      column[f] = per_user[f * num_metrics + j];
    value.mean = mean_in_order(column);
    if (options.retain_per_user) value.per_user = std::move(column);
    report.values.push_back(std::move(value));
  }
  return report;
}

}  // namespace detail

inline EvalReport evaluate(const SimilarityModel& model,
                           const std::vector<FoldPair>& folds,
                           const EvalOptions& options = {}) {
  EvalReport report = detail::evaluate_with(
      [&](const std::vector<std::uint32_t>& input) {
        return score_user(model, input, options.exclude_seen);
      },
      folds, options);
  report.provenance = model.provenance;
  return report;
}

inline EvalReport evaluate(const FactorModel& model,
                           const std::vector<FoldPair>& folds,
                           const EvalOptions& options = {}) {
  Eigen::MatrixXd gram;
  if (model.kind == FactorModel::Kind::Wmf)
    gram = model.item_factors.transpose() * model.item_factors;
  EvalReport report = detail::evaluate_with(
      [&](const std::vector<std::uint32_t>& input) {
        Eigen::VectorXd scores;
        if (model.kind == FactorModel::Kind::Wmf) {
          Eigen::VectorXd p = detail::wmf_fold_in(model, gram, input);
          scores = model.item_factors * p;
          if (options.exclude_seen)
            for (std::uint32_t item : input)
              scores(item) = -std::numeric_limits<double>::infinity();
        } else {
          scores = score_user(model, input, options.exclude_seen);
        }
        return scores;
      },
      folds, options);
  report.provenance = model.provenance;
  return report;
}

}  // namespace linrec
