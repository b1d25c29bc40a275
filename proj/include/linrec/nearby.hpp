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
#include <utility>
#include <vector>

#include "linrec/common.hpp"
#include "linrec/interactions.hpp"
#include "linrec/model.hpp"
#include "linrec/rng.hpp"
#include "linrec/search.hpp"

namespace linrec {

// Raw logits for the head/tail rescaling W_HT = diagM(s(h)) W diagM(s(t));
// the effective per-item factors s(h_i), s(t_i) stay strictly inside (0,1).
struct HeadTailParams {
  Eigen::VectorXd h;
  Eigen::VectorXd t;

  static HeadTailParams uniform(Eigen::Index n, double logit) {
    HeadTailParams p;
    p.h = Eigen::VectorXd::Constant(n, logit);
    p.t = Eigen::VectorXd::Constant(n, logit);
    return p;
  }
};

// Sparsification state: the mask cut, the surviving entries (row-major
// order), and one logit per survivor. Masked entries are dropped outright,
// so their reweighting gradient is identically zero either way.
struct SparsifyParams {
  double threshold = 0.0;
  std::vector<std::uint32_t> rows;
  std::vector<std::uint32_t> cols;
  Eigen::VectorXd s_logits;

  std::size_t survivors() const { return rows.size(); }
};

namespace detail {

inline double sigmoid_prime(double s) { return s * (1.0 - s); }

}  // namespace detail

// Threshold that keeps roughly the given top fraction of entries by value,
// taken from the empirical quantile of the materialized matrix.
inline double sparsify_threshold(const SimilarityModel& w,
                                 double keep_fraction = 0.10) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw ConfigError("sparsify: keep fraction must lie in (0,1]");
  Eigen::MatrixXd dense = w.materialize();
  std::vector<double> entries(dense.data(), dense.data() + dense.size());
  std::sort(entries.begin(), entries.end());
  std::size_t keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             static_cast<double>(entries.size()) * keep_fraction));
  return entries[entries.size() - keep];
}

// Builds the mask for a model at a threshold, with every survivor's logit
// set to init_logit.
inline SparsifyParams make_sparsify_params(const SimilarityModel& w,
                                           double threshold,
                                           double init_logit = 6.0) {
  Eigen::MatrixXd dense = w.materialize();
  SparsifyParams params;
  params.threshold = threshold;
  for (Eigen::Index r = 0; r < dense.rows(); ++r)
    for (Eigen::Index c = 0; c < dense.cols(); ++c)
      if (dense(r, c) >= threshold) {
        params.rows.push_back(static_cast<std::uint32_t>(r));
        params.cols.push_back(static_cast<std::uint32_t>(c));
      }
  params.s_logits = Eigen::VectorXd::Constant(
      static_cast<Eigen::Index>(params.rows.size()), init_logit);
  if (params.rows.empty())
    log_warn("sparsify: threshold " + format_double(threshold) +
             " masks every entry; the model is the zero matrix");
  return params;
}

// W_HT = diagM(s(h)) W diagM(s(t)). Factored models stay factored: the
// diagonal scalings fold into per-item row scales on each side.
inline SimilarityModel apply_ht(const SimilarityModel& w,
                                const HeadTailParams& params) {
  const Eigen::Index n = w.num_items();
  if (params.h.size() != n || params.t.size() != n)
    throw ConfigError("apply_ht: logit vectors do not match the item count");
  Eigen::VectorXd head = params.h.unaryExpr(&detail::stable_sigmoid);
  Eigen::VectorXd tail = params.t.unaryExpr(&detail::stable_sigmoid);

  SimilarityModel out = w;
  if (out.kind == SimilarityModel::Kind::Dense) {
    out.dense.array().colwise() *= head.array();
    out.dense.array().rowwise() *= tail.transpose().array();
  } else {
    out.left_scale =
        out.has_left_scale() ? out.left_scale.cwiseProduct(head) : head;
    out.right_scale =
        out.has_right_scale() ? out.right_scale.cwiseProduct(tail) : tail;
  }
  out.provenance.note("ht augmentation applied");
  return out;
}

// W_S = s(S) .* W .* (W >= threshold): masked entries become exactly zero,
// survivors are rescaled by their logit's sigmoid. The stored mask must
// match this model at the stored threshold.
inline SimilarityModel apply_sparsify(const SimilarityModel& w,
                                      const SparsifyParams& params) {
  Eigen::MatrixXd dense = w.materialize();
  const Eigen::Index n = dense.rows();
  std::size_t expected = 0;
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c)
      if (dense(r, c) >= params.threshold) ++expected;
  if (expected != params.survivors())
    throw DataError(
        "apply_sparsify: mask does not match this model at threshold " +
        format_double(params.threshold));

  SimilarityModel out;
  out.kind = SimilarityModel::Kind::Dense;
  out.dense = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t e = 0; e < params.survivors(); ++e) {
    Eigen::Index r = params.rows[e];
    Eigen::Index c = params.cols[e];
    if (dense(r, c) < params.threshold)
      throw DataError(
          "apply_sparsify: mask does not match this model at threshold " +
          format_double(params.threshold));
    out.dense(r, c) =
        detail::stable_sigmoid(params.s_logits(static_cast<Eigen::Index>(e))) *
        dense(r, c);
  }
  out.zero_diagonal = w.zero_diagonal;
  out.provenance = w.provenance;
  out.provenance.params["sparsify_threshold"] = params.threshold;
  out.provenance.note("sparsify augmentation applied");
  return out;
}

// W' = W - diagM(diag(W)); idempotent.
inline SimilarityModel remove_diagonal(const SimilarityModel& w) {
  SimilarityModel out = w;
  if (out.kind == SimilarityModel::Kind::Dense) out.dense.diagonal().setZero();
  out.zero_diagonal = true;
  if (!w.zero_diagonal) out.provenance.note("diagonal removed");
  return out;
}

enum class NearbyMode { HeadTail, Sparsify };

struct NearbyResult {
  SimilarityModel model;
  std::vector<double> loss_trace;
  HeadTailParams ht;
  SparsifyParams sparsify;
};

// Retunes an already-fitted similarity matrix under the pairwise ranking
// loss, touching only the augmentation parameters; the base W stays frozen.
// Logits start at +6 so the initial augmented model is a near-uniform
// ~0.9975 rescale per side of the base and preserves its rankings. When
// rmd is set, the diagonal is removed in every forward pass, after the
// head/tail scaling.
inline NearbyResult tune_nearby(const SimilarityModel& w, NearbyMode mode,
                                const InteractionMatrix& train,
                                const TuneConfig& cfg, bool rmd = false,
                                double threshold =
                                    std::numeric_limits<double>::quiet_NaN()) {
  cfg.validate();
  const Eigen::Index n = w.num_items();
  if (static_cast<std::size_t>(n) != train.num_items)
    throw ConfigError("tune_nearby: model and training matrix disagree on n");

  Eigen::MatrixXd base = w.materialize();
  NearbyResult result;

  Eigen::VectorXd params;
  SparsifyParams sparams;
  if (mode == NearbyMode::HeadTail) {
    params = Eigen::VectorXd::Constant(2 * n, 6.0);
  } else {
    double cut = std::isnan(threshold) ? sparsify_threshold(w) : threshold;
    sparams = make_sparsify_params(w, cut);
    params = sparams.s_logits;
  }

  // Survivor lookup for sparsify gradients: entry -> parameter index.
  Eigen::MatrixXi slot;
  if (mode == NearbyMode::Sparsify) {
    slot = Eigen::MatrixXi::Constant(n, n, -1);
    for (std::size_t e = 0; e < sparams.survivors(); ++e)
      slot(sparams.rows[e], sparams.cols[e]) = static_cast<int>(e);
  }

  detail::TripletSampler sampler(train);
  detail::Adam adam(params.size(), cfg);
  Rng rng(cfg.seed);
  const std::size_t steps = detail::steps_per_epoch(train, cfg.batch_size);
  const double keep = 1.0 - cfg.dropout_rate;

  // Score of candidate c for a (dropped) input row: sum over kept input
  // items a of x_a * s(h_a) * W_ac * s(t_c) in HT mode, or of
  // x_a * s(s_ac) * W_ac over survivors in sparsify mode; rmd skips a == c.
  auto pair_scores = [&](const Triplet& t,
                         const std::vector<std::uint32_t>& items) {
    double s_pos = 0.0, s_neg = 0.0;
    if (mode == NearbyMode::HeadTail) {
      double a_pos = 0.0, a_neg = 0.0;
      for (std::uint32_t a : items) {
        double head = detail::stable_sigmoid(params(a));
        if (!(rmd && a == t.pos)) a_pos += head * base(a, t.pos);
        if (!(rmd && a == t.neg)) a_neg += head * base(a, t.neg);
      }
      s_pos = detail::stable_sigmoid(params(n + t.pos)) * a_pos;
      s_neg = detail::stable_sigmoid(params(n + t.neg)) * a_neg;
    } else {
      for (std::uint32_t a : items) {
        if (!(rmd && a == t.pos)) {
          int e = slot(a, t.pos);
          if (e >= 0)
            s_pos += detail::stable_sigmoid(params(e)) * base(a, t.pos);
        }
        if (!(rmd && a == t.neg)) {
          int e = slot(a, t.neg);
          if (e >= 0)
            s_neg += detail::stable_sigmoid(params(e)) * base(a, t.neg);
        }
      }
    }
    return std::pair<double, double>(s_pos, s_neg);
  };

  // As in the per-dimension regularizer search, the per-epoch loss is
  // measured on one fixed probe sample so the trace is comparable across
  // epochs instead of being dominated by minibatch sampling noise.
  Rng probe_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t probe_count =
      std::min<std::size_t>(steps * cfg.batch_size, 16384);
  std::vector<Triplet> probe;
  probe.reserve(probe_count);
  for (std::size_t i = 0; i < probe_count; ++i)
    probe.push_back(sampler.next(probe_rng));
  auto probe_loss = [&] {
    double total = 0.0;
    for (const Triplet& t : probe) {
      auto [s_pos, s_neg] = pair_scores(t, train.rows[t.user]);
      total += detail::stable_softplus(-cfg.t_scale * (s_pos - s_neg));
    }
    return total / static_cast<double>(probe.size());
  };

  std::vector<std::uint32_t> kept;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t step_i = 0; step_i < steps; ++step_i) {
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.size());
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        Triplet t = sampler.next(rng);
        kept.clear();
        for (std::uint32_t item : train.rows[t.user]) {
          if (cfg.dropout_rate > 0.0 && rng.next_double() < cfg.dropout_rate)
            continue;
          kept.push_back(item);
        }
        double x_scale = cfg.dropout_rate > 0.0 ? 1.0 / keep : 1.0;

        double s_pos = 0.0, s_neg = 0.0;
        if (mode == NearbyMode::HeadTail) {
          double tail_pos = detail::stable_sigmoid(params(n + t.pos));
          double tail_neg = detail::stable_sigmoid(params(n + t.neg));
          double a_pos = 0.0, a_neg = 0.0;
          for (std::uint32_t a : kept) {
            double head = detail::stable_sigmoid(params(a));
            if (!(rmd && a == t.pos)) a_pos += x_scale * head * base(a, t.pos);
            if (!(rmd && a == t.neg)) a_neg += x_scale * head * base(a, t.neg);
          }
          s_pos = tail_pos * a_pos;
          s_neg = tail_neg * a_neg;
          double diff = cfg.t_scale * (s_pos - s_neg);
          double coef = -detail::stable_sigmoid(-diff) * cfg.t_scale;
          grad(n + t.pos) += coef * detail::sigmoid_prime(tail_pos) * a_pos;
          grad(n + t.neg) -= coef * detail::sigmoid_prime(tail_neg) * a_neg;
          for (std::uint32_t a : kept) {
            double head = detail::stable_sigmoid(params(a));
            double dh = 0.0;
            if (!(rmd && a == t.pos))
              dh += x_scale * base(a, t.pos) * tail_pos;
            if (!(rmd && a == t.neg))
              dh -= x_scale * base(a, t.neg) * tail_neg;
            grad(a) += coef * detail::sigmoid_prime(head) * dh;
          }
        } else {
          for (std::uint32_t a : kept) {
            if (!(rmd && a == t.pos)) {
              int e = slot(a, t.pos);
              if (e >= 0)
                s_pos += x_scale *
                         detail::stable_sigmoid(params(e)) * base(a, t.pos);
            }
            if (!(rmd && a == t.neg)) {
              int e = slot(a, t.neg);
              if (e >= 0)
                s_neg += x_scale *
                         detail::stable_sigmoid(params(e)) * base(a, t.neg);
            }
          }
          double diff = cfg.t_scale * (s_pos - s_neg);
          double coef = -detail::stable_sigmoid(-diff) * cfg.t_scale;
          for (std::uint32_t a : kept) {
            if (!(rmd && a == t.pos)) {
              int e = slot(a, t.pos);
              if (e >= 0) {
                double s = detail::stable_sigmoid(params(e));
                grad(e) += coef * x_scale * detail::sigmoid_prime(s) *
                           base(a, t.pos);
              }
            }
            if (!(rmd && a == t.neg)) {
              int e = slot(a, t.neg);
              if (e >= 0) {
                double s = detail::stable_sigmoid(params(e));
                grad(e) -= coef * x_scale * detail::sigmoid_prime(s) *
                           base(a, t.neg);
              }
            }
          }
        }
      }
      grad /= static_cast<double>(cfg.batch_size);
      adam.step(grad, params);
    }
    result.loss_trace.push_back(probe_loss());
  }

  if (mode == NearbyMode::HeadTail) {
    result.ht.h = params.head(n);
    result.ht.t = params.tail(n);
    result.model = apply_ht(w, result.ht);
  } else {
    sparams.s_logits = params;
    result.sparsify = sparams;
    result.model = apply_sparsify(w, sparams);
  }
  if (rmd) result.model = remove_diagonal(result.model);
  result.model.provenance.params["epochs"] = cfg.epochs;
  result.model.provenance.params["seed"] = static_cast<double>(cfg.seed);
  return result;
}

}  // namespace linrec
