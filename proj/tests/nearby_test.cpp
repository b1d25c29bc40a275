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
#include "linrec/nearby.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "linrec/closed_form.hpp"
#include "linrec/eval.hpp"
#include "test_util.hpp"

namespace linrec {
namespace {

SimilarityModel dense_model(Eigen::MatrixXd w) {
  SimilarityModel model;
  model.kind = SimilarityModel::Kind::Dense;
  model.dense = std::move(w);
  return model;
}

TEST(ApplyHt, HandExample) {
  Eigen::MatrixXd w(2, 2);
  w << 1, 2, 3, 4;
  HeadTailParams params;
  params.h = Eigen::Vector2d(0.0, 20.0);
  params.t = Eigen::Vector2d(20.0, 0.0);
  SimilarityModel out = apply_ht(dense_model(w), params);

  // Entry (r,c) = sigmoid(h_r) * W_rc * sigmoid(t_c): rows scale by the head
  // vector, columns by the tail vector.
  Eigen::MatrixXd expected(2, 2);
  expected << 0.5, 0.5, 3.0, 2.0;
  EXPECT_LT((out.dense - expected).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ApplyHt, SaturationAndMidpoint) {
  // Entries of order one: each side contributes a relative error of
  // 1 - sigmoid(20) ~ 2e-9, so the saturated product sits within 1e-8 of W.
  Rng rng(90);
  Eigen::MatrixXd w(3, 3);
  for (Eigen::Index r = 0; r < 3; ++r)
    for (Eigen::Index c = 0; c < 3; ++c) w(r, c) = 2.0 * rng.next_double() - 1.0;

  SimilarityModel near_identity =
      apply_ht(dense_model(w), HeadTailParams::uniform(3, 20.0));
  EXPECT_LT((near_identity.dense - w).cwiseAbs().maxCoeff(), 1e-8);

  SimilarityModel quartered =
      apply_ht(dense_model(w), HeadTailParams::uniform(3, 0.0));
  EXPECT_EQ(quartered.dense, (0.25 * w).eval());  // sigmoid(0) = 0.5 exactly
}

TEST(ApplyHt, FactoredStaysFactoredAndMatchesDense) {
  Rng rng(91);
  InteractionMatrix data = test::random_binary(rng, 30, 8, 0.4);
  SpectralDecomposition spec = gram_eigen(data);
  SimilarityModel factored =
      fit_lrr(spec, 4, RegularizerSpec::constant(1.0));

  HeadTailParams params;
  params.h.resize(8);
  params.t.resize(8);
  for (Eigen::Index i = 0; i < 8; ++i) {
    params.h(i) = rng.next_gaussian();
    params.t(i) = rng.next_gaussian();
  }

  SimilarityModel scaled = apply_ht(factored, params);
  EXPECT_EQ(scaled.kind, SimilarityModel::Kind::Factored);
  EXPECT_TRUE(scaled.has_left_scale());
  EXPECT_TRUE(scaled.has_right_scale());

  SimilarityModel dense = apply_ht(dense_model(factored.materialize()), params);
  EXPECT_LT((scaled.materialize() - dense.dense).cwiseAbs().maxCoeff(), 1e-12);

  // A second application composes with the first.
  SimilarityModel twice = apply_ht(scaled, params);
  SimilarityModel dense_twice = apply_ht(dense, params);
  EXPECT_LT((twice.materialize() - dense_twice.dense).cwiseAbs().maxCoeff(),
            1e-12);
}

TEST(ApplyHt, DimensionMismatchThrows) {
  SimilarityModel model = dense_model(Eigen::MatrixXd::Identity(3, 3));
  EXPECT_THROW(apply_ht(model, HeadTailParams::uniform(4, 0.0)), ConfigError);
}

TEST(SparsifyThreshold, EmpiricalQuantile) {
  Eigen::MatrixXd w(2, 2);
  w << 0.5, 0.2, 0.4, 0.1;
  SimilarityModel model = dense_model(w);
  EXPECT_DOUBLE_EQ(sparsify_threshold(model, 0.25), 0.5);
  EXPECT_DOUBLE_EQ(sparsify_threshold(model, 0.5), 0.4);
  EXPECT_DOUBLE_EQ(sparsify_threshold(model, 1.0), 0.1);
  EXPECT_THROW(sparsify_threshold(model, 0.0), ConfigError);
  EXPECT_THROW(sparsify_threshold(model, 1.5), ConfigError);
}

TEST(ApplySparsify, HandExample) {
  Eigen::MatrixXd w(2, 2);
  w << 0.5, 0.2, 0.4, 0.1;
  SimilarityModel model = dense_model(w);
  SparsifyParams params = make_sparsify_params(model, 0.3, 0.0);
  ASSERT_EQ(params.survivors(), 2u);

  SimilarityModel out = apply_sparsify(model, params);
  EXPECT_DOUBLE_EQ(out.dense(0, 0), 0.25);  // 0.5 * sigmoid(0)
  EXPECT_DOUBLE_EQ(out.dense(1, 0), 0.2);   // 0.4 * sigmoid(0)
  EXPECT_EQ(out.dense(0, 1), 0.0);          // masked, exactly zero
  EXPECT_EQ(out.dense(1, 1), 0.0);
}

TEST(ApplySparsify, NoOpAndDegenerateLimits) {
  Rng rng(92);
  Eigen::MatrixXd w(4, 4);
  for (Eigen::Index r = 0; r < 4; ++r)
    for (Eigen::Index c = 0; c < 4; ++c) w(r, c) = rng.next_double();
  SimilarityModel model = dense_model(w);

  SparsifyParams keep_all = make_sparsify_params(model, -1.0, 20.0);
  ASSERT_EQ(keep_all.survivors(), 16u);
  SimilarityModel same = apply_sparsify(model, keep_all);
  EXPECT_LT((same.dense - w).cwiseAbs().maxCoeff(), 1e-6);

  SparsifyParams keep_none = make_sparsify_params(model, 2.0);
  EXPECT_EQ(keep_none.survivors(), 0u);
  SimilarityModel zero = apply_sparsify(model, keep_none);
  EXPECT_EQ(zero.dense.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ApplySparsify, DefaultInitLogit) {
  SimilarityModel model = dense_model(Eigen::MatrixXd::Identity(2, 2));
  SparsifyParams params = make_sparsify_params(model, 0.5);
  for (Eigen::Index e = 0; e < params.s_logits.size(); ++e)
    EXPECT_DOUBLE_EQ(params.s_logits(e), 6.0);
}

TEST(ApplySparsify, RejectsForeignMask) {
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 0.5, 0.2, 0.4, 0.1;
  b << 0.1, 0.5, 0.2, 0.4;  // different entries pass the same threshold
  SparsifyParams params = make_sparsify_params(dense_model(a), 0.3);
  EXPECT_THROW(apply_sparsify(dense_model(b), params), DataError);
}

TEST(RemoveDiagonal, DefinitionAndIdempotence) {
  Eigen::MatrixXd w(2, 2);
  w << 1, 2, 3, 4;
  SimilarityModel out = remove_diagonal(dense_model(w));
  Eigen::MatrixXd expected(2, 2);
  expected << 0, 2, 3, 0;
  EXPECT_EQ(out.dense, expected);
  EXPECT_TRUE(out.zero_diagonal);

  SimilarityModel again = remove_diagonal(out);
  EXPECT_EQ(again.dense, expected);
  EXPECT_EQ(again.provenance.notes.size(), out.provenance.notes.size());
}

TEST(RemoveDiagonal, FactoredDiagonalVanishes) {
  Rng rng(93);
  InteractionMatrix data = test::random_binary(rng, 25, 9, 0.4);
  SpectralDecomposition spec = gram_eigen(data);
  SimilarityModel factored = fit_lrr(spec, 4, RegularizerSpec::constant(0.5));
  SimilarityModel removed = remove_diagonal(factored);
  EXPECT_TRUE(removed.zero_diagonal);
  EXPECT_LE(removed.materialize().diagonal().cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TuneNearby, ZeroEpochsPreservesEveryRanking) {
  InteractionMatrix train = test::planted_blocks(11, 80, 20);
  SimilarityModel base = fit_ease(train, 5.0);

  TuneConfig cfg;
  cfg.epochs = 0;
  NearbyResult result = tune_nearby(base, NearbyMode::HeadTail, train, cfg);
  EXPECT_TRUE(result.loss_trace.empty());

  for (std::size_t u = 0; u < train.num_users; ++u) {
    auto base_top = top_k_indices(score_user(base, train.rows[u], true), 10);
    auto tuned_top =
        top_k_indices(score_user(result.model, train.rows[u], true), 10);
    EXPECT_EQ(base_top, tuned_top) << "user " << u;
  }
}

TEST(TuneNearby, HeadTailLossDecreasesOnPlantedData) {
  InteractionMatrix train = test::planted_blocks(7, 150, 30);
  SimilarityModel base = fit_ease(train, 5.0);

  TuneConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 256;
  cfg.seed = 42;
  cfg.learning_rate = 0.05;
  NearbyResult result = tune_nearby(base, NearbyMode::HeadTail, train, cfg);

  ASSERT_EQ(result.loss_trace.size(), 30u);
  EXPECT_LT(result.loss_trace.back(), result.loss_trace.front());
  EXPECT_EQ(result.ht.h.size(), 30);
  EXPECT_EQ(result.ht.t.size(), 30);

  // Augmentation only ever shrinks magnitudes: |W_HT| <= |W| entrywise.
  Eigen::MatrixXd before = base.materialize().cwiseAbs();
  Eigen::MatrixXd after = result.model.materialize().cwiseAbs();
  EXPECT_TRUE((after.array() <= before.array() + 1e-15).all());
}

TEST(TuneNearby, SparsifyKeepsMaskExactAndBounded) {
  InteractionMatrix train = test::planted_blocks(13, 100, 20);
  SimilarityModel base = fit_ease(train, 5.0);
  Eigen::MatrixXd dense = base.materialize();
  double threshold = sparsify_threshold(base, 0.2);

  TuneConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 128;
  NearbyResult result =
      tune_nearby(base, NearbyMode::Sparsify, train, cfg, false, threshold);

  ASSERT_EQ(result.loss_trace.size(), 5u);
  EXPECT_DOUBLE_EQ(result.sparsify.threshold, threshold);
  for (Eigen::Index r = 0; r < dense.rows(); ++r) {
    for (Eigen::Index c = 0; c < dense.cols(); ++c) {
      if (dense(r, c) < threshold)
        EXPECT_EQ(result.model.dense(r, c), 0.0);
      else
        EXPECT_LE(std::abs(result.model.dense(r, c)),
                  std::abs(dense(r, c)) + 1e-15);
    }
  }
}

TEST(TuneNearby, RmdZeroesDiagonalInFinalModel) {
  InteractionMatrix train = test::planted_blocks(17, 60, 15);
  SpectralDecomposition spec = gram_eigen(train);
  SimilarityModel base = fit_lrr(spec, 5, RegularizerSpec::constant(2.0));

  TuneConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 64;
  NearbyResult result =
      tune_nearby(base, NearbyMode::HeadTail, train, cfg, true);
  EXPECT_TRUE(result.model.zero_diagonal);
  EXPECT_LE(result.model.materialize().diagonal().cwiseAbs().maxCoeff(),
            1e-12);
}

TEST(TuneNearby, DeterministicAndShapeChecked) {
  InteractionMatrix train = test::planted_blocks(19, 50, 12);
  SimilarityModel base = fit_ease(train, 3.0);

  TuneConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 64;
  NearbyResult a = tune_nearby(base, NearbyMode::HeadTail, train, cfg);
  NearbyResult b = tune_nearby(base, NearbyMode::HeadTail, train, cfg);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_TRUE(a.ht.h == b.ht.h);
  EXPECT_TRUE(a.ht.t == b.ht.t);

  SimilarityModel small = dense_model(Eigen::MatrixXd::Identity(5, 5));
  EXPECT_THROW(tune_nearby(small, NearbyMode::HeadTail, train, cfg),
               ConfigError);
}

}  // namespace
}  // namespace linrec
