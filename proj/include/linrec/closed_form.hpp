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
#include <cmath>
#include <string>
#include <vector>

#include "linrec/common.hpp"
#include "linrec/interactions.hpp"
#include "linrec/model.hpp"
#include "linrec/spectral.hpp"

namespace linrec {

// Ridge regularizer choices for the low-rank regression fit: one lambda for
// every dimension, a per-dimension vector, or the dropout-induced
// item-weighted form.
struct RegularizerSpec {
  enum class Kind { Constant, PerDimension, DropoutInduced };

  Kind kind = Kind::Constant;
  double lambda = 0.0;
  std::vector<double> lambdas;
  double dropout_p = 0.0;

  static RegularizerSpec constant(double lambda) {
    if (lambda < 0) throw ConfigError("lambda must be nonnegative");
    RegularizerSpec spec;
    spec.kind = Kind::Constant;
    spec.lambda = lambda;
    return spec;
  }
  static RegularizerSpec per_dimension(std::vector<double> lambdas) {
    for (double l : lambdas)
      if (l < 0) throw ConfigError("every lambda_i must be nonnegative");
    RegularizerSpec spec;
    spec.kind = Kind::PerDimension;
    spec.lambdas = std::move(lambdas);
    return spec;
  }
  static RegularizerSpec dropout(double p) {
    if (!(p >= 0.0 && p < 1.0))
      throw ConfigError("dropout probability must lie in [0,1)");
    RegularizerSpec spec;
    spec.kind = Kind::DropoutInduced;
    spec.dropout_p = p;
    return spec;
  }
};

// Multiplicative shrinkage the ridge solution applies to each singular value:
// sigma^2 / (sigma^2 + lambda).
inline double lrr_ratio(double sigma, double lambda) {
  return sigma * sigma / (sigma * sigma + lambda);
}

// Matrix-factorization counterpart 1 - lambda'/sigma, clamped at zero once
// the shrinkage reaches the singular value.
inline double mf_ratio(double sigma, double lambda_prime,
                       bool* clamped = nullptr) {
  double ratio = 1.0 - lambda_prime / sigma;
  if (ratio <= 0.0) {
    if (clamped) *clamped = true;
    return 0.0;
  }
  if (clamped) *clamped = false;
  return ratio;
}

// Absolute reduction of a singular value under the ridge shrinkage,
// lambda / (sigma + lambda/sigma); largest at sigma = sqrt(lambda).
inline double lrr_delta(double sigma, double lambda) {
  return sigma - sigma * lrr_ratio(sigma, lambda);
}

// Rank-k ridge regression similarity in factored form:
// W = V_k diag(sigma_i^2 / (sigma_i^2 + lambda_i)) V_k^T.
//
// A truncation at sigma_k == sigma_{k+1} is ambiguous up to rotation of the
// tied eigenspace; by default the deterministic eigen ordering decides and a
// degeneracy note is recorded, strict mode refuses instead.
inline SimilarityModel fit_lrr(const SpectralDecomposition& spec,
                               Eigen::Index k, const RegularizerSpec& reg,
                               bool strict_truncation = false) {
  spec.require_rank(k, "fit_lrr");
  if (reg.kind == RegularizerSpec::Kind::DropoutInduced)
    throw ConfigError(
        "fit_lrr: dropout-induced regularization needs the full Gram "
        "diagonal; use fit_dlae");
  if (reg.kind == RegularizerSpec::Kind::PerDimension &&
      static_cast<Eigen::Index>(reg.lambdas.size()) != k)
    throw ConfigError("fit_lrr: per-dimension lambda vector must have length " +
                      std::to_string(k));

  SimilarityModel model;
  model.kind = SimilarityModel::Kind::Factored;
  model.basis = spec.basis.leftCols(k);
  model.sigma = spec.sigma.head(k);
  model.diag_ratios.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    double lambda_i = reg.kind == RegularizerSpec::Kind::Constant
                          ? reg.lambda
                          : reg.lambdas[i];
    model.diag_ratios(i) = lrr_ratio(spec.sigma(i), lambda_i);
  }

  model.provenance.model = "lrr";
  model.provenance.params["k"] = static_cast<double>(k);
  if (reg.kind == RegularizerSpec::Kind::Constant)
    model.provenance.params["lambda"] = reg.lambda;
  else
    model.provenance.lambdas = reg.lambdas;
  model.provenance.spectral_fingerprint = spec.data_fingerprint;

  if (k < spec.rank()) {
    double gap = spec.sigma(k - 1) - spec.sigma(k);
    if (gap <= 1e-12 * spec.sigma(0)) {
      if (strict_truncation)
        throw NumericError("fit_lrr: sigma_k == sigma_{k+1}; truncation at k=" +
                           std::to_string(k) + " is ambiguous");
      model.provenance.note("degenerate truncation: sigma_" +
                            std::to_string(k) + " == sigma_" +
                            std::to_string(k + 1));
    }
  }
  return model;
}

// Closed-form regularized SVD: P = U_k diag(max(0, sigma_i - lambda')),
// Q = V_k. Dimensions with sigma_i <= lambda' collapse to zero and are
// reported rather than rejected, since full-size parameter grids do cross
// that boundary.
inline FactorModel fit_mf(const SpectralDecomposition& spec,
                          const InteractionMatrix& data, Eigen::Index k,
                          double lambda_prime) {
  spec.require_rank(k, "fit_mf");
  if (lambda_prime < 0) throw ConfigError("lambda' must be nonnegative");

  FactorModel model;
  model.kind = FactorModel::Kind::SpectralMf;
  model.item_factors = spec.basis.leftCols(k);
  model.sigma = spec.sigma.head(k);
  model.shrinkage = lambda_prime;

  Eigen::VectorXd shrunk(k);
  std::vector<Eigen::Index> clamped;
  for (Eigen::Index i = 0; i < k; ++i) {
    double v = spec.sigma(i) - lambda_prime;
    if (v <= 0.0) {
      v = 0.0;
      clamped.push_back(i);
    }
    shrunk(i) = v;
  }
  model.user_factors = left_factors(data, spec, k) * shrunk.asDiagonal();

  model.provenance.model = "mf";
  model.provenance.params["k"] = static_cast<double>(k);
  model.provenance.params["lambda_prime"] = lambda_prime;
  model.provenance.data_fingerprint = data.fingerprint();
  model.provenance.spectral_fingerprint = spec.data_fingerprint;
  if (!clamped.empty()) {
    std::string dims;
    for (Eigen::Index i : clamped)
      dims += (dims.empty() ? "" : ",") + std::to_string(i);
    model.provenance.note("shrinkage clamped to 0 at dimensions " + dims);
    log_warn("fit_mf: lambda'=" + format_double(lambda_prime) +
             " >= sigma at dimensions " + dims + "; factors clamped to 0");
  }
  return model;
}

// Linear-encoder view of the factor model:
// W = V_k diag(max(0, 1 - lambda'/sigma_i)) V_k^T, so x_u W equals p_u Q^T
// for every training row.
inline SimilarityModel mf_as_encoder(const FactorModel& model,
                                     const SpectralDecomposition& spec) {
  if (model.kind != FactorModel::Kind::SpectralMf)
    throw ConfigError("mf_as_encoder: model has no spectral closed form");
  if (model.provenance.spectral_fingerprint != spec.data_fingerprint)
    throw DataError(
        "mf_as_encoder: model was built from a different decomposition");
  const Eigen::Index k = model.rank();
  spec.require_rank(k, "mf_as_encoder");

  SimilarityModel encoder;
  encoder.kind = SimilarityModel::Kind::Factored;
  encoder.basis = spec.basis.leftCols(k);
  encoder.sigma = spec.sigma.head(k);
  encoder.diag_ratios.resize(k);
  for (Eigen::Index i = 0; i < k; ++i)
    encoder.diag_ratios(i) = mf_ratio(spec.sigma(i), model.shrinkage);
  encoder.provenance.model = "mf_encoder";
  encoder.provenance.params["k"] = static_cast<double>(k);
  encoder.provenance.params["lambda_prime"] = model.shrinkage;
  encoder.provenance.spectral_fingerprint = spec.data_fingerprint;
  return encoder;
}

// EASE: ridge regression with an exact zero diagonal, solved through the
// precision matrix of X^T X + lambda I.
inline SimilarityModel fit_ease(const InteractionMatrix& data, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("fit_ease: lambda must be positive");
  const Eigen::Index n = static_cast<Eigen::Index>(data.num_items);
  Eigen::MatrixXd gram = gram_matrix(data);
  gram.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success)
    throw NumericError("fit_ease: X^T X + lambda I is not positive definite");
  Eigen::MatrixXd precision =
      llt.solve(Eigen::MatrixXd::Identity(n, n));

  SimilarityModel model;
  model.kind = SimilarityModel::Kind::Dense;
  model.dense = -precision * precision.diagonal().cwiseInverse().asDiagonal();
  model.dense.diagonal().setZero();
  model.zero_diagonal = true;
  model.provenance.model = "ease";
  model.provenance.params["lambda"] = lambda;
  model.provenance.data_fingerprint = data.fingerprint();
  return model;
}

// Denoising linear autoencoder: W = (X^T X + Lambda)^{-1} X^T X with the
// dropout-induced Lambda = p/(1-p) diagM(diag(X^T X)).
inline SimilarityModel fit_dlae(const InteractionMatrix& data, double p) {
  if (!(p >= 0.0 && p < 1.0))
    throw ConfigError("fit_dlae: dropout probability must lie in [0,1)");
  Eigen::MatrixXd gram = gram_matrix(data);
  Eigen::MatrixXd system = gram;
  system.diagonal() += (p / (1.0 - p)) * gram.diagonal();

  Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  if (!lu.isInvertible())
    throw NumericError(
        "fit_dlae: X^T X + Lambda is singular (rank-deficient input; "
        "use p > 0)");

  SimilarityModel model;
  model.kind = SimilarityModel::Kind::Dense;
  model.dense = lu.solve(gram);
  model.provenance.model = "dlae";
  model.provenance.params["p"] = p;
  model.provenance.data_fingerprint = data.fingerprint();
  return model;
}

// One row of the spectrum-geometry export: how each closed form rescales a
// singular value, plus the absolute reduction for the ridge path.
struct SpectrumRow {
  Eigen::Index index;
  double sigma;
  double lrr_scaled;
  double mf_scaled;
  double lrr_ratio;
  double mf_ratio;
  double delta;
};

inline std::vector<SpectrumRow> spectrum_rows(const SpectralDecomposition& spec,
                                              double lambda,
                                              double lambda_prime) {
  std::vector<SpectrumRow> rows;
  rows.reserve(static_cast<std::size_t>(spec.rank()));
  for (Eigen::Index i = 0; i < spec.rank(); ++i) {
    SpectrumRow row;
    row.index = i;
    row.sigma = spec.sigma(i);
    row.lrr_ratio = lrr_ratio(row.sigma, lambda);
    row.mf_ratio = mf_ratio(row.sigma, lambda_prime);
    row.lrr_scaled = row.sigma * row.lrr_ratio;
    row.mf_scaled = row.sigma * row.mf_ratio;
    row.delta = lrr_delta(row.sigma, lambda);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace linrec
