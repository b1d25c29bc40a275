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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "linrec/closed_form.hpp"
#include "linrec/common.hpp"
#include "linrec/eval.hpp"
#include "linrec/interactions.hpp"
#include "linrec/model.hpp"
#include "linrec/nearby.hpp"
#include "linrec/persist.hpp"
#include "linrec/search.hpp"
#include "linrec/spectral.hpp"
#include "linrec/wmf.hpp"

namespace linrec {
namespace cli {

// Split flags shared by every subcommand that consumes a dataset. Protocol
// "none" keeps the whole matrix as training data with no held-out folds, so
// fit-style commands can run on everything while grid/eval require a split.
struct SplitFlags {
  std::string protocol = "none";
  double holdout = 0.2;
  double train_fraction = 0.8;
  double validation_fraction = 0.1;
  double test_fraction = 0.1;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--protocol", protocol, "Evaluation split: strong|loo|none")
        ->check(CLI::IsMember({"strong", "loo", "none"}))
        ->capture_default_str();
    cmd->add_option("--holdout", holdout,
                    "Held-out fraction of each evaluation user's items")
        ->capture_default_str();
    cmd->add_option("--train-frac", train_fraction,
                    "User share of the training partition")
        ->capture_default_str();
    cmd->add_option("--val-frac", validation_fraction,
                    "User share of the validation partition")
        ->capture_default_str();
    cmd->add_option("--test-frac", test_fraction,
                    "User share of the test partition")
        ->capture_default_str();
  }

  Dataset resolve(InteractionMatrix full, std::uint64_t seed) const {
    if (protocol == "none") {
      Dataset d;
      d.train = std::move(full);
      return d;
    }
    SplitSpec spec;
    spec.protocol = protocol == "strong" ? Protocol::StrongGeneralization
                                         : Protocol::LeaveOneOut;
    spec.seed = seed;
    spec.holdout_fraction = holdout;
    spec.train_fraction = train_fraction;
    spec.validation_fraction = validation_fraction;
    spec.test_fraction = test_fraction;
    return split(full, spec);
  }
};

inline void write_text(const std::filesystem::path& path,
                       const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("short write to " + path.string());
}

inline std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> values;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    std::string token = text.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      values.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + token + "' in list");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return values;
}

inline std::string spectrum_csv(const std::vector<SpectrumRow>& rows) {
  std::string out = "index,sigma,lrr_scaled,mf_scaled,lrr_ratio,mf_ratio,delta\n";
  for (const SpectrumRow& row : rows) {
    out += std::to_string(row.index) + "," + format_double(row.sigma) + "," +
           format_double(row.lrr_scaled) + "," + format_double(row.mf_scaled) +
           "," + format_double(row.lrr_ratio) + "," +
           format_double(row.mf_ratio) + "," + format_double(row.delta) + "\n";
  }
  return out;
}

// Rebuilds the eigenbasis view stored inside a factored model, so tuning can
// run from a persisted model without the full decomposition archive.
inline SpectralDecomposition spectral_view(const SimilarityModel& model) {
  if (model.kind != SimilarityModel::Kind::Factored || model.sigma.size() == 0)
    throw DataError(
        "this command needs a factored model with stored singular values");
  SpectralDecomposition spec;
  spec.basis = model.basis;
  spec.sigma = model.sigma;
  spec.rank_tolerance = 0.0;
  spec.data_fingerprint = model.provenance.spectral_fingerprint;
  return spec;
}

}  // namespace cli

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Closed-form linear models for item recommendation"};
  app.require_subcommand(1);

  std::uint64_t seed = 42;
  int threads = 0;
  std::string log_level = "warn";
  app.add_option("--seed", seed, "Seed for splits, sampling, initialization")
      ->capture_default_str();
  app.add_option("--threads", threads, "Worker thread cap (0 = all cores)")
      ->capture_default_str();
  app.add_option("--log-level", log_level, "Logging verbosity")
      ->check(CLI::IsMember({"info", "warn", "error"}))
      ->capture_default_str();

  // Subcommand callbacks run inside parse(), so each one applies the global
  // flags first.
  auto apply_globals = [&] {
    set_max_threads(threads);
    if (log_level == "info")
      set_log_level(LogLevel::Info);
    else if (log_level == "warn")
      set_log_level(LogLevel::Warn);
    else
      set_log_level(LogLevel::Error);
  };

  // ingest
  auto* ingest = app.add_subcommand(
      "ingest", "Parse a user,item[,rating] file into an interaction archive");
  struct {
    std::string input, out;
    LoadOptions opts;
  } ing;
  ingest->add_option("--input", ing.input, "Source CSV/TSV file")->required();
  ingest->add_option("--delimiter", ing.opts.delimiter, "Field separator")
      ->capture_default_str();
  ingest->add_flag("--skip-header", ing.opts.skip_header,
                   "Ignore the first line");
  ingest->add_option("--binarize-threshold", ing.opts.binarize_threshold,
                     "Keep ratings at or above this value")
      ->capture_default_str();
  ingest->add_option("--min-user-items", ing.opts.min_user_items,
                     "Drop users with fewer interactions")
      ->capture_default_str();
  ingest->add_option("--min-item-users", ing.opts.min_item_users,
                     "Drop items with fewer interactions")
      ->capture_default_str();
  ingest->add_option("--out", ing.out, "Output archive directory")->required();
  ingest->callback([&] {
    apply_globals();
    InteractionMatrix m = load_interactions(ing.input, ing.opts);
    save_archive(ing.out, m);
    std::cout << "users " << m.num_users << " items " << m.num_items
              << " interactions " << m.num_interactions() << "\n";
  });

  // decompose
  auto* decompose =
      app.add_subcommand("decompose", "Eigendecompose the item Gram matrix");
  struct {
    std::string data, out;
    double rank_tol = -1.0;
    cli::SplitFlags split;
  } dec;
  decompose->add_option("--data", dec.data, "Interaction archive")->required();
  decompose->add_option("--rank-tol", dec.rank_tol,
                        "Singular value cutoff (-1 = 1e-10 * sigma_1)")
      ->capture_default_str();
  dec.split.add_to(decompose);
  decompose->add_option("--out", dec.out, "Output archive directory")
      ->required();
  decompose->callback([&] {
    apply_globals();
    Dataset data =
        dec.split.resolve(load_interactions_archive(dec.data), seed);
    GramEigenOptions opts;
    opts.rank_tolerance = dec.rank_tol;
    SpectralDecomposition spec = gram_eigen(data.train, opts);
    save_archive(dec.out, spec);
    std::cout << "rank " << spec.rank() << " sigma_1 "
              << format_double(spec.sigma(0)) << "\n";
  });

  // fit
  auto* fit = app.add_subcommand("fit", "Fit a model on the training data");
  struct {
    std::string model, data, spectral, out;
    Eigen::Index k = 10;
    double lambda = 0.0;
    double p = 0.5;
    double alpha = 10.0;
    int iters = 15;
    cli::SplitFlags split;
  } ft;
  fit->add_option("--model", ft.model, "lrr|mf|ease|dlae|wmf")
      ->required()
      ->check(CLI::IsMember({"lrr", "mf", "ease", "dlae", "wmf"}));
  fit->add_option("--data", ft.data, "Interaction archive")->required();
  fit->add_option("--spectral", ft.spectral,
                  "Decomposition archive (lrr and mf)");
  fit->add_option("--k", ft.k, "Rank")->capture_default_str();
  fit->add_option("--lambda", ft.lambda, "Regularization strength")
      ->capture_default_str();
  fit->add_option("--p", ft.p, "Dropout probability (dlae)")
      ->capture_default_str();
  fit->add_option("--alpha", ft.alpha, "Observed-entry confidence (wmf)")
      ->capture_default_str();
  fit->add_option("--iters", ft.iters, "Alternating rounds (wmf)")
      ->capture_default_str();
  ft.split.add_to(fit);
  fit->add_option("--out", ft.out, "Output archive directory")->required();
  fit->callback([&] {
    apply_globals();
    Dataset data = ft.split.resolve(load_interactions_archive(ft.data), seed);
    const InteractionMatrix& train = data.train;
    if (ft.model == "lrr" || ft.model == "mf") {
      if (ft.spectral.empty())
        throw ConfigError("--spectral is required for lrr and mf");
      SpectralDecomposition spec = load_spectral(ft.spectral);
      if (spec.data_fingerprint != train.fingerprint())
        throw DataError(
            "decomposition was built from different training data "
            "(check --protocol and --seed)");
      if (ft.model == "lrr") {
        SimilarityModel m =
            fit_lrr(spec, ft.k, RegularizerSpec::constant(ft.lambda));
        m.provenance.data_fingerprint = train.fingerprint();
        save_archive(ft.out, m);
      } else {
        FactorModel m = fit_mf(spec, train, ft.k, ft.lambda);
        save_archive(ft.out, m);
      }
    } else if (ft.model == "ease") {
      save_archive(ft.out, fit_ease(train, ft.lambda));
    } else if (ft.model == "dlae") {
      save_archive(ft.out, fit_dlae(train, ft.p));
    } else {
      WmfConfig cfg;
      cfg.k = ft.k;
      cfg.lambda = ft.lambda;
      cfg.alpha = ft.alpha;
      cfg.iterations = ft.iters;
      cfg.seed = seed;
      save_archive(ft.out, fit_wmf(train, cfg));
    }
    std::cout << "saved " << ft.model << " model to " << ft.out << "\n";
  });

  // grid
  auto* grid = app.add_subcommand(
      "grid", "Sweep (lambda, k) reusing one eigendecomposition");
  struct {
    std::string spectral, data, lambdas, ks, metric = "ndcg@100", out;
    cli::SplitFlags split;
  } gr;
  gr.split.protocol = "strong";
  grid->add_option("--spectral", gr.spectral, "Decomposition archive")
      ->required();
  grid->add_option("--data", gr.data, "Interaction archive")->required();
  grid->add_option("--lambdas", gr.lambdas, "Comma-separated lambda values")
      ->required();
  grid->add_option("--ks", gr.ks, "Comma-separated ranks, ascending")
      ->required();
  grid->add_option("--metric", gr.metric, "Selection metric, e.g. ndcg@100")
      ->capture_default_str();
  gr.split.add_to(grid);
  grid->add_option("--out", gr.out, "Output CSV path")->required();
  grid->callback([&] {
    apply_globals();
    SpectralDecomposition spec = load_spectral(gr.spectral);
    Dataset data = gr.split.resolve(load_interactions_archive(gr.data), seed);
    if (spec.data_fingerprint != data.train.fingerprint())
      throw DataError(
          "decomposition was built from different training data "
          "(check --protocol and --seed)");
    GridSpec gspec;
    gspec.lambdas = cli::parse_double_list(gr.lambdas);
    for (double k : cli::parse_double_list(gr.ks))
      gspec.ks.push_back(static_cast<Eigen::Index>(k));
    gspec.metric = MetricSpec::parse(gr.metric);
    GridResult result = grid_search(spec, data, gspec);
    cli::write_text(gr.out, result.to_csv());
    const GridCell& best = result.best();
    std::cout << "best lambda " << format_double(best.lambda) << " k "
              << best.k << " " << gspec.metric.name() << " "
              << format_double(best.value) << "\n";
  });

  // tune
  auto* tune = app.add_subcommand(
      "tune", "Search per-dimension regularizers with the ranking loss");
  struct {
    std::string model, data, out, trace_out, lambdas_out;
    TuneConfig cfg;
    double lambda_override = std::numeric_limits<double>::quiet_NaN();
    cli::SplitFlags split;
  } tn;
  tn.cfg.dropout_rate = 0.5;
  tune->add_option("--model", tn.model, "Factored model archive")->required();
  tune->add_option("--data", tn.data, "Interaction archive")->required();
  tune->add_option("--c", tn.cfg.c, "Half-range of the lambda interval")
      ->required();
  tune->add_option("--lambda", tn.lambda_override,
                   "Center lambda (default: the model's own)");
  tune->add_option("--t-scale", tn.cfg.t_scale, "Score scale in the loss")
      ->capture_default_str();
  tune->add_option("--epochs", tn.cfg.epochs, "Training epochs")
      ->capture_default_str();
  tune->add_option("--batch", tn.cfg.batch_size, "Triplets per step")
      ->capture_default_str();
  tune->add_option("--lr", tn.cfg.learning_rate, "Learning rate")
      ->capture_default_str();
  tune->add_option("--dropout", tn.cfg.dropout_rate,
                   "Input-row dropout rate during training")
      ->capture_default_str();
  tn.split.add_to(tune);
  tune->add_option("--out", tn.out, "Output archive directory")->required();
  tune->add_option("--trace-out", tn.trace_out, "Loss trace CSV path");
  tune->add_option("--lambdas-out", tn.lambdas_out,
                   "Per-dimension lambda CSV path");
  tune->callback([&] {
    apply_globals();
    SimilarityModel base = load_similarity(tn.model);
    SpectralDecomposition spec = cli::spectral_view(base);
    if (std::isnan(tn.lambda_override)) {
      auto it = base.provenance.params.find("lambda");
      if (it == base.provenance.params.end())
        throw ConfigError(
            "model has no constant lambda in its provenance; pass --lambda");
      tn.cfg.lambda0 = it->second;
    } else {
      tn.cfg.lambda0 = tn.lambda_override;
    }
    tn.cfg.seed = seed;
    Dataset data = tn.split.resolve(load_interactions_archive(tn.data), seed);
    TunedModel tuned =
        tune_lambdas(spec, base.factored_rank(), data.train, tn.cfg);
    save_archive(tn.out, tuned);
    if (!tn.trace_out.empty())
      cli::write_text(tn.trace_out, loss_trace_csv(tuned.loss_trace));
    if (!tn.lambdas_out.empty())
      cli::write_text(tn.lambdas_out, tuned_lambdas_csv(tuned));
    std::cout << "tuned " << base.factored_rank() << " lambdas around "
              << format_double(tn.cfg.lambda0) << "\n";
  });

  // augment
  auto* augment = app.add_subcommand(
      "augment", "Retune a fitted model with head/tail or sparsify parameters");
  struct {
    std::string model, data, mode, out, trace_out;
    double threshold = std::numeric_limits<double>::quiet_NaN();
    bool rmd = false;
    TuneConfig cfg;
    cli::SplitFlags split;
  } au;
  augment->add_option("--model", au.model, "Base model archive")->required();
  augment->add_option("--mode", au.mode, "ht|sparse")
      ->required()
      ->check(CLI::IsMember({"ht", "sparse"}));
  augment->add_option("--threshold", au.threshold,
                      "Sparsify cut (default: top-10% quantile)");
  augment->add_flag("--rmd", au.rmd, "Remove the diagonal in every forward pass");
  augment->add_option("--data", au.data, "Interaction archive")->required();
  augment->add_option("--epochs", au.cfg.epochs, "Training epochs")
      ->capture_default_str();
  augment->add_option("--batch", au.cfg.batch_size, "Triplets per step")
      ->capture_default_str();
  augment->add_option("--lr", au.cfg.learning_rate, "Learning rate")
      ->capture_default_str();
  augment->add_option("--t-scale", au.cfg.t_scale, "Score scale in the loss")
      ->capture_default_str();
  augment->add_option("--dropout", au.cfg.dropout_rate,
                      "Input-row dropout rate during training")
      ->capture_default_str();
  au.split.add_to(augment);
  augment->add_option("--out", au.out, "Output archive directory")->required();
  augment->add_option("--trace-out", au.trace_out, "Loss trace CSV path");
  augment->callback([&] {
    apply_globals();
    SimilarityModel base = load_similarity(au.model);
    au.cfg.seed = seed;
    Dataset data = au.split.resolve(load_interactions_archive(au.data), seed);
    NearbyMode mode =
        au.mode == "ht" ? NearbyMode::HeadTail : NearbyMode::Sparsify;
    NearbyResult result =
        tune_nearby(base, mode, data.train, au.cfg, au.rmd, au.threshold);
    save_archive(au.out, result, mode);
    if (!au.trace_out.empty())
      cli::write_text(au.trace_out, loss_trace_csv(result.loss_trace));
    std::cout << "augmented model saved to " << au.out << "\n";
  });

  // eval
  auto* eval_cmd =
      app.add_subcommand("eval", "Rank held-out items and report metrics");
  struct {
    std::string model, data, metrics = "recall@20,recall@50,ndcg@100";
    std::string folds = "test", out;
    bool include_seen = false;
    cli::SplitFlags split;
  } ev;
  ev.split.protocol = "strong";
  eval_cmd->add_option("--model", ev.model, "Model archive")->required();
  eval_cmd->add_option("--data", ev.data, "Interaction archive")->required();
  eval_cmd->add_option("--metrics", ev.metrics, "Comma-separated metric@k list")
      ->capture_default_str();
  eval_cmd->add_option("--folds", ev.folds, "Which partition to score")
      ->check(CLI::IsMember({"test", "validation"}))
      ->capture_default_str();
  eval_cmd->add_flag("--include-seen", ev.include_seen,
                     "Keep fold-in items in the candidate ranking");
  ev.split.add_to(eval_cmd);
  eval_cmd->add_option("--out", ev.out, "JSON report path");
  eval_cmd->callback([&] {
    apply_globals();
    if (ev.split.protocol == "none")
      throw ConfigError("eval needs --protocol strong or loo");
    Dataset data = ev.split.resolve(load_interactions_archive(ev.data), seed);
    const std::vector<FoldPair>& folds =
        ev.folds == "validation" ? data.validation_folds : data.test_folds;
    EvalOptions options;
    options.metrics.clear();
    std::size_t pos = 0;
    while (pos <= ev.metrics.size()) {
      std::size_t comma = ev.metrics.find(',', pos);
      options.metrics.push_back(MetricSpec::parse(ev.metrics.substr(
          pos, comma == std::string::npos ? std::string::npos : comma - pos)));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    options.exclude_seen = !ev.include_seen;

    ArchiveReader probe(ev.model);
    EvalReport report;
    if (probe.kind() == "factor")
      report = evaluate(load_factor(ev.model), folds, options);
    else
      report = evaluate(load_similarity(ev.model), folds, options);
    report.protocol = ev.split.protocol;
    report.skipped_users = data.skipped_users;
    if (!ev.out.empty())
      cli::write_text(ev.out, report.to_json().dump(2) + "\n");
    std::cout << report.to_text();
  });

  // spectrum
  auto* spectrum = app.add_subcommand(
      "spectrum", "Export shrinkage geometry curves for a decomposition");
  struct {
    std::string spectral, out;
    double lambda = 0.0;
    double lambda_mf = 0.0;
  } sp;
  spectrum->add_option("--spectral", sp.spectral, "Decomposition archive")
      ->required();
  spectrum->add_option("--lambda", sp.lambda, "Ridge strength")
      ->capture_default_str();
  spectrum->add_option("--lambda-mf", sp.lambda_mf, "Factor shrinkage")
      ->capture_default_str();
  spectrum->add_option("--out", sp.out, "Output CSV path")->required();
  spectrum->callback([&] {
    apply_globals();
    SpectralDecomposition spec = load_spectral(sp.spectral);
    cli::write_text(sp.out,
                    cli::spectrum_csv(spectrum_rows(spec, sp.lambda,
                                                    sp.lambda_mf)));
    std::cout << "wrote " << spec.rank() << " rows to " << sp.out << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }

  return 0;
}

}  // namespace linrec
