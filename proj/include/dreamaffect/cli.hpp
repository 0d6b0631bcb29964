#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "dreamaffect/config.hpp"
#include "dreamaffect/corpus.hpp"
#include "dreamaffect/csv.hpp"
#include "dreamaffect/encoder.hpp"
#include "dreamaffect/experiments.hpp"
#include "dreamaffect/metrics.hpp"
#include "dreamaffect/multilabel.hpp"
#include "dreamaffect/sentiment.hpp"
#include "dreamaffect/svg.hpp"
#include "dreamaffect/synthetic.hpp"

namespace dreamaffect::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Flag values as given on the command line; unset optionals fall back to the
/// config file, then to built-in defaults.
struct Flags {
  std::string corpus, input, out, model, config, polarity_table, summary;
  std::optional<std::string> mode, backend, series, encoder, kfold_reference;
  std::optional<std::size_t> k;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  bool stratified = false;
  bool verbose = false;
  bool quiet = false;
  std::string profile = "none";
  // plot
  std::string kind = "bar", label_column = "label", value_column, error_column, title;
  std::optional<double> reference;
  // synth
  std::size_t synth_series = 6, synth_reports = 20;
  bool unlabelled = false;
};

inline RunConfig resolve(const Flags& f, std::string command) {
  RunConfig rc;
  rc.command = std::move(command);
  if (const char* env = std::getenv("DREAMAFFECT_BACKEND"); env && *env) rc.backend = env;
  if (!f.config.empty()) rc.load(f.config);
  if (f.seed) rc.seed = *f.seed;
  if (f.mode) rc.mode = parse_mode(*f.mode);
  if (f.k) rc.k = *f.k;
  if (f.stratified) rc.stratified = true;
  if (f.threshold) rc.threshold = *f.threshold;
  if (f.backend) rc.backend = *f.backend;
  if (f.series) rc.series = *f.series;
  if (f.encoder) rc.encoder = nlohmann::json{{"type", *f.encoder}};
  if (f.kfold_reference) rc.kfold_reference = *f.kfold_reference;
  if (!f.polarity_table.empty()) rc.polarity = PolarityTable::load(f.polarity_table);
  auto path = [&rc](const char* key, const std::string& v) {
    if (!v.empty()) rc.paths[key] = v;
  };
  path("config", f.config);
  path("corpus", f.corpus);
  path("input", f.input);
  path("model", f.model);
  path("out", f.out);
  path("polarity_table", f.polarity_table);
  (void)rc.effective_train();  // validates
  return rc;
}

inline void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ValidationError(std::string("missing required flag ") + flag);
}

inline Corpus load_corpus(const std::string& path) {
  auto res = read_corpus(fs::path(path));
  for (const auto& w : res.warnings) spdlog::warn("{}", w);
  return std::move(res.corpus);
}

inline void print_table(const csv::Table& t) { std::cout << csv::to_string(t); }

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_ingest(const Flags& f) {
  require(f.input, "--input");
  auto res = read_corpus(fs::path(f.input));
  const auto& c = res.corpus;
  for (const auto& w : res.warnings) std::cout << "warning: " << w << '\n';
  const auto mode = f.mode ? parse_mode(*f.mode) : EmotionMode::General;
  std::cout << "source: " << c.provenance.source << "\ningested_at: " << c.provenance.ingested_at
            << "\nreports: " << c.size() << "\nemotion-bearing (" << to_string(mode)
            << "): " << filter_emotion_bearing(c, mode).size() << '\n';
  for (const auto& [series, reps] : series_partition(c)) {
    std::size_t bearing = 0;
    for (const auto& r : reps) bearing += mention_count(r, mode) > 0;
    std::cout << "series '" << series << "': " << reps.size() << " reports, " << bearing
              << " emotion-bearing\n";
  }
  std::cout << "emotions per report (" << to_string(mode) << "):";
  for (const auto& [k, n] : emotion_count_histogram(c, mode)) std::cout << ' ' << k << ':' << n;
  std::cout << '\n';
  if (f.profile == "dreambank") {
    for (const auto& w : check_profile(c, dreambank_profile())) std::cout << "profile warning: " << w << '\n';
  } else if (f.profile != "none") {
    throw ValidationError("unknown profile " + f.profile);
  }
  if (!f.out.empty()) write_corpus(fs::path(f.out), c);
  return kExitOk;
}

inline int cmd_sentiment_score(const Flags& f) {
  require(f.corpus, "--corpus");
  require(f.out, "--out");
  const auto rc = resolve(f, "sentiment score");
  const auto corpus = filter_emotion_bearing(load_corpus(f.corpus), rc.mode);
  auto backend = make_sentiment_backend(rc.backend);
  const auto scored = score_reports(corpus, *backend, rc.mode, rc.polarity, rc.inference_batch_size);
  csv::write(f.out, scores_table(scored));
  std::cout << "scored " << scored.size() << " reports -> " << f.out << '\n';
  return kExitOk;
}

inline int cmd_sentiment_correlate(const Flags& f) {
  require(f.corpus, "--corpus");
  require(f.out, "--out");
  const auto rc = resolve(f, "sentiment correlate");
  auto backend = make_sentiment_backend(rc.backend);
  const auto rep = run_score_correlation(load_corpus(f.corpus), *backend, rc.mode, rc.polarity,
                                         rc.inference_batch_size);
  const fs::path dir(f.out);
  csv::write(dir / "scores.csv", scores_table(rep.scored));
  const auto corr = correlation_table(rep);
  csv::write(dir / "correlation.csv", corr);
  const auto dist = score_distribution_breakdown(rep.scored);
  csv::write(dir / "model_score_hist.csv", model_histogram_table(dist));
  csv::write(dir / "annotator_score_hist.csv", annotator_histogram_table(dist));
  write_json(dir / "config.json", rc.to_json());
  print_table(corr);
  return kExitOk;
}

inline int cmd_sentiment_single(const Flags& f) {
  require(f.corpus, "--corpus");
  require(f.out, "--out");
  const auto rc = resolve(f, "sentiment single-emotion");
  const auto corpus = filter_single_emotion(load_corpus(f.corpus), rc.mode);
  auto backend = make_sentiment_backend(rc.backend);
  const auto rep = run_single_emotion_eval(corpus, *backend, rc.mode, rc.inference_batch_size);
  const fs::path dir(f.out);
  const auto metrics = to_table(rep.metrics);
  csv::write(dir / "metrics.csv", metrics);
  csv::write(dir / "per_series_emotion_f1.csv", series_emotion_table(rep.per_series_per_emotion));
  write_json(dir / "config.json", rc.to_json());
  std::cout << corpus.size() << " single-emotion reports\n";
  print_table(metrics);
  return kExitOk;
}

inline std::unique_ptr<EmbeddingCache> open_cache(const RunConfig& rc) {
  auto cache = std::make_unique<EmbeddingCache>();
  if (rc.embedding_cache && fs::exists(*rc.embedding_cache)) cache->load(*rc.embedding_cache);
  return cache;
}

inline void close_cache(const RunConfig& rc, const EmbeddingCache& cache) {
  if (rc.embedding_cache) cache.save(*rc.embedding_cache);
}

inline int cmd_train(const Flags& f) {
  require(f.corpus, "--corpus");
  require(f.out, "--out");
  const auto rc = resolve(f, "train");
  const auto corpus = filter_emotion_bearing(load_corpus(f.corpus), EmotionMode::General);
  const auto encoder = make_encoder(rc.encoder);
  auto cache = open_cache(rc);
  const auto model = train(make_examples(corpus, rc.mode), rc.effective_train(), *encoder, cache.get());
  close_cache(rc, *cache);
  save_model(model, f.out);
  write_json(fs::path(f.out) / "config.json", rc.to_json());
  std::cout << "trained on " << corpus.size() << " reports";
  if (!model.trace.empty()) std::cout << ", final train loss " << model.trace.back().train_loss;
  std::cout << " -> " << f.out << '\n';
  return kExitOk;
}

inline int cmd_eval_kfold(const Flags& f) {
  require(f.corpus, "--corpus");
  auto rc = resolve(f, "eval kfold");
  const fs::path dir = f.out.empty() ? fs::path("runs") / ("kfold-" + std::string(to_string(rc.mode))) : fs::path(f.out);
  rc.paths["out"] = dir.string();
  const auto encoder = make_encoder(rc.encoder);
  auto cache = open_cache(rc);
  const auto res = run_kfold(load_corpus(f.corpus), rc.effective_train(), *encoder, rc.mode, rc.k,
                             rc.stratified, cache.get());
  close_cache(rc, *cache);
  write_kfold_run(dir, res);
  write_json(dir / "config.json", rc.to_json());
  print_table(summary_table(res.summary));
  return kExitOk;
}

inline int cmd_eval_ablate(const Flags& f) {
  require(f.corpus, "--corpus");
  auto rc = resolve(f, "eval ablate");
  const fs::path dir = f.out.empty() ? fs::path("runs") / ("ablation-" + std::string(to_string(rc.mode))) : fs::path(f.out);
  rc.paths["out"] = dir.string();
  auto corpus = load_corpus(f.corpus);
  std::optional<MetricsSummary> reference;
  if (rc.kfold_reference) reference = summary_from_table(csv::read(*rc.kfold_reference));
  const auto encoder = make_encoder(rc.encoder);
  auto cache = open_cache(rc);
  auto res = run_ablation(corpus, rc.effective_train(), *encoder, rc.mode, cache.get());
  close_cache(rc, *cache);
  if (rc.series) {
    std::erase_if(res.runs, [&](const AblationRun& r) { return r.series != *rc.series; });
    if (res.runs.empty()) throw ValidationError("no ablation run for series '" + *rc.series + "'");
  }
  for (const auto& s : res.skipped) std::cout << "notice: " << s << '\n';
  write_ablation_run(dir, res, reference ? &*reference : nullptr);
  write_json(dir / "config.json", rc.to_json());
  print_table(ablation_table(res.runs, reference ? &*reference : nullptr));
  return kExitOk;
}

inline int cmd_predict(const Flags& f) {
  require(f.model, "--model");
  require(f.input, "--input");
  require(f.out, "--out");
  const auto model = load_model(f.model);
  const double threshold = f.threshold.value_or(model.config.threshold);
  const auto preds = predict_corpus(model, load_corpus(f.input), threshold);
  csv::write(f.out, predictions_table(preds.rows));
  const auto summary = prediction_summary_table(preds.summary);
  if (!f.summary.empty()) csv::write(f.summary, summary);
  std::cout << preds.summary.with_emotion << " of " << preds.summary.reports
            << " reports with at least one emotion (share " << csv::fixed(preds.summary.share_with_emotion)
            << ")\n";
  print_table(summary);
  return kExitOk;
}

inline int cmd_support_correlation(const Flags& f) {
  require(f.input, "--input");
  const auto runs = load_ablation_runs(f.input);
  const auto table = correlation_rows_table(support_correlation(runs));
  if (!f.out.empty()) csv::write(f.out, table);
  print_table(table);
  return kExitOk;
}

inline int cmd_distribution(const Flags& f) {
  require(f.input, "--input");
  require(f.corpus, "--corpus");
  const auto rc = resolve(f, "analyze distribution");
  const auto predicted = labels_from_predictions(csv::read(f.input));
  const auto training = filter_emotion_bearing(load_corpus(f.corpus), EmotionMode::General);
  const auto cmp = distribution_compare(predicted, training, rc.mode);
  const auto table = distribution_table(cmp);
  if (!f.out.empty()) csv::write(f.out, table);
  print_table(table);
  std::cout << "total variation distance: " << csv::fixed(cmp.tv_distance) << '\n'
            << "predicted share with >=1 emotion: " << csv::fixed(cmp.predicted.share_with_emotion)
            << " (" << cmp.predicted.emotion_bearing << "/" << cmp.predicted.reports << ")\n";
  return kExitOk;
}

inline int cmd_plot(const Flags& f) {
  require(f.input, "--input");
  require(f.out, "--out");
  require(f.value_column, "--value-column");
  const auto t = csv::read(f.input);
  svg::ChartSpec spec;
  spec.title = f.title.empty() ? fs::path(f.input).filename().string() : f.title;
  spec.y_label = f.value_column;
  spec.reference = f.reference;
  const auto li = t.column(f.label_column), vi = t.column(f.value_column);
  const std::optional<std::size_t> ei =
      f.error_column.empty() ? std::nullopt : std::optional<std::size_t>(t.column(f.error_column));
  for (const auto& row : t.rows) {
    if (f.series && t.column("series") < row.size() && row.at(t.column("series")) != *f.series) continue;
    if (row.at(vi) == "NA") continue;
    spec.labels.push_back(row.at(li));
    spec.values.push_back(csv::to_double(row.at(vi)));
    if (ei) spec.errors.push_back(csv::to_double(row.at(*ei)));
  }
  std::string doc;
  if (f.kind == "bar") {
    doc = svg::bar_chart(spec);
  } else if (f.kind == "line") {
    doc = svg::line_chart(spec);
  } else {
    throw ValidationError("unknown plot kind " + f.kind + " (expected bar|line)");
  }
  if (fs::path(f.out).has_parent_path()) fs::create_directories(fs::path(f.out).parent_path());
  std::ofstream(f.out, std::ios::binary) << doc;
  return kExitOk;
}

inline int cmd_synth(const Flags& f) {
  require(f.out, "--out");
  SyntheticSpec spec;
  spec.seed = f.seed.value_or(spec.seed);
  spec.series = f.synth_series;
  spec.reports_per_series = f.synth_reports;
  spec.labelled = !f.unlabelled;
  if (f.unlabelled) spec.id_prefix = "unl";
  write_corpus(fs::path(f.out), generate_synthetic_corpus(spec));
  std::cout << "wrote " << spec.series * spec.reports_per_series << " reports -> " << f.out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

inline void configure_logging(const Flags& f) {
  auto logger = spdlog::get("dreamaffect");
  if (!logger) logger = spdlog::stderr_logger_st("dreamaffect");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(f.verbose ? spdlog::level::debug : f.quiet ? spdlog::level::err : spdlog::level::warn);
}

/// Entry point. Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"Emotion annotation toolkit for HVDC-coded dream reports"};
  app.require_subcommand(1);
  Flags f;
  int (*action)(const Flags&) = nullptr;

  app.add_flag("-v,--verbose", f.verbose, "Debug logging");
  app.add_flag("-q,--quiet", f.quiet, "Errors only");

  auto common = [&f](CLI::App* sub, bool with_corpus = true) {
    if (with_corpus) sub->add_option("--corpus", f.corpus, "Annotated corpus (JSONL)");
    sub->add_option("--config", f.config, "JSON config file; flags override it");
    sub->add_option("--mode", f.mode, "Emotion set: dreamer|general");
    sub->add_option("--seed", f.seed, "Random seed");
  };
  auto bind = [&action](CLI::App* sub, int (*fn)(const Flags&)) {
    sub->callback([&action, fn] { action = fn; });
  };

  auto* ingest = app.add_subcommand("ingest", "Validate a JSONL corpus and print statistics");
  ingest->add_option("--input", f.input, "Raw JSONL corpus")->required();
  ingest->add_option("--out", f.out, "Write the normalized corpus here");
  ingest->add_option("--mode", f.mode, "Emotion set for statistics: dreamer|general");
  ingest->add_option("--profile", f.profile, "Check counts against a profile: none|dreambank");
  bind(ingest, cmd_ingest);

  auto* sentiment = app.add_subcommand("sentiment", "Off-the-shelf sentiment experiments");
  sentiment->require_subcommand(1);
  auto sentiment_opts = [&](CLI::App* sub) {
    common(sub);
    sub->add_option("--backend", f.backend, "lexicon | command:<shell command>");
    sub->add_option("--polarity-table", f.polarity_table, "JSON {code: polarity} override");
    sub->add_option("--out", f.out, "Output path");
  };
  auto* score = sentiment->add_subcommand("score", "Annotator and model score per report (CSV)");
  sentiment_opts(score);
  bind(score, cmd_sentiment_score);
  auto* correlate = sentiment->add_subcommand("correlate", "Spearman between annotator and model scores");
  sentiment_opts(correlate);
  bind(correlate, cmd_sentiment_correlate);
  auto* single = sentiment->add_subcommand("single-emotion", "Polarity evaluation on single-emotion reports");
  sentiment_opts(single);
  bind(single, cmd_sentiment_single);

  auto train_opts = [&](CLI::App* sub) {
    common(sub);
    sub->add_option("--out", f.out, "Output directory");
    sub->add_option("--threshold", f.threshold, "Decision threshold in (0,1)");
    sub->add_option("--encoder", f.encoder, "Encoder type: hashing|bag-of-embeddings");
  };
  auto* train_cmd = app.add_subcommand("train", "Train the multi-label emotion classifier");
  train_opts(train_cmd);
  bind(train_cmd, cmd_train);

  auto* eval = app.add_subcommand("eval", "Evaluation protocols");
  eval->require_subcommand(1);
  auto* kfold = eval->add_subcommand("kfold", "K-fold cross-validation");
  train_opts(kfold);
  kfold->add_option("--k", f.k, "Number of folds");
  kfold->add_flag("--stratified", f.stratified, "Stratify folds by label combination");
  bind(kfold, cmd_eval_kfold);
  auto* ablate = eval->add_subcommand("ablate", "Leave-one-series-out ablation");
  train_opts(ablate);
  ablate->add_option("--series", f.series, "Only report this held-out series");
  ablate->add_option("--kfold-summary", f.kfold_reference, "summary.csv of a K-fold run (reference)");
  bind(ablate, cmd_eval_ablate);

  auto* predict_cmd = app.add_subcommand("predict", "Predict emotions for a corpus");
  predict_cmd->add_option("--model", f.model, "Model directory")->required();
  predict_cmd->add_option("--input", f.input, "Corpus to annotate (JSONL)")->required();
  predict_cmd->add_option("--out", f.out, "Predictions CSV")->required();
  predict_cmd->add_option("--threshold", f.threshold, "Decision threshold (default: model's)");
  predict_cmd->add_option("--summary", f.summary, "Emotions-per-report summary CSV");
  bind(predict_cmd, cmd_predict);

  auto* analyze = app.add_subcommand("analyze", "Post-hoc analyses");
  analyze->require_subcommand(1);
  auto* supp = analyze->add_subcommand("support-correlation", "Support vs F1 per held-out series");
  supp->add_option("--input", f.input, "Ablation run directory")->required();
  supp->add_option("--out", f.out, "Output CSV");
  bind(supp, cmd_support_correlation);
  auto* dist = analyze->add_subcommand("distribution", "Predicted vs training emotion distribution");
  dist->add_option("--input", f.input, "Predictions CSV")->required();
  dist->add_option("--corpus", f.corpus, "Training corpus (JSONL)")->required();
  dist->add_option("--mode", f.mode, "Emotion set of the training corpus");
  dist->add_option("--out", f.out, "Output CSV");
  bind(dist, cmd_distribution);

  auto* plot = app.add_subcommand("plot", "Render a CSV column as an SVG chart");
  plot->add_option("--input", f.input, "CSV file")->required();
  plot->add_option("--out", f.out, "SVG file")->required();
  plot->add_option("--kind", f.kind, "bar|line");
  plot->add_option("--label-column", f.label_column, "Category column");
  plot->add_option("--value-column", f.value_column, "Numeric column")->required();
  plot->add_option("--error-column", f.error_column, "Error-bar column");
  plot->add_option("--reference", f.reference, "Dashed reference value");
  plot->add_option("--series", f.series, "Keep only rows whose 'series' column matches");
  plot->add_option("--title", f.title, "Chart title");
  bind(plot, cmd_plot);

  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus (for demos and tests)");
  synth->add_option("--out", f.out, "Output JSONL")->required();
  synth->add_option("--seed", f.seed, "Random seed");
  synth->add_option("--series-count", f.synth_series, "Number of series");
  synth->add_option("--reports-per-series", f.synth_reports, "Reports per series");
  synth->add_flag("--unlabelled", f.unlabelled, "Strip annotations");
  bind(synth, cmd_synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  configure_logging(f);
  try {
    return action ? action(f) : kExitValidation;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << '\n';
    return kExitRuntime;
  }
}

inline int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"dreamaffect"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace dreamaffect::cli
