#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <spdlog/spdlog.h>

#include "dreamaffect/corpus.hpp"
#include "dreamaffect/csv.hpp"
#include "dreamaffect/encoder.hpp"
#include "dreamaffect/metrics.hpp"
#include "dreamaffect/multilabel.hpp"
#include "dreamaffect/rng.hpp"

namespace dreamaffect {

// ---------------------------------------------------------------------------
// K-fold splitting

struct FoldSpec {
  std::size_t index = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;  // training seed for this fold
};

/// Seeded shuffle, then k contiguous test blocks whose sizes differ by at most
/// one (the first n % k blocks take the extra report). With `stratify_by`, the
/// shuffled order is grouped by label combination and dealt round-robin.
inline std::vector<FoldSpec> kfold_split(const Corpus& corpus, std::size_t k, std::uint64_t seed,
                                         std::optional<EmotionMode> stratify_by = std::nullopt) {
  const std::size_t n = corpus.size();
  if (k < 2) throw ValidationError("kfold: k must be at least 2");
  if (k > n) {
    throw ValidationError("kfold: k = " + std::to_string(k) + " exceeds corpus size " +
                          std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<std::size_t> fold_of(n);
  if (stratify_by) {
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      return extract_label_vector(corpus.reports[a], *stratify_by).to_ulong() <
             extract_label_vector(corpus.reports[b], *stratify_by).to_ulong();
    });
    for (std::size_t i = 0; i < n; ++i) fold_of[order[i]] = i % k;
  } else {
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
      const std::size_t len = n / k + (f < n % k ? 1 : 0);
      for (std::size_t i = 0; i < len; ++i) fold_of[order[pos++]] = f;
    }
  }

  std::vector<FoldSpec> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    folds[f].index = f;
    folds[f].seed = derive_seed(seed, f);
  }
  // Test ids follow shuffled order; train ids follow corpus order.
  for (auto i : order) folds[fold_of[i]].test_ids.push_back(corpus.reports[i].id);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < k; ++f) {
      if (fold_of[i] != f) folds[f].train_ids.push_back(corpus.reports[i].id);
    }
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Mean +- std across folds

struct SummaryRow {
  std::string label;
  PrfTriple mean;
  PrfTriple std;  // population standard deviation
  double support_mean = 0.0;
};

struct MetricsSummary {
  std::vector<SummaryRow> rows;  // classes, then macro/micro/samples/weighted avg
  std::size_t runs = 0;

  [[nodiscard]] const SummaryRow* find(std::string_view label) const {
    for (const auto& r : rows) {
      if (r.label == label) return &r;
    }
    return nullptr;
  }
};

namespace detail {

struct LabeledTriple {
  std::string label;
  PrfTriple v;
  double support;
};

inline std::vector<LabeledTriple> flatten(const MetricsReport& rep) {
  std::vector<LabeledTriple> out;
  for (const auto& c : rep.per_class) {
    out.push_back({c.label, {c.precision, c.recall, c.f1}, static_cast<double>(c.support)});
  }
  const auto s = static_cast<double>(rep.total_support);
  out.push_back({"macro avg", rep.macro, s});
  out.push_back({"micro avg", rep.micro, s});
  out.push_back({"samples avg", rep.samples, s});
  out.push_back({"weighted avg", rep.weighted, s});
  return out;
}

inline std::pair<double, double> mean_std(std::span<const double> xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / n)};
}

}  // namespace detail

inline MetricsSummary summarize(std::span<const MetricsReport> reports) {
  MetricsSummary s;
  s.runs = reports.size();
  if (reports.empty()) return s;
  const auto first = detail::flatten(reports.front());
  for (std::size_t r = 0; r < first.size(); ++r) {
    std::vector<double> p, rc, f, sup;
    for (const auto& rep : reports) {
      const auto flat = detail::flatten(rep);
      if (flat.size() != first.size() || flat[r].label != first[r].label) {
        throw DataError("summarize: reports have different class rows");
      }
      p.push_back(flat[r].v.precision);
      rc.push_back(flat[r].v.recall);
      f.push_back(flat[r].v.f1);
      sup.push_back(flat[r].support);
    }
    SummaryRow row;
    row.label = first[r].label;
    std::tie(row.mean.precision, row.std.precision) = detail::mean_std(p);
    std::tie(row.mean.recall, row.std.recall) = detail::mean_std(rc);
    std::tie(row.mean.f1, row.std.f1) = detail::mean_std(f);
    row.support_mean = detail::mean_std(sup).first;
    s.rows.push_back(std::move(row));
  }
  return s;
}

inline csv::Table summary_table(const MetricsSummary& s) {
  csv::Table t{{"label", "precision_mean", "precision_std", "recall_mean", "recall_std", "f1_mean",
                "f1_std", "support_mean"},
               {}};
  for (const auto& r : s.rows) {
    t.rows.push_back({r.label, csv::fixed(r.mean.precision), csv::fixed(r.std.precision),
                      csv::fixed(r.mean.recall), csv::fixed(r.std.recall), csv::fixed(r.mean.f1),
                      csv::fixed(r.std.f1), csv::fixed(r.support_mean, 1)});
  }
  return t;
}

inline MetricsSummary summary_from_table(const csv::Table& t) {
  MetricsSummary s;
  const auto li = t.column("label");
  for (const auto& row : t.rows) {
    SummaryRow r;
    r.label = row.at(li);
    r.mean = {csv::to_double(row.at(t.column("precision_mean"))),
              csv::to_double(row.at(t.column("recall_mean"))),
              csv::to_double(row.at(t.column("f1_mean")))};
    r.std = {csv::to_double(row.at(t.column("precision_std"))),
             csv::to_double(row.at(t.column("recall_std"))),
             csv::to_double(row.at(t.column("f1_std")))};
    r.support_mean = csv::to_double(row.at(t.column("support_mean")));
    s.rows.push_back(std::move(r));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace detail {

inline Corpus select(const Corpus& corpus, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, const DreamReport*> by_id;
  for (const auto& r : corpus.reports) by_id.emplace(r.id, &r);
  Corpus out;
  out.provenance = corpus.provenance;
  for (const auto& id : ids) out.reports.push_back(*by_id.at(id));
  return out;
}

inline MetricsReport train_and_score(const Corpus& train_set, const Corpus& test_set,
                                     const TrainConfig& config, const EncoderBackend& encoder,
                                     EmotionMode mode, EmbeddingCache* cache) {
  const auto examples = make_examples(train_set, mode);
  const auto model = train(examples, config, encoder, cache);
  std::vector<LabelVector> gold, pred;
  for (const auto& r : test_set.reports) {
    gold.push_back(extract_label_vector(r, mode));
    pred.push_back(predict(model, r, config.threshold).labels);
  }
  return evaluate_emotions(gold, pred);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// K-fold cross-validation

struct FoldResult {
  FoldSpec spec;
  MetricsReport metrics;
};

struct KFoldResult {
  EmotionMode mode = EmotionMode::General;
  std::vector<FoldResult> folds;
  MetricsSummary summary;
  std::size_t dropped_reports = 0;  // reports without any emotion, excluded up front
};

/// Trains a fresh head (and encoder copy) per fold and scores it on the held-out
/// block. Only reports with at least one emotion (any character) take part; in
/// DREAMER mode such reports may still carry an all-zero label vector.
inline KFoldResult run_kfold(const Corpus& corpus, const TrainConfig& config,
                             const EncoderBackend& encoder, EmotionMode mode, std::size_t k = 5,
                             bool stratified = false, EmbeddingCache* cache = nullptr) {
  const auto data = filter_emotion_bearing(corpus, EmotionMode::General);
  KFoldResult out;
  out.mode = mode;
  out.dropped_reports = corpus.size() - data.size();
  if (out.dropped_reports) {
    spdlog::info("kfold: excluded {} reports without emotions", out.dropped_reports);
  }
  const auto folds =
      kfold_split(data, k, config.seed, stratified ? std::optional<EmotionMode>(mode) : std::nullopt);
  for (const auto& f : folds) {
    auto fold_config = config;
    fold_config.seed = f.seed;
    try {
      auto metrics = detail::train_and_score(detail::select(data, f.train_ids),
                                             detail::select(data, f.test_ids), fold_config,
                                             encoder, mode, cache);
      out.folds.push_back({f, std::move(metrics)});
    } catch (const std::exception& e) {
      throw std::runtime_error("fold " + std::to_string(f.index) + ": " + e.what());
    }
    spdlog::info("fold {}/{}: weighted F1 {:.4f}", f.index + 1, k,
                 out.folds.back().metrics.weighted.f1);
  }
  std::vector<MetricsReport> reps;
  for (const auto& f : out.folds) reps.push_back(f.metrics);
  out.summary = summarize(reps);
  return out;
}

// ---------------------------------------------------------------------------
// Leave-one-series-out ablation

struct AblationRun {
  std::string series;
  MetricsReport metrics;
  std::array<double, kEmotionCount> f1{};
  std::array<std::size_t, kEmotionCount> support{};
  double weighted_f1 = 0.0;
  double macro_f1 = 0.0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

struct AblationResult {
  std::vector<AblationRun> runs;
  std::vector<std::string> skipped;  // notices for series that could not be held out
};

inline AblationRun make_ablation_run(std::string series, MetricsReport metrics) {
  AblationRun run;
  run.series = std::move(series);
  for (std::size_t c = 0; c < kEmotionCount && c < metrics.per_class.size(); ++c) {
    run.f1[c] = metrics.per_class[c].f1;
    run.support[c] = metrics.per_class[c].support;
  }
  run.weighted_f1 = metrics.weighted.f1;
  run.macro_f1 = metrics.macro.f1;
  run.metrics = std::move(metrics);
  return run;
}

/// One run per series: that series is the test set, every other series trains.
/// Series disjointness is checked on the materialized split, not assumed.
inline AblationResult run_ablation(const Corpus& corpus, const TrainConfig& config,
                                   const EncoderBackend& encoder,
                                   EmotionMode mode = EmotionMode::General,
                                   EmbeddingCache* cache = nullptr) {
  const auto data = filter_emotion_bearing(corpus, EmotionMode::General);
  const auto all_series = series_ids(corpus);
  if (all_series.size() < 2) throw ValidationError("ablation needs at least 2 series");

  AblationResult out;
  for (std::size_t s = 0; s < all_series.size(); ++s) {
    const auto& held_out = all_series[s];
    Corpus train_set, test_set;
    for (const auto& r : data.reports) (r.series == held_out ? test_set : train_set).reports.push_back(r);
    if (test_set.empty()) {
      out.skipped.push_back("series '" + held_out + "' has no emotion-bearing reports; skipped");
      spdlog::warn("ablation: {}", out.skipped.back());
      continue;
    }
    if (train_set.empty()) {
      out.skipped.push_back("series '" + held_out + "' leaves no training data; skipped");
      continue;
    }
    for (const auto& r : train_set.reports) {
      if (r.series == held_out) {
        throw std::logic_error("ablation: held-out series '" + held_out + "' leaked into training");
      }
    }
    auto run_config = config;
    run_config.seed = derive_seed(config.seed, 100 + s);
    auto metrics = detail::train_and_score(train_set, test_set, run_config, encoder, mode, cache);
    auto run = make_ablation_run(held_out, std::move(metrics));
    run.train_size = train_set.size();
    run.test_size = test_set.size();
    for (std::size_t c = 0; c < kEmotionCount; ++c) {
      if (run.support[c] == 0) {
        spdlog::info("ablation: series '{}' has no {} test items", held_out, kEmotionCodes[c]);
      }
    }
    out.runs.push_back(std::move(run));
  }
  return out;
}

/// Filesystem-safe directory name for a series id.
inline std::string series_slug(std::string_view series) {
  std::string s;
  for (unsigned char c : series) s += (std::isalnum(c) || c == '-' || c == '.') ? static_cast<char>(c) : '_';
  return s.empty() ? "_" : s;
}

/// Per-series rows with per-emotion F1 and support (plus the K-fold reference
/// weighted F1 when known).
inline csv::Table ablation_table(std::span<const AblationRun> runs,
                                 const MetricsSummary* reference = nullptr) {
  csv::Row header{"series", "dir", "train_n", "test_n", "weighted_f1", "macro_f1"};
  for (auto code : kEmotionCodes) header.push_back("f1_" + std::string(code));
  for (auto code : kEmotionCodes) header.push_back("support_" + std::string(code));
  header.push_back("kfold_weighted_f1");
  csv::Table t{header, {}};
  const SummaryRow* ref = reference ? reference->find("weighted avg") : nullptr;
  for (const auto& r : runs) {
    csv::Row row{r.series,
                 series_slug(r.series),
                 std::to_string(r.train_size),
                 std::to_string(r.test_size),
                 csv::fixed(r.weighted_f1),
                 csv::fixed(r.macro_f1)};
    for (double f : r.f1) row.push_back(csv::fixed(f));
    for (auto s : r.support) row.push_back(std::to_string(s));
    row.push_back(ref ? csv::fixed(ref->mean.f1) : "NA");
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Per-emotion F1 mean and population std across ablation runs, alongside the
/// K-fold per-class means when known.
inline csv::Table ablation_emotion_table(std::span<const AblationRun> runs,
                                         const MetricsSummary* reference = nullptr) {
  csv::Table t{{"emotion", "f1_mean", "f1_std", "runs", "kfold_f1_mean"}, {}};
  for (std::size_t c = 0; c < kEmotionCount; ++c) {
    std::vector<double> f;
    for (const auto& r : runs) f.push_back(r.f1[c]);
    const auto [mean, sd] = detail::mean_std(f);
    const SummaryRow* ref = reference ? reference->find(kEmotionCodes[c]) : nullptr;
    t.rows.push_back({std::string(kEmotionCodes[c]), csv::fixed(mean), csv::fixed(sd),
                      std::to_string(f.size()), ref ? csv::fixed(ref->mean.f1) : "NA"});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Support vs F1 correlation per held-out series

inline std::vector<ScopedCorrelation> support_correlation(std::span<const AblationRun> runs) {
  std::vector<ScopedCorrelation> out;
  for (const auto& r : runs) {
    std::vector<double> support, f1;
    for (std::size_t c = 0; c < kEmotionCount; ++c) {
      support.push_back(static_cast<double>(r.support[c]));
      f1.push_back(r.f1[c]);
    }
    ScopedCorrelation sc{r.series, kEmotionCount, std::nullopt, {}};
    try {
      sc.result = spearman(support, f1);
    } catch (const UndefinedCorrelation&) {
      sc.note = "zero variance";
    }
    out.push_back(std::move(sc));
  }
  return out;
}

inline csv::Table correlation_rows_table(std::span<const ScopedCorrelation> rows,
                                         std::string_view scope_column = "series") {
  csv::Table t{{std::string(scope_column), "rho", "p", "n"}, {}};
  for (const auto& r : rows) {
    if (r.result) {
      t.rows.push_back({r.scope, csv::fixed(r.result->rho), csv::fixed(r.result->p_value),
                        std::to_string(r.n)});
    } else {
      t.rows.push_back({r.scope, "NA", "NA", std::to_string(r.n)});
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Unlabelled-corpus prediction and distribution analysis

struct ReportPrediction {
  std::string id;
  std::string series;
  Prediction prediction;
};

struct PredictionSummary {
  std::size_t reports = 0;
  std::size_t with_emotion = 0;
  double share_with_emotion = 0.0;                 // denominator: reports
  std::map<std::size_t, std::size_t> per_count;    // emotions per report -> reports
};

struct CorpusPredictions {
  std::vector<ReportPrediction> rows;
  PredictionSummary summary;
};

inline PredictionSummary summarize_predictions(std::span<const LabelVector> labels) {
  PredictionSummary s;
  s.reports = labels.size();
  for (const auto& v : labels) {
    ++s.per_count[v.count()];
    s.with_emotion += v.any();
  }
  s.share_with_emotion =
      s.reports ? static_cast<double>(s.with_emotion) / static_cast<double>(s.reports) : 0.0;
  return s;
}

inline CorpusPredictions predict_corpus(const TrainedModel& model, const Corpus& unlabeled,
                                        double threshold = 0.5) {
  CorpusPredictions out;
  std::vector<LabelVector> labels;
  for (const auto& r : unlabeled.reports) {
    auto p = predict(model, r, threshold);
    labels.push_back(p.labels);
    out.rows.push_back({r.id, r.series, p});
  }
  out.summary = summarize_predictions(labels);
  return out;
}

inline csv::Table predictions_table(std::span<const ReportPrediction> rows) {
  csv::Row header{"id", "series"};
  for (auto code : kEmotionCodes) header.push_back("p_" + std::string(code));
  for (auto code : kEmotionCodes) header.push_back(std::string(code));
  header.push_back("emotion_count");
  csv::Table t{header, {}};
  for (const auto& r : rows) {
    csv::Row row{r.id, r.series};
    for (double p : r.prediction.probs) row.push_back(csv::fixed(p, 6));
    for (std::size_t c = 0; c < kEmotionCount; ++c) row.push_back(r.prediction.labels[c] ? "1" : "0");
    row.push_back(std::to_string(r.prediction.labels.count()));
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Label vectors back from a predictions CSV.
inline std::vector<LabelVector> labels_from_predictions(const csv::Table& t) {
  std::array<std::size_t, kEmotionCount> cols{};
  for (std::size_t c = 0; c < kEmotionCount; ++c) cols[c] = t.column(kEmotionCodes[c]);
  std::vector<LabelVector> out;
  for (const auto& row : t.rows) {
    LabelVector v;
    for (std::size_t c = 0; c < kEmotionCount; ++c) v[c] = row.at(cols[c]) == "1";
    out.push_back(v);
  }
  return out;
}

inline csv::Table prediction_summary_table(const PredictionSummary& s) {
  csv::Table t{{"emotions_per_report", "reports", "share"}, {}};
  for (const auto& [k, n] : s.per_count) {
    t.rows.push_back({std::to_string(k), std::to_string(n),
                      csv::fixed(s.reports ? static_cast<double>(n) / static_cast<double>(s.reports) : 0.0)});
  }
  return t;
}

/// Emotion distribution of a set of label vectors. Denominators:
///  class_share   -> presence_total (sum over reports of distinct emotions)
///  report_share  -> emotion_bearing (reports with at least one emotion)
///  share_with_emotion -> reports
struct DistributionReport {
  std::size_t reports = 0;
  std::size_t emotion_bearing = 0;
  std::size_t presence_total = 0;
  std::array<std::size_t, kEmotionCount> class_counts{};
  std::array<double, kEmotionCount> class_share{};
  std::array<double, kEmotionCount> report_share{};
  double share_with_emotion = 0.0;
  std::map<std::size_t, std::size_t> per_count;
};

inline DistributionReport distribution_of(std::span<const LabelVector> labels) {
  DistributionReport d;
  d.reports = labels.size();
  for (const auto& v : labels) {
    ++d.per_count[v.count()];
    d.emotion_bearing += v.any();
    d.presence_total += v.count();
    for (std::size_t c = 0; c < kEmotionCount; ++c) d.class_counts[c] += v[c];
  }
  for (std::size_t c = 0; c < kEmotionCount; ++c) {
    const auto n = static_cast<double>(d.class_counts[c]);
    d.class_share[c] = d.presence_total ? n / static_cast<double>(d.presence_total) : 0.0;
    d.report_share[c] = d.emotion_bearing ? n / static_cast<double>(d.emotion_bearing) : 0.0;
  }
  d.share_with_emotion =
      d.reports ? static_cast<double>(d.emotion_bearing) / static_cast<double>(d.reports) : 0.0;
  return d;
}

struct DistributionComparison {
  DistributionReport predicted;
  DistributionReport training;
  double tv_distance = 0.0;  // over class_share
};

inline DistributionComparison distribution_compare(std::span<const LabelVector> predicted,
                                                   const Corpus& training,
                                                   EmotionMode mode = EmotionMode::General) {
  if (predicted.empty() || training.empty()) {
    throw DataError("distribution_compare: both inputs must be non-empty");
  }
  std::vector<LabelVector> train_labels;
  for (const auto& r : training.reports) train_labels.push_back(extract_label_vector(r, mode));
  DistributionComparison out{distribution_of(predicted), distribution_of(train_labels), 0.0};
  for (std::size_t c = 0; c < kEmotionCount; ++c) {
    out.tv_distance += std::abs(out.predicted.class_share[c] - out.training.class_share[c]);
  }
  out.tv_distance *= 0.5;
  return out;
}

inline csv::Table distribution_table(const DistributionComparison& d) {
  csv::Table t{{"emotion", "predicted_count", "predicted_class_share", "predicted_report_share",
                "training_count", "training_class_share", "training_report_share"},
               {}};
  for (std::size_t c = 0; c < kEmotionCount; ++c) {
    t.rows.push_back({std::string(kEmotionCodes[c]), std::to_string(d.predicted.class_counts[c]),
                      csv::fixed(d.predicted.class_share[c]), csv::fixed(d.predicted.report_share[c]),
                      std::to_string(d.training.class_counts[c]),
                      csv::fixed(d.training.class_share[c]), csv::fixed(d.training.report_share[c])});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Run directories

inline void write_kfold_run(const std::filesystem::path& dir, const KFoldResult& r) {
  for (const auto& f : r.folds) {
    const auto fold_dir = dir / "folds" / std::to_string(f.spec.index);
    csv::write(fold_dir / "metrics.csv", to_table(f.metrics));
    csv::Table split{{"id", "role"}, {}};
    for (const auto& id : f.spec.test_ids) split.rows.push_back({id, "test"});
    for (const auto& id : f.spec.train_ids) split.rows.push_back({id, "train"});
    csv::write(fold_dir / "split.csv", split);
  }
  csv::write(dir / "summary.csv", summary_table(r.summary));
}

inline void write_ablation_run(const std::filesystem::path& dir, const AblationResult& r,
                               const MetricsSummary* reference = nullptr) {
  for (const auto& run : r.runs) {
    csv::write(dir / "ablation" / series_slug(run.series) / "metrics.csv", to_table(run.metrics));
  }
  csv::write(dir / "ablation_summary.csv", ablation_table(r.runs, reference));
  csv::write(dir / "ablation_emotions.csv", ablation_emotion_table(r.runs, reference));
}

/// Rebuilds ablation runs from a run directory written by write_ablation_run.
inline std::vector<AblationRun> load_ablation_runs(const std::filesystem::path& dir) {
  const auto summary = csv::read(dir / "ablation_summary.csv");
  const auto si = summary.column("series"), di = summary.column("dir");
  std::vector<AblationRun> runs;
  for (const auto& row : summary.rows) {
    auto metrics = from_table(csv::read(dir / "ablation" / row.at(di) / "metrics.csv"));
    auto run = make_ablation_run(row.at(si), std::move(metrics));
    run.train_size = static_cast<std::size_t>(csv::to_double(row.at(summary.column("train_n"))));
    run.test_size = static_cast<std::size_t>(csv::to_double(row.at(summary.column("test_n"))));
    runs.push_back(std::move(run));
  }
  return runs;
}

}  // namespace dreamaffect
