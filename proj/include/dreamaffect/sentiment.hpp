#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "dreamaffect/corpus.hpp"
#include "dreamaffect/csv.hpp"
#include "dreamaffect/emotion.hpp"
#include "dreamaffect/errors.hpp"
#include "dreamaffect/metrics.hpp"
#include "dreamaffect/text.hpp"

namespace dreamaffect {

struct SentimentPrediction {
  double p_positive = 0.5;
  double p_negative = 0.5;

  [[nodiscard]] bool valid() const noexcept {
    return p_positive >= 0.0 && p_positive <= 1.0 && p_negative >= 0.0 && p_negative <= 1.0 &&
           std::abs(p_positive + p_negative - 1.0) <= 1e-6;
  }
};

/// Integer polarity per emotion class (the scoring table of the Annotator Score).
class PolarityTable {
 public:
  /// AN, AP, SD -> -1; CO -> 0 (neutral); HA -> +1.
  PolarityTable() : values_{-1, -1, -1, 0, 1} {}
  explicit PolarityTable(std::array<int, kEmotionCount> values) : values_(values) {}

  [[nodiscard]] int operator[](EmotionClass e) const noexcept { return values_[index_of(e)]; }

  /// Confusion counted as negative, matching the polarity collapse used by the
  /// single-emotion evaluation.
  static PolarityTable confusion_negative() { return PolarityTable({-1, -1, -1, -1, 1}); }

  static PolarityTable from_json(const nlohmann::json& j) {
    PolarityTable t;
    if (!j.is_object()) throw ValidationError("polarity table must be a JSON object");
    for (const auto& [code, value] : j.items()) {
      if (!value.is_number_integer()) {
        throw ValidationError("polarity table: value for " + code + " must be an integer");
      }
      t.values_[index_of(parse_emotion(code))] = value.get<int>();
    }
    return t;
  }

  static PolarityTable load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open polarity table " + path.string());
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("polarity table " + path.string() + ": " + e.what());
    }
  }

  [[nodiscard]] nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    for (auto e : kAllEmotions) j[std::string(code_of(e))] = (*this)[e];
    return j;
  }

  bool operator==(const PolarityTable&) const = default;

 private:
  std::array<int, kEmotionCount> values_;
};

struct ScoredReport {
  std::string id;
  std::string series;
  int annotator_score = 0;
  double model_score = 0.0;
  std::size_t emotion_count = 0;
  Polarity predicted = Polarity::Negative;
};

// ---------------------------------------------------------------------------
// Backend contract

/// A two-class sentiment model. Implementations must be deterministic for a
/// fixed configuration. If `concurrent_safe()` is false the runner never calls
/// predict_batch from more than one thread at a time.
class SentimentBackend {
 public:
  virtual ~SentimentBackend() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  /// Inputs longer than this many whitespace tokens are truncated by the runner.
  [[nodiscard]] virtual std::size_t max_input_tokens() const = 0;
  [[nodiscard]] virtual bool concurrent_safe() const { return false; }
  virtual std::vector<SentimentPrediction> predict_batch(std::span<const std::string> texts) = 0;
};

/// Offline stand-in: counts hits against fixed positive and negative word
/// lists and maps the difference through a logistic curve.
class LexiconBackend final : public SentimentBackend {
 public:
  explicit LexiconBackend(double slope = 1.5, std::size_t max_tokens = 512)
      : slope_(slope), max_tokens_(max_tokens) {}

  [[nodiscard]] std::string name() const override { return "lexicon"; }
  [[nodiscard]] std::size_t max_input_tokens() const override { return max_tokens_; }
  [[nodiscard]] bool concurrent_safe() const override { return true; }

  std::vector<SentimentPrediction> predict_batch(std::span<const std::string> texts) override {
    std::vector<SentimentPrediction> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(score(t));
    return out;
  }

  [[nodiscard]] SentimentPrediction score(std::string_view text) const {
    int balance = 0;
    for (const auto& tok : tokenize(text)) {
      if (positive().contains(tok)) ++balance;
      if (negative().contains(tok)) --balance;
    }
    const double p = 1.0 / (1.0 + std::exp(-slope_ * balance));
    return {p, 1.0 - p};
  }

  static const std::unordered_set<std::string>& positive() {
    static const std::unordered_set<std::string> words{
        "happy",    "happiness", "joy",    "joyful", "glad",      "delighted", "love",
        "loved",    "pleased",   "excited", "fun",   "laugh",     "laughed",   "laughing",
        "smile",    "smiled",    "wonderful", "beautiful", "good", "great",    "nice",
        "calm",     "peaceful",  "relieved", "proud", "enjoy",     "enjoyed",   "cheerful"};
    return words;
  }

  static const std::unordered_set<std::string>& negative() {
    static const std::unordered_set<std::string> words{
        "angry",   "anger",     "furious",  "mad",     "rage",     "annoyed",  "afraid",
        "scared",  "fear",      "frightened", "terrified", "anxious", "worried", "nervous",
        "panic",   "sad",       "sadness",  "cry",     "cried",    "crying",   "grief",
        "lonely",  "depressed", "upset",    "confused", "puzzled", "bewildered", "bad",
        "terrible", "awful",    "horrible", "hate",    "dead",     "death",    "hurt",
        "pain",    "nightmare", "unhappy"};
    return words;
  }

 private:
  double slope_;
  std::size_t max_tokens_;
};

/// Runs an external command once per batch: texts go to its stdin as one JSON
/// string per line, and it must print one prediction per line, either
/// {"positive":p,"negative":q}, [p,q], or {"label":"POSITIVE"|"NEGATIVE","score":s}.
class CommandBackend final : public SentimentBackend {
 public:
  explicit CommandBackend(std::string command, std::size_t max_tokens = 512)
      : command_(std::move(command)), max_tokens_(max_tokens) {}

  [[nodiscard]] std::string name() const override { return "command:" + command_; }
  [[nodiscard]] std::size_t max_input_tokens() const override { return max_tokens_; }

  std::vector<SentimentPrediction> predict_batch(std::span<const std::string> texts) override {
    namespace fs = std::filesystem;
    const auto stem = fs::temp_directory_path() /
                      ("dreamaffect-" + std::to_string(::getpid()) + "-" + std::to_string(calls_++));
    const auto in_path = fs::path(stem.string() + ".in.jsonl");
    const auto out_path = fs::path(stem.string() + ".out.jsonl");
    {
      std::ofstream in(in_path, std::ios::binary);
      for (const auto& t : texts) in << nlohmann::json(t).dump() << '\n';
    }
    const std::string cmd = command_ + " < '" + in_path.string() + "' > '" + out_path.string() + "'";
    const int status = std::system(cmd.c_str());
    std::vector<SentimentPrediction> out;
    std::ifstream res(out_path, std::ios::binary);
    std::string line;
    while (status == 0 && std::getline(res, line)) {
      if (line.empty()) continue;
      out.push_back(parse_line(line));
    }
    std::error_code ec;
    fs::remove(in_path, ec);
    fs::remove(out_path, ec);
    if (status != 0) {
      const int code = WIFEXITED(status) ? WEXITSTATUS(status) : status;
      throw BackendError("command exited with status " + std::to_string(code));
    }
    return out;
  }

  static SentimentPrediction parse_line(const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
    if (j.contains("positive")) return {j["positive"].get<double>(), j["negative"].get<double>()};
    if (j.contains("label")) {
      const double s = j["score"].get<double>();
      return j["label"].get<std::string>() == "POSITIVE" ? SentimentPrediction{s, 1.0 - s}
                                                         : SentimentPrediction{1.0 - s, s};
    }
    throw BackendError("unrecognized prediction line: " + line);
  }

 private:
  std::string command_;
  std::size_t max_tokens_;
  std::size_t calls_ = 0;
};

/// "lexicon" or "command:<shell command>".
inline std::unique_ptr<SentimentBackend> make_sentiment_backend(const std::string& spec) {
  if (spec.empty() || spec == "lexicon") return std::make_unique<LexiconBackend>();
  if (spec.starts_with("command:")) return std::make_unique<CommandBackend>(spec.substr(8));
  throw ValidationError("unknown sentiment backend '" + spec + "'");
}

/// Truncates to the backend's input limit, splits into batches, and collects
/// predictions in input order. Batches run concurrently when the backend allows.
inline std::vector<SentimentPrediction> predict_all(SentimentBackend& backend,
                                                    std::span<const std::string> texts,
                                                    std::size_t batch_size = 32) {
  batch_size = std::max<std::size_t>(batch_size, 1);
  std::vector<std::string> inputs;
  inputs.reserve(texts.size());
  std::size_t truncated = 0;
  for (const auto& t : texts) {
    auto tr = truncate_tokens(t, backend.max_input_tokens());
    truncated += tr.truncated;
    inputs.push_back(std::move(tr.text));
  }
  if (truncated) {
    spdlog::info("{}: truncated {} of {} inputs to {} tokens", backend.name(), truncated,
                 inputs.size(), backend.max_input_tokens());
  }

  const std::size_t batches = (inputs.size() + batch_size - 1) / batch_size;
  std::vector<std::vector<SentimentPrediction>> results(batches);
  auto run_batch = [&](std::size_t b) {
    const auto begin = b * batch_size;
    const auto len = std::min(batch_size, inputs.size() - begin);
    std::vector<SentimentPrediction> preds;
    try {
      preds = backend.predict_batch(std::span<const std::string>(inputs).subspan(begin, len));
    } catch (const std::exception& e) {
      throw BackendError("backend " + backend.name() + " failed on batch " + std::to_string(b) +
                         ": " + e.what());
    }
    if (preds.size() != len) {
      throw BackendError("backend " + backend.name() + " returned " +
                         std::to_string(preds.size()) + " predictions for batch " +
                         std::to_string(b) + " of size " + std::to_string(len));
    }
    for (const auto& p : preds) {
      if (!p.valid()) {
        throw BackendError("backend " + backend.name() + " produced an invalid distribution in batch " +
                           std::to_string(b));
      }
    }
    results[b] = std::move(preds);
  };

  if (backend.concurrent_safe() && batches > 1) {
    const std::size_t width = std::max(1U, std::thread::hardware_concurrency());
    for (std::size_t start = 0; start < batches; start += width) {
      std::vector<std::future<void>> wave;
      for (std::size_t b = start; b < std::min(batches, start + width); ++b) {
        wave.push_back(std::async(std::launch::async, run_batch, b));
      }
      for (auto& f : wave) f.get();
    }
  } else {
    for (std::size_t b = 0; b < batches; ++b) run_batch(b);
  }

  std::vector<SentimentPrediction> out;
  out.reserve(inputs.size());
  for (auto& r : results) out.insert(out.end(), r.begin(), r.end());
  return out;
}

// ---------------------------------------------------------------------------
// Scores

/// Sum of table values over the mode-filtered mentions, duplicates included.
inline int annotator_score(const DreamReport& r, EmotionMode mode,
                           const PolarityTable& table = {}) {
  int s = 0;
  for (const auto& m : r.mentions) {
    if (mode == EmotionMode::Dreamer && !m.by_dreamer()) continue;
    s += table[m.emotion];
  }
  return s;
}

/// Resolution at which model scores are reported; differences below it are
/// subtraction noise.
inline constexpr double kModelScoreResolution = 1e-12;

/// p(POSITIVE) - p(NEGATIVE), snapped to kModelScoreResolution so that
/// e.g. (0.4, 0.6) gives exactly -0.2.
inline double model_score(const SentimentPrediction& p) {
  // Divide by the (exactly representable) inverse: an integer over 1e12 is
  // correctly rounded, a product with 1e-12 is not.
  const double d = p.p_positive - p.p_negative;
  return std::round(d / kModelScoreResolution) / (1.0 / kModelScoreResolution);
}

/// Argmax over the two labels. A tie (model score 0) resolves to NEGATIVE.
inline Polarity predicted_polarity(const SentimentPrediction& p) {
  return model_score(p) > 0.0 ? Polarity::Positive : Polarity::Negative;
}

/// HA is positive; AN, AP, SD and CO are negative.
constexpr Polarity collapse_polarity(EmotionClass e) noexcept {
  return e == EmotionClass::HA ? Polarity::Positive : Polarity::Negative;
}

// ---------------------------------------------------------------------------
// Annotator-vs-model score correlation

struct ScoreCorrelationReport {
  CorrelationResult overall;
  std::vector<ScopedCorrelation> per_series;
  std::vector<ScoredReport> scored;
};

inline std::vector<ScoredReport> score_reports(const Corpus& corpus, SentimentBackend& backend,
                                               EmotionMode mode, const PolarityTable& table,
                                               std::size_t batch_size = 32) {
  std::vector<std::string> texts;
  texts.reserve(corpus.size());
  for (const auto& r : corpus.reports) texts.push_back(r.text);
  const auto preds = predict_all(backend, texts, batch_size);
  std::vector<ScoredReport> scored;
  scored.reserve(corpus.size());
  std::size_t ties = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& r = corpus.reports[i];
    ScoredReport s{r.id,
                   r.series,
                   annotator_score(r, mode, table),
                   model_score(preds[i]),
                   mention_count(r, mode),
                   predicted_polarity(preds[i])};
    ties += s.model_score == 0.0;
    scored.push_back(std::move(s));
  }
  if (ties) spdlog::info("{}: {} tied predictions resolved to NEGATIVE", backend.name(), ties);
  return scored;
}

inline CorrelationResult correlate_scores(std::span<const ScoredReport> scored) {
  std::vector<double> a, m;
  for (const auto& s : scored) {
    a.push_back(static_cast<double>(s.annotator_score));
    m.push_back(s.model_score);
  }
  return spearman(a, m);
}

/// Spearman between Annotator and Model scores over all emotion-bearing
/// reports, then per series. Reports without mode-filtered mentions are
/// dropped first. A constant score vector overall raises UndefinedCorrelation;
/// per series it is recorded as unavailable, as are series with fewer than 3
/// reports.
inline ScoreCorrelationReport run_score_correlation(const Corpus& corpus, SentimentBackend& backend,
                                                    EmotionMode mode,
                                                    const PolarityTable& table = {},
                                                    std::size_t batch_size = 32) {
  const auto bearing = filter_emotion_bearing(corpus, mode);
  if (bearing.size() != corpus.size()) {
    spdlog::info("score correlation: dropped {} reports without {} emotions",
                 corpus.size() - bearing.size(), to_string(mode));
  }
  ScoreCorrelationReport rep;
  rep.scored = score_reports(bearing, backend, mode, table, batch_size);
  rep.overall = correlate_scores(rep.scored);

  for (const auto& series : series_ids(bearing)) {
    std::vector<ScoredReport> subset;
    std::copy_if(rep.scored.begin(), rep.scored.end(), std::back_inserter(subset),
                 [&](const auto& s) { return s.series == series; });
    ScopedCorrelation sc{series, subset.size(), std::nullopt, {}};
    if (subset.size() < 3) {
      sc.note = "fewer than 3 reports";
    } else {
      try {
        sc.result = correlate_scores(subset);
      } catch (const UndefinedCorrelation&) {
        sc.note = "zero variance";
      }
    }
    rep.per_series.push_back(std::move(sc));
  }
  return rep;
}

inline csv::Table scores_table(std::span<const ScoredReport> scored) {
  csv::Table t{{"id", "series", "emotion_count", "annotator_score", "model_score", "pred_label"},
               {}};
  for (const auto& s : scored) {
    t.rows.push_back({s.id, s.series, std::to_string(s.emotion_count),
                      std::to_string(s.annotator_score), csv::fixed(s.model_score, 6),
                      std::string(to_string(s.predicted))});
  }
  return t;
}

inline csv::Table correlation_table(const ScoreCorrelationReport& rep) {
  csv::Table t{{"scope", "rho", "p", "n"}, {}};
  t.rows.push_back({"overall", csv::fixed(rep.overall.rho), csv::fixed(rep.overall.p_value),
                    std::to_string(rep.overall.n)});
  for (const auto& s : rep.per_series) {
    if (s.result) {
      t.rows.push_back({s.scope, csv::fixed(s.result->rho), csv::fixed(s.result->p_value),
                        std::to_string(s.n)});
    } else {
      t.rows.push_back({s.scope, "NA", "NA", std::to_string(s.n)});
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Single-emotion binary evaluation

struct SeriesEmotionF1 {
  std::string series;
  EmotionClass emotion;
  Polarity reference;  // POSITIVE for HA, NEGATIVE otherwise
  std::size_t n = 0;   // reports in this (series, emotion) cell
  double f1 = 0.0;
};

struct SingleEmotionReport {
  MetricsReport metrics;
  std::vector<SeriesEmotionF1> per_series_per_emotion;
};

/// Expects a corpus already reduced by filter_single_emotion; anything else is
/// a contract violation. Each (series, emotion) cell scores the F1 of that
/// emotion's reference polarity over the reports whose single emotion it is.
inline SingleEmotionReport run_single_emotion_eval(const Corpus& corpus, SentimentBackend& backend,
                                                   EmotionMode mode, std::size_t batch_size = 32) {
  std::vector<EmotionClass> emotion;
  for (const auto& r : corpus.reports) {
    const auto ms = filtered_mentions(r, mode);
    if (ms.size() != 1) {
      throw ContractViolation("single-emotion eval: report " + r.id + " has " +
                              std::to_string(ms.size()) + " " + std::string(to_string(mode)) +
                              " mentions");
    }
    emotion.push_back(ms.front().emotion);
  }
  if (corpus.empty()) throw DataError("single-emotion eval: empty corpus");

  std::vector<std::string> texts;
  for (const auto& r : corpus.reports) texts.push_back(r.text);
  const auto preds = predict_all(backend, texts, batch_size);

  std::vector<Polarity> gold, pred;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    gold.push_back(collapse_polarity(emotion[i]));
    pred.push_back(predicted_polarity(preds[i]));
  }

  SingleEmotionReport rep;
  rep.metrics = binary_prf1(gold, pred);
  for (const auto& series : series_ids(corpus)) {
    for (auto e : kAllEmotions) {
      std::vector<Polarity> g, p;
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (corpus.reports[i].series == series && emotion[i] == e) {
          g.push_back(gold[i]);
          p.push_back(pred[i]);
        }
      }
      SeriesEmotionF1 cell{series, e, collapse_polarity(e), g.size(), 0.0};
      if (!g.empty()) cell.f1 = binary_prf1(g, p).per_class[static_cast<std::size_t>(cell.reference)].f1;
      rep.per_series_per_emotion.push_back(cell);
    }
  }
  return rep;
}

inline csv::Table series_emotion_table(std::span<const SeriesEmotionF1> cells) {
  csv::Table t{{"series", "emotion", "reference_class", "n", "f1"}, {}};
  for (const auto& c : cells) {
    t.rows.push_back({c.series, std::string(code_of(c.emotion)), std::string(to_string(c.reference)),
                      std::to_string(c.n), c.n ? csv::fixed(c.f1) : "NA"});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Score distributions split by emotions-per-report

inline constexpr std::size_t kScoreBins = 20;

/// Bin of a model score over 20 uniform bins on [-1, 1]; 1.0 falls in the last.
inline std::size_t score_bin(double score) {
  constexpr long half = kScoreBins / 2;
  const auto b = static_cast<long>(std::floor(score * half)) + half;
  return static_cast<std::size_t>(std::clamp<long>(b, 0, kScoreBins - 1));
}

inline double bin_lower_edge(std::size_t bin) {
  constexpr double half = kScoreBins / 2;
  return (static_cast<double>(bin) - half) / half;
}

struct ScoreDistribution {
  std::map<std::size_t, std::array<std::size_t, kScoreBins>> model;  // emotion_count -> bins
  std::map<std::size_t, std::map<int, std::size_t>> annotator;       // emotion_count -> score -> n
};

inline ScoreDistribution score_distribution_breakdown(std::span<const ScoredReport> scored) {
  ScoreDistribution d;
  for (const auto& s : scored) {
    auto [it, _] = d.model.try_emplace(s.emotion_count);
    ++it->second[score_bin(s.model_score)];
    ++d.annotator[s.emotion_count][s.annotator_score];
  }
  return d;
}

inline csv::Table model_histogram_table(const ScoreDistribution& d) {
  csv::Table t{{"emotion_count", "bin_low", "bin_high", "count"}, {}};
  for (const auto& [k, bins] : d.model) {
    for (std::size_t b = 0; b < kScoreBins; ++b) {
      t.rows.push_back({std::to_string(k), csv::fixed(bin_lower_edge(b), 2),
                        csv::fixed(bin_lower_edge(b + 1), 2), std::to_string(bins[b])});
    }
  }
  return t;
}

inline csv::Table annotator_histogram_table(const ScoreDistribution& d) {
  csv::Table t{{"emotion_count", "annotator_score", "count"}, {}};
  for (const auto& [k, counts] : d.annotator) {
    for (const auto& [score, n] : counts) {
      t.rows.push_back({std::to_string(k), std::to_string(score), std::to_string(n)});
    }
  }
  return t;
}

}  // namespace dreamaffect
