#include <gtest/gtest.h>

#include <map>
#include <random>

#include "dreamaffect/sentiment.hpp"
#include "oracles.hpp"

using namespace dreamaffect;
using E = EmotionClass;

namespace {

// Looks predictions up by exact text; unknown texts get (0.5, 0.5).
class TableBackend final : public SentimentBackend {
 public:
  std::map<std::string, SentimentPrediction> table;
  std::size_t limit = 512;
  std::size_t calls = 0;
  std::vector<std::string> seen;

  std::string name() const override { return "table"; }
  std::size_t max_input_tokens() const override { return limit; }
  std::vector<SentimentPrediction> predict_batch(std::span<const std::string> texts) override {
    ++calls;
    std::vector<SentimentPrediction> out;
    for (const auto& t : texts) {
      seen.push_back(t);
      auto it = table.find(t);
      out.push_back(it == table.end() ? SentimentPrediction{} : it->second);
    }
    return out;
  }
};

class BrokenBackend final : public SentimentBackend {
 public:
  std::string name() const override { return "broken"; }
  std::size_t max_input_tokens() const override { return 512; }
  std::vector<SentimentPrediction> predict_batch(std::span<const std::string>) override {
    throw std::runtime_error("boom");
  }
};

DreamReport rep(std::string id, std::string series, std::string text, std::vector<EmotionMention> m) {
  return {std::move(id), std::move(series), std::move(text), std::move(m)};
}

EmotionMention D(E e) { return {"D", e}; }
EmotionMention M(E e) { return {"2ISA", e}; }

}  // namespace

TEST(AnnotatorScore, TableAndSums) {
  EXPECT_EQ(annotator_score(rep("a", "s", "t", {D(E::HA)}), EmotionMode::General), 1);
  EXPECT_EQ(annotator_score(rep("a", "s", "t", {D(E::AN), D(E::HA)}), EmotionMode::General), 0);
  EXPECT_EQ(annotator_score(rep("a", "s", "t", {D(E::CO), D(E::CO), D(E::SD)}), EmotionMode::General),
            -1);
  EXPECT_EQ(annotator_score(rep("a", "s", "t", {D(E::AP), M(E::SD)}), EmotionMode::Dreamer), -1);
  EXPECT_EQ(annotator_score(rep("a", "s", "t", {}), EmotionMode::General), 0);
}

TEST(AnnotatorScore, SingletonTable) {
  const std::map<E, int> want{{E::AN, -1}, {E::AP, -1}, {E::SD, -1}, {E::CO, 0}, {E::HA, 1}};
  for (auto [e, v] : want) EXPECT_EQ(annotator_score(rep("a", "s", "t", {D(e)}), EmotionMode::General), v);
}

TEST(AnnotatorScore, CustomTable) {
  const auto t = PolarityTable::from_json(nlohmann::json{{"CO", -1}, {"HA", 2}});
  EXPECT_EQ(annotator_score(rep("a", "s", "t", {D(E::CO), D(E::HA)}), EmotionMode::General, t), 1);
  EXPECT_EQ(t, (PolarityTable({-1, -1, -1, -1, 2})));
  EXPECT_THROW(PolarityTable::from_json(nlohmann::json{{"XX", 1}}), ValidationError);
  EXPECT_THROW(PolarityTable::from_json(nlohmann::json{{"HA", 0.5}}), ValidationError);
}

TEST(ModelScore, ExactValues) {
  EXPECT_EQ(model_score({0.4, 0.6}), -0.2);
  EXPECT_EQ(model_score({0.5, 0.5}), 0.0);
  EXPECT_EQ(model_score({1.0, 0.0}), 1.0);
  EXPECT_EQ(predicted_polarity({0.5, 0.5}), Polarity::Negative);
  EXPECT_EQ(predicted_polarity({0.9, 0.1}), Polarity::Positive);
  EXPECT_EQ(predicted_polarity({0.2, 0.8}), Polarity::Negative);
}

TEST(Collapse, HappinessIsTheOnlyPositive) {
  static_assert(collapse_polarity(E::HA) == Polarity::Positive);
  EXPECT_EQ(collapse_polarity(E::CO), Polarity::Negative);
  EXPECT_EQ(collapse_polarity(E::AN), Polarity::Negative);
  EXPECT_EQ(collapse_polarity(E::AP), Polarity::Negative);
  EXPECT_EQ(collapse_polarity(E::SD), Polarity::Negative);
}

TEST(PredictAll, BatchesInOrderAndTruncates) {
  TableBackend b;
  b.limit = 2;
  b.table["a b"] = {0.9, 0.1};
  std::vector<std::string> texts{"a b c", "x", "y", "z", "a b"};
  auto out = predict_all(b, texts, 2);
  ASSERT_EQ(out.size(), 5u);
  EXPECT_EQ(b.calls, 3u);
  EXPECT_EQ(b.seen[0], "a b");
  EXPECT_DOUBLE_EQ(out[0].p_positive, 0.9);
  EXPECT_DOUBLE_EQ(out[4].p_positive, 0.9);
}

TEST(PredictAll, FailureNamesBackendAndBatch) {
  BrokenBackend b;
  std::vector<std::string> texts{"x"};
  try {
    predict_all(b, texts);
    FAIL();
  } catch (const BackendError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("broken"), std::string::npos);
    EXPECT_NE(what.find("batch 0"), std::string::npos);
  }
}

TEST(PredictAll, RejectsInvalidDistributions) {
  TableBackend b;
  b.table["x"] = {0.7, 0.7};
  std::vector<std::string> texts{"x"};
  EXPECT_THROW(predict_all(b, texts), BackendError);
}

TEST(Lexicon, LeansTheRightWay) {
  LexiconBackend lex;
  EXPECT_GT(model_score(lex.score("I was happy and laughed with joy")), 0.0);
  EXPECT_LT(model_score(lex.score("I was afraid and sad")), 0.0);
  EXPECT_EQ(model_score(lex.score("the table")), 0.0);
}

TEST(CommandBackend, ParsesLineFormats) {
  auto a = CommandBackend::parse_line(R"({"positive":0.25,"negative":0.75})");
  EXPECT_DOUBLE_EQ(a.p_positive, 0.25);
  auto b = CommandBackend::parse_line("[0.6, 0.4]");
  EXPECT_DOUBLE_EQ(b.p_negative, 0.4);
  auto c = CommandBackend::parse_line(R"({"label":"NEGATIVE","score":0.8})");
  EXPECT_NEAR(c.p_positive, 0.2, 1e-15);
  EXPECT_THROW(CommandBackend::parse_line("{}"), BackendError);
  EXPECT_THROW(make_sentiment_backend("nope"), ValidationError);
}

TEST(CommandBackend, RunsShellCommand) {
  auto b = make_sentiment_backend("command:sed 's/.*/[0.75, 0.25]/'");
  std::vector<std::string> texts{"one", "two"};
  auto out = predict_all(*b, texts);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(model_score(out[1]), 0.5);
}

TEST(Correlation, SignConsistentStubIsPerfect) {
  TableBackend b;
  Corpus c;
  const std::vector<std::pair<std::vector<EmotionMention>, double>> spec{
      {{D(E::HA), D(E::HA)}, 0.95}, {{D(E::HA)}, 0.8}, {{D(E::CO)}, 0.5}, {{D(E::SD)}, 0.3},
      {{D(E::AN), D(E::AP)}, 0.1}};
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const std::string text = "text " + std::to_string(i);
    c.reports.push_back(rep("r" + std::to_string(i), "s", text, spec[i].first));
    b.table[text] = {spec[i].second, 1.0 - spec[i].second};
  }
  auto r = run_score_correlation(c, b, EmotionMode::General);
  EXPECT_DOUBLE_EQ(r.overall.rho, 1.0);
  ASSERT_EQ(r.per_series.size(), 1u);
  ASSERT_TRUE(r.per_series[0].result.has_value());
}

TEST(Correlation, ConstantModelScoreIsUndefined) {
  TableBackend b;
  Corpus c;
  c.reports = {rep("a", "s", "t1", {D(E::HA)}), rep("b", "s", "t2", {D(E::SD)}),
               rep("c", "s", "t3", {D(E::AN)})};
  EXPECT_THROW(run_score_correlation(c, b, EmotionMode::General), UndefinedCorrelation);
}

TEST(Correlation, MatchesMetricsSpearmanOnHandSetScores) {
  TableBackend b;
  Corpus c;
  const std::vector<double> p{0.9, 0.2, 0.4, 0.6, 0.55, 0.1, 0.75, 0.3, 0.5, 0.85};
  const std::vector<std::vector<EmotionMention>> m{
      {D(E::HA)},          {D(E::SD), D(E::AN)}, {D(E::CO)},           {D(E::HA), D(E::SD)},
      {D(E::AP)},          {D(E::AN)},           {D(E::HA), D(E::CO)}, {D(E::SD)},
      {D(E::CO), M(E::HA)}, {D(E::HA), D(E::HA)}};
  std::vector<double> annot, model;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto text = "t" + std::to_string(i);
    c.reports.push_back(rep("r" + std::to_string(i), i < 5 ? "s1" : "s2", text, m[i]));
    b.table[text] = {p[i], 1.0 - p[i]};
    annot.push_back(annotator_score(c.reports.back(), EmotionMode::General));
    model.push_back(p[i] - (1.0 - p[i]));
  }
  auto r = run_score_correlation(c, b, EmotionMode::General);
  EXPECT_NEAR(r.overall.rho, spearman(annot, model).rho, 1e-12);
  EXPECT_NEAR(r.overall.rho, oracle::spearman(annot, model), 1e-12);
  EXPECT_EQ(r.per_series.size(), 2u);
}

TEST(Correlation, SmallSeriesMarkedUnavailable) {
  TableBackend b;
  b.table = {{"t1", {0.9, 0.1}}, {"t2", {0.1, 0.9}}, {"t3", {0.6, 0.4}}, {"t4", {0.2, 0.8}}};
  Corpus c;
  c.reports = {rep("a", "big", "t1", {D(E::HA)}), rep("b", "big", "t2", {D(E::SD)}),
               rep("c", "big", "t3", {D(E::CO)}), rep("d", "tiny", "t4", {D(E::AN)}),
               rep("e", "big", "none", {})};
  auto r = run_score_correlation(c, b, EmotionMode::General);
  EXPECT_EQ(r.scored.size(), 4u);
  ASSERT_EQ(r.per_series.size(), 2u);
  EXPECT_FALSE(r.per_series[1].result.has_value());
  auto t = correlation_table(r);
  EXPECT_EQ(t.rows.back()[1], "NA");
}

TEST(SingleEmotion, ArgmaxCountsAndContract) {
  TableBackend b;
  b.table = {{"happy", {0.9, 0.1}}, {"scared", {0.2, 0.8}}};
  Corpus c;
  c.reports = {rep("a", "s", "happy", {D(E::HA)}), rep("b", "s", "scared", {D(E::AP)})};
  auto r = run_single_emotion_eval(c, b, EmotionMode::General);
  EXPECT_EQ(r.metrics.at("POSITIVE").tp, 1u);
  EXPECT_EQ(r.metrics.at("NEGATIVE").tp, 1u);

  Corpus bad;
  bad.reports = {rep("x", "s", "t", {D(E::HA), D(E::HA)})};
  EXPECT_THROW(run_single_emotion_eval(bad, b, EmotionMode::General), ContractViolation);
}

TEST(SingleEmotion, EightReportsMatchBinaryOracle) {
  TableBackend b;
  Corpus c;
  const std::vector<std::pair<E, double>> spec{{E::HA, 0.9}, {E::HA, 0.3}, {E::AN, 0.2}, {E::AP, 0.7},
                                               {E::SD, 0.1}, {E::CO, 0.5}, {E::HA, 0.8}, {E::CO, 0.6}};
  std::vector<std::vector<int>> og, op;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const auto text = "t" + std::to_string(i);
    c.reports.push_back(rep("r" + std::to_string(i), i % 2 ? "odd" : "even", text, {D(spec[i].first)}));
    b.table[text] = {spec[i].second, 1.0 - spec[i].second};
    const int gold_pos = spec[i].first == E::HA;
    const int pred_pos = spec[i].second > 0.5;
    og.push_back({1 - gold_pos, gold_pos});
    op.push_back({1 - pred_pos, pred_pos});
  }
  auto r = run_single_emotion_eval(c, b, EmotionMode::General);
  auto counts = oracle::confusion(og, op, 2);
  for (std::size_t k = 0; k < 2; ++k) {
    auto want = oracle::per_class(counts[k]);
    EXPECT_DOUBLE_EQ(r.metrics.per_class[k].precision, want.p);
    EXPECT_DOUBLE_EQ(r.metrics.per_class[k].recall, want.r);
    EXPECT_DOUBLE_EQ(r.metrics.per_class[k].f1, want.f);
  }
  // 2 series x 5 emotions, empty cells included with n = 0.
  EXPECT_EQ(r.per_series_per_emotion.size(), 10u);
}

TEST(Distribution, SingleReportAndEmpty) {
  std::vector<ScoredReport> one{{"a", "s", -1, -0.2, 1, Polarity::Negative}};
  auto d = score_distribution_breakdown(one);
  ASSERT_EQ(d.model.count(1), 1u);
  EXPECT_EQ(d.model.at(1)[score_bin(-0.2)], 1u);
  EXPECT_LE(bin_lower_edge(score_bin(-0.2)), -0.2);
  EXPECT_GT(bin_lower_edge(score_bin(-0.2) + 1), -0.2);
  EXPECT_EQ(score_bin(1.0), kScoreBins - 1);
  EXPECT_EQ(score_bin(-1.0), 0u);

  auto empty = score_distribution_breakdown(std::vector<ScoredReport>{});
  EXPECT_TRUE(model_histogram_table(empty).rows.empty());
  EXPECT_TRUE(annotator_histogram_table(empty).rows.empty());
}

TEST(Distribution, BinTotalsEqualInputSize) {
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<ScoredReport> scored;
  for (int i = 0; i < 30; ++i) {
    scored.push_back({"r" + std::to_string(i), "s", static_cast<int>(gen() % 5) - 2, u(gen),
                      1 + gen() % 3, Polarity::Negative});
  }
  auto d = score_distribution_breakdown(scored);
  std::size_t model_total = 0, annot_total = 0;
  for (const auto& [_, bins] : d.model)
    for (auto n : bins) model_total += n;
  for (const auto& [_, counts] : d.annotator)
    for (const auto& [__, n] : counts) annot_total += n;
  EXPECT_EQ(model_total, 30u);
  EXPECT_EQ(annot_total, 30u);
}
