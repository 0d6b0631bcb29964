#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "dreamaffect/emotion.hpp"
#include "dreamaffect/multilabel.hpp"
#include "dreamaffect/sentiment.hpp"

namespace dreamaffect {

/// Resolved settings for one CLI invocation: config-file values with flag
/// overrides applied. Serialized whole into every run directory.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  EmotionMode mode = EmotionMode::General;
  std::size_t k = 5;
  bool stratified = false;
  double threshold = 0.5;
  std::string backend = "lexicon";
  std::size_t inference_batch_size = 32;
  nlohmann::json encoder = {{"type", "bag-of-embeddings"}};
  TrainConfig train;
  PolarityTable polarity;
  std::optional<std::string> series;
  std::optional<std::string> kfold_reference;  // summary.csv of a prior K-fold run
  std::optional<std::string> embedding_cache;
  nlohmann::ordered_json paths = nlohmann::ordered_json::object();

  /// Applies the keys present in `j`; everything else keeps its current value.
  void merge(const nlohmann::json& j) {
    seed = j.value("seed", seed);
    if (j.contains("mode")) mode = parse_mode(j["mode"].get<std::string>());
    k = j.value("k", k);
    stratified = j.value("stratified", stratified);
    threshold = j.value("threshold", threshold);
    backend = j.value("backend", backend);
    inference_batch_size = j.value("inference_batch_size", inference_batch_size);
    if (j.contains("encoder")) encoder = j["encoder"];
    if (j.contains("train")) {
      auto merged = train.to_json();
      for (const auto& [key, v] : j["train"].items()) merged[key] = v;
      train = TrainConfig::from_json(merged);
    }
    if (j.contains("polarity_table")) polarity = PolarityTable::from_json(j["polarity_table"]);
    if (j.contains("series") && j["series"].is_string()) series = j["series"].get<std::string>();
    if (j.contains("kfold_reference") && j["kfold_reference"].is_string()) {
      kfold_reference = j["kfold_reference"].get<std::string>();
    }
    if (j.contains("embedding_cache") && j["embedding_cache"].is_string()) {
      embedding_cache = j["embedding_cache"].get<std::string>();
    }
  }

  void load(const std::filesystem::path& path) {
    try {
      merge(read_json(path));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("config " + path.string() + ": " + e.what());
    }
  }

  /// The training config actually used: shared seed and threshold folded in.
  [[nodiscard]] TrainConfig effective_train() const {
    auto t = train;
    t.seed = seed;
    t.threshold = threshold;
    t.validate();
    return t;
  }

  [[nodiscard]] nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["seed"] = seed;
    j["mode"] = to_string(mode);
    j["k"] = k;
    j["stratified"] = stratified;
    j["threshold"] = threshold;
    j["backend"] = backend;
    j["inference_batch_size"] = inference_batch_size;
    j["encoder"] = make_encoder(encoder)->spec();
    j["train"] = effective_train().to_json();
    j["polarity_table"] = polarity.to_json();
    j["series"] = series ? nlohmann::ordered_json(*series) : nlohmann::ordered_json();
    j["kfold_reference"] = kfold_reference ? nlohmann::ordered_json(*kfold_reference) : nlohmann::ordered_json();
    j["embedding_cache"] = embedding_cache ? nlohmann::ordered_json(*embedding_cache) : nlohmann::ordered_json();
    j["paths"] = paths;
    j["std"] = "population";
    j["kfold_scope"] = "reports with at least one emotion (any character); dreamer mode keeps "
                       "reports without dreamer emotions as all-zero label vectors";
    j["samples_avg_empty_convention"] = "empty gold and empty prediction score 1; one side empty scores 0";
    return j;
  }
};

}  // namespace dreamaffect
