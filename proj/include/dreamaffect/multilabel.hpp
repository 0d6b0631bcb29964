#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "dreamaffect/corpus.hpp"
#include "dreamaffect/emotion.hpp"
#include "dreamaffect/encoder.hpp"
#include "dreamaffect/errors.hpp"
#include "dreamaffect/rng.hpp"
#include "dreamaffect/text.hpp"

namespace dreamaffect {

using Probabilities = std::array<double, kEmotionCount>;

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

/// Dropout followed by an affine map from the embedding to one logit per class.
struct ClassifierHead {
  std::size_t dim = 0;
  std::vector<double> weights;  // kEmotionCount x dim, row-major
  std::array<double, kEmotionCount> bias{};
  double dropout_rate = 0.3;

  static ClassifierHead zeros(std::size_t d, double dropout_rate = 0.3) {
    return {d, std::vector<double>(kEmotionCount * d, 0.0), {}, dropout_rate};
  }

  /// Weights uniform in +-1/sqrt(d), bias zero.
  static ClassifierHead initialized(std::size_t d, std::uint64_t seed, double dropout_rate = 0.3) {
    auto h = zeros(d, dropout_rate);
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& w : h.weights) w = rng.uniform(-scale, scale);
    return h;
  }

  [[nodiscard]] std::span<const double> row(std::size_t c) const {
    return std::span<const double>(weights).subspan(c * dim, dim);
  }
};

/// Inverted-dropout multipliers: 0 for dropped units, 1/(1-rate) for kept ones.
inline std::vector<double> dropout_mask(std::size_t d, double rate, std::uint64_t seed) {
  std::vector<double> mask(d, 1.0);
  if (rate <= 0.0) return mask;
  Rng rng(seed);
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask) m = rng.bernoulli(rate) ? 0.0 : keep;
  return mask;
}

namespace detail {

inline void check_dim(const ClassifierHead& head, std::size_t d) {
  if (d != head.dim) {
    throw ValidationError("embedding dimension " + std::to_string(d) + " does not match head dimension " +
                          std::to_string(head.dim));
  }
}

inline Probabilities forward_masked(const ClassifierHead& head, std::span<const double> x,
                                    const std::vector<double>* mask) {
  Probabilities p{};
  for (std::size_t c = 0; c < kEmotionCount; ++c) {
    const auto w = head.row(c);
    double z = head.bias[c];
    for (std::size_t j = 0; j < head.dim; ++j) z += w[j] * (mask ? x[j] * (*mask)[j] : x[j]);
    p[c] = sigmoid(z);
  }
  return p;
}

}  // namespace detail

/// Independent per-class sigmoid probabilities. Dropout is applied only when
/// `training`, with its mask drawn from `rng_seed`.
inline Probabilities head_forward(const ClassifierHead& head, std::span<const double> x,
                                  bool training = false, std::uint64_t rng_seed = 0) {
  detail::check_dim(head, x.size());
  if (!training || head.dropout_rate <= 0.0) return detail::forward_masked(head, x, nullptr);
  const auto mask = dropout_mask(head.dim, head.dropout_rate, rng_seed);
  return detail::forward_masked(head, x, &mask);
}

inline constexpr double kProbabilityEpsilon = 1e-7;

/// Mean binary cross-entropy over the five classes, probabilities clamped to
/// [eps, 1 - eps].
inline double bce_loss(const Probabilities& probs, const LabelVector& labels) {
  double sum = 0.0;
  for (std::size_t c = 0; c < kEmotionCount; ++c) {
    const double p = std::clamp(probs[c], kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
    sum -= labels[c] ? std::log(p) : std::log(1.0 - p);
  }
  return sum / static_cast<double>(kEmotionCount);
}

struct HeadGradients {
  std::vector<double> weights;
  std::array<double, kEmotionCount> bias{};
};

/// Analytic gradient of bce_loss (eval-mode forward, no clamping in effect):
/// dL/db_c = (p_c - y_c) / 5 and dL/dw_c = dL/db_c * x.
inline HeadGradients head_gradients(const ClassifierHead& head, std::span<const double> x,
                                    const LabelVector& labels) {
  detail::check_dim(head, x.size());
  const auto p = detail::forward_masked(head, x, nullptr);
  HeadGradients g{std::vector<double>(head.weights.size(), 0.0), {}};
  for (std::size_t c = 0; c < kEmotionCount; ++c) {
    const double delta = (p[c] - (labels[c] ? 1.0 : 0.0)) / static_cast<double>(kEmotionCount);
    g.bias[c] = delta;
    for (std::size_t j = 0; j < head.dim; ++j) g.weights[c * head.dim + j] = delta * x[j];
  }
  return g;
}

// ---------------------------------------------------------------------------
// Optimizer

/// Adaptive-moment estimation with bias correction and no weight decay.
class AdamOptimizer {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  explicit AdamOptimizer(std::size_t n = 0) : m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grads, double lr) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw std::logic_error("adam: parameter size changed");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grads[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grads[i] * grads[i];
      params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEpsilon);
    }
  }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training configuration

enum class TrainMode { EndToEnd, FrozenEncoder };

inline std::string_view to_string(TrainMode m) {
  return m == TrainMode::EndToEnd ? "end_to_end" : "frozen_encoder";
}

inline TrainMode parse_train_mode(std::string_view s) {
  if (s == "end_to_end" || s == "END_TO_END") return TrainMode::EndToEnd;
  if (s == "frozen_encoder" || s == "FROZEN_ENCODER") return TrainMode::FrozenEncoder;
  throw ValidationError("unknown training mode " + std::string(s));
}

struct EarlyStop {
  bool enabled = false;
  std::size_t patience = 2;
  double dev_fraction = 0.1;
};

/// Defaults follow the published hyper-parameters: 10 epochs, learning rate
/// 1e-5, batch size 8, inputs truncated to 512 tokens, dropout 0.3.
struct TrainConfig {
  std::size_t epochs = 10;
  double learning_rate = 1e-5;
  std::size_t batch_size = 8;
  std::size_t max_input_tokens = 512;
  TrainMode mode = TrainMode::EndToEnd;
  EarlyStop early_stop;
  std::uint64_t seed = 0;
  double dropout_rate = 0.3;
  double threshold = 0.5;

  [[nodiscard]] nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["epochs"] = epochs;
    j["learning_rate"] = learning_rate;
    j["batch_size"] = batch_size;
    j["max_input_tokens"] = max_input_tokens;
    j["mode"] = to_string(mode);
    j["early_stop"] = early_stop.enabled
                          ? nlohmann::ordered_json{{"patience", early_stop.patience},
                                                   {"dev_fraction", early_stop.dev_fraction}}
                          : nlohmann::ordered_json("off");
    j["seed"] = seed;
    j["dropout_rate"] = dropout_rate;
    j["threshold"] = threshold;
    return j;
  }

  /// Missing keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_input_tokens = j.value("max_input_tokens", c.max_input_tokens);
    if (j.contains("mode")) c.mode = parse_train_mode(j["mode"].get<std::string>());
    if (auto it = j.find("early_stop"); it != j.end()) {
      if (it->is_object()) {
        c.early_stop.enabled = true;
        c.early_stop.patience = it->value("patience", c.early_stop.patience);
        c.early_stop.dev_fraction = it->value("dev_fraction", c.early_stop.dev_fraction);
      } else if (it->is_string() && it->get<std::string>() == "on") {
        c.early_stop.enabled = true;
      } else if (it->is_boolean()) {
        c.early_stop.enabled = it->get<bool>();
      }
    }
    c.seed = j.value("seed", c.seed);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.threshold = j.value("threshold", c.threshold);
    c.validate();
    return c;
  }

  void validate() const {
    if (batch_size == 0) throw ValidationError("batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ValidationError("dropout_rate must be in [0,1)");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("threshold must be in (0,1)");
    if (early_stop.enabled && !(early_stop.dev_fraction > 0.0 && early_stop.dev_fraction < 1.0)) {
      throw ValidationError("early_stop.dev_fraction must be in (0,1)");
    }
    if (max_input_tokens == 0) throw ValidationError("max_input_tokens must be positive");
  }
};

struct TrainingExample {
  DreamReport report;
  LabelVector labels;
};

inline std::vector<TrainingExample> make_examples(const Corpus& c, EmotionMode mode) {
  std::vector<TrainingExample> out;
  out.reserve(c.size());
  for (const auto& r : c.reports) out.push_back({r, extract_label_vector(r, mode)});
  return out;
}

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> dev_loss;
};

struct TrainedModel {
  std::shared_ptr<const EncoderBackend> encoder;
  ClassifierHead head;
  TrainConfig config;
  std::string corpus_fingerprint;
  std::vector<EpochStats> trace;
  std::optional<std::size_t> best_epoch;  // set when early stopping restored a checkpoint
};

namespace detail {

inline std::string examples_fingerprint(std::span<const TrainingExample> ex) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& e : ex) h = fnv1a(serialize_report(e.report) + to_bit_string(e.labels) + '\n', h);
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline double mean_loss(const ClassifierHead& head, const EncoderBackend& enc,
                        std::span<const std::string> texts, std::span<const LabelVector> labels,
                        const std::vector<Embedding>* cached, std::span<const std::size_t> idx) {
  double sum = 0.0;
  for (auto i : idx) {
    const auto x = cached ? (*cached)[i] : enc.encode(texts[i]);
    sum += bce_loss(head_forward(head, x), labels[i]);
  }
  return idx.empty() ? 0.0 : sum / static_cast<double>(idx.size());
}

}  // namespace detail

/// Minibatch Adam on mean BCE over shuffled data. FROZEN_ENCODER trains only
/// the head on (cached) embeddings; END_TO_END also updates a trainable
/// encoder copy. The encoder argument is never modified.
inline TrainedModel train(std::span<const TrainingExample> examples, const TrainConfig& config,
                          const EncoderBackend& encoder, EmbeddingCache* cache = nullptr) {
  config.validate();
  if (examples.empty()) throw DataError("train: empty training set");
  if (config.mode == TrainMode::EndToEnd && !encoder.trainable()) {
    throw ValidationError("END_TO_END training needs a trainable encoder; " + encoder.id() +
                          " is frozen (use mode frozen_encoder)");
  }

  TrainedModel model;
  model.config = config;
  model.corpus_fingerprint = detail::examples_fingerprint(examples);
  std::shared_ptr<EncoderBackend> enc = encoder.clone();
  const std::size_t d = enc->dimension();
  model.head = ClassifierHead::initialized(d, derive_seed(config.seed, 0), config.dropout_rate);

  std::vector<std::string> texts;
  std::vector<LabelVector> labels;
  std::size_t truncated = 0;
  for (const auto& e : examples) {
    auto t = truncate_tokens(e.report.text, config.max_input_tokens);
    truncated += t.truncated;
    texts.push_back(std::move(t.text));
    labels.push_back(e.labels);
  }
  if (truncated) {
    spdlog::info("train: truncated {} of {} reports to {} tokens", truncated, texts.size(),
                 config.max_input_tokens);
  }

  Rng rng(derive_seed(config.seed, 1));
  std::vector<std::size_t> train_idx(examples.size());
  std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
  std::vector<std::size_t> dev_idx;
  if (config.early_stop.enabled && examples.size() >= 2) {
    rng.shuffle(std::span<std::size_t>(train_idx));
    auto n_dev = static_cast<std::size_t>(
        std::ceil(config.early_stop.dev_fraction * static_cast<double>(examples.size())));
    n_dev = std::clamp<std::size_t>(n_dev, 1, examples.size() - 1);
    dev_idx.assign(train_idx.begin(), train_idx.begin() + static_cast<std::ptrdiff_t>(n_dev));
    train_idx.erase(train_idx.begin(), train_idx.begin() + static_cast<std::ptrdiff_t>(n_dev));
    std::sort(train_idx.begin(), train_idx.end());
  }

  std::optional<std::vector<Embedding>> cached;
  if (config.mode == TrainMode::FrozenEncoder) {
    cached.emplace();
    cached->reserve(texts.size());
    const bool cacheable = !enc->trainable() && truncated == 0;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const auto& rid = examples[i].report.id;
      if (cache && cacheable) {
        if (auto hit = cache->find(enc->id(), rid)) {
          cached->push_back(std::move(*hit));
          continue;
        }
      }
      cached->push_back(enc->encode(texts[i]));
      if (cache && cacheable) cache->insert(enc->id(), rid, cached->back());
    }
  }
  const std::vector<Embedding>* emb = cached ? &*cached : nullptr;

  const bool update_encoder = config.mode == TrainMode::EndToEnd;
  AdamOptimizer head_w(model.head.weights.size());
  AdamOptimizer head_b(kEmotionCount);
  AdamOptimizer enc_opt(update_encoder ? enc->parameters().size() : 0);
  std::vector<double> grad_w(model.head.weights.size());
  std::array<double, kEmotionCount> grad_b{};
  std::vector<double> grad_enc(update_encoder ? enc->parameters().size() : 0);
  std::vector<double> grad_x(d);

  double best_dev = std::numeric_limits<double>::infinity();
  ClassifierHead best_head = model.head;
  std::vector<double> best_enc;
  std::size_t stale = 0;
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(train_idx));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train_idx.size(); start += config.batch_size) {
      const auto end = std::min(train_idx.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      std::fill(grad_w.begin(), grad_w.end(), 0.0);
      grad_b.fill(0.0);
      std::fill(grad_enc.begin(), grad_enc.end(), 0.0);

      for (std::size_t k = start; k < end; ++k) {
        const auto i = train_idx[k];
        const Embedding x = emb ? (*emb)[i] : enc->encode(texts[i]);
        const auto mask = dropout_mask(d, config.dropout_rate, derive_seed(config.seed, 1000 + step++));
        const auto p = detail::forward_masked(model.head, x, &mask);
        epoch_loss += bce_loss(p, labels[i]);
        std::fill(grad_x.begin(), grad_x.end(), 0.0);
        for (std::size_t c = 0; c < kEmotionCount; ++c) {
          const double delta =
              scale * (p[c] - (labels[i][c] ? 1.0 : 0.0)) / static_cast<double>(kEmotionCount);
          grad_b[c] += delta;
          const auto w = model.head.row(c);
          for (std::size_t j = 0; j < d; ++j) {
            grad_w[c * d + j] += delta * x[j] * mask[j];
            grad_x[j] += delta * w[j] * mask[j];
          }
        }
        if (update_encoder) enc->backward(texts[i], grad_x, grad_enc);
      }
      head_w.step(model.head.weights, grad_w, config.learning_rate);
      head_b.step(model.head.bias, grad_b, config.learning_rate);
      if (update_encoder) enc_opt.step(enc->parameters(), grad_enc, config.learning_rate);
    }

    EpochStats stats{epoch + 1, epoch_loss / static_cast<double>(train_idx.size()), std::nullopt};
    if (!dev_idx.empty()) {
      stats.dev_loss = detail::mean_loss(model.head, *enc, texts, labels, emb, dev_idx);
      if (*stats.dev_loss < best_dev) {
        best_dev = *stats.dev_loss;
        best_head = model.head;
        if (update_encoder) best_enc.assign(enc->parameters().begin(), enc->parameters().end());
        model.best_epoch = epoch + 1;
        stale = 0;
      } else {
        ++stale;
      }
    }
    spdlog::debug("epoch {}: train loss {:.6f}", stats.epoch, stats.train_loss);
    model.trace.push_back(stats);
    if (!dev_idx.empty() && stale >= config.early_stop.patience) {
      spdlog::info("train: early stop after epoch {} (best {})", epoch + 1, *model.best_epoch);
      break;
    }
  }
  if (model.best_epoch) {
    model.head = std::move(best_head);
    if (update_encoder) std::copy(best_enc.begin(), best_enc.end(), enc->parameters().begin());
  }
  model.encoder = std::move(enc);
  return model;
}

// ---------------------------------------------------------------------------
// Prediction

struct Prediction {
  Probabilities probs{};
  LabelVector labels;
};

/// Bit c is set iff probs[c] >= threshold. The empty set is a valid result.
inline LabelVector threshold_labels(const Probabilities& probs, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("threshold must be in (0,1)");
  LabelVector v;
  for (std::size_t c = 0; c < kEmotionCount; ++c) v[c] = probs[c] >= threshold;
  return v;
}

inline Prediction predict(const TrainedModel& model, const DreamReport& report, double threshold = 0.5) {
  const auto text = truncate_tokens(report.text, model.config.max_input_tokens).text;
  const auto p = head_forward(model.head, model.encoder->encode(text));
  return {p, threshold_labels(p, threshold)};
}

inline std::vector<Prediction> predict_all(const TrainedModel& model, const Corpus& corpus,
                                           double threshold = 0.5) {
  std::vector<Prediction> out;
  out.reserve(corpus.size());
  for (const auto& r : corpus.reports) out.push_back(predict(model, r, threshold));
  return out;
}

// ---------------------------------------------------------------------------
// Model artifact: a directory holding
//   head.json      {"dimension": d, "weights": [5*d row-major], "bias": [5], "dropout_rate": r}
//   metadata.json  format tag, dimension, threshold, config snapshot, corpus
//                  fingerprint, encoder spec, optimizer, loss trace
//   encoder.bin    trainable encoders only (u64 count + little-endian doubles)

inline constexpr std::string_view kModelFormat = "dreamaffect-model/1";

inline void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline void save_model(const TrainedModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json head;
  head["dimension"] = model.head.dim;
  head["weights"] = model.head.weights;
  head["bias"] = model.head.bias;
  head["dropout_rate"] = model.head.dropout_rate;
  write_json(dir / "head.json", head);

  nlohmann::ordered_json meta;
  meta["format"] = kModelFormat;
  meta["dimension"] = model.head.dim;
  meta["threshold"] = model.config.threshold;
  meta["config"] = model.config.to_json();
  meta["corpus_fingerprint"] = model.corpus_fingerprint;
  meta["encoder"] = model.encoder->spec();
  meta["encoder_weights"] = model.encoder->trainable() ? nlohmann::ordered_json("encoder.bin") : nlohmann::ordered_json();
  meta["optimizer"] = {{"name", "adam"},
                       {"beta1", AdamOptimizer::kBeta1},
                       {"beta2", AdamOptimizer::kBeta2},
                       {"epsilon", AdamOptimizer::kEpsilon},
                       {"weight_decay", 0.0}};
  auto trace = nlohmann::ordered_json::array();
  for (const auto& e : model.trace) {
    nlohmann::ordered_json row{{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    if (e.dev_loss) row["dev_loss"] = *e.dev_loss;
    trace.push_back(row);
  }
  meta["loss_trace"] = trace;
  meta["best_epoch"] = model.best_epoch ? nlohmann::ordered_json(*model.best_epoch) : nlohmann::ordered_json();
  write_json(dir / "metadata.json", meta);

  if (model.encoder->trainable()) {
    auto copy = model.encoder->clone();
    write_parameters(dir / "encoder.bin", copy->parameters());
  }
}

inline TrainedModel load_model(const std::filesystem::path& dir) {
  const auto meta = read_json(dir / "metadata.json");
  if (meta.value("format", std::string()) != kModelFormat) {
    throw DataError(dir.string() + ": not a " + std::string(kModelFormat) + " artifact");
  }
  const auto head = read_json(dir / "head.json");
  TrainedModel m;
  m.config = TrainConfig::from_json(meta.at("config"));
  m.corpus_fingerprint = meta.value("corpus_fingerprint", std::string());
  m.head.dim = head.at("dimension").get<std::size_t>();
  m.head.weights = head.at("weights").get<std::vector<double>>();
  m.head.bias = head.at("bias").get<std::array<double, kEmotionCount>>();
  m.head.dropout_rate = head.value("dropout_rate", 0.3);
  if (m.head.weights.size() != kEmotionCount * m.head.dim) {
    throw DataError(dir.string() + ": head weights do not match dimension");
  }
  auto enc = make_encoder(meta.at("encoder"));
  if (enc->dimension() != m.head.dim) throw DataError(dir.string() + ": encoder/head dimension mismatch");
  if (enc->trainable()) read_parameters(dir / "encoder.bin", enc->parameters());
  m.encoder = std::move(enc);
  for (const auto& row : meta.value("loss_trace", nlohmann::json::array())) {
    EpochStats e{row.at("epoch").get<std::size_t>(), row.at("train_loss").get<double>(), std::nullopt};
    if (row.contains("dev_loss")) e.dev_loss = row["dev_loss"].get<double>();
    m.trace.push_back(e);
  }
  if (meta.contains("best_epoch") && !meta["best_epoch"].is_null()) {
    m.best_epoch = meta["best_epoch"].get<std::size_t>();
  }
  return m;
}

}  // namespace dreamaffect
