#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "dreamaffect/multilabel.hpp"
#include "dreamaffect/synthetic.hpp"
#include "oracles.hpp"

using namespace dreamaffect;
namespace fs = std::filesystem;

namespace {

LabelVector emo(std::string_view s) {
  LabelVector v;
  for (std::size_t c = 0; c < s.size(); ++c) v[c] = s[c] == '1';
  return v;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("dreamaffect-test-" + name);
  fs::remove_all(p);
  return p;
}

// Ten reports, one class each, each with its own unmistakable word.
std::vector<TrainingExample> separable_examples() {
  const char* words[] = {"furious", "terrified", "weeping", "puzzled", "joyful"};
  std::vector<TrainingExample> ex;
  for (std::size_t i = 0; i < 10; ++i) {
    const std::size_t c = i % kEmotionCount;
    DreamReport r{"r" + std::to_string(i), "s", std::string("in the house ") + words[c] + " again",
                  {{"D", static_cast<EmotionClass>(c)}}};
    ex.push_back({r, extract_label_vector(r, EmotionMode::General)});
  }
  return ex;
}

TrainConfig probe_config() {
  TrainConfig c;
  c.mode = TrainMode::FrozenEncoder;
  c.learning_rate = 0.3;
  c.epochs = 10;
  c.batch_size = 2;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(Head, ZeroHeadGivesHalf) {
  auto h = ClassifierHead::zeros(4);
  std::vector<double> x{0.3, -1.0, 2.0, 0.5};
  for (double p : head_forward(h, x)) EXPECT_EQ(p, 0.5);
}

TEST(Head, SaturatedBias) {
  auto h = ClassifierHead::zeros(3);
  h.bias[0] = 20.0;
  std::vector<double> x{1, 2, 3};
  auto p = head_forward(h, x);
  EXPECT_NEAR(p[0], 1.0, 1e-8);
  for (std::size_t c = 1; c < kEmotionCount; ++c) EXPECT_EQ(p[c], 0.5);
}

TEST(Head, MatchesScalarOracle) {
  auto h = ClassifierHead::initialized(4, 9);
  std::mt19937 gen(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& b : h.bias) b = u(gen);
  std::vector<double> x{0.2, -0.7, 1.1, 0.05};
  auto p = head_forward(h, x);
  auto want = oracle::head_probs(h.weights, std::vector<double>(h.bias.begin(), h.bias.end()), x);
  for (std::size_t c = 0; c < kEmotionCount; ++c) EXPECT_NEAR(p[c], want[c], 1e-12);
}

TEST(Head, DimensionMismatchThrows) {
  auto h = ClassifierHead::zeros(3);
  std::vector<double> x{1, 2};
  EXPECT_THROW(head_forward(h, x), ValidationError);
}

TEST(Head, DropoutOnlyInTraining) {
  auto h = ClassifierHead::initialized(16, 2, 0.5);
  std::vector<double> x(16, 1.0);
  auto eval1 = head_forward(h, x, false, 1);
  auto eval2 = head_forward(h, x, false, 2);
  EXPECT_EQ(eval1, eval2);
  auto tr1 = head_forward(h, x, true, 1);
  auto tr1b = head_forward(h, x, true, 1);
  auto tr2 = head_forward(h, x, true, 2);
  EXPECT_EQ(tr1, tr1b);
  EXPECT_NE(tr1, tr2);
  auto mask = dropout_mask(1000, 0.3, 5);
  for (double m : mask) EXPECT_TRUE(m == 0.0 || std::abs(m - 1.0 / 0.7) < 1e-15);
}

TEST(Loss, KnownValues) {
  Probabilities half{0.5, 0.5, 0.5, 0.5, 0.5};
  EXPECT_NEAR(bce_loss(half, emo("10110")), std::log(2.0), 1e-15);
  Probabilities exact{1, 0, 1, 0, 0};
  EXPECT_LE(bce_loss(exact, emo("10100")), -std::log(1 - kProbabilityEpsilon) * 5);
  Probabilities p{0.9, 0.1, 0.5, 0.5, 0.5};
  const double want = -(std::log(0.9) + std::log(0.9) + 3 * std::log(0.5)) / 5;
  EXPECT_NEAR(bce_loss(p, emo("10000")), want, 1e-15);
  EXPECT_NEAR(bce_loss(p, emo("10000")), 0.4580, 1e-4);
}

TEST(Gradients, ZeroHeadAllPositive) {
  auto h = ClassifierHead::zeros(3);
  std::vector<double> x{1, 2, 3};
  auto g = head_gradients(h, x, emo("11111"));
  for (double b : g.bias) EXPECT_DOUBLE_EQ(b, -0.1);
  EXPECT_DOUBLE_EQ(g.weights[2], -0.3);
}

TEST(Gradients, StationaryWhenProbabilitiesMatchLabels) {
  // Labels are 0/1, so p == y needs saturated logits.
  auto h = ClassifierHead::zeros(2);
  std::vector<double> x{0.0, 0.0};
  h.bias = {40, -40, 40, -40, -40};
  auto g = head_gradients(h, x, emo("10100"));
  for (double b : g.bias) EXPECT_NEAR(b, 0.0, 1e-15);
}

TEST(Gradients, FiniteDifferences) {
  std::mt19937 gen(17);
  std::uniform_real_distribution<double> u(-1, 1);
  const double hstep = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + gen() % 8;
    auto head = ClassifierHead::initialized(d, gen());
    for (auto& b : head.bias) b = u(gen);
    std::vector<double> x(d);
    for (auto& v : x) v = u(gen);
    LabelVector y(gen() % 32);
    auto g = head_gradients(head, x, y);
    auto loss = [&](const ClassifierHead& hh) { return bce_loss(head_forward(hh, x), y); };
    for (std::size_t i = 0; i < head.weights.size(); ++i) {
      auto hp = head, hm = head;
      hp.weights[i] += hstep;
      hm.weights[i] -= hstep;
      const double fd = (loss(hp) - loss(hm)) / (2 * hstep);
      EXPECT_NEAR(g.weights[i], fd, 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamOptimizer opt(2);
  std::vector<double> params{1.0, -1.0};
  std::vector<double> grads{0.5, -2.0};
  opt.step(params, grads, 0.01);
  EXPECT_NEAR(params[0], 0.99, 1e-9);
  EXPECT_NEAR(params[1], -0.99, 1e-9);
}

TEST(Config, DefaultsAndValidation) {
  TrainConfig c;
  EXPECT_EQ(c.epochs, 10u);
  EXPECT_EQ(c.learning_rate, 1e-5);
  EXPECT_EQ(c.batch_size, 8u);
  EXPECT_EQ(c.max_input_tokens, 512u);
  EXPECT_EQ(c.mode, TrainMode::EndToEnd);
  EXPECT_EQ(c.dropout_rate, 0.3);
  EXPECT_FALSE(c.early_stop.enabled);
  auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"batch_size", 0}}), ValidationError);
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"threshold", 1.0}}), ValidationError);
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"mode", "sideways"}}), ValidationError);
}

TEST(Threshold, GreaterOrEqual) {
  Probabilities p{0.9, 0.2, 0.2, 0.2, 0.7};
  EXPECT_EQ(threshold_labels(p, 0.5), emo("10001"));
  EXPECT_EQ(threshold_labels(p, 0.95), emo("00000"));
  EXPECT_EQ(threshold_labels(p, 0.7), emo("10001"));
  EXPECT_THROW(threshold_labels(p, 0.0), ValidationError);
}

TEST(Train, OverfitsSeparableSet) {
  const auto ex = separable_examples();
  HashingEncoder enc(64);
  auto model = train(ex, probe_config(), enc);
  std::size_t exact = 0;
  for (const auto& e : ex) exact += predict(model, e.report).labels == e.labels;
  EXPECT_GE(static_cast<double>(exact) / ex.size(), 0.9);
  EXPECT_EQ(model.trace.size(), 10u);
  EXPECT_LT(model.trace.back().train_loss, model.trace.front().train_loss);
}

TEST(Train, ZeroEpochsReturnsInitialHead) {
  auto cfg = probe_config();
  cfg.epochs = 0;
  HashingEncoder enc(32);
  auto model = train(separable_examples(), cfg, enc);
  EXPECT_TRUE(model.trace.empty());
  auto init = ClassifierHead::initialized(32, derive_seed(cfg.seed, 0), cfg.dropout_rate);
  EXPECT_EQ(model.head.weights, init.weights);
  EXPECT_EQ(model.head.bias, init.bias);
}

TEST(Train, Deterministic) {
  HashingEncoder enc(32);
  auto a = train(separable_examples(), probe_config(), enc);
  auto b = train(separable_examples(), probe_config(), enc);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].train_loss, b.trace[i].train_loss);
  EXPECT_EQ(a.head.weights, b.head.weights);
}

TEST(Train, EndToEndNeedsTrainableEncoder) {
  auto cfg = probe_config();
  cfg.mode = TrainMode::EndToEnd;
  HashingEncoder frozen(16);
  EXPECT_THROW(train(separable_examples(), cfg, frozen), ValidationError);

  BagOfEmbeddingsEncoder boe(256, 8);
  cfg.epochs = 3;
  auto model = train(separable_examples(), cfg, boe);
  // The argument encoder is untouched; the model's copy moved.
  auto before = boe.encode("joyful");
  auto after = model.encoder->encode("joyful");
  EXPECT_NE(before, after);
  EXPECT_EQ(before, BagOfEmbeddingsEncoder(256, 8).encode("joyful"));
}

TEST(Train, EarlyStopRestoresBestEpoch) {
  auto cfg = probe_config();
  cfg.epochs = 40;
  cfg.learning_rate = 0.5;
  cfg.early_stop.enabled = true;
  cfg.early_stop.patience = 2;
  cfg.early_stop.dev_fraction = 0.3;
  HashingEncoder enc(32);
  auto model = train(separable_examples(), cfg, enc);
  ASSERT_TRUE(model.best_epoch.has_value());
  double best = 1e9;
  std::size_t arg = 0;
  for (const auto& s : model.trace) {
    ASSERT_TRUE(s.dev_loss.has_value());
    if (*s.dev_loss < best) {
      best = *s.dev_loss;
      arg = s.epoch;
    }
  }
  EXPECT_EQ(*model.best_epoch, arg);
}

TEST(Train, CacheIsFilledAndReused) {
  EmbeddingCache cache;
  HashingEncoder enc(32);
  auto a = train(separable_examples(), probe_config(), enc, &cache);
  EXPECT_EQ(cache.size(), 10u);
  auto b = train(separable_examples(), probe_config(), enc, &cache);
  EXPECT_EQ(a.head.weights, b.head.weights);
}

TEST(Artifact, SaveLoadRoundTrip) {
  for (const bool trainable : {false, true}) {
    auto cfg = probe_config();
    std::unique_ptr<EncoderBackend> enc;
    if (trainable) {
      cfg.mode = TrainMode::EndToEnd;
      enc = std::make_unique<BagOfEmbeddingsEncoder>(128, 8);
    } else {
      enc = std::make_unique<HashingEncoder>(32);
    }
    auto model = train(separable_examples(), cfg, *enc);
    const auto dir = scratch(trainable ? "model-e2e" : "model-frozen");
    save_model(model, dir);
    EXPECT_TRUE(fs::exists(dir / "head.json"));
    EXPECT_TRUE(fs::exists(dir / "metadata.json"));
    EXPECT_EQ(fs::exists(dir / "encoder.bin"), trainable);
    auto back = load_model(dir);
    EXPECT_EQ(back.corpus_fingerprint, model.corpus_fingerprint);
    for (const auto& e : separable_examples()) {
      EXPECT_EQ(predict(back, e.report).probs, predict(model, e.report).probs);
    }
    fs::remove_all(dir);
  }
}

TEST(Artifact, RejectsForeignDirectory) {
  const auto dir = scratch("not-a-model");
  fs::create_directories(dir);
  EXPECT_THROW(load_model(dir), DataError);
  write_json(dir / "metadata.json", {{"format", "other"}});
  EXPECT_THROW(load_model(dir), DataError);
  fs::remove_all(dir);
}

TEST(Encoder, HashingIsNormalizedAndDeterministic) {
  HashingEncoder enc(64);
  auto v = enc.encode("I felt happy happy today");
  double norm = 0;
  for (double x : v) norm += x * x;
  EXPECT_NEAR(norm, 1.0, 1e-12);
  EXPECT_EQ(v, enc.encode("I felt happy happy today"));
  EXPECT_EQ(enc.encode("I felt happy today"), v);  // presence, not counts
  auto zero = enc.encode("!!!");
  for (double x : zero) EXPECT_EQ(x, 0.0);
}

TEST(Encoder, BagOfEmbeddingsBackwardMatchesFiniteDifferences) {
  BagOfEmbeddingsEncoder enc(16, 4);
  const std::string text = "alpha beta alpha gamma";
  std::vector<double> g_emb{0.3, -0.2, 0.1, 0.5};
  std::vector<double> grad(enc.parameters().size(), 0.0);
  enc.backward(text, g_emb, grad);
  auto objective = [&](BagOfEmbeddingsEncoder& e) {
    auto v = e.encode(text);
    double s = 0;
    for (std::size_t j = 0; j < v.size(); ++j) s += v[j] * g_emb[j];
    return s;
  };
  for (std::size_t i = 0; i < grad.size(); ++i) {
    BagOfEmbeddingsEncoder p = enc, m = enc;
    p.parameters()[i] += 1e-6;
    m.parameters()[i] -= 1e-6;
    EXPECT_NEAR(grad[i], (objective(p) - objective(m)) / 2e-6, 1e-8);
  }
}

TEST(Encoder, CacheFileRoundTrip) {
  EmbeddingCache cache;
  cache.insert("enc", "r1", {1.0, 2.0});
  cache.insert("enc", "r2", {3.0});
  const auto path = scratch("cache.bin");
  cache.save(path);
  EmbeddingCache back;
  back.load(path);
  EXPECT_EQ(back.size(), 2u);
  EXPECT_EQ(*back.find("enc", "r1"), (Embedding{1.0, 2.0}));
  EXPECT_FALSE(back.find("other", "r1").has_value());
  fs::remove(path);
}
