#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dreamaffect/errors.hpp"
#include "dreamaffect/rng.hpp"
#include "dreamaffect/text.hpp"

namespace dreamaffect {

/// Per-report vector of fixed dimension for a given encoder.
using Embedding = std::vector<double>;

/// Contract for text encoders. Evaluation-mode encoding must be deterministic
/// for fixed weights and inputs. Trainable encoders additionally expose their
/// parameters and a backward pass so they can be fine-tuned together with the
/// classifier head.
class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;

  /// Stable identifier including configuration; used as the cache key prefix.
  [[nodiscard]] virtual std::string id() const = 0;
  [[nodiscard]] virtual std::size_t dimension() const = 0;
  [[nodiscard]] virtual std::size_t max_input_tokens() const = 0;
  [[nodiscard]] virtual bool trainable() const { return false; }

  [[nodiscard]] virtual Embedding encode(std::string_view text) const = 0;

  [[nodiscard]] virtual std::vector<Embedding> encode_batch(
      std::span<const std::string> texts) const {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(encode(t));
    return out;
  }

  /// Independent copy with the same weights.
  [[nodiscard]] virtual std::unique_ptr<EncoderBackend> clone() const = 0;

  /// Configuration needed to rebuild an encoder with initial weights.
  [[nodiscard]] virtual nlohmann::ordered_json spec() const = 0;

  virtual std::span<double> parameters() { return {}; }

  /// Adds dLoss/dParameters for `text` into `grad` given dLoss/dEmbedding.
  virtual void backward(std::string_view /*text*/, std::span<const double> /*grad_embedding*/,
                        std::span<double> /*grad*/) const {
    throw std::logic_error(id() + " is not trainable");
  }
};

/// Feature-hashing set of words: each distinct token adds +-1 to a hashed coordinate,
/// then the vector is L2-normalized. Frozen and fully deterministic.
class HashingEncoder final : public EncoderBackend {
 public:
  explicit HashingEncoder(std::size_t dimension = 256, std::size_t max_tokens = 512)
      : dim_(dimension), max_tokens_(max_tokens) {
    if (dim_ == 0) throw ValidationError("hashing encoder: dimension must be positive");
  }

  [[nodiscard]] std::string id() const override {
    return "hashing-d" + std::to_string(dim_) + "-t" + std::to_string(max_tokens_);
  }
  [[nodiscard]] std::size_t dimension() const override { return dim_; }
  [[nodiscard]] std::size_t max_input_tokens() const override { return max_tokens_; }

  [[nodiscard]] Embedding encode(std::string_view text) const override {
    Embedding v(dim_, 0.0);
    auto tokens = tokenize(text);
    if (tokens.size() > max_tokens_) tokens.resize(max_tokens_);
    // Presence, not counts: repeated filler words should not swamp rare ones.
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    for (const auto& tok : tokens) {
      const auto h = fnv1a(tok);
      v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    return v;
  }

  [[nodiscard]] std::unique_ptr<EncoderBackend> clone() const override {
    return std::make_unique<HashingEncoder>(*this);
  }

  [[nodiscard]] nlohmann::ordered_json spec() const override {
    return {{"type", "hashing"}, {"dimension", dim_}, {"max_input_tokens", max_tokens_}};
  }

 private:
  std::size_t dim_;
  std::size_t max_tokens_;
};

/// Mean of learned token vectors (tokens hashed into `buckets` rows). Trainable,
/// so END_TO_END fine-tuning updates the table together with the head.
class BagOfEmbeddingsEncoder final : public EncoderBackend {
 public:
  BagOfEmbeddingsEncoder(std::size_t buckets = 2048, std::size_t dimension = 64,
                         std::size_t max_tokens = 512, std::uint64_t seed = 1)
      : buckets_(buckets), dim_(dimension), max_tokens_(max_tokens), seed_(seed) {
    if (buckets_ == 0 || dim_ == 0) {
      throw ValidationError("bag-of-embeddings encoder: buckets and dimension must be positive");
    }
    table_.resize(buckets_ * dim_);
    Rng rng(seed_);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
    for (double& w : table_) w = rng.uniform(-scale, scale);
  }

  [[nodiscard]] std::string id() const override {
    return "bag-of-embeddings-b" + std::to_string(buckets_) + "-d" + std::to_string(dim_) + "-t" +
           std::to_string(max_tokens_) + "-s" + std::to_string(seed_);
  }
  [[nodiscard]] std::size_t dimension() const override { return dim_; }
  [[nodiscard]] std::size_t max_input_tokens() const override { return max_tokens_; }
  [[nodiscard]] bool trainable() const override { return true; }

  [[nodiscard]] Embedding encode(std::string_view text) const override {
    Embedding v(dim_, 0.0);
    const auto rows = token_rows(text);
    if (rows.empty()) return v;
    for (auto r : rows) {
      const double* w = &table_[r * dim_];
      for (std::size_t j = 0; j < dim_; ++j) v[j] += w[j];
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (double& x : v) x *= inv;
    return v;
  }

  void backward(std::string_view text, std::span<const double> grad_embedding,
                std::span<double> grad) const override {
    const auto rows = token_rows(text);
    if (rows.empty()) return;
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (auto r : rows) {
      double* g = &grad[r * dim_];
      for (std::size_t j = 0; j < dim_; ++j) g[j] += grad_embedding[j] * inv;
    }
  }

  std::span<double> parameters() override { return table_; }

  [[nodiscard]] std::unique_ptr<EncoderBackend> clone() const override {
    return std::make_unique<BagOfEmbeddingsEncoder>(*this);
  }

  [[nodiscard]] nlohmann::ordered_json spec() const override {
    return {{"type", "bag-of-embeddings"}, {"buckets", buckets_},  {"dimension", dim_},
            {"max_input_tokens", max_tokens_}, {"seed", seed_}};
  }

 private:
  [[nodiscard]] std::vector<std::size_t> token_rows(std::string_view text) const {
    auto tokens = tokenize(text);
    if (tokens.size() > max_tokens_) tokens.resize(max_tokens_);
    std::vector<std::size_t> rows;
    rows.reserve(tokens.size());
    for (const auto& t : tokens) rows.push_back(fnv1a(t) % buckets_);
    return rows;
  }

  std::size_t buckets_;
  std::size_t dim_;
  std::size_t max_tokens_;
  std::uint64_t seed_;
  std::vector<double> table_;
};

inline std::unique_ptr<EncoderBackend> make_encoder(const nlohmann::json& spec) {
  const auto type = spec.value("type", std::string("hashing"));
  const std::size_t max_tokens = spec.value("max_input_tokens", std::size_t{512});
  if (type == "hashing") {
    return std::make_unique<HashingEncoder>(spec.value("dimension", std::size_t{256}), max_tokens);
  }
  if (type == "bag-of-embeddings") {
    return std::make_unique<BagOfEmbeddingsEncoder>(spec.value("buckets", std::size_t{2048}),
                                                    spec.value("dimension", std::size_t{64}),
                                                    max_tokens,
                                                    spec.value("seed", std::uint64_t{1}));
  }
  throw ValidationError("unknown encoder type '" + type + "'");
}

// ---------------------------------------------------------------------------
// Parameter blobs: little-endian u64 count followed by IEEE-754 doubles.

inline void write_parameters(const std::filesystem::path& path, std::span<const double> params) {
  static_assert(std::endian::native == std::endian::little, "blob layout assumes little-endian");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::uint64_t n = params.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size_bytes()));
}

inline void read_parameters(const std::filesystem::path& path, std::span<double> params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || n != params.size()) {
    throw DataError(path.string() + ": expected " + std::to_string(params.size()) + " parameters");
  }
  in.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(params.size_bytes()));
  if (!in) throw DataError(path.string() + ": truncated parameter blob");
}

// ---------------------------------------------------------------------------

/// (encoder id, report id) -> embedding. Concurrent readers, exclusive writers.
class EmbeddingCache {
 public:
  [[nodiscard]] std::optional<Embedding> find(const std::string& encoder_id,
                                              const std::string& report_id) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find({encoder_id, report_id});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void insert(const std::string& encoder_id, const std::string& report_id, Embedding e) {
    std::unique_lock lock(mutex_);
    entries_.insert_or_assign({encoder_id, report_id}, std::move(e));
  }

  [[nodiscard]] std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }

  void save(const std::filesystem::path& path) const {
    std::shared_lock lock(mutex_);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    auto put_u64 = [&out](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    auto put_str = [&](const std::string& s) {
      put_u64(s.size());
      out.write(s.data(), static_cast<std::streamsize>(s.size()));
    };
    put_u64(entries_.size());
    for (const auto& [key, emb] : entries_) {
      put_str(key.first);
      put_str(key.second);
      put_u64(emb.size());
      out.write(reinterpret_cast<const char*>(emb.data()),
                static_cast<std::streamsize>(emb.size() * sizeof(double)));
    }
  }

  void load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read embedding cache " + path.string());
    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
      throw DataError(path.string() + ": not an embedding cache");
    }
    auto get_u64 = [&in]() {
      std::uint64_t v = 0;
      in.read(reinterpret_cast<char*>(&v), 8);
      return v;
    };
    auto get_str = [&]() {
      std::string s(get_u64(), '\0');
      in.read(s.data(), static_cast<std::streamsize>(s.size()));
      return s;
    };
    std::unique_lock lock(mutex_);
    for (auto n = get_u64(); n > 0 && in; --n) {
      auto enc = get_str();
      auto rep = get_str();
      Embedding e(get_u64());
      in.read(reinterpret_cast<char*>(e.data()), static_cast<std::streamsize>(e.size() * sizeof(double)));
      if (!in) throw DataError(path.string() + ": truncated embedding cache");
      entries_.insert_or_assign({std::move(enc), std::move(rep)}, std::move(e));
    }
  }

 private:
  static constexpr char kMagic[8] = {'D', 'A', 'E', 'M', 'B', '0', '0', '1'};
  mutable std::shared_mutex mutex_;
  std::map<std::pair<std::string, std::string>, Embedding> entries_;
};

}  // namespace dreamaffect
