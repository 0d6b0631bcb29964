#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <iterator>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "dreamaffect/emotion.hpp"
#include "dreamaffect/errors.hpp"
#include "dreamaffect/rng.hpp"

namespace dreamaffect {

struct EmotionMention {
  std::string character;  // "D" is the dreamer
  EmotionClass emotion;

  [[nodiscard]] bool by_dreamer() const noexcept { return character == kDreamerCharacter; }

  bool operator==(const EmotionMention&) const = default;
};

/// One dream narrative plus its HVDC emotion mentions. Duplicate mentions are
/// meaningful (each reference counts separately) and are never merged.
struct DreamReport {
  std::string id;
  std::string series;
  std::string text;
  std::vector<EmotionMention> mentions;

  bool operator==(const DreamReport&) const = default;
};

struct Provenance {
  std::string source;
  std::string ingested_at;  // ISO-8601 UTC
};

/// Immutable once built.
struct Corpus {
  std::vector<DreamReport> reports;
  Provenance provenance;

  [[nodiscard]] std::size_t size() const noexcept { return reports.size(); }
  [[nodiscard]] bool empty() const noexcept { return reports.empty(); }
};

// ---------------------------------------------------------------------------
// Record parsing / serialization (JSONL, one report per line)

namespace detail {

inline bool has_whitespace(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key,
                                     nlohmann::json::value_t type, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(line, std::string("missing key '") + key + "'");
  if (it->type() != type) throw ParseError(line, std::string("key '") + key + "' has wrong type");
  return *it;
}

}  // namespace detail

/// Parses and validates one JSONL record. Unknown keys are ignored; a note for
/// each is appended to `warnings` when given.
inline DreamReport parse_report_record(std::string_view line, std::size_t line_no = 1,
                                       std::vector<std::string>* warnings = nullptr) {
  using vt = nlohmann::json::value_t;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(line_no, "record is not a JSON object");

  DreamReport r;
  r.id = detail::require(j, "id", vt::string, line_no).get<std::string>();
  r.series = detail::require(j, "series", vt::string, line_no).get<std::string>();
  r.text = detail::require(j, "text", vt::string, line_no).get<std::string>();
  const auto& mentions = detail::require(j, "mentions", vt::array, line_no);

  const auto where = [&] { return "line " + std::to_string(line_no) + ": "; };
  if (r.id.empty()) throw ValidationError(where() + "empty report id");
  if (r.text.empty()) throw ValidationError(where() + "empty text in report " + r.id);

  for (const auto& m : mentions) {
    if (!m.is_object()) throw ParseError(line_no, "mention is not an object");
    auto c = m.find("character");
    auto e = m.find("emotion");
    if (c == m.end() || !c->is_string() || e == m.end() || !e->is_string()) {
      throw ParseError(line_no, "mention needs string keys 'character' and 'emotion'");
    }
    auto character = c->get<std::string>();
    if (character.empty() || detail::has_whitespace(character)) {
      throw ValidationError(where() + "invalid character code '" + character + "'");
    }
    auto code = e->get<std::string>();
    auto emotion = try_parse_emotion(code);
    if (!emotion) throw ValidationError(where() + "unknown emotion code " + code);
    r.mentions.push_back({std::move(character), *emotion});
  }

  if (warnings) {
    for (const auto& [key, _] : j.items()) {
      if (key != "id" && key != "series" && key != "text" && key != "mentions") {
        warnings->push_back(where() + "ignoring unknown key '" + key + "'");
      }
    }
  }
  return r;
}

inline std::string serialize_report(const DreamReport& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["series"] = r.series;
  j["text"] = r.text;
  j["mentions"] = nlohmann::ordered_json::array();
  for (const auto& m : r.mentions) {
    j["mentions"].push_back({{"character", m.character}, {"emotion", code_of(m.emotion)}});
  }
  return j.dump();
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct IngestResult {
  Corpus corpus;
  std::vector<std::string> warnings;
};

/// Reads a JSONL stream. Blank lines are skipped; duplicate ids are a hard error.
inline IngestResult read_corpus(std::istream& in, std::string source = "<stream>") {
  IngestResult out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto report = parse_report_record(line, line_no, &out.warnings);
    if (!seen.insert(report.id).second) {
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate report id " +
                            report.id);
    }
    out.corpus.reports.push_back(std::move(report));
  }
  out.corpus.provenance = {std::move(source), utc_timestamp()};
  return out;
}

inline IngestResult read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus " + path.string());
  return read_corpus(in, path.string());
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& r : corpus.reports) out << serialize_report(r) << '\n';
}

inline void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_corpus(out, corpus);
}

// ---------------------------------------------------------------------------
// Derived views

inline std::vector<EmotionMention> filtered_mentions(const DreamReport& r, EmotionMode mode) {
  if (mode == EmotionMode::General) return r.mentions;
  std::vector<EmotionMention> out;
  std::copy_if(r.mentions.begin(), r.mentions.end(), std::back_inserter(out),
               [](const EmotionMention& m) { return m.by_dreamer(); });
  return out;
}

inline std::size_t mention_count(const DreamReport& r, EmotionMode mode) {
  if (mode == EmotionMode::General) return r.mentions.size();
  return static_cast<std::size_t>(std::count_if(r.mentions.begin(), r.mentions.end(),
                                                [](const auto& m) { return m.by_dreamer(); }));
}

/// Presence of each class among the mode-filtered mentions; counts are discarded.
inline LabelVector extract_label_vector(const DreamReport& r, EmotionMode mode) {
  LabelVector v;
  for (const auto& m : r.mentions) {
    if (mode == EmotionMode::Dreamer && !m.by_dreamer()) continue;
    v.set(index_of(m.emotion));
  }
  return v;
}

template <typename Pred>
Corpus filter_corpus(const Corpus& c, Pred keep) {
  Corpus out;
  out.provenance = c.provenance;
  std::copy_if(c.reports.begin(), c.reports.end(), std::back_inserter(out.reports), keep);
  return out;
}

/// Reports carrying exactly one mode-filtered mention. Two mentions of the same
/// class count as two and exclude the report.
inline Corpus filter_single_emotion(const Corpus& c, EmotionMode mode) {
  return filter_corpus(c, [mode](const DreamReport& r) { return mention_count(r, mode) == 1; });
}

/// Reports carrying at least one mode-filtered mention.
inline Corpus filter_emotion_bearing(const Corpus& c, EmotionMode mode) {
  return filter_corpus(c, [mode](const DreamReport& r) { return mention_count(r, mode) >= 1; });
}

inline std::map<std::size_t, std::size_t> emotion_count_histogram(const Corpus& c,
                                                                  EmotionMode mode) {
  std::map<std::size_t, std::size_t> h;
  for (const auto& r : c.reports) ++h[mention_count(r, mode)];
  return h;
}

/// Series id -> reports, input order preserved within each series.
inline std::map<std::string, std::vector<DreamReport>> series_partition(const Corpus& c) {
  std::map<std::string, std::vector<DreamReport>> parts;
  for (const auto& r : c.reports) parts[r.series].push_back(r);
  return parts;
}

/// Series ids in order of first appearance.
inline std::vector<std::string> series_ids(const Corpus& c) {
  std::vector<std::string> ids;
  for (const auto& r : c.reports) {
    if (std::find(ids.begin(), ids.end(), r.series) == ids.end()) ids.push_back(r.series);
  }
  return ids;
}

/// Order-sensitive content hash over ids, texts and mentions.
inline std::string corpus_fingerprint(const Corpus& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& r : c.reports) h = fnv1a(serialize_report(r) + '\n', h);
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Validation profile for the HVDC-annotated DreamBank export

struct SeriesExpectation {
  std::string series;
  std::size_t total_reports;
  std::size_t emotion_bearing;
};

struct ValidationProfile {
  std::string name;
  std::size_t emotion_bearing_total;
  std::vector<SeriesExpectation> series;
};

/// Counts published for the six annotated DreamBank series (General mode).
inline ValidationProfile dreambank_profile() {
  return {"dreambank-hvdc",
          922,
          {{"Bea 1: a high school student", 171, 99},
           {"Ed: dreams of his late wife", 143, 108},
           {"Emma: 48 years of dreams", 300, 81},
           {"Hall/VdC Norms: Female", 491, 280},
           {"Hall/VdC Norms: Male", 500, 203},
           {"Barb Sanders: baseline", 250, 151}}};
}

/// Mismatches against `profile`, as human-readable warnings. Never throws.
inline std::vector<std::string> check_profile(const Corpus& c, const ValidationProfile& profile) {
  std::vector<std::string> warnings;
  const auto parts = series_partition(c);
  std::size_t bearing_total = 0;
  for (const auto& r : c.reports) bearing_total += r.mentions.empty() ? 0 : 1;
  if (bearing_total != profile.emotion_bearing_total) {
    warnings.push_back("profile " + profile.name + ": " + std::to_string(bearing_total) +
                       " emotion-bearing reports, expected " +
                       std::to_string(profile.emotion_bearing_total));
  }
  for (const auto& s : profile.series) {
    auto it = parts.find(s.series);
    if (it == parts.end()) {
      warnings.push_back("profile " + profile.name + ": series '" + s.series + "' missing");
      continue;
    }
    const auto total = it->second.size();
    const auto bearing = static_cast<std::size_t>(std::count_if(
        it->second.begin(), it->second.end(), [](const auto& r) { return !r.mentions.empty(); }));
    if (total != s.total_reports && total != s.emotion_bearing) {
      warnings.push_back("series '" + s.series + "': " + std::to_string(total) +
                         " reports, expected " + std::to_string(s.total_reports) + " (or " +
                         std::to_string(s.emotion_bearing) + " emotion-bearing only)");
    }
    if (bearing != s.emotion_bearing) {
      warnings.push_back("series '" + s.series + "': " + std::to_string(bearing) +
                         " emotion-bearing reports, expected " +
                         std::to_string(s.emotion_bearing));
    }
  }
  for (const auto& [series, _] : parts) {
    const bool known = std::any_of(profile.series.begin(), profile.series.end(),
                                   [&](const auto& s) { return s.series == series; });
    if (!known) warnings.push_back("series '" + series + "' is not in profile " + profile.name);
  }
  return warnings;
}

}  // namespace dreamaffect
