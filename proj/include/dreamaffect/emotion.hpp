#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "dreamaffect/errors.hpp"

namespace dreamaffect {

/// The five HVDC emotion classes. The enumerator order is the vectorization
/// order used everywhere (label vectors, head rows, CSV columns).
enum class EmotionClass : std::size_t { AN = 0, AP = 1, SD = 2, CO = 3, HA = 4 };

inline constexpr std::size_t kEmotionCount = 5;

inline constexpr std::array<EmotionClass, kEmotionCount> kAllEmotions{
    EmotionClass::AN, EmotionClass::AP, EmotionClass::SD, EmotionClass::CO, EmotionClass::HA};

inline constexpr std::array<std::string_view, kEmotionCount> kEmotionCodes{"AN", "AP", "SD", "CO",
                                                                           "HA"};

inline constexpr std::array<std::string_view, kEmotionCount> kEmotionNames{
    "anger", "apprehension", "sadness", "confusion", "happiness"};

constexpr std::size_t index_of(EmotionClass e) noexcept { return static_cast<std::size_t>(e); }

constexpr std::string_view code_of(EmotionClass e) noexcept { return kEmotionCodes[index_of(e)]; }

inline std::optional<EmotionClass> try_parse_emotion(std::string_view code) noexcept {
  for (std::size_t i = 0; i < kEmotionCount; ++i) {
    if (kEmotionCodes[i] == code) return static_cast<EmotionClass>(i);
  }
  return std::nullopt;
}

inline EmotionClass parse_emotion(std::string_view code) {
  if (auto e = try_parse_emotion(code)) return *e;
  throw ValidationError("unknown emotion code " + std::string(code));
}

/// Which mentions count: only the dreamer's ("D"), or every character's.
enum class EmotionMode { Dreamer, General };

inline constexpr std::string_view kDreamerCharacter = "D";

inline std::string_view to_string(EmotionMode m) noexcept {
  return m == EmotionMode::Dreamer ? "dreamer" : "general";
}

inline EmotionMode parse_mode(std::string_view s) {
  if (s == "dreamer" || s == "DREAMER") return EmotionMode::Dreamer;
  if (s == "general" || s == "GENERAL") return EmotionMode::General;
  throw ValidationError("unknown emotion mode " + std::string(s) + " (expected dreamer|general)");
}

/// Presence/absence over a fixed set of N classes.
template <std::size_t N>
using LabelSet = std::bitset<N>;

/// Presence/absence of each emotion class, indexed by EmotionClass order.
using LabelVector = LabelSet<kEmotionCount>;

inline std::string to_bit_string(const LabelVector& v) {
  std::string s;
  for (std::size_t i = 0; i < kEmotionCount; ++i) s += v[i] ? '1' : '0';
  return s;
}

}  // namespace dreamaffect
