#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace memjack {

enum class SafetyLabel { safe = 0, controversial = 1, unsafe = 2 };

enum class SeverityTier { low = 0, medium = 1, high = 2 };

// Victim failure behaviors; the six classes the reflection stage recognizes.
enum class DefensePattern {
    directRefusal = 0,
    preaching = 1,
    benignReframing = 2,
    topicShift = 3,
    safeAnswer = 4,
    uncategorized = 5
};

inline constexpr int kDefensePatternCount = 6;

std::string_view to_string(SafetyLabel l);
std::string_view to_string(SeverityTier t);
std::string_view to_string(DefensePattern d);

std::optional<SafetyLabel> safety_label_from(std::string_view s);
std::optional<SeverityTier> severity_tier_from(std::string_view s);
std::optional<DefensePattern> defense_pattern_from(std::string_view s);

}  // namespace memjack
