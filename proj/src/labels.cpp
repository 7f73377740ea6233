#include "memjack/labels.hpp"

#include "memjack/text.hpp"

namespace memjack {

std::string_view to_string(SafetyLabel l) {
    switch (l) {
        case SafetyLabel::safe: return "safe";
        case SafetyLabel::controversial: return "controversial";
        case SafetyLabel::unsafe: return "unsafe";
    }
    return "safe";
}

std::string_view to_string(SeverityTier t) {
    switch (t) {
        case SeverityTier::low: return "low";
        case SeverityTier::medium: return "medium";
        case SeverityTier::high: return "high";
    }
    return "medium";
}

std::string_view to_string(DefensePattern d) {
    switch (d) {
        case DefensePattern::directRefusal: return "directRefusal";
        case DefensePattern::preaching: return "preaching";
        case DefensePattern::benignReframing: return "benignReframing";
        case DefensePattern::topicShift: return "topicShift";
        case DefensePattern::safeAnswer: return "safeAnswer";
        case DefensePattern::uncategorized: return "uncategorized";
    }
    return "uncategorized";
}

std::optional<SafetyLabel> safety_label_from(std::string_view s) {
    std::string t = to_lower(trim(s));
    if (t == "safe") return SafetyLabel::safe;
    if (t == "controversial") return SafetyLabel::controversial;
    if (t == "unsafe") return SafetyLabel::unsafe;
    return std::nullopt;
}

std::optional<SeverityTier> severity_tier_from(std::string_view s) {
    std::string t = to_lower(trim(s));
    if (t == "low") return SeverityTier::low;
    if (t == "medium") return SeverityTier::medium;
    if (t == "high") return SeverityTier::high;
    return std::nullopt;
}

std::optional<DefensePattern> defense_pattern_from(std::string_view s) {
    std::string t = trim(s);
    for (int i = 0; i < kDefensePatternCount; ++i) {
        auto d = static_cast<DefensePattern>(i);
        if (t == to_string(d)) return d;
    }
    return std::nullopt;
}

}  // namespace memjack
