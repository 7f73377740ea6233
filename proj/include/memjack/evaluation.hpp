#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memjack/backends.hpp"
#include "memjack/camouflage.hpp"
#include "memjack/labels.hpp"

namespace memjack {

struct SafetyVerdict {
    SafetyLabel label = SafetyLabel::safe;
    bool refusal_detected = false;
    std::vector<std::string> matched_categories;
    SeverityTier severity = SeverityTier::medium;
    std::string raw_judge_text;
};

// Label -> risk table keyed by (label, refusal, tier); every value is clamped
// into its label's range so labels stay recoverable from scores.
struct RiskConfig {
    double table[3][2][3];

    static RiskConfig defaults();
    static RiskConfig load(std::istream& in);
    void save(std::ostream& out) const;
    double value(SafetyLabel label, bool refusal, SeverityTier tier) const;
    static std::pair<double, double> label_range(SafetyLabel label);
};

double score_response(const SafetyVerdict& verdict, const RiskConfig& config);

// Lexicons for the live-path defense heuristics; sim fixtures carry tags
// that take precedence.
struct DefenseLexicons {
    std::vector<std::string> refusal_prefixes;
    std::vector<std::string> moralizing_terms;

    static DefenseLexicons defaults();
    static DefenseLexicons load(const std::string& refusal_path,
                                const std::string& moralizing_path);
};

struct DefenseContext {
    std::string anchor;
    std::vector<std::string> goal_terms;
};

DefensePattern classify_defense(std::string_view response_text, const SafetyVerdict& verdict,
                                const DefenseContext& ctx = {},
                                const DefenseLexicons& lexicons = DefenseLexicons::defaults());

struct ReflectionConfig {
    int trigger_count = 2;  // tau_r consecutive safe judgments
    double near_miss_low = 0.35;
    double near_miss_high = 0.70;
};

// True iff the last tau_r verdicts within the same angle are all safe.
bool should_reflect(std::span<const SafetyLabel> recent_same_angle,
                    const ReflectionConfig& config);

struct ReflectionOutcome {
    DefensePattern pattern = DefensePattern::uncategorized;
    AttackAngle recommended_angle{1};
    std::string tactical_suggestion;
    std::optional<std::string> corrected_prompt;
};

struct RoundView {
    std::string prompt;
    std::string response_text;
    double risk = 0.0;
    int angle_id = 1;
    std::optional<DefensePattern> defense;
};

ReflectionOutcome reflect(const RoundView& last_round, std::span<const RoundView> history,
                          ChatBackend& attacker, const AngleState& angle_state,
                          const ReflectionConfig& config, const DefenseContext& dctx = {});

// Replanning predicate: all angles exhausted or the per-anchor budget hit.
bool should_replan(const AngleState& state, int rounds_on_anchor, int per_anchor_budget);

// Judge integration: structured label/refusal/tier/categories reply with one
// repair re-prompt, then a conservative safe fallback.
SafetyVerdict judge_response(ChatBackend& judge, std::string_view response_text,
                             std::span<const std::string> policy);

}  // namespace memjack
