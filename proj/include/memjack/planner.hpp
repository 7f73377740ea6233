#pragma once

#include <set>
#include <span>
#include <string>
#include <vector>

#include "memjack/backends.hpp"

namespace memjack {

enum class AnchorType { entity, scene, relationship, context, composite };

std::string_view to_string(AnchorType t);
std::optional<AnchorType> anchor_type_from(std::string_view s);

// One ranked (anchor, type, categories, score, goal, context) tuple.
struct VulnerabilityDescriptor {
    std::string anchor;
    AnchorType type = AnchorType::entity;
    std::vector<std::string> matched_categories;
    double match_score = 0.0;
    std::string attack_goal;
    std::string context_note;
};

struct PlanRequest {
    std::string image_ref;
    std::vector<std::string> policy;            // ordered category tags
    std::vector<std::string> failure_history;   // round summaries
    std::set<std::string> excluded_anchors;     // normalized keys
    int replan_count = 0;
};

// Fallback used after repeated parse failure of the planner reply.
VulnerabilityDescriptor fallback_descriptor();

// Ranked descriptors, excluded anchors filtered out, realism pass applied,
// sorted by match score descending. One repair re-prompt is attempted on
// parse failure before falling back.
std::vector<VulnerabilityDescriptor> analyze(const PlanRequest& request, ChatBackend& planner);

// Maximal-score descriptor; ties break toward the earlier position.
const VulnerabilityDescriptor& select_primary_anchor(
    std::span<const VulnerabilityDescriptor> descriptors);

// analyze() with failure history and exclusions injected; requires
// replan_count >= 1 and a non-empty failure history.
std::vector<VulnerabilityDescriptor> replan(const PlanRequest& request, ChatBackend& planner);

}  // namespace memjack
