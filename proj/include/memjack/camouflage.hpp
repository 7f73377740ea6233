#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memjack/backends.hpp"
#include "memjack/embedding.hpp"
#include "memjack/rng.hpp"

namespace memjack {

inline constexpr int kAngleCount = 6;

// The six framing styles, ids 1..6 in fixed order.
struct AttackAngle {
    int id = 1;
    std::string_view name() const;
};

std::string_view angle_name(int id);

struct AngleState {
    int current = 1;
    std::array<int, kAngleCount> failures{};  // consecutive failures per angle
    int switch_threshold = 2;                 // tau
    int total_consecutive_failures = 0;

    int failures_for(int angle_id) const { return failures[static_cast<size_t>(angle_id - 1)]; }
    void record_failure(int angle_id);
    // True when every angle has accumulated >= tau consecutive failures.
    bool all_exhausted() const;
};

// Switching policy: stay while failures under tau, otherwise advance to
// (idx mod 6) + 1 and reset the new angle's counter.
AttackAngle next_angle(AngleState& state);

// External override (search or reflection recommendation); resets the new
// angle's counter only on an actual switch.
void commit_angle(AngleState& state, int angle_id);

struct HintConfig {
    double similarity_threshold = 0.85;  // tau_v
    int max_hints = 1;
};

std::optional<std::string> inject_failure_hint(const EmbeddingVector& response_embedding,
                                               std::span<const EmbeddingVector> failure_index,
                                               const HintConfig& config);

struct PromptContext {
    std::string image_ref;
    std::string goal;
    std::string anchor;
    std::string context_note;
    std::string category_tag;
    int angle_id = 1;
    std::vector<std::string> history_lines;       // capped by the orchestrator
    std::vector<std::string> memory_strategies;   // retrieved skeletons
    std::optional<std::string> hint;
    double temperature = 0.7;
};

struct Candidate {
    std::string text;
    int angle_id = 1;
    std::string skeleton_key;
};

struct AngleTemplates {
    std::array<std::string, kAngleCount> templates;

    static AngleTemplates defaults();
    static AngleTemplates load(const std::string& path);
    std::string fill(int angle_id, const PromptContext& ctx) const;
    // Stable cross-image strategy key for template-generated prompts.
    std::string skeleton_key(int angle_id) const;
};

struct Blocklist {
    std::vector<std::string> terms;

    static Blocklist defaults();
    static Blocklist load(const std::string& path);
    bool violates(std::string_view text) const;
    std::string joined() const;
};

std::vector<Candidate> generate_candidates(const PromptContext& ctx, ChatBackend& attacker,
                                           int count, const AngleTemplates& templates,
                                           const Blocklist& blocklist);

struct EvolutionConfig {
    int population_size = 4;  // N
    int generations = 2;      // G
    double crossover_rate = 0.4;
    double mutation_rate = 0.4;
    int elite_count = 1;
};

using FitnessFn = std::function<double(const Candidate&)>;

// Final population sorted best-first; front() is the fitness argmax.
std::vector<Candidate> evolve_population(std::vector<Candidate> seeds, const FitnessFn& fitness,
                                         const EvolutionConfig& config, ChatBackend* attacker,
                                         const Blocklist& blocklist, RngStream& rng);
Candidate evolve(std::vector<Candidate> seeds, const FitnessFn& fitness,
                 const EvolutionConfig& config, ChatBackend* attacker, const Blocklist& blocklist,
                 RngStream& rng);

struct SearchConfig {
    int simulations = 16;
    double exploration_constant = 1.4;
    double prior_weight = 1.0;
    double rollout_noise = 0.25;  // uniform +/- noise added to rollout values
};

struct McAction {
    int angle_id = 1;
    std::string strategy_key;
    bool from_memory = false;
};

// Prior-weighted UCT over a single-level action set; every action is
// expanded once before scores are compared. Returns the most-visited index,
// ties broken toward the smaller index.
size_t mcts_select(std::span<const McAction> actions, std::span<const double> priors,
                   const std::function<double(const McAction&)>& value_estimate,
                   const SearchConfig& config, RngStream& rng);

double adapt_temperature(int consecutive_failures, double t0, double t_max);

}  // namespace memjack
