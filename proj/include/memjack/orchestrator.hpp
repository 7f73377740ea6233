#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memjack/backends.hpp"
#include "memjack/camouflage.hpp"
#include "memjack/evaluation.hpp"
#include "memjack/knowledge_graph.hpp"
#include "memjack/memory.hpp"
#include "memjack/nullspace.hpp"
#include "memjack/planner.hpp"

namespace memjack {

struct AblationFlags {
    bool memory_enabled = true;
    bool reflection_enabled = true;
    bool replanning_enabled = true;
};

struct CampaignConfig {
    int round_budget = 20;      // R
    int per_anchor_budget = 8;  // R_max^a
    int angle_threshold = 2;    // tau
    int candidate_count = 4;    // K
    int parallelism = 1;
    uint64_t seed = 0;
    AblationFlags ablation;
    double t0 = 0.7;
    double t_max = 1.1;
    int history_cap = 6;  // rounds of history passed to prompt generation
    int stats_window = 500;
    int embed_dim = 64;
    std::vector<std::string> policy{"concealment", "general"};

    RetrievalConfig retrieval;
    FilterConfig filter;
    RiskConfig risk = RiskConfig::defaults();
    ReflectionConfig reflection;
    EvolutionConfig evolution;
    SearchConfig search;
    HintConfig hint;
    KgConfig kg;
    AngleTemplates templates = AngleTemplates::defaults();
    Blocklist blocklist = Blocklist::defaults();

    BackendConfig planner_backend;
    BackendConfig attacker_backend;
    BackendConfig victim_backend;
    BackendConfig judge_backend;
    BackendConfig embedder_backend;

    // Sim universe; used when the corresponding backend kind is sim.
    SimWorld sim_world;
    SimVictimProfile sim_victim;
};

struct Backends {
    std::shared_ptr<ChatBackend> planner;
    std::shared_ptr<ChatBackend> attacker;
    std::shared_ptr<ChatBackend> victim;
    std::shared_ptr<ChatBackend> judge;
    std::shared_ptr<EmbedBackend> embedder;

    static Backends make(const CampaignConfig& config);
};

struct AttackRound {
    int round_index = 1;
    std::string anchor;
    int angle_id = 1;
    std::string strategy_source;  // generated | corrected_from_reflection | memory_reuse
    std::string prompt;
    std::string response_text;
    std::string response_digest;
    SafetyVerdict verdict;
    double risk = 0.0;
    double rho = 0.0;
    std::optional<DefensePattern> defense;
    double elapsed_ms = 0.0;  // not serialized
};

struct ReplanMeta {
    std::string previous_anchor;
    std::string current_anchor;
    int replan_count = 0;
};

struct Trajectory {
    std::string sample_id;
    VulnerabilityDescriptor analysis;
    ReplanMeta replan;
    std::vector<AttackRound> rounds;
    int total_rounds = 0;
    std::string status;  // success | failure | error
};

// Memory, graph and basis shared across per-image workers; writes serialize
// through the mutex.
struct SharedState {
    ExperienceMemory memory;
    KnowledgeGraph kg;
    RefusalBasis basis;
    std::mutex mu;
    int64_t global_round_counter = 0;
};

Trajectory run_image(const std::string& sample_id, const CampaignConfig& config,
                     Backends& backends, SharedState& shared, RngStream rng);

struct CampaignStats {
    size_t n = 0;
    size_t success_count = 0;
    double asr = 0.0;
    double mean_rounds_to_success = 0.0;
    int window = 500;
    std::vector<double> asr_moving;     // per-image success moving average
    std::vector<double> rounds_moving;  // rounds-to-success moving average (successes)
    std::map<int, double> angle_usage;          // angle id -> share of all rounds
    std::map<std::string, double> defense_histogram;  // over failure rounds
};

std::pair<std::vector<Trajectory>, CampaignStats> run_campaign(
    std::span<const std::string> manifest, const CampaignConfig& config,
    SharedState* external_state = nullptr);

double asr(std::span<const Trajectory> trajectories, int round_budget);
std::vector<double> moving_average(std::span<const double> series, int window);
CampaignStats compute_stats(std::span<const Trajectory> trajectories, int window);

}  // namespace memjack
