#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "memjack/embedding.hpp"
#include "memjack/labels.hpp"
#include "memjack/rng.hpp"

namespace memjack {

enum class TurnRole { system, user, assistant };

struct ChatTurn {
    TurnRole role = TurnRole::user;
    std::string text;
    std::string image_ref;  // opaque identifier; empty when absent
};

std::string turns_digest(std::span<const ChatTurn> turns);

enum class BackendKind { http, sim };

struct BackendConfig {
    BackendKind kind = BackendKind::sim;
    std::string endpoint_url;     // required for http
    std::string api_key_env_var;  // name of the env var holding the key
    std::string model_name = "sim";
    double temperature = 0.7;
    double timeout_s = 30.0;
    int max_retries = 2;
    int backoff_base_ms = 250;  // exponential, factor 2
};

// Deterministic description of a simulated victim. Success on a prompt round
// requires a vulnerable (category, angle) pair and a seeded draw below
// min(1, baseSuccessProb + escalationGain * roundIndexOnAnchor).
struct SimVictimProfile {
    std::set<std::pair<std::string, int>> vulnerable_combos;
    double base_success_prob = 0.0;
    double escalation_gain = 0.0;
    // Distribution over the six defense patterns used for failure fixtures,
    // indexed by DefensePattern order; must sum to 1.
    std::array<double, kDefensePatternCount> defense_mix = {0.4, 0.05, 0.2, 0.05, 0.2, 0.1};
    uint64_t seed = 0;
};

struct VictimReply {
    std::string text;
    SafetyLabel ground_truth = SafetyLabel::safe;
    DefensePattern defense = DefensePattern::uncategorized;
};

// Pure function of its arguments plus the supplied stream; the sim judge
// recovers the ground-truth label from tags embedded in the fixture text.
VictimReply sim_victim_respond(const SimVictimProfile& profile, const std::string& anchor_category,
                               int angle_id, int round_index_on_anchor, RngStream& rng);

class ChatBackend {
  public:
    virtual ~ChatBackend() = default;
    virtual std::string chat(std::span<const ChatTurn> turns, double temperature) = 0;
};

class EmbedBackend {
  public:
    virtual ~EmbedBackend() = default;
    virtual EmbeddingVector embed(std::string_view text, std::string_view image_ref = {}) = 0;
    virtual int dim() const = 0;
};

// Synthetic universe shared by the sim planner and sim victim: maps image
// refs to deterministic anchor descriptions and category tags.
struct SimAnchor {
    std::string anchor;
    std::string anchor_type;  // entity|scene|relationship|context|composite
    std::vector<std::string> categories;
    double score = 0.5;
    std::string goal;
    std::string context_note;
    bool abstract_flag = false;  // descriptors the realism pass should drop
};

struct SimWorld {
    uint64_t seed = 0;
    std::vector<std::string> category_pool = {"concealment"};
    int anchors_per_image = 3;
    // > 1 diversifies goal phrasing across images, which throttles
    // cross-image retrieval similarity; 1 keeps a single shared phrasing.
    int goal_style_pool = 1;
    std::map<std::string, std::vector<SimAnchor>> scripted;  // per-image overrides

    std::vector<SimAnchor> anchors_for(const std::string& image_ref) const;
};

class SimPlannerBackend final : public ChatBackend {
  public:
    explicit SimPlannerBackend(SimWorld world, uint64_t seed = 0)
        : world_(std::move(world)), seed_(seed) {}
    std::string chat(std::span<const ChatTurn> turns, double temperature) override;

  private:
    SimWorld world_;
    uint64_t seed_;
};

class SimAttackerBackend final : public ChatBackend {
  public:
    explicit SimAttackerBackend(uint64_t seed = 0) : seed_(seed) {}
    std::string chat(std::span<const ChatTurn> turns, double temperature) override;

  private:
    uint64_t seed_;
};

class SimVictimBackend final : public ChatBackend {
  public:
    SimVictimBackend(SimVictimProfile profile, SimWorld world)
        : profile_(std::move(profile)), world_(std::move(world)) {}
    std::string chat(std::span<const ChatTurn> turns, double temperature) override;

  private:
    SimVictimProfile profile_;
    SimWorld world_;
};

class SimJudgeBackend final : public ChatBackend {
  public:
    std::string chat(std::span<const ChatTurn> turns, double temperature) override;
};

// Token feature-hash into `dim` buckets, L2-normalized. Fixture texts that
// carry a synthetic safe/unsafe marker get a label-correlated component on
// axis 0 so geometric-filter tests have signal.
class SimEmbedBackend final : public EmbedBackend {
  public:
    explicit SimEmbedBackend(int dim = 64) : dim_(dim) {}
    EmbeddingVector embed(std::string_view text, std::string_view image_ref = {}) override;
    int dim() const override { return dim_; }

  private:
    int dim_;
};

// Test utility: replays scripted replies in order, then repeats the last one.
class ScriptedChatBackend final : public ChatBackend {
  public:
    explicit ScriptedChatBackend(std::vector<std::string> replies)
        : replies_(replies.begin(), replies.end()) {}
    std::string chat(std::span<const ChatTurn> turns, double temperature) override;
    std::vector<std::string> requests;  // captured for assertions

  private:
    std::deque<std::string> replies_;
};

// OpenAI-compatible chat-completions client. Retries transport failures and
// 5xx/429 with exponential backoff up to max_retries.
class HttpChatBackend final : public ChatBackend {
  public:
    explicit HttpChatBackend(BackendConfig config);
    std::string chat(std::span<const ChatTurn> turns, double temperature) override;

  private:
    BackendConfig config_;
};

class HttpEmbedBackend final : public EmbedBackend {
  public:
    HttpEmbedBackend(BackendConfig config, int expected_dim);
    EmbeddingVector embed(std::string_view text, std::string_view image_ref = {}) override;
    int dim() const override { return expected_dim_; }

  private:
    BackendConfig config_;
    int expected_dim_;
};

}  // namespace memjack
