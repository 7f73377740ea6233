#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memjack/labels.hpp"

namespace memjack {

enum class NodeKind { Anchor = 0, Goal = 1, Strategy = 2, Defense = 3, Category = 4 };
enum class EdgeKind { Induces = 0, Bypasses = 1, Triggers = 2, BelongsTo = 3, EffectiveFor = 4 };

std::string_view to_string(NodeKind k);
std::string_view to_string(EdgeKind k);

struct KgNode {
    int id = 0;
    NodeKind kind = NodeKind::Anchor;
    std::string key;  // normalized
};

struct KgEdge {
    int from = 0;
    int to = 0;
    EdgeKind kind = EdgeKind::Induces;
    long n_pos = 0;
    long n_neg = 0;
};

struct KgConfig {
    bool laplace_smoothing = false;
};

struct KgRoundOutcome {
    std::string anchor_key;
    std::string goal_key;
    std::string strategy_key;
    std::optional<DefensePattern> defense;           // observed on this round's failure
    std::optional<DefensePattern> previous_defense;  // last failure on the same anchor
    std::vector<std::string> categories;
    bool success = false;
};

struct KgActionKey {
    int angle_id = 1;
    std::string strategy_key;
};

// Directed weighted graph over the five node kinds with success/failure
// counters per edge. Endpoint kinds are fixed per edge kind:
//   Anchor -Induces-> Goal, Strategy -Bypasses/Triggers-> Defense,
//   Goal -BelongsTo-> Category, Strategy -EffectiveFor-> Category.
class KnowledgeGraph {
  public:
    KgConfig config;

    int upsert_node(NodeKind kind, const std::string& key);
    KgEdge& upsert_edge(int from, int to, EdgeKind kind);

    void record_outcome(const KgRoundOutcome& outcome);

    double edge_weight(const KgEdge& edge) const;
    static double weight(long n_pos, long n_neg, bool laplace);

    // Weight of a specific edge, or nullopt when absent.
    std::optional<double> lookup_weight(NodeKind from_kind, const std::string& from_key,
                                        EdgeKind kind, NodeKind to_kind,
                                        const std::string& to_key) const;

    struct BypassRecommendation {
        std::string strategy_key;
        double weight = 0.0;
        long evidence = 0;  // n+ + n-
    };
    std::vector<BypassRecommendation> recommend_bypass(DefensePattern defense, int top_k) const;

    struct Priors {
        std::vector<double> values;  // normalized to sum 1
        bool informed = false;       // true when at least one real edge contributed
    };
    Priors action_priors(std::span<const KgActionKey> actions,
                         std::optional<DefensePattern> current_defense,
                         std::span<const std::string> categories) const;

    std::string to_dot() const;

    void save(const std::filesystem::path& dir) const;
    void load(const std::filesystem::path& dir);

    const std::vector<KgNode>& nodes() const { return nodes_; }
    const std::vector<KgEdge>& edges() const { return edges_; }

  private:
    const KgEdge* find_edge(int from, int to, EdgeKind kind) const;
    int find_node(NodeKind kind, const std::string& key) const;

    std::vector<KgNode> nodes_;
    std::vector<KgEdge> edges_;
    std::map<std::pair<int, std::string>, int> node_index_;       // (kind, key) -> id
    std::map<std::tuple<int, int, int>, size_t> edge_index_;       // (from, to, kind) -> idx
};

}  // namespace memjack
