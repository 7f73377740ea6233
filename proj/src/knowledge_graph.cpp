#include "memjack/knowledge_graph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "memjack/errors.hpp"
#include "memjack/text.hpp"

namespace memjack {

std::string_view to_string(NodeKind k) {
    switch (k) {
        case NodeKind::Anchor: return "Anchor";
        case NodeKind::Goal: return "Goal";
        case NodeKind::Strategy: return "Strategy";
        case NodeKind::Defense: return "Defense";
        case NodeKind::Category: return "Category";
    }
    return "Anchor";
}

std::string_view to_string(EdgeKind k) {
    switch (k) {
        case EdgeKind::Induces: return "Induces";
        case EdgeKind::Bypasses: return "Bypasses";
        case EdgeKind::Triggers: return "Triggers";
        case EdgeKind::BelongsTo: return "BelongsTo";
        case EdgeKind::EffectiveFor: return "EffectiveFor";
    }
    return "Induces";
}

namespace {

struct EndpointSchema {
    NodeKind from;
    NodeKind to;
};

EndpointSchema schema_for(EdgeKind kind) {
    switch (kind) {
        case EdgeKind::Induces: return {NodeKind::Anchor, NodeKind::Goal};
        case EdgeKind::Bypasses: return {NodeKind::Strategy, NodeKind::Defense};
        case EdgeKind::Triggers: return {NodeKind::Strategy, NodeKind::Defense};
        case EdgeKind::BelongsTo: return {NodeKind::Goal, NodeKind::Category};
        case EdgeKind::EffectiveFor: return {NodeKind::Strategy, NodeKind::Category};
    }
    return {NodeKind::Anchor, NodeKind::Goal};
}

}  // namespace

int KnowledgeGraph::upsert_node(NodeKind kind, const std::string& key) {
    std::string norm = normalize_key(key);
    auto it = node_index_.find({static_cast<int>(kind), norm});
    if (it != node_index_.end()) return it->second;
    int id = static_cast<int>(nodes_.size()) + 1;
    nodes_.push_back(KgNode{id, kind, norm});
    node_index_[{static_cast<int>(kind), norm}] = id;
    return id;
}

int KnowledgeGraph::find_node(NodeKind kind, const std::string& key) const {
    auto it = node_index_.find({static_cast<int>(kind), normalize_key(key)});
    return it == node_index_.end() ? 0 : it->second;
}

KgEdge& KnowledgeGraph::upsert_edge(int from, int to, EdgeKind kind) {
    const KgNode& nf = nodes_.at(static_cast<size_t>(from - 1));
    const KgNode& nt = nodes_.at(static_cast<size_t>(to - 1));
    EndpointSchema want = schema_for(kind);
    if (nf.kind != want.from || nt.kind != want.to)
        throw SchemaViolationError(std::string("edge ") + std::string(to_string(kind)) +
                                   " cannot connect " + std::string(to_string(nf.kind)) +
                                   " to " + std::string(to_string(nt.kind)));
    auto key = std::make_tuple(from, to, static_cast<int>(kind));
    auto it = edge_index_.find(key);
    if (it != edge_index_.end()) return edges_[it->second];
    edges_.push_back(KgEdge{from, to, kind, 0, 0});
    edge_index_[key] = edges_.size() - 1;
    return edges_.back();
}

const KgEdge* KnowledgeGraph::find_edge(int from, int to, EdgeKind kind) const {
    auto it = edge_index_.find(std::make_tuple(from, to, static_cast<int>(kind)));
    return it == edge_index_.end() ? nullptr : &edges_[it->second];
}

void KnowledgeGraph::record_outcome(const KgRoundOutcome& outcome) {
    if (outcome.anchor_key.empty() || outcome.goal_key.empty() || outcome.strategy_key.empty())
        throw SchemaViolationError("round outcome requires anchor, goal and strategy keys");

    int anchor = upsert_node(NodeKind::Anchor, outcome.anchor_key);
    int goal = upsert_node(NodeKind::Goal, outcome.goal_key);
    int strategy = upsert_node(NodeKind::Strategy, outcome.strategy_key);

    auto bump = [&](KgEdge& e, bool success) { (success ? e.n_pos : e.n_neg)++; };

    bump(upsert_edge(anchor, goal, EdgeKind::Induces), outcome.success);
    for (const auto& cat : outcome.categories) {
        int c = upsert_node(NodeKind::Category, cat);
        bump(upsert_edge(goal, c, EdgeKind::BelongsTo), outcome.success);
        bump(upsert_edge(strategy, c, EdgeKind::EffectiveFor), outcome.success);
    }

    if (!outcome.success && outcome.defense) {
        int d = upsert_node(NodeKind::Defense, std::string(to_string(*outcome.defense)));
        // The defense did trigger, so Triggers counts a positive observation;
        // the strategy failed to get past it, so Bypasses counts a negative.
        upsert_edge(strategy, d, EdgeKind::Triggers).n_pos++;
        upsert_edge(strategy, d, EdgeKind::Bypasses).n_neg++;
    }
    if (outcome.success && outcome.previous_defense) {
        int d =
            upsert_node(NodeKind::Defense, std::string(to_string(*outcome.previous_defense)));
        upsert_edge(strategy, d, EdgeKind::Bypasses).n_pos++;
    }
}

double KnowledgeGraph::weight(long n_pos, long n_neg, bool laplace) {
    if (laplace)
        return static_cast<double>(n_pos + 1) / static_cast<double>(n_pos + n_neg + 2);
    if (n_pos + n_neg == 0) return 0.5;  // neutral prior
    return static_cast<double>(n_pos) / static_cast<double>(n_pos + n_neg);
}

double KnowledgeGraph::edge_weight(const KgEdge& edge) const {
    return weight(edge.n_pos, edge.n_neg, config.laplace_smoothing);
}

std::optional<double> KnowledgeGraph::lookup_weight(NodeKind from_kind,
                                                    const std::string& from_key, EdgeKind kind,
                                                    NodeKind to_kind,
                                                    const std::string& to_key) const {
    int from = find_node(from_kind, from_key);
    int to = find_node(to_kind, to_key);
    if (!from || !to) return std::nullopt;
    const KgEdge* e = find_edge(from, to, kind);
    if (!e) return std::nullopt;
    return edge_weight(*e);
}

std::vector<KnowledgeGraph::BypassRecommendation> KnowledgeGraph::recommend_bypass(
    DefensePattern defense, int top_k) const {
    std::vector<BypassRecommendation> out;
    int d = find_node(NodeKind::Defense, std::string(to_string(defense)));
    if (!d) return out;
    for (const auto& e : edges_) {
        if (e.kind != EdgeKind::Bypasses || e.to != d) continue;
        const KgNode& s = nodes_[static_cast<size_t>(e.from - 1)];
        out.push_back({s.key, edge_weight(e), e.n_pos + e.n_neg});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.weight != b.weight) return a.weight > b.weight;
        if (a.evidence != b.evidence) return a.evidence > b.evidence;
        return a.strategy_key < b.strategy_key;
    });
    if (static_cast<int>(out.size()) > top_k) out.resize(static_cast<size_t>(top_k));
    return out;
}

KnowledgeGraph::Priors KnowledgeGraph::action_priors(
    std::span<const KgActionKey> actions, std::optional<DefensePattern> current_defense,
    std::span<const std::string> categories) const {
    Priors result;
    result.values.reserve(actions.size());
    for (const auto& action : actions) {
        double bypass_factor = 1.0;
        if (current_defense) {
            auto w = lookup_weight(NodeKind::Strategy, action.strategy_key, EdgeKind::Bypasses,
                                   NodeKind::Defense,
                                   std::string(to_string(*current_defense)));
            bypass_factor = w.value_or(0.5);
            if (w) result.informed = true;
        }
        double effective = 0.5;
        if (!categories.empty()) {
            double sum = 0;
            for (const auto& cat : categories) {
                auto w = lookup_weight(NodeKind::Strategy, action.strategy_key,
                                       EdgeKind::EffectiveFor, NodeKind::Category, cat);
                sum += w.value_or(0.5);
                if (w) result.informed = true;
            }
            effective = sum / static_cast<double>(categories.size());
        }
        result.values.push_back(bypass_factor * effective);
    }
    double total = 0;
    for (double v : result.values) total += v;
    if (total <= 0) {
        double uniform = 1.0 / static_cast<double>(actions.size());
        for (double& v : result.values) v = uniform;
    } else {
        for (double& v : result.values) v /= total;
    }
    return result;
}

std::string KnowledgeGraph::to_dot() const {
    std::ostringstream out;
    out << "digraph memjack_kg {\n";
    for (const auto& n : nodes_)
        out << "  n" << n.id << " [label=\"" << to_string(n.kind) << ": " << n.key << "\"];\n";
    out.precision(3);
    for (const auto& e : edges_)
        out << "  n" << e.from << " -> n" << e.to << " [label=\"" << to_string(e.kind) << " w="
            << edge_weight(e) << " (" << e.n_pos << "/" << e.n_neg << ")\"];\n";
    out << "}\n";
    return out.str();
}

void KnowledgeGraph::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream snap(dir / "kg.snapshot");
    if (!snap) throw IoError("cannot write kg snapshot in " + dir.string());
    snap << "MEMJACK-KG 1\n";
    for (const auto& n : nodes_)
        snap << "N " << static_cast<int>(n.kind) << ' ' << percent_encode(n.key) << '\n';
    for (const auto& e : edges_) {
        const KgNode& nf = nodes_[static_cast<size_t>(e.from - 1)];
        const KgNode& nt = nodes_[static_cast<size_t>(e.to - 1)];
        snap << "G " << static_cast<int>(nf.kind) << ' ' << percent_encode(nf.key) << ' '
             << static_cast<int>(nt.kind) << ' ' << percent_encode(nt.key) << ' '
             << static_cast<int>(e.kind) << ' ' << e.n_pos << ' ' << e.n_neg << '\n';
    }
    std::ofstream journal(dir / "kg.journal", std::ios::trunc);
}

void KnowledgeGraph::load(const std::filesystem::path& dir) {
    nodes_.clear();
    edges_.clear();
    node_index_.clear();
    edge_index_.clear();

    auto ingest = [&](const std::filesystem::path& file, bool snapshot) {
        std::ifstream in(file);
        if (!in) {
            if (snapshot) throw IoError("cannot read kg snapshot: " + file.string());
            return;
        }
        std::string line;
        if (snapshot) {
            std::getline(in, line);
            if (line.rfind("MEMJACK-KG", 0) != 0)
                throw ParseError("bad kg snapshot header: " + line);
        }
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::string tag;
            ss >> tag;
            if (tag == "N") {
                int kind;
                std::string key;
                if (!(ss >> kind >> key)) throw ParseError("bad kg node record: " + line);
                upsert_node(static_cast<NodeKind>(kind), percent_decode(key));
            } else if (tag == "G") {
                int fk, tk, ek;
                long np, nn;
                std::string fkey, tkey;
                if (!(ss >> fk >> fkey >> tk >> tkey >> ek >> np >> nn))
                    throw ParseError("bad kg edge record: " + line);
                int from = upsert_node(static_cast<NodeKind>(fk), percent_decode(fkey));
                int to = upsert_node(static_cast<NodeKind>(tk), percent_decode(tkey));
                KgEdge& e = upsert_edge(from, to, static_cast<EdgeKind>(ek));
                e.n_pos += np;
                e.n_neg += nn;
            }
        }
    };
    ingest(dir / "kg.snapshot", true);
    ingest(dir / "kg.journal", false);
}

}  // namespace memjack
