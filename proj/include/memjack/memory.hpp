#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "memjack/embedding.hpp"

namespace memjack {

enum class IndexKind { visual = 0, strategy = 1 };

struct StrategyDescriptor {
    int angle_id = 1;
    std::string skeleton_key;
    std::string anchor_key;
    std::string goal_key;
    std::string prompt_skeleton;  // human-readable, carried into prompt context
};

struct MemoryEntry {
    int64_t id = 0;
    EmbeddingVector visual;
    EmbeddingVector goal;
    StrategyDescriptor strategy;
    double q = 0.0;          // effect value, in [0,1]
    int failure_count = 0;   // n_f
    int use_count = 0;
    int64_t created_at_round = 0;
    IndexKind kind = IndexKind::visual;
    // Cached norms (not serialized; recomputed on insert/load).
    double visual_norm = 0.0;
    double goal_norm = 0.0;
};

struct RetrievalConfig {
    double lambda = 0.3;
    double similarity_floor = 0.55;  // tau_sim
    double visual_weight = 0.5;
    double goal_weight = 0.5;
    int top_k = 5;
    double failure_decay = 0.1;  // delta
    double learning_rate = 0.2;  // beta, fixed by the update rule
    size_t capacity = 100000;    // per index
};

struct Retrieved {
    MemoryEntry entry;  // snapshot copy
    double score = 0.0;
    double sim = 0.0;
};

// Exact flat cosine index with effect-value reranking. Two indexes (visual,
// strategy) share the entry schema; the goal embedding is a second key on
// each entry. Single-writer / snapshot-reader.
class ExperienceMemory {
  public:
    // Assigns the id; runs eviction first when the index is at capacity.
    int64_t insert(MemoryEntry entry, IndexKind kind, const RetrievalConfig& config);

    std::vector<Retrieved> retrieve(const EmbeddingVector& query_visual,
                                    const EmbeddingVector& query_goal,
                                    const RetrievalConfig& config, IndexKind kind) const;

    // Q <- clamp(Q + beta (r' - Q)); failure count bumps when the round was
    // not unsafe. Returns the new Q, or -1 when the id is gone (evicted).
    double update_effect_value(IndexKind kind, int64_t id, double reward, bool round_not_unsafe,
                               const RetrievalConfig& config);

    static double effective_q(const MemoryEntry& entry, double delta);

    std::vector<int64_t> evict(IndexKind kind, const RetrievalConfig& config);

    void note_use(IndexKind kind, int64_t id);

    struct ReuseStats {
        size_t entry_count = 0;
        size_t unique_keys = 0;
        double reuse_ratio = 0.0;
    };
    ReuseStats reuse_stats(IndexKind kind) const;

    size_t size(IndexKind kind) const { return entries_[static_cast<int>(kind)].size(); }
    const std::vector<MemoryEntry>& entries(IndexKind kind) const {
        return entries_[static_cast<int>(kind)];
    }

    // Victim-response embeddings of failed rounds, for similarity hints.
    void add_failure_embedding(EmbeddingVector e) { failures_.push_back(std::move(e)); }
    const std::vector<EmbeddingVector>& failure_embeddings() const { return failures_; }

    // Journal/snapshot persistence: snapshot is the compacted state, the
    // journal holds entry records appended since; load replays the journal
    // over the snapshot.
    void save(const std::filesystem::path& dir) const;
    void load(const std::filesystem::path& dir);
    void append_journal(const std::filesystem::path& dir, const MemoryEntry& entry) const;

    mutable size_t retrieve_calls = 0;  // instrumentation for ablation tests

  private:
    std::vector<MemoryEntry>& bucket(IndexKind kind) { return entries_[static_cast<int>(kind)]; }
    const std::vector<MemoryEntry>& bucket(IndexKind kind) const {
        return entries_[static_cast<int>(kind)];
    }
    MemoryEntry* find(IndexKind kind, int64_t id);
    std::vector<int64_t> evict_to(IndexKind kind, const RetrievalConfig& config, size_t target);

    std::vector<MemoryEntry> entries_[2];  // each kept sorted by id
    std::vector<EmbeddingVector> failures_;
    int64_t next_id_[2] = {1, 1};
};

std::string format_memory_record(const MemoryEntry& entry);
MemoryEntry parse_memory_record(const std::string& line);

}  // namespace memjack
