#include "memjack/memory.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "memjack/errors.hpp"
#include "memjack/text.hpp"

namespace memjack {

MemoryEntry* ExperienceMemory::find(IndexKind kind, int64_t id) {
    auto& entries = bucket(kind);
    auto it = std::lower_bound(entries.begin(), entries.end(), id,
                               [](const MemoryEntry& e, int64_t v) { return e.id < v; });
    if (it == entries.end() || it->id != id) return nullptr;
    return &*it;
}

int64_t ExperienceMemory::insert(MemoryEntry entry, IndexKind kind,
                                 const RetrievalConfig& config) {
    check_dim(entry.visual, entry.goal);
    auto& entries = bucket(kind);
    if (!entries.empty()) check_dim(entries.front().visual, entry.visual);
    if (entries.size() >= config.capacity && config.capacity > 0)
        evict_to(kind, config, config.capacity - 1);
    entry.id = next_id_[static_cast<int>(kind)]++;
    entry.kind = kind;
    entry.visual_norm = l2_norm(entry.visual);
    entry.goal_norm = l2_norm(entry.goal);
    int64_t id = entry.id;
    entries.push_back(std::move(entry));
    return id;
}

std::vector<Retrieved> ExperienceMemory::retrieve(const EmbeddingVector& query_visual,
                                                  const EmbeddingVector& query_goal,
                                                  const RetrievalConfig& config,
                                                  IndexKind kind) const {
    ++retrieve_calls;
    const auto& entries = bucket(kind);
    struct Scored {
        size_t idx;
        double sim;
        double qeff;
    };
    const double qv_norm = l2_norm(query_visual);
    const double qg_norm = l2_norm(query_goal);
    std::vector<Scored> surviving;
    for (size_t i = 0; i < entries.size(); ++i) {
        const MemoryEntry& e = entries[i];
        double cv = (qv_norm == 0 || e.visual_norm == 0)
                        ? 0.0
                        : dot(query_visual, e.visual) / (qv_norm * e.visual_norm);
        double cg = (qg_norm == 0 || e.goal_norm == 0)
                        ? 0.0
                        : dot(query_goal, e.goal) / (qg_norm * e.goal_norm);
        double sim = config.visual_weight * cv + config.goal_weight * cg;
        if (sim < config.similarity_floor) continue;
        surviving.push_back({i, sim, effective_q(entries[i], config.failure_decay)});
    }
    if (surviving.empty()) return {};

    double qmin = surviving.front().qeff, qmax = surviving.front().qeff;
    for (const auto& s : surviving) {
        qmin = std::min(qmin, s.qeff);
        qmax = std::max(qmax, s.qeff);
    }

    std::vector<Retrieved> out;
    out.reserve(surviving.size());
    for (const auto& s : surviving) {
        double qhat = (qmax - qmin) < 1e-12 ? 0.5 : (s.qeff - qmin) / (qmax - qmin);
        Retrieved r;
        r.entry = entries[s.idx];
        r.sim = s.sim;
        r.score = (1.0 - config.lambda) * s.sim + config.lambda * qhat;
        out.push_back(std::move(r));
    }
    std::sort(out.begin(), out.end(), [](const Retrieved& a, const Retrieved& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.sim != b.sim) return a.sim > b.sim;
        return a.entry.id < b.entry.id;
    });
    if (static_cast<int>(out.size()) > config.top_k) out.resize(static_cast<size_t>(config.top_k));
    return out;
}

double ExperienceMemory::update_effect_value(IndexKind kind, int64_t id, double reward,
                                             bool round_not_unsafe,
                                             const RetrievalConfig& config) {
    MemoryEntry* e = find(kind, id);
    if (!e) return -1.0;
    e->q = std::clamp(e->q + config.learning_rate * (reward - e->q), 0.0, 1.0);
    if (round_not_unsafe) e->failure_count++;
    return e->q;
}

double ExperienceMemory::effective_q(const MemoryEntry& entry, double delta) {
    return entry.q / (1.0 + entry.failure_count * delta);
}

std::vector<int64_t> ExperienceMemory::evict(IndexKind kind, const RetrievalConfig& config) {
    return evict_to(kind, config, config.capacity);
}

std::vector<int64_t> ExperienceMemory::evict_to(IndexKind kind, const RetrievalConfig& config,
                                                size_t target) {
    auto& entries = bucket(kind);
    std::vector<int64_t> removed;
    while (entries.size() > target && !entries.empty()) {
        size_t worst = 0;
        for (size_t i = 1; i < entries.size(); ++i) {
            double qa = effective_q(entries[i], config.failure_decay);
            double qb = effective_q(entries[worst], config.failure_decay);
            if (qa < qb ||
                (qa == qb && (entries[i].use_count < entries[worst].use_count ||
                              (entries[i].use_count == entries[worst].use_count &&
                               entries[i].created_at_round < entries[worst].created_at_round))))
                worst = i;
        }
        removed.push_back(entries[worst].id);
        entries.erase(entries.begin() + static_cast<long>(worst));
    }
    return removed;
}

void ExperienceMemory::note_use(IndexKind kind, int64_t id) {
    if (MemoryEntry* e = find(kind, id)) e->use_count++;
}

ExperienceMemory::ReuseStats ExperienceMemory::reuse_stats(IndexKind kind) const {
    const auto& entries = bucket(kind);
    std::set<std::pair<std::string, std::string>> keys;
    for (const auto& e : entries) keys.insert({e.strategy.anchor_key, e.strategy.goal_key});
    ReuseStats s;
    s.entry_count = entries.size();
    s.unique_keys = keys.size();
    s.reuse_ratio = keys.empty() ? 0.0
                                 : static_cast<double>(s.entry_count) /
                                       static_cast<double>(s.unique_keys);
    return s;
}

std::string format_memory_record(const MemoryEntry& e) {
    std::ostringstream out;
    out.precision(17);
    out << "E " << (e.kind == IndexKind::visual ? "visual" : "strategy") << ' ' << e.id << ' '
        << percent_encode(e.strategy.anchor_key) << ' ' << percent_encode(e.strategy.goal_key)
        << ' ' << e.strategy.angle_id << ' ' << percent_encode(e.strategy.skeleton_key) << ' '
        << percent_encode(e.strategy.prompt_skeleton) << ' ' << e.q << ' ' << e.failure_count
        << ' ' << e.use_count << ' ' << e.created_at_round << ' ' << e.visual.dim();
    for (double v : e.visual.values) out << ' ' << v;
    for (double v : e.goal.values) out << ' ' << v;
    return out.str();
}

MemoryEntry parse_memory_record(const std::string& line) {
    std::istringstream ss(line);
    std::string tag, kind, anchor, goal, skeleton, prompt;
    MemoryEntry e;
    int dim = 0;
    if (!(ss >> tag >> kind >> e.id >> anchor >> goal >> e.strategy.angle_id >> skeleton >>
          prompt >> e.q >> e.failure_count >> e.use_count >> e.created_at_round >> dim) ||
        tag != "E")
        throw ParseError("bad memory record: " + line);
    e.kind = kind == "strategy" ? IndexKind::strategy : IndexKind::visual;
    e.strategy.anchor_key = percent_decode(anchor);
    e.strategy.goal_key = percent_decode(goal);
    e.strategy.skeleton_key = percent_decode(skeleton);
    e.strategy.prompt_skeleton = percent_decode(prompt);
    e.visual.values.resize(static_cast<size_t>(dim));
    e.goal.values.resize(static_cast<size_t>(dim));
    for (auto& v : e.visual.values)
        if (!(ss >> v)) throw ParseError("truncated memory record: " + line);
    for (auto& v : e.goal.values)
        if (!(ss >> v)) throw ParseError("truncated memory record: " + line);
    return e;
}

void ExperienceMemory::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream snap(dir / "memory.snapshot");
    if (!snap) throw IoError("cannot write memory snapshot in " + dir.string());
    snap << "MEMJACK-MEMORY 1\n";
    for (int k = 0; k < 2; ++k)
        for (const auto& e : entries_[k]) snap << format_memory_record(e) << '\n';
    snap << "F " << failures_.size() << '\n';
    snap.precision(17);
    for (const auto& f : failures_) {
        snap << "FV " << f.dim();
        for (double v : f.values) snap << ' ' << v;
        snap << '\n';
    }
    // Fresh snapshot compacts the journal away.
    std::ofstream journal(dir / "memory.journal", std::ios::trunc);
}

void ExperienceMemory::append_journal(const std::filesystem::path& dir,
                                      const MemoryEntry& entry) const {
    std::ofstream journal(dir / "memory.journal", std::ios::app);
    if (!journal) throw IoError("cannot append memory journal in " + dir.string());
    journal << format_memory_record(entry) << '\n';
}

void ExperienceMemory::load(const std::filesystem::path& dir) {
    entries_[0].clear();
    entries_[1].clear();
    failures_.clear();
    next_id_[0] = next_id_[1] = 1;

    auto ingest = [&](const std::filesystem::path& file, bool snapshot) {
        std::ifstream in(file);
        if (!in) {
            if (snapshot) throw IoError("cannot read memory snapshot: " + file.string());
            return;
        }
        std::string line;
        if (snapshot) {
            std::getline(in, line);
            if (line.rfind("MEMJACK-MEMORY", 0) != 0)
                throw ParseError("bad memory snapshot header: " + line);
        }
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (line[0] == 'F') {
                if (line.rfind("FV ", 0) == 0) {
                    std::istringstream ss(line.substr(3));
                    int dim = 0;
                    ss >> dim;
                    EmbeddingVector f(dim);
                    for (auto& v : f.values) ss >> v;
                    failures_.push_back(std::move(f));
                }
                continue;
            }
            MemoryEntry e = parse_memory_record(line);
            e.visual_norm = l2_norm(e.visual);
            e.goal_norm = l2_norm(e.goal);
            int k = static_cast<int>(e.kind);
            next_id_[k] = std::max(next_id_[k], e.id + 1);
            // Replay semantics: a journal record with a known id replaces the
            // snapshot state of that entry.
            if (MemoryEntry* existing = find(e.kind, e.id))
                *existing = std::move(e);
            else
                entries_[k].push_back(std::move(e));
        }
    };
    ingest(dir / "memory.snapshot", true);
    ingest(dir / "memory.journal", false);
}

}  // namespace memjack
