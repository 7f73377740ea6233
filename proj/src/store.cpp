#include "memjack/store.hpp"

#include <fstream>
#include <sstream>

#include "memjack/errors.hpp"
#include "memjack/text.hpp"

namespace memjack {

using nlohmann::json;

namespace {

std::string strategy_log_value(const std::string& source) {
    // Log vocabulary mirrors the trace schema.
    if (source == "generated") return "visual_semantic_camouflage";
    return source;  // corrected_from_reflection | memory_reuse
}

std::string strategy_from_log(const std::string& value) {
    if (value == "visual_semantic_camouflage") return "generated";
    return value;
}

const json& require(const json& doc, const char* field) {
    auto it = doc.find(field);
    if (it == doc.end())
        throw ParseError(std::string("trajectory log is missing field '") + field + "'", field);
    return *it;
}

}  // namespace

json trajectory_to_json(const Trajectory& t, Redaction redaction) {
    json va{{"anchor", t.analysis.anchor},
            {"anchor_type", std::string(to_string(t.analysis.type))},
            {"matched_categories", t.analysis.matched_categories},
            {"match_score", t.analysis.match_score},
            {"attack_goal", t.analysis.attack_goal},
            {"replan",
             json{{"previous_anchor", t.replan.previous_anchor},
                  {"current_anchor", t.replan.current_anchor},
                  {"replan_count", t.replan.replan_count}}}};

    json rounds = json::array();
    for (const auto& r : t.rounds) {
        json round{{"round", r.round_index},
                   {"generated_prompt", r.prompt},
                   {"anchor", r.anchor},
                   {"strategy", strategy_log_value(r.strategy_source)},
                   {"safety_label", std::string(to_string(r.verdict.label))},
                   {"judge_score", r.risk},
                   {"angle", r.angle_id},
                   {"refusal", r.verdict.refusal_detected},
                   {"severity_tier", std::string(to_string(r.verdict.severity))},
                   {"rho", r.rho},
                   {"response_digest", r.response_digest}};
        if (r.defense) round["defense_pattern"] = std::string(to_string(*r.defense));
        if (redaction == Redaction::full) round["response"] = r.response_text;
        rounds.push_back(std::move(round));
    }

    return json{{"schemaVersion", kTrajectorySchemaVersion},
                {"sampleId", t.sample_id},
                {"vulnerability_analysis", std::move(va)},
                {"rounds", std::move(rounds)},
                {"total_rounds", t.total_rounds},
                {"trace_status", t.status}};
}

Trajectory trajectory_from_json(const json& doc) {
    int version = require(doc, "schemaVersion").get<int>();
    if (version != kTrajectorySchemaVersion)
        throw SchemaVersionError("unsupported trajectory schema version " +
                                 std::to_string(version));

    Trajectory t;
    t.sample_id = require(doc, "sampleId").get<std::string>();
    t.total_rounds = require(doc, "total_rounds").get<int>();
    t.status = require(doc, "trace_status").get<std::string>();
    if (t.status != "success" && t.status != "failure" && t.status != "error")
        throw ValidationError("trace_status must be success|failure|error, got " + t.status);

    const json& va = require(doc, "vulnerability_analysis");
    t.analysis.anchor = require(va, "anchor").get<std::string>();
    if (auto at = anchor_type_from(require(va, "anchor_type").get<std::string>()))
        t.analysis.type = *at;
    else
        throw ValidationError("unknown anchor_type");
    t.analysis.matched_categories =
        require(va, "matched_categories").get<std::vector<std::string>>();
    t.analysis.match_score = require(va, "match_score").get<double>();
    if (t.analysis.match_score < 0.0 || t.analysis.match_score > 1.0)
        throw ValidationError("match_score out of [0,1]");
    t.analysis.attack_goal = require(va, "attack_goal").get<std::string>();
    const json& replan = require(va, "replan");
    t.replan.previous_anchor = require(replan, "previous_anchor").get<std::string>();
    t.replan.current_anchor = require(replan, "current_anchor").get<std::string>();
    t.replan.replan_count = require(replan, "replan_count").get<int>();

    for (const json& r : require(doc, "rounds")) {
        AttackRound round;
        round.round_index = require(r, "round").get<int>();
        round.prompt = require(r, "generated_prompt").get<std::string>();
        round.anchor = require(r, "anchor").get<std::string>();
        round.strategy_source = strategy_from_log(require(r, "strategy").get<std::string>());
        auto label = safety_label_from(require(r, "safety_label").get<std::string>());
        if (!label) throw ValidationError("unknown safety_label");
        round.verdict.label = *label;
        round.risk = require(r, "judge_score").get<double>();
        if (round.risk < 0.0 || round.risk > 1.0)
            throw ValidationError("judge_score out of [0,1]: " + std::to_string(round.risk));
        if (r.contains("angle")) round.angle_id = r["angle"].get<int>();
        if (r.contains("refusal")) round.verdict.refusal_detected = r["refusal"].get<bool>();
        if (r.contains("severity_tier"))
            if (auto tier = severity_tier_from(r["severity_tier"].get<std::string>()))
                round.verdict.severity = *tier;
        if (r.contains("rho")) round.rho = r["rho"].get<double>();
        if (r.contains("response_digest"))
            round.response_digest = r["response_digest"].get<std::string>();
        if (r.contains("response")) round.response_text = r["response"].get<std::string>();
        if (r.contains("defense_pattern")) {
            auto d = defense_pattern_from(r["defense_pattern"].get<std::string>());
            if (!d) throw ValidationError("unknown defense_pattern");
            round.defense = *d;
        }
        t.rounds.push_back(std::move(round));
    }
    if (t.total_rounds != static_cast<int>(t.rounds.size()))
        throw ValidationError("total_rounds does not match the round list");
    return t;
}

std::filesystem::path write_trajectory(const std::filesystem::path& dir, const Trajectory& t,
                                       Redaction redaction, const std::string& timestamp_tag) {
    std::filesystem::create_directories(dir);
    std::string name = "trace_" + t.status + "_" + t.sample_id + "_" + timestamp_tag + ".json";
    std::filesystem::path path = dir / name;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write trajectory file: " + path.string());
    out << trajectory_to_json(t, redaction).dump(2) << '\n';
    return path;
}

Trajectory read_trajectory(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read trajectory file: " + path.string());
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded())
        throw ParseError("trajectory file is not valid JSON: " + path.string());
    return trajectory_from_json(doc);
}

namespace {

struct ReportTable {
    std::string title;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(4);
    out << v;
    return out.str();
}

std::string render_tables(const std::vector<ReportTable>& tables, const std::string& format) {
    std::ostringstream out;
    if (format == "csv") {
        for (const auto& t : tables) {
            out << "# " << t.title << '\n';
            out << join(t.header, ",") << '\n';
            for (const auto& row : t.rows) out << join(row, ",") << '\n';
        }
        return out.str();
    }
    if (format == "svg-plot") {
        // Static bar chart per table with the data table embedded as text.
        int width = 640;
        int row_h = 18;
        int y = 20;
        std::ostringstream body;
        for (const auto& t : tables) {
            body << "<text x=\"10\" y=\"" << y << "\" font-weight=\"bold\">" << t.title
                 << "</text>\n";
            y += row_h;
            double max_v = 1e-12;
            std::vector<double> values(t.rows.size(), 0.0);
            for (size_t i = 0; i < t.rows.size(); ++i) {
                if (t.rows[i].size() >= 2) {
                    try {
                        values[i] = std::stod(t.rows[i].back());
                    } catch (...) {
                    }
                }
                max_v = std::max(max_v, values[i]);
            }
            for (size_t i = 0; i < t.rows.size(); ++i) {
                double w = 300.0 * values[i] / max_v;
                body << "<rect x=\"220\" y=\"" << (y - 12) << "\" width=\"" << w
                     << "\" height=\"12\" fill=\"#4477aa\"/>\n";
                body << "<text x=\"10\" y=\"" << y << "\">" << t.rows[i].front() << "</text>\n";
                body << "<text x=\"530\" y=\"" << y << "\">" << t.rows[i].back() << "</text>\n";
                y += row_h;
            }
            y += row_h;
        }
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
            << (y + 10) << "\" font-family=\"monospace\" font-size=\"12\">\n"
            << body.str() << "</svg>\n";
        return out.str();
    }
    // plain table
    for (const auto& t : tables) {
        out << "== " << t.title << " ==\n";
        out << join(t.header, "  ") << '\n';
        for (const auto& row : t.rows) out << join(row, "  ") << '\n';
        out << '\n';
    }
    return out.str();
}

}  // namespace

std::map<std::string, double> experience_bucket_asr(std::span<const Trajectory> trajectories) {
    // Replays entry accumulation in trajectory order: each round contributes
    // one visual entry for its anchor; an image's bucket is the count for its
    // primary anchor before the image was attacked.
    std::map<std::string, long> entries_per_anchor;
    std::map<std::string, std::pair<size_t, size_t>> buckets;  // name -> (success, total)
    auto bucket_name = [](long n) {
        if (n <= 4) return std::string("1-4");
        if (n <= 12) return std::string("5-12");
        if (n <= 20) return std::string("13-20");
        return std::string("20+");
    };
    for (const auto& t : trajectories) {
        std::string key = normalize_key(t.analysis.anchor);
        long before = entries_per_anchor[key] + 1;  // counting this image's first entry
        auto& b = buckets[bucket_name(before)];
        b.second++;
        if (t.status == "success") b.first++;
        for (const auto& r : t.rounds) entries_per_anchor[normalize_key(r.anchor)]++;
    }
    std::map<std::string, double> out;
    for (const auto& [name, counts] : buckets)
        out[name] = counts.second
                        ? static_cast<double>(counts.first) / static_cast<double>(counts.second)
                        : 0.0;
    return out;
}

std::string report(std::span<const Trajectory> trajectories, const ReportSpec& spec,
                   const ExperienceMemory* memory) {
    if (trajectories.empty()) throw ConfigError("report over an empty trajectory set", "input");
    CampaignStats stats = compute_stats(trajectories, spec.window);
    std::vector<ReportTable> tables;

    auto wants = [&](const std::string& m) {
        return std::find(spec.metrics.begin(), spec.metrics.end(), m) != spec.metrics.end();
    };

    if (wants("asr")) {
        ReportTable t{"asr (window " + std::to_string(spec.window) + ")",
                      {"metric", "value"},
                      {{"images", std::to_string(stats.n)},
                       {"successes", std::to_string(stats.success_count)},
                       {"asr", fmt(stats.asr)}}};
        if (!stats.asr_moving.empty())
            t.rows.push_back({"asr_moving_last", fmt(stats.asr_moving.back())});
        tables.push_back(std::move(t));
    }
    if (wants("rounds")) {
        ReportTable t{"rounds-to-success", {"metric", "value"}, {}};
        t.rows.push_back({"mean_rounds_to_success", fmt(stats.mean_rounds_to_success)});
        if (!stats.rounds_moving.empty())
            t.rows.push_back({"rounds_moving_last", fmt(stats.rounds_moving.back())});
        tables.push_back(std::move(t));
    }
    if (wants("angles")) {
        ReportTable t{"attack angle usage", {"angle", "share"}, {}};
        for (const auto& [angle, share] : stats.angle_usage)
            t.rows.push_back({std::string(angle_name(angle)), fmt(share)});
        tables.push_back(std::move(t));
    }
    if (wants("defenses")) {
        ReportTable t{"defense pattern distribution", {"pattern", "share"}, {}};
        for (const auto& [pattern, share] : stats.defense_histogram)
            t.rows.push_back({pattern, fmt(share)});
        tables.push_back(std::move(t));
    }
    if (wants("reuse") && memory) {
        ReportTable t{"memory reuse", {"index", "entries", "unique_keys", "reuse_ratio"}, {}};
        for (IndexKind kind : {IndexKind::visual, IndexKind::strategy}) {
            auto s = memory->reuse_stats(kind);
            t.rows.push_back({kind == IndexKind::visual ? "visual" : "strategy",
                              std::to_string(s.entry_count), std::to_string(s.unique_keys),
                              fmt(s.reuse_ratio)});
        }
        tables.push_back(std::move(t));
    }
    if (wants("experienceBuckets")) {
        ReportTable t{"asr by anchor experience", {"bucket", "asr"}, {}};
        for (const auto& [bucket, value] : experience_bucket_asr(trajectories))
            t.rows.push_back({bucket, fmt(value)});
        tables.push_back(std::move(t));
    }
    return render_tables(tables, spec.format);
}

ShardResult export_shards(std::span<const Trajectory> trajectories, size_t shard_size,
                          const std::string& label_filter, const std::filesystem::path& out_dir,
                          Redaction redaction) {
    if (shard_size < 1) throw ConfigError("shard size must be >= 1", "shardSize");
    std::filesystem::create_directories(out_dir);

    json tuples = json::array();
    ShardResult result;
    for (const auto& t : trajectories) {
        for (const auto& r : t.rounds) {
            std::string label(to_string(r.verdict.label));
            if (label_filter != "all" && !label_filter.empty() && label != label_filter)
                continue;
            json tuple{{"image", t.sample_id},
                       {"prompt", r.prompt},
                       {"safety_label", label},
                       {"anchor", r.anchor},
                       {"angle", r.angle_id},
                       {"risk_score", r.risk},
                       {"strategy", strategy_log_value(r.strategy_source)}};
            if (r.defense) tuple["defense_pattern"] = std::string(to_string(*r.defense));
            if (redaction == Redaction::full)
                tuple["response"] = r.response_text;
            else
                tuple["response_digest"] = r.response_digest;
            tuples.push_back(std::move(tuple));
            result.label_counts[label]++;
        }
    }
    result.tuple_count = tuples.size();

    size_t shard_index = 0;
    for (size_t start = 0; start < tuples.size(); start += shard_size) {
        json shard = json::array();
        for (size_t i = start; i < std::min(tuples.size(), start + shard_size); ++i)
            shard.push_back(tuples[i]);
        std::ostringstream name;
        name << "shard_" << std::setw(5) << std::setfill('0') << shard_index++ << ".json";
        std::filesystem::path path = out_dir / name.str();
        std::ofstream out(path);
        if (!out) throw IoError("cannot write shard: " + path.string());
        out << shard.dump(2) << '\n';
        result.shard_paths.push_back(path.string());
    }

    json manifest{{"shards", result.shard_paths},
                  {"tuple_count", result.tuple_count},
                  {"label_counts", result.label_counts},
                  {"label_filter", label_filter.empty() ? "all" : label_filter}};
    std::filesystem::path mpath = out_dir / "shards_manifest.json";
    std::ofstream mout(mpath);
    if (!mout) throw IoError("cannot write shard manifest: " + mpath.string());
    mout << manifest.dump(2) << '\n';
    result.manifest_path = mpath.string();
    return result;
}

}  // namespace memjack
