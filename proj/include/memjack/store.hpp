#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "memjack/memory.hpp"
#include "memjack/orchestrator.hpp"

namespace memjack {

inline constexpr int kTrajectorySchemaVersion = 1;

enum class Redaction { omit_responses, full };

nlohmann::json trajectory_to_json(const Trajectory& trajectory, Redaction redaction);
Trajectory trajectory_from_json(const nlohmann::json& doc);

// Writes trace_<status>_<sampleId>_<timestamp>.json under dir; the timestamp
// tag is caller-supplied so deterministic campaigns can replay byte-identical
// trees.
std::filesystem::path write_trajectory(const std::filesystem::path& dir,
                                       const Trajectory& trajectory, Redaction redaction,
                                       const std::string& timestamp_tag);
Trajectory read_trajectory(const std::filesystem::path& path);

struct ReportSpec {
    std::vector<std::string> metrics{"asr", "rounds", "angles", "defenses"};
    int window = 500;
    std::string format = "table";  // table | csv | svg-plot
};

std::string report(std::span<const Trajectory> trajectories, const ReportSpec& spec,
                   const ExperienceMemory* memory = nullptr);

struct ShardResult {
    std::vector<std::string> shard_paths;
    std::map<std::string, size_t> label_counts;
    std::string manifest_path;
    size_t tuple_count = 0;
};

// Dataset shards of (image, prompt, response, label) tuples with attack
// metadata; label_filter is one of safe|controversial|unsafe|all.
ShardResult export_shards(std::span<const Trajectory> trajectories, size_t shard_size,
                          const std::string& label_filter, const std::filesystem::path& out_dir,
                          Redaction redaction);

// Experience-bucket ASR: per-anchor accumulated entry counts at attack time,
// bucketed 1-4, 5-12, 13-20, 20+.
std::map<std::string, double> experience_bucket_asr(std::span<const Trajectory> trajectories);

}  // namespace memjack
