#pragma once

#include <map>
#include <string>
#include <vector>

#include "memjack/orchestrator.hpp"

namespace memjack {

// Human-readable key=value campaign configuration; flags override file keys.
using KvConfig = std::map<std::string, std::string>;

KvConfig parse_kv_file(const std::string& path);
void apply_kv(CampaignConfig& config, const KvConfig& kv);

namespace cli {

// Dispatches the subcommand; returns the process exit code:
// 0 success, 1 usage error, 2 runtime/config error.
int run(const std::vector<std::string>& args);

}  // namespace cli
}  // namespace memjack
