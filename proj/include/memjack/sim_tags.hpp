#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "memjack/labels.hpp"

namespace memjack {

// Machine-readable tags carried by sim fixtures. Live responses never carry
// these; they exist so classification and judging tests have ground truth.
std::map<std::string, std::string> parse_sim_tag(std::string_view text, std::string_view name);
std::string make_meta_tag(const std::string& anchor_key, const std::string& category,
                          int angle_id);
std::optional<DefensePattern> fixture_defense_tag(std::string_view text);

}  // namespace memjack
