#pragma once

#include <string>
#include <vector>

#include "unisuf/net_sim.hpp"

namespace unisuf {

struct EnumerationOptions {
    std::uint64_t seed = 42;
    std::string backend = "sodium";
    std::uint64_t eta = 8;
    std::size_t max_actions = 4;
};

struct EnumerationResult {
    std::size_t scripts = 0;
    std::size_t secrets_checked = 0;
    std::vector<std::string> leaks;  // "<secret> after <script>"
    double seconds = 0;
};

// Insecure-link messages of the stream-to-ECU sub-problem with their
// direction, in protocol order.
const std::vector<std::pair<std::string, std::string>>& stream_link_messages();

// Every script that picks at most `max_actions` of those messages and acts
// on each chosen one exactly once with drop, substitute (an earlier round's
// copy), inject (an earlier round's copy next to the original), or delay by
// 1 or by eta. Per-message actions are applied in protocol order.
std::vector<std::vector<AttackAction>> stream_scripts(std::size_t max_actions, std::uint64_t eta);

// Runs an honest first release cycle and the second cycle up to the
// stream-to-ECU sub-problem, then finishes the second vehicle round under
// each script and checks the sub-problem's secrets against the attacker's
// closure.
EnumerationResult enumerate_stream_scripts(const EnumerationOptions& options);

}  // namespace unisuf
