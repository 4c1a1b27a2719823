#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "unisuf/crypto.hpp"
#include "unisuf/trace.hpp"

namespace unisuf {

enum class Requirement { R1 = 1, R2, R3, R4, R5, R6 };

std::string requirement_name(Requirement r);
std::optional<Requirement> parse_requirement(std::string_view s);
const std::vector<Requirement>& all_requirements();

enum class VerdictStatus { Pass, Fail };

struct Verdict {
    Requirement requirement = Requirement::R1;
    std::string sub_problem;
    VerdictStatus status = VerdictStatus::Pass;
    std::string witness;  // empty on Pass
    std::string detail;   // "late" for rounds that ended at their deadline

    bool pass() const { return status == VerdictStatus::Pass; }
    std::string to_json() const;
};

using Registry = std::map<std::string, MaterialRecord>;  // digest hex -> record

// Each check takes the events it needs already filtered; verify_trace does
// the filtering for whole traces.

// Events of one round. With `correspondence_only` (aborted or expired
// rounds) a label need not appear, but when it does its predecessors must
// appear before it.
Verdict check_partial_order(const std::vector<HandlingEvent>& round_events, const SubProblemSpec& spec,
                            bool correspondence_only = false);
// Events of every round.
Verdict check_inter_round(const std::vector<HandlingEvent>& events, const SubProblemSpec& spec);
// Events of one round.
Verdict check_intra_round(const std::vector<HandlingEvent>& round_events, const SubProblemSpec& spec);
// Events of one round.
Verdict check_material_integrity(const std::vector<HandlingEvent>& round_events, const Registry& registry,
                                 const SubProblemSpec& spec);
Verdict check_confidentiality(const std::vector<Term>& knowledge,
                              const std::vector<std::pair<std::string, Term>>& secrets, const CryptoBackend& crypto,
                              const SubProblemSpec& spec);
// Events (including lifecycle records) of one round.
Verdict check_termination(const std::vector<HandlingEvent>& round_events, const UpdateRoundId& round);

// One verdict per (requirement, planned sub-problem), requirement-major
// within each sub-problem, in protocol order. Rounds that planned a
// sub-problem all contribute to its verdict.
std::vector<Verdict> verify_trace(const Trace& trace, const std::set<Requirement>& checks = {});

std::string report_jsonl(const std::vector<Verdict>& verdicts);
bool all_pass(const std::vector<Verdict>& verdicts);

}  // namespace unisuf
