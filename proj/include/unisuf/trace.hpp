#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "unisuf/round_engine.hpp"
#include "unisuf/subproblems.hpp"

namespace unisuf {

struct TraceHeader {
    int version = 1;
    std::string backend;
    std::size_t digest_bytes = 32;
    std::size_t sym_key_bytes = 32;
    std::uint64_t seed = 0;
    std::uint64_t eta = 0;
};

// A round and the sub-problems it was scheduled to run.
struct RoundRecord {
    UpdateRoundId round;
    std::vector<SubProblem> plan;
};

struct MaterialRecord {
    Digest digest;
    MaterialKind kind;
    std::string origin;
    std::uint64_t round_nonce = 0;  // 0 for setup material
};

struct StatusRecord {
    std::uint64_t time = 0;
    UpdateRoundId round;
    std::string entity;
    std::string text;
};

// Attacker knowledge at the end of one sub-problem, next to the secrets that
// must stay out of its closure.
struct SecrecyRecord {
    UpdateRoundId round;
    SubProblem sub_problem;
    std::vector<Term> knowledge;
    std::vector<std::pair<std::string, Term>> secrets;
};

using TraceRecord = std::variant<RoundRecord, MaterialRecord, HandlingEvent, StatusRecord, SecrecyRecord>;

// Label used for lifecycle records. Halt marks a timely stop of an entity's
// round, expire a stop forced by the round deadline.
inline constexpr std::string_view kHaltLabel = "halt";
inline constexpr std::string_view kExpireLabel = "expire";

struct Trace {
    TraceHeader header;
    std::vector<TraceRecord> records;

    std::string to_jsonl() const;
    static Trace from_jsonl(std::string_view text);
};

}  // namespace unisuf
