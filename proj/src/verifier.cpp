#include "unisuf/verifier.hpp"

#include <algorithm>

#include <json.hpp>

#include "unisuf/adversary.hpp"
#include "unisuf/error.hpp"

namespace unisuf {

std::string requirement_name(Requirement r) { return "R" + std::to_string(static_cast<int>(r)); }

std::optional<Requirement> parse_requirement(std::string_view s) {
    for (Requirement r : all_requirements())
        if (requirement_name(r) == s) return r;
    return std::nullopt;
}

const std::vector<Requirement>& all_requirements() {
    static const std::vector<Requirement> all = {Requirement::R1, Requirement::R2, Requirement::R3,
                                                 Requirement::R4, Requirement::R5, Requirement::R6};
    return all;
}

std::string Verdict::to_json() const {
    nlohmann::json j;
    j["requirement"] = requirement_name(requirement);
    j["sub_problem"] = sub_problem;
    j["status"] = pass() ? "Pass" : "Fail";
    if (!witness.empty()) j["witness"] = witness;
    if (!detail.empty()) j["detail"] = detail;
    return j.dump();
}

namespace {

Verdict pass(Requirement r, const SubProblemSpec& spec) { return Verdict{r, std::string(spec.name), VerdictStatus::Pass, {}, {}}; }

Verdict fail_with(Requirement r, const SubProblemSpec& spec, std::string witness) {
    return Verdict{r, std::string(spec.name), VerdictStatus::Fail, std::move(witness), {}};
}

// Label index of an event within `spec`, or 0.
int label_index(const HandlingEvent& e, const SubProblemSpec& spec) {
    auto p = parse_label(e.label);
    return p && p->first->id == spec.id ? p->second : 0;
}

bool lifecycle(const std::string& label) {
    return label == kHaltLabel || label == kExpireLabel ||
           (label.size() > 6 && label.compare(label.size() - 6, 6, ".abort") == 0);
}

std::string event_at(const HandlingEvent& e) {
    return e.label + "@" + std::to_string(e.time) + " by " + e.entity + " in " + e.round.describe();
}

std::vector<std::string> sorted_refs(const HandlingEvent& e, const std::function<bool(MaterialKind)>& keep) {
    std::vector<std::string> out;
    for (const auto& m : e.materials)
        if (keep(m.kind)) out.push_back(m.encode());
    std::sort(out.begin(), out.end());
    return out;
}

std::string join(const std::vector<std::string>& v) {
    std::string s = "{";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s + "}";
}

std::string origin_role(const std::string& origin) { return origin.substr(0, origin.find('[')); }

}  // namespace

Verdict check_partial_order(const std::vector<HandlingEvent>& round_events, const SubProblemSpec& spec,
                            bool correspondence_only) {
    std::map<int, std::uint64_t> first;
    for (const auto& e : round_events) {
        int i = label_index(e, spec);
        if (i && !first.count(i)) first[i] = e.time;
    }
    if (!correspondence_only) {
        for (int i = 1; i <= spec.label_count(); ++i)
            if (!first.count(i)) return fail_with(Requirement::R5, spec, "unreachable " + spec.label(i));
    }
    for (auto [i, j] : spec.order) {
        auto fj = first.find(j);
        if (fj == first.end()) continue;
        auto fi = first.find(i);
        if (fi == first.end())
            return fail_with(Requirement::R5, spec, "(" + spec.label(j) + " without " + spec.label(i) + ")");
        if (fi->second >= fj->second)
            return fail_with(Requirement::R5, spec, "(" + spec.label(j) + "," + spec.label(i) + ")");
    }
    return pass(Requirement::R5, spec);
}

Verdict check_inter_round(const std::vector<HandlingEvent>& events, const SubProblemSpec& spec) {
    std::map<std::pair<std::string, std::vector<std::string>>, const HandlingEvent*> seen;
    auto keep = [&](MaterialKind k) { return !round_agnostic(k, spec.stage); };
    for (const auto& e : events) {
        if (!label_index(e, spec)) continue;
        auto key = std::make_pair(e.label, sorted_refs(e, keep));
        if (key.second.empty()) continue;
        auto [it, fresh] = seen.emplace(key, &e);
        if (!fresh && it->second->round != e.round)
            return fail_with(Requirement::R3, spec,
                             e.label + " " + join(key.second) + " in " + it->second->round.describe() + " and " +
                                 e.round.describe());
    }
    return pass(Requirement::R3, spec);
}

Verdict check_intra_round(const std::vector<HandlingEvent>& round_events, const SubProblemSpec& spec) {
    std::map<std::pair<std::string, std::vector<std::string>>, const HandlingEvent*> seen;
    for (const auto& e : round_events) {
        if (!label_index(e, spec)) continue;
        auto key = std::make_pair(e.label, sorted_refs(e, [](MaterialKind) { return true; }));
        auto [it, fresh] = seen.emplace(key, &e);
        if (!fresh && it->second->round == e.round)
            return fail_with(Requirement::R4, spec,
                             "duplicate " + e.label + " " + join(key.second) + " at " +
                                 std::to_string(it->second->time) + " and " + std::to_string(e.time));
    }
    return pass(Requirement::R4, spec);
}

Verdict check_material_integrity(const std::vector<HandlingEvent>& round_events, const Registry& registry,
                                 const SubProblemSpec& spec) {
    std::map<std::pair<std::uint64_t, MaterialKind>, std::string> stable;
    for (const auto& e : round_events) {
        if (!label_index(e, spec)) continue;
        for (const auto& m : e.materials) {
            const std::string hex = m.digest.hex();
            auto it = registry.find(hex);
            if (it == registry.end())
                return fail_with(Requirement::R2, spec,
                                 std::string(error_name(ErrorCode::UnknownDigest)) + " " + m.encode() + " at " +
                                     event_at(e));
            const MaterialRecord& rec = it->second;
            if (rec.kind != m.kind)
                return fail_with(Requirement::R2, spec,
                                 m.encode() + " is registered as " + std::string(material_kind_name(rec.kind)) +
                                     " at " + event_at(e));
            if (origin_role(rec.origin) != material_origin(m.kind))
                return fail_with(Requirement::R2, spec,
                                 m.encode() + " created by " + rec.origin + ", expected " +
                                     std::string(material_origin(m.kind)) + " at " + event_at(e));
            auto [s, fresh] = stable.emplace(std::make_pair(e.round.nonce, m.kind), hex);
            if (!fresh && s->second != hex)
                return fail_with(Requirement::R2, spec,
                                 std::string(material_kind_name(m.kind)) + " changed from " + s->second + " to " + hex +
                                     " at " + event_at(e));
        }
    }
    return pass(Requirement::R2, spec);
}

Verdict check_confidentiality(const std::vector<Term>& knowledge,
                              const std::vector<std::pair<std::string, Term>>& secrets, const CryptoBackend& crypto,
                              const SubProblemSpec& spec) {
    Closure closure(analyze(std::set<Term>(knowledge.begin(), knowledge.end()), crypto), crypto);
    for (const auto& [name, term] : secrets)
        if (closure.knows(term)) return fail_with(Requirement::R1, spec, name);
    return pass(Requirement::R1, spec);
}

Verdict check_termination(const std::vector<HandlingEvent>& round_events, const UpdateRoundId& round) {
    struct Seen {
        bool halted = false;
        bool expired = false;
        bool after_deadline = false;
        std::uint64_t last = 0;
    };
    std::map<std::string, Seen> entities;
    for (const auto& e : round_events) {
        if (e.round != round) continue;
        Seen& s = entities[e.entity];
        if (e.label == kExpireLabel) {
            s.expired = true;
            continue;
        }
        if (e.time >= round.expiry) s.after_deadline = true;
        s.last = std::max(s.last, e.time);
        if (e.label == kHaltLabel || lifecycle(e.label)) {
            if (e.time < round.expiry) s.halted = true;
        }
    }
    bool late = false;
    Verdict v{Requirement::R6, {}, VerdictStatus::Pass, {}, {}};
    for (const auto& [name, s] : entities) {
        if (s.after_deadline) {
            v.status = VerdictStatus::Fail;
            v.witness = name + " acted at or after t_e in " + round.describe();
            return v;
        }
        if (s.halted) continue;
        if (s.expired) {
            late = true;
            continue;
        }
        v.status = VerdictStatus::Fail;
        v.witness = name + " neither halted nor expired in " + round.describe();
        return v;
    }
    if (late) v.detail = "late";
    return v;
}

std::vector<Verdict> verify_trace(const Trace& trace, const std::set<Requirement>& checks) {
    auto wanted = [&](Requirement r) { return checks.empty() || checks.count(r); };

    std::vector<RoundRecord> rounds;
    std::map<UpdateRoundId, std::vector<HandlingEvent>> by_round;
    std::vector<HandlingEvent> events;
    Registry registry;
    std::map<std::pair<UpdateRoundId, SubProblem>, const SecrecyRecord*> secrecy;
    for (const auto& rec : trace.records) {
        if (const auto* r = std::get_if<RoundRecord>(&rec)) rounds.push_back(*r);
        else if (const auto* m = std::get_if<MaterialRecord>(&rec)) registry.emplace(m->digest.hex(), *m);
        else if (const auto* e = std::get_if<HandlingEvent>(&rec)) {
            by_round[e->round].push_back(*e);
            events.push_back(*e);
        } else if (const auto* s = std::get_if<SecrecyRecord>(&rec))
            secrecy[{s->round, s->sub_problem}] = s;
    }
    std::unique_ptr<CryptoBackend> crypto;
    if (wanted(Requirement::R1))
        crypto = make_backend(CryptoConfig{trace.header.backend, trace.header.digest_bytes, trace.header.sym_key_bytes});

    std::map<UpdateRoundId, Verdict> termination;
    std::map<UpdateRoundId, bool> disrupted;
    for (const auto& r : rounds) {
        const auto& evs = by_round[r.round];
        termination.emplace(r.round, check_termination(evs, r.round));
        disrupted[r.round] = std::any_of(evs.begin(), evs.end(), [](const HandlingEvent& e) {
            return e.label == kExpireLabel || (lifecycle(e.label) && e.label != kHaltLabel);
        });
    }

    std::vector<Verdict> out;
    for (const auto& spec : all_subproblems()) {
        std::vector<const RoundRecord*> planned;
        for (const auto& r : rounds)
            if (std::find(r.plan.begin(), r.plan.end(), spec.id) != r.plan.end()) planned.push_back(&r);
        if (planned.empty()) continue;

        for (Requirement req : all_requirements()) {
            if (!wanted(req)) continue;
            Verdict agg = pass(req, spec);
            bool late = false;
            auto take = [&](Verdict v) {
                if (!agg.pass()) return;
                if (!v.pass()) {
                    agg.status = VerdictStatus::Fail;
                    agg.witness = v.witness;
                }
                if (v.detail == "late") late = true;
            };
            if (req == Requirement::R3) {
                take(check_inter_round(events, spec));
            } else {
                for (const RoundRecord* r : planned) {
                    const auto& evs = by_round[r->round];
                    switch (req) {
                        case Requirement::R1: {
                            auto it = secrecy.find({r->round, spec.id});
                            if (it == secrecy.end()) {
                                take(fail_with(req, spec, "no secrecy snapshot for " + r->round.describe()));
                                break;
                            }
                            take(check_confidentiality(it->second->knowledge, it->second->secrets, *crypto, spec));
                            break;
                        }
                        case Requirement::R2: take(check_material_integrity(evs, registry, spec)); break;
                        case Requirement::R4: take(check_intra_round(evs, spec)); break;
                        case Requirement::R5: take(check_partial_order(evs, spec, disrupted[r->round])); break;
                        case Requirement::R6: take(termination.at(r->round)); break;
                        case Requirement::R3: break;
                    }
                }
            }
            if (agg.pass() && late) agg.detail = "late";
            out.push_back(std::move(agg));
        }
    }

    // Labels that no sub-problem defines cannot satisfy any order.
    if (wanted(Requirement::R5)) {
        for (const auto& e : events) {
            if (lifecycle(e.label) || parse_label(e.label)) continue;
            out.push_back(Verdict{Requirement::R5, "*", VerdictStatus::Fail, "unknown label " + event_at(e), {}});
            break;
        }
    }
    return out;
}

std::string report_jsonl(const std::vector<Verdict>& verdicts) {
    std::string out;
    for (const auto& v : verdicts) out += v.to_json() + "\n";
    return out;
}

bool all_pass(const std::vector<Verdict>& verdicts) {
    return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass(); });
}

}  // namespace unisuf
