#include "unisuf/trace.hpp"

#include <json.hpp>

#include "unisuf/error.hpp"

namespace unisuf {

using nlohmann::json;

namespace {

void put_round(json& j, const UpdateRoundId& r) {
    j["round_vin"] = r.vin ? json(*r.vin) : json(nullptr);
    j["round_expiry"] = r.expiry;
    j["round_nonce"] = r.nonce;
}

UpdateRoundId get_round(const json& j) {
    UpdateRoundId r;
    const auto& vin = j.at("round_vin");
    if (!vin.is_null()) r.vin = vin.get<std::string>();
    r.expiry = j.at("round_expiry").get<std::uint64_t>();
    r.nonce = j.at("round_nonce").get<std::uint64_t>();
    return r;
}

SubProblem get_sp(const json& j) {
    const auto* spec = find_subproblem(j.get<std::string>());
    if (!spec) fail(ErrorCode::MalformedTrace, "unknown sub-problem " + j.dump());
    return spec->id;
}

Term get_term(const json& j) {
    return Term::decode(from_hex(j.get<std::string>()));
}

json record_json(const TraceRecord& rec) {
    json j;
    std::visit(
        [&](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, RoundRecord>) {
                j["type"] = "round";
                put_round(j, r.round);
                json plan = json::array();
                for (SubProblem sp : r.plan) plan.push_back(std::string(subproblem(sp).name));
                j["plan"] = plan;
            } else if constexpr (std::is_same_v<T, MaterialRecord>) {
                j["type"] = "material";
                j["digest"] = r.digest.hex();
                j["kind"] = std::string(material_kind_name(r.kind));
                j["origin"] = r.origin;
                j["round_nonce"] = r.round_nonce;
            } else if constexpr (std::is_same_v<T, HandlingEvent>) {
                j["type"] = "event";
                j["time"] = r.time;
                put_round(j, r.round);
                j["entity"] = r.entity;
                j["label"] = r.label;
                json ds = json::array();
                for (const auto& m : r.materials) ds.push_back(m.encode());
                j["digests"] = ds;
            } else if constexpr (std::is_same_v<T, StatusRecord>) {
                j["type"] = "status";
                j["time"] = r.time;
                put_round(j, r.round);
                j["entity"] = r.entity;
                j["text"] = r.text;
            } else {
                j["type"] = "secrecy";
                put_round(j, r.round);
                j["sub_problem"] = std::string(subproblem(r.sub_problem).name);
                json k = json::array();
                for (const auto& t : r.knowledge) k.push_back(to_hex(t.encode()));
                j["knowledge"] = k;
                json s = json::array();
                for (const auto& [name, t] : r.secrets) s.push_back(json{{"name", name}, {"term", to_hex(t.encode())}});
                j["secrets"] = s;
            }
        },
        rec);
    return j;
}

TraceRecord parse_record(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "round") {
        RoundRecord r{get_round(j), {}};
        for (const auto& sp : j.at("plan")) r.plan.push_back(get_sp(sp));
        return r;
    }
    if (type == "material") {
        auto kind = parse_material_kind(j.at("kind").get<std::string>());
        if (!kind) fail(ErrorCode::MalformedTrace, "unknown material kind");
        return MaterialRecord{Digest{from_hex(j.at("digest").get<std::string>())}, *kind,
                              j.at("origin").get<std::string>(), j.at("round_nonce").get<std::uint64_t>()};
    }
    if (type == "event") {
        HandlingEvent e;
        e.time = j.at("time").get<std::uint64_t>();
        e.round = get_round(j);
        e.entity = j.at("entity").get<std::string>();
        e.label = j.at("label").get<std::string>();
        for (const auto& d : j.at("digests")) e.materials.push_back(MaterialRef::parse(d.get<std::string>()));
        return e;
    }
    if (type == "status") {
        return StatusRecord{j.at("time").get<std::uint64_t>(), get_round(j), j.at("entity").get<std::string>(),
                            j.at("text").get<std::string>()};
    }
    if (type == "secrecy") {
        SecrecyRecord s{get_round(j), get_sp(j.at("sub_problem")), {}, {}};
        for (const auto& k : j.at("knowledge")) s.knowledge.push_back(get_term(k));
        for (const auto& x : j.at("secrets"))
            s.secrets.emplace_back(x.at("name").get<std::string>(), get_term(x.at("term")));
        return s;
    }
    fail(ErrorCode::MalformedTrace, "unknown record type '" + type + "'");
}

}  // namespace

std::string Trace::to_jsonl() const {
    std::string out;
    json h{{"type", "header"},
           {"version", header.version},
           {"backend", header.backend},
           {"digest_bytes", header.digest_bytes},
           {"sym_key_bytes", header.sym_key_bytes},
           {"seed", header.seed},
           {"eta", header.eta}};
    out += h.dump() + "\n";
    for (const auto& r : records) out += record_json(r).dump() + "\n";
    return out;
}

Trace Trace::from_jsonl(std::string_view text) {
    Trace t;
    bool have_header = false;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        try {
            json j = json::parse(line);
            if (!have_header) {
                if (j.at("type") != "header") fail(ErrorCode::MalformedTrace, "first record must be the header");
                t.header.version = j.at("version").get<int>();
                t.header.backend = j.at("backend").get<std::string>();
                t.header.digest_bytes = j.at("digest_bytes").get<std::size_t>();
                t.header.sym_key_bytes = j.at("sym_key_bytes").get<std::size_t>();
                t.header.seed = j.at("seed").get<std::uint64_t>();
                t.header.eta = j.at("eta").get<std::uint64_t>();
                have_header = true;
                continue;
            }
            t.records.push_back(parse_record(j));
        } catch (const json::exception& e) {
            fail(ErrorCode::MalformedTrace, "line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            if (e.code() == ErrorCode::MalformedTrace)
                fail(ErrorCode::MalformedTrace, "line " + std::to_string(line_no) + ": " + e.detail());
            fail(ErrorCode::MalformedTrace, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!have_header) fail(ErrorCode::MalformedTrace, "trace has no header");
    return t;
}

}  // namespace unisuf
