// Acceptance harness. Each criterion prints one PASS/FAIL line with a short
// summary; the exit status is nonzero when any criterion fails.

#include <chrono>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "unisuf/adversary.hpp"
#include "unisuf/entities.hpp"
#include "unisuf/enumeration.hpp"
#include "unisuf/error.hpp"
#include "unisuf/scenario.hpp"

using namespace unisuf;

namespace {

// Collects failure reasons for one criterion.
struct Check {
    std::vector<std::string> problems;
    std::ostringstream summary;

    void expect(bool ok, const std::string& what) {
        if (!ok && problems.size() < 5) problems.push_back(what);
        else if (!ok) problems.back() = "... and more";
    }
    bool ok() const { return problems.empty(); }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<HandlingEvent> round_events(const Trace& t, const UpdateRoundId& r) {
    std::vector<HandlingEvent> out;
    for (const auto& rec : t.records)
        if (const auto* e = std::get_if<HandlingEvent>(&rec); e && e->round == r) out.push_back(*e);
    return out;
}

std::vector<RoundRecord> rounds_of(const Trace& t) {
    std::vector<RoundRecord> out;
    for (const auto& rec : t.records)
        if (const auto* r = std::get_if<RoundRecord>(&rec)) out.push_back(*r);
    return out;
}

std::map<std::string, MaterialRecord> registry_of(const Trace& t) {
    std::map<std::string, MaterialRecord> out;
    for (const auto& rec : t.records)
        if (const auto* m = std::get_if<MaterialRecord>(&rec)) out.emplace(m->digest.hex(), *m);
    return out;
}

bool all_of_requirement(const std::vector<Verdict>& vs, Requirement r) {
    for (const auto& v : vs)
        if (v.requirement == r && !v.pass()) return false;
    return true;
}

WorldConfig honest_world() { return bundled_scenario("honest-e2e").world; }

// ----------------------------------------------------------------- 1

void honest_run(Check& c) {
    auto t0 = std::chrono::steady_clock::now();
    ScenarioConfig cfg = bundled_scenario("honest-e2e");
    World w = run_world(cfg);
    const Trace& trace = w.trace();
    std::set<SubProblem> covered;
    std::size_t vehicle_rounds = 0;
    for (const auto& rr : rounds_of(trace)) {
        if (rr.round.vin) ++vehicle_rounds;
        auto evs = round_events(trace, rr.round);
        for (SubProblem sp : rr.plan) {
            covered.insert(sp);
            const auto& spec = subproblem(sp);
            std::map<int, std::vector<std::uint64_t>> seen;
            for (const auto& e : evs) {
                const std::string prefix = std::string(spec.name) + ".l";
                if (e.label.rfind(prefix, 0) == 0) seen[std::stoi(e.label.substr(prefix.size()))].push_back(e.time);
            }
            for (const auto& l : spec.labels)
                c.expect(seen.count(l.index) && seen[l.index].size() == 1,
                         spec.label(l.index) + " not exactly once in " + rr.round.describe());
            c.expect(seen.size() == spec.labels.size(), std::string(spec.name) + " emitted labels outside its set");
            for (auto [i, j] : spec.order)
                c.expect(seen.count(i) && seen.count(j) && seen[i].front() < seen[j].front(),
                         spec.label(i) + " not before " + spec.label(j));
        }
    }
    auto vs = verify_trace(trace);
    std::size_t passed = 0;
    for (const auto& v : vs) passed += v.pass();
    double secs = seconds_since(t0);
    c.expect(vehicle_rounds == 2, "expected two vehicle rounds");
    c.expect(covered.size() == all_subproblems().size(), "not every sub-problem ran");
    c.expect(passed == vs.size() && vs.size() == all_subproblems().size() * 6, "checks failed");
    c.expect(secs < 5.0, "took longer than 5 s");
    c.summary << covered.size() << " sub-problems, " << passed << "/" << vs.size() << " checks Pass, " << secs << " s";
}

// ----------------------------------------------------------------- 2

void confidentiality(Check& c) {
    std::size_t r1 = 0;
    for (const auto& name : bundled_scenarios()) {
        auto res = run_scenario(bundled_scenario(name));
        for (const auto& v : res.verdicts)
            if (v.requirement == Requirement::R1) {
                ++r1;
                c.expect(v.pass(), name + ": " + v.sub_problem + " leaks " + v.witness);
            }
    }
    auto en = enumerate_stream_scripts(EnumerationOptions{});
    for (const auto& leak : en.leaks) c.expect(false, leak);
    c.expect(en.scripts > 0, "no scripts enumerated");
    c.expect(en.seconds < 60.0, "enumeration took longer than 60 s");
    c.summary << r1 << " scenario R1 verdicts Pass; " << en.scripts << " scripts, " << en.secrets_checked
              << " secret checks, " << en.leaks.size() << " leaks, " << en.seconds << " s";
}

// ----------------------------------------------------------------- 3

void replay_resistance(Check& c) {
    // Leave a vehicle round live after its last sub-problem so replays reach
    // entities that still hold context for it.
    World w(honest_world());
    run_cycle(w, 2, {Stage::Preparation, Stage::Encapsulation, Stage::Decapsulation});
    w.stage_release(3);
    run_round(w, std::nullopt, stage_plan(Stage::Preparation));
    auto plan = stage_plan(Stage::Encapsulation);
    for (auto sp : stage_plan(Stage::Decapsulation)) plan.push_back(sp);
    auto round = w.open_round(std::string("V1"), plan);
    for (auto sp : plan) c.expect(run_subproblem(w, sp, round) == Outcome::Completed, "honest round failed");

    const auto before = w.task_deliveries();
    const auto events_before = round_events(w.trace(), round).size();
    std::size_t replayed = 0;
    const auto history = w.adversary().history();
    for (const auto& m : history) {
        if (m.round != round) continue;
        w.inject(m.direction, round, m.payload);
        w.run_until_quiet();
        ++replayed;
    }
    c.expect(replayed > 0, "nothing recorded on the insecure link");
    c.expect(w.task_deliveries() == before, "replays produced task deliveries");
    c.expect(round_events(w.trace(), round).size() == events_before, "replays produced events");

    // Splicing: every round-1 event that carries round-specific material,
    // copied into round 2, must be flagged.
    Trace t = run_world(bundled_scenario("honest-e2e")).trace();
    std::vector<UpdateRoundId> prep, veh;
    for (const auto& rr : rounds_of(t)) (rr.round.vin ? veh : prep).push_back(rr.round);
    std::size_t spliced = 0, exempt = 0;
    for (auto pair : {std::make_pair(prep[0], prep[1]), std::make_pair(veh[0], veh[1])}) {
        auto first = round_events(t, pair.first), second = round_events(t, pair.second);
        for (const auto& e : first) {
            auto parsed = parse_label(e.label);
            if (!parsed) continue;
            const auto& spec = *parsed->first;
            bool specific = false;
            for (const auto& m : e.materials) specific = specific || !round_agnostic(m.kind, spec.stage);
            if (!specific) {
                ++exempt;
                continue;
            }
            auto all = first;
            all.insert(all.end(), second.begin(), second.end());
            c.expect(check_inter_round(all, spec).pass(), "baseline " + std::string(spec.name) + " fails");
            HandlingEvent copy = e;
            copy.round = pair.second;
            all.push_back(copy);
            Verdict v = check_inter_round(all, spec);
            c.expect(!v.pass(), "splice of " + e.label + " not detected");
            c.expect(v.witness.find(e.label) != std::string::npos &&
                         v.witness.find(pair.first.describe()) != std::string::npos &&
                         v.witness.find(pair.second.describe()) != std::string::npos,
                     "witness for " + e.label + " is '" + v.witness + "'");
            ++spliced;
        }
    }
    c.summary << replayed << " replays, " << (w.task_deliveries() - before) << " extra deliveries; " << spliced
              << " splices detected (" << exempt << " events carry only release-wide material)";
}

// ----------------------------------------------------------------- 4

void integrity(Check& c) {
    std::size_t rejected = 0;
    for (int i = 0; i < 20; ++i) {
        const bool software = i % 2 == 0;
        Rng pick(7000 + static_cast<std::uint64_t>(i));
        ScenarioConfig cfg = bundled_scenario("honest-e2e");
        cfg.name = "tamper-" + std::to_string(i);
        cfg.world.seed = 500 + static_cast<std::uint64_t>(i);
        std::ostringstream a;
        a << R"({"action": "modify", "channel": "CIA->ECU", "match": {"step": ")" << (software ? "D17.17" : "D17.8")
          << R"(", "round": 1}, "arg": {"flip": )" << pick.uniform(0, 1u << 20) << R"(, "mask": )"
          << pick.uniform(1, 255) << "}}";
        cfg.world.script = {AttackAction::from_json(a.str())};
        auto res = run_scenario(cfg);
        Trace t = Trace::from_jsonl(res.trace_jsonl);
        const std::string want = software ? "ECU Rejected(BadSignature)" : "ECU Rejected(BadResponse)";
        bool saw = false;
        for (const auto& rec : t.records)
            if (const auto* s = std::get_if<StatusRecord>(&rec)) saw = saw || s->text == want;
        c.expect(saw, cfg.name + " did not see " + want);
        rejected += saw;
        auto reg = registry_of(t);
        for (const auto& rec : t.records) {
            const auto* e = std::get_if<HandlingEvent>(&rec);
            if (!e || e->label != subproblem(SubProblem::StreamUpdateToEcu).label(9)) continue;
            for (const auto& m : e->materials) {
                if (m.kind != MaterialKind::Software) continue;
                auto it = reg.find(m.digest.hex());
                c.expect(it != reg.end() && it->second.origin == "Supplier", cfg.name + " installed foreign software");
            }
        }
        c.expect(all_of_requirement(res.verdicts, Requirement::R2), cfg.name + " fails R2");
    }
    c.summary << rejected << "/20 tampers rejected with the expected reason";
}

// ----------------------------------------------------------------- 5

// Installed versions per ECU from status lines, in trace order.
std::map<std::string, std::vector<std::uint64_t>> installs(const Trace& t) {
    std::map<std::string, std::vector<std::uint64_t>> out;
    const std::string prefix = "ECU Installed(";
    for (const auto& rec : t.records)
        if (const auto* s = std::get_if<StatusRecord>(&rec); s && s->text.rfind(prefix, 0) == 0)
            out[s->entity].push_back(std::stoull(s->text.substr(prefix.size())));
    return out;
}

void rollback(Check& c) {
    auto crypto = make_backend(CryptoConfig{});
    Rng rng(31337);
    KeyPair supplier = crypto->generate_keypair(rng);
    std::size_t stale = 0;
    for (int i = 0; i < 50; ++i) {
        EcuState ecu;
        ecu.security_access_key = crypto->generate_sym_key(SymKeyKind::SecurityAccess, rng);
        ecu.installed_version = rng.uniform(1, 1u << 16);
        std::uint64_t candidate = rng.uniform(0, ecu.installed_version);
        Bytes challenge = ecu_challenge(ecu, rng);
        ecu_verify_response(ecu, crypto->challenge_response(challenge, ecu.security_access_key), *crypto);
        auto r = ecu_install(ecu, sign_software(Software{candidate, rng.bytes(32)}, supplier.priv, *crypto),
                             supplier.pub, *crypto);
        stale += !r.installed && r.reason == "StaleVersion";
    }
    c.expect(stale == 50, "not every stale install was rejected as StaleVersion");

    // Over the wire: hand the ECU last cycle's software in the second round.
    ScenarioConfig cfg = bundled_scenario("honest-e2e");
    cfg.world.script = {AttackAction::from_json(
        R"({"action": "modify", "channel": "CIA->ECU", "match": {"step": "D17.17", "round": 2}, "arg": {"substitute": true}})")};
    auto res = run_scenario(cfg);
    c.expect(res.trace_jsonl.find("ECU Rejected(StaleVersion)") != std::string::npos,
             "substituted old release was not rejected as stale");

    std::size_t traces = 0;
    std::vector<ScenarioConfig> configs;
    for (const auto& n : bundled_scenarios()) configs.push_back(bundled_scenario(n));
    configs.push_back(cfg);
    for (const auto& sc : configs) {
        Trace t = Trace::from_jsonl(run_scenario(sc).trace_jsonl);
        for (const auto& [ecu, versions] : installs(t))
            for (std::size_t k = 1; k < versions.size(); ++k)
                c.expect(versions[k] > versions[k - 1], sc.name + ": " + ecu + " went backwards");
        ++traces;
    }
    c.summary << stale << "/50 stale installs rejected; installed version monotone in " << traces << " traces";
}

// ----------------------------------------------------------------- 6

void termination(Check& c) {
    std::size_t late_rounds = 0;
    for (const char* name : {"drop-step17", "delay-step17"}) {
        auto res = run_scenario(bundled_scenario(name));
        Trace t = Trace::from_jsonl(res.trace_jsonl);
        for (const auto& rr : rounds_of(t)) {
            auto evs = round_events(t, rr.round);
            for (const auto& e : evs)
                c.expect(e.time <= rr.round.expiry, std::string(name) + ": " + e.entity + " active after t_e");
            Verdict v = check_termination(evs, rr.round);
            c.expect(v.pass(), std::string(name) + ": " + v.witness);
            if (v.detail == "late") ++late_rounds;
        }
        bool stream_late = false;
        for (const auto& v : res.verdicts)
            if (v.requirement == Requirement::R6 && v.sub_problem == "stream_update_to_ecu")
                stream_late = v.pass() && v.detail == "late";
        c.expect(stream_late, std::string(name) + ": stream round not classified late-Pass");
        c.expect(res.exit_code == 0, std::string(name) + " has failing checks");
    }
    c.summary << late_rounds << " disrupted rounds ended at their deadline and classify as late-Pass";
}

// ----------------------------------------------------------------- 7

// Rescans the whole set with every key until nothing changes.
std::set<Term> naive_fixpoint(std::set<Term> k, const CryptoBackend& crypto) {
    for (;;) {
        std::set<Term> next = k;
        for (const auto& t : k) {
            if (t.is_record())
                for (const auto& ch : t.children()) next.insert(ch);
            if (t.is_signed()) {
                next.insert(t.payload());
                next.insert(Term::atom(AtomKind::Signature, t.bytes()));
            }
            if (!t.is_cipher()) continue;
            for (const auto& key : k) {
                try {
                    CipherText ct{t.scheme(), t.bytes()};
                    if (t.scheme() == Scheme::Asym && key.is_atom(AtomKind::PrivateKey))
                        next.insert(Term::decode(crypto.asym_decrypt(ct, PrivateKey{key.bytes()})));
                    else if (t.scheme() == Scheme::Sym && key.is_atom(AtomKind::SymKey))
                        next.insert(Term::decode(crypto.sym_decrypt(ct, SymKey::from_term(key))));
                    else if (t.scheme() == Scheme::AuthSym && key.is_atom(AtomKind::SymKey))
                        next.insert(Term::decode(crypto.auth_decrypt(ct, SymKey::from_term(key))));
                } catch (const Error&) {
                }
            }
        }
        if (next.size() == k.size()) return k;
        k = std::move(next);
    }
}

std::vector<Term> universe(const CryptoBackend& cb, Rng& rng) {
    std::vector<SymKey> sym;
    for (auto kind : {SymKeyKind::Software, SymKeyKind::Dkm, SymKeyKind::MkmSoftware, SymKeyKind::Ikm})
        sym.push_back(cb.generate_sym_key(kind, rng));
    std::vector<KeyPair> pairs = {cb.generate_keypair(rng), cb.generate_keypair(rng)};
    auto enc = [&](Scheme s, const Term& m, std::size_t key) {
        Bytes b = m.encode();
        if (s == Scheme::Sym) return cb.sym_encrypt(b, sym[key], rng).to_term();
        if (s == Scheme::AuthSym) return cb.auth_encrypt(b, sym[key], rng).to_term();
        return cb.asym_encrypt(b, pairs[key].pub, rng).to_term();
    };
    Term s1 = Term::text("secret-1"), s2 = Term::text("secret-2");
    std::vector<Term> u;
    for (const auto& k : sym) u.push_back(k.to_term());
    for (const auto& p : pairs) u.push_back(p.priv.to_term());
    u.push_back(s1);
    u.push_back(enc(Scheme::Sym, s1, 0));
    u.push_back(enc(Scheme::AuthSym, sym[1].to_term(), 2));
    u.push_back(enc(Scheme::AuthSym, Term::record(Tag::Bundle, {s2, sym[3].to_term()}), 0));
    u.push_back(enc(Scheme::Asym, sym[2].to_term(), 0));
    u.push_back(enc(Scheme::Asym, Term::record(Tag::Bundle, {pairs[0].priv.to_term()}), 1));
    u.push_back(enc(Scheme::Sym, enc(Scheme::AuthSym, s2, 3), 1));
    u.push_back(assemble_signed(s2, sign_term(s2, pairs[0].priv, cb)));
    u.push_back(Term::record(Tag::Bundle, {enc(Scheme::Sym, pairs[1].priv.to_term(), 2), Term::number(7)}));
    return u;
}

void oracle(Check& c) {
    std::size_t equal = 0;
    for (const char* backend : {"sodium", "mock"}) {
        auto cb = make_backend(CryptoConfig{backend});
        Rng rng(4242);
        auto u = universe(*cb, rng);
        for (int trial = 0; trial < 200; ++trial) {
            std::set<Term> initial;
            while (initial.size() < 5) initial.insert(u[rng.uniform(0, u.size() - 1)]);
            AdversaryKnowledge kb;
            for (const auto& t : initial) kb.observe(t);
            auto fast = kb.derive_closure(*cb);
            bool same = fast.terms() == naive_fixpoint(initial, *cb);
            c.expect(same, std::string(backend) + " trial " + std::to_string(trial) + " differs");
            equal += same;
        }
    }
    c.summary << equal << "/400 closures equal the naive fixpoint (200 sets per backend)";
}

// ----------------------------------------------------------------- 8

bool throws(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error&) {
        return true;
    }
    return false;
}

void crypto_layer(Check& c) {
    std::size_t mutations = 0, detected = 0;
    for (const char* backend : {"sodium", "mock"}) {
        auto cb = make_backend(CryptoConfig{backend});
        Rng rng(808);
        Bytes m = to_bytes("installation instructions");
        auto k = cb->generate_sym_key(SymKeyKind::Ikm, rng), k2 = cb->generate_sym_key(SymKeyKind::Ikm, rng);
        auto kp = cb->generate_keypair(rng), kp2 = cb->generate_keypair(rng);

        c.expect(cb->sym_decrypt(cb->sym_encrypt(m, k, rng), k) == m, "sym round trip");
        c.expect(cb->sym_decrypt(cb->sym_encrypt(m, k, rng), k2) != m, "sym wrong key recovers plaintext");
        auto ct = cb->auth_encrypt(m, k, rng);
        c.expect(cb->auth_decrypt(ct, k) == m, "auth round trip");
        c.expect(cb->asym_decrypt(cb->asym_encrypt(m, kp.pub, rng), kp.priv) == m, "asym round trip");
        c.expect(cb->public_from_private(kp.priv) == kp.pub, "public key derivation");
        Digest d = cb->hash(m);
        c.expect(cb->verify_hash(d, cb->sign_hash(d, kp.priv), kp.pub), "sign/verify round trip");

        for (std::size_t i = 0; i < ct.bytes.size(); ++i) {
            auto bad = ct;
            bad.bytes[i] ^= static_cast<std::uint8_t>(1u << (i % 8));
            ++mutations;
            bool caught = throws([&] { cb->auth_decrypt(bad, k); });
            detected += caught;
            c.expect(caught, std::string(backend) + " auth mutation at byte " + std::to_string(i));
        }
        c.expect(throws([&] { cb->auth_decrypt(ct, k2); }), "auth cross-key decrypt succeeded");
        auto wrapped = cb->asym_encrypt(m, kp.pub, rng);
        c.expect(throws([&] { cb->asym_decrypt(wrapped, kp2.priv); }), "asym cross-key decrypt succeeded");

        std::vector<Term> payloads = {Term::text("p0"), Term::text("p1"), Term::text("p2")};
        std::vector<KeyPair> keys = {cb->generate_keypair(rng), cb->generate_keypair(rng), cb->generate_keypair(rng)};
        for (int p = 0; p < 3; ++p)
            for (int k3 = 0; k3 < 3; ++k3) {
                Term st = assemble_signed(payloads[p], sign_term(payloads[p], keys[p].priv, *cb));
                c.expect(signature_valid(st, keys[k3].pub, *cb) == (p == k3),
                         std::string(backend) + " signature matrix cell " + std::to_string(p) + std::to_string(k3));
            }
    }
    c.summary << detected << "/" << mutations << " AuthSym mutations detected; cross-key decrypts fail; 3x3 "
              << "signature matrix accepts only the diagonal (both backends)";
}

// ----------------------------------------------------------------- 9

void determinism(Check& c) {
    std::size_t same = 0;
    for (const auto& name : bundled_scenarios()) {
        auto a = run_scenario(bundled_scenario(name));
        auto b = run_scenario(bundled_scenario(name));
        bool ok = a.trace_jsonl == b.trace_jsonl && a.report_jsonl == b.report_jsonl;
        c.expect(ok, name + " differs between runs");
        same += ok;
    }
    c.summary << same << "/" << bundled_scenarios().size() << " bundled scenarios byte-identical across runs";
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, void (*)(Check&)>> criteria = {
        {"honest end-to-end run", honest_run},
        {"confidentiality", confidentiality},
        {"replay resistance", replay_resistance},
        {"integrity under tampering", integrity},
        {"rollback prevention", rollback},
        {"termination under delay and drop", termination},
        {"closure oracle equivalence", oracle},
        {"crypto layer", crypto_layer},
        {"determinism", determinism},
    };
    int failed = 0;
    int n = 0;
    for (const auto& [name, fn] : criteria) {
        Check c;
        try {
            fn(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        std::cout << (c.ok() ? "PASS" : "FAIL") << "  " << ++n << ". " << name << ": " << c.summary.str();
        for (const auto& p : c.problems) std::cout << "\n        " << p;
        std::cout << std::endl;
        failed += !c.ok();
    }
    return failed == 0 ? 0 : 1;
}
