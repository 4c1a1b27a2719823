#include <gtest/gtest.h>

#include <map>

#include "unisuf/error.hpp"
#include "unisuf/stages.hpp"
#include "unisuf/verifier.hpp"

using namespace unisuf;

namespace {

const std::vector<Stage> kAll = {Stage::Preparation, Stage::Encapsulation, Stage::Decapsulation};

WorldConfig one_vehicle(const std::string& backend, std::uint64_t seed = 11) {
    WorldConfig c;
    c.seed = seed;
    c.backend = backend;
    c.vehicles = {{"V1", 1, "sedan"}};
    return c;
}

std::vector<HandlingEvent> events_of(const World& w, const UpdateRoundId& r) {
    std::vector<HandlingEvent> out;
    for (const auto& rec : w.trace().records)
        if (const auto* e = std::get_if<HandlingEvent>(&rec); e && e->round == r) out.push_back(*e);
    return out;
}

std::vector<std::string> statuses(const World& w) {
    std::vector<std::string> out;
    for (const auto& rec : w.trace().records)
        if (const auto* s = std::get_if<StatusRecord>(&rec)) out.push_back(s->text);
    return out;
}

class HonestRun : public ::testing::TestWithParam<std::string> {};

TEST_P(HonestRun, EveryLabelOnceAndInOrder) {
    World w(one_vehicle(GetParam()));
    std::vector<RoundResult> rounds;
    for (std::uint64_t v : {2, 3}) {
        auto rs = run_cycle(w, v, kAll);
        rounds.insert(rounds.end(), rs.begin(), rs.end());
    }
    ASSERT_EQ(rounds.size(), 4u);
    for (const auto& rr : rounds) {
        ASSERT_TRUE(rr.completed()) << rr.round.describe();
        auto evs = events_of(w, rr.round);
        for (const auto& [sp, outcome] : rr.outcomes) {
            const auto& spec = subproblem(sp);
            // Count by plain string comparison rather than through the
            // label parser the verifier uses.
            std::map<std::string, int> count;
            std::map<std::string, std::uint64_t> when;
            for (const auto& e : evs)
                if (e.label.rfind(std::string(spec.name) + ".l", 0) == 0) {
                    ++count[e.label];
                    when[e.label] = e.time;
                }
            ASSERT_EQ(count.size(), spec.labels.size()) << spec.name;
            for (const auto& [label, n] : count) EXPECT_EQ(n, 1) << label;
            for (auto [i, j] : spec.order) {
                std::string li = std::string(spec.name) + ".l" + std::to_string(i);
                std::string lj = std::string(spec.name) + ".l" + std::to_string(j);
                EXPECT_LT(when[li], when[lj]) << li << " < " << lj;
            }
            // Each event's emitter plays the role the label belongs to.
            for (const auto& e : evs) {
                auto p = parse_label(e.label);
                if (!p || p->first->id != sp) continue;
                EXPECT_EQ(EntityId::parse(e.entity).role, spec.label_spec(p->second).emitter) << e.label;
            }
        }
        // Every participant halted before the deadline.
        for (const auto& e : evs) EXPECT_LT(e.time, rr.round.expiry);
    }
    EXPECT_EQ(w.entity(EntityId{Role::ECU, std::string("V1")}).ecu.installed_version, 3u);
    EXPECT_TRUE(all_pass(verify_trace(w.trace())));
    EXPECT_EQ(w.duplicates(), 0u);
}

TEST_P(HonestRun, TwoVehiclesEachInstall) {
    WorldConfig c = one_vehicle(GetParam());
    c.vehicles.push_back({"V2", 0, "van"});
    World w(c);
    auto rs = run_cycle(w, 4, kAll);
    ASSERT_EQ(rs.size(), 3u);
    for (const auto& r : rs) EXPECT_TRUE(r.completed());
    EXPECT_EQ(w.entity(EntityId{Role::ECU, std::string("V1")}).ecu.installed_version, 4u);
    EXPECT_EQ(w.entity(EntityId{Role::ECU, std::string("V2")}).ecu.installed_version, 4u);
}

INSTANTIATE_TEST_SUITE_P(Backends, HonestRun, ::testing::Values("sodium", "mock"));

TEST(Stages, WrappersRunOneSubProblemEach) {
    World w(one_vehicle("mock"));
    w.stage_release(2);
    auto prep = w.open_round(std::nullopt, stage_plan(Stage::Preparation));
    EXPECT_EQ(run_secure_software_files(w, prep), Outcome::Completed);
    EXPECT_EQ(run_upload_software_files(w, prep), Outcome::Completed);
    w.halt_all(prep);
    auto plan = stage_plan(Stage::Encapsulation);
    auto r = w.open_round(std::string("V1"), plan);
    using Fn = Outcome (*)(World&, const UpdateRoundId&);
    for (Fn fn : {run_order_initiation, run_create_software_list, run_create_download_instructions,
                  run_generate_installation_materials, run_create_installation_instructions,
                  run_package_the_instructions, run_notify_order_ready, run_download_vuup,
                  run_download_software_files, run_decrypt_installation_instructions,
                  run_setup_installation_environment, run_stream_update_to_ecu})
        EXPECT_EQ(fn(w, r), Outcome::Completed);
}

TEST(Stages, MissingStartingContextIsValidationFailure) {
    World w(one_vehicle("mock"));
    w.stage_release(2);
    run_round(w, std::nullopt, stage_plan(Stage::Preparation));
    auto r = w.open_round(std::string("V1"), {SubProblem::CreateSoftwareList});
    EXPECT_EQ(run_subproblem(w, SubProblem::CreateSoftwareList, r), Outcome::ValidationFailure);
    EXPECT_TRUE(w.aborted(r));
    EXPECT_TRUE(events_of(w, r).empty());
}

TEST(Stages, NoUpdateAvailableAbortsListCreation) {
    WorldConfig c = one_vehicle("mock");
    c.vehicles[0].initial_ecu_version = 9;
    World w(c);
    auto rs = run_cycle(w, 2, kAll);
    ASSERT_EQ(rs.size(), 2u);
    EXPECT_TRUE(rs[0].completed());
    EXPECT_EQ(rs[1].outcomes[1].second, Outcome::ValidationFailure);
    // Later sub-problems never start.
    for (std::size_t i = 2; i < rs[1].outcomes.size(); ++i)
        EXPECT_NE(rs[1].outcomes[i].second, Outcome::Completed);
    EXPECT_TRUE(all_pass(verify_trace(w.trace())));
}

TEST(Stages, ForgedSupplierSignatureStopsBeforeFirstLabel) {
    World w(one_vehicle("sodium"));
    // The supplier signs with a key that its certificate does not vouch for.
    Rng other(5);
    w.entity(EntityId{Role::Supplier, std::nullopt}).keys = w.crypto().generate_keypair(other);
    w.stage_release(2);
    auto rr = run_round(w, std::nullopt, stage_plan(Stage::Preparation));
    EXPECT_EQ(rr.outcomes[0].second, Outcome::ValidationFailure);
    for (const auto& e : events_of(w, rr.round))
        EXPECT_EQ(e.label.find("secure_software_files.l"), std::string::npos) << e.label;
    EXPECT_TRUE(all_pass(verify_trace(w.trace())));
}

TEST(Stages, RedeliveredStepOneIsHandledOnce) {
    World w(one_vehicle("mock"));
    w.stage_release(2);
    auto prep = w.open_round(std::nullopt, stage_plan(Stage::Preparation));
    ASSERT_EQ(run_secure_software_files(w, prep), Outcome::Completed);
    const auto before = events_of(w, prep).size();
    const auto deliveries = w.task_deliveries();

    EntityId supplier{Role::Supplier, std::nullopt}, pls{Role::ProducerLocalStorage, std::nullopt};
    Term payload = make_message("P1.2", {w.entity(pls).store.at("software")});
    Envelope env{channel_between(supplier, pls), supplier, pls, prep, 0, payload.encode(), InjectOrigin::Honest};
    w.network().send(env, w.now());
    w.network().send(env, w.now());
    w.run_until_quiet();
    EXPECT_EQ(events_of(w, prep).size(), before);
    EXPECT_EQ(w.task_deliveries(), deliveries);
    EXPECT_EQ(w.duplicates(), 2u);
}

TEST(Stages, TamperedVuupStopsBeforeDownload) {
    World w(one_vehicle("sodium"));
    w.stage_release(2);
    run_round(w, std::nullopt, stage_plan(Stage::Preparation));
    auto plan = stage_plan(Stage::Encapsulation);
    for (auto sp : stage_plan(Stage::Decapsulation)) plan.push_back(sp);
    auto r = w.open_round(std::string("V1"), plan);
    for (std::size_t i = 0; i < 7; ++i) ASSERT_EQ(run_subproblem(w, plan[i], r), Outcome::Completed);
    // Break the VCM signature on the stored VUUP content.
    auto& vcs = w.entity(EntityId{Role::VehicleCloudService, std::nullopt});
    for (auto& [key, value] : vcs.store) {
        if (key.rfind("vuup:", 0) != 0) continue;
        Vuup v = Vuup::from_term(value.child(0));
        Bytes sig = v.content.bytes();
        sig[0] ^= 1;
        v.content = Term::signed_term(v.content.payload(), sig);
        value = Term::record(Tag::Bundle, {v.to_term(), value.child(1)});
    }
    EXPECT_EQ(run_subproblem(w, plan[7], r), Outcome::ValidationFailure);
    for (std::size_t i = 8; i < plan.size(); ++i) run_subproblem(w, plan[i], r);
    for (const auto& e : events_of(w, r)) {
        EXPECT_EQ(e.label.find("download_software_files"), std::string::npos);
        EXPECT_NE(e.label, "download_vuup.l5");
    }
}

TEST(Stages, MessagesPastTheDeadlineAreIgnored) {
    WorldConfig c = one_vehicle("mock");
    c.round_ttl = 30;  // far shorter than the preparation stage
    World w(c);
    w.stage_release(2);
    auto rr = run_round(w, std::nullopt, stage_plan(Stage::Preparation));
    EXPECT_FALSE(rr.completed());
    EXPECT_TRUE(w.expired(rr.round));
    for (const auto& e : events_of(w, rr.round)) {
        if (e.label == kExpireLabel)
            EXPECT_GE(e.time, rr.round.expiry);
        else
            EXPECT_LT(e.time, rr.round.expiry) << e.label;
    }
    auto vs = verify_trace(w.trace());
    EXPECT_TRUE(all_pass(vs));
    for (const auto& v : vs)
        if (v.requirement == Requirement::R6) EXPECT_EQ(v.detail, "late");
}

TEST(Stages, SameSeedSameTrace) {
    auto run = [](std::uint64_t seed) {
        World w(one_vehicle("sodium", seed));
        run_cycle(w, 2, kAll);
        return w.trace().to_jsonl();
    };
    EXPECT_EQ(run(3), run(3));
    EXPECT_NE(run(3), run(4));
}

TEST(Stages, WorldCopiesRunIndependently) {
    World a(one_vehicle("mock"));
    a.stage_release(2);
    run_round(a, std::nullopt, stage_plan(Stage::Preparation));
    World b = a;
    run_cycle(b, 3, kAll);
    EXPECT_LT(a.trace().records.size(), b.trace().records.size());
    World c = a;
    run_cycle(c, 3, kAll);
    EXPECT_EQ(b.trace().to_jsonl(), c.trace().to_jsonl());
}

TEST(Stages, StatusesReportInstall) {
    World w(one_vehicle("mock"));
    run_cycle(w, 2, kAll);
    auto st = statuses(w);
    EXPECT_NE(std::find(st.begin(), st.end(), "ECU Unlocked"), st.end());
    EXPECT_NE(std::find(st.begin(), st.end(), "ECU Installed(2)"), st.end());
}

}  // namespace
