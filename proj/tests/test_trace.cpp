#include <gtest/gtest.h>

#include "unisuf/error.hpp"
#include "unisuf/trace.hpp"

using namespace unisuf;

namespace {

Trace sample() {
    Trace t;
    t.header.backend = "mock";
    t.header.seed = 5;
    t.header.eta = 3;
    UpdateRoundId prep{std::nullopt, 50, 1};
    UpdateRoundId veh{std::string("V1"), 90, 2};
    t.records.push_back(RoundRecord{prep, {SubProblem::SecureSoftwareFiles, SubProblem::UploadSoftwareFiles}});
    Digest d{Bytes(32, 0xab)};
    t.records.push_back(MaterialRecord{d, MaterialKind::Software, "Supplier", 1});
    t.records.push_back(HandlingEvent{3, prep, "PLS", "secure_software_files.l1", {MaterialRef{MaterialKind::Software, d}}});
    t.records.push_back(HandlingEvent{4, veh, "CDA[V1]", "halt", {}});
    t.records.push_back(StatusRecord{5, veh, "ECU[V1]", "ECU Installed(2)"});
    t.records.push_back(SecrecyRecord{veh, SubProblem::StreamUpdateToEcu, {Term::text("k")},
                                      {{"Software", Term::number(7)}}});
    return t;
}

TEST(Trace, JsonlRoundTripIsExact) {
    Trace t = sample();
    std::string text = t.to_jsonl();
    Trace back = Trace::from_jsonl(text);
    EXPECT_EQ(back.to_jsonl(), text);
    ASSERT_EQ(back.records.size(), t.records.size());
    const auto& ev = std::get<HandlingEvent>(back.records[2]);
    EXPECT_EQ(ev.label, "secure_software_files.l1");
    EXPECT_FALSE(ev.round.vin.has_value());
    const auto& sec = std::get<SecrecyRecord>(back.records[5]);
    EXPECT_EQ(sec.secrets[0].second, Term::number(7));
}

TEST(Trace, EventRecordsCarryTheExportFields) {
    std::string text = sample().to_jsonl();
    for (const char* f : {"\"time\"", "\"round_vin\"", "\"round_expiry\"", "\"entity\"", "\"label\"", "\"digests\""})
        EXPECT_NE(text.find(f), std::string::npos) << f;
}

TEST(Trace, MalformedInputIsRejected) {
    auto code = [](std::string_view s) {
        try {
            Trace::from_jsonl(s);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::ConfigError;
    };
    EXPECT_EQ(code(""), ErrorCode::MalformedTrace);
    EXPECT_EQ(code("not json\n"), ErrorCode::MalformedTrace);
    std::string text = sample().to_jsonl();
    EXPECT_EQ(code(text.substr(text.find('\n') + 1)), ErrorCode::MalformedTrace);  // no header
    EXPECT_EQ(code(text + "{\"type\":\"mystery\"}\n"), ErrorCode::MalformedTrace);
    EXPECT_EQ(code(text + "{\"type\":\"event\",\"time\":1}\n"), ErrorCode::MalformedTrace);
}

}  // namespace
