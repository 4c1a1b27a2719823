#include "unisuf/enumeration.hpp"

#include <chrono>

#include "unisuf/stages.hpp"
#include "unisuf/verifier.hpp"
#include "unisuf/world.hpp"

namespace unisuf {

const std::vector<std::pair<std::string, std::string>>& stream_link_messages() {
    static const std::vector<std::pair<std::string, std::string>> m = {
        {"D17.1", "CIA->ECU"}, {"D17.3", "ECU->CIA"},  {"D17.8", "CIA->ECU"},
        {"D17.9", "ECU->CIA"}, {"D17.17", "CIA->ECU"}, {"D17.21", "ECU->CIA"},
    };
    return m;
}

namespace {

constexpr int kActionsPerMessage = 5;

AttackAction make_action(const std::string& step, const std::string& dir, int which, std::uint64_t eta) {
    AttackAction a;
    a.direction = dir;
    a.step = step;
    switch (which) {
        case 0: a.kind = AttackAction::Kind::Drop; break;
        case 1:
            a.kind = AttackAction::Kind::Modify;
            a.substitute = true;
            break;
        case 2:
            a.kind = AttackAction::Kind::Inject;
            a.replay_step = step;
            break;
        case 3:
            a.kind = AttackAction::Kind::Delay;
            a.delay_by = 1;
            break;
        default:
            a.kind = AttackAction::Kind::Delay;
            a.delay_by = eta;
            break;
    }
    return a;
}

void extend(std::vector<std::vector<AttackAction>>& out, std::vector<AttackAction>& cur, std::size_t next,
            std::size_t budget, std::uint64_t eta) {
    out.push_back(cur);
    if (budget == 0) return;
    const auto& msgs = stream_link_messages();
    for (std::size_t i = next; i < msgs.size(); ++i)
        for (int a = 0; a < kActionsPerMessage; ++a) {
            cur.push_back(make_action(msgs[i].first, msgs[i].second, a, eta));
            extend(out, cur, i + 1, budget - 1, eta);
            cur.pop_back();
        }
}

std::string describe(const std::vector<AttackAction>& script) {
    std::string s = "[";
    for (std::size_t i = 0; i < script.size(); ++i) s += (i ? "," : "") + script[i].to_json();
    return s + "]";
}

}  // namespace

std::vector<std::vector<AttackAction>> stream_scripts(std::size_t max_actions, std::uint64_t eta) {
    std::vector<std::vector<AttackAction>> out;
    std::vector<AttackAction> cur;
    extend(out, cur, 0, max_actions, eta);
    return out;
}

EnumerationResult enumerate_stream_scripts(const EnumerationOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    WorldConfig wc;
    wc.seed = options.seed;
    wc.backend = options.backend;
    wc.eta = options.eta;
    wc.vehicles = {{"V1", 1, "generic"}};
    World base(wc);
    const std::vector<Stage> all = {Stage::Preparation, Stage::Encapsulation, Stage::Decapsulation};
    run_cycle(base, 2, all);

    base.stage_release(3);
    run_round(base, std::nullopt, stage_plan(Stage::Preparation));
    std::vector<SubProblem> plan = stage_plan(Stage::Encapsulation);
    for (SubProblem sp : stage_plan(Stage::Decapsulation)) plan.push_back(sp);
    const UpdateRoundId round = base.open_round(std::string("V1"), plan);
    RoundResult partial{round, {}};
    const std::size_t stream = plan.size() - 1;
    for (std::size_t i = 0; i < stream; ++i) partial.outcomes.emplace_back(plan[i], run_subproblem(base, plan[i], round));

    const SubProblemSpec& spec = subproblem(SubProblem::StreamUpdateToEcu);
    EnumerationResult result;
    for (const auto& script : stream_scripts(options.max_actions, options.eta)) {
        World w = base;
        w.set_script(script);
        continue_round(w, round, plan, stream, partial);
        const SecrecyRecord* snap = nullptr;
        for (auto it = w.trace().records.rbegin(); it != w.trace().records.rend() && !snap; ++it)
            if (const auto* s = std::get_if<SecrecyRecord>(&*it); s && s->round == round && s->sub_problem == spec.id)
                snap = s;
        ++result.scripts;
        if (!snap) {
            result.leaks.push_back("no snapshot after " + describe(script));
            continue;
        }
        result.secrets_checked += snap->secrets.size();
        Verdict v = check_confidentiality(snap->knowledge, snap->secrets, w.crypto(), spec);
        if (!v.pass()) result.leaks.push_back(v.witness + " after " + describe(script));
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace unisuf
