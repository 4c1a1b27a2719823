#include "unisuf/world.hpp"

#include <algorithm>

#include "unisuf/error.hpp"

namespace unisuf {

namespace {

constexpr Role kProducerRoles[] = {
    Role::Supplier,          Role::ProducerLocalStorage, Role::VCM,         Role::PSS,
    Role::CMS,               Role::PSA,                  Role::OrderCloudService,
    Role::OrderAgent,        Role::PDA,                  Role::PIA,         Role::VinDatabase,
    Role::VehicleCloudService, Role::SoftwareRepository,
};

constexpr Role kVehicleRoles[] = {Role::CDA, Role::CSA, Role::CIA, Role::ConsumerLocalStorage, Role::ECU};

MaterialKind cert_kind(const std::string& holder) {
    if (holder == "Supplier") return MaterialKind::SupplierCert;
    if (holder == "VCM") return MaterialKind::VcmCert;
    if (holder == "PDA") return MaterialKind::PdaCert;
    if (holder == "PIA") return MaterialKind::PiaCert;
    if (holder == "PSA") return MaterialKind::PsaCert;
    if (holder.rfind("CDA[", 0) == 0) return MaterialKind::CdaCert;
    return MaterialKind::VehicleCert;
}

}  // namespace

World::World(WorldConfig config)
    : config_(std::move(config)),
      crypto_(make_backend(CryptoConfig{config_.backend, 32, 32})),
      crypto_rng_(Rng(config_.seed).fork("crypto")),
      content_rng_(Rng(config_.seed).fork("content")),
      net_(config_.eta, Rng(config_.seed).fork("net")),
      adversary_(config_.script) {
    if (config_.eta == 0) fail(ErrorCode::ConfigError, "eta must be at least 1");
    if (config_.round_ttl == 0) fail(ErrorCode::ConfigError, "round_ttl must be positive");
    std::set<std::string> vins;
    for (const auto& v : config_.vehicles) {
        if (v.vin.empty()) fail(ErrorCode::ConfigError, "vehicle without VIN");
        if (!vins.insert(v.vin).second) fail(ErrorCode::ConfigError, "duplicate VIN " + v.vin);
    }
    trace_.header.backend = crypto_->name();
    trace_.header.digest_bytes = crypto_->digest_bytes();
    trace_.header.sym_key_bytes = crypto_->sym_key_bytes();
    trace_.header.seed = config_.seed;
    trace_.header.eta = config_.eta;
    setup();
    seed_knowledge();
}

EntityState& World::add_entity(EntityId id, bool with_keys) {
    EntityState e;
    e.id = id;
    if (with_keys) e.keys = crypto_->generate_keypair(crypto_rng_);
    return entities_.emplace(id, std::move(e)).first->second;
}

void World::setup() {
    KeyPair root = crypto_->generate_keypair(crypto_rng_);
    private_keys_["Root"] = root.priv;
    directory_.root_pk = root.pub;

    auto certify = [&](const std::string& holder, const KeyPair& kp) {
        private_keys_[holder] = kp.priv;
        Certificate c = issue_certificate(holder, kp.pub, root.priv, *crypto_);
        directory_.certs[holder] = c;
        Term t = c.to_term();
        Digest d = term_digest(t, *crypto_);
        if (!registry_.count(d.hex())) {
            MaterialRecord rec{d, cert_kind(holder), "Root", 0};
            registry_[d.hex()] = RegistryEntry{rec, t};
            trace_.records.push_back(rec);
        }
    };

    for (Role r : kProducerRoles) {
        const bool keyed = r == Role::Supplier || r == Role::VCM || r == Role::PDA || r == Role::PIA || r == Role::PSA;
        EntityState& e = add_entity(EntityId{r, std::nullopt}, keyed);
        if (keyed) certify(std::string(role_name(r)), *e.keys);
    }
    EntityState& pss = entity(EntityId{Role::PSS, std::nullopt});
    for (Role r : {Role::VCM, Role::PDA, Role::PIA, Role::PSA})
        pss.delegated[r] = entity(EntityId{r, std::nullopt}).keys->priv;

    EntityState& vin_db = entity(EntityId{Role::VinDatabase, std::nullopt});
    vin_db.store["versions"] = SoftwareVersions{}.to_term();
    EntityState& cms = entity(EntityId{Role::CMS, std::nullopt});

    for (const auto& v : config_.vehicles) {
        for (Role r : kVehicleRoles) {
            const bool keyed = r == Role::CDA || r == Role::CSA;
            EntityState& e = add_entity(EntityId{r, v.vin}, keyed);
            if (r == Role::CDA) certify("CDA[" + v.vin + "]", *e.keys);
            if (r == Role::CSA) certify("Vehicle[" + v.vin + "]", *e.keys);
        }
        SymKey sa = crypto_->generate_sym_key(SymKeyKind::SecurityAccess, crypto_rng_);
        Term sa_t = sa.to_term();
        cms.store["sakey:" + v.vin] = sa_t;
        EcuState& ecu = entity(EntityId{Role::ECU, v.vin}).ecu;
        ecu.security_access_key = sa;
        ecu.installed_version = v.initial_ecu_version;
        vin_db.store["vindata:" + v.vin] = VinData{v.vin, v.model}.to_term();
        Digest d = term_digest(sa_t, *crypto_);
        MaterialRecord rec{d, MaterialKind::SecurityAccessKey, "PSA", 0};
        registry_[d.hex()] = RegistryEntry{rec, sa_t};
        trace_.records.push_back(rec);
    }
}

void World::seed_knowledge() {
    for (const auto& [holder, cert] : directory_.certs) adversary_.learn(cert.to_term());
}

const EntityState& World::entity(const EntityId& id) const {
    auto it = entities_.find(id);
    if (it == entities_.end()) fail(ErrorCode::ConfigError, "no entity " + id.name());
    return it->second;
}

EntityState& World::entity(const EntityId& id) {
    auto it = entities_.find(id);
    if (it == entities_.end()) fail(ErrorCode::ConfigError, "no entity " + id.name());
    return it->second;
}

EntityId World::id_for(Role role, const UpdateRoundId& round) const {
    return EntityId{role, is_vehicle_role(role) ? round.vin : std::nullopt};
}

const RoundContext* World::context(const EntityId& id, const UpdateRoundId& round) const {
    auto it = entities_.find(id);
    if (it == entities_.end()) return nullptr;
    auto c = it->second.contexts.find(round);
    return c == it->second.contexts.end() ? nullptr : &c->second;
}

Software World::stage_release(std::uint64_t version) {
    Software sw{version, content_rng_.bytes(64)};
    entity(EntityId{Role::Supplier, std::nullopt}).store["release"] = sw.to_term();
    return sw;
}

UpdateRoundId World::open_round(std::optional<std::string> vin, std::vector<SubProblem> plan) {
    return open_round(std::move(vin), std::move(plan), config_.round_ttl);
}

UpdateRoundId World::open_round(std::optional<std::string> vin, std::vector<SubProblem> plan, std::uint64_t ttl) {
    if (vin && !entities_.count(EntityId{Role::CDA, vin})) fail(ErrorCode::ConfigError, "unknown vehicle " + *vin);
    UpdateRoundId r = rounds_.new_round(std::move(vin), clock_.now, ttl);
    open_.insert(r);
    trace_.records.push_back(RoundRecord{r, std::move(plan)});
    return r;
}

SubProblem World::current(const UpdateRoundId& round) const {
    auto it = current_.find(round);
    return it == current_.end() ? SubProblem::SecureSoftwareFiles : it->second;
}

RoundContext& World::context_for(EntityState& e, const UpdateRoundId& round) {
    auto it = e.contexts.find(round);
    if (it != e.contexts.end()) return it->second;
    RoundContext ctx;
    ctx.round = round;
    ctx.owner = e.id.name();
    // The CMS is provisioned with each vehicle's certificate.
    if (e.id.role == Role::CMS && round.vin)
        ctx.materials[MaterialKind::VehicleCert] = directory_.cert("Vehicle[" + *round.vin + "]").to_term();
    return e.contexts.emplace(round, std::move(ctx)).first->second;
}

Services World::services(const RoundContext& ctx) {
    ReleaseInfo release{config_.software_id, {}};
    if (ctx.round.vin) {
        auto it = entities_.find(EntityId{Role::ECU, ctx.round.vin});
        if (it != entities_.end()) release.onboard[config_.software_id] = it->second.ecu.installed_version;
    }
    return Services{*crypto_, crypto_rng_, directory_, clock_.now, std::move(release), {}};
}

bool World::kick(Role role, const UpdateRoundId& round, SubProblem sp) {
    EntityState& e = entity(id_for(role, round));
    if (e.finished.count(round) || expired(round)) return false;
    return run_task(e, round, [&](RoundContext& ctx, Services& s) { initiate(e, ctx, sp, s); });
}

bool World::run_task(EntityState& e, const UpdateRoundId& round,
                     const std::function<void(RoundContext&, Services&)>& task) {
    RoundContext& ctx = context_for(e, round);
    Services s = services(ctx);
    std::string failure;
    try {
        task(ctx, s);
    } catch (const Error& err) {
        if (err.code() == ErrorCode::UnexpectedMessage) return true;
        failure = err.what();
    } catch (const std::exception& err) {
        failure = err.what();
    }
    if (!failure.empty()) {
        trace_.records.push_back(StatusRecord{clock_.now, round, e.id.name(), "abort: " + failure});
        try {
            emit(e, round, subproblem(current(round)).abort_label(), {});
        } catch (const Error& err) {
            if (err.code() != ErrorCode::RoundExpired) throw;
        }
        stop_entity(e, round);
        aborted_.insert(round);
        return false;
    }
    commit(e, round, s.out);
    return true;
}

void World::register_material(const EntityState& e, const UpdateRoundId& round, MaterialKind kind, const Term& t) {
    Digest d = term_digest(t, *crypto_);
    if (kind == MaterialKind::Software) release_software_ = t;
    if (kind == MaterialKind::SoftwareKey) release_key_ = t;
    if (registry_.count(d.hex())) return;
    MaterialRecord rec{d, kind, e.id.name(), round.nonce};
    registry_[d.hex()] = RegistryEntry{rec, t};
    trace_.records.push_back(rec);
}

void World::emit(EntityState& e, const UpdateRoundId& round, std::string label, std::vector<MaterialRef> materials) {
    RoundContext ctx;
    ctx.round = round;
    ctx.owner = e.id.name();
    std::vector<HandlingEvent> out;
    emit_event(ctx, std::move(label), std::move(materials), clock_, out);
    trace_.records.push_back(std::move(out.front()));
}

void World::commit(EntityState& e, const UpdateRoundId& round, std::vector<Action>& out) {
    for (auto& a : out) {
        if (e.finished.count(round)) return;
        if (auto* r = std::get_if<Register>(&a)) {
            register_material(e, round, r->kind, r->term);
        } else if (auto* em = std::get_if<Emit>(&a)) {
            try {
                emit(e, round, subproblem(em->sp).label(em->label), std::move(em->materials));
            } catch (const Error& err) {
                if (err.code() != ErrorCode::RoundExpired) throw;
                advance_to(round.expiry);
                return;
            }
        } else if (auto* snd = std::get_if<Send>(&a)) {
            ChannelId ch = channel_between(e.id, snd->to);
            Envelope env{ch, e.id, snd->to, round, 0, snd->message.encode(), InjectOrigin::Honest};
            std::uint64_t id = net_.send(std::move(env), clock_.now);
            if (ch.insecure()) adversary_.on_send(net_, id, clock_.now, *crypto_);
        } else if (auto* st = std::get_if<Status>(&a)) {
            trace_.records.push_back(StatusRecord{clock_.now, round, e.id.name(), st->text});
        }
    }
}

void World::stop_entity(EntityState& e, const UpdateRoundId& round) {
    e.contexts.erase(round);
    e.vaults.erase(round);
    e.finished.insert(round);
}

void World::process_expiry() {
    for (const auto& r : open_) {
        if (expired_.count(r) || check_expiry(r, clock_.now) == Liveness::Live) continue;
        expired_.insert(r);
        for (auto& [id, e] : entities_) {
            if (!e.contexts.count(r)) continue;
            trace_.records.push_back(HandlingEvent{clock_.now, r, e.id.name(), std::string(kExpireLabel), {}});
            stop_entity(e, r);
        }
    }
}

void World::deliver(const Pending& p) {
    if (p.delivery_time > clock_.now) clock_.now = p.delivery_time;
    process_expiry();
    const Envelope& env = p.env;
    auto it = entities_.find(env.receiver);
    if (it == entities_.end()) return;
    EntityState& e = it->second;
    if (e.finished.count(env.round) || check_expiry(env.round, clock_.now) == Liveness::Expired) return;
    if (e.dedup.accept(env.channel.name(), env.round, crypto_->hash(env.payload)) == Freshness::Duplicate) {
        ++duplicates_;
        return;
    }
    Term message;
    try {
        message = Term::decode(env.payload);
    } catch (const Error&) {
        return;
    }
    ++task_deliveries_;
    run_task(e, env.round, [&](RoundContext& ctx, Services& s) { handle(e, ctx, env, message, s); });
}

void World::run_until_quiet() {
    while (auto p = net_.step()) deliver(*p);
}

void World::advance_to(std::uint64_t t) {
    if (t > clock_.now) clock_.now = t;
    process_expiry();
}

void World::halt_all(const UpdateRoundId& round) {
    for (auto& [id, e] : entities_) {
        if (!e.contexts.count(round)) continue;
        try {
            emit(e, round, std::string(kHaltLabel), {});
        } catch (const Error& err) {
            if (err.code() != ErrorCode::RoundExpired) throw;
            advance_to(round.expiry);
            return;
        }
        stop_entity(e, round);
    }
}

void World::note(const UpdateRoundId& round, const std::string& entity, std::string text) {
    trace_.records.push_back(StatusRecord{clock_.now, round, entity, std::move(text)});
}

void World::inject(const std::string& direction, const UpdateRoundId& round, Bytes payload) {
    auto arrow = direction.find("->");
    if (arrow == std::string::npos) fail(ErrorCode::ConfigError, "direction must look like A->B");
    auto from = parse_role(direction.substr(0, arrow));
    auto to = parse_role(direction.substr(arrow + 2));
    if (!from || !to) fail(ErrorCode::UnknownChannel, "unknown role in " + direction);
    EntityId sender = id_for(*from, round), receiver = id_for(*to, round);
    Envelope env{channel_between(sender, receiver), sender, receiver, round, 0, std::move(payload),
                 InjectOrigin::Adversary};
    net_.inject(std::move(env), clock_.now);
}

std::vector<std::pair<std::string, Term>> World::resolve_secrets(const UpdateRoundId& round, SubProblem sp) const {
    std::vector<std::pair<std::string, Term>> out;
    auto add = [&](const std::string& name, const Term& t) {
        const Term& plain = t.is_signed() ? t.payload() : t;
        for (const auto& [n, existing] : out)
            if (n == name && existing == plain) return;
        out.emplace_back(name, plain);
    };
    for (const auto& secret : subproblem(sp).secrets) {
        if (!secret.key_holder.empty()) {
            std::string holder = secret.key_holder;
            if (holder == "Vehicle" || holder == "CDA") {
                if (!round.vin) continue;
                holder += "[" + *round.vin + "]";
            }
            auto it = private_keys_.find(holder);
            if (it != private_keys_.end()) add(secret.name, it->second.to_term());
            continue;
        }
        for (MaterialKind k : secret.kinds) {
            for (const auto& [hex, entry] : registry_)
                if (entry.record.kind == k && entry.record.round_nonce == round.nonce) add(secret.name, entry.term);
            // Vehicle rounds handle the release prepared earlier and the
            // vehicle's provisioned unlock key.
            if (round.vin) {
                if (k == MaterialKind::Software && release_software_) add(secret.name, *release_software_);
                if (k == MaterialKind::SoftwareKey && release_key_) add(secret.name, *release_key_);
                if (k == MaterialKind::SecurityAccessKey) {
                    const auto& cms = entity(EntityId{Role::CMS, std::nullopt});
                    auto sa = cms.store.find("sakey:" + *round.vin);
                    if (sa != cms.store.end()) add(secret.name, sa->second);
                }
            }
        }
    }
    return out;
}

void World::snapshot_secrets(const UpdateRoundId& round, SubProblem sp) {
    SecrecyRecord rec{round, sp, {}, resolve_secrets(round, sp)};
    const auto& observed = adversary_.knowledge().observed();
    rec.knowledge.assign(observed.begin(), observed.end());
    trace_.records.push_back(std::move(rec));
}

}  // namespace unisuf
