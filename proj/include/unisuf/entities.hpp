#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "unisuf/crypto.hpp"
#include "unisuf/materials.hpp"
#include "unisuf/net_sim.hpp"
#include "unisuf/roles.hpp"
#include "unisuf/round_engine.hpp"
#include "unisuf/subproblems.hpp"

namespace unisuf {

// ---------------------------------------------------------------- ECU

struct EcuState {
    std::uint64_t installed_version = 0;
    bool locked = true;
    std::optional<Bytes> pending_challenge;
    std::optional<Bytes> unlocked_by;  // challenge answered by the current unlock
    SymKey security_access_key;
};

Bytes ecu_challenge(EcuState& e, Rng& rng);

enum class UnlockResult { Unlocked, Rejected };
// The pending challenge is consumed by any attempt, right or wrong.
UnlockResult ecu_verify_response(EcuState& e, ByteView response, const CryptoBackend& crypto);

struct InstallResult {
    bool installed = false;
    std::string reason;  // Locked, Malformed, BadSignature or StaleVersion when rejected
    std::uint64_t version = 0;
};

// Installs iff unlocked, supplier-signed and strictly newer. Every attempt
// relocks the ECU.
InstallResult ecu_install(EcuState& e, const Term& sw_signed, const PublicKey& supplier_pk,
                          const CryptoBackend& crypto);

// ---------------------------------------------------------------- CSA

// Keys held inside the consumer security agent for one round. Each key is
// bound to the single operation its manifest policy names.
class CsaVault {
public:
    // Verifies the signed manifest, unwraps it with the vehicle key and
    // stores the key under `ref`.
    void associate(const std::string& ref, const Term& signed_manifest, const PublicKey& signer_pk,
                   const PrivateKey& vehicle_sk, std::string_view expected_policy, const CryptoBackend& crypto);
    void associate_mkm(const Term& signed_mkm, const PublicKey& psa_pk, const PrivateKey& vehicle_sk,
                       const CryptoBackend& crypto);

    // Runs `operation` with the referenced key. Decrypt operations return
    // the plaintext bytes, unwrap operations the encoded key term.
    Bytes use(const std::string& ref, std::string_view operation, const Term& input, const CryptoBackend& crypto) const;
    bool has(const std::string& ref) const { return keys_.count(ref) != 0; }
    // Only for secrecy bookkeeping and tests; never placed in a message.
    const SymKey* peek(const std::string& ref) const;

private:
    struct Entry {
        SymKey key;
        std::string policy;
    };
    std::map<std::string, Entry> keys_;
};

// ---------------------------------------------------------------- world plumbing

struct Directory {
    PublicKey root_pk;
    std::map<std::string, Certificate> certs;  // holder id -> certificate

    const Certificate& cert(const std::string& holder) const;
    // The certificate's key after validation against the root.
    PublicKey key(const std::string& holder, const CryptoBackend& crypto) const;
};

struct EntityState {
    EntityId id;
    std::map<UpdateRoundId, RoundContext> contexts;
    std::set<UpdateRoundId> finished;
    DedupLog dedup;
    std::optional<KeyPair> keys;
    std::map<Role, PrivateKey> delegated;  // signing keys the PSS holds for others
    std::map<std::string, Term> store;
    std::map<std::string, std::deque<Term>> queues;
    std::map<UpdateRoundId, CsaVault> vaults;
    EcuState ecu;
};

struct Send {
    EntityId to;
    Term message;
};
struct Emit {
    SubProblem sp;
    int label;
    std::vector<MaterialRef> materials;
};
struct Register {
    MaterialKind kind;
    Term term;
};
struct Status {
    std::string text;
};

using Action = std::variant<Send, Emit, Register, Status>;

struct ReleaseInfo {
    std::string software_id;
    std::map<std::string, std::uint64_t> onboard;  // the vehicle's readout, for the CDA
};

// What a handler may touch besides its own state. Actions are collected in
// the outbox and committed by the world only if the handler returns
// normally, so each handler run is one atomic step.
struct Services {
    const CryptoBackend& crypto;
    Rng& rng;
    const Directory& directory;
    std::uint64_t now;
    ReleaseInfo release;
    std::vector<Action> out;

    void send(EntityId to, Term message) { out.push_back(Send{std::move(to), std::move(message)}); }
    void emit(SubProblem sp, int label, std::vector<MaterialRef> m) { out.push_back(Emit{sp, label, std::move(m)}); }
    void register_material(MaterialKind kind, Term t) { out.push_back(Register{kind, std::move(t)}); }
    void status(std::string text) { out.push_back(Status{std::move(text)}); }
    MaterialRef ref(MaterialKind kind, const Term& t) const { return material_ref(kind, t, crypto); }
};

Term make_message(std::string_view step, std::vector<Term> items);
Term request_flag(std::string_view what);
Term success_flag(std::string_view what);

// Initiation task of `self` for a sub-problem.
void initiate(EntityState& self, RoundContext& ctx, SubProblem sp, Services& s);
// Listening/continuation task for a received message. Throws on validation
// failure; UnexpectedMessage means the message is ignored.
void handle(EntityState& self, RoundContext& ctx, const Envelope& env, const Term& message, Services& s);

}  // namespace unisuf
