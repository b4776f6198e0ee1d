#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>

#include <json.hpp>

#include "pfs/bytes.hpp"
#include "pfs/config.hpp"
#include "pfs/error.hpp"

// Protected-confirmation authorization. Before a mapping is exposed, the
// device owner approves it on a dialog rendered by a TEE; the TEE signs the
// dialog together with the decision, and the server only exposes mappings
// whose signed, granted, fresh, unreplayed confirmation matches exactly.
namespace pfs::mitigation {

using Nonce = std::array<std::uint8_t, 16>;

struct ConfirmationDialog {
  std::string agent_id;
  std::string pfw_domain;
  std::string servicehost;
  int serviceport = 0;
  std::int64_t issued_at = 0;  // simulated seconds
  Nonce nonce{};

  bool operator==(const ConfirmationDialog&) const = default;
};

enum class Decision : std::uint8_t { Granted = 1, Denied = 2 };

const char* to_string(Decision d);

struct SignedConfirmation {
  ConfirmationDialog dialog;
  Decision decision = Decision::Denied;
  Bytes signature;
  std::string signer_key_id;

  bool operator==(const SignedConfirmation&) const = default;
};

// Deterministic encoding that is signed: a domain tag, then each field in
// fixed order, strings as u32 length + bytes, port as u16, time as u64,
// the raw nonce, and the decision byte.
Bytes canonical_encoding(const ConfirmationDialog& dialog, Decision decision);

ConfirmationDialog build_dialog(const std::string& agent_id, const config::Mapping& mapping,
                                std::int64_t now_seconds, std::mt19937_64& rng);

enum class TeeErrc { NoPresence, BadKey };

using TeeError = BasicError<TeeErrc>;

struct PublicKey {
  std::string key_id;
  std::array<std::uint8_t, 32> bytes{};
};

class SimulatedTee {
 public:
  // Derives an Ed25519 keypair from the seed so runs are reproducible.
  SimulatedTee(std::string key_id, std::uint64_t seed);

  void set_physical_presence(bool present) { physical_presence_ = present; }
  bool physical_presence() const { return physical_presence_; }
  PublicKey public_key() const;
  const std::string& key_id() const { return key_id_; }

  // Throws TeeError(NoPresence) unless someone is physically at the device.
  SignedConfirmation sign(const ConfirmationDialog& dialog, Decision decision) const;

 private:
  std::string key_id_;
  std::array<std::uint8_t, 32> public_key_{};
  std::array<std::uint8_t, 64> secret_key_{};
  bool physical_presence_ = false;
};

inline SignedConfirmation tee_sign(const SimulatedTee& tee, const ConfirmationDialog& dialog, Decision decision) {
  return tee.sign(dialog, decision);
}

enum class VerifyStep { None = 0, Signature = 1, Binding = 2, Decision = 3, Freshness = 4, Replay = 5 };

const char* to_string(VerifyStep step);

struct VerifyResult {
  bool ok = false;
  VerifyStep failed_step = VerifyStep::None;
  std::string reason;
};

struct RequestedMapping {
  std::string pfw_domain;
  std::string servicehost;
  int serviceport = 0;
};

// Holds the trusted TEE keys and the replay set. verify() is safe to call
// from several threads.
class ConfirmationVerifier {
 public:
  explicit ConfirmationVerifier(std::int64_t freshness_window = 300) : freshness_window_(freshness_window) {}

  void trust(const PublicKey& key);
  bool trusts(const std::string& key_id) const;

  // Checks signature, binding, decision, freshness, and replay in that order
  // and reports the first failure. A passing confirmation's nonce is consumed.
  VerifyResult verify(const SignedConfirmation& confirmation, const RequestedMapping& requested,
                      std::int64_t now_seconds);

  // Same checks without consuming the nonce.
  VerifyResult check(const SignedConfirmation& confirmation, const RequestedMapping& requested,
                     std::int64_t now_seconds) const;

 private:
  VerifyResult check_locked(const SignedConfirmation& confirmation, const RequestedMapping& requested,
                            std::int64_t now_seconds) const;

  std::int64_t freshness_window_;
  std::map<std::string, PublicKey> trusted_;
  std::set<Nonce> seen_;
  mutable std::mutex mu_;
};

inline VerifyResult verify_confirmation(ConfirmationVerifier& verifier, const SignedConfirmation& confirmation,
                                        const RequestedMapping& requested, std::int64_t now_seconds) {
  return verifier.verify(confirmation, requested, now_seconds);
}

nlohmann::ordered_json to_json(const SignedConfirmation& c);
// Throws std::invalid_argument on malformed input.
SignedConfirmation confirmation_from_json(const nlohmann::ordered_json& j);

}  // namespace pfs::mitigation
