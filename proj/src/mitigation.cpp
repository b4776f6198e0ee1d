#include "pfs/mitigation.hpp"

#include <stdexcept>

#include <sodium.h>

namespace pfs::mitigation {

namespace {

constexpr std::string_view kDomainTag = "pfs-confirmation-v1";

void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw std::runtime_error("libsodium initialisation failed");
}

void put_string(Bytes& out, std::string_view s) {
  put_u32be(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

std::string hex(ByteView b) {
  std::string out(b.size() * 2 + 1, '\0');
  sodium_bin2hex(out.data(), out.size(), b.data(), b.size());
  out.pop_back();
  return out;
}

Bytes unhex(const std::string& s) {
  Bytes out(s.size() / 2);
  std::size_t len = 0;
  if (s.size() % 2 != 0 ||
      sodium_hex2bin(out.data(), out.size(), s.data(), s.size(), nullptr, &len, nullptr) != 0 ||
      len != out.size()) {
    throw std::invalid_argument("bad hex string");
  }
  return out;
}

}  // namespace

const char* to_string(Decision d) { return d == Decision::Granted ? "granted" : "denied"; }

const char* to_string(VerifyStep step) {
  switch (step) {
    case VerifyStep::None: return "none";
    case VerifyStep::Signature: return "signature";
    case VerifyStep::Binding: return "binding";
    case VerifyStep::Decision: return "decision";
    case VerifyStep::Freshness: return "freshness";
    case VerifyStep::Replay: return "replay";
  }
  return "unknown";
}

Bytes canonical_encoding(const ConfirmationDialog& dialog, Decision decision) {
  Bytes out;
  put_string(out, kDomainTag);
  put_string(out, dialog.agent_id);
  put_string(out, dialog.pfw_domain);
  put_string(out, dialog.servicehost);
  put_u16be(out, static_cast<std::uint16_t>(dialog.serviceport));
  put_u64be(out, static_cast<std::uint64_t>(dialog.issued_at));
  out.insert(out.end(), dialog.nonce.begin(), dialog.nonce.end());
  out.push_back(static_cast<std::uint8_t>(decision));
  return out;
}

ConfirmationDialog build_dialog(const std::string& agent_id, const config::Mapping& mapping,
                                std::int64_t now_seconds, std::mt19937_64& rng) {
  ConfirmationDialog d;
  d.agent_id = agent_id;
  d.pfw_domain = mapping.domain;
  d.servicehost = mapping.servicehost;
  d.serviceport = mapping.serviceport;
  d.issued_at = now_seconds;
  for (std::size_t i = 0; i < d.nonce.size(); i += 8) {
    const std::uint64_t w = rng();
    for (std::size_t j = 0; j < 8; ++j) d.nonce[i + j] = static_cast<std::uint8_t>(w >> (8 * j));
  }
  return d;
}

SimulatedTee::SimulatedTee(std::string key_id, std::uint64_t seed) : key_id_(std::move(key_id)) {
  ensure_sodium();
  std::array<std::uint8_t, crypto_sign_SEEDBYTES> key_seed{};
  std::mt19937_64 gen(seed);
  for (std::size_t i = 0; i < key_seed.size(); i += 8) {
    const std::uint64_t w = gen();
    for (std::size_t j = 0; j < 8; ++j) key_seed[i + j] = static_cast<std::uint8_t>(w >> (8 * j));
  }
  crypto_sign_seed_keypair(public_key_.data(), secret_key_.data(), key_seed.data());
  sodium_memzero(key_seed.data(), key_seed.size());
}

PublicKey SimulatedTee::public_key() const { return PublicKey{key_id_, public_key_}; }

SignedConfirmation SimulatedTee::sign(const ConfirmationDialog& dialog, Decision decision) const {
  if (!physical_presence_) {
    throw TeeError(TeeErrc::NoPresence, "confirmation requires physical presence at the device");
  }
  const Bytes msg = canonical_encoding(dialog, decision);
  SignedConfirmation c;
  c.dialog = dialog;
  c.decision = decision;
  c.signer_key_id = key_id_;
  c.signature.resize(crypto_sign_BYTES);
  crypto_sign_detached(c.signature.data(), nullptr, msg.data(), msg.size(), secret_key_.data());
  return c;
}

void ConfirmationVerifier::trust(const PublicKey& key) {
  std::lock_guard lock(mu_);
  trusted_[key.key_id] = key;
}

bool ConfirmationVerifier::trusts(const std::string& key_id) const {
  std::lock_guard lock(mu_);
  return trusted_.contains(key_id);
}

VerifyResult ConfirmationVerifier::check_locked(const SignedConfirmation& c, const RequestedMapping& req,
                                                std::int64_t now) const {
  ensure_sodium();
  const auto key = trusted_.find(c.signer_key_id);
  if (key == trusted_.end()) return {false, VerifyStep::Signature, "signer key not trusted"};
  const Bytes msg = canonical_encoding(c.dialog, c.decision);
  if (c.signature.size() != crypto_sign_BYTES ||
      crypto_sign_verify_detached(c.signature.data(), msg.data(), msg.size(), key->second.bytes.data()) != 0) {
    return {false, VerifyStep::Signature, "signature does not verify"};
  }
  if (c.dialog.pfw_domain != req.pfw_domain || c.dialog.servicehost != req.servicehost ||
      c.dialog.serviceport != req.serviceport) {
    return {false, VerifyStep::Binding, "dialog does not state the requested mapping"};
  }
  if (c.decision != Decision::Granted) return {false, VerifyStep::Decision, "authorization was denied"};
  if (c.dialog.issued_at > now || now - c.dialog.issued_at > freshness_window_) {
    return {false, VerifyStep::Freshness, "confirmation is stale"};
  }
  if (seen_.contains(c.dialog.nonce)) return {false, VerifyStep::Replay, "confirmation already used"};
  return {true, VerifyStep::None, ""};
}

VerifyResult ConfirmationVerifier::check(const SignedConfirmation& c, const RequestedMapping& req,
                                         std::int64_t now) const {
  std::lock_guard lock(mu_);
  return check_locked(c, req, now);
}

VerifyResult ConfirmationVerifier::verify(const SignedConfirmation& c, const RequestedMapping& req,
                                          std::int64_t now) {
  std::lock_guard lock(mu_);
  VerifyResult r = check_locked(c, req, now);
  if (r.ok) seen_.insert(c.dialog.nonce);
  return r;
}

nlohmann::ordered_json to_json(const SignedConfirmation& c) {
  nlohmann::ordered_json d;
  d["agent_id"] = c.dialog.agent_id;
  d["pfw_domain"] = c.dialog.pfw_domain;
  d["servicehost"] = c.dialog.servicehost;
  d["serviceport"] = c.dialog.serviceport;
  d["issued_at"] = c.dialog.issued_at;
  d["nonce"] = hex(c.dialog.nonce);
  nlohmann::ordered_json j;
  j["dialog"] = std::move(d);
  j["decision"] = to_string(c.decision);
  j["signature"] = hex(c.signature);
  j["signer_key_id"] = c.signer_key_id;
  return j;
}

SignedConfirmation confirmation_from_json(const nlohmann::ordered_json& j) {
  try {
    SignedConfirmation c;
    const auto& d = j.at("dialog");
    c.dialog.agent_id = d.at("agent_id").get<std::string>();
    c.dialog.pfw_domain = d.at("pfw_domain").get<std::string>();
    c.dialog.servicehost = d.at("servicehost").get<std::string>();
    c.dialog.serviceport = d.at("serviceport").get<int>();
    c.dialog.issued_at = d.at("issued_at").get<std::int64_t>();
    const Bytes nonce = unhex(d.at("nonce").get<std::string>());
    if (nonce.size() != c.dialog.nonce.size()) throw std::invalid_argument("nonce must be 16 bytes");
    std::copy(nonce.begin(), nonce.end(), c.dialog.nonce.begin());
    const auto decision = j.at("decision").get<std::string>();
    if (decision == "granted") {
      c.decision = Decision::Granted;
    } else if (decision == "denied") {
      c.decision = Decision::Denied;
    } else {
      throw std::invalid_argument("unknown decision \"" + decision + "\"");
    }
    c.signature = unhex(j.at("signature").get<std::string>());
    c.signer_key_id = j.at("signer_key_id").get<std::string>();
    return c;
  } catch (const nlohmann::ordered_json::exception& e) {
    throw std::invalid_argument(std::string("malformed confirmation: ") + e.what());
  }
}

}  // namespace pfs::mitigation
