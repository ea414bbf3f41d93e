#ifndef GEMOMBUS_KMF_KMF_HPP
#define GEMOMBUS_KMF_KMF_HPP

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gemombus/config/audit.hpp"
#include "gemombus/crypto/crypto.hpp"
#include "gemombus/util/clock.hpp"
#include "gemombus/util/rng.hpp"
#include "gemombus/wire/envelope.hpp"

namespace gemom::kmf {

class KmfError : public std::runtime_error {
 public:
  enum class Kind {
    UnknownPrincipal,
    DuplicateRegistration,
    ForeignManager,
    Unauthorized,
    StaleKey,
    BadRequest,
  };

  KmfError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

enum class Right { Publish, Subscribe };

struct PrincipalRecord {
  std::string principal;
  crypto::PublicKey public_key;
  std::vector<std::string> groups;
  Bytes certificate;  // KMF signature over certificate_bytes()
};

/// Canonical byte form of the name <-> key <-> groups binding the KMF attests.
Bytes certificate_bytes(const std::string& principal, const crypto::PublicKey& key,
                        const std::vector<std::string>& groups);

struct TopicKey {
  enum class Status { Active, Revoked };

  std::string key_id;
  std::string topic;
  int bits = 128;  // 128 | 192 | 256
  Bytes material;  // bits/8 bytes
  TimestampMs created = 0;
  Status status = Status::Active;
};

struct SecurityToken {
  std::string token_id;
  std::string subject;
  std::string pattern;
  std::set<Right> rights;
  int auth_strength = 0;  // 0..5, recorded at issuance
  TimestampMs not_before = 0;
  TimestampMs not_after = 0;
  Bytes digest;     // sha256 of the canonical fields above
  Bytes signature;  // KMF signature over digest

  bool has_right(Right r) const { return rights.count(r) > 0; }

  /// Canonical bytes of all fields except digest and signature.
  Bytes canonical() const;

  std::string serialize() const;
  static std::optional<SecurityToken> parse(std::string_view text);
};

struct RevocationNotice {
  bool all = false;
  std::vector<std::string> revoked;  // key ids when !all
  std::string reason;                // threat | schedule | manual
  TimestampMs at = 0;
  int new_bits = 128;

  std::string serialize() const;
  static std::optional<RevocationNotice> parse(std::string_view text);
};

enum class TokenStatus { Valid, BadSignature, Tampered, Expired, Revoked };

std::string to_string(TokenStatus s);

/// Pure token verification against a KMF verify key, a revoked-token set and
/// a clock instant. Usable on any node without talking to the KMF.
TokenStatus check_token(const SecurityToken& t, const crypto::PublicKey& kmf_pub,
                        const std::set<std::string>& revoked_tokens, TimestampMs now);

/// Broker-side verifier: holds the KMF verify key plus revocation state
/// learned from the revocation topic.
class TokenVerifier {
 public:
  explicit TokenVerifier(crypto::PublicKey kmf_pub) : kmf_pub_(std::move(kmf_pub)) {}

  TokenStatus verify(const SecurityToken& t, TimestampMs now) const {
    return check_token(t, kmf_pub_, revoked_tokens_, now);
  }

  void revoke_token(const std::string& token_id) { revoked_tokens_.insert(token_id); }
  void apply_key_revocation(const RevocationNotice& n);
  bool key_revoked(const std::string& key_id) const;
  /// Record a key id observed in traffic so a later revoke-ALL covers it.
  void note_key_seen(const std::string& key_id) { live_keys_.insert(key_id); }
  const crypto::PublicKey& kmf_public() const { return kmf_pub_; }

 private:
  crypto::PublicKey kmf_pub_;
  std::set<std::string> revoked_tokens_;
  std::set<std::string> revoked_keys_;
  std::set<std::string> live_keys_;  // key ids seen since the last revoke-ALL
};

struct WrappedTopicKey {
  std::string key_id;
  std::string topic;
  int bits = 128;
  std::string cipher;  // e.g. "aes-128-gcm"
  crypto::WrappedBlob blob;

  std::string serialize() const;
  static std::optional<WrappedTopicKey> parse(std::string_view text);
};

/// The Key Management Framework service: certification authority, per-topic
/// symmetric keys, token issuance, revocation, threat-driven regeneration.
class KmfService {
 public:
  KmfService(std::string kmf_id, Rng& rng, const Clock& clock,
             config::AuditLog* audit = nullptr);

  const std::string& id() const { return kmf_id_; }
  const crypto::PublicKey& root_public() const { return root_.pub; }
  const crypto::KeyPair& root_keys() const { return root_; }

  // -- principal registry (certification authority role) --
  PrincipalRecord register_principal(const std::string& name, const crypto::PublicKey& key,
                                     std::vector<std::string> groups);
  const PrincipalRecord* find_principal(const std::string& name) const;
  bool verify_certificate(const PrincipalRecord& rec) const;

  // -- secure topics and keys --
  std::string register_secure_topic(const std::string& topic, const std::string& owner,
                                    int requested_bits);
  void grant_topic_access(const std::string& topic, const std::string& principal);
  WrappedTopicKey request_topic_key(const std::string& topic, const std::string& requester);
  /// Marks a topic as managed elsewhere; registrations for it then fail.
  void adopt_foreign_topic(const std::string& topic, const std::string& manager_id);

  const TopicKey* active_key(const std::string& topic) const;
  const TopicKey* key_by_id(const std::string& key_id) const;

  // -- tokens --
  SecurityToken issue_token(const std::string& subject, const std::string& pattern,
                            std::set<Right> rights, int auth_strength, TimestampMs ttl_ms);
  TokenStatus verify_token(const SecurityToken& t, TimestampMs now) const;
  void revoke_token(const std::string& token_id);

  // -- revocation and adaptation --
  RevocationNotice revoke_all(int new_bits, const std::string& reason);
  void set_mandated_bits(int bits);
  int mandated_bits() const { return mandated_bits_; }

  /// Broadcast hook; fired exactly once per revocation event, before any new
  /// key can be issued.
  std::function<void(const RevocationNotice&)> on_revocation;

 private:
  TopicKey& mint_key(const std::string& topic, int bits);
  void audit(config::AuditCategory cat, const std::string& actor,
             std::map<std::string, std::string> detail);

  std::string kmf_id_;
  Rng& rng_;
  const Clock& clock_;
  config::AuditLog* audit_ = nullptr;
  crypto::KeyPair root_;

  std::map<std::string, PrincipalRecord> principals_;
  std::map<std::string, std::string> topic_manager_;      // topic -> managing KMF id
  std::map<std::string, std::string> topic_owner_;        // topic -> owning principal
  std::map<std::string, std::set<std::string>> access_;   // topic -> authorized principals
  std::map<std::string, std::string> active_by_topic_;    // topic -> active key id
  std::map<std::string, TopicKey> keys_;                  // key id -> key
  std::set<std::string> revoked_tokens_;
  int mandated_bits_ = 128;
  std::uint64_t key_counter_ = 0;
};

// -- message signing (any principal) --

/// Returns a copy of e carrying sig over canonical_bytes(e).
wire::Envelope sign_envelope(const wire::Envelope& e, const std::string& signer,
                             std::span<const std::uint8_t> sign_priv);
bool verify_envelope(const wire::Envelope& e, const crypto::PublicKey& signer_key);

/// Keyed-hash topic alias: deterministic, collision-resistant, reveals
/// nothing of the plaintext name. Defeats selective-drop matching.
std::string topic_pseudonym(std::string_view topic, std::span<const std::uint8_t> group_secret);

/// Envelope payload encryption under the active TopicKey.
wire::Envelope encrypt_payload(wire::Envelope e, const TopicKey& key, Rng& rng);
std::optional<Bytes> decrypt_payload(const wire::Envelope& e, const TopicKey& key);

inline std::string cipher_name(int bits) {
  return "aes-" + std::to_string(bits) + "-gcm";
}

}  // namespace gemom::kmf

#endif
