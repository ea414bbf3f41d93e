#include "gemombus/kmf/kmf.hpp"

#include <json.hpp>

#include <algorithm>

namespace gemom::kmf {

namespace {

using nlohmann::json;

constexpr int kValidBits[] = {128, 192, 256};

bool valid_bits(int bits) {
  return std::find(std::begin(kValidBits), std::end(kValidBits), bits) != std::end(kValidBits);
}

std::string right_name(Right r) { return r == Right::Publish ? "publish" : "subscribe"; }

std::optional<Right> right_from(const std::string& s) {
  if (s == "publish") return Right::Publish;
  if (s == "subscribe") return Right::Subscribe;
  return std::nullopt;
}

}  // namespace

Bytes certificate_bytes(const std::string& principal, const crypto::PublicKey& key,
                        const std::vector<std::string>& groups) {
  json j;
  j["name"] = principal;
  j["sign_pub"] = base64_encode(key.sign_pub);
  j["kx_pub"] = base64_encode(key.kx_pub);
  j["groups"] = groups;
  return to_bytes(j.dump());
}

Bytes SecurityToken::canonical() const {
  json j;
  j["token_id"] = token_id;
  j["subject"] = subject;
  j["pattern"] = pattern;
  std::vector<std::string> rs;
  for (Right r : rights) rs.push_back(right_name(r));
  std::sort(rs.begin(), rs.end());
  j["rights"] = rs;
  j["auth_strength"] = auth_strength;
  j["not_before"] = not_before;
  j["not_after"] = not_after;
  return to_bytes(j.dump());
}

std::string SecurityToken::serialize() const {
  json j;
  j["token_id"] = token_id;
  j["subject"] = subject;
  j["pattern"] = pattern;
  std::vector<std::string> rs;
  for (Right r : rights) rs.push_back(right_name(r));
  std::sort(rs.begin(), rs.end());
  j["rights"] = rs;
  j["auth_strength"] = auth_strength;
  j["not_before"] = not_before;
  j["not_after"] = not_after;
  j["digest"] = base64_encode(digest);
  j["signature"] = base64_encode(signature);
  return j.dump();
}

std::optional<SecurityToken> SecurityToken::parse(std::string_view text) {
  try {
    const json j = json::parse(text);
    SecurityToken t;
    t.token_id = j.at("token_id").get<std::string>();
    t.subject = j.at("subject").get<std::string>();
    t.pattern = j.at("pattern").get<std::string>();
    for (const auto& r : j.at("rights")) {
      auto right = right_from(r.get<std::string>());
      if (!right) return std::nullopt;
      t.rights.insert(*right);
    }
    t.auth_strength = j.at("auth_strength").get<int>();
    t.not_before = j.at("not_before").get<TimestampMs>();
    t.not_after = j.at("not_after").get<TimestampMs>();
    auto digest = base64_decode(j.at("digest").get<std::string>());
    auto sig = base64_decode(j.at("signature").get<std::string>());
    if (!digest || !sig) return std::nullopt;
    t.digest = std::move(*digest);
    t.signature = std::move(*sig);
    return t;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

std::string RevocationNotice::serialize() const {
  json j;
  if (all) {
    j["revoked"] = "ALL";
  } else {
    j["revoked"] = revoked;
  }
  j["reason"] = reason;
  j["at"] = at;
  j["new_bits"] = new_bits;
  return j.dump();
}

std::optional<RevocationNotice> RevocationNotice::parse(std::string_view text) {
  try {
    const json j = json::parse(text);
    RevocationNotice n;
    const json& rv = j.at("revoked");
    if (rv.is_string() && rv.get<std::string>() == "ALL") {
      n.all = true;
    } else if (rv.is_array()) {
      for (const auto& id : rv) n.revoked.push_back(id.get<std::string>());
    } else {
      return std::nullopt;
    }
    n.reason = j.at("reason").get<std::string>();
    n.at = j.at("at").get<TimestampMs>();
    n.new_bits = j.at("new_bits").get<int>();
    return n;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

std::string to_string(TokenStatus s) {
  switch (s) {
    case TokenStatus::Valid: return "valid";
    case TokenStatus::BadSignature: return "bad-signature";
    case TokenStatus::Tampered: return "tampered";
    case TokenStatus::Expired: return "expired";
    case TokenStatus::Revoked: return "revoked";
  }
  return "bad-signature";
}

TokenStatus check_token(const SecurityToken& t, const crypto::PublicKey& kmf_pub,
                        const std::set<std::string>& revoked_tokens, TimestampMs now) {
  if (!crypto::verify(kmf_pub.sign_pub, t.digest, t.signature)) {
    return TokenStatus::BadSignature;
  }
  const crypto::Digest recomputed = crypto::sha256(t.canonical());
  if (t.digest.size() != recomputed.size() ||
      !std::equal(recomputed.begin(), recomputed.end(), t.digest.begin())) {
    return TokenStatus::Tampered;
  }
  if (now < t.not_before || now >= t.not_after) return TokenStatus::Expired;
  if (revoked_tokens.count(t.token_id) > 0) return TokenStatus::Revoked;
  return TokenStatus::Valid;
}

void TokenVerifier::apply_key_revocation(const RevocationNotice& n) {
  if (n.all) {
    revoked_keys_.insert(live_keys_.begin(), live_keys_.end());
    live_keys_.clear();
  } else {
    for (const auto& id : n.revoked) {
      revoked_keys_.insert(id);
      live_keys_.erase(id);
    }
  }
}

bool TokenVerifier::key_revoked(const std::string& key_id) const {
  return revoked_keys_.count(key_id) > 0;
}

std::string WrappedTopicKey::serialize() const {
  json j;
  j["key_id"] = key_id;
  j["topic"] = topic;
  j["bits"] = bits;
  j["cipher"] = cipher;
  j["eph_pub"] = base64_encode(blob.eph_pub);
  j["nonce"] = base64_encode(blob.nonce);
  j["ct"] = base64_encode(blob.ct);
  return j.dump();
}

std::optional<WrappedTopicKey> WrappedTopicKey::parse(std::string_view text) {
  try {
    const json j = json::parse(text);
    WrappedTopicKey w;
    w.key_id = j.at("key_id").get<std::string>();
    w.topic = j.at("topic").get<std::string>();
    w.bits = j.at("bits").get<int>();
    w.cipher = j.at("cipher").get<std::string>();
    auto eph = base64_decode(j.at("eph_pub").get<std::string>());
    auto nonce = base64_decode(j.at("nonce").get<std::string>());
    auto ct = base64_decode(j.at("ct").get<std::string>());
    if (!eph || !nonce || !ct) return std::nullopt;
    w.blob = {std::move(*eph), std::move(*nonce), std::move(*ct)};
    return w;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

KmfService::KmfService(std::string kmf_id, Rng& rng, const Clock& clock,
                       config::AuditLog* audit)
    : kmf_id_(std::move(kmf_id)), rng_(rng), clock_(clock), audit_(audit),
      root_(crypto::KeyPair::generate(rng)) {}

void KmfService::audit(config::AuditCategory cat, const std::string& actor,
                       std::map<std::string, std::string> detail) {
  if (audit_) audit_->write(cat, actor, std::move(detail));
}

PrincipalRecord KmfService::register_principal(const std::string& name,
                                               const crypto::PublicKey& key,
                                               std::vector<std::string> groups) {
  if (name.empty()) throw KmfError(KmfError::Kind::BadRequest, "empty principal name");
  PrincipalRecord rec;
  rec.principal = name;
  rec.public_key = key;
  rec.groups = std::move(groups);
  rec.certificate = crypto::sign(root_.sign_priv, certificate_bytes(name, key, rec.groups));
  principals_[name] = rec;
  audit(config::AuditCategory::Auth, name, {{"event", "principal-registered"}});
  return rec;
}

const PrincipalRecord* KmfService::find_principal(const std::string& name) const {
  auto it = principals_.find(name);
  return it == principals_.end() ? nullptr : &it->second;
}

bool KmfService::verify_certificate(const PrincipalRecord& rec) const {
  return crypto::verify(root_.pub.sign_pub,
                        certificate_bytes(rec.principal, rec.public_key, rec.groups),
                        rec.certificate);
}

TopicKey& KmfService::mint_key(const std::string& topic, int bits) {
  TopicKey key;
  key.key_id = "k" + std::to_string(++key_counter_) + "-" + to_hex(rng_.bytes(8));
  key.topic = topic;
  key.bits = bits;
  key.material = rng_.bytes(static_cast<std::size_t>(bits) / 8);
  key.created = clock_.now_ms();
  key.status = TopicKey::Status::Active;
  active_by_topic_[topic] = key.key_id;
  auto [it, _] = keys_.emplace(key.key_id, std::move(key));
  return it->second;
}

std::string KmfService::register_secure_topic(const std::string& topic,
                                              const std::string& owner, int requested_bits) {
  if (!valid_bits(requested_bits)) {
    throw KmfError(KmfError::Kind::BadRequest, "key size must be 128, 192 or 256");
  }
  if (!find_principal(owner)) {
    throw KmfError(KmfError::Kind::UnknownPrincipal, "unregistered principal: " + owner);
  }
  if (auto it = topic_manager_.find(topic); it != topic_manager_.end() && it->second != kmf_id_) {
    throw KmfError(KmfError::Kind::ForeignManager,
                   "topic managed by another KMF: " + it->second);
  }
  if (active_by_topic_.count(topic) > 0) {
    throw KmfError(KmfError::Kind::DuplicateRegistration, "topic already registered: " + topic);
  }
  const int bits = std::max(requested_bits, mandated_bits_);
  const TopicKey& key = mint_key(topic, bits);
  topic_manager_[topic] = kmf_id_;
  topic_owner_[topic] = owner;
  access_[topic].insert(owner);
  audit(config::AuditCategory::Key, owner,
        {{"event", "topic-registered"}, {"topic", topic}, {"bits", std::to_string(bits)}});
  return key.key_id;
}

void KmfService::grant_topic_access(const std::string& topic, const std::string& principal) {
  if (!find_principal(principal)) {
    throw KmfError(KmfError::Kind::UnknownPrincipal, "unregistered principal: " + principal);
  }
  access_[topic].insert(principal);
}

void KmfService::adopt_foreign_topic(const std::string& topic, const std::string& manager_id) {
  topic_manager_[topic] = manager_id;
}

WrappedTopicKey KmfService::request_topic_key(const std::string& topic,
                                              const std::string& requester) {
  const PrincipalRecord* rec = find_principal(requester);
  if (!rec) {
    throw KmfError(KmfError::Kind::UnknownPrincipal, "unregistered principal: " + requester);
  }
  if (topic_manager_.find(topic) == topic_manager_.end()) {
    throw KmfError(KmfError::Kind::BadRequest, "not a secure topic: " + topic);
  }
  auto acc = access_.find(topic);
  if (acc == access_.end() || acc->second.count(requester) == 0) {
    audit(config::AuditCategory::Authz, requester,
          {{"event", "key-request-denied"}, {"topic", topic}});
    throw KmfError(KmfError::Kind::Unauthorized, "not on authorization list for " + topic);
  }

  const TopicKey* key = active_key(topic);
  if (!key) {
    // Lazy regeneration after a revocation, at the currently mandated size.
    key = &mint_key(topic, mandated_bits_);
    audit(config::AuditCategory::Key, kmf_id_,
          {{"event", "key-regenerated"},
           {"topic", topic},
           {"bits", std::to_string(key->bits)}});
  }

  WrappedTopicKey out;
  out.key_id = key->key_id;
  out.topic = topic;
  out.bits = key->bits;
  out.cipher = cipher_name(key->bits);
  out.blob = crypto::wrap(rec->public_key, key->material, rng_);
  audit(config::AuditCategory::Key, requester,
        {{"event", "key-delivered"}, {"topic", topic}, {"key_id", key->key_id}});
  return out;
}

const TopicKey* KmfService::active_key(const std::string& topic) const {
  auto it = active_by_topic_.find(topic);
  if (it == active_by_topic_.end()) return nullptr;
  auto kit = keys_.find(it->second);
  if (kit == keys_.end() || kit->second.status != TopicKey::Status::Active) return nullptr;
  return &kit->second;
}

const TopicKey* KmfService::key_by_id(const std::string& key_id) const {
  auto it = keys_.find(key_id);
  return it == keys_.end() ? nullptr : &it->second;
}

SecurityToken KmfService::issue_token(const std::string& subject, const std::string& pattern,
                                      std::set<Right> rights, int auth_strength,
                                      TimestampMs ttl_ms) {
  if (!find_principal(subject)) {
    throw KmfError(KmfError::Kind::UnknownPrincipal, "unregistered principal: " + subject);
  }
  if (rights.empty()) throw KmfError(KmfError::Kind::BadRequest, "rights must be non-empty");
  if (auth_strength < 0 || auth_strength > 5) {
    throw KmfError(KmfError::Kind::BadRequest, "auth_strength outside 0..5");
  }
  SecurityToken t;
  t.token_id = rng_.id128();
  t.subject = subject;
  t.pattern = pattern;
  t.rights = std::move(rights);
  t.auth_strength = auth_strength;
  t.not_before = clock_.now_ms();
  t.not_after = t.not_before + ttl_ms;
  const crypto::Digest d = crypto::sha256(t.canonical());
  t.digest.assign(d.begin(), d.end());
  t.signature = crypto::sign(root_.sign_priv, t.digest);
  audit(config::AuditCategory::Auth, subject,
        {{"event", "token-issued"}, {"token_id", t.token_id}, {"pattern", pattern}});
  return t;
}

TokenStatus KmfService::verify_token(const SecurityToken& t, TimestampMs now) const {
  return check_token(t, root_.pub, revoked_tokens_, now);
}

void KmfService::revoke_token(const std::string& token_id) {
  revoked_tokens_.insert(token_id);
  audit(config::AuditCategory::Auth, kmf_id_,
        {{"event", "token-revoked"}, {"token_id", token_id}});
}

RevocationNotice KmfService::revoke_all(int new_bits, const std::string& reason) {
  if (!valid_bits(new_bits)) {
    throw KmfError(KmfError::Kind::BadRequest, "key size must be 128, 192 or 256");
  }
  RevocationNotice notice;
  notice.all = true;
  notice.reason = reason;
  notice.at = clock_.now_ms();
  notice.new_bits = new_bits;

  int revoked_count = 0;
  for (auto& [id, key] : keys_) {
    if (key.status == TopicKey::Status::Active) {
      key.status = TopicKey::Status::Revoked;
      ++revoked_count;
    }
  }
  active_by_topic_.clear();
  const int old_bits = mandated_bits_;
  mandated_bits_ = new_bits;

  audit(config::AuditCategory::Key, kmf_id_,
        {{"event", "revoke-all"},
         {"reason", reason},
         {"old_bits", std::to_string(old_bits)},
         {"new_bits", std::to_string(new_bits)},
         {"count", std::to_string(revoked_count)}});
  if (on_revocation) on_revocation(notice);
  return notice;
}

void KmfService::set_mandated_bits(int bits) {
  if (!valid_bits(bits)) throw KmfError(KmfError::Kind::BadRequest, "invalid key size");
  mandated_bits_ = bits;
}

wire::Envelope sign_envelope(const wire::Envelope& e, const std::string& signer,
                             std::span<const std::uint8_t> sign_priv) {
  wire::Envelope out = e;
  out.sig = wire::Signature{signer, crypto::sign(sign_priv, wire::canonical_bytes(e))};
  return out;
}

bool verify_envelope(const wire::Envelope& e, const crypto::PublicKey& signer_key) {
  if (!e.sig) return false;
  return crypto::verify(signer_key.sign_pub, wire::canonical_bytes(e), e.sig->signature);
}

std::string topic_pseudonym(std::string_view topic,
                            std::span<const std::uint8_t> group_secret) {
  const std::string label = "gemom-pseud-v1";
  Bytes msg = to_bytes(label);
  msg.insert(msg.end(), topic.begin(), topic.end());
  const crypto::Digest mac = crypto::hmac_sha256(group_secret, msg);
  return "pn/" + to_hex(std::span(mac.data(), 16));
}

wire::Envelope encrypt_payload(wire::Envelope e, const TopicKey& key, Rng& rng) {
  wire::EncryptionMeta enc;
  enc.key_id = key.key_id;
  enc.cipher = cipher_name(key.bits);
  enc.nonce = rng.bytes(crypto::kAeadNonceSize);
  const Bytes aad = to_bytes(e.topic);
  e.payload = crypto::aead_seal(key.material, enc.nonce, e.payload, aad);
  e.enc = std::move(enc);
  return e;
}

std::optional<Bytes> decrypt_payload(const wire::Envelope& e, const TopicKey& key) {
  if (!e.enc || e.enc->key_id != key.key_id) return std::nullopt;
  const Bytes aad = to_bytes(e.topic);
  return crypto::aead_open(key.material, e.enc->nonce, e.payload, aad);
}

}  // namespace gemom::kmf
