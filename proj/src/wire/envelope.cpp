#include "gemombus/wire/envelope.hpp"

#include <json.hpp>

namespace gemom::wire {

namespace {

using nlohmann::json;

// json object keys are kept in std::map order, so dump() is already the
// sorted-key, no-whitespace canonical form.
json envelope_to_json(const Envelope& e, bool include_sig) {
  json j;
  j["id"] = e.id;
  j["topic"] = e.topic;
  j["sender"] = e.sender;
  j["ts"] = e.ts;
  j["seq"] = e.seq;
  j["headers"] = json::object();
  for (const auto& [k, v] : e.headers) j["headers"][k] = v;
  j["payload"] = base64_encode(e.payload);
  if (e.enc) {
    j["enc"] = {{"key_id", e.enc->key_id},
                {"cipher", e.enc->cipher},
                {"nonce", base64_encode(e.enc->nonce)}};
  }
  if (include_sig && e.sig) {
    j["sig"] = {{"signer", e.sig->signer},
                {"signature", base64_encode(e.sig->signature)}};
  }
  return j;
}

Bytes require_b64(const json& j, const char* field) {
  if (!j.is_string()) throw WireError(WireError::Kind::Parse, std::string(field) + " not a string");
  auto decoded = base64_decode(j.get_ref<const std::string&>());
  if (!decoded) throw WireError(WireError::Kind::Parse, std::string(field) + " not valid base64");
  return std::move(*decoded);
}

}  // namespace

Bytes canonical_bytes(const Envelope& e) {
  const std::string s = envelope_to_json(e, /*include_sig=*/false).dump();
  return to_bytes(s);
}

std::string serialize_envelope(const Envelope& e) {
  return envelope_to_json(e, /*include_sig=*/true).dump();
}

Envelope parse_envelope(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& err) {
    throw WireError(WireError::Kind::Parse, err.what(), err.byte);
  }
  if (!j.is_object()) throw WireError(WireError::Kind::Parse, "envelope body not an object");

  Envelope e;
  try {
    e.id = j.at("id").get<std::string>();
    e.topic = j.at("topic").get<std::string>();
    e.sender = j.at("sender").get<std::string>();
    e.ts = j.at("ts").get<TimestampMs>();
    e.seq = j.at("seq").get<std::uint64_t>();
    const json& headers = j.at("headers");
    if (!headers.is_object()) throw WireError(WireError::Kind::Parse, "headers not an object");
    for (auto it = headers.begin(); it != headers.end(); ++it) {
      if (!it.value().is_string()) {
        throw WireError(WireError::Kind::Parse, "header value not a string");
      }
      e.headers.emplace(it.key(), it.value().get<std::string>());
    }
    e.payload = require_b64(j.at("payload"), "payload");
    if (auto it = j.find("enc"); it != j.end() && !it->is_null()) {
      EncryptionMeta enc;
      enc.key_id = it->at("key_id").get<std::string>();
      enc.cipher = it->at("cipher").get<std::string>();
      enc.nonce = require_b64(it->at("nonce"), "enc.nonce");
      e.enc = std::move(enc);
    }
    if (auto it = j.find("sig"); it != j.end() && !it->is_null()) {
      Signature sig;
      sig.signer = it->at("signer").get<std::string>();
      sig.signature = require_b64(it->at("signature"), "sig.signature");
      e.sig = std::move(sig);
    }
  } catch (const WireError&) {
    throw;
  } catch (const json::exception& err) {
    throw WireError(WireError::Kind::Parse, err.what());
  }
  return e;
}

}  // namespace gemom::wire
