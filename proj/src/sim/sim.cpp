#include "gemombus/sim/sim.hpp"

#include <json.hpp>

#include <algorithm>
#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "gemombus/adapt/adapt.hpp"
#include "gemombus/authz/authz.hpp"
#include "gemombus/broker/broker_core.hpp"
#include "gemombus/config/audit.hpp"
#include "gemombus/kmf/kmf.hpp"
#include "gemombus/monitor/monitor.hpp"
#include "gemombus/overlay/overlay.hpp"
#include "gemombus/trust/trust.hpp"
#include "gemombus/wire/topics.hpp"

namespace gemom::sim {

// ---------------------------------------------------------------- Scheduler

void Scheduler::at(TimestampMs t, Fn fn) {
  if (t < clock_.now_ms()) t = clock_.now_ms();
  queue_.push(Event{t, next_seq_++, std::move(fn)});
}

void Scheduler::run_until(TimestampMs end) {
  while (!queue_.empty() && queue_.top().t <= end) {
    Event ev = std::move(const_cast<Event&>(queue_.top()));
    queue_.pop();
    clock_.set(ev.t);
    ev.fn();
  }
  clock_.set(end);
}

// ------------------------------------------------------------------- SimNet

void SimNet::register_node(const std::string& id, Handler handler) {
  handlers_[id] = std::move(handler);
  down_[id] = false;
}

void SimNet::set_down(const std::string& id, bool down) { down_[id] = down; }

bool SimNet::is_down(const std::string& id) const {
  auto it = down_.find(id);
  return it != down_.end() && it->second;
}

SimNet::LinkState& SimNet::link(const std::string& from, const std::string& to) {
  return links_[{from, to}];
}

void SimNet::add_secret(const Bytes& material) {
  if (material.empty()) return;
  secret_patterns_.push_back(to_hex(material));
  secret_patterns_.push_back(base64_encode(material));
}

void SimNet::send(const std::string& from, const std::string& to, const wire::Envelope& e) {
  // Every transit goes through the real wire form: size check, capture, scan.
  const wire::Frame frame = wire::encode_envelope(e);
  ++frames_;
  for (const auto& pattern : secret_patterns_) {
    if (frame.body.find(pattern) != std::string::npos) ++secret_hits_;
  }

  if (is_down(from) || is_down(to)) {
    ++dropped_;
    return;
  }
  TimestampMs latency = 1;
  auto lit = links_.find({from, to});
  if (lit != links_.end()) {
    const LinkState& link = lit->second;
    latency = link.latency_ms;
    if (!link.selective_drop_topic.empty() && e.topic == link.selective_drop_topic) {
      ++dropped_;
      return;
    }
    if (link.drop_rate > 0 && rng_.uniform() < link.drop_rate) {
      ++dropped_;
      return;
    }
  }
  sched_.after(latency, [this, from, to, e]() {
    if (is_down(to)) {
      ++dropped_;
      return;
    }
    auto hit = handlers_.find(to);
    if (hit != handlers_.end()) hit->second(from, e);
  });
}

// ---------------------------------------------------------------- RunReport

std::string RunReport::to_json() const {
  nlohmann::json j;
  j["failed"] = failed;
  if (!failure.empty()) j["failure"] = failure;
  j["delivery_ratio"] = delivery_ratio;
  j["throughput_mps"] = throughput_mps;
  j["per_topic"] = nlohmann::json::object();
  for (const auto& [topic, st] : per_topic) {
    j["per_topic"][topic] = {{"published", st.published},
                             {"expected_pairs", st.expected_pairs},
                             {"acked_pairs", st.acked_pairs},
                             {"lost_pairs", st.lost_pairs},
                             {"inflight_pairs", st.inflight_pairs}};
  }
  j["threat_trace"] = nlohmann::json::array();
  for (const auto& [ts, v] : threat_trace) j["threat_trace"].push_back({ts, v});
  j["actions"] = nlohmann::json::array();
  for (const auto& [ts, a] : actions) j["actions"].push_back({ts, a});
  j["overlay_actions"] = overlay_actions;
  j["threshold_events"] = nlohmann::json::array();
  for (const auto& ev : threshold_events) {
    j["threshold_events"].push_back({ev.ts, ev.metric_id, ev.severity, ev.value});
  }
  j["trust_trace"] = nlohmann::json::array();
  for (const auto& row : trust_trace) {
    j["trust_trace"].push_back({row.ts, row.entity, row.alpha, row.beta});
  }
  j["delivery_trace"] = nlohmann::json::array();
  for (const auto& row : delivery_trace) {
    j["delivery_trace"].push_back({row.ts, row.expected, row.acked, row.ratio});
  }
  j["key_rotations"] = nlohmann::json::array();
  for (const auto& [ts, bits] : key_rotations) j["key_rotations"].push_back({ts, bits});
  j["frames_captured"] = frames_captured;
  j["secret_scan_hits"] = secret_scan_hits;
  j["decrypt_failures"] = decrypt_failures;
  j["stale_key_rejects"] = stale_key_rejects;
  j["auth_rejects"] = auth_rejects;
  j["order_violations"] = order_violations;
  j["control_steps"] = control_steps;
  return j.dump(2);
}

void export_report(const RunReport& r, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory: " + dir);
  }
  const auto write_file = [&](const std::string& name, const std::string& content) {
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + name + " in " + dir);
    out << content;
  };

  write_file("report.json", r.to_json());

  {
    std::ostringstream os;
    os << "ts,threat\n";
    for (const auto& [ts, v] : r.threat_trace) os << ts << ',' << v << '\n';
    write_file("threat.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "ts,entity_id,alpha,beta,trust,confidence,trustworthiness\n";
    for (const auto& row : r.trust_trace) {
      const double t = row.alpha / (row.alpha + row.beta);
      const double n = row.alpha + row.beta;
      const double sd = std::sqrt(row.alpha * row.beta / (n * n * (n + 1.0)));
      const double c = std::max(0.0, 1.0 - sd / std::sqrt(1.0 / 12.0));
      os << row.ts << ',' << row.entity << ',' << row.alpha << ',' << row.beta << ',' << t
         << ',' << c << ',' << t * c << '\n';
    }
    write_file("trust.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "ts,expected,acked,ratio\n";
    for (const auto& row : r.delivery_trace) {
      os << row.ts << ',' << row.expected << ',' << row.acked << ',' << row.ratio << '\n';
    }
    write_file("delivery.csv", os.str());
  }
  {
    std::ostringstream os;
    for (const auto& [ts, v] : r.threat_trace) os << ts << ' ' << v << '\n';
    write_file("threat.series", os.str());
  }
  {
    std::ostringstream os;
    for (const auto& row : r.delivery_trace) os << row.ts << ' ' << row.ratio << '\n';
    write_file("delivery.series", os.str());
  }
}

// ----------------------------------------------------------- the simulation

namespace {

using wire::Envelope;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

constexpr TimestampMs kWindowMs = 1000;
constexpr TimestampMs kRetryInitialMs = 2000;
constexpr TimestampMs kRetryMaxMs = 8000;
constexpr TimestampMs kGapSkipMs = 5000;

struct Run;

// One simulated operational broker node.
struct BrokerSim {
  Run* run = nullptr;
  std::string id;
  std::unique_ptr<broker::BrokerCore> core;
  std::unique_ptr<SeededRng> rng;
  int floor_value = 0;
  bool down = false;

  std::map<std::string, kmf::SecurityToken> session_tokens;  // principal -> token
  std::uint64_t last_published = 0;  // counter snapshot for the metric window

  // evidence batch per window: principal -> {successes, failures}
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> evidence_batch;
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> category_batch;

  // sync mirroring bookkeeping
  struct PendingRepl {
    std::string publisher;
    int outstanding = 0;
    TimestampMs since = 0;
    std::uint64_t seq = 0;
  };
  std::map<std::string, PendingRepl> pending_repl;

  void handle(const std::string& from, const Envelope& e);
  void on_tick();
  void send_puback(const std::string& to, const Envelope& orig,
                   const broker::PublishOutcome& out);
};

struct TopicKeyRing {
  std::map<std::string, kmf::TopicKey> by_id;
  std::optional<std::string> current_id;  // active key for the client's topics

  const kmf::TopicKey* current() const {
    if (!current_id) return nullptr;
    auto it = by_id.find(*current_id);
    return it == by_id.end() ? nullptr : &it->second;
  }
};

struct PublisherSim {
  Run* run = nullptr;
  std::string id;  // principal == node id
  kmf::SecurityToken token;
  std::string target;  // current primary broker
  std::unique_ptr<SeededRng> rng;
  bool stale_key_mode = false;  // ignores revocations (test knob)

  struct Unacked {
    Envelope env;
    Bytes plain_payload;
    std::string topic_plain;
    TimestampMs due = 0;
    TimestampMs backoff = kRetryInitialMs;
  };
  std::map<std::string, Unacked> unacked;
  TopicKeyRing keys;
  std::deque<std::pair<std::string, Bytes>> waiting_for_key;  // (plain topic, payload)

  void start();
  void publish(const std::string& topic_plain, Bytes payload);
  void handle(const std::string& from, const Envelope& e);
  void on_retry_sweep();
  void request_key(const std::string& topic_plain);
};

struct SubscriberSim {
  Run* run = nullptr;
  std::string id;
  kmf::SecurityToken token;
  std::string target;
  std::string pattern;  // wire pattern (pseudonym-aware)
  std::unique_ptr<SeededRng> rng;

  std::set<std::string> seen_ids;
  std::uint64_t presented_next = 1;
  std::map<std::uint64_t, std::string> held_out_of_order;  // seq -> id
  TimestampMs gap_since = 0;
  std::uint64_t last_received_seq = 0;
  TopicKeyRing keys;
  std::vector<Envelope> undecryptable;

  void start();
  void handle(const std::string& from, const Envelope& e);
  void on_retry_sweep();
  void request_key(const std::string& topic_plain);
};

struct Run {
  explicit Run(const Scenario& sc);

  Scenario scenario;
  Scheduler sched;
  SeededRng master_rng;
  SimNet net;
  config::AuditLog audit;

  kmf::KmfService kmf_service;
  authz::AuthzEngine authz_engine;
  monitor::MonitoringService monitoring;
  trust::TrustStore trust_store;
  overlay::OverlayManager overlay_mgr;
  std::unique_ptr<adapt::AdaptationManager> aman;

  std::string managerial_id;
  std::vector<std::string> broker_ids;
  std::map<std::string, BrokerSim> brokers;
  std::map<std::string, PublisherSim> publishers;
  std::map<std::string, SubscriberSim> subscribers;
  std::map<std::string, crypto::KeyPair> principal_keys;

  // workload layout
  std::vector<std::string> topics_plain;
  std::map<std::string, std::string> wire_topic;   // plain -> wire (pseudonym or same)
  std::map<std::string, std::string> plain_topic;  // wire -> plain
  std::map<std::string, int> subs_per_topic;       // plain topic -> matching subscriber count
  Bytes group_secret;
  std::string app_group = "g0";
  std::string primary_of_app;  // current primary broker of the app group

  // report accounting
  RunReport report;
  std::map<std::string, std::string> published_topic;  // envelope id -> plain topic
  std::uint64_t expected_total = 0;
  std::uint64_t acked_total = 0;
  std::map<std::string, std::set<std::string>> delivered_pairs;  // env id -> subscribers
  std::map<std::string, double> winscores;  // max anomaly per metric since last step
  monitor::OfflineMetricReport strict_delta, normal_delta;

  TimestampMs end_ms = 0;

  // --- envelope helpers ---
  std::uint64_t env_counter = 0;
  Envelope make(const std::string& sender, const std::string& topic, const std::string& verb,
                Rng& rng) {
    Envelope e;
    e.id = rng.id128();
    e.topic = topic;
    e.sender = sender;
    e.ts = sched.now();
    e.headers["verb"] = verb;
    return e;
  }

  void setup();
  void setup_services();
  void setup_principals();
  void setup_brokers();
  void setup_clients();
  void setup_workload();
  void setup_faults();
  void on_detect_sweep();
  void on_control_step();
  void managerial_handle(const std::string& from, const Envelope& e);
  void kmf_node_handle(const std::string& from, const Envelope& e);
  void broadcast_revocation(const kmf::RevocationNotice& n);
  void apply_thresholds_profile(bool strict);
  bool dispatch_action(const adapt::AdaptationAction& a);
  void record_delivered(const std::string& env_id, const std::string& subscriber);
  void crash_broker(const std::string& id);
  void finish();

  double delivery_ratio_now() const {
    if (expected_total == 0) return 1.0;
    return static_cast<double>(acked_total) / static_cast<double>(expected_total);
  }
};

// ----------------------------------------------------------------- BrokerSim

void BrokerSim::send_puback(const std::string& to, const Envelope& orig,
                            const broker::PublishOutcome& out) {
  Envelope ack = run->make(id, orig.topic, "PUBACK", *rng);
  ack.headers["id"] = orig.id;
  ack.headers["status"] = out.accepted ? "accepted" : broker::to_string(out.reject);
  if (out.accepted) ack.headers["seq"] = std::to_string(out.seq);
  if (!out.reason.empty()) ack.headers["reason"] = out.reason;
  run->net.send(id, to, ack);
}

void BrokerSim::handle(const std::string& from, const Envelope& e) {
  if (down) return;
  const std::string* verb = e.header("verb");
  if (!verb) return;

  if (*verb == "AUTH") {
    if (const std::string* t = e.header("token")) {
      if (auto token = kmf::SecurityToken::parse(*t)) {
        if (token->subject == e.sender) {
          session_tokens[e.sender] = *token;
        }
      }
    }
    return;
  }

  if (*verb == "PUB") {
    std::optional<kmf::SecurityToken> token;
    if (const std::string* t = e.header("token")) {
      token = kmf::SecurityToken::parse(*t);
    } else if (auto it = session_tokens.find(e.sender); it != session_tokens.end()) {
      token = it->second;
    }
    if (!token || token->subject != e.sender) {
      broker::PublishOutcome out;
      out.reject = broker::RejectKind::Auth;
      out.reason = "no session token";
      ++run->report.auth_rejects;
      evidence_batch[e.sender].second++;
      category_batch["sys.auth"].second++;
      send_puback(from, e, out);
      return;
    }
    Envelope pub = e;
    pub.headers.erase("token");
    const broker::PublishOutcome out = core->publish(std::move(pub), *token);
    if (!out.accepted) {
      if (out.reject == broker::RejectKind::Auth) {
        ++run->report.auth_rejects;
        category_batch["sys.auth"].second++;
      } else if (out.reject == broker::RejectKind::StaleKey) {
        ++run->report.stale_key_rejects;
        category_batch["sys.key"].second++;
      } else if (out.reject == broker::RejectKind::Authz ||
                 out.reject == broker::RejectKind::Strength) {
        category_batch["sys.authz"].second++;
      }
    }
    if (run->scenario.sync_mirroring && out.accepted && !out.duplicate &&
        !pending_repl.empty() && pending_repl.count(e.id) > 0) {
      pending_repl[e.id].publisher = from;  // PUBACK deferred until mirrors confirm
      return;
    }
    send_puback(from, e, out);
    return;
  }

  if (*verb == "SUB") {
    const std::string* pattern = e.header("pattern");
    if (!pattern) return;
    std::optional<kmf::SecurityToken> token;
    if (const std::string* t = e.header("token")) token = kmf::SecurityToken::parse(*t);
    if (!token) {
      if (auto it = session_tokens.find(e.sender); it != session_tokens.end()) {
        token = it->second;
      }
    }
    Envelope reply = run->make(id, *pattern, "SUBACK", *rng);
    if (!token || token->subject != e.sender) {
      reply.headers["status"] = "auth";
      run->net.send(id, from, reply);
      return;
    }
    std::map<std::string, std::uint64_t> resume;
    if (const std::string* r = e.header("resume")) {
      try {
        const auto j = nlohmann::json::parse(*r);
        for (auto it = j.begin(); it != j.end(); ++it) {
          resume[it.key()] = it.value().get<std::uint64_t>();
        }
      } catch (const nlohmann::json::exception&) {
      }
    }
    const auto out = core->subscribe(broker::TopicPattern{*pattern}, *token, e.sender, resume);
    reply.headers["status"] = out.accepted ? "accepted" : broker::to_string(out.reject);
    if (out.accepted) reply.headers["sub_id"] = std::to_string(out.sub_id);
    run->net.send(id, from, reply);
    return;
  }

  if (*verb == "ACK") {
    if (const std::string* mid = e.header("id")) core->ack(*mid, e.sender);
    return;
  }

  if (*verb == "REPL") {
    const std::string* group = e.header("group");
    if (!group) return;
    try {
      const Envelope inner = wire::parse_envelope(to_string(e.payload));
      core->ingest_replica(*group, inner);
      if (run->scenario.sync_mirroring) {
        Envelope ack = run->make(id, inner.topic, "REPLACK", *rng);
        ack.headers["id"] = inner.id;
        run->net.send(id, from, ack);
      }
    } catch (const wire::WireError&) {
    }
    return;
  }

  if (*verb == "REPLACK") {
    const std::string* mid = e.header("id");
    if (!mid) return;
    auto it = pending_repl.find(*mid);
    if (it == pending_repl.end()) return;
    if (--it->second.outstanding <= 0) {
      broker::PublishOutcome out;
      out.accepted = true;
      out.seq = it->second.seq;
      Envelope orig;
      orig.id = *mid;
      orig.topic = e.topic;
      send_puback(it->second.publisher, orig, out);
      pending_repl.erase(it);
    }
    return;
  }

  if (*verb == "CTRL" && from == run->managerial_id) {
    const std::string* ctrl = e.header("ctrl");
    if (!ctrl) return;
    if (*ctrl == "floor") {
      floor_value = std::stoi(e.headers.at("floor"));
    } else if (*ctrl == "promote") {
      core->promote_to_primary(e.headers.at("group"));
    } else if (*ctrl == "revocation") {
      if (auto notice = kmf::RevocationNotice::parse(to_string(e.payload))) {
        core->verifier().apply_key_revocation(*notice);
      }
    } else if (*ctrl == "revoke_token") {
      const std::string token_id = e.headers.at("token_id");
      core->verifier().revoke_token(token_id);
      core->drop_subscriptions_of_token(token_id);
    }
    return;
  }
}

void BrokerSim::on_tick() {
  if (down) return;
  const TimestampMs now = run->sched.now();
  core->tick(now);

  // Heartbeat plus the window's metric samples to the managerial node.
  Envelope hb = run->make(id, wire::topics::metrics_topic(id, "heartbeat"), "METRIC", *rng);
  run->net.send(id, run->managerial_id, hb);

  const std::uint64_t published = core->counters().published_ok;
  const double rate = static_cast<double>(published - last_published);
  last_published = published;
  Envelope rate_env = run->make(id, wire::topics::metrics_topic(id, "msg_rate"), "METRIC", *rng);
  rate_env.payload = to_bytes(nlohmann::json({{"value", rate}, {"ts", now}}).dump());
  run->net.send(id, run->managerial_id, rate_env);

  for (const auto& [principal, count] : core->drain_principal_counts()) {
    Envelope p = run->make(id, wire::topics::metrics_topic(id, "principal_rate/" + principal),
                           "METRIC", *rng);
    p.payload = to_bytes(
        nlohmann::json({{"value", static_cast<double>(count)}, {"ts", now}}).dump());
    run->net.send(id, run->managerial_id, p);
  }

  if (!evidence_batch.empty() || !category_batch.empty()) {
    nlohmann::json ev;
    for (const auto& [principal, sf] : evidence_batch) {
      ev["p"][principal] = {{"s", sf.first}, {"f", sf.second}};
    }
    for (const auto& [cat, sf] : category_batch) {
      ev["c"][cat] = {{"s", sf.first}, {"f", sf.second}};
    }
    evidence_batch.clear();
    category_batch.clear();
    Envelope e = run->make(id, wire::topics::metrics_topic(id, "evidence"), "METRIC", *rng);
    e.payload = to_bytes(ev.dump());
    run->net.send(id, run->managerial_id, e);
  }

  // Sync-mirroring fallback: a silent mirror must not wedge publishers.
  for (auto it = pending_repl.begin(); it != pending_repl.end();) {
    if (now - it->second.since > 500 && !it->second.publisher.empty()) {
      broker::PublishOutcome out;
      out.accepted = true;
      out.seq = it->second.seq;
      Envelope orig;
      orig.id = it->first;
      send_puback(it->second.publisher, orig, out);
      it = pending_repl.erase(it);
    } else {
      ++it;
    }
  }

  run->sched.after(kWindowMs, [this]() { on_tick(); });
}

// -------------------------------------------------------------- PublisherSim

void PublisherSim::start() {
  Envelope auth = run->make(id, "_gemom/auth", "AUTH", *rng);
  auth.headers["token"] = token.serialize();
  run->net.send(id, target, auth);

  // Clients that use secure topics listen for revocations and for their own
  // key-response channel.
  Envelope sub = run->make(id, std::string(wire::topics::kKmfRevocation), "SUB", *rng);
  sub.headers["pattern"] = std::string(wire::topics::kKmfRevocation);
  sub.headers["token"] = token.serialize();
  run->net.send(id, target, sub);
  if (run->scenario.secure_topics) {
    Envelope rsub = run->make(id, "_gemom/kmf/resp/" + id, "SUB", *rng);
    rsub.headers["pattern"] = "_gemom/kmf/resp/" + id;
    rsub.headers["token"] = token.serialize();
    run->net.send(id, target, rsub);
  }
  run->sched.after(kWindowMs - 250, [this]() { on_retry_sweep(); });
}

void PublisherSim::request_key(const std::string& topic_plain) {
  Envelope req = run->make(id, std::string(wire::topics::kKmfKeyReq), "PUB", *rng);
  req.headers["token"] = token.serialize();
  const std::string body = nlohmann::json({{"op", "keyreq"}, {"topic", topic_plain}}).dump();
  const auto wrapped =
      crypto::wrap(run->kmf_service.root_public(), to_bytes(body), *rng);
  req.payload = to_bytes(nlohmann::json({{"eph_pub", base64_encode(wrapped.eph_pub)},
                                         {"nonce", base64_encode(wrapped.nonce)},
                                         {"ct", base64_encode(wrapped.ct)}})
                             .dump());
  run->net.send(id, target, req);
}

void PublisherSim::publish(const std::string& topic_plain, Bytes payload) {
  if (run->scenario.secure_topics && !stale_key_mode && !keys.current()) {
    waiting_for_key.emplace_back(topic_plain, std::move(payload));
    return;
  }
  Envelope e = run->make(id, run->wire_topic.at(topic_plain), "PUB", *rng);
  Unacked entry;
  entry.plain_payload = payload;
  entry.topic_plain = topic_plain;
  if (run->scenario.secure_topics) {
    const kmf::TopicKey* key = keys.current();
    e = kmf::encrypt_payload(std::move(e), *key, *rng);
    // encrypt_payload fills payload from e.payload; set the plaintext first
    e.payload.clear();
    wire::Envelope plain_env = e;
    plain_env.payload = payload;
    plain_env.enc.reset();
    e = kmf::encrypt_payload(std::move(plain_env), *key, *rng);
  } else {
    e.payload = std::move(payload);
  }
  entry.env = e;
  entry.due = run->sched.now() + kRetryInitialMs;
  unacked.emplace(e.id, std::move(entry));

  // First submission of this envelope id counts as published.
  run->published_topic.emplace(e.id, topic_plain);
  auto& st = run->report.per_topic[topic_plain];
  st.published += 1;
  const int fanout = run->subs_per_topic.count(topic_plain)
                         ? run->subs_per_topic.at(topic_plain)
                         : 0;
  st.expected_pairs += fanout;
  run->expected_total += fanout;

  run->net.send(id, target, e);
}

void PublisherSim::handle(const std::string& from, const Envelope& e) {
  (void)from;
  const std::string* verb = e.header("verb");
  if (!verb) return;

  if (*verb == "PUBACK") {
    const std::string* mid = e.header("id");
    const std::string* status = e.header("status");
    if (!mid || !status) return;
    auto it = unacked.find(*mid);
    if (it == unacked.end()) return;
    if (*status == "accepted") {
      unacked.erase(it);
      return;
    }
    if (*status == "stale-key") {
      // Key rotated underneath us; fetch the fresh key and re-encrypt.
      keys.current_id.reset();
      if (!stale_key_mode) request_key(it->second.topic_plain);
      return;
    }
    if (*status == "not-primary") return;  // failover notice will re-route
    // auth/authz rejects are terminal for this envelope
    unacked.erase(it);
    return;
  }

  if (*verb == "MSG" && e.topic == wire::topics::kKmfRevocation) {
    Envelope ack = run->make(id, e.topic, "ACK", *rng);
    ack.headers["id"] = e.id;
    run->net.send(id, target, ack);
    if (run->scenario.secure_topics && !stale_key_mode) {
      keys.current_id.reset();
      if (!run->topics_plain.empty()) request_key(run->topics_plain.front());
    }
    return;
  }

  if (*verb == "MSG" && e.topic.starts_with("_gemom/kmf/resp/")) {
    Envelope ack = run->make(id, e.topic, "ACK", *rng);
    ack.headers["id"] = e.id;
    run->net.send(id, target, ack);
    auto wrapped = kmf::WrappedTopicKey::parse(to_string(e.payload));
    if (!wrapped) return;
    auto material = kmf::unwrap(run->principal_keys.at(id),
                                crypto::WrappedBlob(wrapped->blob));
    if (!material) return;
    kmf::TopicKey key;
    key.key_id = wrapped->key_id;
    key.topic = wrapped->topic;
    key.bits = wrapped->bits;
    key.material = std::move(*material);
    keys.by_id[key.key_id] = key;
    keys.current_id = key.key_id;
    // Flush everything parked on the key plus re-encrypt stale retries.
    auto parked = std::move(waiting_for_key);
    waiting_for_key.clear();
    for (auto& [topic_plain, payload] : parked) {
      Envelope env = run->make(id, run->wire_topic.at(topic_plain), "PUB", *rng);
      env.payload = payload;
      wire::Envelope enc_env = kmf::encrypt_payload(std::move(env), key, *rng);
      Unacked entry;
      entry.plain_payload = payload;
      entry.topic_plain = topic_plain;
      entry.env = enc_env;
      entry.due = run->sched.now() + kRetryInitialMs;
      run->published_topic.emplace(enc_env.id, topic_plain);
      auto& st = run->report.per_topic[topic_plain];
      st.published += 1;
      const int fanout =
          run->subs_per_topic.count(topic_plain) ? run->subs_per_topic.at(topic_plain) : 0;
      st.expected_pairs += fanout;
      run->expected_total += fanout;
      unacked.emplace(enc_env.id, std::move(entry));
      run->net.send(id, target, enc_env);
    }
    return;
  }
}

void PublisherSim::on_retry_sweep() {
  const TimestampMs now = run->sched.now();
  for (auto& [mid, entry] : unacked) {
    if (entry.due > now) continue;
    if (run->scenario.secure_topics && !stale_key_mode) {
      const kmf::TopicKey* key = keys.current();
      if (!key) {
        entry.due = now + kRetryInitialMs;
        continue;  // waiting for a fresh key
      }
      if (!entry.env.enc || entry.env.enc->key_id != key->key_id) {
        Envelope env = run->make(id, entry.env.topic, "PUB", *rng);
        env.id = entry.env.id;  // same logical message
        env.payload = entry.plain_payload;
        entry.env = kmf::encrypt_payload(std::move(env), *key, *rng);
      }
    }
    entry.backoff = std::min<TimestampMs>(entry.backoff * 2, kRetryMaxMs);
    entry.due = now + entry.backoff;
    run->net.send(id, target, entry.env);
  }
  if (now < run->end_ms) {
    run->sched.after(kWindowMs, [this]() { on_retry_sweep(); });
  }
}

// ------------------------------------------------------------- SubscriberSim

void SubscriberSim::start() {
  Envelope auth = run->make(id, "_gemom/auth", "AUTH", *rng);
  auth.headers["token"] = token.serialize();
  run->net.send(id, target, auth);

  Envelope sub = run->make(id, pattern, "SUB", *rng);
  sub.headers["pattern"] = pattern;
  sub.headers["token"] = token.serialize();
  run->net.send(id, target, sub);

  Envelope rev = run->make(id, std::string(wire::topics::kKmfRevocation), "SUB", *rng);
  rev.headers["pattern"] = std::string(wire::topics::kKmfRevocation);
  rev.headers["token"] = token.serialize();
  run->net.send(id, target, rev);

  if (run->scenario.secure_topics) {
    Envelope rsub = run->make(id, "_gemom/kmf/resp/" + id, "SUB", *rng);
    rsub.headers["pattern"] = "_gemom/kmf/resp/" + id;
    rsub.headers["token"] = token.serialize();
    run->net.send(id, target, rsub);
  }
  run->sched.after(kWindowMs - 250, [this]() { on_retry_sweep(); });
}

void SubscriberSim::request_key(const std::string& topic_plain) {
  Envelope req = run->make(id, std::string(wire::topics::kKmfKeyReq), "PUB", *rng);
  req.headers["token"] = token.serialize();
  const std::string body = nlohmann::json({{"op", "keyreq"}, {"topic", topic_plain}}).dump();
  const auto wrapped = crypto::wrap(run->kmf_service.root_public(), to_bytes(body), *rng);
  req.payload = to_bytes(nlohmann::json({{"eph_pub", base64_encode(wrapped.eph_pub)},
                                         {"nonce", base64_encode(wrapped.nonce)},
                                         {"ct", base64_encode(wrapped.ct)}})
                             .dump());
  run->net.send(id, target, req);
}

void SubscriberSim::handle(const std::string& from, const Envelope& e) {
  (void)from;
  const std::string* verb = e.header("verb");
  if (!verb) return;

  if (*verb == "MSG" && e.topic.starts_with("_gemom/kmf/resp/")) {
    Envelope ack = run->make(id, e.topic, "ACK", *rng);
    ack.headers["id"] = e.id;
    run->net.send(id, target, ack);
    auto wrapped = kmf::WrappedTopicKey::parse(to_string(e.payload));
    if (!wrapped) return;
    auto material =
        kmf::unwrap(run->principal_keys.at(id), crypto::WrappedBlob(wrapped->blob));
    if (!material) return;
    kmf::TopicKey key;
    key.key_id = wrapped->key_id;
    key.topic = wrapped->topic;
    key.bits = wrapped->bits;
    key.material = std::move(*material);
    keys.by_id[key.key_id] = key;
    keys.current_id = key.key_id;
    auto pending = std::move(undecryptable);
    undecryptable.clear();
    for (const auto& env : pending) {
      if (env.enc && keys.by_id.count(env.enc->key_id) > 0) {
        if (!kmf::decrypt_payload(env, keys.by_id[env.enc->key_id])) {
          ++run->report.decrypt_failures;
        }
      } else {
        ++run->report.decrypt_failures;
      }
    }
    return;
  }

  if (*verb != "MSG") return;

  // Always ack; the broker side is idempotent.
  Envelope ack = run->make(id, e.topic, "ACK", *rng);
  ack.headers["id"] = e.id;
  run->net.send(id, target, ack);

  if (e.topic == wire::topics::kKmfRevocation) return;

  if (!seen_ids.insert(e.id).second) return;  // duplicate delivery

  if (e.enc) {
    auto kit = keys.by_id.find(e.enc->key_id);
    if (kit == keys.by_id.end()) {
      undecryptable.push_back(e);
      if (run->scenario.secure_topics) {
        const auto pit = run->plain_topic.find(e.topic);
        if (pit != run->plain_topic.end()) request_key(pit->second);
      }
    } else if (!kmf::decrypt_payload(e, kit->second)) {
      ++run->report.decrypt_failures;
    }
  }

  // Presented order bookkeeping: strictly increasing seq per group.
  if (e.seq > 0) {
    last_received_seq = std::max(last_received_seq, e.seq);
    if (e.seq < presented_next) {
      ++run->report.order_violations;
    } else {
      held_out_of_order[e.seq] = e.id;
      while (!held_out_of_order.empty() &&
             held_out_of_order.begin()->first == presented_next) {
        held_out_of_order.erase(held_out_of_order.begin());
        ++presented_next;
      }
      gap_since = held_out_of_order.empty() ? 0 : run->sched.now();
    }
  }

  run->record_delivered(e.id, id);
}

void SubscriberSim::on_retry_sweep() {
  const TimestampMs now = run->sched.now();
  // Head-of-line gap that outlived the redelivery horizon: skip forward.
  if (!held_out_of_order.empty() && gap_since > 0 && now - gap_since > kGapSkipMs) {
    presented_next = held_out_of_order.begin()->first;
    while (!held_out_of_order.empty() &&
           held_out_of_order.begin()->first == presented_next) {
      held_out_of_order.erase(held_out_of_order.begin());
      ++presented_next;
    }
    gap_since = held_out_of_order.empty() ? 0 : now;
  }
  if (now < run->end_ms) {
    run->sched.after(kWindowMs, [this]() { on_retry_sweep(); });
  }
}

// -------------------------------------------------------------------- Run

Run::Run(const Scenario& sc)
    : scenario(sc),
      master_rng(sc.seed),
      net(sched, master_rng),
      audit(sched.clock()),
      kmf_service("kmf1", master_rng, sched.clock(), &audit),
      authz_engine(sched.clock(), &audit),
      monitoring(&audit),
      trust_store(sched.clock()),
      overlay_mgr(sched.clock(), {}, &audit) {}

void Run::setup_services() {
  monitoring.set_lambda_default(0.1);

  // Default BMC tree: four security branches under one root.
  monitor::BmcTree tree;
  tree["root"] = {"root", "overall security", "", 1.0, false, 0.0, {}};
  tree["authentication"] = {"authentication", "authentication", "root", 1.0, false, 0.5, {}};
  tree["authorization"] = {"authorization", "authorization", "root", 1.0, false, 0.5, {}};
  tree["confidentiality"] = {"confidentiality", "confidentiality", "root", 1.0, false, 0.5, {}};
  tree["availability"] = {"availability", "availability", "root", 1.0, false, 0.5, {}};
  monitoring.set_tree(std::move(tree));

  const double per_publisher_rate =
      scenario.workload.publishers > 0
          ? scenario.workload.rate_mps / scenario.workload.publishers
          : scenario.workload.rate_mps;
  for (const auto& n : scenario.topology) {
    if (n.role != "broker") continue;
    monitoring.add_threshold({n.id + ".msg_rate", std::nullopt,
                              std::max(3.0 * scenario.workload.rate_mps, 30.0),
                              monitor::Severity::Critical});
  }
  // Two tiers on per-principal rates so a flood racks up evidence quickly.
  monitoring.add_threshold({"principal_rate.*", std::nullopt,
                            std::max(3.0 * per_publisher_rate, 30.0),
                            monitor::Severity::Critical});
  monitoring.add_threshold({"principal_rate.*", std::nullopt,
                            std::max(8.0 * per_publisher_rate, 80.0),
                            monitor::Severity::Critical});

  overlay_mgr.seq_query = [this](const std::string& node, const std::string& group) {
    auto it = brokers.find(node);
    return it == brokers.end() ? 0 : it->second.core->highest_seq(group);
  };
  overlay_mgr.on_node_joined = [this](const std::string& node) {
    trust_store.open_record(node);
  };
  overlay_mgr.action_log = [this](const std::string& line) {
    report.overlay_actions.push_back(line);
  };
  overlay_mgr.on_promote = [this](const std::string& group, const std::string& new_primary) {
    if (group == app_group) primary_of_app = new_primary;
    Envelope promote = make(managerial_id, "_gemom/ctl", "CTRL", master_rng);
    promote.headers["ctrl"] = "promote";
    promote.headers["group"] = group;
    net.send(managerial_id, new_primary, promote);
    // Everyone re-routes to the promoted primary.
    for (auto& [pid, pub] : publishers) {
      Envelope n = make(managerial_id, "_gemom/ctl", "CTRL", master_rng);
      n.headers["ctrl"] = "failover";
      n.headers["group"] = group;
      n.headers["primary"] = new_primary;
      net.send(managerial_id, pid, n);
    }
    for (auto& [sid, sub] : subscribers) {
      Envelope n = make(managerial_id, "_gemom/ctl", "CTRL", master_rng);
      n.headers["ctrl"] = "failover";
      n.headers["group"] = group;
      n.headers["primary"] = new_primary;
      net.send(managerial_id, sid, n);
    }
  };

  kmf_service.on_revocation = [this](const kmf::RevocationNotice& n) {
    broadcast_revocation(n);
  };
  kmf_service.on_key_minted = [this](const kmf::TopicKey& key) {
    net.add_secret(key.material);
  };

  adapt::AdaptConfig acfg;
  adapt::AdaptationManager::Sensors sensors;
  sensors.anomaly_scores = [this]() {
    auto out = winscores;
    winscores.clear();
    return out;
  };
  sensors.fault_events = [this]() { return monitoring.drain_events(); };
  sensors.qos = [this]() {
    std::map<std::string, double> q;
    q["overlay_health"] = overlay_mgr.health();
    q["delivery_ratio"] = delivery_ratio_now();
    return q;
  };
  sensors.suspicion = [this]() {
    std::map<std::string, double> out;
    for (const auto& [entity, s] : trust_store.suspicion()) {
      // Suspicion is a per-principal notion; infrastructure entities are
      // tracked but do not drive the threat estimate directly.
      if (entity.starts_with("sys.")) continue;
      if (brokers.count(entity) > 0 || entity == managerial_id) continue;
      out[entity] = s;
    }
    return out;
  };
  sensors.root_trustworthiness = [this]() {
    std::map<std::string, trust::TrustValues> leaves;
    for (const char* leaf :
         {"authentication", "authorization", "confidentiality", "availability"}) {
      leaves[leaf] = trust_store.values(std::string("sys.") + leaf);
    }
    // Leaf ids in the store carry the sys. prefix; strip for the tree.
    std::map<std::string, trust::TrustValues> mapped;
    mapped["authentication"] = trust_store.values("sys.auth");
    mapped["authorization"] = trust_store.values("sys.authz");
    mapped["confidentiality"] = trust_store.values("sys.key");
    mapped["availability"] = trust_store.values("sys.avail");
    const auto agg = trust::aggregate_trust(monitoring.tree(), mapped);
    auto it = agg.find("root");
    return it == agg.end() ? 0.0 : it->second.trustworthiness;
  };
  sensors.dead_primary_groups = [this]() {
    std::vector<std::string> out;
    for (const auto& gid : overlay_mgr.group_ids()) {
      const overlay::TopicGroup* g = overlay_mgr.group(gid);
      if (!g) continue;
      const overlay::GNode* p = overlay_mgr.node(g->primary);
      if (g->parked || (p && p->status == overlay::NodeStatus::Dead)) out.push_back(gid);
    }
    return out;
  };
  aman = std::make_unique<adapt::AdaptationManager>(sched.clock(), acfg, sensors, &audit);
  aman->dispatch = [this](const adapt::AdaptationAction& a) { return dispatch_action(a); };
  aman->apply_offline = [this](const monitor::OfflineMetricReport& r) {
    monitoring.fuse_offline(r);
  };
  if (auto it = scenario.goal_overrides.find("delivery_ratio_min");
      it != scenario.goal_overrides.end()) {
    const double bound = it->second;
    aman->goals().constraints[1].holds = [bound](const adapt::SystemState& s) {
      return s.delivery_ratio >= bound;
    };
  }
}

void Run::setup_principals() {
  const auto register_one = [this](const std::string& name,
                                   const std::vector<std::string>& groups) {
    std::array<std::uint8_t, 32> seed{};
    SeededRng prng(scenario.seed ^ fnv1a(name));
    prng.fill(seed);
    crypto::KeyPair kp = crypto::KeyPair::from_seed(seed);
    net.add_secret(kp.sign_priv);
    net.add_secret(kp.kx_priv);
    principal_keys[name] = kp;
    kmf_service.register_principal(name, kp.pub, groups);
  };

  for (int i = 0; i < scenario.workload.publishers; ++i) {
    register_one("pub" + std::to_string(i), {"publishers"});
  }
  for (int i = 0; i < scenario.workload.subscribers; ++i) {
    register_one("sub" + std::to_string(i), {"subscribers"});
  }
  for (const auto& e : scenario.events) {
    if (e.kind == "flood") register_one("attacker", {"publishers"});
    if (e.kind == "credential_misuse") register_one(e.principal, {"publishers"});
  }
  for (const auto& n : scenario.topology) register_one(n.id, {"internal"});
  register_one("kmf", {"internal"});

  std::map<std::string, std::vector<std::string>> directory;
  for (const auto& [name, kp] : principal_keys) {
    if (const kmf::PrincipalRecord* rec = kmf_service.find_principal(name)) {
      directory[name] = rec->groups;
    }
  }
  authz_engine.set_directory(std::move(directory));

  authz::Policy policy;
  policy.version = 1;
  {
    authz::AuthzRule app;
    app.groups = {"publishers", "subscribers"};
    app.pattern.pattern = scenario.pseudonyms ? "pn/#" : "app/#";
    app.operations = {authz::Operation::Publish, authz::Operation::Subscribe};
    app.strength_min = 1;
    app.strength_max = 5;
    policy.rules.push_back(std::move(app));
    authz::AuthzRule internal;
    internal.groups = {"internal"};
    internal.pattern.pattern = "#";
    internal.operations = {authz::Operation::Publish, authz::Operation::Subscribe,
                           authz::Operation::Create, authz::Operation::Delete};
    internal.strength_min = 1;
    internal.strength_max = 5;
    policy.rules.push_back(std::move(internal));
  }
  authz_engine.load_policy(std::move(policy));
}

void Run::setup_brokers() {
  const TimestampMs token_ttl =
      static_cast<TimestampMs>((scenario.workload.duration_s + scenario.drain_s + 120) * 1000);

  for (const auto& n : scenario.topology) {
    if (n.role == "managerial") {
      managerial_id = n.id;
      continue;
    }
    broker_ids.push_back(n.id);
  }

  // App topic group: first broker is primary, next replication_factor-1 mirror.
  std::vector<std::string> mirrors;
  for (std::size_t i = 1; i < broker_ids.size() &&
                          static_cast<int>(i) < scenario.replication_factor;
       ++i) {
    mirrors.push_back(broker_ids[i]);
  }
  primary_of_app = broker_ids.front();

  for (const auto& id : broker_ids) {
    BrokerSim& b = brokers[id];
    b.run = this;
    b.id = id;
    b.rng = std::make_unique<SeededRng>(scenario.seed ^ fnv1a("rng." + id));
    broker::BrokerCore::Options opts;
    opts.ack_timeout_ms = 2000;
    b.core = std::make_unique<broker::BrokerCore>(
        id, kmf::TokenVerifier(kmf_service.root_public()), sched.clock(), opts);
    b.core->audit = &audit;

    // Per-broker control group, then the shared app group.
    b.core->configure_group({"ctl-" + id, {broker::TopicPattern{"_gemom/#"}}, 4096}, true);
    b.core->configure_group(
        {app_group, {broker::TopicPattern{scenario.pseudonyms ? "pn/#" : "app/#"}}, 20000},
        id == primary_of_app);

    b.core->floor = [&b]() { return b.floor_value; };
    b.core->deliver = [this, id](const broker::Subscription& sub, const Envelope& env) {
      Envelope out = env;
      out.headers["verb"] = "MSG";
      net.send(id, sub.subscriber, out);
    };
    b.core->replicate = [this, id, mirrors](const std::string& group, const Envelope& env) {
      if (group != app_group) return;
      BrokerSim& self = brokers.at(id);
      if (scenario.sync_mirroring && !mirrors.empty()) {
        BrokerSim::PendingRepl pending;
        pending.outstanding = 0;
        pending.since = sched.now();
        pending.seq = env.seq;
        for (const auto& m : mirrors) {
          if (!net.is_down(m)) ++pending.outstanding;
        }
        if (pending.outstanding > 0) self.pending_repl[env.id] = pending;
      }
      for (const auto& m : mirrors) {
        if (m == id) continue;
        Envelope repl = make(id, env.topic, "REPL", *self.rng);
        repl.headers["group"] = group;
        repl.payload = to_bytes(wire::serialize_envelope(env));
        net.send(id, m, repl);
      }
    };
    b.core->evidence = [this, id](const std::string& principal, bool success) {
      auto& sf = brokers.at(id).evidence_batch[principal];
      if (success) {
        ++sf.first;
      } else {
        ++sf.second;
      }
    };
    b.core->on_expired = [this](const std::string& env_id, const std::string&) {
      auto it = published_topic.find(env_id);
      if (it == published_topic.end()) return;
      auto& st = report.per_topic[it->second];
      st.lost_pairs += 1;
    };

    net.register_node(id, [this, id](const std::string& from, const Envelope& e) {
      brokers.at(id).handle(from, e);
    });

    overlay::GNode gn;
    gn.id = id;
    gn.role = overlay::NodeRole::Operational;
    gn.address = "sim://" + id;
    overlay_mgr.add_node(gn);

    sched.at(kWindowMs, [this, id]() { brokers.at(id).on_tick(); });
  }

  overlay::TopicGroup group;
  group.id = app_group;
  group.patterns = {scenario.pseudonyms ? "pn/#" : "app/#"};
  group.primary = primary_of_app;
  group.mirrors = mirrors;
  group.replication_factor = scenario.replication_factor;
  overlay_mgr.add_group(group);

  // The managerial node and the KMF node live on the control plane.
  net.register_node(managerial_id, [this](const std::string& from, const Envelope& e) {
    managerial_handle(from, e);
  });
  net.register_node("kmf", [this](const std::string& from, const Envelope& e) {
    kmf_node_handle(from, e);
  });

  // KMF subscribes to its request topics on every broker.
  const kmf::SecurityToken kmf_token = kmf_service.issue_token(
      "kmf", "_gemom/#", {kmf::Right::Publish, kmf::Right::Subscribe}, 5, token_ttl);
  for (const auto& id : broker_ids) {
    for (const std::string topic :
         {std::string(wire::topics::kKmfRegister), std::string(wire::topics::kKmfKeyReq)}) {
      Envelope sub = make("kmf", topic, "SUB", master_rng);
      sub.headers["pattern"] = topic;
      sub.headers["token"] = kmf_token.serialize();
      net.send("kmf", id, sub);
    }
  }

  sched.at(kWindowMs + 250, [this]() { on_detect_sweep(); });
  sched.at(kWindowMs + 500, [this]() { on_control_step(); });
}

void Run::setup_clients() {
  const TimestampMs token_ttl =
      static_cast<TimestampMs>((scenario.workload.duration_s + scenario.drain_s + 120) * 1000);
  const std::string app_pattern = scenario.pseudonyms ? "pn/*" : "app/#";

  for (int t = 0; t < scenario.workload.topics; ++t) {
    const std::string plain = "app/t" + std::to_string(t);
    topics_plain.push_back(plain);
  }
  if (scenario.pseudonyms) {
    group_secret = master_rng.bytes(32);
    net.add_secret(group_secret);
    for (const auto& plain : topics_plain) {
      const std::string pn = kmf::topic_pseudonym(plain, group_secret);
      wire_topic[plain] = pn;
      plain_topic[pn] = plain;
    }
  } else {
    for (const auto& plain : topics_plain) {
      wire_topic[plain] = plain;
      plain_topic[plain] = plain;
    }
  }

  if (scenario.secure_topics) {
    for (const auto& plain : topics_plain) {
      kmf_service.register_secure_topic(plain, "kmf", 128);
    }
  }

  for (int i = 0; i < scenario.workload.subscribers; ++i) {
    const std::string id = "sub" + std::to_string(i);
    SubscriberSim& s = subscribers[id];
    s.run = this;
    s.id = id;
    s.rng = std::make_unique<SeededRng>(scenario.seed ^ fnv1a("rng." + id));
    s.target = primary_of_app;
    s.token = kmf_service.issue_token(id, app_pattern, {kmf::Right::Subscribe}, 3, token_ttl);
    const std::string plain = topics_plain[i % topics_plain.size()];
    s.pattern = wire_topic.at(plain);
    subs_per_topic[plain] += 1;
    if (scenario.secure_topics) kmf_service.grant_topic_access(plain, id);
    net.register_node(id, [this, id](const std::string& from, const Envelope& e) {
      subscribers.at(id).handle(from, e);
    });
    sched.at(5, [this, id]() { subscribers.at(id).start(); });
  }

  for (int i = 0; i < scenario.workload.publishers; ++i) {
    const std::string id = "pub" + std::to_string(i);
    PublisherSim& p = publishers[id];
    p.run = this;
    p.id = id;
    p.rng = std::make_unique<SeededRng>(scenario.seed ^ fnv1a("rng." + id));
    p.target = primary_of_app;
    p.token = kmf_service.issue_token(id, app_pattern, {kmf::Right::Publish}, 3, token_ttl);
    if (scenario.secure_topics) {
      for (const auto& plain : topics_plain) kmf_service.grant_topic_access(plain, id);
    }
    net.register_node(id, [this, id](const std::string& from, const Envelope& e) {
      publishers.at(id).handle(from, e);
    });
    sched.at(10, [this, id]() {
      publishers.at(id).start();
      if (scenario.secure_topics) {
        publishers.at(id).request_key(topics_plain.front());
      }
    });
  }
}

void Run::setup_workload() {
  const Workload& w = scenario.workload;
  if (w.publishers == 0 || w.rate_mps <= 0) return;
  const std::uint64_t total =
      static_cast<std::uint64_t>(w.rate_mps * w.duration_s + 0.5);
  const Bytes payload(static_cast<std::size_t>(w.payload_bytes), std::uint8_t('x'));
  for (std::uint64_t i = 0; i < total; ++i) {
    const TimestampMs at =
        static_cast<TimestampMs>((static_cast<double>(i) + 1.0) * 1000.0 / w.rate_mps);
    const std::string pub_id = "pub" + std::to_string(i % w.publishers);
    const std::string topic = topics_plain[i % topics_plain.size()];
    sched.at(std::max<TimestampMs>(at, 20), [this, pub_id, topic, payload]() {
      publishers.at(pub_id).publish(topic, payload);
    });
  }
}

void Run::setup_faults() {
  const TimestampMs run_end =
      static_cast<TimestampMs>(scenario.workload.duration_s * 1000.0);
  for (const auto& ev : scenario.events) {
    const TimestampMs at = static_cast<TimestampMs>(ev.at_s * 1000.0);
    const TimestampMs until =
        ev.duration_s > 0 ? at + static_cast<TimestampMs>(ev.duration_s * 1000.0) : run_end;

    if (ev.kind == "broker_crash") {
      sched.at(at, [this, node = ev.node]() { crash_broker(node); });
    } else if (ev.kind == "link_drop") {
      sched.at(at, [this, ev]() {
        net.link(ev.from, ev.to).drop_rate = ev.rate;
        net.link(ev.to, ev.from).drop_rate = ev.rate;
      });
      sched.at(until, [this, ev]() {
        net.link(ev.from, ev.to).drop_rate = 0;
        net.link(ev.to, ev.from).drop_rate = 0;
      });
    } else if (ev.kind == "selective_drop") {
      // The interposer matches on the plaintext name; with pseudonyms on the
      // wire there is nothing for it to match.
      sched.at(at, [this, ev]() {
        net.link(ev.from, ev.to).selective_drop_topic = ev.topic;
      });
      sched.at(until, [this, ev]() {
        net.link(ev.from, ev.to).selective_drop_topic.clear();
      });
    } else if (ev.kind == "flood") {
      PublisherSim& a = publishers["attacker"];
      if (!a.run) {
        a.run = this;
        a.id = "attacker";
        a.rng = std::make_unique<SeededRng>(scenario.seed ^ fnv1a("rng.attacker"));
        a.target = primary_of_app;
        const TimestampMs ttl = static_cast<TimestampMs>(
            (scenario.workload.duration_s + scenario.drain_s + 120) * 1000);
        a.token = kmf_service.issue_token(
            "attacker", scenario.pseudonyms ? "pn/*" : "app/#", {kmf::Right::Publish}, 3, ttl);
        net.register_node("attacker", [this](const std::string& from, const Envelope& e) {
          publishers.at("attacker").handle(from, e);
        });
        sched.at(std::max<TimestampMs>(at - 10, 15),
                 [this]() { publishers.at("attacker").start(); });
      }
      const std::uint64_t n =
          static_cast<std::uint64_t>(ev.rate * (static_cast<double>(until - at) / 1000.0));
      const Bytes payload(64, std::uint8_t('f'));
      for (std::uint64_t i = 0; i < n; ++i) {
        const TimestampMs t = at + static_cast<TimestampMs>(
                                       (static_cast<double>(i) + 1.0) * 1000.0 / ev.rate);
        sched.at(t, [this, topic = ev.topic, payload]() {
          publishers.at("attacker").publish(topic, payload);
        });
      }
    } else if (ev.kind == "credential_misuse") {
      // Repeated failed authentications for the principal.
      for (TimestampMs t = at; t < until; t += 100) {
        sched.at(t, [this, principal = ev.principal]() {
          SeededRng bad_rng(sched.now() ^ scenario.seed);
          Envelope e = make(principal, topics_plain.front(), "PUB", bad_rng);
          kmf::SecurityToken junk;
          junk.token_id = bad_rng.id128();
          junk.subject = principal;
          junk.pattern = "app/#";
          junk.rights = {kmf::Right::Publish};
          junk.auth_strength = 3;
          junk.not_before = 0;
          junk.not_after = 1;
          junk.digest = bad_rng.bytes(32);
          junk.signature = bad_rng.bytes(64);
          e.headers["token"] = junk.serialize();
          net.send(principal, primary_of_app, e);
        });
      }
      net.register_node(ev.principal, [](const std::string&, const Envelope&) {});
    }
  }
}

void Run::managerial_handle(const std::string& from, const Envelope& e) {
  const std::string* verb = e.header("verb");
  if (!verb || *verb != "METRIC") return;
  const std::string prefix(wire::topics::kMetricsPrefix);
  if (!e.topic.starts_with(prefix)) return;
  const std::string rest = e.topic.substr(prefix.size());  // "<node>/<metric...>"
  const std::size_t slash = rest.find('/');
  if (slash == std::string::npos) return;
  const std::string node = rest.substr(0, slash);
  const std::string metric = rest.substr(slash + 1);

  if (metric == "heartbeat") {
    overlay_mgr.on_heartbeat(node, sched.now());
    return;
  }

  if (metric == "evidence") {
    try {
      const auto j = nlohmann::json::parse(to_string(e.payload));
      if (j.contains("p")) {
        for (auto it = j["p"].begin(); it != j["p"].end(); ++it) {
          const std::uint64_t s = it.value().value("s", 0ull);
          const std::uint64_t f = it.value().value("f", 0ull);
          for (std::uint64_t k = 0; k < s; ++k) {
            trust_store.record(it.key(), trust::Outcome::Success);
          }
          for (std::uint64_t k = 0; k < f; ++k) {
            trust_store.record(it.key(), trust::Outcome::Failure);
          }
        }
      }
      if (j.contains("c")) {
        for (auto it = j["c"].begin(); it != j["c"].end(); ++it) {
          const std::uint64_t s = it.value().value("s", 0ull);
          const std::uint64_t f = it.value().value("f", 0ull);
          for (std::uint64_t k = 0; k < s; ++k) {
            trust_store.record(it.key(), trust::Outcome::Success);
          }
          for (std::uint64_t k = 0; k < f; ++k) {
            trust_store.record(it.key(), trust::Outcome::Failure);
          }
        }
      }
    } catch (const nlohmann::json::exception&) {
    }
    return;
  }

  double value = 0;
  TimestampMs at = sched.now();
  try {
    const auto j = nlohmann::json::parse(to_string(e.payload));
    value = j.value("value", 0.0);
    at = j.value("ts", at);
  } catch (const nlohmann::json::exception&) {
    return;
  }

  // "<node>/principal_rate/<principal>" becomes a node-agnostic metric id so
  // the per-principal thresholds survive a failover.
  std::string metric_id;
  if (metric.starts_with("principal_rate/")) {
    metric_id = "principal_rate." + metric.substr(std::string("principal_rate/").size());
  } else {
    std::string dotted = metric;
    std::replace(dotted.begin(), dotted.end(), '/', '.');
    metric_id = node + "." + dotted;
  }

  monitor::MetricSample sample{metric_id, value, at, node};
  std::vector<monitor::ThresholdEvent> events;
  try {
    events = monitoring.record_sample(sample);
  } catch (const std::invalid_argument&) {
    return;  // stale replay across failover
  }
  if (const monitor::EwmaState* st = monitoring.ewma(metric_id); st && st->n > 1) {
    auto& best = winscores[metric_id];
    best = std::max(best, monitoring.anomaly_of(metric_id));
  }
  for (const auto& evt : events) {
    report.threshold_events.push_back(
        {evt.at, evt.metric_id, monitor::to_string(evt.severity), evt.value});
    if (evt.severity == monitor::Severity::Critical) {
      if (evt.metric_id.starts_with("principal_rate.")) {
        trust_store.record(evt.metric_id.substr(std::string("principal_rate.").size()),
                           trust::Outcome::Failure);
      } else {
        trust_store.record("sys.avail", trust::Outcome::Failure);
      }
    }
  }
}

void Run::kmf_node_handle(const std::string& from, const Envelope& e) {
  const std::string* verb = e.header("verb");
  if (!verb || *verb != "MSG") return;
  if (e.topic != wire::topics::kKmfKeyReq && e.topic != wire::topics::kKmfRegister) return;

  // Request payload is hybrid-encrypted to the KMF's public key.
  crypto::WrappedBlob blob;
  try {
    const auto j = nlohmann::json::parse(to_string(e.payload));
    auto eph = base64_decode(j.at("eph_pub").get<std::string>());
    auto nonce = base64_decode(j.at("nonce").get<std::string>());
    auto ct = base64_decode(j.at("ct").get<std::string>());
    if (!eph || !nonce || !ct) return;
    blob = {std::move(*eph), std::move(*nonce), std::move(*ct)};
  } catch (const nlohmann::json::exception&) {
    return;
  }
  const auto body = crypto::unwrap(kmf_service.root_keys(), blob);
  if (!body) return;

  std::string op, topic;
  int bits = 128;
  try {
    const auto j = nlohmann::json::parse(to_string(*body));
    op = j.value("op", "");
    topic = j.value("topic", "");
    bits = j.value("bits", 128);
  } catch (const nlohmann::json::exception&) {
    return;
  }

  Envelope resp = make("kmf", "_gemom/kmf/resp/" + e.sender, "PUB", master_rng);
  try {
    if (op == "keyreq") {
      const kmf::WrappedTopicKey wrapped = kmf_service.request_topic_key(topic, e.sender);
      resp.headers["status"] = "ok";
      resp.payload = to_bytes(wrapped.serialize());
    } else if (op == "register") {
      const std::string key_id = kmf_service.register_secure_topic(topic, e.sender, bits);
      resp.headers["status"] = "ok";
      resp.headers["key_id"] = key_id;
    } else {
      resp.headers["status"] = "bad-request";
    }
  } catch (const kmf::KmfError& err) {
    resp.headers["status"] = "denied";
    resp.headers["reason"] = err.what();
  }
  net.send("kmf", from, resp);
}

void Run::broadcast_revocation(const kmf::RevocationNotice& n) {
  report.key_rotations.emplace_back(sched.now(), n.new_bits);
  const std::string body = n.serialize();
  for (const auto& id : broker_ids) {
    // Brokers learn revocations on the control plane so stale-key
    // enforcement does not depend on the data path they themselves serve.
    Envelope ctrl = make(managerial_id, "_gemom/ctl", "CTRL", master_rng);
    ctrl.headers["ctrl"] = "revocation";
    ctrl.payload = to_bytes(body);
    net.send(managerial_id, id, ctrl);

    // Clients hear it as a normal broadcast on the revocation topic.
    Envelope notice = make("kmf", std::string(wire::topics::kKmfRevocation), "PUB", master_rng);
    notice.payload = to_bytes(body);
    net.send("kmf", id, notice);
  }
}

void Run::apply_thresholds_profile(bool strict) {
  monitoring.fuse_offline(strict ? strict_delta : normal_delta);
}

bool Run::dispatch_action(const adapt::AdaptationAction& a) {
  using Kind = adapt::AdaptationAction::Kind;
  switch (a.kind) {
    case Kind::RotateKeys:
    case Kind::RevokeAllKeys:
      kmf_service.revoke_all(a.bits, "threat");
      return true;
    case Kind::RaiseFloor:
    case Kind::LowerFloor: {
      authz_engine.set_floor(a.floor);
      for (const auto& id : broker_ids) {
        Envelope ctrl = make(managerial_id, "_gemom/ctl", "CTRL", master_rng);
        ctrl.headers["ctrl"] = "floor";
        ctrl.headers["floor"] = std::to_string(a.floor);
        net.send(managerial_id, id, ctrl);
      }
      return true;
    }
    case Kind::TriggerFailover:
      return overlay_mgr.failover(a.group).has_value();
    case Kind::TightenThresholds:
      apply_thresholds_profile(true);
      return true;
    case Kind::RelaxThresholds:
      apply_thresholds_profile(false);
      return true;
  }
  return false;
}

void Run::on_detect_sweep() {
  for (const auto& dead : overlay_mgr.detect_failure(sched.now())) {
    trust_store.record(dead, trust::Outcome::Failure);
    trust_store.record("sys.avail", trust::Outcome::Failure);
  }
  if (sched.now() < end_ms) {
    sched.after(kWindowMs, [this]() { on_detect_sweep(); });
  }
}

void Run::on_control_step() {
  const adapt::StepReport step = aman->control_step(sched.now());
  ++report.control_steps;
  report.threat_trace.emplace_back(step.ts, step.state.threat);
  for (const auto& a : step.actions) {
    report.actions.emplace_back(step.ts, a.describe());
  }
  report.delivery_trace.push_back(
      {step.ts, expected_total, acked_total, delivery_ratio_now()});
  for (const auto& [entity, rec] : trust_store.records()) {
    if (entity.starts_with("sys.") || entity == "attacker") {
      report.trust_trace.push_back({step.ts, entity, rec.alpha, rec.beta});
    }
  }

  // A healthy, quiet window is positive evidence on every security branch.
  bool clean = true;
  for (const auto& ev : step.x.fault_events) {
    if (ev.severity == monitor::Severity::Critical) clean = false;
  }
  if (clean && overlay_mgr.health() >= 1.0) {
    for (const char* cat : {"sys.auth", "sys.authz", "sys.key", "sys.avail"}) {
      trust_store.record(cat, trust::Outcome::Success);
    }
  }

  if (sched.now() < end_ms) {
    sched.after(aman->config().period_ms, [this]() { on_control_step(); });
  }
}

void Run::record_delivered(const std::string& env_id, const std::string& subscriber) {
  auto& subs = delivered_pairs[env_id];
  if (!subs.insert(subscriber).second) return;
  auto it = published_topic.find(env_id);
  if (it == published_topic.end()) {
    // Delivery of a pseudonymized wire topic resolves to its plain name.
    return;
  }
  report.per_topic[it->second].acked_pairs += 1;
  ++acked_total;
}

void Run::crash_broker(const std::string& id) {
  auto it = brokers.find(id);
  if (it == brokers.end()) return;
  it->second.down = true;  // killed without cleanup
  net.set_down(id, true);
}

void Run::setup() {
  setup_services();
  setup_principals();
  setup_brokers();
  setup_clients();
  setup_workload();
  setup_faults();

  // Threshold profile deltas for Tighten/RelaxThresholds: strict halves the
  // high bounds, normal restores them.
  const double per_publisher_rate =
      scenario.workload.publishers > 0
          ? scenario.workload.rate_mps / scenario.workload.publishers
          : scenario.workload.rate_mps;
  for (const auto& id : broker_ids) {
    const double hi = std::max(3.0 * scenario.workload.rate_mps, 30.0);
    normal_delta.thresholds[id + ".msg_rate"] = {std::nullopt, hi};
    strict_delta.thresholds[id + ".msg_rate"] = {std::nullopt, hi * 0.5};
  }
  const double p_hi = std::max(3.0 * per_publisher_rate, 30.0);
  normal_delta.thresholds["principal_rate.*"] = {std::nullopt, p_hi};
  strict_delta.thresholds["principal_rate.*"] = {std::nullopt, p_hi * 0.5};
}

void Run::finish() {
  // In-flight at shutdown: pending delivery records plus messages still
  // unaccepted at any broker, per topic.
  for (auto& [topic, st] : report.per_topic) {
    const std::uint64_t settled = st.acked_pairs + st.lost_pairs;
    st.inflight_pairs = st.expected_pairs > settled ? st.expected_pairs - settled : 0;
  }

  std::uint64_t expected = 0, acked = 0;
  for (const auto& [topic, st] : report.per_topic) {
    expected += st.expected_pairs;
    acked += st.acked_pairs;
  }
  report.delivery_ratio = expected == 0 ? 1.0 : static_cast<double>(acked) / expected;
  report.throughput_mps =
      scenario.workload.duration_s > 0
          ? static_cast<double>(acked) / scenario.workload.duration_s
          : 0.0;
  report.frames_captured = net.frames_captured();
  report.secret_scan_hits = net.secret_hits();
}

}  // namespace

RunReport run_scenario(const Scenario& scenario) {
  Run run(scenario);
  run.end_ms = static_cast<TimestampMs>(
      (scenario.workload.duration_s + scenario.drain_s) * 1000.0);
  run.setup();
  run.sched.run_until(run.end_ms);
  run.finish();
  return run.report;
}

RunReport run_scenario_file(const std::string& path) {
  return run_scenario(Scenario::parse_file(path));
}

}  // namespace gemom::sim
