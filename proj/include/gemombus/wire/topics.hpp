#ifndef GEMOMBUS_WIRE_TOPICS_HPP
#define GEMOMBUS_WIRE_TOPICS_HPP

#include <string>
#include <string_view>

namespace gemom::wire::topics {

// Control-plane namespace. Client applications may not publish under
// "_gemom/" except to the KMF request topics.
inline constexpr std::string_view kReservedPrefix = "_gemom/";

inline constexpr std::string_view kKmfRegister = "_gemom/kmf/register";
inline constexpr std::string_view kKmfKeyReq = "_gemom/kmf/keyreq";
inline constexpr std::string_view kKmfRevocation = "_gemom/kmf/revocation";
inline constexpr std::string_view kKmfPubkeys = "_gemom/kmf/pubkeys";
inline constexpr std::string_view kPolicyEvolutionPrefix = "_gemom/policy/";
inline constexpr std::string_view kMetricsPrefix = "_gemom/metrics/";
inline constexpr std::string_view kAsmControl = "_gemom/asm/control";

inline bool is_reserved(std::string_view topic) {
  return topic.starts_with(kReservedPrefix);
}

inline bool is_kmf_request(std::string_view topic) {
  return topic == kKmfRegister || topic == kKmfKeyReq;
}

inline std::string metrics_topic(std::string_view node, std::string_view metric) {
  std::string t(kMetricsPrefix);
  t.append(node);
  t.push_back('/');
  t.append(metric);
  return t;
}

}  // namespace gemom::wire::topics

#endif
