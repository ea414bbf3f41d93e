#ifndef GEMOMBUS_BROKER_TOPIC_HPP
#define GEMOMBUS_BROKER_TOPIC_HPP

#include <string>
#include <string_view>
#include <vector>

namespace gemom::broker {

/// Slash-separated path, e.g. "finance/quotes/EURUSD". Segments are non-empty
/// and never the reserved pattern tokens.
struct Topic {
  std::string name;

  bool operator==(const Topic&) const = default;
  auto operator<=>(const Topic&) const = default;
};

/// Path with optional "*" (exactly one segment) and trailing "#" (zero or
/// more segments).
struct TopicPattern {
  std::string pattern;

  bool operator==(const TopicPattern&) const = default;
};

std::vector<std::string_view> split_path(std::string_view path);

/// True for well-formed topic names. Reserved ("_gemom/") names are only
/// valid when allow_reserved is set.
bool valid_topic(std::string_view name, bool allow_reserved = false);
bool valid_pattern(std::string_view pattern);

/// Deterministic, total match. "a/*" matches "a/b" but not "a/b/c";
/// "a/#" matches "a", "a/b", "a/b/c".
bool match(const TopicPattern& pattern, const Topic& topic);

/// True when every topic matched by `inner` is also matched by `outer`.
/// Used for scope containment when subscribing with a token.
bool pattern_contains(const TopicPattern& outer, const TopicPattern& inner);

}  // namespace gemom::broker

#endif
