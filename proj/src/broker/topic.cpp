#include "gemombus/broker/topic.hpp"

#include "gemombus/wire/topics.hpp"

namespace gemom::broker {

std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= path.size()) {
    const std::size_t slash = path.find('/', start);
    if (slash == std::string_view::npos) {
      out.push_back(path.substr(start));
      break;
    }
    out.push_back(path.substr(start, slash - start));
    start = slash + 1;
  }
  return out;
}

bool valid_topic(std::string_view name, bool allow_reserved) {
  if (name.empty()) return false;
  if (!allow_reserved && wire::topics::is_reserved(name)) return false;
  for (const auto seg : split_path(name)) {
    if (seg.empty() || seg == "*" || seg == "#") return false;
  }
  return true;
}

bool valid_pattern(std::string_view pattern) {
  if (pattern.empty()) return false;
  const auto segs = split_path(pattern);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (segs[i].empty()) return false;
    if (segs[i] == "#" && i + 1 != segs.size()) return false;  // '#' only terminal
  }
  return true;
}

bool match(const TopicPattern& pattern, const Topic& topic) {
  const auto ps = split_path(pattern.pattern);
  const auto ts = split_path(topic.name);
  std::size_t i = 0;
  for (; i < ps.size(); ++i) {
    if (ps[i] == "#") return true;  // any remaining suffix, including empty
    if (i >= ts.size()) return false;
    if (ps[i] == "*") continue;
    if (ps[i] != ts[i]) return false;
  }
  return i == ts.size();
}

bool pattern_contains(const TopicPattern& outer, const TopicPattern& inner) {
  const auto out = split_path(outer.pattern);
  const auto in = split_path(inner.pattern);
  std::size_t i = 0;
  while (true) {
    const bool out_done = i >= out.size();
    const bool in_done = i >= in.size();
    if (!out_done && out[i] == "#") return true;
    if (out_done && in_done) return true;
    if (out_done || in_done) return false;
    if (in[i] == "#") return false;  // inner matches arbitrary suffixes, outer does not
    if (out[i] == "*") {
      // covers any single segment, literal or '*'
    } else if (in[i] == "*" || out[i] != in[i]) {
      return false;
    }
    ++i;
  }
}

}  // namespace gemom::broker
