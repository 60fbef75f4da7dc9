#include "kbprobe/util.hpp"

#include <algorithm>
#include <cctype>

#include "kbprobe/errors.hpp"

namespace kbprobe {

std::vector<std::size_t> weighted_sample_without_replacement(
    std::span<const double> weights, std::size_t k, rng& r) {
  std::vector<std::size_t> alive(weights.size());
  for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;
  std::vector<double> w(weights.begin(), weights.end());
  for (double v : w)
    if (!(v > 0.0)) throw precondition_error("sample weights must be positive");
  if (k > alive.size())
    throw precondition_error("sample size exceeds population");

  std::vector<std::size_t> picked;
  picked.reserve(k);
  double total = 0.0;
  for (double v : w) total += v;
  for (std::size_t draw = 0; draw < k; ++draw) {
    double target = r.real01() * total;
    std::size_t chosen = alive.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < alive.size(); ++i) {
      acc += w[i];
      if (target < acc) {
        chosen = i;
        break;
      }
    }
    picked.push_back(alive[chosen]);
    total -= w[chosen];
    alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(chosen));
    w.erase(w.begin() + static_cast<std::ptrdiff_t>(chosen));
  }
  return picked;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

std::string replace_all_copy(std::string s, std::string_view from,
                             std::string_view to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(s.substr(start));
      return parts;
    }
    parts.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string slug(std::string_view s) {
  std::string out;
  bool pending_dash = false;
  for (unsigned char c : s) {
    if (std::isalnum(c)) {
      if (pending_dash && !out.empty()) out.push_back('-');
      pending_dash = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_dash = true;
    }
  }
  return out.empty() ? std::string("x") : out;
}

std::string format_pct1(double ratio) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", ratio * 100.0);
  return std::string(buf);
}

std::string format_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

}  // namespace kbprobe
