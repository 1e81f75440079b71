#include "failanchor/signature.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "failanchor/error.hpp"
#include "failanchor/hash.hpp"

namespace failanchor {

namespace {

constexpr std::array<std::string_view, 6> kInfraNames = {"none",          "timeout",   "connection",
                                                         "out_of_memory", "container", "platform"};

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_word(char c) { return is_alnum(c) || c == '_' || c == '-' || c == '.'; }
bool is_hex(char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

bool path_boundary(char prev) {
  return is_space(prev) || std::string_view("=:([{,<>'\"").find(prev) != std::string_view::npos;
}

bool path_stop(char c) {
  return is_space(c) || std::string_view("'\",;)]}>").find(c) != std::string_view::npos;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), is_digit);
}

bool is_hex_id(std::string_view s) {
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    return std::all_of(s.begin() + 2, s.end(), is_hex);
  }
  if (s.size() < 6 || !std::all_of(s.begin(), s.end(), is_hex)) return false;
  bool digit = std::any_of(s.begin(), s.end(), is_digit);
  bool letter = std::any_of(s.begin(), s.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); });
  return digit && letter;
}

bool is_ipv4(std::string_view s) {
  int parts = 0;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = i;
    while (j < s.size() && is_digit(s[j])) ++j;
    if (j == i || j - i > 3) return false;
    ++parts;
    if (j == s.size()) break;
    if (s[j] != '.') return false;
    i = j + 1;
    if (i == s.size()) return false;
  }
  return parts == 4;
}

bool host_like(std::string_view token) {
  if (token.empty()) return false;
  if (is_ipv4(token)) return true;
  return std::isalpha(static_cast<unsigned char>(token[0])) != 0 && token.back() != '.' && token.back() != '-';
}

// Length of a URL scheme prefix "xxx://" starting at i, or 0.
std::size_t scheme_length(std::string_view s, std::size_t i) {
  if (i >= s.size() || !std::isalpha(static_cast<unsigned char>(s[i]))) return 0;
  std::size_t j = i + 1;
  while (j < s.size() && (is_alnum(s[j]) || s[j] == '+' || s[j] == '.' || s[j] == '-')) ++j;
  if (s.substr(j, 3) == "://") return j + 3 - i;
  return 0;
}

void mask_segments(std::string_view token, std::string& out) {
  std::size_t i = 0;
  while (i < token.size()) {
    if (token[i] == '.' || token[i] == '-' || token[i] == '_') {
      out += token[i++];
      continue;
    }
    std::size_t j = i;
    while (j < token.size() && token[j] != '.' && token[j] != '-' && token[j] != '_') ++j;
    std::string_view seg = token.substr(i, j - i);
    if (all_digits(seg) && seg.size() >= 3) out += kNumToken;
    else if (is_hex_id(seg)) out += kIdToken;
    else out += seg;
    i = j;
  }
}

bool contains_word(std::string_view hay, std::string_view word) {
  std::size_t pos = 0;
  while ((pos = hay.find(word, pos)) != std::string_view::npos) {
    bool left = pos == 0 || !is_alnum(hay[pos - 1]);
    bool right = pos + word.size() >= hay.size() || !is_alnum(hay[pos + word.size()]);
    if (left && right) return true;
    ++pos;
  }
  return false;
}

bool contains_any(std::string_view hay, std::initializer_list<std::string_view> needles) {
  return std::any_of(needles.begin(), needles.end(),
                     [&](std::string_view n) { return hay.find(n) != std::string_view::npos; });
}

}  // namespace

std::string_view to_string(InfraClass c) noexcept { return kInfraNames[static_cast<std::size_t>(c)]; }

std::optional<InfraClass> parse_infra_class(std::string_view s) noexcept {
  for (std::size_t i = 0; i < kInfraNames.size(); ++i) {
    if (kInfraNames[i] == s) return static_cast<InfraClass>(i);
  }
  return std::nullopt;
}

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

std::string normalize_key(std::string_view text) { return to_lower(collapse_whitespace(text)); }

InfraClass classify_infra(std::string_view raw) {
  const std::string s = to_lower(raw);
  if (contains_any(s, {"out of memory", "outofmemory", "memoryerror", "cannot allocate memory", "oomkilled"}) ||
      contains_word(s, "oom"))
    return InfraClass::out_of_memory;
  if (contains_any(s, {"docker", "container", "crashloop", "imagepull", "image pull"}))
    return InfraClass::container;
  if (contains_any(s, {"outage", "service unavailable", "platform error"})) return InfraClass::platform;
  if (contains_any(s, {"timeout", "timed out", "deadline exceeded"})) return InfraClass::timeout;
  if (contains_any(s, {"connection", "refused", "unreachable", "econnreset", "could not resolve host"}))
    return InfraClass::connection;
  return InfraClass::none;
}

ErrorSignature canonicalize_error(std::string_view raw) {
  const std::string s = collapse_whitespace(raw);
  if (s.empty()) throw Error(ErrorCode::empty_input, "cannot canonicalize an empty message");

  ErrorSignature sig;
  std::string out;
  out.reserve(s.size());
  const std::size_t n = s.size();
  std::size_t i = 0;
  while (i < n) {
    const char c = s[i];
    const char prev = i == 0 ? ' ' : s[i - 1];

    if ((c == '"' || c == '\'' || c == '`') && !is_alnum(prev)) {
      std::size_t close = s.find(c, i + 1);
      if (close != std::string::npos && close - i - 1 <= 256 && (close + 1 == n || !is_alnum(s[close + 1]))) {
        out += kStrToken;
        i = close + 1;
        continue;
      }
    }

    if (path_boundary(prev) || i == 0) {
      if (std::size_t sl = scheme_length(s, i); sl > 0) {
        std::size_t j = i + sl;
        std::size_t host_end = j;
        while (host_end < n && !path_stop(s[host_end]) && s[host_end] != '/' && s[host_end] != ':') ++host_end;
        if (host_end > j) sig.masked.endpoints.emplace_back(s.substr(j, host_end - j));
        while (j < n && !path_stop(s[j])) ++j;
        out += kUrlToken;
        i = j;
        continue;
      }
      const bool unix_path = c == '/' && i + 1 < n && (is_word(s[i + 1]) || s[i + 1] == '~');
      const bool win_path = std::isalpha(static_cast<unsigned char>(c)) && i + 2 < n && s[i + 1] == ':' &&
                            s[i + 2] == '\\';
      if (unix_path || win_path) {
        std::size_t j = i;
        while (j < n && !path_stop(s[j])) ++j;
        std::size_t end = j;
        while (end > i + 1 && (s[end - 1] == '.' || s[end - 1] == ':' || s[end - 1] == ',')) --end;
        sig.masked.paths.emplace_back(s.substr(i, end - i));
        out += kPathToken;
        out.append(s, end, j - end);
        i = j;
        continue;
      }
    }

    if (is_word(c)) {
      std::size_t j = i;
      while (j < n && is_word(s[j])) ++j;
      std::string_view token(s.data() + i, j - i);
      if (j + 1 < n && s[j] == ':' && is_digit(s[j + 1]) && host_like(token)) {
        std::size_t k = j + 1;
        while (k < n && is_digit(s[k])) ++k;
        if (k - j - 1 <= 5 && (k == n || !is_alnum(s[k]))) {
          sig.masked.endpoints.emplace_back(token);
          out += kIdToken;
          out += ':';
          out += kNumToken;
          i = k;
          continue;
        }
      }
      mask_segments(token, out);
      i = j;
      continue;
    }

    out += c;
    ++i;
  }

  sig.canonical = collapse_whitespace(out);
  sig.raw_hash = to_hex(fnv1a64(s));
  sig.infra_class = classify_infra(s);
  return sig;
}

}  // namespace failanchor
