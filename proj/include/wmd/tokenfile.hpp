#pragma once

// Token files: a `#`-prefixed `key=value` header, then one decimal token per line.
//
//   # wmd-tokens 1
//   # salt=0x1f
//   # scheme=gumbel
//   # prompt=3 14 15 92 65
//   17
//   4

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "wmd/core.hpp"
#include "wmd/error.hpp"

namespace wmd {

inline constexpr std::string_view kTokenFileMagic = "wmd-tokens 1";

struct TokenFile {
  /// Header entries other than the prompt, in key order.
  std::map<std::string, std::string> meta;
  std::vector<Token> prompt;
  std::vector<Token> tokens;

  std::optional<std::string> get(const std::string& key) const {
    auto it = meta.find(key);
    return it == meta.end() ? std::nullopt : std::optional(it->second);
  }
  friend bool operator==(const TokenFile&, const TokenFile&) = default;
};

inline void write_tokens(const TokenFile& f, std::ostream& out) {
  out << "# " << kTokenFileMagic << '\n';
  for (const auto& [k, v] : f.meta) {
    if (k.empty() || k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ContractError("token file metadata key '" + k + "' cannot be serialised");
    }
    out << "# " << k << '=' << v << '\n';
  }
  out << "# prompt=";
  for (std::size_t i = 0; i < f.prompt.size(); ++i) out << (i ? " " : "") << f.prompt[i];
  out << '\n';
  for (Token t : f.tokens) out << t << '\n';
}

inline void write_tokens(const TokenFile& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_tokens(f, out);
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

namespace detail {

inline Token parse_token(std::string_view s, const std::string& where) {
  Token v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || v < 0) {
    throw IoError(where + ": expected a non-negative integer token, got '" + std::string(s) + "'");
  }
  return v;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// `source` names the input in error messages, which carry the 1-based line number.
inline TokenFile read_tokens(std::istream& in, const std::string& source = "<input>") {
  TokenFile f;
  std::string line;
  std::size_t lineno = 0;
  bool body = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    std::string_view s = detail::trim(line);
    if (s.empty()) continue;
    if (s.front() == '#') {
      if (body) throw IoError(where + ": header line after the first token");
      s = detail::trim(s.substr(1));
      if (s == kTokenFileMagic) continue;
      const auto eq = s.find('=');
      if (eq == std::string_view::npos) throw IoError(where + ": header line must be key=value");
      const std::string key(detail::trim(s.substr(0, eq)));
      const std::string_view value = detail::trim(s.substr(eq + 1));
      if (key == "prompt") {
        std::istringstream ps{std::string(value)};
        std::string tok;
        while (ps >> tok) f.prompt.push_back(detail::parse_token(tok, where));
      } else {
        f.meta[key] = std::string(value);
      }
      continue;
    }
    body = true;
    f.tokens.push_back(detail::parse_token(s, where));
  }
  if (in.bad()) throw IoError(source + ": read failure");
  return f;
}

inline TokenFile read_tokens(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_tokens(in, path);
}

}  // namespace wmd
