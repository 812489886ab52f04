#pragma once

// Per-step secret keys derived from a sliding window of preceding tokens and a
// private salt. Generator and detector share this code path, so keys agree
// bit for bit.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wmd/core.hpp"
#include "wmd/rng.hpp"

namespace wmd {

struct KeySalt {
  std::uint64_t value = 0;
  friend bool operator==(KeySalt, KeySalt) = default;
};

/// Accepts decimal or 0x-prefixed hexadecimal 64-bit values.
inline KeySalt parse_salt(std::string_view text) {
  int base = 10;
  if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
    text.remove_prefix(2);
    base = 16;
  }
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v, base);
  if (text.empty() || ec != std::errc{} || ptr != end) {
    throw ValidationError("invalid salt '" + std::string(text) + "'");
  }
  return KeySalt{v};
}

struct WindowConfig {
  std::size_t width = 5;
  /// Fill for positions before the start of the history; nullopt forbids padding.
  std::optional<Token> pad_token = Token{-1};
};

namespace streams {
inline constexpr std::uint64_t kWindowSalt = 0x6a09e667f3bcc908ULL;
inline constexpr std::uint64_t kGumbelKey = 0xbb67ae8584caa73bULL;
inline constexpr std::uint64_t kGreenKey = 0x3c6ef372fe94f82bULL;
}  // namespace streams

/// Iterated SplitMix64 finalizer folding in the salt, then each window token in order.
inline std::uint64_t derive_seed(std::span<const Token> window, KeySalt salt, const WindowConfig& cfg = {}) {
  if (window.size() != cfg.width) {
    throw ContractError("key window has " + std::to_string(window.size()) + " tokens, expected " +
                        std::to_string(cfg.width));
  }
  std::uint64_t h = mix64(salt.value ^ streams::kWindowSalt);
  for (Token t : window) {
    h = mix64((h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(t))) + kGoldenGamma);
  }
  return h;
}

/// Writes the `width` tokens preceding generated position t (0-based) into `out`.
/// History is prompt followed by tokens[0..t).
inline void window_at(std::span<const Token> prompt, std::span<const Token> tokens, std::size_t t,
                      const WindowConfig& cfg, std::vector<Token>& out) {
  if (t > tokens.size()) throw ContractError("window position beyond token sequence");
  out.resize(cfg.width);
  const std::size_t available = prompt.size() + t;
  if (available < cfg.width && !cfg.pad_token) {
    throw ContractError("history of " + std::to_string(available) + " tokens is shorter than key window width " +
                        std::to_string(cfg.width) + " and padding is disabled");
  }
  for (std::size_t k = 0; k < cfg.width; ++k) {
    // History index of slot k, counted so that history[available - 1] is the last token.
    const std::size_t back = cfg.width - k;  // 1 = most recent
    if (back > available) {
      out[k] = *cfg.pad_token;
    } else {
      const std::size_t idx = available - back;
      out[k] = idx < prompt.size() ? prompt[idx] : tokens[idx - prompt.size()];
    }
  }
}

/// Key seed for generated position t.
inline std::uint64_t seed_at(std::span<const Token> prompt, std::span<const Token> tokens, std::size_t t,
                             KeySalt salt, const WindowConfig& cfg, std::vector<Token>& scratch) {
  window_at(prompt, tokens, t, cfg, scratch);
  return derive_seed(scratch, salt, cfg);
}

struct GumbelKey {
  std::vector<double> u;
  std::size_t size() const { return u.size(); }
};

/// Entry `token` of the Gumbel key for `seed`; random access into the SplitMix64
/// stream used by gumbel_key.
inline double gumbel_key_entry(std::uint64_t seed, std::size_t token) {
  const std::uint64_t base = seed ^ streams::kGumbelKey;
  return to_open_unit(mix64(base + (static_cast<std::uint64_t>(token) + 1) * kGoldenGamma));
}

inline void gumbel_key_into(std::uint64_t seed, std::span<double> out) {
  SplitMix64 sm(seed ^ streams::kGumbelKey);
  for (double& x : out) x = to_open_unit(sm());
}

inline GumbelKey gumbel_key(std::uint64_t seed, std::size_t m) {
  VocabSpec{m};
  GumbelKey key{std::vector<double>(m)};
  gumbel_key_into(seed, key.u);
  return key;
}

class GreenList {
 public:
  GreenList() = default;
  explicit GreenList(std::size_t m) : mask_(m, 0) {}

  bool contains(Token t) const {
    return t >= 0 && static_cast<std::size_t>(t) < mask_.size() && mask_[static_cast<std::size_t>(t)] != 0;
  }
  std::span<const Token> members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  std::size_t vocab_size() const { return mask_.size(); }

 private:
  friend void greenlist_key_into(std::uint64_t, std::size_t, double, GreenList&, std::vector<Token>&);
  std::vector<Token> members_;
  std::vector<std::uint8_t> mask_;
};

/// Uniform random subset of size gamma*m by partial Fisher-Yates; buffers are reused.
inline void greenlist_key_into(std::uint64_t seed, std::size_t m, double gamma, GreenList& out,
                               std::vector<Token>& perm) {
  VocabSpec{m};
  const std::size_t g = green_list_size(gamma, m);
  perm.resize(m);
  for (std::size_t i = 0; i < m; ++i) perm[i] = static_cast<Token>(i);
  Rng rng(seed ^ streams::kGreenKey);
  for (std::size_t i = 0; i < g; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(m - i));
    std::swap(perm[i], perm[j]);
  }
  out.members_.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(g));
  std::sort(out.members_.begin(), out.members_.end());
  out.mask_.assign(m, 0);
  for (Token t : out.members_) out.mask_[static_cast<std::size_t>(t)] = 1;
}

inline GreenList greenlist_key(std::uint64_t seed, std::size_t m, double gamma) {
  GreenList out;
  std::vector<Token> perm;
  greenlist_key_into(seed, m, gamma, out, perm);
  return out;
}

}  // namespace wmd
