#pragma once

// Registry of prohibitive functions: declared input/output layouts,
// deterministic concrete implementations, optional lazy constraint
// generators, session-secret injection points, and the assumption
// whitelist. The bundled suite uses toy primitives whose verification-
// relevant structure matches real ciphers/hashes/key exchanges without
// their cost.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbverify/expr.hpp"

namespace cbv {

using Bytes = std::vector<uint8_t>;

inline std::string hex_of(const Bytes& b) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(b.size() * 2);
  for (uint8_t c : b) {
    s.push_back(digits[c >> 4]);
    s.push_back(digits[c & 0xf]);
  }
  return s;
}

inline std::optional<Bytes> bytes_from_hex(const std::string& s) {
  if (s.size() % 2) return std::nullopt;
  Bytes out;
  out.reserve(s.size() / 2);
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  for (size_t i = 0; i < s.size(); i += 2) {
    int h = nib(s[i]), l = nib(s[i + 1]);
    if (h < 0 || l < 0) return std::nullopt;
    out.push_back(uint8_t(h << 4 | l));
  }
  return out;
}

struct InputSpec {
  enum class K { Scalar, FixedBuf, AnyBuf };
  K k = K::Scalar;
  Width width = 16;    // Scalar
  uint32_t len = 0;    // FixedBuf

  static InputSpec scalar(Width w) { return {K::Scalar, w, 0}; }
  static InputSpec buf(uint32_t n) { return {K::FixedBuf, 0, n}; }
  static InputSpec any_buf() { return {K::AnyBuf, 0, 0}; }
};

struct OutputSpec {
  enum class K { Scalar, ByteLen };
  K k = K::Scalar;
  Width width = 16;
  // Output byte length as a function of input byte lengths.
  std::function<size_t(const std::vector<size_t>&)> len_fn;

  static OutputSpec scalar(Width w) { return {K::Scalar, w, nullptr}; }
  static OutputSpec bytes(std::function<size_t(const std::vector<size_t>&)> f) {
    return {K::ByteLen, 0, std::move(f)};
  }
  size_t byte_len(const std::vector<size_t>& in_lens) const {
    return k == K::Scalar ? width / 8 : len_fn(in_lens);
  }
};

// Produces constraints on not-yet-known buffers of a skipped call once a
// trigger subset of its inputs/outputs has been inferred concretely.
struct LazyGenerator {
  std::vector<size_t> trigger_inputs;
  bool trigger_output = false;
  // inputs[i] holds concrete bytes for trigger inputs; output likewise.
  // Returns (input index, bytes) pairs to pin.
  std::function<std::vector<std::pair<size_t, Bytes>>(
      const std::vector<std::optional<Bytes>>&, const std::optional<Bytes>&)>
      produce;
};

struct ProhibitiveEntry {
  std::string name;
  std::vector<InputSpec> inputs;
  OutputSpec output;
  std::function<Bytes(const std::vector<Bytes>&)> impl;
  std::optional<LazyGenerator> lazy;
  std::string assume_template;  // empty = default rendering
  bool fixture = false;         // test-only entry
  // Hook for mandatory server-side output checks; unused by the bundled
  // entries.
  std::function<bool(const Bytes&)> output_predicate;
};

struct InjectionPoint {
  std::string function;
  std::string metadata_key;
};

class ProhibitiveRegistry {
  std::map<std::string, ProhibitiveEntry> entries_;
  std::map<std::string, InjectionPoint> injections_;

 public:
  void add(ProhibitiveEntry e) { entries_[e.name] = std::move(e); }

  void inject(const std::string& fn, const std::string& key) {
    if (injections_.count(fn))
      throw std::runtime_error("duplicate injection for " + fn);
    injections_[fn] = InjectionPoint{fn, key};
  }

  const ProhibitiveEntry* find(const std::string& name) const {
    auto it = entries_.find(name);
    return it == entries_.end() ? nullptr : &it->second;
  }
  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  const InjectionPoint* injection_for(const std::string& name) const {
    auto it = injections_.find(name);
    return it == injections_.end() ? nullptr : &it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> v;
    for (const auto& [n, e] : entries_) v.push_back(n);
    return v;
  }
};

// ---------------------------------------------------------------------
// Toy primitives.

namespace toy {

inline uint8_t feistel_round(uint8_t x, uint16_t key, unsigned round) {
  uint32_t v = uint32_t(x) * 2654435761u + key + round;
  return uint8_t(v >> 24);
}

// 16-bit keyed permutation: 4-round Feistel over byte halves.
inline uint16_t toyblock(uint16_t key, uint16_t x) {
  uint8_t l = uint8_t(x >> 8), r = uint8_t(x);
  for (unsigned i = 0; i < 4; ++i) {
    uint8_t nl = r;
    uint8_t nr = uint8_t(l ^ feistel_round(r, key, i));
    l = nl;
    r = nr;
  }
  return uint16_t(uint16_t(l) << 8 | r);
}

inline uint16_t toyblock_inv(uint16_t key, uint16_t y) {
  uint8_t l = uint8_t(y >> 8), r = uint8_t(y);
  for (int i = 3; i >= 0; --i) {
    uint8_t pr = l;
    uint8_t pl = uint8_t(r ^ feistel_round(l, key, unsigned(i)));
    l = pl;
    r = pr;
  }
  return uint16_t(uint16_t(l) << 8 | r);
}

// 32-bit iterated mix (FNV-1a).
inline uint32_t toyhash(const Bytes& data) {
  uint32_t h = 2166136261u;
  for (uint8_t b : data) {
    h ^= b;
    h *= 16777619u;
  }
  return h;
}

inline constexpr uint32_t kDhPrime = 65521;
inline constexpr uint32_t kDhGen = 17;

inline uint16_t modpow(uint32_t base, uint32_t exp, uint32_t mod) {
  uint64_t acc = 1, b = base % mod;
  while (exp) {
    if (exp & 1) acc = acc * b % mod;
    b = b * b % mod;
    exp >>= 1;
  }
  return uint16_t(acc);
}

inline uint16_t toydh(uint16_t exponent) {
  return modpow(kDhGen, exponent, kDhPrime);
}

inline uint32_t toymac(uint16_t key, const Bytes& data) {
  Bytes joined;
  joined.push_back(uint8_t(key >> 8));
  joined.push_back(uint8_t(key));
  joined.insert(joined.end(), data.begin(), data.end());
  return toyhash(joined);
}

// CBC chaining of toyblock over 2-byte blocks, zero IV.
inline Bytes toycbc(uint16_t key, const Bytes& pt) {
  if (pt.size() % 2) throw std::runtime_error("TOYCBC needs even length");
  Bytes ct(pt.size());
  uint16_t prev = 0;
  for (size_t i = 0; i < pt.size(); i += 2) {
    uint16_t p = uint16_t(uint16_t(pt[i]) << 8 | pt[i + 1]);
    uint16_t c = toyblock(key, uint16_t(p ^ prev));
    ct[i] = uint8_t(c >> 8);
    ct[i + 1] = uint8_t(c);
    prev = c;
  }
  return ct;
}

inline Bytes toycbc_inv(uint16_t key, const Bytes& ct) {
  if (ct.size() % 2) throw std::runtime_error("TOYCBC needs even length");
  Bytes pt(ct.size());
  uint16_t prev = 0;
  for (size_t i = 0; i < ct.size(); i += 2) {
    uint16_t c = uint16_t(uint16_t(ct[i]) << 8 | ct[i + 1]);
    uint16_t p = uint16_t(toyblock_inv(key, c) ^ prev);
    pt[i] = uint8_t(p >> 8);
    pt[i + 1] = uint8_t(p);
    prev = c;
  }
  return pt;
}

}  // namespace toy

namespace detail {

inline uint64_t be_value(const Bytes& b) {
  uint64_t v = 0;
  for (uint8_t c : b) v = v << 8 | c;
  return v;
}

inline Bytes be_bytes(uint64_t v, size_t n) {
  Bytes out(n);
  for (size_t i = 0; i < n; ++i) out[n - 1 - i] = uint8_t(v >> (8 * i));
  return out;
}

}  // namespace detail

// The bundled registry. PAPERCIPHER is a table-backed fixture kept only
// so the worked multipass example is reproducible byte for byte.
inline ProhibitiveRegistry builtin_suite() {
  using detail::be_bytes;
  using detail::be_value;
  ProhibitiveRegistry r;

  {
    ProhibitiveEntry e;
    e.name = "TOYBLOCK";
    e.inputs = {InputSpec::scalar(16), InputSpec::scalar(16)};
    e.output = OutputSpec::scalar(16);
    e.impl = [](const std::vector<Bytes>& in) {
      return be_bytes(toy::toyblock(uint16_t(be_value(in[0])),
                                    uint16_t(be_value(in[1]))),
                      2);
    };
    r.add(std::move(e));
  }
  {
    ProhibitiveEntry e;
    e.name = "TOYHASH";
    e.inputs = {InputSpec::any_buf()};
    e.output = OutputSpec::scalar(32);
    e.impl = [](const std::vector<Bytes>& in) {
      return be_bytes(toy::toyhash(in[0]), 4);
    };
    r.add(std::move(e));
  }
  {
    ProhibitiveEntry e;
    e.name = "TOYDH";
    e.inputs = {InputSpec::scalar(16)};
    e.output = OutputSpec::scalar(16);
    e.impl = [](const std::vector<Bytes>& in) {
      return be_bytes(toy::toydh(uint16_t(be_value(in[0]))), 2);
    };
    r.add(std::move(e));
  }
  {
    // Shared-secret derivation: base^exp mod p. The usual injection
    // target when the server logs the session key.
    ProhibitiveEntry e;
    e.name = "TOYKDF";
    e.inputs = {InputSpec::scalar(16), InputSpec::any_buf()};
    e.output = OutputSpec::scalar(16);
    e.impl = [](const std::vector<Bytes>& in) {
      return be_bytes(toy::modpow(uint32_t(be_value(in[1])),
                                  uint32_t(be_value(in[0])), toy::kDhPrime),
                      2);
    };
    r.add(std::move(e));
  }
  {
    ProhibitiveEntry e;
    e.name = "TOYMAC";
    e.inputs = {InputSpec::scalar(16), InputSpec::any_buf()};
    e.output = OutputSpec::scalar(32);
    e.impl = [](const std::vector<Bytes>& in) {
      return be_bytes(toy::toymac(uint16_t(be_value(in[0])), in[1]), 4);
    };
    r.add(std::move(e));
  }
  {
    ProhibitiveEntry e;
    e.name = "TOYCBC";
    e.inputs = {InputSpec::scalar(16), InputSpec::any_buf()};
    e.output = OutputSpec::bytes(
        [](const std::vector<size_t>& lens) { return lens[1]; });
    e.impl = [](const std::vector<Bytes>& in) {
      return toy::toycbc(uint16_t(be_value(in[0])), in[1]);
    };
    LazyGenerator g;
    g.trigger_inputs = {0};
    g.trigger_output = true;
    g.produce = [](const std::vector<std::optional<Bytes>>& ins,
                   const std::optional<Bytes>& out)
        -> std::vector<std::pair<size_t, Bytes>> {
      uint16_t key = uint16_t(be_value(*ins[0]));
      return {{1, toy::toycbc_inv(key, *out)}};
    };
    e.lazy = std::move(g);
    r.add(std::move(e));
  }
  {
    ProhibitiveEntry e;
    e.name = "PAPERCIPHER";
    e.inputs = {InputSpec::scalar(16)};
    e.output = OutputSpec::scalar(16);
    e.fixture = true;
    e.impl = [](const std::vector<Bytes>& in) {
      uint16_t x = uint16_t(be_value(in[0]));
      uint16_t y = x == 0x1234 ? 0x2343 : toy::toyblock(0xC0DE, x);
      return be_bytes(y, 2);
    };
    r.add(std::move(e));
  }
  return r;
}

// ---------------------------------------------------------------------
// Assumption whitelist: matching is by function identity and arity.

struct WhitelistEntry {
  std::string function;
  size_t arity = 0;
  std::string note;
};

struct Whitelist {
  std::vector<WhitelistEntry> entries;

  bool allows(const std::string& fn, size_t arity) const {
    for (const auto& e : entries)
      if (e.function == fn && e.arity == arity) return true;
    return false;
  }
};

inline Whitelist default_whitelist() {
  Whitelist w;
  w.entries = {{"TOYDH", 1, "group element from some exponent"},
               {"TOYHASH", 1, "preimage exists for hash output"},
               {"TOYMAC", 2, "keyed-hash preimage exists"},
               {"TOYCBC", 2, "plaintext exists for ciphertext"}};
  return w;
}

inline Whitelist parse_whitelist(const std::string& text) {
  Whitelist w;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok) || tok[0] == '#') continue;
    if (tok != "allow")
      throw std::runtime_error("whitelist line " + std::to_string(lineno) +
                               ": expected 'allow'");
    WhitelistEntry e;
    if (!(ls >> e.function >> e.arity))
      throw std::runtime_error("whitelist line " + std::to_string(lineno) +
                               ": expected '<name> <arity>'");
    std::getline(ls, e.note);
    w.entries.push_back(std::move(e));
  }
  return w;
}

inline std::string serialize_whitelist(const Whitelist& w) {
  std::ostringstream os;
  for (const auto& e : w.entries)
    os << "allow " << e.function << " " << e.arity << e.note << "\n";
  return os.str();
}

// ---------------------------------------------------------------------
// Registry declaration files. Line-oriented:
//   prohibit <name> in(<spec>,...) out(<spec>) [impl=<builtin>]
//       [lazy=<builtin> trigger=<f>,<f>...] [assume="<template>"]
//   inject <name> from <metadata-key>
// Input specs: u8|u16|u32|buf|buf<N>. Output: u8|u16|u32|buf=in<K>|buf<N>.
// impl/lazy ids refer to the bundled implementations.

namespace detail {

inline std::function<Bytes(const std::vector<Bytes>&)> builtin_impl(
    const std::string& id, const ProhibitiveRegistry& base) {
  const ProhibitiveEntry* e = base.find(id);
  if (!e) throw std::runtime_error("unknown impl builtin: " + id);
  return e->impl;
}

inline InputSpec parse_input_spec(const std::string& s) {
  if (s == "u8") return InputSpec::scalar(8);
  if (s == "u16") return InputSpec::scalar(16);
  if (s == "u32") return InputSpec::scalar(32);
  if (s == "buf") return InputSpec::any_buf();
  if (s.rfind("buf", 0) == 0) return InputSpec::buf(uint32_t(std::stoul(s.substr(3))));
  throw std::runtime_error("bad input spec: " + s);
}

inline OutputSpec parse_output_spec(const std::string& s) {
  if (s == "u8") return OutputSpec::scalar(8);
  if (s == "u16") return OutputSpec::scalar(16);
  if (s == "u32") return OutputSpec::scalar(32);
  if (s.rfind("buf=in", 0) == 0) {
    size_t k = std::stoul(s.substr(6));
    return OutputSpec::bytes(
        [k](const std::vector<size_t>& lens) { return lens.at(k); });
  }
  if (s.rfind("buf", 0) == 0) {
    size_t n = std::stoul(s.substr(3));
    return OutputSpec::bytes([n](const std::vector<size_t>&) { return n; });
  }
  throw std::runtime_error("bad output spec: " + s);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

// Parses declarations on top of a base registry (usually builtin_suite()).
inline ProhibitiveRegistry parse_registry_file(const std::string& text,
                                               ProhibitiveRegistry base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  const ProhibitiveRegistry builtins = builtin_suite();
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok) || tok[0] == '#') continue;
    auto fail = [&](const std::string& msg) -> std::runtime_error {
      return std::runtime_error("registry line " + std::to_string(lineno) +
                                ": " + msg);
    };
    if (tok == "inject") {
      std::string fn, kw, key;
      if (!(ls >> fn >> kw >> key) || kw != "from")
        throw fail("expected 'inject <name> from <key>'");
      base.inject(fn, key);
      continue;
    }
    if (tok != "prohibit") throw fail("expected 'prohibit' or 'inject'");
    ProhibitiveEntry e;
    if (!(ls >> e.name)) throw fail("missing function name");
    std::string rest;
    std::getline(ls, rest);
    auto field = [&](const std::string& key) -> std::optional<std::string> {
      size_t p = rest.find(key);
      if (p == std::string::npos) return std::nullopt;
      p += key.size();
      if (p < rest.size() && rest[p] == '"') {
        size_t q = rest.find('"', p + 1);
        if (q == std::string::npos) throw fail("unterminated string");
        return rest.substr(p + 1, q - p - 1);
      }
      size_t q = rest.find_first_of(" \t", p);
      return rest.substr(p, q == std::string::npos ? q : q - p);
    };
    auto paren = [&](const std::string& key) -> std::optional<std::string> {
      size_t p = rest.find(key + "(");
      if (p == std::string::npos) return std::nullopt;
      p += key.size() + 1;
      size_t q = rest.find(')', p);
      if (q == std::string::npos) throw fail("unterminated " + key + "(...)");
      return rest.substr(p, q - p);
    };
    auto ins = paren("in");
    auto outs = paren("out");
    if (!ins || !outs) throw fail("need in(...) and out(...)");
    for (const auto& s : detail::split(*ins, ','))
      if (!s.empty()) e.inputs.push_back(detail::parse_input_spec(s));
    e.output = detail::parse_output_spec(*outs);
    if (auto impl = field("impl="))
      e.impl = detail::builtin_impl(*impl, builtins);
    if (auto lz = field("lazy=")) {
      const ProhibitiveEntry* src = builtins.find(*lz);
      if (!src || !src->lazy) throw fail("unknown lazy builtin: " + *lz);
      e.lazy = src->lazy;
      if (auto trig = field("trigger=")) {
        LazyGenerator g = *e.lazy;
        g.trigger_inputs.clear();
        g.trigger_output = false;
        for (const auto& f : detail::split(*trig, ',')) {
          if (f == "out") g.trigger_output = true;
          else if (f.rfind("in", 0) == 0)
            g.trigger_inputs.push_back(std::stoul(f.substr(2)));
          else throw fail("bad trigger field: " + f);
        }
        e.lazy = std::move(g);
      }
    }
    if (auto as = field("assume=")) e.assume_template = *as;
    if (!e.impl) throw fail("entry needs impl=");
    base.add(std::move(e));
  }
  return base;
}

}  // namespace cbv
