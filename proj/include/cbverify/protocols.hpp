#pragma once

// Bundled demo clients and fixtures: the multipass worked example, a toy
// handshake exercising key injection / skipped-call assumptions /
// skip-then-concretize, a heartbeat echo whose length field can be
// tampered, a two-message key exchange with a state-machine attack, a
// CBC-style client needing the lazy inverse generator, a padded-record
// stress client, and a bulk-transfer client for the size/cost check.
// Also the multi-version "union client" builder and attack-trace
// mutations.

#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbverify/concrete.hpp"
#include "cbverify/parser.hpp"
#include "cbverify/registry.hpp"
#include "cbverify/trace.hpp"

namespace cbv {

struct DemoParams {
  uint64_t seed = 1;
  uint32_t pad = 64;       // padded_records: max padding bytes
  uint32_t records = 20;   // padded_records: record count
  std::vector<size_t> bulk_wire_sizes = {16,  80,  144, 208, 272,  336,
                                         400, 464, 528, 592, 656,  720,
                                         784, 848, 912, 976, 1024};
};

struct Demo {
  std::string name;
  std::string source;
  Program program;
  ProhibitiveRegistry registry;
  GenInputs inputs;
  TimingProfile timing;
  std::string attack_kind;  // empty when no attack fixture applies
};

namespace demos {

inline const char* paper_example_source() {
  return R"(fn client() {
  let x = sym_input(16);
  let y = sym_input(16);
  let iv = sym_input(16);
  let p = x * y;
  if x % 2 == 1 {
    if y & 1 == 1 {
      let s = PAPERCIPHER(iv);
      let c = p ^ s;
      send(iv, c);
    }
  }
}
)";
}

inline const char* toy_handshake_source() {
  return R"(fn client() {
  let sb: buf[2];
  recv(sb);
  let a = sym_input(16);
  let apub = TOYDH(a);
  send(0x01u8, apub);
  let k = TOYKDF(a, sb);
  let pt = sym_input(16);
  let ks = TOYBLOCK(k, 0x0001u16);
  let c = pt ^ ks;
  let t = TOYMAC(k, pt);
  send(0x02u8, c, t);
}
)";
}

// Variant for the multi-version demo: the record nonce moves to 2.
inline const char* toy_handshake_v2_source() {
  return R"(fn client() {
  let sb: buf[2];
  recv(sb);
  let a = sym_input(16);
  let apub = TOYDH(a);
  send(0x01u8, apub);
  let k = TOYKDF(a, sb);
  let pt = sym_input(16);
  let ks = TOYBLOCK(k, 0x0002u16);
  let c = pt ^ ks;
  let t = TOYMAC(k, pt);
  send(0x02u8, c, t);
}
)";
}

inline const char* echo_heartbeat_source() {
  return R"(fn client() {
  send(0x05u8);
  let ack: buf[1];
  recv(ack);
  let len = sym_input(8);
  let hb: buf[32];
  let j = 0u8;
  while j < len {
    let b = sym_input(8);
    hb[j] = b;
    j = j + 1u8;
  }
  send(0x01u8, len, hb);
  let echo: buf[34];
  recv(echo);
  send(0x06u8);
}
)";
}

inline const char* keyex_statemachine_source() {
  return R"(fn client() {
  let hello: buf[2];
  recv(hello);
  send(0x0bu8, 0xc0u8, 0xdeu8);
  let ack: buf[1];
  recv(ack);
  let m = hello[1];
  if m & 1u8 == 1u8 {
    send(0x10u8, 0x00u8);
  } else {
    let e = sym_input(16);
    let kx = TOYDH(e);
    send(0x10u8, 0x02u8, kx);
  }
  send(0x14u8, 0xf1u8);
}
)";
}

inline const char* cbc_echo_source() {
  return R"(fn client() {
  let k = 0x1337u16;
  let p = sym_bytes(16);
  let c = TOYCBC(k, p);
  send(0x07u8, c);
  let s = 0u16;
  let j = 0u8;
  while j < 16u8 {
    s = s + (0u8 ++ p[j]);
    j = j + 1u8;
  }
  send(0x08u8, s);
}
)";
}

// Each record: 0xa5 header, then keystream-encrypted
// [len | sum | acc | data], padding hidden inside the fixed-size data
// pool. The data loop bound is symbolic, so the verifier must consider
// each candidate plaintext length; the whole-record mixing pass after
// the length choice gives every candidate its own straight-line work,
// like the per-candidate record processing of a real client.
inline std::string padded_records_source(uint32_t pad, uint32_t records) {
  uint32_t blocks = (pad + 4) / 2;  // keystream for len+sum+acc+data
  std::ostringstream os;
  os << "fn client() {\n";
  os << "  let ctr = 0u16;\n";
  os << "  let r = 0u16;\n";
  os << "  while r < " << records << "u16 {\n";
  for (uint32_t b = 0; b < blocks; ++b)
    os << "    let w" << b << " = TOYBLOCK(0x5eedu16, ctr + " << b
       << "u16);\n";
  os << "    let len = sym_input(8);\n";
  os << "    let data = sym_bytes(" << pad << ");\n";
  os << "    let sum = 0u8;\n";
  os << "    let j = 0u8;\n";
  os << "    while j < len {\n";
  os << "      sum = sum + data[j];\n";
  os << "      j = j + 1u8;\n";
  os << "    }\n";
  os << "    let acc = 0u8;\n";
  os << "    let k = 0u8;\n";
  os << "    while k < " << pad << "u8 {\n";
  os << "      acc = acc + (data[k] ^ sum);\n";
  os << "      k = k + 1u8;\n";
  os << "    }\n";
  os << "    send(0xa5u8, len ^ w0[15:8], sum ^ w0[7:0], acc ^ w1[15:8]";
  for (uint32_t i = 0; i < pad; ++i) {
    uint32_t byte_index = i + 3;  // after len, sum, acc
    uint32_t blk = byte_index / 2;
    bool high = byte_index % 2 == 0;
    os << ", data[" << i << "] ^ w" << blk << (high ? "[15:8]" : "[7:0]");
  }
  os << ");\n";
  os << "    ctr = ctr + " << blocks << "u16;\n";
  os << "    r = r + 1u16;\n";
  os << "  }\n";
  os << "}\n";
  return os.str();
}

// Unrolled records of increasing size; cost of verifying each record is
// dominated by the per-byte checksum loop, so it scales with the wire
// size.
inline std::string bulk_transfer_source(const std::vector<size_t>& wire_sizes) {
  std::ostringstream os;
  os << "fn client() {\n";
  for (size_t r = 0; r < wire_sizes.size(); ++r) {
    size_t payload = wire_sizes[r] - 2;
    os << "  let d" << r << " = sym_bytes(" << payload << ");\n";
    os << "  let s" << r << " = 0u16;\n";
    os << "  let j" << r << " = 0u16;\n";
    os << "  while j" << r << " < " << payload << "u16 {\n";
    os << "    s" << r << " = s" << r << " + (0u8 ++ d" << r << "[j" << r
       << "]);\n";
    os << "    j" << r << " = j" << r << " + 1u16;\n";
    os << "  }\n";
    os << "  send(s" << r << ", d" << r << ");\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace demos

inline std::vector<std::string> demo_names() {
  return {"paper_example",     "toy_handshake", "toy_handshake_v2",
          "echo_heartbeat",    "keyex_statemachine", "cbc_echo",
          "padded_records",    "bulk_transfer"};
}

inline Demo make_demo(const std::string& name, const DemoParams& params = {}) {
  std::mt19937_64 rng(params.seed);
  Demo d;
  d.name = name;
  d.registry = builtin_suite();
  d.timing.k = TimingProfile::K::Uniform;
  d.timing.gap_ms = 10;

  auto next_byte = [&rng]() { return uint8_t(rng()); };
  auto next_u16 = [&rng]() { return uint16_t(rng()); };

  if (name == "paper_example") {
    d.source = demos::paper_example_source();
    d.program = parse_program(d.source);
    // the worked example's satisfying inputs
    d.inputs.model.set(SymId{0, 0}, 0x9);     // x
    d.inputs.model.set(SymId{1, 0}, 0x1537);  // y
    d.inputs.model.set(SymId{2, 0}, 0x1234);  // iv
    return d;
  }
  if (name == "toy_handshake" || name == "toy_handshake_v2") {
    d.source = name == "toy_handshake" ? demos::toy_handshake_source()
                                       : demos::toy_handshake_v2_source();
    d.program = parse_program(d.source);
    d.registry.inject("TOYKDF", "master");
    uint16_t server_exp = uint16_t(next_u16() % 60000 + 2);
    uint16_t server_pub = toy::toydh(server_exp);
    d.inputs.server.push_back(ServerAction::fixed(
        {uint8_t(server_pub >> 8), uint8_t(server_pub)}));
    d.inputs.model.set(SymId{0, 0}, next_u16());  // a (events: recv has none)
    d.inputs.model.set(SymId{3, 0}, next_u16());  // pt
    return d;
  }
  if (name == "echo_heartbeat") {
    d.source = demos::echo_heartbeat_source();
    d.program = parse_program(d.source);
    d.attack_kind = "heartbleed";
    d.inputs.server.push_back(ServerAction::fixed({0x00}));  // ack
    d.inputs.server.push_back(ServerAction::echo_last());    // echo
    uint8_t len = uint8_t(1 + rng() % 24);
    d.inputs.model.set(SymId{0, 0}, len);
    // one event per loop iteration for the payload bytes
    for (uint8_t j = 0; j < len; ++j)
      d.inputs.model.set(SymId{uint32_t(1 + j), 0}, next_byte());
    return d;
  }
  if (name == "keyex_statemachine") {
    d.source = demos::keyex_statemachine_source();
    d.program = parse_program(d.source);
    d.attack_kind = "statemachine";
    d.inputs.server.push_back(ServerAction::fixed({0x03, 0x01}));  // DH-cert suite
    d.inputs.server.push_back(ServerAction::fixed({0x00}));        // ack
    return d;
  }
  if (name == "cbc_echo") {
    d.source = demos::cbc_echo_source();
    d.program = parse_program(d.source);
    for (uint16_t j = 0; j < 16; ++j)
      d.inputs.model.set(SymId{0, j}, next_byte());  // p = sym_bytes(16)
    return d;
  }
  if (name == "padded_records") {
    d.source = demos::padded_records_source(params.pad, params.records);
    d.program = parse_program(d.source);
    d.timing.gap_ms = 5;
    uint32_t blocks = (params.pad + 4) / 2;
    uint32_t ev = 0;
    for (uint32_t r = 0; r < params.records; ++r) {
      ev += blocks;  // keystream calls
      uint8_t len = uint8_t(params.pad - rng() % 9);  // EXPERIMENT
      d.inputs.model.set(SymId{ev++, 0}, len);
      for (uint32_t j = 0; j < params.pad; ++j)
        d.inputs.model.set(SymId{ev, uint16_t(j)}, next_byte());
      ev++;
    }
    return d;
  }
  if (name == "bulk_transfer") {
    d.source = demos::bulk_transfer_source(params.bulk_wire_sizes);
    d.program = parse_program(d.source);
    d.timing.k = TimingProfile::K::Burst;
    d.timing.burst_size = 4;
    d.timing.burst_gap_ms = 100;
    uint32_t ev = 0;
    for (size_t r = 0; r < params.bulk_wire_sizes.size(); ++r) {
      size_t payload = params.bulk_wire_sizes[r] - 2;
      for (size_t j = 0; j < payload; ++j)
        d.inputs.model.set(SymId{ev, uint16_t(j)}, next_byte());
      ev++;
    }
    return d;
  }
  throw std::invalid_argument("unknown demo '" + name + "'");
}

inline MessageTrace demo_benign_trace(const Demo& d) {
  return generate_trace(d.program, d.registry, d.inputs, d.timing);
}

// ---------------------------------------------------------------------
// Attack fixtures: byte-level mutations of benign traces, never
// re-executions.

inline MessageTrace make_attack_trace(const std::string& kind,
                                      const MessageTrace& benign) {
  MessageTrace t = benign;
  if (kind == "heartbleed") {
    // the heartbeat's length field claims more bytes than the payload
    // carries
    for (auto& m : t.messages) {
      if (m.dir == Dir::C2S && !m.payload.empty() && m.payload[0] == 0x01 &&
          m.payload.size() > 2) {
        m.payload[1] = 0xFF;
        return t;
      }
    }
    throw std::invalid_argument("no heartbeat message in trace");
  }
  if (kind == "statemachine") {
    // a ClientKeyExchange carrying a parameter where a compliant client
    // sends an empty one
    for (auto& m : t.messages) {
      if (m.dir == Dir::C2S && m.payload.size() == 2 && m.payload[0] == 0x10 &&
          m.payload[1] == 0x00) {
        m.payload = {0x10, 0x02, 0xAB, 0xCD};
        return t;
      }
    }
    throw std::invalid_argument("no empty key-exchange message in trace");
  }
  throw std::invalid_argument("unknown attack kind '" + kind + "'");
}

// Insert server-to-client noise the client never consumes (application
// data for the drop-s2c check).
inline MessageTrace insert_s2c_noise(const MessageTrace& trace,
                                     size_t every_n, uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  MessageTrace t;
  t.metadata = trace.metadata;
  size_t count = 0;
  for (const auto& m : trace.messages) {
    t.messages.push_back(m);
    if (++count % every_n == 0) {
      Message noise;
      noise.dir = Dir::S2C;
      noise.arrival_ms = m.arrival_ms;
      noise.payload.resize(8);
      for (auto& b : noise.payload) b = uint8_t(rng());
      t.messages.push_back(std::move(noise));
    }
  }
  return t;
}

// ---------------------------------------------------------------------
// Multi-version union client: differing statement runs are wrapped in a
// branch on a symbolic version variable, so one verifier covers several
// client versions at once while accepting only pure single-version
// behavior.

struct DiffTooLargeError : std::runtime_error {
  explicit DiffTooLargeError(size_t regions)
      : std::runtime_error("structural diff has " + std::to_string(regions) +
                           " regions") {}
};

struct UnionOptions {
  std::string version_var = "ver";
  uint64_t version_a = 1;
  uint64_t version_b = 2;
  size_t max_regions = 16;
};

namespace uniondetail {

inline std::unique_ptr<AExpr> version_cond(const UnionOptions& opt) {
  auto var = std::make_unique<AExpr>();
  var->k = AExpr::K::Var;
  var->name = opt.version_var;
  auto lit = std::make_unique<AExpr>();
  lit->k = AExpr::K::Lit;
  lit->lit = opt.version_a;
  lit->lit_width = 8;
  auto cmp = std::make_unique<AExpr>();
  cmp->k = AExpr::K::Binary;
  cmp->op = BinOp::Eq;
  cmp->a = std::move(var);
  cmp->b = std::move(lit);
  return cmp;
}

// Statement-list alignment by longest common subsequence.
inline Block merge_blocks(const Block& a, const Block& b,
                          const UnionOptions& opt, size_t& regions) {
  const size_t n = a.size(), m = b.size();
  std::vector<std::vector<uint32_t>> lcs(n + 1,
                                         std::vector<uint32_t>(m + 1, 0));
  for (size_t i = n; i-- > 0;)
    for (size_t j = m; j-- > 0;)
      lcs[i][j] = ast_equal(a[i], b[j])
                      ? lcs[i + 1][j + 1] + 1
                      : std::max(lcs[i + 1][j], lcs[i][j + 1]);
  Block out;
  size_t i = 0, j = 0;
  auto flush_region = [&](size_t ai, size_t aj, size_t bi, size_t bj) {
    // differing run a[ai..aj) vs b[bi..bj)
    if (ai == aj && bi == bj) return;
    ++regions;
    Instr br;
    br.k = Instr::K::If;
    br.expr = version_cond(opt);
    for (size_t k = ai; k < aj; ++k) br.then_block.push_back(a[k].clone());
    for (size_t k = bi; k < bj; ++k) br.else_block.push_back(b[k].clone());
    out.push_back(std::move(br));
  };
  while (i < n && j < m) {
    if (ast_equal(a[i], b[j])) {
      out.push_back(a[i].clone());
      ++i;
      ++j;
      continue;
    }
    size_t ai = i, bj = j;
    while (i < n || j < m) {
      if (i < n && lcs[i][j] == lcs[i + 1][j]) {
        ++i;
        continue;
      }
      if (j < m && lcs[i][j] == lcs[i][j + 1]) {
        ++j;
        continue;
      }
      break;
    }
    flush_region(ai, i, bj, j);
  }
  flush_region(i, n, j, m);
  return out;
}

}  // namespace uniondetail

inline Program build_union_client(const Program& a, const Program& b,
                                  const UnionOptions& opt = {}) {
  if (a.entry != b.entry)
    throw std::invalid_argument("programs have different entry functions");
  if (ast_equal(a, b)) return a.clone();  // identity diff: no branches

  Program u;
  u.entry = a.entry;
  size_t regions = 0;
  for (const auto& fa : a.functions) {
    const FunctionDef* fb = b.find(fa.name);
    FunctionDef fu;
    fu.name = fa.name;
    fu.params = fa.params;
    if (!fb) {
      ++regions;
      fu = fa.clone();
    } else if (fa.params != fb->params) {
      throw std::invalid_argument("function '" + fa.name +
                                  "' differs in signature");
    } else {
      fu.body = uniondetail::merge_blocks(fa.body, fb->body, opt, regions);
    }
    u.functions.push_back(std::move(fu));
  }
  for (const auto& fb : b.functions)
    if (!a.find(fb.name)) {
      ++regions;
      u.functions.push_back(fb.clone());
    }
  if (regions > opt.max_regions) throw DiffTooLargeError(regions);

  if (regions > 0) {
    // the version is a client-side unknown restricted to the two merged
    // versions, so an accepting path pins it to a single value
    FunctionDef* entry = nullptr;
    for (auto& f : u.functions)
      if (f.name == u.entry) entry = &f;
    Instr decl;
    decl.k = Instr::K::LetCall;
    decl.name = opt.version_var;
    decl.callee = "sym_input";
    auto w = std::make_unique<AExpr>();
    w->k = AExpr::K::Lit;
    w->lit = 8;
    decl.args.push_back(std::move(w));

    auto ver_eq = [&](uint64_t value) {
      auto var = std::make_unique<AExpr>();
      var->k = AExpr::K::Var;
      var->name = opt.version_var;
      auto lit = std::make_unique<AExpr>();
      lit->k = AExpr::K::Lit;
      lit->lit = value;
      lit->lit_width = 8;
      auto cmp = std::make_unique<AExpr>();
      cmp->k = AExpr::K::Binary;
      cmp->op = BinOp::Eq;
      cmp->a = std::move(var);
      cmp->b = std::move(lit);
      return cmp;
    };
    Instr guard;
    guard.k = Instr::K::If;
    auto domain = std::make_unique<AExpr>();
    domain->k = AExpr::K::Binary;
    domain->op = BinOp::Or;
    domain->a = ver_eq(opt.version_a);
    domain->b = ver_eq(opt.version_b);
    guard.expr = std::move(domain);
    Instr bail;
    bail.k = Instr::K::Return;
    guard.else_block.push_back(std::move(bail));

    entry->body.insert(entry->body.begin(), std::move(guard));
    entry->body.insert(entry->body.begin(), std::move(decl));
  }
  lang::Parser::number_instructions(u);
  names::resolve(u);
  return u;
}

}  // namespace cbv
