#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cbverify/check.hpp"
#include "cbverify/parser.hpp"
#include "cbverify/registry.hpp"

using namespace cbv;

TEST_CASE("minimal program parses") {
  Program p = parse_program("fn client() { send(0x01u8); }");
  REQUIRE(p.functions.size() == 1);
  REQUIRE(p.functions[0].name == "client");
  REQUIRE(p.functions[0].body.size() == 1);
  REQUIRE(p.functions[0].body[0].k == Instr::K::Send);
}

static const char* kPaperClient = R"(
fn client() {
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

TEST_CASE("worked-example client keeps its control-flow skeleton") {
  Program p = parse_program(kPaperClient);
  REQUIRE(p.functions.size() == 1);
  const Block& body = p.functions[0].body;
  REQUIRE(body.size() == 5);
  const Instr& outer = body[4];
  REQUIRE(outer.k == Instr::K::If);
  REQUIRE(outer.then_block.size() == 1);
  const Instr& inner = outer.then_block[0];
  REQUIRE(inner.k == Instr::K::If);
  REQUIRE(inner.then_block.size() == 3);
  REQUIRE(inner.then_block[0].k == Instr::K::LetCall);
  REQUIRE(inner.then_block[0].callee == "PAPERCIPHER");
  REQUIRE(inner.then_block[2].k == Instr::K::Send);
  REQUIRE(inner.then_block[2].args.size() == 2);
  // program is well-formed against the builtin registry
  REQUIRE(check_program(p, builtin_suite()).empty());
}

TEST_CASE("malformed input reports position") {
  try {
    parse_program("fn client() { send(; }");
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& e) {
    REQUIRE(e.line == 1);
    REQUIRE(e.col == 20);
  }
}

TEST_CASE("pretty print round-trips") {
  const char* sources[] = {
      kPaperClient,
      "fn client() { send(0x01u8); }",
      R"(fn helper(k: u16, b: buf[4]) {
           let t = k + 0x1u16;
           return t;
         }
         fn client() {
           let data: buf[4];
           let j: u8 = 0u8;
           while j < 4u8 {
             data[j] = j ++ j;
             j = j + 1u8;
           }
           let r: u16 = helper(0x10u16, data);
           if r <= 0x11u16 { send(r); } else { send(data); }
           recv(data);
           let z = r[15:8];
           send(z ^ 0x5u8, ~z);
         })",
  };
  for (const char* src : sources) {
    Program p1 = parse_program(src);
    std::string printed = pretty_print(p1);
    Program p2 = parse_program(printed);
    REQUIRE(ast_equal(p1, p2));
    // printing is a fixpoint
    REQUIRE(pretty_print(p2) == printed);
  }
}

TEST_CASE("check_program diagnostics") {
  ProhibitiveRegistry reg = builtin_suite();

  SECTION("well-formed program has no diagnostics") {
    Program p = parse_program(kPaperClient);
    REQUIRE(check_program(p, reg).empty());
  }

  SECTION("unresolved call") {
    Program p = parse_program(
        "fn client() { let s = AES(0x1u16); send(s); }");
    auto ds = check_program(p, reg);
    REQUIRE(ds.size() == 1);
    REQUIRE(ds[0].code == "unresolved-call");
    REQUIRE(ds[0].message.find("AES") != std::string::npos);
  }

  SECTION("duplicate function") {
    Program p = parse_program(
        "fn client() { send(0x1u8); } fn client() { send(0x2u8); }");
    auto ds = check_program(p, reg);
    REQUIRE_FALSE(ds.empty());
    REQUIRE(ds[0].code == "duplicate-function");
    REQUIRE(ds[0].message.find("client") != std::string::npos);
  }

  SECTION("missing entry") {
    Program p = parse_program("fn main() { send(0x1u8); }");
    auto ds = check_program(p, reg);
    REQUIRE(ds.size() == 1);
    REQUIRE(ds[0].code == "entry-missing");
  }

  SECTION("recursion is rejected") {
    Program p = parse_program(
        "fn a() { b(); } fn b() { a(); } fn client() { a(); }");
    auto ds = check_program(p, reg);
    bool found = false;
    for (const auto& d : ds) found |= d.code == "recursion";
    REQUIRE(found);
  }

  SECTION("zero-size buffer") {
    Program p = parse_program("fn client() { let b: buf[0]; recv(b); }");
    auto ds = check_program(p, reg);
    REQUIRE_FALSE(ds.empty());
    REQUIRE(ds[0].code == "buffer-size");
  }

  SECTION("width mismatch") {
    Program p = parse_program(
        "fn client() { let a = 0x1u8; let b = 0x1u16; let c = a + b; send(c); }");
    auto ds = check_program(p, reg);
    REQUIRE_FALSE(ds.empty());
    REQUIRE(ds[0].code == "width-mismatch");
  }

  SECTION("recv needs a buffer") {
    Program p = parse_program("fn client() { let a = 0x1u8; recv(a); }");
    auto ds = check_program(p, reg);
    REQUIRE_FALSE(ds.empty());
    REQUIRE(ds[0].code == "recv-dest");
  }

  SECTION("deterministic and side-effect free") {
    Program p = parse_program(kPaperClient);
    auto d1 = check_program(p, reg);
    auto d2 = check_program(p, reg);
    REQUIRE(d1.size() == d2.size());
  }
}

TEST_CASE("registry file parsing") {
  std::string text =
      "# extra declarations\n"
      "prohibit MYCIPHER in(u16,buf) out(buf=in1) impl=TOYCBC lazy=TOYCBC "
      "trigger=in0,out assume=\"plaintext exists\"\n"
      "inject MYCIPHER from master\n";
  ProhibitiveRegistry reg = parse_registry_file(text, builtin_suite());
  const ProhibitiveEntry* e = reg.find("MYCIPHER");
  REQUIRE(e != nullptr);
  REQUIRE(e->inputs.size() == 2);
  REQUIRE(e->inputs[0].k == InputSpec::K::Scalar);
  REQUIRE(e->inputs[1].k == InputSpec::K::AnyBuf);
  REQUIRE(e->lazy.has_value());
  REQUIRE(e->lazy->trigger_inputs == std::vector<size_t>{0});
  REQUIRE(e->lazy->trigger_output);
  REQUIRE(e->assume_template == "plaintext exists");
  REQUIRE(reg.injection_for("MYCIPHER") != nullptr);
  REQUIRE(reg.injection_for("MYCIPHER")->metadata_key == "master");
  // output length follows the second input
  std::vector<size_t> lens{2, 10};
  REQUIRE(e->output.byte_len(lens) == 10);
}

TEST_CASE("toy primitives") {
  SECTION("PAPERCIPHER fixture value") {
    auto reg = builtin_suite();
    const ProhibitiveEntry* e = reg.find("PAPERCIPHER");
    REQUIRE(e != nullptr);
    Bytes out = e->impl({{0x12, 0x34}});
    REQUIRE(out == Bytes{0x23, 0x43});
  }
  SECTION("TOYDH identity exponent") {
    REQUIRE(toy::toydh(0) == 1);
    REQUIRE(toy::toydh(1) == 17);
  }
  SECTION("TOYBLOCK round-trips") {
    std::mt19937 rng(5);
    for (int i = 0; i < 1000; ++i) {
      uint16_t k = uint16_t(rng());
      uint16_t x = uint16_t(rng());
      REQUIRE(toy::toyblock_inv(k, toy::toyblock(k, x)) == x);
    }
  }
  SECTION("TOYCBC round-trips") {
    std::mt19937 rng(6);
    for (int i = 0; i < 200; ++i) {
      uint16_t k = uint16_t(rng());
      Bytes pt(16);
      for (auto& b : pt) b = uint8_t(rng());
      REQUIRE(toy::toycbc_inv(k, toy::toycbc(k, pt)) == pt);
    }
  }
}

TEST_CASE("whitelist parsing and matching") {
  Whitelist w = parse_whitelist("# comment\nallow TOYDH 1 exponent\n");
  REQUIRE(w.allows("TOYDH", 1));
  REQUIRE_FALSE(w.allows("TOYDH", 2));
  REQUIRE_FALSE(w.allows("TOYMAC", 2));
  Whitelist d = default_whitelist();
  REQUIRE(d.allows("TOYDH", 1));
}
