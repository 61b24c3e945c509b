#include <catch2/catch_amalgamated.hpp>

#include "cbverify/check.hpp"
#include "cbverify/engine.hpp"
#include "cbverify/protocols.hpp"

using namespace cbv;

namespace {
EngineConfig quick(unsigned workers = 1) {
  EngineConfig cfg;
  cfg.workers = workers;
  cfg.collect_log = false;
  return cfg;
}
}  // namespace

TEST_CASE("every bundled demo passes check_program") {
  DemoParams params;
  params.pad = 8;
  params.records = 2;
  params.bulk_wire_sizes = {16, 32};
  for (const auto& name : demo_names()) {
    Demo d = make_demo(name, params);
    auto diags = check_program(d.program, d.registry);
    INFO(name);
    REQUIRE(diags.empty());
  }
}

TEST_CASE("demo sources survive the pretty-print round trip") {
  DemoParams params;
  params.pad = 8;
  params.records = 2;
  params.bulk_wire_sizes = {16, 32};
  for (const auto& name : demo_names()) {
    Demo d = make_demo(name, params);
    Program again = parse_program(pretty_print(d.program));
    REQUIRE(ast_equal(d.program, again));
  }
}

TEST_CASE("paper_example fixture reproduces the observed message") {
  Demo d = make_demo("paper_example");
  MessageTrace t = demo_benign_trace(d);
  REQUIRE(t.messages.size() == 1);
  REQUIRE(t.messages[0].dir == Dir::C2S);
  REQUIRE(t.messages[0].payload == Bytes{0x12, 0x34, 0x9D, 0xAC});

  SessionVerdict v = verify_session(d.program, t, d.registry, quick());
  REQUIRE(v.valid);
}

TEST_CASE("toy handshake: valid, exactly one whitelisted assumption") {
  Demo d = make_demo("toy_handshake", DemoParams{.seed = 7});
  MessageTrace t = demo_benign_trace(d);
  REQUIRE(t.messages.size() == 3);
  REQUIRE(t.metadata_value("master").has_value());

  SessionVerdict v = verify_session(d.program, t, d.registry, quick());
  REQUIRE(v.valid);
  REQUIRE(v.assumptions.size() == 1);
  REQUIRE(v.assumptions[0].function == "TOYDH");
  REQUIRE(v.whitelist_violations.empty());

  SECTION("removing the whitelist entry flips the verdict") {
    EngineConfig cfg = quick();
    cfg.whitelist.entries.clear();
    for (const auto& e : default_whitelist().entries)
      if (e.function != "TOYDH") cfg.whitelist.entries.push_back(e);
    SessionVerdict v2 = verify_session(d.program, t, d.registry, cfg);
    REQUIRE_FALSE(v2.valid);
    REQUIRE(v2.reason == SessionVerdict::Reason::Whitelist);
    REQUIRE(v2.whitelist_violations.size() == 1);
  }

  SECTION("injected key behaves like a hardcoded key") {
    // replace the key derivation with the logged value as a literal
    auto master = *t.metadata_value("master");
    uint16_t key = uint16_t(master[0]) << 8 | master[1];
    char buf[8];
    std::snprintf(buf, sizeof buf, "0x%04x", key);
    std::string src = d.source;
    size_t pos = src.find("let k = TOYKDF(a, sb);");
    REQUIRE(pos != std::string::npos);
    src.replace(pos, std::string("let k = TOYKDF(a, sb);").size(),
                "let k = " + std::string(buf) + "u16;");
    Program hard = parse_program(src);
    SessionVerdict v3 = verify_session(hard, t, builtin_suite(), quick());
    REQUIRE(v3.valid == true);
    REQUIRE(v3.assumptions.size() == 1);  // TOYDH remains the only one
  }
}

TEST_CASE("heartbeat echo: benign accepted, tampered length rejected") {
  Demo d = make_demo("echo_heartbeat", DemoParams{.seed = 3});
  MessageTrace benign = demo_benign_trace(d);
  REQUIRE(benign.messages.size() == 5);

  SessionVerdict v = verify_session(d.program, benign, d.registry, quick());
  REQUIRE(v.valid);

  MessageTrace attack = make_attack_trace("heartbleed", benign);
  // the tampered trace differs in exactly the length byte
  size_t diffs = 0;
  for (size_t i = 0; i < benign.messages.size(); ++i) {
    const Bytes& a = benign.messages[i].payload;
    const Bytes& b = attack.messages[i].payload;
    REQUIRE(a.size() == b.size());
    for (size_t j = 0; j < a.size(); ++j)
      if (a[j] != b[j]) {
        ++diffs;
        REQUIRE(i == 2);
        REQUIRE(j == 1);
      }
  }
  REQUIRE(diffs == 1);

  SessionVerdict va = verify_session(d.program, attack, d.registry, quick());
  REQUIRE_FALSE(va.valid);
  REQUIRE(va.invalid_index == 2);
}

TEST_CASE("key-exchange state machine: premature parameter rejected") {
  Demo d = make_demo("keyex_statemachine");
  MessageTrace benign = demo_benign_trace(d);
  REQUIRE(benign.messages.size() == 5);
  REQUIRE(benign.messages[3].payload == Bytes{0x10, 0x00});

  SessionVerdict v = verify_session(d.program, benign, d.registry, quick());
  REQUIRE(v.valid);

  MessageTrace attack = make_attack_trace("statemachine", benign);
  REQUIRE(attack.messages[3].payload.size() == 4);
  SessionVerdict va = verify_session(d.program, attack, d.registry, quick());
  REQUIRE_FALSE(va.valid);
  REQUIRE(va.invalid_index == 3);
}

TEST_CASE("unsupported attack kind is rejected") {
  Demo d = make_demo("keyex_statemachine");
  MessageTrace benign = demo_benign_trace(d);
  REQUIRE_THROWS_AS(make_attack_trace("nonsense", benign),
                    std::invalid_argument);
}

TEST_CASE("cbc echo: plaintext recovered only via the inverse generator") {
  Demo d = make_demo("cbc_echo", DemoParams{.seed = 11});
  MessageTrace t = demo_benign_trace(d);
  REQUIRE(t.messages.size() == 2);

  SessionVerdict v = verify_session(d.program, t, d.registry, quick());
  REQUIRE(v.valid);
  REQUIRE(v.assumptions.empty());  // the cipher ran concretely in the end

  SECTION("without the generator the session is unresolved within budget") {
    ProhibitiveRegistry stripped = builtin_suite();
    ProhibitiveEntry e = *stripped.find("TOYCBC");
    e.lazy.reset();
    stripped.add(std::move(e));
    SessionVerdict v2 = verify_session(d.program, t, stripped, quick());
    REQUIRE_FALSE(v2.valid);
    REQUIRE(v2.reason == SessionVerdict::Reason::Budget);
    REQUIRE(v2.invalid_index == 1);  // first message still verifies
    REQUIRE(v2.messages[0].valid);
  }
}

TEST_CASE("padded records explore multiple candidate lengths") {
  DemoParams params;
  params.seed = 5;
  params.pad = 8;
  params.records = 3;
  Demo d = make_demo("padded_records", params);
  MessageTrace t = demo_benign_trace(d);
  REQUIRE(t.messages.size() == 3);
  for (const auto& m : t.messages)
    REQUIRE(m.payload.size() == params.pad + 4);

  SessionVerdict v = verify_session(d.program, t, d.registry, quick());
  REQUIRE(v.valid);
  // the candidate-length fan-out creates several live nodes per record
  REQUIRE(v.messages[0].nodes_created >= 2);

  SECTION("verdict is worker-count independent") {
    SessionVerdict v8 = verify_session(d.program, t, d.registry, quick(8));
    REQUIRE(v8.valid == v.valid);
  }
}

TEST_CASE("bulk transfer verifies and s2c noise needs the drop flag") {
  DemoParams params;
  params.seed = 9;
  params.bulk_wire_sizes = {16, 48, 96};
  Demo d = make_demo("bulk_transfer", params);
  MessageTrace t = demo_benign_trace(d);
  REQUIRE(t.messages.size() == 3);

  SessionVerdict v = verify_session(d.program, t, d.registry, quick());
  REQUIRE(v.valid);

  MessageTrace noisy = insert_s2c_noise(t, 2);
  SessionVerdict strict = verify_session(d.program, noisy, d.registry, quick());
  REQUIRE_FALSE(strict.valid);

  EngineConfig drop = quick();
  drop.drop_s2c_appdata = true;
  SessionVerdict relaxed = verify_session(d.program, noisy, d.registry, drop);
  REQUIRE(relaxed.valid);
}

TEST_CASE("union client builder") {
  SECTION("identity diff returns the program unchanged") {
    Demo d = make_demo("toy_handshake");
    Program u = build_union_client(d.program, d.program);
    REQUIRE(ast_equal(u, d.program));
  }

  SECTION("one differing statement yields one version branch") {
    Demo a = make_demo("toy_handshake");
    Demo b = make_demo("toy_handshake_v2");
    Program u = build_union_client(a.program, b.program);
    // prepended version input plus exactly one if on the version variable
    const Block& body = u.functions[0].body;
    REQUIRE(body[0].k == Instr::K::LetCall);
    REQUIRE(body[0].callee == "sym_input");
    size_t branches = 0;
    for (const auto& i : body)
      if (i.k == Instr::K::If && i.expr->k == AExpr::K::Binary &&
          i.expr->a->k == AExpr::K::Var && i.expr->a->name == "ver")
        ++branches;
    REQUIRE(branches == 1);
    REQUIRE(check_program(u, a.registry).empty());
  }

  SECTION("diff larger than the limit is rejected") {
    Program a = parse_program(
        "fn client() { send(0x1u8); send(0x2u8); send(0x3u8); }");
    Program b = parse_program(
        "fn client() { send(0x4u8); send(0x5u8); send(0x6u8); }");
    UnionOptions opt;
    opt.max_regions = 0;
    REQUIRE_THROWS_AS(build_union_client(a, b, opt), DiffTooLargeError);
  }
}

TEST_CASE("union client verifies both variants and pins the version") {
  Demo a = make_demo("toy_handshake", DemoParams{.seed = 21});
  Demo b = make_demo("toy_handshake_v2", DemoParams{.seed = 21});
  Program u = build_union_client(a.program, b.program);

  MessageTrace ta = demo_benign_trace(a);
  MessageTrace tb = demo_benign_trace(b);

  ProhibitiveRegistry reg = builtin_suite();
  reg.inject("TOYKDF", "master");

  SessionVerdict va = verify_session(u, ta, reg, quick());
  REQUIRE(va.valid);
  // the version variable is event 0 of the union program
  auto st = concretize(va.final_node->state.cons, {SymId{0, 0}});
  REQUIRE(st.at(SymId{0, 0}.key()).has_value());
  REQUIRE(*st.at(SymId{0, 0}.key()) == 1);

  SessionVerdict vb = verify_session(u, tb, reg, quick());
  REQUIRE(vb.valid);
  auto st2 = concretize(vb.final_node->state.cons, {SymId{0, 0}});
  REQUIRE(st2.at(SymId{0, 0}.key()).has_value());
  REQUIRE(*st2.at(SymId{0, 0}.key()) == 2);
}
