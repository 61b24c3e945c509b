#include <catch2/catch_amalgamated.hpp>

#include "cbverify/concrete.hpp"
#include "cbverify/parser.hpp"
#include "cbverify/vm.hpp"

using namespace cbv;

namespace {

const char* kPaperClient = R"(
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

Classified advance_to_stop(ExecState& s, const ProhibitiveRegistry& reg,
                           const VmLimits& limits) {
  for (;;) {
    Classified c = classify(s, reg);
    if (c.k != InstrClass::Normal) return c;
    exec_step(s, reg, limits);
  }
}

Expr frame_scalar(const ExecState& s, const std::string& name) {
  const Value* v = vmdetail::find_var(s.frames.back(), name);
  REQUIRE(v != nullptr);
  return std::get<Expr>(*v);
}

}  // namespace

TEST_CASE("classification of branch, send and prohibitive call") {
  ProhibitiveRegistry reg = builtin_suite();
  VmLimits limits;
  Program p = parse_program(kPaperClient);
  ExecState s = initial_state(p);

  Classified c = advance_to_stop(s, reg, limits);
  REQUIRE(c.k == InstrClass::SymbolicBranch);  // if x % 2 == 1

  ForkResult fr = fork_branch(s, reg, limits);
  REQUIRE(fr.on_true.has_value());
  REQUIRE(fr.on_false.has_value());

  ExecState t = std::move(*fr.on_true);
  c = advance_to_stop(t, reg, limits);
  REQUIRE(c.k == InstrClass::SymbolicBranch);  // if y & 1 == 1
  fr = fork_branch(t, reg, limits);
  REQUIRE(fr.on_true.has_value());
  t = std::move(*fr.on_true);

  c = advance_to_stop(t, reg, limits);
  REQUIRE(c.k == InstrClass::ProhibitiveCall);
  REQUIRE(c.instr->callee == "PAPERCIPHER");

  RegistryRuntime rt;
  rt.defs = &reg;
  ConstraintSet saved;
  ProhibStepInfo info = exec_step_prohibitive(t, saved, rt, limits);
  REQUIRE(info.outcome == ProhibStepInfo::Outcome::Skipped);
  REQUIRE(t.skipped.size() == 1);

  c = advance_to_stop(t, reg, limits);
  REQUIRE(c.k == InstrClass::NetSend);
}

TEST_CASE("exec_step binds expressions") {
  ProhibitiveRegistry reg = builtin_suite();
  VmLimits limits;
  Program p = parse_program(R"(
    fn client() {
      let x = sym_input(16);
      let y = sym_input(16);
      let p = x * y;
      let a = 2 + 3;
      send(a);
    }
  )");
  ExecState s = initial_state(p);
  advance_to_stop(s, reg, limits);

  Expr pv = frame_scalar(s, "p");
  REQUIRE(pv->kind == ExprKind::Binary);
  REQUIRE(pv->bop == BinOp::Mul);
  Expr av = frame_scalar(s, "a");
  REQUIRE(av == mk_concrete(32, 5));
}

TEST_CASE("step budget kills runaway loops") {
  ProhibitiveRegistry reg = builtin_suite();
  VmLimits limits;
  limits.step_budget = 1000;
  Program p = parse_program(R"(
    fn client() {
      let i = 0u32;
      while i <= 1u32 { i = 0u32; }
      send(i);
    }
  )");
  ExecState s = initial_state(p);
  bool hit = false;
  try {
    advance_to_stop(s, reg, limits);
  } catch (const ExecError& e) {
    hit = e.kind == ExecError::Kind::StepBudgetExceeded;
  }
  REQUIRE(hit);
}

TEST_CASE("fork on a contradictory condition leaves one side") {
  ProhibitiveRegistry reg = builtin_suite();
  VmLimits limits;
  Program p = parse_program(R"(
    fn client() {
      let x = sym_input(16);
      if x < x { send(0x1u8); } else { send(0x2u8); }
    }
  )");
  ExecState s = initial_state(p);
  Classified c = advance_to_stop(s, reg, limits);
  // x < x simplifies to false: the branch is concrete, not symbolic
  REQUIRE(c.k == InstrClass::NetSend);
  std::vector<Expr> bytes = send_wire_bytes(s, nullptr);
  REQUIRE(bytes.size() == 1);
  REQUIRE(bytes[0] == mk_concrete(8, 2));
}

TEST_CASE("fork where constraints already decide the condition") {
  ProhibitiveRegistry reg = builtin_suite();
  VmLimits limits;
  Program p = parse_program(R"(
    fn client() {
      let x = sym_input(16);
      if x < 0x10u16 {
        if x < 0x20u16 { send(0x1u8); }
      }
    }
  )");
  ExecState s = initial_state(p);
  Classified c = advance_to_stop(s, reg, limits);
  REQUIRE(c.k == InstrClass::SymbolicBranch);
  ForkResult fr = fork_branch(s, reg, limits);
  REQUIRE(fr.on_true.has_value());
  ExecState t = std::move(*fr.on_true);
  c = advance_to_stop(t, reg, limits);
  REQUIRE(c.k == InstrClass::SymbolicBranch);  // x < 0x20 still has symbols
  ForkResult fr2 = fork_branch(t, reg, limits);
  // x < 0x10 implies x < 0x20: the false side is infeasible
  REQUIRE(fr2.on_true.has_value());
  REQUIRE_FALSE(fr2.on_false.has_value());
}

TEST_CASE("reconcile_send against the observed message") {
  ProhibitiveRegistry reg = builtin_suite();
  VmLimits limits;
  Program p = parse_program(R"(
    fn client() {
      let iv = sym_input(16);
      let c = sym_input(16);
      send(iv, c);
    }
  )");
  ExecState s = initial_state(p);
  advance_to_stop(s, reg, limits);

  SECTION("matching payload forces the symbols") {
    Message m{Dir::C2S, 0, {0x12, 0x34, 0x9D, 0xAC}};
    ReconcileResult r = reconcile_send(s, m, limits);
    REQUIRE(std::holds_alternative<ConstraintSet>(r));
    const ConstraintSet& cs = std::get<ConstraintSet>(r);
    auto st = concretize(cs, {SymId{0, 0}, SymId{1, 0}});
    REQUIRE(*st.at(SymId{0, 0}.key()) == 0x1234);
    REQUIRE(*st.at(SymId{1, 0}.key()) == 0x9DAC);
  }
  SECTION("length mismatch is a contradiction") {
    Message m{Dir::C2S, 0, {0x12, 0x34, 0x9D}};
    ReconcileResult r = reconcile_send(s, m, limits);
    REQUIRE(std::holds_alternative<Contradiction>(r));
    REQUIRE(std::get<Contradiction>(r).reason == Contradiction::Reason::Length);
  }
  SECTION("direction mismatch is a contradiction") {
    Message m{Dir::S2C, 0, {0x12, 0x34, 0x9D, 0xAC}};
    ReconcileResult r = reconcile_send(s, m, limits);
    REQUIRE(std::holds_alternative<Contradiction>(r));
    REQUIRE(std::get<Contradiction>(r).reason ==
            Contradiction::Reason::Direction);
  }
}

TEST_CASE("concrete send bytes cannot contradict the message") {
  ProhibitiveRegistry reg = builtin_suite();
  VmLimits limits;
  Program p = parse_program("fn client() { send(0x01u8); }");
  ExecState s = initial_state(p);
  advance_to_stop(s, reg, limits);
  Message m{Dir::C2S, 0, {0x02}};
  ReconcileResult r = reconcile_send(s, m, limits);
  REQUIRE(std::holds_alternative<Contradiction>(r));
}

TEST_CASE("apply_recv binds buffers and checks direction") {
  ProhibitiveRegistry reg = builtin_suite();
  VmLimits limits;
  Program p = parse_program(R"(
    fn client() {
      let b: buf[4];
      recv(b);
      send(b);
    }
  )");
  ExecState s = initial_state(p);
  Classified c = advance_to_stop(s, reg, limits);
  REQUIRE(c.k == InstrClass::NetRecv);

  SECTION("exact-size bind") {
    Message m{Dir::S2C, 0, {1, 2, 3, 4}};
    REQUIRE_FALSE(apply_recv(s, m, limits).has_value());
    REQUIRE(s.io_index == 1);
    c = advance_to_stop(s, reg, limits);
    REQUIRE(c.k == InstrClass::NetSend);
    auto bytes = send_wire_bytes(s, nullptr);
    REQUIRE(bytes.size() == 4);
    REQUIRE(bytes[3] == mk_concrete(8, 4));
  }
  SECTION("overflowing message is a contradiction") {
    Message m{Dir::S2C, 0, {1, 2, 3, 4, 5}};
    auto contra = apply_recv(s, m, limits);
    REQUIRE(contra.has_value());
    REQUIRE(contra->reason == Contradiction::Reason::Length);
  }
  SECTION("C2S message cannot be received") {
    Message m{Dir::C2S, 0, {1, 2, 3, 4}};
    auto contra = apply_recv(s, m, limits);
    REQUIRE(contra.has_value());
    REQUIRE(contra->reason == Contradiction::Reason::Direction);
  }
}

TEST_CASE("prohibitive call executes concretely when saved forces inputs") {
  ProhibitiveRegistry reg = builtin_suite();
  VmLimits limits;
  Program p = parse_program(R"(
    fn client() {
      let iv = sym_input(16);
      let s = PAPERCIPHER(iv);
      send(s);
    }
  )");
  RegistryRuntime rt;
  rt.defs = &reg;

  ExecState s = initial_state(p);
  Classified c = advance_to_stop(s, reg, limits);
  REQUIRE(c.k == InstrClass::ProhibitiveCall);

  SECTION("free input skips with a fresh symbol") {
    ConstraintSet saved;
    auto info = exec_step_prohibitive(s, saved, rt, limits);
    REQUIRE(info.outcome == ProhibStepInfo::Outcome::Skipped);
    Expr sv = frame_scalar(s, "s");
    REQUIRE(sv->has_syms);
    REQUIRE(s.skipped.size() == 1);
    REQUIRE(s.skipped[0].entry->name == "PAPERCIPHER");
  }
  SECTION("saved constraints make it run on the fixture value") {
    ConstraintSet saved;
    saved = saved.append(mk_binary(BinOp::Eq, frame_scalar(s, "iv"),
                                   mk_concrete(16, 0x1234)));
    auto info = exec_step_prohibitive(s, saved, rt, limits);
    REQUIRE(info.outcome == ProhibStepInfo::Outcome::ExecutedConcretely);
    REQUIRE(info.concrete_output == Bytes{0x23, 0x43});
    Expr sv = frame_scalar(s, "s");
    REQUIRE(sv == mk_concrete(16, 0x2343));
    // the justifying input equality lands in cons
    auto st = concretize(s.cons, {SymId{0, 0}});
    REQUIRE(*st.at(SymId{0, 0}.key()) == 0x1234);
  }
}

TEST_CASE("injection replaces the output regardless of input symbolism") {
  ProhibitiveRegistry reg = builtin_suite();
  reg.inject("TOYKDF", "master");
  VmLimits limits;
  Program p = parse_program(R"(
    fn client() {
      let a = sym_input(16);
      let b: buf[2];
      recv(b);
      let k = TOYKDF(a, b);
      send(k);
    }
  )");
  RegistryRuntime rt;
  rt.defs = &reg;
  rt.injected["master"] = {0xCA, 0xFE};

  ExecState s = initial_state(p);
  Classified c = advance_to_stop(s, reg, limits);
  REQUIRE(c.k == InstrClass::NetRecv);
  Message m{Dir::S2C, 0, {0x00, 0x11}};
  REQUIRE_FALSE(apply_recv(s, m, limits).has_value());
  c = advance_to_stop(s, reg, limits);
  REQUIRE(c.k == InstrClass::ProhibitiveCall);
  ConstraintSet saved;
  auto info = exec_step_prohibitive(s, saved, rt, limits);
  REQUIRE(info.outcome == ProhibStepInfo::Outcome::Injected);
  REQUIRE(frame_scalar(s, "k") == mk_concrete(16, 0xCAFE));
}

TEST_CASE("concrete-execution oracle: no symbols, identical bytes") {
  ProhibitiveRegistry reg = builtin_suite();
  VmLimits limits;
  Program p = parse_program(R"(
    fn client() {
      let k = 0x1337u16;
      let a = TOYBLOCK(k, 0x0001u16);
      let b = a ^ 0xAAAAu16;
      if b < 0x8000u16 { send(0x01u8, b); } else { send(0x02u8, b); }
      let h = TOYMAC(k, b);
      send(h);
    }
  )");
  GenInputs gi;
  ConcreteRun run = run_concrete(p, reg, gi);
  REQUIRE(run.io.size() == 2);

  // the symbolic VM follows exactly one live path and produces the same
  // wire bytes
  ExecState s = initial_state(p);
  RegistryRuntime rt;
  rt.defs = &reg;
  for (const auto& [dir, bytes] : run.io) {
    Classified c = advance_to_stop(s, reg, limits);
    if (c.k == InstrClass::ProhibitiveCall) {
      ConstraintSet saved;
      auto info = exec_step_prohibitive(s, saved, rt, limits);
      REQUIRE(info.outcome == ProhibStepInfo::Outcome::ExecutedConcretely);
      c = advance_to_stop(s, reg, limits);
    }
    while (c.k == InstrClass::ProhibitiveCall) {
      ConstraintSet saved;
      exec_step_prohibitive(s, saved, rt, limits);
      c = advance_to_stop(s, reg, limits);
    }
    REQUIRE(c.k == InstrClass::NetSend);
    auto wire = send_wire_bytes(s, nullptr);
    REQUIRE(wire.size() == bytes.size());
    for (size_t j = 0; j < wire.size(); ++j) {
      REQUIRE(is_concrete(wire[j]));
      REQUIRE(uint8_t(wire[j]->value) == bytes[j]);
    }
    Message m{Dir::C2S, 0, bytes};
    ReconcileResult r = reconcile_send(s, m, limits);
    REQUIRE(std::holds_alternative<ConstraintSet>(r));
    retire_send(s, std::get<ConstraintSet>(r), limits);
  }
  REQUIRE(s.io_index == 2);
}

TEST_CASE("lazy generator recovers plaintext from key and ciphertext") {
  ProhibitiveRegistry reg = builtin_suite();
  VmLimits limits;
  Program p = parse_program(R"(
    fn client() {
      let k = 0x4242u16;
      let pt = sym_bytes(4);
      let ct = TOYCBC(k, pt);
      send(ct);
    }
  )");
  RegistryRuntime rt;
  rt.defs = &reg;
  ExecState s = initial_state(p);
  Classified c = advance_to_stop(s, reg, limits);
  REQUIRE(c.k == InstrClass::ProhibitiveCall);
  ConstraintSet saved;
  auto info = exec_step_prohibitive(s, saved, rt, limits);
  REQUIRE(info.outcome == ProhibStepInfo::Outcome::Skipped);
  c = advance_to_stop(s, reg, limits);
  REQUIRE(c.k == InstrClass::NetSend);

  // pick a trace value and check the generator pins the plaintext
  Bytes pt_true = {0xDE, 0xAD, 0xBE, 0xEF};
  Bytes ct = toy::toycbc(0x4242, pt_true);
  Message m{Dir::C2S, 0, ct};
  ReconcileResult r = reconcile_send(s, m, limits);
  REQUIRE(std::holds_alternative<ConstraintSet>(r));
  const std::vector<SkippedCall> unfired = s.skipped;
  GeneratorOutcome gen =
      fire_lazy_generators(s.skipped, std::get<ConstraintSet>(r), limits.solver);
  REQUIRE_FALSE(gen.contradiction);
  REQUIRE(gen.fired_events.size() == 1);
  auto forced = forced_bytes(gen.cons, s.skipped[0].input_bytes[1], limits.solver);
  REQUIRE(forced.has_value());
  REQUIRE(*forced == pt_true);

  SECTION("pre-constrained conflicting plaintext contradicts") {
    ConstraintSet pre = std::get<ConstraintSet>(r);
    // pin the first plaintext byte to something the inverse rejects
    pre = pre.append(mk_binary(BinOp::Eq, s.skipped[0].input_bytes[1][0],
                               mk_concrete(8, uint8_t(pt_true[0] ^ 1))));
    auto snapshot = unfired;
    GeneratorOutcome g2 = fire_lazy_generators(snapshot, pre, limits.solver);
    REQUIRE(g2.contradiction);
  }
  SECTION("free trigger leaves the set unchanged") {
    // without the send reconciliation the ciphertext is free
    auto snapshot = unfired;
    GeneratorOutcome g3 = fire_lazy_generators(snapshot, s.cons, limits.solver);
    REQUIRE_FALSE(g3.contradiction);
    REQUIRE(g3.fired_events.empty());
  }
}
