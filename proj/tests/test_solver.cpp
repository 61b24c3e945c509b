#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cbverify/solver.hpp"

using namespace cbv;

namespace {

Expr sym16(uint32_t ev) { return mk_symbol(SymId{ev, 0}, 16); }

ConstraintSet set_of(std::initializer_list<Expr> es) {
  ConstraintSet c;
  for (Expr e : es) c = c.append(e);
  return c;
}

}  // namespace

TEST_CASE("xor inverse") {
  Expr x = sym16(1);
  ConstraintSet c = set_of({mk_binary(
      BinOp::Eq, mk_binary(BinOp::Xor, x, mk_concrete(16, 0x2343)),
      mk_concrete(16, 0x9DAC))});
  SatOutcome r = check_sat(c);
  REQUIRE(r.sat);
  REQUIRE(r.model.values.at(SymId{1, 0}.key()) == 0xBEEF);
}

TEST_CASE("odd factorization of 0xBEEF is satisfiable") {
  Expr x = sym16(1), y = sym16(2);
  ConstraintSet c = set_of({
      mk_binary(BinOp::Eq, mk_binary(BinOp::Mul, x, y), mk_concrete(16, 0xBEEF)),
      mk_binary(BinOp::Eq, mk_binary(BinOp::Mod, x, mk_concrete(16, 2)),
                mk_concrete(16, 1)),
      mk_binary(BinOp::Eq, mk_binary(BinOp::And, y, mk_concrete(16, 1)),
                mk_concrete(16, 1)),
  });
  SatOutcome r = check_sat(c);
  REQUIRE(r.sat);
  uint64_t xv = r.model.values.at(SymId{1, 0}.key());
  uint64_t yv = r.model.values.at(SymId{2, 0}.key());
  REQUIRE(((xv * yv) & 0xFFFF) == 0xBEEF);
  REQUIRE((xv & 1) == 1);
  REQUIRE((yv & 1) == 1);
  // x = 0x9, y = 0x1537 is one valid witness of the same set
  Model paper;
  paper.set(SymId{1, 0}, 0x9);
  paper.set(SymId{2, 0}, 0x1537);
  for (Expr e : c.to_vector()) REQUIRE(eval(e, paper) == 1);
}

TEST_CASE("contradiction is UNSAT") {
  Expr x = sym16(1);
  ConstraintSet c = set_of({
      mk_binary(BinOp::Eq, mk_binary(BinOp::And, x, mk_concrete(16, 1)),
                mk_concrete(16, 0)),
      mk_binary(BinOp::Eq, mk_binary(BinOp::And, x, mk_concrete(16, 1)),
                mk_concrete(16, 1)),
  });
  REQUIRE_FALSE(check_sat(c).sat);
}

TEST_CASE("concretize forced and free") {
  Expr iv = sym16(1);
  ConstraintSet c =
      set_of({mk_binary(BinOp::Eq, iv, mk_concrete(16, 0x1234))});
  auto st = concretize(c, {SymId{1, 0}});
  REQUIRE(st.at(SymId{1, 0}.key()).has_value());
  REQUIRE(*st.at(SymId{1, 0}.key()) == 0x1234);

  Expr x = sym16(2), y = sym16(3);
  ConstraintSet c2 = set_of({
      mk_binary(BinOp::Eq, mk_binary(BinOp::Mul, x, y), mk_concrete(16, 0xBEEF)),
      mk_binary(BinOp::Eq, mk_binary(BinOp::Mod, x, mk_concrete(16, 2)),
                mk_concrete(16, 1)),
  });
  auto st2 = concretize(c2, {SymId{2, 0}});
  REQUIRE_FALSE(st2.at(SymId{2, 0}.key()).has_value());  // multiple factorizations

  ConstraintSet empty;
  auto st3 = concretize(empty, {SymId{9, 0}});
  REQUIRE_FALSE(st3.at(SymId{9, 0}.key()).has_value());
}

TEST_CASE("equisatisfiable concretization") {
  Expr iv = sym16(1);
  ConstraintSet a = set_of({mk_binary(BinOp::Eq, iv, mk_concrete(16, 0x1234))});
  ConstraintSet b = set_of({mk_binary(BinOp::Eq, iv, mk_concrete(16, 0x1234))});
  REQUIRE(equisat_concretization(a, b, {SymId{1, 0}}));
  ConstraintSet e;
  REQUIRE_FALSE(equisat_concretization(e, a, {SymId{1, 0}}));
}

TEST_CASE("budget exceeded is distinct from UNSAT") {
  // 16 free byte symbols feeding one sum equation: 128 bits to search.
  std::vector<Expr> bytes;
  Expr sum = mk_concrete(16, 0);
  for (uint32_t i = 0; i < 16; ++i) {
    Expr b = mk_symbol(SymId{100 + i, 0}, 8);
    bytes.push_back(b);
    sum = mk_binary(BinOp::Add, sum, mk_concat(mk_concrete(8, 0), b));
  }
  ConstraintSet c =
      set_of({mk_binary(BinOp::Eq, sum, mk_concrete(16, 0x0042))});
  REQUIRE_THROWS_AS(check_sat(c), BudgetExceededError);
}

TEST_CASE("interval propagation prunes quickly") {
  Expr n = mk_symbol(SymId{1, 0}, 8);
  ConstraintSet c = set_of({
      mk_binary(BinOp::Lt, mk_concrete(8, 3), n),
      mk_binary(BinOp::Le, n, mk_concrete(8, 5)),
      mk_binary(BinOp::Ne, n, mk_concrete(8, 5)),
  });
  SatOutcome r = check_sat(c);
  REQUIRE(r.sat);
  REQUIRE(r.model.values.at(SymId{1, 0}.key()) == 4);

  ConstraintSet c2 = c.append(mk_binary(BinOp::Ne, n, mk_concrete(8, 4)));
  REQUIRE_FALSE(check_sat(c2).sat);
}

namespace {

// Brute-force oracle: enumerate all assignments.
struct Enumerated {
  bool sat = false;
  std::map<uint64_t, std::set<uint64_t>> seen;  // symbol -> observed values
};

Enumerated enumerate_all(const std::vector<Expr>& cons,
                         const std::vector<std::pair<SymId, Width>>& syms) {
  Enumerated out;
  std::vector<uint64_t> cur(syms.size(), 0);
  std::function<void(size_t, Model&)> rec = [&](size_t i, Model& m) {
    if (i == syms.size()) {
      for (Expr e : cons)
        if (eval(e, m) != 1) return;
      out.sat = true;
      for (const auto& [id, w] : syms)
        out.seen[id.key()].insert(*m.get(id));
      return;
    }
    uint64_t hi = width_mask(syms[i].second);
    for (uint64_t v = 0;; ++v) {
      m.set(syms[i].first, v);
      rec(i + 1, m);
      if (v == hi) break;
    }
  };
  Model m;
  rec(0, m);
  return out;
}

Expr random_bool_expr(std::mt19937& rng,
                      const std::vector<std::pair<SymId, Width>>& syms) {
  // operand pool of matching widths
  auto operand = [&](Width w) -> Expr {
    std::vector<Expr> pool;
    for (const auto& [id, sw] : syms)
      if (sw == w) pool.push_back(mk_symbol(id, sw));
    if (pool.empty() || rng() % 3 == 0)
      return mk_concrete(w, rng() & width_mask(w));
    return pool[rng() % pool.size()];
  };
  Width w = syms[rng() % syms.size()].second;
  Expr a = operand(w);
  Expr b = operand(w);
  static const BinOp arith[] = {BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::And,
                                BinOp::Or,  BinOp::Xor, BinOp::Mod};
  if (rng() % 2) a = mk_binary(arith[rng() % 7], a, operand(w));
  static const BinOp cmps[] = {BinOp::Eq, BinOp::Ne, BinOp::Lt, BinOp::Le};
  return mk_binary(cmps[rng() % 4], a, b);
}

}  // namespace

TEST_CASE("solver agrees with exhaustive enumeration on small instances") {
  std::mt19937 rng(77);
  int checked = 0;
  for (int iter = 0; iter < 200; ++iter) {
    size_t nsyms = 1 + rng() % 3;
    std::vector<std::pair<SymId, Width>> syms;
    static const Width widths[] = {1, 2, 4, 8};
    uint32_t total = 0;
    for (size_t i = 0; i < nsyms; ++i) {
      Width w = widths[rng() % 4];
      while (total + w > 14) w = widths[rng() % 2];
      syms.push_back({SymId{uint32_t(1 + i), 0}, w});
      total += w;
    }
    size_t ncons = 1 + rng() % 4;
    std::vector<Expr> cons;
    for (size_t i = 0; i < ncons; ++i)
      cons.push_back(random_bool_expr(rng, syms));

    Enumerated oracle = enumerate_all(cons, syms);
    ConstraintSet cs;
    for (Expr e : cons) cs = cs.append(e);
    SatOutcome got = check_sat(cs);
    REQUIRE(got.sat == oracle.sat);
    if (oracle.sat) {
      // concretize agreement: forced iff oracle saw exactly one value
      std::vector<SymId> targets;
      for (const auto& [id, w] : syms) targets.push_back(id);
      auto st = concretize(cs, targets);
      for (const auto& [id, w] : syms) {
        auto& vals = oracle.seen[id.key()];
        bool constrained = false;
        {
          auto sw = cs.symbol_widths();
          constrained = sw.count(id.key()) > 0;
        }
        auto& forced = st.at(id.key());
        if (!constrained) {
          REQUIRE_FALSE(forced.has_value());
        } else if (vals.size() == 1) {
          REQUIRE(forced.has_value());
          REQUIRE(*forced == *vals.begin());
        } else {
          REQUIRE_FALSE(forced.has_value());
        }
      }
      ++checked;
    }
  }
  REQUIRE(checked > 50);  // the generator must produce enough SAT cases
}

TEST_CASE("witness is deterministic across runs") {
  for (int i = 0; i < 3; ++i) {
    Expr x = sym16(1), y = sym16(2);
    ConstraintSet c = set_of({
        mk_binary(BinOp::Eq, mk_binary(BinOp::Mul, x, y),
                  mk_concrete(16, 0xBEEF)),
        mk_binary(BinOp::Eq, mk_binary(BinOp::Mod, x, mk_concrete(16, 2)),
                  mk_concrete(16, 1)),
    });
    SatOutcome r = check_sat(c);
    REQUIRE(r.sat);
    REQUIRE(r.model.values.at(SymId{1, 0}.key()) == 1);
    REQUIRE(r.model.values.at(SymId{2, 0}.key()) == 0xBEEF);
  }
}
