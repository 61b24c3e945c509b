#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cbverify/expr.hpp"

using namespace cbv;

TEST_CASE("constant folding") {
  Expr e = mk_binary(BinOp::Mul, mk_concrete(16, 3), mk_concrete(16, 5));
  REQUIRE(is_concrete(e));
  REQUIRE(e->value == 15);
  REQUIRE(e->width == 16);

  Expr ov = mk_binary(BinOp::Mul, mk_concrete(16, 0x8000), mk_concrete(16, 2));
  REQUIRE(ov->value == 0);  // mod 2^16
}

TEST_CASE("self-inverse and identities") {
  Expr x = mk_symbol(SymId{1, 0}, 16);
  REQUIRE(mk_binary(BinOp::Xor, x, x) == mk_concrete(16, 0));
  REQUIRE(mk_binary(BinOp::And, x, mk_concrete(16, 0)) == mk_concrete(16, 0));
  REQUIRE(mk_binary(BinOp::Xor, x, mk_concrete(16, 0)) == x);
  REQUIRE(mk_binary(BinOp::Add, x, mk_concrete(16, 0)) == x);
  REQUIRE(mk_binary(BinOp::Sub, x, x) == mk_concrete(16, 0));
  REQUIRE(mk_binary(BinOp::Eq, x, x) == mk_concrete(1, 1));
}

TEST_CASE("symbol xor constant keeps shape, symbol first") {
  Expr x = mk_symbol(SymId{2, 0}, 16);
  Expr e = mk_binary(BinOp::Xor, mk_concrete(16, 0x2343), x);
  REQUIRE(e->kind == ExprKind::Binary);
  REQUIRE(e->bop == BinOp::Xor);
  REQUIRE(e->a == x);  // canonical order puts the concrete operand last
  REQUIRE(is_concrete(e->b));
  // interning: same construction yields the same node
  REQUIRE(e == mk_binary(BinOp::Xor, x, mk_concrete(16, 0x2343)));
}

TEST_CASE("substitute") {
  Expr x = mk_symbol(SymId{3, 0}, 16);
  Expr y = mk_symbol(SymId{4, 0}, 16);
  Model m;
  m.set(SymId{3, 0}, 0xBEEF);

  Expr e = mk_binary(BinOp::Xor, x, mk_concrete(16, 0x2343));
  Expr r = substitute(e, m);
  REQUIRE(r == mk_concrete(16, 0x9DAC));

  Model m2;
  m2.set(SymId{3, 0}, 7);
  REQUIRE(substitute(x, m2) == mk_concrete(16, 7));

  Model m3;
  m3.set(SymId{3, 0}, 0x9);
  m3.set(SymId{4, 0}, 0x1537);
  REQUIRE(substitute(mk_binary(BinOp::Mul, x, y), m3) ==
          mk_concrete(16, 0xBEEF));

  Model empty;
  REQUIRE_THROWS_AS(substitute(mk_binary(BinOp::Mul, x, y), empty),
                    MissingSymbolError);
}

TEST_CASE("extract pushes through bitwise ops and concats") {
  Expr x = mk_symbol(SymId{5, 0}, 16);
  Expr y = mk_symbol(SymId{6, 0}, 16);
  Expr e = mk_extract(mk_binary(BinOp::Xor, x, y), 8, 15);
  REQUIRE(e->kind == ExprKind::Binary);
  REQUIRE(e->bop == BinOp::Xor);

  Expr c = mk_concat(mk_extract(x, 8, 15), mk_extract(x, 0, 7));
  REQUIRE(mk_extract(c, 0, 7) == mk_extract(x, 0, 7));
  REQUIRE(mk_extract(c, 8, 15) == mk_extract(x, 8, 15));

  REQUIRE(mk_extract(mk_concrete(16, 0x1234), 8, 15) == mk_concrete(8, 0x12));
  REQUIRE(mk_extract(x, 0, 15) == x);
}

TEST_CASE("solve-form rewrites against constants") {
  Expr x = mk_symbol(SymId{7, 0}, 16);
  Expr e = mk_binary(BinOp::Eq, mk_binary(BinOp::Xor, x, mk_concrete(16, 0x2343)),
                     mk_concrete(16, 0x9DAC));
  // x ^ 0x2343 == 0x9DAC  rewrites to  x == 0xBEEF
  REQUIRE(e->kind == ExprKind::Binary);
  REQUIRE(e->bop == BinOp::Eq);
  REQUIRE(e->a == x);
  REQUIRE(e->b == mk_concrete(16, 0xBEEF));

  Expr m = mk_binary(BinOp::Mod, x, mk_concrete(16, 2));
  REQUIRE(m->bop == BinOp::And);  // x % 2 -> x & 1
}

TEST_CASE("width-1 equality collapses to the operand or its negation") {
  Expr b = mk_symbol(SymId{8, 0}, 1);
  REQUIRE(mk_binary(BinOp::Eq, b, mk_concrete(1, 1)) == b);
  Expr nb = mk_binary(BinOp::Eq, b, mk_concrete(1, 0));
  REQUIRE(nb->kind == ExprKind::Unary);
  REQUIRE(mk_unary(UnOp::Not, nb) == b);
}

static Expr random_expr(std::mt19937& rng, const std::vector<Expr>& leaves,
                        int depth) {
  if (depth == 0 || rng() % 4 == 0) {
    if (rng() % 3 == 0) return mk_concrete(16, rng());
    return leaves[rng() % leaves.size()];
  }
  static const BinOp ops[] = {BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::And,
                              BinOp::Or,  BinOp::Xor, BinOp::Shl, BinOp::Shr,
                              BinOp::Mod};
  if (rng() % 8 == 0)
    return mk_unary(UnOp::Not, random_expr(rng, leaves, depth - 1));
  if (rng() % 8 == 0) {
    Expr a = random_expr(rng, leaves, depth - 1);
    uint8_t lo = uint8_t(rng() % 8);
    uint8_t hi = uint8_t(lo + rng() % (16 - lo));
    Expr ex = mk_extract(a, lo, hi);
    // keep widths uniform for composition
    if (ex->width == 16) return ex;
    return mk_binary(BinOp::Concat, mk_concrete(Width(16 - ex->width), 0), ex);
  }
  return mk_binary(ops[rng() % (sizeof(ops) / sizeof(ops[0]))],
                   random_expr(rng, leaves, depth - 1),
                   random_expr(rng, leaves, depth - 1));
}

TEST_CASE("simplify preserves semantics under random models") {
  std::mt19937 rng(1234);
  std::vector<Expr> leaves = {mk_symbol(SymId{100, 0}, 16),
                              mk_symbol(SymId{101, 0}, 16),
                              mk_symbol(SymId{102, 0}, 16)};
  for (int iter = 0; iter < 500; ++iter) {
    Expr e = random_expr(rng, leaves, 4);
    Model m;
    m.set(SymId{100, 0}, rng());
    m.set(SymId{101, 0}, rng());
    m.set(SymId{102, 0}, rng());
    uint64_t direct = eval(e, m);
    Expr s = simplify(e);
    REQUIRE(eval(s, m) == direct);
    Expr sub = substitute(s, m);
    REQUIRE(is_concrete(sub));
    REQUIRE(sub->value == direct);
  }
}
