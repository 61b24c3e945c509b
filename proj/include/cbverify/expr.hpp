#pragma once

// Symbolic bitvector expressions: immutable, hash-consed DAG nodes with
// eager normalization. Widths are 1..64 bits; concrete values are stored
// masked to their width. Interning makes structural equality a pointer
// comparison, which keeps constraint sets compact along deep paths.

#include <cstdint>
#include <cstddef>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace cbv {

using Width = uint8_t;

inline constexpr uint64_t width_mask(Width w) {
  return w >= 64 ? ~0ull : ((1ull << w) - 1ull);
}

// Identity of a symbolic unknown. `event` is the index of the
// symbol-creating instruction occurrence along the execution path, so a
// replay of the same path recreates the same symbol ids. `byte` separates
// the bytes of multi-byte sources (sym_bytes, skipped call outputs).
struct SymId {
  uint32_t event = 0;
  uint16_t byte = 0;

  uint64_t key() const { return (uint64_t(event) << 16) | byte; }
  friend bool operator==(const SymId& a, const SymId& b) {
    return a.key() == b.key();
  }
  friend bool operator<(const SymId& a, const SymId& b) {
    return a.key() < b.key();
  }
};

inline SymId sym_from_key(uint64_t k) {
  return SymId{uint32_t(k >> 16), uint16_t(k & 0xffff)};
}

// Assignment of concrete values to symbols, keyed by SymId::key().
struct Model {
  std::map<uint64_t, uint64_t> values;

  std::optional<uint64_t> get(SymId id) const {
    auto it = values.find(id.key());
    if (it == values.end()) return std::nullopt;
    return it->second;
  }
  void set(SymId id, uint64_t v) { values[id.key()] = v; }
};

struct MissingSymbolError : std::runtime_error {
  SymId id;
  explicit MissingSymbolError(SymId s)
      : std::runtime_error("model does not cover symbol"), id(s) {}
};

enum class ExprKind : uint8_t { Concrete, Symbol, Unary, Binary, Extract };
enum class UnOp : uint8_t { Not };
enum class BinOp : uint8_t {
  Add, Sub, Mul, And, Or, Xor, Shl, Shr, Eq, Ne, Lt, Le, Mod, Concat
};

struct ExprNode;
using Expr = const ExprNode*;

struct ExprNode {
  ExprKind kind;
  Width width;
  UnOp uop{};
  BinOp bop{};
  uint64_t value = 0;  // Concrete
  SymId sym{};         // Symbol
  Expr a = nullptr;
  Expr b = nullptr;
  uint8_t lo = 0, hi = 0;  // Extract (bit range, inclusive, lsb = 0)
  uint64_t hash = 0;
  bool has_syms = false;
};

namespace detail {

inline uint64_t mix(uint64_t h, uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

inline uint64_t node_hash(const ExprNode& n) {
  uint64_t h = uint64_t(n.kind);
  h = mix(h, n.width);
  switch (n.kind) {
    case ExprKind::Concrete: h = mix(h, n.value); break;
    case ExprKind::Symbol: h = mix(h, n.sym.key()); break;
    case ExprKind::Unary:
      h = mix(h, uint64_t(n.uop));
      h = mix(h, reinterpret_cast<uintptr_t>(n.a));
      break;
    case ExprKind::Binary:
      h = mix(h, uint64_t(n.bop));
      h = mix(h, reinterpret_cast<uintptr_t>(n.a));
      h = mix(h, reinterpret_cast<uintptr_t>(n.b));
      break;
    case ExprKind::Extract:
      h = mix(h, (uint64_t(n.lo) << 8) | n.hi);
      h = mix(h, reinterpret_cast<uintptr_t>(n.a));
      break;
  }
  return h;
}

inline bool node_equal(const ExprNode& x, const ExprNode& y) {
  if (x.kind != y.kind || x.width != y.width) return false;
  switch (x.kind) {
    case ExprKind::Concrete: return x.value == y.value;
    case ExprKind::Symbol: return x.sym == y.sym;
    case ExprKind::Unary: return x.uop == y.uop && x.a == y.a;
    case ExprKind::Binary: return x.bop == y.bop && x.a == y.a && x.b == y.b;
    case ExprKind::Extract: return x.lo == y.lo && x.hi == y.hi && x.a == y.a;
  }
  return false;
}

// Sharded intern table. Nodes are allocated once and never freed; a
// session's working set is small enough that this is the right trade.
struct InternShard {
  std::mutex mu;
  std::unordered_multimap<uint64_t, Expr> table;
  std::deque<ExprNode> storage;
};

inline InternShard* intern_shards() {
  static InternShard shards[64];
  return shards;
}

inline Expr intern(ExprNode n) {
  n.hash = node_hash(n);
  switch (n.kind) {
    case ExprKind::Concrete: n.has_syms = false; break;
    case ExprKind::Symbol: n.has_syms = true; break;
    case ExprKind::Unary:
    case ExprKind::Extract: n.has_syms = n.a->has_syms; break;
    case ExprKind::Binary: n.has_syms = n.a->has_syms || n.b->has_syms; break;
  }
  InternShard& sh = intern_shards()[n.hash & 63];
  std::lock_guard<std::mutex> lk(sh.mu);
  auto range = sh.table.equal_range(n.hash);
  for (auto it = range.first; it != range.second; ++it) {
    if (node_equal(*it->second, n)) return it->second;
  }
  sh.storage.push_back(n);
  Expr p = &sh.storage.back();
  sh.table.emplace(n.hash, p);
  return p;
}

// Deterministic structural ordering, independent of allocation order.
// Used to canonicalize operand order of commutative operators.
inline int cmp_structural(Expr x, Expr y) {
  if (x == y) return 0;
  if (x->hash != y->hash) return x->hash < y->hash ? -1 : 1;
  if (x->kind != y->kind) return int(x->kind) < int(y->kind) ? -1 : 1;
  if (x->width != y->width) return x->width < y->width ? -1 : 1;
  switch (x->kind) {
    case ExprKind::Concrete:
      return x->value < y->value ? -1 : (x->value > y->value ? 1 : 0);
    case ExprKind::Symbol:
      return x->sym.key() < y->sym.key() ? -1 : 1;
    case ExprKind::Unary: {
      if (x->uop != y->uop) return int(x->uop) < int(y->uop) ? -1 : 1;
      return cmp_structural(x->a, y->a);
    }
    case ExprKind::Binary: {
      if (x->bop != y->bop) return int(x->bop) < int(y->bop) ? -1 : 1;
      int c = cmp_structural(x->a, y->a);
      return c ? c : cmp_structural(x->b, y->b);
    }
    case ExprKind::Extract: {
      if (x->lo != y->lo) return x->lo < y->lo ? -1 : 1;
      if (x->hi != y->hi) return x->hi < y->hi ? -1 : 1;
      return cmp_structural(x->a, y->a);
    }
  }
  return 0;
}

inline uint64_t fold_binop(BinOp op, Width w, uint64_t a, uint64_t b,
                           Width wa = 0) {
  uint64_t m = width_mask(w);
  switch (op) {
    case BinOp::Add: return (a + b) & m;
    case BinOp::Sub: return (a - b) & m;
    case BinOp::Mul: return (a * b) & m;
    case BinOp::And: return a & b;
    case BinOp::Or: return a | b;
    case BinOp::Xor: return a ^ b;
    case BinOp::Shl: return b >= w ? 0 : (a << b) & m;
    case BinOp::Shr: return b >= w ? 0 : (a >> b);
    case BinOp::Eq: return a == b ? 1 : 0;
    case BinOp::Ne: return a != b ? 1 : 0;
    case BinOp::Lt: return a < b ? 1 : 0;
    case BinOp::Le: return a <= b ? 1 : 0;
    case BinOp::Mod: return b == 0 ? a : a % b;  // bvurem convention
    case BinOp::Concat: {
      (void)wa;
      return ((a << (w - wa)) | b) & m;  // w = total, wa = high width
    }
  }
  return 0;
}

}  // namespace detail

inline Expr mk_concrete(Width w, uint64_t v) {
  ExprNode n{};
  n.kind = ExprKind::Concrete;
  n.width = w;
  n.value = v & width_mask(w);
  return detail::intern(n);
}

inline Expr mk_symbol(SymId id, Width w) {
  ExprNode n{};
  n.kind = ExprKind::Symbol;
  n.width = w;
  n.sym = id;
  return detail::intern(n);
}

Expr mk_unary(UnOp op, Expr a);
Expr mk_binary(BinOp op, Expr a, Expr b);
Expr mk_extract(Expr a, uint8_t lo, uint8_t hi);

inline bool is_concrete(Expr e) { return e->kind == ExprKind::Concrete; }
inline bool is_true(Expr e) { return is_concrete(e) && e->value == 1 && e->width == 1; }
inline bool is_false(Expr e) { return is_concrete(e) && e->value == 0 && e->width == 1; }

inline Expr mk_unary(UnOp op, Expr a) {
  if (op == UnOp::Not) {
    if (is_concrete(a)) return mk_concrete(a->width, ~a->value);
    if (a->kind == ExprKind::Unary && a->uop == UnOp::Not) return a->a;
    if (a->width == 1 && a->kind == ExprKind::Binary) {
      switch (a->bop) {
        case BinOp::Eq: return mk_binary(BinOp::Ne, a->a, a->b);
        case BinOp::Ne: return mk_binary(BinOp::Eq, a->a, a->b);
        case BinOp::Lt: return mk_binary(BinOp::Le, a->b, a->a);
        case BinOp::Le: return mk_binary(BinOp::Lt, a->b, a->a);
        default: break;
      }
    }
  }
  ExprNode n{};
  n.kind = ExprKind::Unary;
  n.width = a->width;
  n.uop = op;
  n.a = a;
  return detail::intern(n);
}

inline bool is_power_of_two(uint64_t v) { return v && (v & (v - 1)) == 0; }

inline Expr mk_binary(BinOp op, Expr a, Expr b) {
  const bool comparison =
      op == BinOp::Eq || op == BinOp::Ne || op == BinOp::Lt || op == BinOp::Le;
  if (op != BinOp::Concat && a->width != b->width)
    throw std::logic_error("operand width mismatch");

  Width w;
  if (op == BinOp::Concat) {
    if (a->width + b->width > 64)
      throw std::logic_error("concat exceeds 64 bits");
    w = Width(a->width + b->width);
  } else if (comparison) {
    w = 1;
  } else {
    w = a->width;
  }

  if (is_concrete(a) && is_concrete(b))
    return mk_concrete(w, detail::fold_binop(op, w, a->value, b->value,
                                             a->width));

  const uint64_t m = width_mask(a->width);

  switch (op) {
    case BinOp::Add:
      if (is_concrete(a) && a->value == 0) return b;
      if (is_concrete(b) && b->value == 0) return a;
      break;
    case BinOp::Sub:
      if (a == b) return mk_concrete(w, 0);
      if (is_concrete(b) && b->value == 0) return a;
      break;
    case BinOp::Mul:
      if (is_concrete(a)) {
        if (a->value == 0) return mk_concrete(w, 0);
        if (a->value == 1) return b;
      }
      if (is_concrete(b)) {
        if (b->value == 0) return mk_concrete(w, 0);
        if (b->value == 1) return a;
      }
      break;
    case BinOp::And:
      if (a == b) return a;
      if (is_concrete(a)) {
        if (a->value == 0) return mk_concrete(w, 0);
        if (a->value == m) return b;
      }
      if (is_concrete(b)) {
        if (b->value == 0) return mk_concrete(w, 0);
        if (b->value == m) return a;
      }
      break;
    case BinOp::Or:
      if (a == b) return a;
      if (is_concrete(a)) {
        if (a->value == 0) return b;
        if (a->value == m) return mk_concrete(w, m);
      }
      if (is_concrete(b)) {
        if (b->value == 0) return a;
        if (b->value == m) return mk_concrete(w, m);
      }
      break;
    case BinOp::Xor:
      if (a == b) return mk_concrete(w, 0);
      if (is_concrete(a) && a->value == 0) return b;
      if (is_concrete(b) && b->value == 0) return a;
      break;
    case BinOp::Shl:
    case BinOp::Shr:
      if (is_concrete(b)) {
        if (b->value == 0) return a;
        if (b->value >= a->width) return mk_concrete(w, 0);
      }
      if (is_concrete(a) && a->value == 0) return mk_concrete(w, 0);
      break;
    case BinOp::Eq: {
      if (a == b) return mk_concrete(1, 1);
      // Peel invertible operations off the symbolic side so equalities
      // against constants become unit facts the solver can consume.
      if (is_concrete(b) && a->kind == ExprKind::Binary) {
        Expr x = a->a, y = a->b;
        if (a->bop == BinOp::Xor && is_concrete(y))
          return mk_binary(BinOp::Eq, x, mk_concrete(x->width, b->value ^ y->value));
        if (a->bop == BinOp::Add && is_concrete(y))
          return mk_binary(BinOp::Eq, x, mk_concrete(x->width, b->value - y->value));
        if (a->bop == BinOp::Sub && is_concrete(y))
          return mk_binary(BinOp::Eq, x, mk_concrete(x->width, b->value + y->value));
        if (a->bop == BinOp::Sub && is_concrete(x))
          return mk_binary(BinOp::Eq, y, mk_concrete(y->width, x->value - b->value));
      }
      if (is_concrete(b) && a->kind == ExprKind::Unary && a->uop == UnOp::Not)
        return mk_binary(BinOp::Eq, a->a, mk_concrete(a->width, ~b->value));
      if (a->width == 1 && is_concrete(b))
        return b->value ? a : mk_unary(UnOp::Not, a);
      if (a->width == 1 && is_concrete(a))
        return a->value ? b : mk_unary(UnOp::Not, b);
      break;
    }
    case BinOp::Ne: {
      if (a == b) return mk_concrete(1, 0);
      if (is_concrete(b) && a->kind == ExprKind::Binary) {
        Expr x = a->a, y = a->b;
        if (a->bop == BinOp::Xor && is_concrete(y))
          return mk_binary(BinOp::Ne, x, mk_concrete(x->width, b->value ^ y->value));
        if (a->bop == BinOp::Add && is_concrete(y))
          return mk_binary(BinOp::Ne, x, mk_concrete(x->width, b->value - y->value));
        if (a->bop == BinOp::Sub && is_concrete(y))
          return mk_binary(BinOp::Ne, x, mk_concrete(x->width, b->value + y->value));
      }
      if (a->width == 1 && is_concrete(b))
        return b->value ? mk_unary(UnOp::Not, a) : a;
      if (a->width == 1 && is_concrete(a))
        return a->value ? mk_unary(UnOp::Not, b) : b;
      break;
    }
    case BinOp::Lt:
      if (a == b) return mk_concrete(1, 0);
      if (is_concrete(b) && b->value == 0) return mk_concrete(1, 0);
      if (is_concrete(a) && a->value == m) return mk_concrete(1, 0);
      break;
    case BinOp::Le:
      if (a == b) return mk_concrete(1, 1);
      if (is_concrete(a) && a->value == 0) return mk_concrete(1, 1);
      if (is_concrete(b) && b->value == m) return mk_concrete(1, 1);
      break;
    case BinOp::Mod:
      if (is_concrete(b)) {
        if (b->value == 1) return mk_concrete(w, 0);
        if (is_power_of_two(b->value))
          return mk_binary(BinOp::And, a, mk_concrete(w, b->value - 1));
      }
      break;
    case BinOp::Concat:
      break;
  }

  const bool commutative = op == BinOp::Add || op == BinOp::Mul ||
                           op == BinOp::And || op == BinOp::Or ||
                           op == BinOp::Xor || op == BinOp::Eq ||
                           op == BinOp::Ne;
  if (commutative) {
    // Concrete operand last; otherwise structural order.
    bool swap = false;
    if (is_concrete(a) && !is_concrete(b)) swap = true;
    else if (is_concrete(a) == is_concrete(b) &&
             detail::cmp_structural(a, b) > 0)
      swap = true;
    if (swap) std::swap(a, b);
  }

  ExprNode n{};
  n.kind = ExprKind::Binary;
  n.width = w;
  n.bop = op;
  n.a = a;
  n.b = b;
  return detail::intern(n);
}

inline Expr mk_extract(Expr a, uint8_t lo, uint8_t hi) {
  if (lo > hi || hi >= a->width) throw std::logic_error("bad extract range");
  Width w = Width(hi - lo + 1);
  if (w == a->width) return a;
  if (is_concrete(a)) return mk_concrete(w, a->value >> lo);
  if (a->kind == ExprKind::Extract)
    return mk_extract(a->a, uint8_t(a->lo + lo), uint8_t(a->lo + hi));
  if (a->kind == ExprKind::Unary && a->uop == UnOp::Not)
    return mk_unary(UnOp::Not, mk_extract(a->a, lo, hi));
  if (a->kind == ExprKind::Binary &&
      (a->bop == BinOp::And || a->bop == BinOp::Or || a->bop == BinOp::Xor))
    return mk_binary(a->bop, mk_extract(a->a, lo, hi), mk_extract(a->b, lo, hi));
  if (a->kind == ExprKind::Binary && a->bop == BinOp::Concat) {
    Width lw = a->b->width;
    if (hi < lw) return mk_extract(a->b, lo, hi);
    if (lo >= lw) return mk_extract(a->a, uint8_t(lo - lw), uint8_t(hi - lw));
    return mk_binary(BinOp::Concat, mk_extract(a->a, 0, uint8_t(hi - lw)),
                     mk_extract(a->b, lo, uint8_t(lw - 1)));
  }
  ExprNode n{};
  n.kind = ExprKind::Extract;
  n.width = w;
  n.a = a;
  n.lo = lo;
  n.hi = hi;
  return detail::intern(n);
}

inline Expr mk_concat(Expr high, Expr low) {
  return mk_binary(BinOp::Concat, high, low);
}

// Boolean view of an arbitrary-width expression: nonzero means true.
inline Expr mk_truth(Expr e) {
  if (e->width == 1) return e;
  return mk_binary(BinOp::Ne, e, mk_concrete(e->width, 0));
}

inline Expr mk_not_truth(Expr e) { return mk_unary(UnOp::Not, mk_truth(e)); }

// Constructors normalize eagerly; simplify() re-normalizes a whole DAG,
// which only matters for values built outside the constructors (tests).
inline Expr simplify_rec(Expr e, std::unordered_map<Expr, Expr>& memo) {
  auto it = memo.find(e);
  if (it != memo.end()) return it->second;
  Expr r = e;
  switch (e->kind) {
    case ExprKind::Concrete:
    case ExprKind::Symbol: break;
    case ExprKind::Unary: r = mk_unary(e->uop, simplify_rec(e->a, memo)); break;
    case ExprKind::Binary:
      r = mk_binary(e->bop, simplify_rec(e->a, memo), simplify_rec(e->b, memo));
      break;
    case ExprKind::Extract:
      r = mk_extract(simplify_rec(e->a, memo), e->lo, e->hi);
      break;
  }
  memo.emplace(e, r);
  return r;
}

inline Expr simplify(Expr e) {
  std::unordered_map<Expr, Expr> memo;
  return simplify_rec(e, memo);
}

inline void collect_symbols(Expr e, std::set<uint64_t>& out) {
  if (!e->has_syms) return;
  switch (e->kind) {
    case ExprKind::Symbol: out.insert(e->sym.key()); break;
    case ExprKind::Unary:
    case ExprKind::Extract: collect_symbols(e->a, out); break;
    case ExprKind::Binary:
      collect_symbols(e->a, out);
      collect_symbols(e->b, out);
      break;
    default: break;
  }
}

// Symbols of an expression into a small vector, deduplicated.
inline void collect_symbols_small(
    Expr e, std::vector<std::pair<uint64_t, Width>>& out) {
  if (!e->has_syms) return;
  switch (e->kind) {
    case ExprKind::Symbol: {
      uint64_t k = e->sym.key();
      for (const auto& [k2, w2] : out)
        if (k2 == k) return;
      out.emplace_back(k, e->width);
      break;
    }
    case ExprKind::Unary:
    case ExprKind::Extract: collect_symbols_small(e->a, out); break;
    case ExprKind::Binary:
      collect_symbols_small(e->a, out);
      collect_symbols_small(e->b, out);
      break;
    default: break;
  }
}

// Substitute from a small (symbol, value) list; no memoization, intended
// for the solver's small constraint expressions.
inline Expr substitute_small(Expr e,
                             const std::vector<std::pair<uint64_t, uint64_t>>& vals) {
  if (!e->has_syms) return e;
  switch (e->kind) {
    case ExprKind::Symbol: {
      uint64_t k = e->sym.key();
      for (const auto& [k2, v] : vals)
        if (k2 == k) return mk_concrete(e->width, v);
      return e;
    }
    case ExprKind::Unary: {
      Expr a = substitute_small(e->a, vals);
      return a == e->a ? e : mk_unary(e->uop, a);
    }
    case ExprKind::Binary: {
      Expr a = substitute_small(e->a, vals);
      Expr b = substitute_small(e->b, vals);
      return a == e->a && b == e->b ? e : mk_binary(e->bop, a, b);
    }
    case ExprKind::Extract: {
      Expr a = substitute_small(e->a, vals);
      return a == e->a ? e : mk_extract(a, e->lo, e->hi);
    }
    default: return e;
  }
}

// Evaluation where symbols missing from the model read as zero.
inline uint64_t eval_or_zero(Expr e, const Model& m) {
  switch (e->kind) {
    case ExprKind::Concrete: return e->value;
    case ExprKind::Symbol: {
      auto v = m.get(e->sym);
      return (v ? *v : 0) & width_mask(e->width);
    }
    case ExprKind::Unary:
      return ~eval_or_zero(e->a, m) & width_mask(e->width);
    case ExprKind::Binary:
      return detail::fold_binop(e->bop, e->width, eval_or_zero(e->a, m),
                                eval_or_zero(e->b, m), e->a->width);
    case ExprKind::Extract:
      return (eval_or_zero(e->a, m) >> e->lo) & width_mask(e->width);
  }
  return 0;
}

// Widths of symbols occurring in an expression.
inline void collect_symbol_widths(Expr e, std::map<uint64_t, Width>& out) {
  if (!e->has_syms) return;
  switch (e->kind) {
    case ExprKind::Symbol: out[e->sym.key()] = e->width; break;
    case ExprKind::Unary:
    case ExprKind::Extract: collect_symbol_widths(e->a, out); break;
    case ExprKind::Binary:
      collect_symbol_widths(e->a, out);
      collect_symbol_widths(e->b, out);
      break;
    default: break;
  }
}

namespace detail {
inline uint64_t eval_rec(Expr e, const Model& m,
                         std::unordered_map<Expr, uint64_t>& memo) {
  if (!e->has_syms && e->kind == ExprKind::Concrete) return e->value;
  auto it = memo.find(e);
  if (it != memo.end()) return it->second;
  uint64_t r = 0;
  switch (e->kind) {
    case ExprKind::Concrete: r = e->value; break;
    case ExprKind::Symbol: {
      auto v = m.get(e->sym);
      if (!v) throw MissingSymbolError(e->sym);
      r = *v & width_mask(e->width);
      break;
    }
    case ExprKind::Unary:
      r = ~eval_rec(e->a, m, memo) & width_mask(e->width);
      break;
    case ExprKind::Binary:
      r = fold_binop(e->bop, e->width, eval_rec(e->a, m, memo),
                     eval_rec(e->b, m, memo), e->a->width);
      break;
    case ExprKind::Extract:
      r = (eval_rec(e->a, m, memo) >> e->lo) & width_mask(e->width);
      break;
  }
  memo.emplace(e, r);
  return r;
}
}  // namespace detail

inline uint64_t eval(Expr e, const Model& m) {
  std::unordered_map<Expr, uint64_t> memo;
  return detail::eval_rec(e, m, memo);
}

// Substitute symbols that the model covers; leave the rest in place.
inline Expr substitute_partial_rec(Expr e, const Model& m,
                                   std::unordered_map<Expr, Expr>& memo) {
  if (!e->has_syms) return e;
  auto it = memo.find(e);
  if (it != memo.end()) return it->second;
  Expr r = e;
  switch (e->kind) {
    case ExprKind::Symbol: {
      auto v = m.get(e->sym);
      if (v) r = mk_concrete(e->width, *v);
      break;
    }
    case ExprKind::Unary:
      r = mk_unary(e->uop, substitute_partial_rec(e->a, m, memo));
      break;
    case ExprKind::Binary:
      r = mk_binary(e->bop, substitute_partial_rec(e->a, m, memo),
                    substitute_partial_rec(e->b, m, memo));
      break;
    case ExprKind::Extract:
      r = mk_extract(substitute_partial_rec(e->a, m, memo), e->lo, e->hi);
      break;
    default: break;
  }
  memo.emplace(e, r);
  return r;
}

inline Expr substitute_partial(Expr e, const Model& m) {
  std::unordered_map<Expr, Expr> memo;
  return substitute_partial_rec(e, m, memo);
}

// Full substitution: every symbol of e must be covered by the model.
inline Expr substitute(Expr e, const Model& m) {
  Expr r = substitute_partial(e, m);
  if (r->has_syms) {
    std::set<uint64_t> syms;
    collect_symbols(r, syms);
    throw MissingSymbolError(sym_from_key(*syms.begin()));
  }
  return r;
}

// Optional human-readable labels for symbols (diagnostics, assumptions).
namespace detail {
struct LabelShard {
  std::mutex mu;
  std::unordered_map<uint64_t, std::string> names;
};
inline LabelShard* label_shards() {
  static LabelShard shards[16];
  return shards;
}
}  // namespace detail

inline void set_sym_label(SymId id, const std::string& name) {
  auto& t = detail::label_shards()[id.key() & 15];
  std::lock_guard<std::mutex> lk(t.mu);
  t.names.emplace(id.key(), name);
}

inline std::string sym_label(SymId id) {
  auto& t = detail::label_shards()[id.key() & 15];
  std::lock_guard<std::mutex> lk(t.mu);
  auto it = t.names.find(id.key());
  if (it != t.names.end()) return it->second;
  std::ostringstream os;
  os << "s" << id.event;
  if (id.byte) os << "_" << id.byte;
  return os.str();
}

inline const char* binop_name(BinOp op) {
  switch (op) {
    case BinOp::Add: return "+";
    case BinOp::Sub: return "-";
    case BinOp::Mul: return "*";
    case BinOp::And: return "&";
    case BinOp::Or: return "|";
    case BinOp::Xor: return "^";
    case BinOp::Shl: return "<<";
    case BinOp::Shr: return ">>";
    case BinOp::Eq: return "==";
    case BinOp::Ne: return "!=";
    case BinOp::Lt: return "<";
    case BinOp::Le: return "<=";
    case BinOp::Mod: return "%";
    case BinOp::Concat: return "++";
  }
  return "?";
}

inline void to_string_rec(Expr e, std::ostringstream& os) {
  switch (e->kind) {
    case ExprKind::Concrete: {
      os << "0x" << std::hex << e->value << std::dec;
      break;
    }
    case ExprKind::Symbol: os << sym_label(e->sym); break;
    case ExprKind::Unary:
      os << "~";
      to_string_rec(e->a, os);
      break;
    case ExprKind::Binary:
      os << "(";
      to_string_rec(e->a, os);
      os << " " << binop_name(e->bop) << " ";
      to_string_rec(e->b, os);
      os << ")";
      break;
    case ExprKind::Extract:
      to_string_rec(e->a, os);
      os << "[" << int(e->hi) << ":" << int(e->lo) << "]";
      break;
  }
}

inline std::string to_string(Expr e) {
  std::ostringstream os;
  to_string_rec(e, os);
  return os.str();
}

}  // namespace cbv
