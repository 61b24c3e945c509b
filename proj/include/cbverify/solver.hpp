#pragma once

// Exact satisfiability and model finding over bitvector constraint sets.
// Strategy: constant/bit/interval propagation to a fixpoint, then
// depth-first enumeration of the remaining symbol bits with unit
// propagation after every assignment. A bits-of-search budget bounds the
// enumeration; exceeding it raises BudgetExceededError, which callers
// treat as "unresolvable within budget" rather than UNSAT.

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "cbverify/expr.hpp"

namespace cbv {

struct BudgetExceededError : std::runtime_error {
  uint64_t bits;
  explicit BudgetExceededError(uint64_t b)
      : std::runtime_error("solver budget exceeded"), bits(b) {}
};

struct SolverLimits {
  uint32_t bits_budget = 64;        // max bits enumerated after propagation
  uint64_t enum_step_cap = 2'000'000;  // DFS assignment visits
};

// Append-only conjunction of boolean (width-1) expressions. Persistent
// list structure: copies share the spine, so cloning a state is O(1).
class ConstraintSet {
  struct Link {
    Expr e;
    std::shared_ptr<const Link> prev;
    uint32_t n;
  };
  std::shared_ptr<const Link> tail_;

 public:
  ConstraintSet() = default;

  uint32_t size() const { return tail_ ? tail_->n : 0; }
  bool empty() const { return !tail_; }

  ConstraintSet append(Expr e) const {
    if (e->width != 1) throw std::logic_error("constraint must be width 1");
    if (is_true(e)) return *this;
    ConstraintSet r;
    auto link = std::make_shared<Link>();
    link->e = e;
    link->prev = tail_;
    link->n = size() + 1;
    r.tail_ = std::move(link);
    return r;
  }

  ConstraintSet append_all(const std::vector<Expr>& es) const {
    ConstraintSet r = *this;
    for (Expr e : es) r = r.append(e);
    return r;
  }

  // Constraints in append order, deduplicated by node identity.
  std::vector<Expr> to_vector() const {
    std::vector<Expr> v;
    v.reserve(size());
    for (const Link* p = tail_.get(); p; p = p->prev.get()) v.push_back(p->e);
    std::reverse(v.begin(), v.end());
    std::unordered_set<Expr> seen;
    std::vector<Expr> out;
    out.reserve(v.size());
    for (Expr e : v)
      if (seen.insert(e).second) out.push_back(e);
    return out;
  }

  std::map<uint64_t, Width> symbol_widths() const {
    std::map<uint64_t, Width> m;
    for (const Link* p = tail_.get(); p; p = p->prev.get())
      collect_symbol_widths(p->e, m);
    return m;
  }
};

struct SatOutcome {
  bool sat = false;
  Model model;  // witness when sat
};

namespace detail {

struct SymState {
  Width w = 0;
  uint64_t known_mask = 0;
  uint64_t known_val = 0;
  uint64_t lo = 0;
  uint64_t hi = 0;

  bool full() const { return known_mask == width_mask(w); }
  bool compatible(uint64_t v) const {
    return (v & known_mask) == known_val && v >= lo && v <= hi;
  }
};

struct PropState {
  std::map<uint64_t, SymState> syms;
  std::vector<Expr> residual;
  bool contradiction = false;

  SymState& sym(uint64_t key, Width w) {
    auto it = syms.find(key);
    if (it == syms.end()) {
      SymState s;
      s.w = w;
      s.hi = width_mask(w);
      it = syms.emplace(key, s).first;
    }
    return it->second;
  }

  bool learn_bits(uint64_t key, Width w, uint64_t mask, uint64_t val) {
    SymState& s = sym(key, w);
    if ((s.known_val & mask) != (val & s.known_mask & mask)) {
      if ((s.known_mask & mask & (s.known_val ^ val)) != 0) {
        contradiction = true;
        return false;
      }
    }
    uint64_t nm = s.known_mask | mask;
    uint64_t nv = s.known_val | (val & mask);
    bool changed = nm != s.known_mask || nv != s.known_val;
    s.known_mask = nm;
    s.known_val = nv;
    if (s.full() && !s.compatible(s.known_val)) contradiction = true;
    return changed;
  }

  bool learn_lo(uint64_t key, Width w, uint64_t lo) {
    SymState& s = sym(key, w);
    if (lo > s.lo) {
      s.lo = lo;
      if (s.lo > s.hi) contradiction = true;
      return true;
    }
    return false;
  }

  bool learn_hi(uint64_t key, Width w, uint64_t hi) {
    SymState& s = sym(key, w);
    if (hi < s.hi) {
      s.hi = hi;
      if (s.lo > s.hi) contradiction = true;
      return true;
    }
    return false;
  }

  Model known_model() const {
    Model m;
    for (const auto& [k, s] : syms) {
      if (s.full()) m.values[k] = s.known_val;
      else if (s.lo == s.hi && s.compatible(s.lo)) m.values[k] = s.lo;
    }
    return m;
  }
};

// Worklist propagation: each constraint is substituted with its
// fully-known symbols, simplified, and mined for unit facts. Constraints
// that cannot be decided yet are parked on their symbols and re-examined
// when one of those symbols learns a fact.
inline std::optional<uint64_t> min_compatible(const SymState& s);

inline void propagate(PropState& st) {
  std::deque<Expr> queue(st.residual.begin(), st.residual.end());
  std::unordered_set<Expr> queued(queue.begin(), queue.end());
  st.residual.clear();
  std::unordered_multimap<uint64_t, Expr> parked;
  std::unordered_set<Expr> parked_set;

  auto wake = [&](uint64_t key) {
    auto range = parked.equal_range(key);
    for (auto it = range.first; it != range.second; ++it) {
      if (parked_set.erase(it->second) && queued.insert(it->second).second)
        queue.push_back(it->second);
    }
    parked.erase(range.first, range.second);
  };
  auto learn_bits = [&](uint64_t key, Width w, uint64_t mask, uint64_t val) {
    if (st.learn_bits(key, w, mask, val)) wake(key);
  };
  auto learn_lo = [&](uint64_t key, Width w, uint64_t lo) {
    if (st.learn_lo(key, w, lo)) wake(key);
  };
  auto learn_hi = [&](uint64_t key, Width w, uint64_t hi) {
    if (st.learn_hi(key, w, hi)) wake(key);
  };
  auto push = [&](Expr e) {
    if (queued.insert(e).second) queue.push_back(e);
  };

  std::vector<std::pair<uint64_t, Width>> occ;
  std::vector<std::pair<uint64_t, uint64_t>> known;
  while (!queue.empty() && !st.contradiction) {
    Expr e0 = queue.front();
    queue.pop_front();
    queued.erase(e0);

    occ.clear();
    known.clear();
    collect_symbols_small(e0, occ);
    for (const auto& [k, w] : occ) {
      auto it = st.syms.find(k);
      if (it == st.syms.end()) continue;
      const SymState& s = it->second;
      if (s.full()) known.emplace_back(k, s.known_val);
      else if (s.lo == s.hi && s.compatible(s.lo)) known.emplace_back(k, s.lo);
    }
    Expr e = known.empty() ? e0 : substitute_small(e0, known);

    if (is_concrete(e)) {
      if (e->value == 0) {
        st.contradiction = true;
        return;
      }
      continue;  // satisfied, drop
    }
    // sym == const and its byte/bit projections
    if (e->kind == ExprKind::Binary && e->bop == BinOp::Eq &&
        is_concrete(e->b)) {
      Expr l = e->a;
      uint64_t c = e->b->value;
      if (l->kind == ExprKind::Symbol) {
        learn_bits(l->sym.key(), l->width, width_mask(l->width), c);
        continue;
      }
      if (l->kind == ExprKind::Extract && l->a->kind == ExprKind::Symbol) {
        uint64_t mask = width_mask(Width(l->hi - l->lo + 1)) << l->lo;
        learn_bits(l->a->sym.key(), l->a->width, mask, c << l->lo);
        continue;
      }
      if (l->kind == ExprKind::Binary && l->bop == BinOp::Concat) {
        Width lw = l->b->width;
        push(mk_binary(BinOp::Eq, l->a, mk_concrete(l->a->width, c >> lw)));
        push(mk_binary(BinOp::Eq, l->b, mk_concrete(lw, c & width_mask(lw))));
        continue;
      }
    }
    // width-1 symbol or its negation is a unit fact
    if (e->kind == ExprKind::Symbol && e->width == 1) {
      learn_bits(e->sym.key(), 1, 1, 1);
      continue;
    }
    if (e->kind == ExprKind::Unary && e->uop == UnOp::Not &&
        e->a->kind == ExprKind::Symbol && e->a->width == 1) {
      learn_bits(e->a->sym.key(), 1, 1, 0);
      continue;
    }
    // interval facts: sym <cmp> const / const <cmp> sym
    if (e->kind == ExprKind::Binary &&
        (e->bop == BinOp::Lt || e->bop == BinOp::Le)) {
      Expr l = e->a, r = e->b;
      if (l->kind == ExprKind::Symbol && is_concrete(r)) {
        uint64_t c = r->value;
        if (e->bop == BinOp::Lt) {
          if (c == 0) {
            st.contradiction = true;
            return;
          }
          learn_hi(l->sym.key(), l->width, c - 1);
        } else {
          learn_hi(l->sym.key(), l->width, c);
        }
        continue;
      }
      if (is_concrete(l) && r->kind == ExprKind::Symbol) {
        uint64_t c = l->value;
        if (e->bop == BinOp::Lt) {
          if (c == width_mask(r->width)) {
            st.contradiction = true;
            return;
          }
          learn_lo(r->sym.key(), r->width, c + 1);
        } else {
          learn_lo(r->sym.key(), r->width, c);
        }
        continue;
      }
    }
    // sym != const: tighten interval endpoints only
    if (e->kind == ExprKind::Binary && e->bop == BinOp::Ne &&
        e->a->kind == ExprKind::Symbol && is_concrete(e->b)) {
      uint64_t key = e->a->sym.key();
      SymState& s = st.sym(key, e->a->width);
      uint64_t c = e->b->value;
      if (c < s.lo || c > s.hi || !((c & s.known_mask) == s.known_val))
        continue;  // already impossible; constraint satisfied
      if (s.lo == s.hi) {
        st.contradiction = true;
        return;
      }
      if (c == s.lo) {
        s.lo++;
        wake(key);
        continue;
      }
      if (c == s.hi) {
        s.hi--;
        wake(key);
        continue;
      }
      // park so interval movement re-examines it; key on the current
      // (substituted) expression's symbols
      occ.clear();
      collect_symbols_small(e, occ);
      for (const auto& [k, w] : occ) parked.emplace(k, e);
      parked_set.insert(e);
      continue;
    }
    occ.clear();
    collect_symbols_small(e, occ);
    if (occ.empty()) {
      st.contradiction = true;  // symbol-free non-concrete: cannot happen
      return;
    }
    for (const auto& [k, w] : occ) parked.emplace(k, e);
    parked_set.insert(e);
  }
  if (st.contradiction) return;
  st.residual.assign(parked_set.begin(), parked_set.end());
  std::sort(st.residual.begin(), st.residual.end(),
            [](Expr a, Expr b) { return cmp_structural(a, b) < 0; });
  // Bit facts and interval facts must be jointly satisfiable per symbol.
  for (const auto& [key, s] : st.syms) {
    if (!min_compatible(s)) {
      st.contradiction = true;
      return;
    }
  }
}

struct DfsContext {
  SolverLimits limits;
  uint64_t steps = 0;
};

inline bool dfs_solve(PropState st, DfsContext& cx, PropState& out);

// Enumerate candidate values for one symbol consistent with its known
// bits and interval, ascending.
inline bool dfs_enumerate(PropState& st, uint64_t key, DfsContext& cx,
                          PropState& out) {
  SymState s = st.syms.at(key);
  for (uint64_t v = s.lo;; ++v) {
    if (v > s.hi) break;
    if ((v & s.known_mask) == s.known_val) {
      if (++cx.steps > cx.limits.enum_step_cap)
        throw BudgetExceededError(cx.steps);
      PropState child = st;
      SymState& cs = child.syms.at(key);
      cs.known_mask = width_mask(cs.w);
      cs.known_val = v;
      cs.lo = cs.hi = v;
      propagate(child);
      if (!child.contradiction && dfs_solve(std::move(child), cx, out))
        return true;
    }
    if (v == s.hi) break;  // avoid wrap on hi == mask
  }
  return false;
}

inline bool dfs_solve(PropState st, DfsContext& cx, PropState& out) {
  if (st.contradiction) return false;
  if (st.residual.empty()) {
    out = std::move(st);
    return true;
  }
  // lowest symbol id occurring in residual constraints and not yet fixed
  std::map<uint64_t, Width> occ;
  for (Expr e : st.residual) collect_symbol_widths(e, occ);
  for (const auto& [key, w] : occ) {
    SymState& s = st.sym(key, w);
    if (!s.full()) return dfs_enumerate(st, key, cx, out);
  }
  // all residual symbols fully known yet constraints unevaluated: force
  // one more propagation; if it does not discharge them they are false
  propagate(st);
  if (st.contradiction) return false;
  if (st.residual.empty()) {
    out = std::move(st);
    return true;
  }
  return false;
}

// Smallest value for a symbol consistent with its recorded facts.
// Walks the values whose known bits match, in increasing order; since
// known and unknown bit positions are disjoint this order is the full
// value order, so the first hit inside [lo, hi] is the minimum and a
// miss past hi is definitive.
inline std::optional<uint64_t> min_compatible(const SymState& s) {
  const uint64_t wm = width_mask(s.w);
  const uint64_t unknown = wm & ~s.known_mask;
  uint64_t v = (s.lo & unknown) | s.known_val;
  for (uint64_t tries = 0; tries <= (1ull << 20); ++tries) {
    if (v >= s.lo) {
      if (v <= s.hi) return v;
      return std::nullopt;
    }
    uint64_t un = ((v | ~unknown) + 1) & unknown;
    uint64_t nv = un | s.known_val;
    if (nv <= v) return std::nullopt;  // wrapped
    v = nv;
  }
  return std::nullopt;
}

}  // namespace detail

// SAT with witness, or definitive UNSAT, within the search budget.
inline SatOutcome check_sat(const ConstraintSet& cs,
                            const SolverLimits& limits = {}) {
  std::vector<Expr> original = cs.to_vector();
  detail::PropState st;
  st.residual = original;
  detail::propagate(st);
  SatOutcome out;
  if (st.contradiction) return out;

  if (!st.residual.empty()) {
    uint64_t bits = 0;
    std::map<uint64_t, Width> occ;
    for (Expr e : st.residual) collect_symbol_widths(e, occ);
    for (const auto& [key, w] : occ) {
      const detail::SymState& s = st.sym(key, w);
      bits += uint64_t(w) - uint64_t(__builtin_popcountll(s.known_mask));
    }
    if (bits > limits.bits_budget) throw BudgetExceededError(bits);
    detail::DfsContext cx{limits, 0};
    detail::PropState solved;
    if (!detail::dfs_solve(st, cx, solved)) return out;
    st = std::move(solved);
  }

  out.sat = true;
  for (Expr e : original) {
    std::vector<std::pair<uint64_t, Width>> syms;
    collect_symbols_small(e, syms);
    for (const auto& [key, w] : syms) {
      if (out.model.values.count(key)) continue;
      const auto it = st.syms.find(key);
      if (it == st.syms.end()) {
        out.model.values[key] = 0;
        continue;
      }
      auto v = detail::min_compatible(it->second);
      if (!v) throw BudgetExceededError(0);
      out.model.values[key] = *v;
    }
  }
#ifndef NDEBUG
  // The witness must satisfy every constraint; a failure here is a
  // solver defect, not an input property.
  for (Expr e : original) {
    if (eval(e, out.model) != 1)
      throw std::logic_error("solver produced an invalid witness");
  }
#endif
  return out;
}

// Forced(value) per symbol iff every model assigns it; Free otherwise.
// Decided exactly: forced(v) <=> cs /\ (sym != v) is UNSAT. Symbols that
// propagation alone pins need no extra solver call (the set is known to
// be satisfiable, so implied facts are forced values).
inline std::map<uint64_t, std::optional<uint64_t>> concretize(
    const ConstraintSet& cs, const std::vector<SymId>& targets,
    const SolverLimits& limits = {}) {
  detail::PropState st;
  st.residual = cs.to_vector();
  detail::propagate(st);
  auto widths = cs.symbol_widths();
  std::map<uint64_t, std::optional<uint64_t>> out;
  std::optional<SatOutcome> base;  // solved lazily for undecided targets
  for (SymId t : targets) {
    auto wit = widths.find(t.key());
    if (wit == widths.end()) {
      out[t.key()] = std::nullopt;  // unconstrained: free
      continue;
    }
    if (!st.contradiction) {
      auto it = st.syms.find(t.key());
      if (it != st.syms.end()) {
        const detail::SymState& s = it->second;
        if (s.full()) {
          out[t.key()] = s.known_val;
          continue;
        }
        if (s.lo == s.hi && s.compatible(s.lo)) {
          out[t.key()] = s.lo;
          continue;
        }
      }
    }
    if (!base) {
      base = check_sat(cs, limits);
      if (!base->sat)
        throw std::logic_error("concretize requires a satisfiable set");
    }
    uint64_t v = base->model.values.at(t.key());
    Expr ne = mk_binary(BinOp::Ne, mk_symbol(t, wit->second),
                        mk_concrete(wit->second, v));
    SatOutcome alt = check_sat(cs.append(ne), limits);
    if (alt.sat) out[t.key()] = std::nullopt;
    else out[t.key()] = v;
  }
  return out;
}

// Propagation view of a constraint set: values a symbol-bearing
// expression is forced to by propagation alone (sound but not complete;
// exact decisions still go through check_sat).
class PropagatedFacts {
  detail::PropState st_;
  Model known_;
  bool contradiction_ = false;

 public:
  explicit PropagatedFacts(const ConstraintSet& cs) {
    st_.residual = cs.to_vector();
    detail::propagate(st_);
    contradiction_ = st_.contradiction;
    for (const auto& [k, s] : st_.syms) {
      if (s.full()) known_.values[k] = s.known_val;
      else if (s.lo == s.hi && s.compatible(s.lo)) known_.values[k] = s.lo;
    }
  }
  bool contradiction() const { return contradiction_; }
  std::optional<uint64_t> implied_value(Expr e) const {
    if (contradiction_) return std::nullopt;
    if (is_concrete(e)) return e->value;
    Expr r = known_.values.empty() ? e : substitute_partial(e, known_);
    if (is_concrete(r)) return r->value;
    return std::nullopt;
  }
};

// Fixpoint test used by the engine: both sets agree, symbol by symbol,
// on Forced/Free status and on forced values.
inline bool equisat_concretization(const ConstraintSet& a,
                                   const ConstraintSet& b,
                                   const std::vector<SymId>& symbols,
                                   const SolverLimits& limits = {}) {
  auto sa = concretize(a, symbols, limits);
  auto sb = concretize(b, symbols, limits);
  return sa == sb;
}

// Compact a satisfiable constraint set: propagate to a fixpoint, then
// keep only the facts and residual constraints that can still influence
// the `live` symbols. Connected components of the residual that touch no
// live symbol are independently satisfiable and are dropped, which keeps
// constraint sets from growing with session length.
inline ConstraintSet compact_constraints(const ConstraintSet& cs,
                                         const std::set<uint64_t>& live,
                                         const SolverLimits& limits = {}) {
  (void)limits;
  detail::PropState st;
  st.residual = cs.to_vector();
  detail::propagate(st);
  if (st.contradiction) return cs;  // caller holds an accepted (SAT) state

  // union-find over residual constraints' symbols
  std::map<uint64_t, uint64_t> parent;
  std::function<uint64_t(uint64_t)> find = [&](uint64_t x) {
    auto it = parent.find(x);
    if (it == parent.end() || it->second == x) return x;
    uint64_t r = find(it->second);
    parent[x] = r;
    return r;
  };
  auto unite = [&](uint64_t a, uint64_t b) {
    uint64_t ra = find(a), rb = find(b);
    parent.emplace(ra, ra);
    parent.emplace(rb, rb);
    if (ra != rb) parent[rb] = ra;
  };
  std::vector<std::set<uint64_t>> residual_syms;
  for (Expr e : st.residual) {
    std::set<uint64_t> syms;
    collect_symbols(e, syms);
    residual_syms.push_back(syms);
    uint64_t first = *syms.begin();
    parent.emplace(first, first);
    for (uint64_t s : syms) unite(first, s);
  }
  std::set<uint64_t> live_roots;
  for (uint64_t s : live) {
    if (parent.count(s)) live_roots.insert(find(s));
  }
  auto sym_live = [&](uint64_t s) {
    if (live.count(s)) return true;
    return parent.count(s) && live_roots.count(find(s)) > 0;
  };

  ConstraintSet out;
  for (const auto& [key, info] : st.syms) {
    if (!sym_live(key)) continue;
    SymId id = sym_from_key(key);
    Expr sym = mk_symbol(id, info.w);
    if (info.full() || info.lo == info.hi) {
      uint64_t v = info.full() ? info.known_val : info.lo;
      out = out.append(mk_binary(BinOp::Eq, sym, mk_concrete(info.w, v)));
      continue;
    }
    // known-bit runs
    uint64_t mask = info.known_mask & width_mask(info.w);
    for (uint8_t lo = 0; lo < info.w;) {
      if (!(mask >> lo & 1)) {
        ++lo;
        continue;
      }
      uint8_t hi = lo;
      while (hi + 1 < info.w && (mask >> (hi + 1) & 1)) ++hi;
      uint64_t val = (info.known_val >> lo) & width_mask(Width(hi - lo + 1));
      out = out.append(mk_binary(BinOp::Eq, mk_extract(sym, lo, hi),
                                 mk_concrete(Width(hi - lo + 1), val)));
      lo = uint8_t(hi + 1);
    }
    if (info.lo > 0)
      out = out.append(
          mk_binary(BinOp::Le, mk_concrete(info.w, info.lo), sym));
    if (info.hi < width_mask(info.w))
      out = out.append(
          mk_binary(BinOp::Le, sym, mk_concrete(info.w, info.hi)));
  }
  for (size_t i = 0; i < st.residual.size(); ++i) {
    bool keep = false;
    for (uint64_t s : residual_syms[i])
      if (sym_live(s) || live_roots.count(find(s))) {
        keep = true;
        break;
      }
    if (keep) out = out.append(st.residual[i]);
  }
  return out;
}

}  // namespace cbv
