#pragma once

// Symbolic interpreter for the mini-language. An ExecState is one path's
// snapshot: frames, accumulated constraints, network position. States are
// value types; clones share immutable expression nodes and the constraint
// spine.
//
// Symbols are numbered by the order of symbol-creating instructions along
// the path (sym_input, sym_bytes, prohibitive calls), so replaying the
// same path from the same root recreates identical symbol ids. The
// multipass machinery depends on this.

#include <cassert>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cbverify/ast.hpp"
#include "cbverify/registry.hpp"
#include "cbverify/solver.hpp"
#include "cbverify/trace.hpp"

namespace cbv {

struct ExecError : std::runtime_error {
  enum class Kind {
    UnknownVariable, NotABuffer, NotAScalar, SymbolicIndex, IndexOutOfBounds,
    DivisionByZeroOnConcrete, StepBudgetExceeded, MissingReturnValue,
    LengthMismatch, Internal
  };
  Kind kind;
  ExecError(Kind k, const std::string& msg)
      : std::runtime_error(msg), kind(k) {}
};

struct BufferVal {
  std::vector<Expr> bytes;  // each width 8
};

using Value = std::variant<Expr, BufferVal>;

// Immutable path of executed instruction ids; O(1) push, clone, and
// fingerprint (rolling hash maintained on push).
class PathChain {
  struct Node {
    uint32_t id;
    std::shared_ptr<const Node> prev;
    uint32_t len;
  };
  std::shared_ptr<const Node> tail_;
  uint64_t hash_ = 1469598103934665603ull;

 public:
  uint32_t size() const { return tail_ ? tail_->len : 0; }
  uint64_t fingerprint() const { return hash_; }
  void push(uint32_t id) {
    auto n = std::make_shared<Node>();
    n->id = id;
    n->prev = tail_;
    n->len = size() + 1;
    tail_ = std::move(n);
    hash_ ^= id;
    hash_ *= 1099511628211ull;
  }
  std::vector<uint32_t> materialize() const {
    std::vector<uint32_t> v;
    v.reserve(size());
    for (const Node* p = tail_.get(); p; p = p->prev.get()) v.push_back(p->id);
    std::reverse(v.begin(), v.end());
    return v;
  }
};

struct ControlEntry {
  const Block* block = nullptr;
  size_t idx = 0;
  const Instr* loop = nullptr;  // owning While, when this is a loop body
};

struct Frame {
  const FunctionDef* fn = nullptr;
  // flat map in insertion order, keyed by interned name id
  std::vector<std::pair<uint32_t, Value>> locals;
  std::vector<ControlEntry> control;
  uint32_t ret_dest = 0;  // caller-frame variable for the return value
  bool has_ret_dest = false;

  Value* find(uint32_t id) {
    for (auto& [n, v] : locals)
      if (n == id) return &v;
    return nullptr;
  }
  const Value* find(uint32_t id) const {
    for (const auto& [n, v] : locals)
      if (n == id) return &v;
    return nullptr;
  }
  void set(uint32_t id, Value v) {
    if (Value* p = find(id)) {
      *p = std::move(v);
      return;
    }
    locals.emplace_back(id, std::move(v));
  }
};

// A prohibitive call that was skipped (symbolic inputs): enough detail to
// later re-check concretizability, fire lazy generators, and render the
// residual assumption.
struct SkippedCall {
  uint32_t event = 0;  // symbol event of the call (output symbol ids)
  const ProhibitiveEntry* entry = nullptr;
  uint32_t site = 0;   // instruction id
  std::vector<std::vector<Expr>> input_bytes;  // per input, big-endian
  std::vector<Expr> output_bytes;
  bool generator_fired = false;
};

struct ExecState {
  const Program* program = nullptr;
  std::vector<Frame> frames;
  ConstraintSet cons;
  uint32_t io_index = 0;
  uint64_t steps = 0;      // instructions retired since the message root
  uint32_t sym_event = 0;  // monotone across the whole session
  uint32_t branch_count = 0;
  std::vector<SkippedCall> skipped;
  PathChain path;
  // Cached satisfying assignment for cons (symbols it does not mention
  // read as zero); lets branch feasibility skip the solver when the
  // witness already decides a side. Null when stale.
  std::shared_ptr<const Model> witness = empty_witness();

  static const std::shared_ptr<const Model>& empty_witness() {
    static const std::shared_ptr<const Model> w = std::make_shared<Model>();
    return w;
  }

  bool halted() const { return frames.empty(); }
};

struct VmLimits {
  SolverLimits solver;
  uint64_t step_budget = 1'000'000;
};

enum class InstrClass { Normal, NetSend, NetRecv, SymbolicBranch,
                        ProhibitiveCall, Halt };

struct Classified {
  InstrClass k = InstrClass::Halt;
  const Instr* instr = nullptr;
};

namespace vmdetail {

inline Frame& top(ExecState& s) {
  if (s.frames.empty())
    throw ExecError(ExecError::Kind::Internal, "no active frame");
  return s.frames.back();
}

inline const Instr* current_instr(const ExecState& s) {
  if (s.frames.empty()) return nullptr;
  const Frame& f = s.frames.back();
  if (f.control.empty()) return nullptr;
  const ControlEntry& ce = f.control.back();
  return &(*ce.block)[ce.idx];
}

inline const Value* find_var(const Frame& f, uint32_t id) {
  return f.find(id);
}

// Test and diagnostics convenience: look a variable up by its text name.
inline const Value* find_var(const Frame& f, const std::string& name) {
  return f.find(names::intern(name));
}

// Static width of an expression; 0 = unsuffixed literal (adopts context).
inline Width static_width(const Frame& f, const AExpr& e) {
  switch (e.k) {
    case AExpr::K::Lit: return e.lit_width;
    case AExpr::K::Var: {
      const Value* v = f.find(e.name_id);
      if (!v)
        throw ExecError(ExecError::Kind::UnknownVariable,
                        "unknown identifier '" + e.name + "'");
      if (std::holds_alternative<BufferVal>(*v))
        throw ExecError(ExecError::Kind::NotAScalar,
                        "buffer '" + e.name + "' used as scalar");
      return std::get<Expr>(*v)->width;
    }
    case AExpr::K::ByteIndex: return 8;
    case AExpr::K::BitRange: return Width(e.hi - e.lo + 1);
    case AExpr::K::Unary: return static_width(f, *e.a);
    case AExpr::K::Binary: {
      if (e.op == BinOp::Concat) {
        Width wa = static_width(f, *e.a);
        Width wb = static_width(f, *e.b);
        if (!wa || !wb)
          throw ExecError(ExecError::Kind::Internal,
                          "concat operands need explicit widths");
        return Width(wa + wb);
      }
      bool cmp = e.op == BinOp::Eq || e.op == BinOp::Ne || e.op == BinOp::Lt ||
                 e.op == BinOp::Le;
      Width wa = static_width(f, *e.a);
      Width wb = wa ? wa : static_width(f, *e.b);
      if (cmp) return wb ? 1 : 1;
      return wa ? wa : wb;
    }
  }
  return 0;
}

// Evaluate a scalar expression to a symbolic value. Division guards for
// symbolic divisors are collected into `guards` (divisor != 0).
inline Expr eval_scalar(const Frame& f, const AExpr& e, Width hint,
                        std::vector<Expr>* guards) {
  switch (e.k) {
    case AExpr::K::Lit: {
      Width w = e.lit_width ? e.lit_width : (hint ? hint : 32);
      return mk_concrete(w, e.lit);
    }
    case AExpr::K::Var: {
      const Value* v = f.find(e.name_id);
      if (!v)
        throw ExecError(ExecError::Kind::UnknownVariable,
                        "unknown identifier '" + e.name + "'");
      if (std::holds_alternative<BufferVal>(*v))
        throw ExecError(ExecError::Kind::NotAScalar,
                        "buffer '" + e.name + "' used as scalar");
      return std::get<Expr>(*v);
    }
    case AExpr::K::ByteIndex: {
      const Value* v = f.find(e.name_id);
      if (!v)
        throw ExecError(ExecError::Kind::UnknownVariable,
                        "unknown identifier '" + e.name + "'");
      const BufferVal* buf = std::get_if<BufferVal>(v);
      if (!buf)
        throw ExecError(ExecError::Kind::NotABuffer,
                        "'" + e.name + "' is not a buffer");
      Expr idx = eval_scalar(f, *e.a, 32, guards);
      if (!is_concrete(idx))
        throw ExecError(ExecError::Kind::SymbolicIndex,
                        "symbolic index into buffer '" + e.name + "'");
      if (idx->value >= buf->bytes.size())
        throw ExecError(ExecError::Kind::IndexOutOfBounds,
                        "index " + std::to_string(idx->value) +
                            " out of bounds for '" + e.name + "'");
      return buf->bytes[idx->value];
    }
    case AExpr::K::BitRange: {
      const Value* v = f.find(e.name_id);
      if (!v)
        throw ExecError(ExecError::Kind::UnknownVariable,
                        "unknown identifier '" + e.name + "'");
      const Expr* sc = std::get_if<Expr>(v);
      if (!sc)
        throw ExecError(ExecError::Kind::NotAScalar,
                        "bit range over buffer '" + e.name + "'");
      if (e.lo > e.hi || e.hi >= (*sc)->width)
        throw ExecError(ExecError::Kind::IndexOutOfBounds,
                        "bit range out of bounds for '" + e.name + "'");
      return mk_extract(*sc, e.lo, e.hi);
    }
    case AExpr::K::Unary:
      return mk_unary(UnOp::Not, eval_scalar(f, *e.a, hint, guards));
    case AExpr::K::Binary: {
      if (e.op == BinOp::Concat) {
        Expr a = eval_scalar(f, *e.a, 0, guards);
        Expr b = eval_scalar(f, *e.b, 0, guards);
        return mk_concat(a, b);
      }
      Width wa = static_width(f, *e.a);
      Width wb = static_width(f, *e.b);
      Width w = wa ? wa : wb;
      if (!w) w = hint ? hint : 32;
      Expr a = eval_scalar(f, *e.a, w, guards);
      Expr b = eval_scalar(f, *e.b, w, guards);
      if (e.op == BinOp::Mod) {
        if (is_concrete(b) && b->value == 0)
          throw ExecError(ExecError::Kind::DivisionByZeroOnConcrete,
                          "modulo by zero");
        if (!is_concrete(b) && guards)
          guards->push_back(
              mk_binary(BinOp::Ne, b, mk_concrete(b->width, 0)));
      }
      return mk_binary(e.op, a, b);
    }
  }
  throw ExecError(ExecError::Kind::Internal, "unreachable expression kind");
}

inline std::vector<Expr> scalar_to_bytes(Expr e) {
  if (e->width % 8)
    throw ExecError(ExecError::Kind::LengthMismatch,
                    "value width is not a whole number of bytes");
  size_t n = e->width / 8;
  std::vector<Expr> out(n);
  for (size_t j = 0; j < n; ++j) {
    uint8_t lo = uint8_t(e->width - 8 * (j + 1));
    out[j] = mk_extract(e, lo, uint8_t(lo + 7));  // big-endian
  }
  return out;
}

inline Expr bytes_to_scalar(const std::vector<Expr>& bytes) {
  Expr acc = nullptr;
  for (Expr b : bytes) acc = acc ? mk_concat(acc, b) : b;
  return acc;
}

// Pop exhausted blocks/frames so the state either halts or points at a
// real instruction. Loop bodies return control to their While without
// advancing the enclosing index.
inline void normalize(ExecState& s) {
  while (!s.frames.empty()) {
    Frame& f = s.frames.back();
    bool progressed = false;
    while (!f.control.empty()) {
      ControlEntry& ce = f.control.back();
      if (ce.idx < ce.block->size()) return;  // at a real instruction
      bool was_loop = ce.loop != nullptr;
      f.control.pop_back();
      if (was_loop) {
        // enclosing entry still points at the While; re-classify there
        if (!f.control.empty() &&
            f.control.back().idx < f.control.back().block->size())
          return;
      }
      progressed = true;
    }
    (void)progressed;
    // function body finished: implicit return without value; the
    // destination stays unbound and later use raises UnknownVariable
    s.frames.pop_back();
  }
}

inline void advance(ExecState& s) {
  Frame& f = top(s);
  f.control.back().idx++;
  normalize(s);
}

inline void retire(ExecState& s, const Instr& i, const VmLimits& limits) {
  s.steps++;
  if (s.steps > limits.step_budget)
    throw ExecError(ExecError::Kind::StepBudgetExceeded,
                    "per-path step budget exhausted");
  s.path.push(i.id);
}

inline void bind_var(ExecState& s, uint32_t name_id, Value v) {
  top(s).set(name_id, std::move(v));
}

inline uint32_t fresh_event(ExecState& s) { return s.sym_event++; }

// Append a constraint, keeping the cached witness when it still holds.
inline void append_constraint(ExecState& s, Expr c) {
  s.cons = s.cons.append(c);
  if (s.witness && !is_true(c)) {
    if (eval_or_zero(c, *s.witness) != 1) s.witness.reset();
  }
}

}  // namespace vmdetail

// Initial state at the client entry point.
inline ExecState initial_state(const Program& p) {
  const FunctionDef* entry = p.find(p.entry);
  if (!entry)
    throw ExecError(ExecError::Kind::Internal, "entry function missing");
  ExecState s;
  s.program = &p;
  Frame f;
  f.fn = entry;
  f.control.push_back(ControlEntry{&entry->body, 0, nullptr});
  s.frames.push_back(std::move(f));
  vmdetail::normalize(s);
  return s;
}

// Classification of the next instruction; pure on normalized states.
inline Classified classify(const ExecState& s, const ProhibitiveRegistry& reg) {
  const Instr* i = vmdetail::current_instr(s);
  if (!i) return Classified{InstrClass::Halt, nullptr};
  switch (i->k) {
    case Instr::K::Send: return Classified{InstrClass::NetSend, i};
    case Instr::K::Recv: return Classified{InstrClass::NetRecv, i};
    case Instr::K::If:
    case Instr::K::While: {
      // a branch is symbolic only if the condition still contains a
      // symbol after simplification
      const Frame& f = s.frames.back();
      Expr cond = vmdetail::eval_scalar(f, *i->expr, 32, nullptr);
      return Classified{cond->has_syms ? InstrClass::SymbolicBranch
                                       : InstrClass::Normal,
                        i};
    }
    case Instr::K::LetCall:
    case Instr::K::Call: {
      const std::string& callee =
          i->k == Instr::K::LetCall ? i->callee : i->callee;
      if (reg.has(callee)) return Classified{InstrClass::ProhibitiveCall, i};
      return Classified{InstrClass::Normal, i};
    }
    default: return Classified{InstrClass::Normal, i};
  }
}

// One normal instruction. Division guards raised along the way are
// appended to cons; the caller is responsible for feasibility checks if
// it wants eager pruning (the engine checks at branches and sends).
inline void exec_step(ExecState& s, const ProhibitiveRegistry& reg,
                      const VmLimits& limits) {
  using namespace vmdetail;
  Classified c = classify(s, reg);
  if (c.k != InstrClass::Normal)
    throw ExecError(ExecError::Kind::Internal,
                    "exec_step on a non-normal instruction");
  const Instr& i = *c.instr;
  Frame& f = top(s);
  std::vector<Expr> guards;
  switch (i.k) {
    case Instr::K::Let: {
      if (i.type && i.type->is_buf()) {
        BufferVal b;
        b.bytes.assign(i.type->buf_len, mk_concrete(8, 0));
        retire(s, i, limits);
        bind_var(s, i.name_id, std::move(b));
        advance(s);
        break;
      }
      Width hint = i.type ? i.type->width() : 0;
      Expr v = eval_scalar(f, *i.expr, hint ? hint : 32, &guards);
      retire(s, i, limits);
      bind_var(s, i.name_id, v);
      advance(s);
      break;
    }
    case Instr::K::LetCall:
    case Instr::K::Call: {
      const std::string& callee = i.callee;
      bool has_dest = i.k == Instr::K::LetCall;
      if (callee == "sym_input" || callee == "sym_bytes") {
        uint32_t ev = fresh_event(s);
        retire(s, i, limits);
        if (callee == "sym_input") {
          Width w = Width(i.args[0]->lit);
          Expr sym = mk_symbol(SymId{ev, 0}, w);
          if (has_dest) {
            set_sym_label(SymId{ev, 0}, i.name);
            bind_var(s, i.name_id, sym);
          }
        } else {
          uint32_t n = uint32_t(i.args[0]->lit);
          BufferVal b;
          for (uint32_t j = 0; j < n; ++j) {
            SymId id{ev, uint16_t(j)};
            if (has_dest)
              set_sym_label(id, i.name + "[" + std::to_string(j) + "]");
            b.bytes.push_back(mk_symbol(id, 8));
          }
          if (has_dest) bind_var(s, i.name_id, std::move(b));
        }
        advance(s);
        break;
      }
      const FunctionDef* fn = s.program->find(callee);
      if (!fn)
        throw ExecError(ExecError::Kind::UnknownVariable,
                        "call to unknown function '" + callee + "'");
      // evaluate arguments in the caller frame
      Frame callee_frame;
      callee_frame.fn = fn;
      for (size_t k = 0; k < fn->params.size(); ++k) {
        const auto& [pname, ptype] = fn->params[k];
        uint32_t pid = fn->param_ids[k];
        const AExpr& arg = *i.args[k];
        if (ptype.is_buf()) {
          const Value* v =
              arg.k == AExpr::K::Var ? f.find(arg.name_id) : nullptr;
          if (!v || !std::holds_alternative<BufferVal>(*v))
            throw ExecError(ExecError::Kind::NotABuffer,
                            "argument '" + pname + "' must be a buffer");
          callee_frame.set(pid, *v);  // by value
        } else {
          callee_frame.set(pid, eval_scalar(f, arg, ptype.width(), &guards));
        }
      }
      callee_frame.has_ret_dest = has_dest;
      callee_frame.ret_dest = i.name_id;
      callee_frame.control.push_back(ControlEntry{&fn->body, 0, nullptr});
      retire(s, i, limits);
      f.control.back().idx++;  // caller resumes after the call
      s.frames.push_back(std::move(callee_frame));
      normalize(s);
      break;
    }
    case Instr::K::Assign: {
      if (i.index) {
        Expr idx = eval_scalar(f, *i.index, 32, &guards);
        if (!is_concrete(idx))
          throw ExecError(ExecError::Kind::SymbolicIndex,
                          "symbolic index into buffer '" + i.name + "'");
        Value* v = f.find(i.name_id);
        BufferVal* buf = v ? std::get_if<BufferVal>(v) : nullptr;
        if (!buf)
          throw ExecError(ExecError::Kind::NotABuffer,
                          "'" + i.name + "' is not a buffer");
        if (idx->value >= buf->bytes.size())
          throw ExecError(ExecError::Kind::IndexOutOfBounds,
                          "index " + std::to_string(idx->value) +
                              " out of bounds for '" + i.name + "'");
        Expr val = eval_scalar(f, *i.expr, 8, &guards);
        retire(s, i, limits);
        buf->bytes[idx->value] = val;
        advance(s);
        break;
      }
      Value* slot = f.find(i.name_id);
      if (!slot)
        throw ExecError(ExecError::Kind::UnknownVariable,
                        "unknown identifier '" + i.name + "'");
      Expr* cur = std::get_if<Expr>(slot);
      if (!cur)
        throw ExecError(ExecError::Kind::NotAScalar,
                        "cannot assign a whole buffer");
      Expr val = eval_scalar(f, *i.expr, (*cur)->width, &guards);
      retire(s, i, limits);
      *slot = val;
      advance(s);
      break;
    }
    case Instr::K::If: {
      Expr cond = eval_scalar(f, *i.expr, 32, &guards);
      if (cond->has_syms)
        throw ExecError(ExecError::Kind::Internal,
                        "symbolic branch reached exec_step");
      retire(s, i, limits);
      bool taken = cond->value != 0;
      f.control.back().idx++;
      const Block* blk = taken ? &i.then_block : &i.else_block;
      if (!blk->empty())
        f.control.push_back(ControlEntry{blk, 0, nullptr});
      normalize(s);
      break;
    }
    case Instr::K::While: {
      Expr cond = eval_scalar(f, *i.expr, 32, &guards);
      if (cond->has_syms)
        throw ExecError(ExecError::Kind::Internal,
                        "symbolic branch reached exec_step");
      retire(s, i, limits);
      if (cond->value != 0) {
        f.control.push_back(ControlEntry{&i.then_block, 0, &i});
        normalize(s);
      } else {
        advance(s);
      }
      break;
    }
    case Instr::K::Return: {
      std::optional<Expr> val;
      if (i.expr) val = eval_scalar(f, *i.expr, 32, &guards);
      retire(s, i, limits);
      bool expects = f.has_ret_dest;
      uint32_t dest = f.ret_dest;
      s.frames.pop_back();
      if (expects) {
        if (!val)
          throw ExecError(ExecError::Kind::MissingReturnValue,
                          "function returned no value");
        if (s.frames.empty())
          throw ExecError(ExecError::Kind::Internal, "return from entry");
        bind_var(s, dest, *val);
      }
      normalize(s);
      break;
    }
    default:
      throw ExecError(ExecError::Kind::Internal, "unhandled normal instr");
  }
  for (Expr g : guards) vmdetail::append_constraint(s, g);
}

// Symbolic branch: two successors with the condition pinned false/true.
// Infeasible sides come back as nullopt.
struct ForkResult {
  std::optional<ExecState> on_false;
  std::optional<ExecState> on_true;
};

inline ForkResult fork_branch(const ExecState& s, const ProhibitiveRegistry& reg,
                              const VmLimits& limits) {
  using namespace vmdetail;
  Classified c = classify(s, reg);
  if (c.k != InstrClass::SymbolicBranch)
    throw ExecError(ExecError::Kind::Internal, "fork on non-branch");
  const Instr& i = *c.instr;
  std::vector<Expr> guards;
  Expr cond = eval_scalar(s.frames.back(), *i.expr, 32, &guards);
  Expr t = mk_truth(cond);

  // the parent witness satisfies exactly one side (when it still covers
  // the guards), so at most one solver call is needed per fork
  int witness_side = -1;
  if (s.witness) {
    bool guards_ok = true;
    for (Expr g : guards)
      if (eval_or_zero(g, *s.witness) != 1) {
        guards_ok = false;
        break;
      }
    if (guards_ok)
      witness_side = eval_or_zero(t, *s.witness) == 1 ? 1 : 0;
  }

  ForkResult out;
  for (int side = 0; side < 2; ++side) {
    ExecState child = s;
    for (Expr g : guards) child.cons = child.cons.append(g);
    child.cons = child.cons.append(side ? t : mk_not_truth(cond));
    if (witness_side != side) {
      SatOutcome sat = check_sat(child.cons, limits.solver);
      if (!sat.sat) continue;
      child.witness = std::make_shared<const Model>(std::move(sat.model));
    }
    Frame& f = top(child);
    retire(child, i, limits);
    child.branch_count++;
    if (i.k == Instr::K::If) {
      f.control.back().idx++;
      const Block* blk = side ? &i.then_block : &i.else_block;
      if (!blk->empty()) f.control.push_back(ControlEntry{blk, 0, nullptr});
    } else {  // While
      if (side) {
        f.control.push_back(ControlEntry{&i.then_block, 0, &i});
      } else {
        f.control.back().idx++;
      }
    }
    normalize(child);
    if (side) out.on_true = std::move(child);
    else out.on_false = std::move(child);
  }
  return out;
}

// Serialize the arguments of the send the state is stopped at: fixed
// width big-endian per declared widths, buffers expanded, concatenated in
// argument order.
inline std::vector<Expr> send_wire_bytes(const ExecState& s,
                                         std::vector<Expr>* guards) {
  using namespace vmdetail;
  const Instr* i = current_instr(const_cast<ExecState&>(s));
  if (!i || i->k != Instr::K::Send)
    throw ExecError(ExecError::Kind::Internal, "state is not at a send");
  const Frame& f = s.frames.back();
  std::vector<Expr> bytes;
  for (const auto& arg : i->args) {
    if (arg->k == AExpr::K::Var) {
      const Value* v = f.find(arg->name_id);
      if (v && std::holds_alternative<BufferVal>(*v)) {
        const auto& b = std::get<BufferVal>(*v).bytes;
        bytes.insert(bytes.end(), b.begin(), b.end());
        continue;
      }
    }
    Expr e = eval_scalar(f, *arg, 0, guards);
    auto eb = scalar_to_bytes(e);
    bytes.insert(bytes.end(), eb.begin(), eb.end());
  }
  return bytes;
}

struct Contradiction {
  enum class Reason { Direction, Length, Content, Generator };
  Reason reason;
  std::string detail;
};

using ReconcileResult = std::variant<ConstraintSet, Contradiction>;

// Reconcile the send at the head of the state with an observed message:
// the serialized arguments are equated byte-wise with the payload.
inline ReconcileResult reconcile_send(const ExecState& s, const Message& m,
                                      const VmLimits& limits) {
  if (m.dir != Dir::C2S)
    return Contradiction{Contradiction::Reason::Direction,
                         "client sends, trace has a server message"};
  std::vector<Expr> guards;
  std::vector<Expr> bytes = send_wire_bytes(s, &guards);
  if (bytes.size() != m.payload.size())
    return Contradiction{
        Contradiction::Reason::Length,
        "wire length " + std::to_string(bytes.size()) + " vs message " +
            std::to_string(m.payload.size())};
  ConstraintSet cs = s.cons;
  for (Expr g : guards) cs = cs.append(g);
  for (size_t j = 0; j < bytes.size(); ++j) {
    Expr eq = mk_binary(BinOp::Eq, bytes[j], mk_concrete(8, m.payload[j]));
    if (is_false(eq))
      return Contradiction{Contradiction::Reason::Content,
                           "byte " + std::to_string(j) + " cannot match"};
    cs = cs.append(eq);
  }
  SatOutcome sat = check_sat(cs, limits.solver);
  if (!sat.sat)
    return Contradiction{Contradiction::Reason::Content,
                         "constraints contradict the message"};
  return cs;
}

// Retire the send with its reconciled constraint set.
inline void retire_send(ExecState& s, ConstraintSet reconciled,
                        const VmLimits& limits) {
  using namespace vmdetail;
  const Instr* i = current_instr(s);
  retire(s, *i, limits);
  s.cons = std::move(reconciled);
  s.witness.reset();  // re-primed by the next feasibility solve
  s.io_index++;
  advance(s);
}

// Size of the recv destination buffer the state is stopped at.
inline size_t recv_dest_capacity(const ExecState& s) {
  const Instr* i = vmdetail::current_instr(s);
  if (!i || i->k != Instr::K::Recv)
    throw ExecError(ExecError::Kind::Internal, "state is not at a recv");
  const Value* v = s.frames.back().find(i->name_id);
  const BufferVal* buf = v ? std::get_if<BufferVal>(v) : nullptr;
  if (!buf)
    throw ExecError(ExecError::Kind::NotABuffer,
                    "recv destination '" + i->name + "' is not a buffer");
  return buf->bytes.size();
}

// Bind the received message into the destination buffer and retire the
// recv. Server-to-client content is fully known to the verifier.
inline std::optional<Contradiction> apply_recv(ExecState& s, const Message& m,
                                               const VmLimits& limits) {
  using namespace vmdetail;
  const Instr* i = current_instr(s);
  if (!i || i->k != Instr::K::Recv)
    throw ExecError(ExecError::Kind::Internal, "state is not at a recv");
  if (m.dir != Dir::S2C)
    return Contradiction{Contradiction::Reason::Direction,
                         "client receives, trace has a client message"};
  Frame& f = top(s);
  Value* slot = f.find(i->name_id);
  BufferVal* buf = slot ? std::get_if<BufferVal>(slot) : nullptr;
  if (!buf)
    throw ExecError(ExecError::Kind::NotABuffer,
                    "recv destination '" + i->name + "' is not a buffer");
  if (m.payload.size() > buf->bytes.size())
    return Contradiction{Contradiction::Reason::Length,
                         "message overflows destination buffer"};
  retire(s, *i, limits);
  for (size_t j = 0; j < m.payload.size(); ++j)
    buf->bytes[j] = mk_concrete(8, m.payload[j]);
  s.io_index++;
  advance(s);
  return std::nullopt;
}

// ---------------------------------------------------------------------
// Prohibitive calls.

struct RegistryRuntime {
  const ProhibitiveRegistry* defs = nullptr;
  std::map<std::string, Bytes> injected;  // metadata key values, resolved

  const Bytes* injected_value(const std::string& fn) const {
    const InjectionPoint* ip = defs->injection_for(fn);
    if (!ip) return nullptr;
    auto it = injected.find(ip->metadata_key);
    return it == injected.end() ? nullptr : &it->second;
  }
};

// Exact forced-values check for a list of byte expressions under a
// constraint set: all bytes forced, or nullopt.
inline std::optional<Bytes> forced_bytes(const ConstraintSet& cs,
                                         const std::vector<Expr>& bytes,
                                         const SolverLimits& limits) {
  bool all_concrete = true;
  for (Expr e : bytes) all_concrete &= is_concrete(e);
  if (all_concrete) {
    Bytes out;
    for (Expr e : bytes) out.push_back(uint8_t(e->value));
    return out;
  }
  // propagation pins most bytes without any search
  PropagatedFacts facts(cs);
  if (facts.contradiction()) return std::nullopt;
  Bytes out(bytes.size());
  std::vector<size_t> undecided;
  for (size_t j = 0; j < bytes.size(); ++j) {
    auto v = facts.implied_value(bytes[j]);
    if (v) out[j] = uint8_t(*v);
    else undecided.push_back(j);
  }
  if (undecided.empty()) return out;
  // exact fallback: witness value plus a definitive UNSAT test
  SatOutcome sat = check_sat(cs, limits);
  if (!sat.sat) return std::nullopt;
  Model witness = sat.model;
  for (size_t j : undecided) {
    Expr e = bytes[j];
    uint64_t v = eval_or_zero(e, witness);
    Expr ne = mk_binary(BinOp::Ne, e, mk_concrete(8, uint8_t(v)));
    if (is_false(ne)) {
      out[j] = uint8_t(v);
      continue;
    }
    SatOutcome alt = check_sat(cs.append(ne), limits);
    if (alt.sat) return std::nullopt;
    out[j] = uint8_t(v);
  }
  return out;
}

struct ProhibStepInfo {
  enum class Outcome { ExecutedConcretely, Injected, Skipped };
  Outcome outcome = Outcome::Skipped;
  std::string function;
  uint32_t event = 0;
  std::vector<Bytes> concrete_inputs;  // when executed
  Bytes concrete_output;               // when executed or injected
};

// Step over a prohibitive call: execute concretely when all input bytes
// are concrete under cons /\ saved (recording the input equalities that
// justify it), substitute the injected secret when configured, otherwise
// produce fresh symbolic outputs of the declared size and record the
// skip.
inline ProhibStepInfo exec_step_prohibitive(ExecState& s,
                                            const ConstraintSet& saved,
                                            const RegistryRuntime& rt,
                                            const VmLimits& limits) {
  using namespace vmdetail;
  const Instr* i = current_instr(s);
  if (!i || (i->k != Instr::K::LetCall && i->k != Instr::K::Call))
    throw ExecError(ExecError::Kind::Internal, "state is not at a call");
  const ProhibitiveEntry* entry = rt.defs->find(i->callee);
  if (!entry)
    throw ExecError(ExecError::Kind::Internal, "call is not prohibitive");
  Frame& f = top(s);
  bool has_dest = i->k == Instr::K::LetCall;

  if (i->args.size() != entry->inputs.size())
    throw ExecError(ExecError::Kind::LengthMismatch,
                    "'" + entry->name + "' arity mismatch");

  // evaluate arguments against the declared layout
  std::vector<Expr> guards;
  std::vector<std::vector<Expr>> inputs;
  std::vector<size_t> in_lens;
  for (size_t k = 0; k < entry->inputs.size(); ++k) {
    const InputSpec& spec = entry->inputs[k];
    const AExpr& arg = *i->args[k];
    std::vector<Expr> bytes;
    const Value* v =
        arg.k == AExpr::K::Var ? f.find(arg.name_id) : nullptr;
    if (v && std::holds_alternative<BufferVal>(*v)) {
      bytes = std::get<BufferVal>(*v).bytes;
    } else {
      Expr e = eval_scalar(f, arg, spec.k == InputSpec::K::Scalar ? spec.width : 0,
                           &guards);
      bytes = scalar_to_bytes(e);
    }
    if (spec.k == InputSpec::K::Scalar && bytes.size() != spec.width / 8u)
      throw ExecError(ExecError::Kind::LengthMismatch,
                      "'" + entry->name + "' argument " + std::to_string(k) +
                          " layout mismatch");
    if (spec.k == InputSpec::K::FixedBuf && bytes.size() != spec.len)
      throw ExecError(ExecError::Kind::LengthMismatch,
                      "'" + entry->name + "' argument " + std::to_string(k) +
                          " layout mismatch");
    in_lens.push_back(bytes.size());
    inputs.push_back(std::move(bytes));
  }
  for (Expr g : guards) vmdetail::append_constraint(s, g);

  size_t out_len = entry->output.byte_len(in_lens);
  uint32_t event = fresh_event(s);

  ProhibStepInfo info;
  info.function = entry->name;
  info.event = event;

  auto bind_output = [&](const std::vector<Expr>& out_bytes) {
    if (!has_dest) return;
    if (entry->output.k == OutputSpec::K::Scalar) {
      bind_var(s, i->name_id, bytes_to_scalar(out_bytes));
    } else {
      BufferVal b;
      b.bytes = out_bytes;
      bind_var(s, i->name_id, std::move(b));
    }
  };

  // injected session secret replaces the computation outright
  if (const Bytes* inj = rt.injected_value(entry->name)) {
    if (inj->size() != out_len)
      throw ExecError(ExecError::Kind::LengthMismatch,
                      "injected value for '" + entry->name +
                          "' has the wrong length");
    std::vector<Expr> out_bytes;
    for (uint8_t b : *inj) out_bytes.push_back(mk_concrete(8, b));
    retire(s, *i, limits);
    bind_output(out_bytes);
    advance(s);
    info.outcome = ProhibStepInfo::Outcome::Injected;
    info.concrete_output = *inj;
    return info;
  }

  // concretizable under cons /\ saved?
  ConstraintSet joint = s.cons.append_all(saved.to_vector());
  std::vector<std::optional<Bytes>> concrete_in(inputs.size());
  bool all_forced = true;
  for (size_t k = 0; k < inputs.size() && all_forced; ++k) {
    try {
      concrete_in[k] = forced_bytes(joint, inputs[k], limits.solver);
    } catch (const BudgetExceededError&) {
      concrete_in[k] = std::nullopt;  // skipping is always sound
    }
    all_forced &= concrete_in[k].has_value();
  }

  if (all_forced) {
    std::vector<Bytes> in_vals;
    for (auto& ob : concrete_in) in_vals.push_back(*ob);
    Bytes out = entry->impl(in_vals);
    if (out.size() != out_len)
      throw ExecError(ExecError::Kind::LengthMismatch,
                      "'" + entry->name + "' output length mismatch");
    // record the input equalities that justify the concrete run; if they
    // contradict this path's own constraints the path dies downstream
    for (size_t k = 0; k < inputs.size(); ++k)
      for (size_t j = 0; j < inputs[k].size(); ++j)
        if (!is_concrete(inputs[k][j]))
          vmdetail::append_constraint(
              s, mk_binary(BinOp::Eq, inputs[k][j],
                           mk_concrete(8, (*concrete_in[k])[j])));
    std::vector<Expr> out_bytes;
    for (uint8_t b : out) out_bytes.push_back(mk_concrete(8, b));
    retire(s, *i, limits);
    bind_output(out_bytes);
    advance(s);
    info.outcome = ProhibStepInfo::Outcome::ExecutedConcretely;
    info.concrete_inputs = std::move(in_vals);
    info.concrete_output = std::move(out);
    return info;
  }

  // skip: fresh unconstrained outputs of the declared size
  std::vector<Expr> out_bytes;
  if (entry->output.k == OutputSpec::K::Scalar) {
    SymId id{event, 0};
    set_sym_label(id, has_dest ? i->name : entry->name + ".out");
    Expr sym = mk_symbol(id, entry->output.width);
    out_bytes = scalar_to_bytes(sym);
  } else {
    for (size_t j = 0; j < out_len; ++j) {
      SymId id{event, uint16_t(j)};
      set_sym_label(id, (has_dest ? i->name : entry->name + ".out") + "[" +
                            std::to_string(j) + "]");
      out_bytes.push_back(mk_symbol(id, 8));
    }
  }
  SkippedCall sc;
  sc.event = event;
  sc.entry = entry;
  sc.site = i->id;
  sc.input_bytes = inputs;
  sc.output_bytes = out_bytes;
  retire(s, *i, limits);
  bind_output(out_bytes);
  s.skipped.push_back(std::move(sc));
  advance(s);
  info.outcome = ProhibStepInfo::Outcome::Skipped;
  return info;
}

// ---------------------------------------------------------------------
// Lazy constraint generators: for each skipped call whose trigger subset
// is forced under `cs`, append the generated equalities. Returns the
// augmented set or a Contradiction when a generated value conflicts.
struct GeneratorOutcome {
  ConstraintSet cons;
  bool contradiction = false;
  std::string detail;
  std::vector<uint32_t> fired_events;
};

inline GeneratorOutcome fire_lazy_generators(std::vector<SkippedCall>& skipped,
                                             const ConstraintSet& cs,
                                             const SolverLimits& limits) {
  GeneratorOutcome out;
  out.cons = cs;
  for (SkippedCall& sc : skipped) {
    if (sc.generator_fired || !sc.entry->lazy) continue;
    const LazyGenerator& g = *sc.entry->lazy;
    std::vector<std::optional<Bytes>> trig_in(sc.input_bytes.size());
    bool ok = true;
    try {
      for (size_t k : g.trigger_inputs) {
        trig_in[k] = forced_bytes(out.cons, sc.input_bytes[k], limits);
        ok &= trig_in[k].has_value();
      }
      std::optional<Bytes> trig_out;
      if (ok && g.trigger_output) {
        trig_out = forced_bytes(out.cons, sc.output_bytes, limits);
        ok &= trig_out.has_value();
      }
      if (!ok) continue;
      auto products = g.produce(trig_in, trig_out);
      ConstraintSet augmented = out.cons;
      for (const auto& [target, bytes] : products) {
        const auto& exprs = sc.input_bytes.at(target);
        if (exprs.size() != bytes.size()) {
          out.contradiction = true;
          out.detail = "generator product length mismatch";
          return out;
        }
        for (size_t j = 0; j < bytes.size(); ++j) {
          Expr eq = mk_binary(BinOp::Eq, exprs[j], mk_concrete(8, bytes[j]));
          if (is_false(eq)) {
            out.contradiction = true;
            out.detail = "generated value conflicts with path constraints";
            return out;
          }
          augmented = augmented.append(eq);
        }
      }
      SatOutcome sat = check_sat(augmented, limits);
      if (!sat.sat) {
        out.contradiction = true;
        out.detail = "generated constraints are unsatisfiable";
        return out;
      }
      out.cons = augmented;
      sc.generator_fired = true;
      out.fired_events.push_back(sc.event);
    } catch (const BudgetExceededError&) {
      continue;  // cannot decide the trigger now; try again next message
    }
  }
  return out;
}

// Symbols still reachable from the state: frame values and the
// input/output expressions of skipped prohibitive calls. Everything else
// in the constraint set is history.
inline std::set<uint64_t> collect_live_symbols(const ExecState& s) {
  std::set<uint64_t> live;
  for (const Frame& f : s.frames) {
    for (const auto& [name, v] : f.locals) {
      if (const Expr* e = std::get_if<Expr>(&v)) {
        collect_symbols(*e, live);
      } else {
        for (Expr b : std::get<BufferVal>(v).bytes) collect_symbols(b, live);
      }
    }
  }
  for (const SkippedCall& sc : s.skipped) {
    for (const auto& in : sc.input_bytes)
      for (Expr e : in) collect_symbols(e, live);
    for (Expr e : sc.output_bytes) collect_symbols(e, live);
  }
  return live;
}

}  // namespace cbv
