#pragma once

// Static checks for parsed programs. check_program is deterministic and
// side-effect free; diagnostics are the return value, not exceptions.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "cbverify/ast.hpp"
#include "cbverify/registry.hpp"

namespace cbv {

struct Diagnostic {
  std::string code;     // stable identifier, e.g. "unresolved-call"
  std::string message;
  SrcPos pos;
};

namespace checkdetail {

struct Checker {
  const Program& prog;
  const ProhibitiveRegistry* registry;
  std::vector<Diagnostic>& out;

  void diag(const std::string& code, const std::string& msg, SrcPos p) {
    out.push_back(Diagnostic{code, msg, p});
  }

  // Width of a scalar expression; 0 when the expression is an unsuffixed
  // literal (adopts context), 0xFF on error (already reported).
  static constexpr Width kErr = 0xFF;

  struct Env {
    std::map<std::string, TypeSpec> vars;
  };

  Width expr_width(const AExpr& e, Env& env, Width hint) {
    switch (e.k) {
      case AExpr::K::Lit: {
        Width w = e.lit_width ? e.lit_width : hint;
        if (w && w != kErr && (e.lit & ~width_mask(w))) {
          diag("literal-width", "literal does not fit in u" + std::to_string(w),
               e.pos);
          return kErr;
        }
        return w;  // may be 0: unsuffixed, takes context width
      }
      case AExpr::K::Var: {
        auto it = env.vars.find(e.name);
        if (it == env.vars.end()) {
          diag("unknown-identifier", "unknown identifier '" + e.name + "'",
               e.pos);
          return kErr;
        }
        if (it->second.is_buf()) {
          diag("buffer-in-scalar",
               "buffer '" + e.name + "' used where a scalar is required",
               e.pos);
          return kErr;
        }
        return it->second.width();
      }
      case AExpr::K::ByteIndex: {
        auto it = env.vars.find(e.name);
        if (it == env.vars.end()) {
          diag("unknown-identifier", "unknown identifier '" + e.name + "'",
               e.pos);
          return kErr;
        }
        if (!it->second.is_buf()) {
          diag("bad-index", "'" + e.name + "' is not a buffer", e.pos);
          return kErr;
        }
        Width iw = expr_width(*e.a, env, 32);
        (void)iw;
        return 8;
      }
      case AExpr::K::BitRange: {
        auto it = env.vars.find(e.name);
        if (it == env.vars.end()) {
          diag("unknown-identifier", "unknown identifier '" + e.name + "'",
               e.pos);
          return kErr;
        }
        if (it->second.is_buf()) {
          diag("bad-index", "bit range over buffer '" + e.name + "'", e.pos);
          return kErr;
        }
        if (e.lo > e.hi || e.hi >= it->second.width()) {
          diag("bad-range", "bit range out of bounds for '" + e.name + "'",
               e.pos);
          return kErr;
        }
        return Width(e.hi - e.lo + 1);
      }
      case AExpr::K::Unary:
        return expr_width(*e.a, env, hint);
      case AExpr::K::Binary: {
        if (e.op == BinOp::Concat) {
          Width wa = expr_width(*e.a, env, 0);
          Width wb = expr_width(*e.b, env, 0);
          if (wa == kErr || wb == kErr) return kErr;
          if (wa == 0 || wb == 0) {
            diag("width-ambiguous", "concat operands need explicit widths",
                 e.pos);
            return kErr;
          }
          if (wa + wb > 64) {
            diag("width-overflow", "concat wider than 64 bits", e.pos);
            return kErr;
          }
          return Width(wa + wb);
        }
        Width wa = expr_width(*e.a, env, 0);
        Width wb = expr_width(*e.b, env, 0);
        if (wa == kErr || wb == kErr) return kErr;
        if (wa == 0 && wb == 0) {
          wa = wb = hint ? hint : 32;
        } else if (wa == 0) {
          wa = wb;
          (void)expr_width(*e.a, env, wb);  // re-check literal fits
        } else if (wb == 0) {
          wb = wa;
          (void)expr_width(*e.b, env, wa);
        }
        if (wa != wb) {
          diag("width-mismatch",
               "operand widths differ (u" + std::to_string(wa) + " vs u" +
                   std::to_string(wb) + ")",
               e.pos);
          return kErr;
        }
        bool cmp = e.op == BinOp::Eq || e.op == BinOp::Ne ||
                   e.op == BinOp::Lt || e.op == BinOp::Le;
        return cmp ? 1 : wa;
      }
    }
    return kErr;
  }

  // Resolved type of a call's destination, if statically known.
  std::optional<TypeSpec> callee_result(const Instr& call, Env& env) {
    const std::string& name = call.callee;
    if (name == "sym_input") {
      if (call.args.size() != 1 || call.args[0]->k != AExpr::K::Lit) {
        diag("arity", "sym_input takes one literal width", call.pos);
        return std::nullopt;
      }
      uint64_t w = call.args[0]->lit;
      if (w != 8 && w != 16 && w != 32) {
        diag("bad-width", "sym_input width must be 8, 16 or 32", call.pos);
        return std::nullopt;
      }
      return TypeSpec{w == 8 ? BaseType::U8 : w == 16 ? BaseType::U16
                                                      : BaseType::U32, 0};
    }
    if (name == "sym_bytes") {
      if (call.args.size() != 1 || call.args[0]->k != AExpr::K::Lit) {
        diag("arity", "sym_bytes takes one literal length", call.pos);
        return std::nullopt;
      }
      if (call.args[0]->lit == 0) {
        diag("buffer-size", "sym_bytes length must be positive", call.pos);
        return std::nullopt;
      }
      return TypeSpec{BaseType::Buf, uint32_t(call.args[0]->lit)};
    }
    if (const FunctionDef* f = prog.find(name)) {
      if (call.args.size() != f->params.size()) {
        diag("arity", "call to '" + name + "' expects " +
                          std::to_string(f->params.size()) + " arguments",
             call.pos);
      } else {
        for (size_t i = 0; i < call.args.size(); ++i) {
          const TypeSpec& pt = f->params[i].second;
          if (pt.is_buf()) {
            const AExpr& a = *call.args[i];
            if (a.k != AExpr::K::Var || !env.vars.count(a.name) ||
                !env.vars[a.name].is_buf() ||
                env.vars[a.name].buf_len != pt.buf_len)
              diag("arg-type", "argument " + std::to_string(i) +
                                   " must be buf[" +
                                   std::to_string(pt.buf_len) + "]",
                   a.pos);
          } else {
            Width w = expr_width(*call.args[i], env, pt.width());
            if (w != kErr && w != 0 && w != pt.width())
              diag("width-mismatch",
                   "argument " + std::to_string(i) + " width", call.args[i]->pos);
          }
        }
      }
      return std::nullopt;  // user function result width is not declared
    }
    if (registry && registry->find(name)) {
      const ProhibitiveEntry* e = registry->find(name);
      if (call.args.size() != e->inputs.size()) {
        diag("arity", "call to '" + name + "' expects " +
                          std::to_string(e->inputs.size()) + " arguments",
             call.pos);
        return std::nullopt;
      }
      std::vector<size_t> lens;
      for (size_t i = 0; i < call.args.size(); ++i) {
        const InputSpec& spec = e->inputs[i];
        const AExpr& a = *call.args[i];
        bool is_buf_arg = a.k == AExpr::K::Var && env.vars.count(a.name) &&
                          env.vars[a.name].is_buf();
        if (spec.k == InputSpec::K::Scalar) {
          if (is_buf_arg) {
            diag("arg-type", "argument " + std::to_string(i) + " must be u" +
                                 std::to_string(spec.width),
                 a.pos);
            lens.push_back(spec.width / 8);
            continue;
          }
          Width w = expr_width(a, env, spec.width);
          if (w != kErr && w != 0 && w != spec.width)
            diag("width-mismatch", "argument " + std::to_string(i) + " width",
                 a.pos);
          lens.push_back(spec.width / 8);
        } else {
          size_t len = 0;
          if (is_buf_arg) {
            len = env.vars[a.name].buf_len;
          } else {
            Width w = expr_width(a, env, 0);
            if (w == kErr || w == 0 || w % 8) {
              diag("arg-type", "argument " + std::to_string(i) +
                                   " must be a buffer or byte-width scalar",
                   a.pos);
              len = 1;
            } else {
              len = w / 8;
            }
          }
          if (spec.k == InputSpec::K::FixedBuf && len != spec.len)
            diag("arg-type", "argument " + std::to_string(i) + " must be buf[" +
                                 std::to_string(spec.len) + "]",
                 a.pos);
          lens.push_back(len);
        }
      }
      if (e->output.k == OutputSpec::K::Scalar)
        return TypeSpec{e->output.width == 8    ? BaseType::U8
                        : e->output.width == 16 ? BaseType::U16
                                                : BaseType::U32, 0};
      return TypeSpec{BaseType::Buf, uint32_t(e->output.byte_len(lens))};
    }
    diag("unresolved-call", "UnresolvedCall(\"" + name + "\")", call.pos);
    return std::nullopt;
  }

  void check_block(const Block& b, Env& env) {
    for (const auto& i : b) check_instr(i, env);
  }

  void bind(const std::string& name, TypeSpec t, SrcPos pos, Env& env) {
    auto it = env.vars.find(name);
    if (it != env.vars.end()) {
      if (!(it->second == t))
        diag("redefinition",
             "'" + name + "' redeclared with a different type", pos);
      return;
    }
    env.vars[name] = t;
  }

  void check_instr(const Instr& i, Env& env) {
    switch (i.k) {
      case Instr::K::Let: {
        if (i.type && i.type->is_buf()) {
          if (i.type->buf_len == 0)
            diag("buffer-size", "buffer size must be positive", i.pos);
          if (i.expr)
            diag("buffer-init", "buffers cannot be initialized by expression",
                 i.pos);
          bind(i.name, *i.type, i.pos, env);
          return;
        }
        if (!i.expr) {
          diag("missing-init", "scalar let needs an initializer", i.pos);
          return;
        }
        Width hint = i.type ? i.type->width() : 0;
        Width w = expr_width(*i.expr, env, hint ? hint : 32);
        if (w == 0) w = hint ? hint : 32;
        if (w == kErr) return;
        if (hint && w != hint) {
          diag("width-mismatch", "initializer width differs from annotation",
               i.pos);
          return;
        }
        BaseType bt = w == 8 ? BaseType::U8 : w == 16 ? BaseType::U16
                                                      : BaseType::U32;
        if (w != 8 && w != 16 && w != 32) {
          diag("width-mismatch",
               "let variables must be u8/u16/u32 (got width " +
                   std::to_string(w) + ")",
               i.pos);
          return;
        }
        bind(i.name, TypeSpec{bt, 0}, i.pos, env);
        return;
      }
      case Instr::K::LetCall: {
        auto rt = callee_result(i, env);
        if (rt) {
          if (i.type && !(*i.type == *rt))
            diag("width-mismatch", "annotation differs from call result",
                 i.pos);
          bind(i.name, *rt, i.pos, env);
        } else if (i.type) {
          bind(i.name, *i.type, i.pos, env);
        } else {
          if (prog.find(i.callee))
            diag("annotation-required",
                 "calls to program functions need a type annotation on the "
                 "destination",
                 i.pos);
          // bind a placeholder so one bad call does not cascade
          bind(i.name, TypeSpec{BaseType::U32, 0}, i.pos, env);
        }
        return;
      }
      case Instr::K::Assign: {
        auto it = env.vars.find(i.name);
        if (it == env.vars.end()) {
          diag("unknown-identifier", "unknown identifier '" + i.name + "'",
               i.pos);
          return;
        }
        if (i.index) {
          if (!it->second.is_buf()) {
            diag("bad-index", "'" + i.name + "' is not a buffer", i.pos);
            return;
          }
          (void)expr_width(*i.index, env, 32);
          Width w = expr_width(*i.expr, env, 8);
          if (w != kErr && w != 0 && w != 8)
            diag("width-mismatch", "buffer elements are u8", i.pos);
          return;
        }
        if (it->second.is_buf()) {
          diag("bad-index", "cannot assign a whole buffer", i.pos);
          return;
        }
        Width w = expr_width(*i.expr, env, it->second.width());
        if (w != kErr && w != 0 && w != it->second.width())
          diag("width-mismatch", "assignment width differs from declaration",
               i.pos);
        return;
      }
      case Instr::K::If:
      case Instr::K::While: {
        (void)expr_width(*i.expr, env, 32);
        check_block(i.then_block, env);
        check_block(i.else_block, env);
        return;
      }
      case Instr::K::Send: {
        for (const auto& a : i.args) {
          if (a->k == AExpr::K::Var) {
            auto it = env.vars.find(a->name);
            if (it != env.vars.end() && it->second.is_buf()) continue;
          }
          Width w = expr_width(*a, env, 0);
          if (w == kErr) continue;
          if (w == 0) w = 32;
          if (w % 8)
            diag("send-arg", "send arguments must have byte-multiple widths",
                 a->pos);
        }
        return;
      }
      case Instr::K::Recv: {
        auto it = env.vars.find(i.name);
        if (it == env.vars.end())
          diag("unknown-identifier", "unknown identifier '" + i.name + "'",
               i.pos);
        else if (!it->second.is_buf())
          diag("recv-dest", "recv destination must be a buffer", i.pos);
        return;
      }
      case Instr::K::Call: {
        (void)callee_result(i, env);
        return;
      }
      case Instr::K::Return: {
        if (i.expr) (void)expr_width(*i.expr, env, 32);
        return;
      }
    }
  }

  void collect_calls(const Block& b, std::set<std::string>& out) {
    for (const auto& i : b) {
      if (i.k == Instr::K::Call || i.k == Instr::K::LetCall)
        out.insert(i.callee);
      collect_calls(i.then_block, out);
      collect_calls(i.else_block, out);
    }
  }

  void run() {
    std::set<std::string> seen;
    for (const auto& f : prog.functions) {
      if (!seen.insert(f.name).second)
        diag("duplicate-function", "DuplicateFunction(\"" + f.name + "\")",
             f.pos);
    }
    const FunctionDef* entry = prog.find(prog.entry);
    if (!entry) {
      diag("entry-missing", "entry function '" + prog.entry + "' not found",
           SrcPos{});
    } else if (!entry->params.empty()) {
      diag("entry-params", "entry function must take no parameters",
           entry->pos);
    }
    for (const auto& f : prog.functions) {
      std::set<std::string> pnames;
      for (const auto& [pn, pt] : f.params) {
        if (!pnames.insert(pn).second)
          diag("param-duplicate", "duplicate parameter '" + pn + "'", f.pos);
        if (pt.is_buf() && pt.buf_len == 0)
          diag("buffer-size", "buffer size must be positive", f.pos);
      }
      Env env;
      for (const auto& [pn, pt] : f.params) env.vars[pn] = pt;
      check_block(f.body, env);
    }
    // recursion: depth-first cycle search over the call graph
    std::map<std::string, std::set<std::string>> calls;
    for (const auto& f : prog.functions) collect_calls(f.body, calls[f.name]);
    std::set<std::string> visiting, done;
    std::function<bool(const std::string&)> dfs =
        [&](const std::string& n) -> bool {
      if (done.count(n)) return false;
      if (!visiting.insert(n).second) return true;
      auto it = calls.find(n);
      if (it != calls.end())
        for (const auto& c : it->second)
          if (prog.find(c) && dfs(c)) return true;
      visiting.erase(n);
      done.insert(n);
      return false;
    };
    for (const auto& f : prog.functions) {
      if (dfs(f.name)) {
        diag("recursion", "recursive call involving '" + f.name + "'", f.pos);
        break;
      }
    }
  }
};

}  // namespace checkdetail

inline std::vector<Diagnostic> check_program(const Program& p,
                                             const ProhibitiveRegistry& reg) {
  std::vector<Diagnostic> out;
  checkdetail::Checker c{p, &reg, out};
  c.run();
  return out;
}

}  // namespace cbv
