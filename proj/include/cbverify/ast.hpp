#pragma once

// AST of the client mini-language. Programs are immutable after parsing
// and safely shareable across worker threads.

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cbverify/expr.hpp"

namespace cbv {

struct SrcPos {
  int line = 0;
  int col = 0;
};

// Identifier names are interned once after parsing so frames can key
// locals by integer id instead of comparing strings on every lookup.
namespace names {
struct Table {
  std::mutex mu;
  std::unordered_map<std::string, uint32_t> ids;
  std::vector<std::string> texts{""};  // id 0 reserved: unresolved
};
inline Table& table() {
  static Table t;
  return t;
}
inline uint32_t intern(const std::string& s) {
  Table& t = table();
  std::lock_guard<std::mutex> lk(t.mu);
  auto it = t.ids.find(s);
  if (it != t.ids.end()) return it->second;
  uint32_t id = uint32_t(t.texts.size());
  t.texts.push_back(s);
  t.ids.emplace(s, id);
  return id;
}
inline std::string text(uint32_t id) {
  Table& t = table();
  std::lock_guard<std::mutex> lk(t.mu);
  return id < t.texts.size() ? t.texts[id] : "";
}
}  // namespace names

enum class BaseType : uint8_t { U8, U16, U32, Buf };

struct TypeSpec {
  BaseType t = BaseType::U32;
  uint32_t buf_len = 0;

  bool is_buf() const { return t == BaseType::Buf; }
  Width width() const {
    switch (t) {
      case BaseType::U8: return 8;
      case BaseType::U16: return 16;
      case BaseType::U32: return 32;
      case BaseType::Buf: return 0;
    }
    return 0;
  }
  friend bool operator==(const TypeSpec& a, const TypeSpec& b) {
    return a.t == b.t && a.buf_len == b.buf_len;
  }
};

struct AExpr {
  enum class K { Lit, Var, ByteIndex, BitRange, Unary, Binary };
  K k = K::Lit;
  SrcPos pos;

  uint64_t lit = 0;
  Width lit_width = 0;  // 0 = unsuffixed literal

  std::string name;  // Var, ByteIndex, BitRange base
  uint32_t name_id = 0;

  std::unique_ptr<AExpr> a, b;  // Unary operand / Binary operands / index
  BinOp op = BinOp::Add;
  uint8_t hi = 0, lo = 0;  // BitRange

  std::unique_ptr<AExpr> clone() const {
    auto c = std::make_unique<AExpr>();
    c->k = k;
    c->pos = pos;
    c->lit = lit;
    c->lit_width = lit_width;
    c->name = name;
    c->name_id = name_id;
    c->op = op;
    c->hi = hi;
    c->lo = lo;
    if (a) c->a = a->clone();
    if (b) c->b = b->clone();
    return c;
  }
};

struct Instr;
using Block = std::vector<Instr>;

struct Instr {
  enum class K { Let, LetCall, Assign, If, While, Send, Recv, Call, Return };
  K k = K::Let;
  SrcPos pos;
  uint32_t id = 0;  // assigned after parse, unique within a Program

  std::string name;               // let/assign dest, recv dest
  uint32_t name_id = 0;
  std::optional<TypeSpec> type;   // let annotation
  std::unique_ptr<AExpr> expr;    // let init / assign rhs / cond / return
  std::unique_ptr<AExpr> index;   // assign to buffer element
  std::string callee;             // LetCall, Call
  std::vector<std::unique_ptr<AExpr>> args;  // call args / send args
  Block then_block;               // if-then / while body
  Block else_block;

  Instr() = default;
  Instr(Instr&&) = default;
  Instr& operator=(Instr&&) = default;

  Instr clone() const {
    Instr c;
    c.k = k;
    c.pos = pos;
    c.id = id;
    c.name = name;
    c.name_id = name_id;
    c.type = type;
    if (expr) c.expr = expr->clone();
    if (index) c.index = index->clone();
    c.callee = callee;
    for (const auto& ag : args) c.args.push_back(ag->clone());
    for (const auto& i : then_block) c.then_block.push_back(i.clone());
    for (const auto& i : else_block) c.else_block.push_back(i.clone());
    return c;
  }
};

struct FunctionDef {
  std::string name;
  std::vector<std::pair<std::string, TypeSpec>> params;
  std::vector<uint32_t> param_ids;
  Block body;
  SrcPos pos;

  FunctionDef clone() const {
    FunctionDef f;
    f.name = name;
    f.params = params;
    f.param_ids = param_ids;
    f.pos = pos;
    for (const auto& i : body) f.body.push_back(i.clone());
    return f;
  }
};

struct Program {
  std::vector<FunctionDef> functions;
  std::string entry = "client";
  uint32_t instr_count = 0;

  const FunctionDef* find(const std::string& name) const {
    for (const auto& f : functions)
      if (f.name == name) return &f;
    return nullptr;
  }

  Program clone() const {
    Program p;
    p.entry = entry;
    p.instr_count = instr_count;
    for (const auto& f : functions) p.functions.push_back(f.clone());
    return p;
  }
};

// Structural equality, ignoring positions and instruction ids.
inline bool ast_equal(const AExpr& x, const AExpr& y) {
  if (x.k != y.k) return false;
  switch (x.k) {
    case AExpr::K::Lit: return x.lit == y.lit && x.lit_width == y.lit_width;
    case AExpr::K::Var: return x.name == y.name;
    case AExpr::K::ByteIndex:
      return x.name == y.name && ast_equal(*x.a, *y.a);
    case AExpr::K::BitRange:
      return x.name == y.name && x.hi == y.hi && x.lo == y.lo;
    case AExpr::K::Unary: return ast_equal(*x.a, *y.a);
    case AExpr::K::Binary:
      return x.op == y.op && ast_equal(*x.a, *y.a) && ast_equal(*x.b, *y.b);
  }
  return false;
}

inline bool ast_equal(const Block& x, const Block& y);

inline bool ast_equal(const Instr& x, const Instr& y) {
  if (x.k != y.k || x.name != y.name || x.callee != y.callee) return false;
  if (x.type.has_value() != y.type.has_value()) return false;
  if (x.type && !(*x.type == *y.type)) return false;
  if (bool(x.expr) != bool(y.expr)) return false;
  if (x.expr && !ast_equal(*x.expr, *y.expr)) return false;
  if (bool(x.index) != bool(y.index)) return false;
  if (x.index && !ast_equal(*x.index, *y.index)) return false;
  if (x.args.size() != y.args.size()) return false;
  for (size_t i = 0; i < x.args.size(); ++i)
    if (!ast_equal(*x.args[i], *y.args[i])) return false;
  return ast_equal(x.then_block, y.then_block) &&
         ast_equal(x.else_block, y.else_block);
}

inline bool ast_equal(const Block& x, const Block& y) {
  if (x.size() != y.size()) return false;
  for (size_t i = 0; i < x.size(); ++i)
    if (!ast_equal(x[i], y[i])) return false;
  return true;
}

namespace names {
inline void resolve(AExpr& e) {
  if (!e.name.empty()) e.name_id = intern(e.name);
  if (e.a) resolve(*e.a);
  if (e.b) resolve(*e.b);
}
inline void resolve(Block& b);
inline void resolve(Instr& i) {
  if (!i.name.empty()) i.name_id = intern(i.name);
  if (i.expr) resolve(*i.expr);
  if (i.index) resolve(*i.index);
  for (auto& a : i.args) resolve(*a);
  resolve(i.then_block);
  resolve(i.else_block);
}
inline void resolve(Block& b) {
  for (auto& i : b) resolve(i);
}
inline void resolve(Program& p) {
  for (auto& f : p.functions) {
    f.param_ids.clear();
    for (auto& [pn, pt] : f.params) f.param_ids.push_back(intern(pn));
    resolve(f.body);
  }
}
}  // namespace names

inline bool ast_equal(const Program& x, const Program& y) {
  if (x.functions.size() != y.functions.size() || x.entry != y.entry)
    return false;
  for (size_t i = 0; i < x.functions.size(); ++i) {
    const auto& f = x.functions[i];
    const auto& g = y.functions[i];
    if (f.name != g.name || f.params != g.params) return false;
    if (!ast_equal(f.body, g.body)) return false;
  }
  return true;
}

}  // namespace cbv
