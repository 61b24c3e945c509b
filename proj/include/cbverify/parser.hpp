#pragma once

// Recursive-descent parser and pretty printer for the client
// mini-language:
//
//   program := fndef+
//   fndef   := "fn" IDENT "(" params? ")" block
//   stmt    := "let" IDENT (":" type)? "=" expr ";"
//            | "let" IDENT (":" type)? "=" IDENT "(" args? ")" ";"
//            | "let" IDENT ":" type ";"               (buffer declaration)
//            | IDENT "=" expr ";" | IDENT "[" expr "]" "=" expr ";"
//            | "if" expr block ("else" block)? | "while" expr block
//            | "send" "(" expr ("," expr)* ")" ";" | "recv" "(" IDENT ")" ";"
//            | IDENT "(" args? ")" ";" | "return" expr? ";"
//   type    := "u8" | "u16" | "u32" | "buf" "[" INT "]"
//
// Literals: decimal or 0x-hex, optional u8/u16/u32 width suffix.
// Operators by loosening precedence: postfix [] ; ~ ; ++ ; * % ; + - ;
// << >> ; & ; ^ ; | ; == != < <= .

#include <cctype>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbverify/ast.hpp"

namespace cbv {

struct SyntaxError : std::runtime_error {
  int line, col;
  std::string expected;
  SyntaxError(int l, int c, const std::string& exp)
      : std::runtime_error("syntax error at " + std::to_string(l) + ":" +
                           std::to_string(c) + ": expected " + exp),
        line(l), col(c), expected(exp) {}
};

namespace lang {

enum class Tok : uint8_t {
  Ident, Int, KwFn, KwLet, KwIf, KwElse, KwWhile, KwSend, KwRecv, KwReturn,
  LParen, RParen, LBrace, RBrace, LBracket, RBracket, Comma, Semi, Colon,
  Assign, EqEq, NeEq, Lt, Le, Shl, Shr, Plus, PlusPlus, Minus, Star, Percent,
  Amp, Pipe, Caret, Tilde, End
};

struct Token {
  Tok t = Tok::End;
  std::string text;
  uint64_t value = 0;
  Width width_suffix = 0;
  int line = 1, col = 1;
};

class Lexer {
  const std::string& src_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;

  char peek(size_t off = 0) const {
    return pos_ + off < src_.size() ? src_[pos_ + off] : '\0';
  }
  void advance() {
    if (peek() == '\n') { ++line_; col_ = 1; }
    else ++col_;
    ++pos_;
  }

 public:
  explicit Lexer(const std::string& src) : src_(src) {}

  Token next() {
    for (;;) {
      while (std::isspace(uint8_t(peek()))) advance();
      if (peek() == '/' && peek(1) == '/') {
        while (peek() && peek() != '\n') advance();
        continue;
      }
      break;
    }
    Token t;
    t.line = line_;
    t.col = col_;
    char c = peek();
    if (!c) { t.t = Tok::End; return t; }
    if (std::isalpha(uint8_t(c)) || c == '_') {
      std::string s;
      while (std::isalnum(uint8_t(peek())) || peek() == '_') {
        s.push_back(peek());
        advance();
      }
      t.text = s;
      if (s == "fn") t.t = Tok::KwFn;
      else if (s == "let") t.t = Tok::KwLet;
      else if (s == "if") t.t = Tok::KwIf;
      else if (s == "else") t.t = Tok::KwElse;
      else if (s == "while") t.t = Tok::KwWhile;
      else if (s == "send") t.t = Tok::KwSend;
      else if (s == "recv") t.t = Tok::KwRecv;
      else if (s == "return") t.t = Tok::KwReturn;
      else t.t = Tok::Ident;
      return t;
    }
    if (std::isdigit(uint8_t(c))) {
      uint64_t v = 0;
      if (c == '0' && (peek(1) == 'x' || peek(1) == 'X')) {
        advance();
        advance();
        if (!std::isxdigit(uint8_t(peek())))
          throw SyntaxError(line_, col_, "hex digits");
        while (std::isxdigit(uint8_t(peek()))) {
          char d = peek();
          v = v * 16 + uint64_t(d <= '9' ? d - '0' : (d | 0x20) - 'a' + 10);
          advance();
        }
      } else {
        while (std::isdigit(uint8_t(peek()))) {
          v = v * 10 + uint64_t(peek() - '0');
          advance();
        }
      }
      t.t = Tok::Int;
      t.value = v;
      if (peek() == 'u') {
        size_t save = pos_;
        int sline = line_, scol = col_;
        advance();
        std::string suf;
        while (std::isdigit(uint8_t(peek()))) {
          suf.push_back(peek());
          advance();
        }
        if (suf == "8") t.width_suffix = 8;
        else if (suf == "16") t.width_suffix = 16;
        else if (suf == "32") t.width_suffix = 32;
        else {
          pos_ = save;
          line_ = sline;
          col_ = scol;
          throw SyntaxError(line_, col_, "width suffix u8/u16/u32");
        }
      }
      return t;
    }
    auto two = [&](char a, char b, Tok tt) {
      if (c == a && peek(1) == b) {
        advance();
        advance();
        t.t = tt;
        return true;
      }
      return false;
    };
    if (two('=', '=', Tok::EqEq)) return t;
    if (two('!', '=', Tok::NeEq)) return t;
    if (two('<', '=', Tok::Le)) return t;
    if (two('<', '<', Tok::Shl)) return t;
    if (two('>', '>', Tok::Shr)) return t;
    if (two('+', '+', Tok::PlusPlus)) return t;
    switch (c) {
      case '(': t.t = Tok::LParen; break;
      case ')': t.t = Tok::RParen; break;
      case '{': t.t = Tok::LBrace; break;
      case '}': t.t = Tok::RBrace; break;
      case '[': t.t = Tok::LBracket; break;
      case ']': t.t = Tok::RBracket; break;
      case ',': t.t = Tok::Comma; break;
      case ';': t.t = Tok::Semi; break;
      case ':': t.t = Tok::Colon; break;
      case '=': t.t = Tok::Assign; break;
      case '<': t.t = Tok::Lt; break;
      case '+': t.t = Tok::Plus; break;
      case '-': t.t = Tok::Minus; break;
      case '*': t.t = Tok::Star; break;
      case '%': t.t = Tok::Percent; break;
      case '&': t.t = Tok::Amp; break;
      case '|': t.t = Tok::Pipe; break;
      case '^': t.t = Tok::Caret; break;
      case '~': t.t = Tok::Tilde; break;
      default: throw SyntaxError(line_, col_, "token");
    }
    advance();
    return t;
  }
};

class Parser {
  Lexer lex_;
  Token cur_;

  void bump() { cur_ = lex_.next(); }
  bool at(Tok t) const { return cur_.t == t; }
  Token expect(Tok t, const std::string& what) {
    if (!at(t)) throw SyntaxError(cur_.line, cur_.col, what);
    Token r = cur_;
    bump();
    return r;
  }
  SrcPos pos() const { return SrcPos{cur_.line, cur_.col}; }

 public:
  explicit Parser(const std::string& src) : lex_(src) { bump(); }

  Program parse_program() {
    Program p;
    while (!at(Tok::End)) p.functions.push_back(parse_fn());
    if (p.functions.empty())
      throw SyntaxError(cur_.line, cur_.col, "at least one function");
    number_instructions(p);
    names::resolve(p);
    return p;
  }

  static void number_instructions(Program& p) {
    uint32_t id = 0;
    for (auto& f : p.functions) number_block(f.body, id);
    p.instr_count = id;
  }

 private:
  static void number_block(Block& b, uint32_t& id) {
    for (auto& i : b) {
      i.id = id++;
      number_block(i.then_block, id);
      number_block(i.else_block, id);
    }
  }

  FunctionDef parse_fn() {
    FunctionDef f;
    f.pos = pos();
    expect(Tok::KwFn, "'fn'");
    f.name = expect(Tok::Ident, "function name").text;
    expect(Tok::LParen, "'('");
    if (!at(Tok::RParen)) {
      for (;;) {
        std::string pn = expect(Tok::Ident, "parameter name").text;
        expect(Tok::Colon, "':'");
        f.params.emplace_back(pn, parse_type());
        if (!at(Tok::Comma)) break;
        bump();
      }
    }
    expect(Tok::RParen, "')'");
    f.body = parse_block();
    return f;
  }

  TypeSpec parse_type() {
    Token t = expect(Tok::Ident, "type");
    if (t.text == "u8") return TypeSpec{BaseType::U8, 0};
    if (t.text == "u16") return TypeSpec{BaseType::U16, 0};
    if (t.text == "u32") return TypeSpec{BaseType::U32, 0};
    if (t.text == "buf") {
      expect(Tok::LBracket, "'['");
      Token n = expect(Tok::Int, "buffer length");
      expect(Tok::RBracket, "']'");
      return TypeSpec{BaseType::Buf, uint32_t(n.value)};
    }
    throw SyntaxError(t.line, t.col, "type u8/u16/u32/buf[N]");
  }

  Block parse_block() {
    expect(Tok::LBrace, "'{'");
    Block b;
    while (!at(Tok::RBrace)) b.push_back(parse_stmt());
    bump();
    return b;
  }

  Instr parse_stmt() {
    Instr i;
    i.pos = pos();
    if (at(Tok::KwLet)) {
      bump();
      i.name = expect(Tok::Ident, "identifier").text;
      if (at(Tok::Colon)) {
        bump();
        i.type = parse_type();
      }
      if (at(Tok::Semi)) {
        bump();
        if (!i.type || !i.type->is_buf())
          throw SyntaxError(i.pos.line, i.pos.col,
                            "initializer (only buffers may be declared bare)");
        i.k = Instr::K::Let;  // zero-initialized buffer
        return i;
      }
      expect(Tok::Assign, "'='");
      if (at(Tok::Ident)) {
        // lookahead: IDENT '(' is a call, otherwise an expression
        Token id = cur_;
        bump();
        if (at(Tok::LParen)) {
          i.k = Instr::K::LetCall;
          i.callee = id.text;
          i.args = parse_args();
          expect(Tok::Semi, "';'");
          return i;
        }
        i.k = Instr::K::Let;
        i.expr = parse_expr_starting_ident(id);
        expect(Tok::Semi, "';'");
        return i;
      }
      i.k = Instr::K::Let;
      i.expr = parse_expr();
      expect(Tok::Semi, "';'");
      return i;
    }
    if (at(Tok::KwIf)) {
      bump();
      i.k = Instr::K::If;
      i.expr = parse_expr();
      i.then_block = parse_block();
      if (at(Tok::KwElse)) {
        bump();
        i.else_block = parse_block();
      }
      return i;
    }
    if (at(Tok::KwWhile)) {
      bump();
      i.k = Instr::K::While;
      i.expr = parse_expr();
      i.then_block = parse_block();
      return i;
    }
    if (at(Tok::KwSend)) {
      bump();
      i.k = Instr::K::Send;
      i.args = parse_args();
      if (i.args.empty())
        throw SyntaxError(i.pos.line, i.pos.col, "at least one send argument");
      expect(Tok::Semi, "';'");
      return i;
    }
    if (at(Tok::KwRecv)) {
      bump();
      i.k = Instr::K::Recv;
      expect(Tok::LParen, "'('");
      i.name = expect(Tok::Ident, "buffer name").text;
      expect(Tok::RParen, "')'");
      expect(Tok::Semi, "';'");
      return i;
    }
    if (at(Tok::KwReturn)) {
      bump();
      i.k = Instr::K::Return;
      if (!at(Tok::Semi)) i.expr = parse_expr();
      expect(Tok::Semi, "';'");
      return i;
    }
    if (at(Tok::Ident)) {
      Token id = cur_;
      bump();
      if (at(Tok::LParen)) {
        i.k = Instr::K::Call;
        i.callee = id.text;
        i.args = parse_args();
        expect(Tok::Semi, "';'");
        return i;
      }
      if (at(Tok::LBracket)) {
        bump();
        i.k = Instr::K::Assign;
        i.name = id.text;
        i.index = parse_expr();
        expect(Tok::RBracket, "']'");
        expect(Tok::Assign, "'='");
        i.expr = parse_expr();
        expect(Tok::Semi, "';'");
        return i;
      }
      expect(Tok::Assign, "'='");
      i.k = Instr::K::Assign;
      i.name = id.text;
      i.expr = parse_expr();
      expect(Tok::Semi, "';'");
      return i;
    }
    throw SyntaxError(cur_.line, cur_.col, "statement");
  }

  std::vector<std::unique_ptr<AExpr>> parse_args() {
    expect(Tok::LParen, "'('");
    std::vector<std::unique_ptr<AExpr>> args;
    if (!at(Tok::RParen)) {
      for (;;) {
        args.push_back(parse_expr());
        if (!at(Tok::Comma)) break;
        bump();
      }
    }
    expect(Tok::RParen, "')'");
    return args;
  }

  // Expression parsing, precedence climbing.
  std::unique_ptr<AExpr> parse_expr() { return parse_cmp(); }

  std::unique_ptr<AExpr> parse_expr_starting_ident(const Token& id) {
    auto lhs = parse_postfix_of(make_var(id));
    return parse_cmp_rest(parse_bitor_rest(parse_bitxor_rest(parse_bitand_rest(
        parse_shift_rest(parse_add_rest(parse_mul_rest(
            parse_concat_rest(std::move(lhs)))))))));
  }

  static std::unique_ptr<AExpr> make_var(const Token& id) {
    auto e = std::make_unique<AExpr>();
    e->k = AExpr::K::Var;
    e->pos = SrcPos{id.line, id.col};
    e->name = id.text;
    return e;
  }

  std::unique_ptr<AExpr> mk_bin(BinOp op, std::unique_ptr<AExpr> a,
                                std::unique_ptr<AExpr> b) {
    auto e = std::make_unique<AExpr>();
    e->k = AExpr::K::Binary;
    e->pos = a->pos;
    e->op = op;
    e->a = std::move(a);
    e->b = std::move(b);
    return e;
  }

  std::unique_ptr<AExpr> parse_cmp() { return parse_cmp_rest(parse_bitor()); }
  std::unique_ptr<AExpr> parse_cmp_rest(std::unique_ptr<AExpr> lhs) {
    for (;;) {
      BinOp op;
      if (at(Tok::EqEq)) op = BinOp::Eq;
      else if (at(Tok::NeEq)) op = BinOp::Ne;
      else if (at(Tok::Lt)) op = BinOp::Lt;
      else if (at(Tok::Le)) op = BinOp::Le;
      else return lhs;
      bump();
      lhs = mk_bin(op, std::move(lhs), parse_bitor());
    }
  }

  std::unique_ptr<AExpr> parse_bitor() { return parse_bitor_rest(parse_bitxor()); }
  std::unique_ptr<AExpr> parse_bitor_rest(std::unique_ptr<AExpr> lhs) {
    while (at(Tok::Pipe)) {
      bump();
      lhs = mk_bin(BinOp::Or, std::move(lhs), parse_bitxor());
    }
    return lhs;
  }

  std::unique_ptr<AExpr> parse_bitxor() { return parse_bitxor_rest(parse_bitand()); }
  std::unique_ptr<AExpr> parse_bitxor_rest(std::unique_ptr<AExpr> lhs) {
    while (at(Tok::Caret)) {
      bump();
      lhs = mk_bin(BinOp::Xor, std::move(lhs), parse_bitand());
    }
    return lhs;
  }

  std::unique_ptr<AExpr> parse_bitand() { return parse_bitand_rest(parse_shift()); }
  std::unique_ptr<AExpr> parse_bitand_rest(std::unique_ptr<AExpr> lhs) {
    while (at(Tok::Amp)) {
      bump();
      lhs = mk_bin(BinOp::And, std::move(lhs), parse_shift());
    }
    return lhs;
  }

  std::unique_ptr<AExpr> parse_shift() { return parse_shift_rest(parse_add()); }
  std::unique_ptr<AExpr> parse_shift_rest(std::unique_ptr<AExpr> lhs) {
    for (;;) {
      BinOp op;
      if (at(Tok::Shl)) op = BinOp::Shl;
      else if (at(Tok::Shr)) op = BinOp::Shr;
      else return lhs;
      bump();
      lhs = mk_bin(op, std::move(lhs), parse_add());
    }
  }

  std::unique_ptr<AExpr> parse_add() { return parse_add_rest(parse_mul()); }
  std::unique_ptr<AExpr> parse_add_rest(std::unique_ptr<AExpr> lhs) {
    for (;;) {
      BinOp op;
      if (at(Tok::Plus)) op = BinOp::Add;
      else if (at(Tok::Minus)) op = BinOp::Sub;
      else return lhs;
      bump();
      lhs = mk_bin(op, std::move(lhs), parse_mul());
    }
  }

  std::unique_ptr<AExpr> parse_mul() { return parse_mul_rest(parse_concat()); }
  std::unique_ptr<AExpr> parse_mul_rest(std::unique_ptr<AExpr> lhs) {
    for (;;) {
      BinOp op;
      if (at(Tok::Star)) op = BinOp::Mul;
      else if (at(Tok::Percent)) op = BinOp::Mod;
      else return lhs;
      bump();
      lhs = mk_bin(op, std::move(lhs), parse_concat());
    }
  }

  std::unique_ptr<AExpr> parse_concat() { return parse_concat_rest(parse_unary()); }
  std::unique_ptr<AExpr> parse_concat_rest(std::unique_ptr<AExpr> lhs) {
    while (at(Tok::PlusPlus)) {
      bump();
      lhs = mk_bin(BinOp::Concat, std::move(lhs), parse_unary());
    }
    return lhs;
  }

  std::unique_ptr<AExpr> parse_unary() {
    if (at(Tok::Tilde)) {
      SrcPos p = pos();
      bump();
      auto e = std::make_unique<AExpr>();
      e->k = AExpr::K::Unary;
      e->pos = p;
      e->a = parse_unary();
      return e;
    }
    return parse_postfix();
  }

  std::unique_ptr<AExpr> parse_postfix() {
    return parse_postfix_of(parse_primary());
  }

  std::unique_ptr<AExpr> parse_postfix_of(std::unique_ptr<AExpr> base) {
    while (at(Tok::LBracket)) {
      if (base->k != AExpr::K::Var)
        throw SyntaxError(cur_.line, cur_.col, "indexable variable");
      SrcPos p = pos();
      bump();
      // Either b[expr] (byte index) or x[hi:lo] (bit range).
      if (at(Tok::Int)) {
        Token first = cur_;
        bump();
        if (at(Tok::Colon)) {
          bump();
          Token low = expect(Tok::Int, "low bit");
          expect(Tok::RBracket, "']'");
          auto e = std::make_unique<AExpr>();
          e->k = AExpr::K::BitRange;
          e->pos = p;
          e->name = base->name;
          e->hi = uint8_t(first.value);
          e->lo = uint8_t(low.value);
          base = std::move(e);
          continue;
        }
        auto idx = std::make_unique<AExpr>();
        idx->k = AExpr::K::Lit;
        idx->pos = SrcPos{first.line, first.col};
        idx->lit = first.value;
        idx->lit_width = first.width_suffix;
        auto rest = parse_index_rest(std::move(idx));
        expect(Tok::RBracket, "']'");
        auto e = std::make_unique<AExpr>();
        e->k = AExpr::K::ByteIndex;
        e->pos = p;
        e->name = base->name;
        e->a = std::move(rest);
        base = std::move(e);
        continue;
      }
      auto e = std::make_unique<AExpr>();
      e->k = AExpr::K::ByteIndex;
      e->pos = p;
      e->name = base->name;
      e->a = parse_expr();
      expect(Tok::RBracket, "']'");
      base = std::move(e);
    }
    return base;
  }

  // Continue an index expression whose first token was an integer.
  std::unique_ptr<AExpr> parse_index_rest(std::unique_ptr<AExpr> lhs) {
    return parse_cmp_rest(parse_bitor_rest(parse_bitxor_rest(parse_bitand_rest(
        parse_shift_rest(parse_add_rest(parse_mul_rest(
            parse_concat_rest(std::move(lhs)))))))));
  }

  std::unique_ptr<AExpr> parse_primary() {
    if (at(Tok::Int)) {
      auto e = std::make_unique<AExpr>();
      e->k = AExpr::K::Lit;
      e->pos = pos();
      e->lit = cur_.value;
      e->lit_width = cur_.width_suffix;
      bump();
      return e;
    }
    if (at(Tok::Ident)) {
      Token id = cur_;
      bump();
      return make_var(id);
    }
    if (at(Tok::LParen)) {
      bump();
      auto e = parse_expr();
      expect(Tok::RParen, "')'");
      return e;
    }
    throw SyntaxError(cur_.line, cur_.col, "expression");
  }
};

}  // namespace lang

inline Program parse_program(const std::string& source) {
  lang::Parser p(source);
  return p.parse_program();
}

// ---------------------------------------------------------------------
// Pretty printer. Output parses back to a structurally equal program.

namespace lang {

inline void print_expr(const AExpr& e, std::ostream& os) {
  switch (e.k) {
    case AExpr::K::Lit:
      os << "0x" << std::hex << e.lit << std::dec;
      if (e.lit_width) os << "u" << int(e.lit_width);
      break;
    case AExpr::K::Var: os << e.name; break;
    case AExpr::K::ByteIndex:
      os << e.name << "[";
      print_expr(*e.a, os);
      os << "]";
      break;
    case AExpr::K::BitRange:
      os << e.name << "[" << int(e.hi) << ":" << int(e.lo) << "]";
      break;
    case AExpr::K::Unary:
      os << "~";
      if (e.a->k == AExpr::K::Binary) {
        os << "(";
        print_expr(*e.a, os);
        os << ")";
      } else {
        print_expr(*e.a, os);
      }
      break;
    case AExpr::K::Binary: {
      auto sub = [&](const AExpr& s) {
        if (s.k == AExpr::K::Binary) {
          os << "(";
          print_expr(s, os);
          os << ")";
        } else {
          print_expr(s, os);
        }
      };
      sub(*e.a);
      os << " " << binop_name(e.op) << " ";
      sub(*e.b);
      break;
    }
  }
}

inline void print_type(const TypeSpec& t, std::ostream& os) {
  switch (t.t) {
    case BaseType::U8: os << "u8"; break;
    case BaseType::U16: os << "u16"; break;
    case BaseType::U32: os << "u32"; break;
    case BaseType::Buf: os << "buf[" << t.buf_len << "]"; break;
  }
}

inline void print_block(const Block& b, std::ostream& os, int indent);

inline void print_instr(const Instr& i, std::ostream& os, int indent) {
  std::string pad(size_t(indent) * 2, ' ');
  os << pad;
  switch (i.k) {
    case Instr::K::Let:
      os << "let " << i.name;
      if (i.type) {
        os << ": ";
        print_type(*i.type, os);
      }
      if (i.expr) {
        os << " = ";
        print_expr(*i.expr, os);
      }
      os << ";\n";
      break;
    case Instr::K::LetCall:
      os << "let " << i.name;
      if (i.type) {
        os << ": ";
        print_type(*i.type, os);
      }
      os << " = " << i.callee << "(";
      for (size_t k = 0; k < i.args.size(); ++k) {
        if (k) os << ", ";
        print_expr(*i.args[k], os);
      }
      os << ");\n";
      break;
    case Instr::K::Assign:
      os << i.name;
      if (i.index) {
        os << "[";
        print_expr(*i.index, os);
        os << "]";
      }
      os << " = ";
      print_expr(*i.expr, os);
      os << ";\n";
      break;
    case Instr::K::If:
      os << "if ";
      print_expr(*i.expr, os);
      os << " {\n";
      print_block(i.then_block, os, indent + 1);
      os << pad << "}";
      if (!i.else_block.empty()) {
        os << " else {\n";
        print_block(i.else_block, os, indent + 1);
        os << pad << "}";
      }
      os << "\n";
      break;
    case Instr::K::While:
      os << "while ";
      print_expr(*i.expr, os);
      os << " {\n";
      print_block(i.then_block, os, indent + 1);
      os << pad << "}\n";
      break;
    case Instr::K::Send:
      os << "send(";
      for (size_t k = 0; k < i.args.size(); ++k) {
        if (k) os << ", ";
        print_expr(*i.args[k], os);
      }
      os << ");\n";
      break;
    case Instr::K::Recv:
      os << "recv(" << i.name << ");\n";
      break;
    case Instr::K::Call:
      os << i.callee << "(";
      for (size_t k = 0; k < i.args.size(); ++k) {
        if (k) os << ", ";
        print_expr(*i.args[k], os);
      }
      os << ");\n";
      break;
    case Instr::K::Return:
      os << "return";
      if (i.expr) {
        os << " ";
        print_expr(*i.expr, os);
      }
      os << ";\n";
      break;
  }
}

inline void print_block(const Block& b, std::ostream& os, int indent) {
  for (const auto& i : b) print_instr(i, os, indent);
}

}  // namespace lang

inline std::string pretty_print(const Program& p) {
  std::ostringstream os;
  for (const auto& f : p.functions) {
    os << "fn " << f.name << "(";
    for (size_t k = 0; k < f.params.size(); ++k) {
      if (k) os << ", ";
      os << f.params[k].first << ": ";
      lang::print_type(f.params[k].second, os);
    }
    os << ") {\n";
    lang::print_block(f.body, os, 1);
    os << "}\n";
  }
  return os.str();
}

}  // namespace cbv
