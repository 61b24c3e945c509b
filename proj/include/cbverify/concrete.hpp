#pragma once

// Plain concrete interpreter for the mini-language: runs a program on
// chosen inputs, recording its network I/O. Used to generate trace
// fixtures and as an independent oracle against the symbolic VM. It is a
// separate implementation on purpose; it shares only the AST and the
// prohibitive-function implementations with the symbolic path.
//
// Symbol-creating instructions consume event numbers exactly like the
// symbolic VM, so a Model produced by the solver can drive a concrete
// run directly.

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cbverify/ast.hpp"
#include "cbverify/registry.hpp"
#include "cbverify/trace.hpp"

namespace cbv {

struct ConcreteError : std::runtime_error {
  explicit ConcreteError(const std::string& m) : std::runtime_error(m) {}
};

struct ServerAction {
  enum class K { Static, EchoLast };
  K k = K::Static;
  Bytes data;

  static ServerAction fixed(Bytes b) { return {K::Static, std::move(b)}; }
  static ServerAction echo_last() { return {K::EchoLast, {}}; }
};

struct GenInputs {
  Model model;  // values for sym_input/sym_bytes events, by SymId key
  std::vector<ServerAction> server;  // consumed by recv, in order
  std::vector<std::pair<std::string, Bytes>> metadata;
};

struct ConcreteRun {
  std::vector<std::pair<Dir, Bytes>> io;
  // Outputs of injection-point functions observed during the run, keyed
  // by their metadata key; these are what a server would have logged.
  std::vector<std::pair<std::string, Bytes>> recorded_injections;
  uint64_t steps = 0;
};

namespace concdetail {

struct CVal {
  bool is_buf = false;
  Width w = 32;
  uint64_t v = 0;
  Bytes bytes;
};

struct CFrame {
  const FunctionDef* fn = nullptr;
  std::map<std::string, CVal> locals;
  struct Entry {
    const Block* block;
    size_t idx;
    const Instr* loop;
  };
  std::vector<Entry> control;
  std::string ret_dest;
  bool has_ret_dest = false;
};

struct Interp {
  const Program& prog;
  const ProhibitiveRegistry& reg;
  const GenInputs& in;
  ConcreteRun out;
  std::vector<CFrame> frames;
  uint32_t sym_event = 0;
  size_t server_pos = 0;
  uint64_t budget;

  Interp(const Program& p, const ProhibitiveRegistry& r, const GenInputs& gi,
         uint64_t step_budget)
      : prog(p), reg(r), in(gi), budget(step_budget) {}

  CVal* find(const std::string& name) {
    auto it = frames.back().locals.find(name);
    return it == frames.back().locals.end() ? nullptr : &it->second;
  }

  Width static_width(const AExpr& e) {
    switch (e.k) {
      case AExpr::K::Lit: return e.lit_width;
      case AExpr::K::Var: {
        CVal* v = find(e.name);
        if (!v) throw ConcreteError("unknown identifier '" + e.name + "'");
        if (v->is_buf) throw ConcreteError("buffer used as scalar");
        return v->w;
      }
      case AExpr::K::ByteIndex: return 8;
      case AExpr::K::BitRange: return Width(e.hi - e.lo + 1);
      case AExpr::K::Unary: return static_width(*e.a);
      case AExpr::K::Binary: {
        if (e.op == BinOp::Concat)
          return Width(static_width(*e.a) + static_width(*e.b));
        bool cmp = e.op == BinOp::Eq || e.op == BinOp::Ne ||
                   e.op == BinOp::Lt || e.op == BinOp::Le;
        if (cmp) return 1;
        Width wa = static_width(*e.a);
        return wa ? wa : static_width(*e.b);
      }
    }
    return 0;
  }

  std::pair<Width, uint64_t> eval(const AExpr& e, Width hint) {
    switch (e.k) {
      case AExpr::K::Lit: {
        Width w = e.lit_width ? e.lit_width : (hint ? hint : 32);
        return {w, e.lit & width_mask(w)};
      }
      case AExpr::K::Var: {
        CVal* v = find(e.name);
        if (!v) throw ConcreteError("unknown identifier '" + e.name + "'");
        if (v->is_buf) throw ConcreteError("buffer used as scalar");
        return {v->w, v->v};
      }
      case AExpr::K::ByteIndex: {
        CVal* v = find(e.name);
        if (!v || !v->is_buf)
          throw ConcreteError("'" + e.name + "' is not a buffer");
        auto [iw, idx] = eval(*e.a, 32);
        (void)iw;
        if (idx >= v->bytes.size())
          throw ConcreteError("index out of bounds for '" + e.name + "'");
        return {8, v->bytes[idx]};
      }
      case AExpr::K::BitRange: {
        CVal* v = find(e.name);
        if (!v || v->is_buf)
          throw ConcreteError("bit range needs a scalar '" + e.name + "'");
        if (e.lo > e.hi || e.hi >= v->w)
          throw ConcreteError("bit range out of bounds");
        Width w = Width(e.hi - e.lo + 1);
        return {w, (v->v >> e.lo) & width_mask(w)};
      }
      case AExpr::K::Unary: {
        auto [w, x] = eval(*e.a, hint);
        return {w, ~x & width_mask(w)};
      }
      case AExpr::K::Binary: {
        if (e.op == BinOp::Concat) {
          auto [wa, a] = eval(*e.a, 0);
          auto [wb, b] = eval(*e.b, 0);
          Width w = Width(wa + wb);
          return {w, ((a << wb) | b) & width_mask(w)};
        }
        Width wa = static_width(*e.a);
        Width wb = static_width(*e.b);
        Width w = wa ? wa : wb;
        if (!w) w = hint ? hint : 32;
        auto [wa2, a] = eval(*e.a, w);
        auto [wb2, b] = eval(*e.b, w);
        (void)wa2;
        (void)wb2;
        uint64_t m = width_mask(w);
        switch (e.op) {
          case BinOp::Add: return {w, (a + b) & m};
          case BinOp::Sub: return {w, (a - b) & m};
          case BinOp::Mul: return {w, (a * b) & m};
          case BinOp::And: return {w, a & b};
          case BinOp::Or: return {w, a | b};
          case BinOp::Xor: return {w, a ^ b};
          case BinOp::Shl: return {w, b >= w ? 0 : (a << b) & m};
          case BinOp::Shr: return {w, b >= w ? 0 : a >> b};
          case BinOp::Eq: return {1, a == b ? 1u : 0u};
          case BinOp::Ne: return {1, a != b ? 1u : 0u};
          case BinOp::Lt: return {1, a < b ? 1u : 0u};
          case BinOp::Le: return {1, a <= b ? 1u : 0u};
          case BinOp::Mod:
            if (b == 0) throw ConcreteError("modulo by zero");
            return {w, a % b};
          case BinOp::Concat: break;
        }
        throw ConcreteError("unhandled operator");
      }
    }
    throw ConcreteError("unhandled expression kind");
  }

  Bytes arg_bytes(const AExpr& e, Width scalar_hint) {
    if (e.k == AExpr::K::Var) {
      CVal* v = find(e.name);
      if (v && v->is_buf) return v->bytes;
    }
    auto [w, x] = eval(e, scalar_hint);
    if (w % 8) throw ConcreteError("value width is not a whole byte count");
    Bytes out(w / 8);
    for (size_t j = 0; j < out.size(); ++j)
      out[out.size() - 1 - j] = uint8_t(x >> (8 * j));
    return out;
  }

  uint64_t model_value(SymId id, Width w) {
    auto v = in.model.get(id);
    return (v ? *v : 0) & width_mask(w);
  }

  void normalize() {
    while (!frames.empty()) {
      CFrame& f = frames.back();
      while (!f.control.empty()) {
        auto& ce = f.control.back();
        if (ce.idx < ce.block->size()) return;
        bool was_loop = ce.loop != nullptr;
        f.control.pop_back();
        if (was_loop && !f.control.empty() &&
            f.control.back().idx < f.control.back().block->size())
          return;
      }
      frames.pop_back();
    }
  }

  void advance() {
    frames.back().control.back().idx++;
    normalize();
  }

  void step_budget() {
    if (++out.steps > budget)
      throw ConcreteError("concrete run exceeded its step budget");
  }

  void run() {
    const FunctionDef* entry = prog.find(prog.entry);
    if (!entry) throw ConcreteError("entry function missing");
    CFrame f;
    f.fn = entry;
    f.control.push_back({&entry->body, 0, nullptr});
    frames.push_back(std::move(f));
    normalize();
    while (!frames.empty()) exec_one();
  }

  void exec_one() {
    CFrame& f = frames.back();
    const Instr& i = (*f.control.back().block)[f.control.back().idx];
    step_budget();
    switch (i.k) {
      case Instr::K::Let: {
        if (i.type && i.type->is_buf()) {
          CVal v;
          v.is_buf = true;
          v.bytes.assign(i.type->buf_len, 0);
          f.locals[i.name] = std::move(v);
          advance();
          return;
        }
        Width hint = i.type ? i.type->width() : 0;
        auto [w, x] = eval(*i.expr, hint ? hint : 32);
        CVal v;
        v.w = w;
        v.v = x;
        f.locals[i.name] = v;
        advance();
        return;
      }
      case Instr::K::LetCall:
      case Instr::K::Call: {
        bool has_dest = i.k == Instr::K::LetCall;
        const std::string& callee = i.callee;
        if (callee == "sym_input") {
          uint32_t ev = sym_event++;
          Width w = Width(i.args[0]->lit);
          if (has_dest) {
            CVal v;
            v.w = w;
            v.v = model_value(SymId{ev, 0}, w);
            f.locals[i.name] = v;
          }
          advance();
          return;
        }
        if (callee == "sym_bytes") {
          uint32_t ev = sym_event++;
          uint32_t n = uint32_t(i.args[0]->lit);
          if (has_dest) {
            CVal v;
            v.is_buf = true;
            for (uint32_t j = 0; j < n; ++j)
              v.bytes.push_back(uint8_t(model_value(SymId{ev, uint16_t(j)}, 8)));
            f.locals[i.name] = std::move(v);
          }
          advance();
          return;
        }
        if (const ProhibitiveEntry* entry = reg.find(callee)) {
          sym_event++;  // keep event numbering aligned with the symbolic VM
          std::vector<Bytes> ins;
          for (size_t k = 0; k < entry->inputs.size(); ++k) {
            const InputSpec& spec = entry->inputs[k];
            ins.push_back(arg_bytes(
                *i.args[k],
                spec.k == InputSpec::K::Scalar ? spec.width : Width(0)));
          }
          Bytes outv = entry->impl(ins);
          if (const InjectionPoint* ip = reg.injection_for(callee)) {
            bool seen = false;
            for (auto& [k2, v2] : out.recorded_injections)
              if (k2 == ip->metadata_key) seen = true;
            if (!seen)
              out.recorded_injections.emplace_back(ip->metadata_key, outv);
          }
          if (has_dest) {
            if (entry->output.k == OutputSpec::K::Scalar) {
              CVal v;
              v.w = entry->output.width;
              v.v = 0;
              for (uint8_t b : outv) v.v = v.v << 8 | b;
              f.locals[i.name] = v;
            } else {
              CVal v;
              v.is_buf = true;
              v.bytes = outv;
              f.locals[i.name] = std::move(v);
            }
          }
          advance();
          return;
        }
        const FunctionDef* fn = prog.find(callee);
        if (!fn) throw ConcreteError("call to unknown function '" + callee + "'");
        CFrame callee_frame;
        callee_frame.fn = fn;
        for (size_t k = 0; k < fn->params.size(); ++k) {
          const auto& [pname, ptype] = fn->params[k];
          if (ptype.is_buf()) {
            CVal* v = i.args[k]->k == AExpr::K::Var ? find(i.args[k]->name)
                                                    : nullptr;
            if (!v || !v->is_buf)
              throw ConcreteError("argument '" + pname + "' must be a buffer");
            callee_frame.locals[pname] = *v;
          } else {
            auto [w, x] = eval(*i.args[k], ptype.width());
            CVal v;
            v.w = w;
            v.v = x;
            callee_frame.locals[pname] = v;
          }
        }
        callee_frame.has_ret_dest = has_dest;
        callee_frame.ret_dest = i.name;
        callee_frame.control.push_back({&fn->body, 0, nullptr});
        f.control.back().idx++;
        frames.push_back(std::move(callee_frame));
        normalize();
        return;
      }
      case Instr::K::Assign: {
        if (i.index) {
          auto [iw, idx] = eval(*i.index, 32);
          (void)iw;
          CVal* v = find(i.name);
          if (!v || !v->is_buf)
            throw ConcreteError("'" + i.name + "' is not a buffer");
          if (idx >= v->bytes.size())
            throw ConcreteError("index out of bounds for '" + i.name + "'");
          auto [w, x] = eval(*i.expr, 8);
          (void)w;
          v->bytes[idx] = uint8_t(x);
          advance();
          return;
        }
        CVal* v = find(i.name);
        if (!v || v->is_buf)
          throw ConcreteError("bad assignment target '" + i.name + "'");
        auto [w, x] = eval(*i.expr, v->w);
        (void)w;
        v->v = x & width_mask(v->w);
        advance();
        return;
      }
      case Instr::K::If: {
        auto [w, x] = eval(*i.expr, 32);
        (void)w;
        f.control.back().idx++;
        const Block* blk = x ? &i.then_block : &i.else_block;
        if (!blk->empty()) f.control.push_back({blk, 0, nullptr});
        normalize();
        return;
      }
      case Instr::K::While: {
        auto [w, x] = eval(*i.expr, 32);
        (void)w;
        if (x) {
          f.control.push_back({&i.then_block, 0, &i});
          normalize();
        } else {
          advance();
        }
        return;
      }
      case Instr::K::Send: {
        Bytes wire;
        for (const auto& a : i.args) {
          Bytes b = arg_bytes(*a, 0);
          wire.insert(wire.end(), b.begin(), b.end());
        }
        out.io.emplace_back(Dir::C2S, std::move(wire));
        advance();
        return;
      }
      case Instr::K::Recv: {
        CVal* v = find(i.name);
        if (!v || !v->is_buf)
          throw ConcreteError("recv destination is not a buffer");
        if (server_pos >= in.server.size())
          throw ConcreteError("client expects more server messages than scripted");
        const ServerAction& act = in.server[server_pos++];
        Bytes data;
        if (act.k == ServerAction::K::Static) {
          data = act.data;
        } else {
          for (auto it = out.io.rbegin(); it != out.io.rend(); ++it) {
            if (it->first == Dir::C2S) {
              data = it->second;
              break;
            }
          }
          if (data.empty())
            throw ConcreteError("echo action without a prior client message");
        }
        if (data.size() > v->bytes.size())
          throw ConcreteError("server message overflows destination buffer");
        for (size_t j = 0; j < data.size(); ++j) v->bytes[j] = data[j];
        out.io.emplace_back(Dir::S2C, std::move(data));
        advance();
        return;
      }
      case Instr::K::Return: {
        std::optional<std::pair<Width, uint64_t>> val;
        if (i.expr) val = eval(*i.expr, 32);
        bool expects = f.has_ret_dest;
        std::string dest = f.ret_dest;
        frames.pop_back();
        if (expects) {
          if (!val) throw ConcreteError("function returned no value");
          if (frames.empty()) throw ConcreteError("return from entry");
          CVal v;
          v.w = val->first;
          v.v = val->second;
          frames.back().locals[dest] = v;
        }
        normalize();
        return;
      }
    }
  }
};

}  // namespace concdetail

inline ConcreteRun run_concrete(const Program& p, const ProhibitiveRegistry& r,
                                const GenInputs& inputs,
                                uint64_t step_budget = 1'000'000) {
  concdetail::Interp interp(p, r, inputs, step_budget);
  interp.run();
  return std::move(interp.out);
}

// ---------------------------------------------------------------------
// Trace generation: concrete run plus synthetic arrival times.

struct TimingProfile {
  enum class K { Uniform, Burst };
  K k = K::Uniform;
  uint64_t start_ms = 0;
  uint64_t gap_ms = 10;        // Uniform: per message
  uint32_t burst_size = 4;     // Burst: messages per burst
  uint64_t burst_gap_ms = 200; // Burst: gap between bursts
};

inline MessageTrace generate_trace(const Program& p,
                                   const ProhibitiveRegistry& r,
                                   const GenInputs& inputs,
                                   const TimingProfile& timing = {}) {
  ConcreteRun run = run_concrete(p, r, inputs);
  MessageTrace t;
  t.metadata = inputs.metadata;
  for (const auto& [k, v] : run.recorded_injections) {
    bool seen = false;
    for (auto& [k2, v2] : t.metadata)
      if (k2 == k) seen = true;
    if (!seen) t.metadata.emplace_back(k, v);
  }
  for (size_t i = 0; i < run.io.size(); ++i) {
    Message m;
    m.dir = run.io[i].first;
    m.payload = run.io[i].second;
    if (timing.k == TimingProfile::K::Uniform) {
      m.arrival_ms = timing.start_ms + uint64_t(i) * timing.gap_ms;
    } else {
      uint64_t burst = uint64_t(i) / timing.burst_size;
      uint64_t slot = uint64_t(i) % timing.burst_size;
      m.arrival_ms = timing.start_ms + burst * timing.burst_gap_ms + slot;
    }
    t.messages.push_back(std::move(m));
  }
  return t;
}

}  // namespace cbv
