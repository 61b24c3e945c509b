#pragma once

// The parallel multipass verification engine.
//
// Per message, ParallelVerify spawns one scheduler and NumWorkers worker
// threads over a node tree rooted at the current execution prefix.
// Workers pull ready nodes from QR (single-producer multi-consumer
// priority queue), step them to the next network instruction, symbolic
// branch, or prohibitive call, and push new nodes onto QA (multi-producer
// single-consumer); the scheduler prioritizes QA into QR. Reaching a send
// whose constraints reconcile with the observed message either completes
// the multipass fixpoint (success) or re-enqueues a clone of the root
// carrying the reconciled constraints as nd.saved for another pass.
//
// The session driver iterates messages, snapshots surviving nodes as the
// backtracking frontier after each success, and resumes from those
// frontiers when a later message cannot be explained.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <thread>
#include <vector>

#include "cbverify/check.hpp"
#include "cbverify/solver.hpp"
#include "cbverify/trace.hpp"
#include "cbverify/vm.hpp"

namespace cbv {

struct EngineConfigError : std::runtime_error {
  explicit EngineConfigError(const std::string& m) : std::runtime_error(m) {}
};

struct EngineConfig {
  unsigned workers = 8;
  uint64_t step_budget = 1'000'000;
  uint32_t solver_bits_budget = 64;
  uint64_t solver_enum_cap = 2'000'000;
  int64_t wall_clock_timeout_ms = -1;  // whole session; <0 disables
  bool drop_s2c_appdata = false;
  bool synthetic_cost = false;
  bool collect_log = true;
  Whitelist whitelist = default_whitelist();

  VmLimits vm_limits() const {
    VmLimits l;
    l.solver.bits_budget = solver_bits_budget;
    l.solver.enum_step_cap = solver_enum_cap;
    l.step_budget = step_budget;
    return l;
  }
};

// Snapshot of what a pass learned: per-symbol Forced/Free statuses of the
// reconciled set and the set of calls skipped on the reconciling path.
// A later pass that reproduces both has revealed no more information.
struct SavedMeta {
  std::map<uint64_t, std::optional<uint64_t>> statuses;
  std::set<uint32_t> skipped_events;

  friend bool operator==(const SavedMeta& a, const SavedMeta& b) {
    return a.statuses == b.statuses && a.skipped_events == b.skipped_events;
  }
};

struct Node {
  uint64_t seq = 0;
  ExecState state;
  ConstraintSet saved;  // empty until the first reconciliation of the msg
  std::optional<SavedMeta> saved_meta;
  uint32_t pass_index = 0;
};

using NodePtr = std::shared_ptr<Node>;

struct PassEvent {
  enum class K {
    Reconciled, ProhibExec, ProhibInject, ProhibSkip, GeneratorFired,
    FixpointSuccess
  };
  K k;
  uint32_t pass = 0;
  std::string function;
  Bytes concrete_out;
  std::vector<std::pair<std::string, uint64_t>> forced;  // label -> value
};

enum class NodeDeath : uint8_t {
  Halt, Contradiction, DirectionMismatch, Budget, StepBudget, ExecFault,
  Banned
};

struct VerifyOutcome {
  enum class Status { Success, Exhausted, Timeout };
  Status status = Status::Exhausted;
  NodePtr result;           // state retired past the net instr
  uint32_t passes = 0;      // executions used by the winning lineage
  std::vector<NodePtr> survivors;
  bool budget_deaths = false;
  bool direction_only_exhaust = false;  // every net-front death was direction
  uint64_t steps_total = 0;
  uint64_t nodes_created = 0;
  std::vector<PassEvent> log;
};

namespace engdetail {

struct NodeCmp {
  // min-heap by (symbolic-branch count, creation sequence)
  bool operator()(const NodePtr& a, const NodePtr& b) const {
    if (a->state.branch_count != b->state.branch_count)
      return a->state.branch_count > b->state.branch_count;
    return a->seq > b->seq;
  }
};

class ReadyQueue {
  std::mutex mu_;
  std::vector<NodePtr> heap_;
  std::condition_variable cv_;

 public:
  void push(NodePtr n) {
    {
      std::lock_guard<std::mutex> lk(mu_);
      heap_.push_back(std::move(n));
      std::push_heap(heap_.begin(), heap_.end(), NodeCmp{});
    }
    cv_.notify_one();
  }
  // May return null even when nonempty moments before: callers loop.
  NodePtr try_pop() {
    std::lock_guard<std::mutex> lk(mu_);
    if (heap_.empty()) return nullptr;
    std::pop_heap(heap_.begin(), heap_.end(), NodeCmp{});
    NodePtr n = std::move(heap_.back());
    heap_.pop_back();
    return n;
  }
  void wait_nonempty(std::chrono::milliseconds d) {
    std::unique_lock<std::mutex> lk(mu_);
    cv_.wait_for(lk, d, [&] { return !heap_.empty(); });
  }
  std::vector<NodePtr> drain() {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<NodePtr> out = std::move(heap_);
    heap_.clear();
    return out;
  }
  void notify_all() { cv_.notify_all(); }
};

class AddedQueue {
  std::mutex mu_;
  std::deque<NodePtr> q_;
  std::condition_variable cv_;

 public:
  void push(NodePtr n) {
    {
      std::lock_guard<std::mutex> lk(mu_);
      q_.push_back(std::move(n));
    }
    cv_.notify_one();
  }
  std::vector<NodePtr> pop_all(std::chrono::milliseconds d) {
    std::unique_lock<std::mutex> lk(mu_);
    if (q_.empty()) cv_.wait_for(lk, d, [&] { return !q_.empty(); });
    std::vector<NodePtr> out(q_.begin(), q_.end());
    q_.clear();
    return out;
  }
  std::vector<NodePtr> drain() {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<NodePtr> out(q_.begin(), q_.end());
    q_.clear();
    return out;
  }
  void notify_all() { cv_.notify_all(); }
};

// Shared state of one ParallelVerify invocation.
struct VerifyShared {
  const Message* msg = nullptr;
  const RegistryRuntime* rt = nullptr;
  VmLimits limits;
  bool collect_log = false;
  std::optional<std::chrono::steady_clock::time_point> deadline;
  const std::set<uint64_t>* banned_paths = nullptr;

  NodePtr root;
  ReadyQueue qr;
  AddedQueue qa;
  std::atomic<bool> done{false};
  std::atomic<bool> timed_out{false};
  std::atomic<int64_t> outstanding{0};
  std::atomic<uint64_t> seq{1};
  std::atomic<uint64_t> steps_total{0};
  std::atomic<uint64_t> nodes_created{0};

  std::mutex rslt_mu;
  NodePtr rslt;
  uint32_t rslt_passes = 0;

  std::atomic<uint64_t> deaths_direction{0};
  std::atomic<uint64_t> deaths_budget{0};
  std::atomic<uint64_t> deaths_other{0};
  std::atomic<uint64_t> net_front_total{0};  // nodes that died at a net instr

  std::mutex survivors_mu;
  std::vector<NodePtr> survivors;

  std::mutex log_mu;
  std::vector<PassEvent> log;

  void add_event(PassEvent e) {
    if (!collect_log) return;
    std::lock_guard<std::mutex> lk(log_mu);
    if (log.size() < 100000) log.push_back(std::move(e));
  }

  void finish() {
    done.store(true);
    qr.notify_all();
    qa.notify_all();
  }

  bool past_deadline() {
    if (!deadline) return false;
    if (std::chrono::steady_clock::now() < *deadline) return false;
    timed_out.store(true);
    finish();
    return true;
  }

  void retire_one() {
    if (outstanding.fetch_sub(1) == 1) finish();  // tree exhausted
  }

  void surrender(NodePtr nd) {
    std::lock_guard<std::mutex> lk(survivors_mu);
    survivors.push_back(std::move(nd));
  }
};

inline SavedMeta compute_meta(const ConstraintSet& candidate,
                              const std::vector<SkippedCall>& skipped,
                              const SolverLimits& limits) {
  SavedMeta m;
  std::vector<SymId> targets;
  for (const auto& [k, w] : candidate.symbol_widths())
    targets.push_back(sym_from_key(k));
  m.statuses = concretize(candidate, targets, limits);
  for (const auto& sc : skipped) m.skipped_events.insert(sc.event);
  return m;
}

inline void record_death(VerifyShared& sh, NodeDeath why, bool at_net_front) {
  if (at_net_front) sh.net_front_total.fetch_add(1);
  switch (why) {
    case NodeDeath::DirectionMismatch: sh.deaths_direction.fetch_add(1); break;
    case NodeDeath::Budget:
    case NodeDeath::StepBudget: sh.deaths_budget.fetch_add(1); break;
    default: sh.deaths_other.fetch_add(1); break;
  }
}

// Handles a node whose execution reached a network instruction. Returns
// true if the node was consumed (success, re-pass, or death).
inline void handle_net_instr(VerifyShared& sh, NodePtr nd, ExecState work,
                             bool is_send) {
  const Message& msg = *sh.msg;
  ConstraintSet candidate;
  if (is_send) {
    ReconcileResult rr = reconcile_send(work, msg, sh.limits);
    if (std::holds_alternative<Contradiction>(rr)) {
      const auto& c = std::get<Contradiction>(rr);
      record_death(sh,
                   c.reason == Contradiction::Reason::Direction
                       ? NodeDeath::DirectionMismatch
                       : NodeDeath::Contradiction,
                   true);
      sh.retire_one();
      return;
    }
    candidate = std::get<ConstraintSet>(rr);
  } else {
    if (msg.dir != Dir::S2C) {
      record_death(sh, NodeDeath::DirectionMismatch, true);
      sh.retire_one();
      return;
    }
    if (msg.payload.size() > recv_dest_capacity(work)) {
      record_death(sh, NodeDeath::Contradiction, true);
      sh.retire_one();
      return;
    }
    candidate = work.cons;
  }

  // lazy constraint generators may extend the reconciled set
  GeneratorOutcome gen =
      fire_lazy_generators(work.skipped, candidate, sh.limits.solver);
  if (gen.contradiction) {
    record_death(sh, NodeDeath::Contradiction, true);
    sh.retire_one();
    return;
  }
  candidate = gen.cons;
  for (uint32_t ev : gen.fired_events) {
    PassEvent e;
    e.k = PassEvent::K::GeneratorFired;
    e.pass = nd->pass_index;
    e.function = "event " + std::to_string(ev);
    sh.add_event(std::move(e));
  }

  // fixpoint test: nothing new compared to nd.saved
  bool fixpoint = false;
  std::optional<SavedMeta> meta;
  if (candidate.empty() && nd->saved.empty()) {
    fixpoint = true;  // fully concrete path: reconciliation is a tautology
  } else {
    try {
      meta = compute_meta(candidate, work.skipped, sh.limits.solver);
    } catch (const BudgetExceededError&) {
      record_death(sh, NodeDeath::Budget, true);
      sh.retire_one();
      return;
    }
    if (sh.collect_log) {
      PassEvent e;
      e.k = PassEvent::K::Reconciled;
      e.pass = nd->pass_index;
      for (const auto& [key, st] : meta->statuses)
        if (st) e.forced.emplace_back(sym_label(sym_from_key(key)), *st);
      sh.add_event(std::move(e));
    }
    fixpoint = nd->saved_meta.has_value() && *meta == *nd->saved_meta;
  }

  if (fixpoint) {
    if (sh.banned_paths && !sh.banned_paths->empty()) {
      PathChain p = work.path;
      p.push(vmdetail::current_instr(work)->id);
      if (sh.banned_paths->count(p.fingerprint())) {
        record_death(sh, NodeDeath::Banned, true);
        sh.retire_one();
        return;
      }
    }
    // success: first writer wins, late successes are discarded
    std::lock_guard<std::mutex> lk(sh.rslt_mu);
    if (!sh.rslt) {
      if (is_send) {
        retire_send(work, candidate, sh.limits);
      } else {
        auto contra = apply_recv(work, msg, sh.limits);
        if (contra) {  // length overflow of the destination buffer
          record_death(sh, NodeDeath::Contradiction, true);
          sh.retire_one();
          return;
        }
        work.cons = candidate;
      }
      auto result = std::make_shared<Node>();
      result->seq = sh.seq.fetch_add(1);
      result->state = std::move(work);
      result->pass_index = nd->pass_index;
      sh.rslt = result;
      sh.rslt_passes = nd->pass_index + 1;
      PassEvent e;
      e.k = PassEvent::K::FixpointSuccess;
      e.pass = nd->pass_index;
      sh.add_event(std::move(e));
      sh.finish();
    }
    sh.retire_one();
    return;
  }

  // replay from the root of this message's tree with the reconciled
  // constraints saved
  auto fresh = std::make_shared<Node>();
  fresh->seq = sh.seq.fetch_add(1);
  fresh->state = sh.root->state;  // clone of the prefix state
  fresh->state.skipped = sh.root->state.skipped;
  fresh->saved = candidate;
  fresh->saved_meta = std::move(meta);
  fresh->pass_index = nd->pass_index + 1;
  sh.outstanding.fetch_add(1);
  sh.nodes_created.fetch_add(1);
  sh.qa.push(std::move(fresh));
  sh.retire_one();
}

inline void worker_loop(VerifyShared& sh, const ProhibitiveRegistry& defs) {
  while (!sh.done.load()) {
    if (sh.past_deadline()) return;
    NodePtr nd = sh.qr.try_pop();
    if (!nd) {
      sh.qr.wait_nonempty(std::chrono::milliseconds(1));
      continue;
    }
    // The state is moved out while the worker advances it; an
    // interrupted worker moves it back and surrenders the node to the
    // backtracking frontier (partial fragment progress is resumable).
    try {
      ExecState work = std::move(nd->state);
      uint64_t polled = 0;
      uint64_t local_steps = 0;
      bool consumed = false;
      while (!consumed) {
        if ((++polled & 0x3ff) == 0 &&
            (sh.done.load() || sh.past_deadline())) {
          sh.steps_total.fetch_add(local_steps);
          nd->state = std::move(work);
          sh.surrender(std::move(nd));
          return;
        }
        Classified c = classify(work, defs);
        switch (c.k) {
          case InstrClass::Normal:
            exec_step(work, defs, sh.limits);
            ++local_steps;
            break;
          case InstrClass::Halt:
            record_death(sh, NodeDeath::Halt, false);
            sh.retire_one();
            consumed = true;
            break;
          case InstrClass::ProhibitiveCall: {
            ProhibStepInfo info =
                exec_step_prohibitive(work, nd->saved, *sh.rt, sh.limits);
            ++local_steps;
            if (sh.collect_log) {
              PassEvent e;
              e.pass = nd->pass_index;
              e.function = info.function;
              e.concrete_out = info.concrete_output;
              e.k = info.outcome == ProhibStepInfo::Outcome::ExecutedConcretely
                        ? PassEvent::K::ProhibExec
                    : info.outcome == ProhibStepInfo::Outcome::Injected
                        ? PassEvent::K::ProhibInject
                        : PassEvent::K::ProhibSkip;
              sh.add_event(std::move(e));
            }
            // hand the node back through the queues (paper discipline)
            nd->state = std::move(work);
            sh.qa.push(std::move(nd));
            consumed = true;
            break;
          }
          case InstrClass::SymbolicBranch: {
            ForkResult fr = fork_branch(work, defs, sh.limits);
            ++local_steps;
            int children = 0;
            for (auto* side : {&fr.on_false, &fr.on_true}) {
              if (!side->has_value()) continue;
              auto child = std::make_shared<Node>();
              child->seq = sh.seq.fetch_add(1);
              child->state = std::move(**side);
              child->saved = nd->saved;
              child->saved_meta = nd->saved_meta;
              child->pass_index = nd->pass_index;
              sh.outstanding.fetch_add(1);
              sh.nodes_created.fetch_add(1);
              sh.qr.push(std::move(child));  // EXPERIMENT
              ++children;
            }
            if (children == 0) record_death(sh, NodeDeath::Contradiction, false);
            sh.retire_one();
            consumed = true;
            break;
          }
          case InstrClass::NetSend:
          case InstrClass::NetRecv:
            handle_net_instr(sh, nd, std::move(work),
                             c.k == InstrClass::NetSend);
            consumed = true;
            break;
        }
      }
      sh.steps_total.fetch_add(local_steps);
    } catch (const BudgetExceededError&) {
      record_death(sh, NodeDeath::Budget, false);
      sh.retire_one();
    } catch (const ExecError& e) {
      record_death(sh,
                   e.kind == ExecError::Kind::StepBudgetExceeded
                       ? NodeDeath::StepBudget
                       : NodeDeath::ExecFault,
                   false);
      sh.retire_one();
    } catch (...) {
      // contain worker-level faults; the node is recorded dead
      record_death(sh, NodeDeath::ExecFault, false);
      sh.retire_one();
    }
  }
}

inline void scheduler_loop(VerifyShared& sh) {
  while (!sh.done.load()) {
    auto batch = sh.qa.pop_all(std::chrono::milliseconds(1));
    for (auto& nd : batch) sh.qr.push(std::move(nd));
  }
}

}  // namespace engdetail

// Explore execution fragments from `root` (the prefix consistent with
// messages 0..n-1) to explain `msg`. Seeds are the initial ready nodes;
// the default seed is a clone of the root.
inline VerifyOutcome parallel_verify(
    NodePtr root, std::vector<NodePtr> seeds, const Message& msg,
    const RegistryRuntime& rt, const EngineConfig& cfg,
    std::optional<std::chrono::steady_clock::time_point> deadline = {},
    const std::set<uint64_t>* banned_paths = nullptr) {
  using namespace engdetail;
  VerifyShared sh;
  sh.msg = &msg;
  sh.rt = &rt;
  sh.limits = cfg.vm_limits();
  sh.collect_log = cfg.collect_log;
  sh.deadline = deadline;
  sh.banned_paths = banned_paths;
  sh.root = root;

  if (seeds.empty()) {
    auto seed = std::make_shared<Node>();
    seed->seq = sh.seq.fetch_add(1);
    seed->state = root->state;
    seeds.push_back(std::move(seed));
  }
  sh.outstanding.store(int64_t(seeds.size()));
  for (auto& s : seeds) sh.qr.push(std::move(s));

  unsigned nworkers = cfg.workers ? cfg.workers : 1;
  std::vector<std::thread> threads;
  threads.reserve(nworkers + 1);
  threads.emplace_back([&] { scheduler_loop(sh); });
  for (unsigned i = 0; i < nworkers; ++i)
    threads.emplace_back([&] { worker_loop(sh, *rt.defs); });
  for (auto& t : threads) t.join();

  VerifyOutcome out;
  out.steps_total = sh.steps_total.load();
  out.nodes_created = sh.nodes_created.load() + seeds.size();
  out.budget_deaths = sh.deaths_budget.load() > 0;
  out.log = std::move(sh.log);
  for (auto& nd : sh.qr.drain()) sh.survivors.push_back(std::move(nd));
  for (auto& nd : sh.qa.drain()) sh.survivors.push_back(std::move(nd));
  // virgin multipass clones would only redo the whole tree; drop them
  for (auto& nd : sh.survivors) {
    if (nd->pass_index > 0 && nd->state.steps == root->state.steps) continue;
    out.survivors.push_back(std::move(nd));
  }
  if (sh.rslt) {
    out.status = VerifyOutcome::Status::Success;
    out.result = sh.rslt;
    out.passes = sh.rslt_passes;
  } else if (sh.timed_out.load()) {
    out.status = VerifyOutcome::Status::Timeout;
  } else {
    out.status = VerifyOutcome::Status::Exhausted;
    uint64_t dir = sh.deaths_direction.load();
    out.direction_only_exhaust =
        dir > 0 && dir == sh.net_front_total.load() &&
        sh.deaths_budget.load() == 0;
  }
  return out;
}

// ---------------------------------------------------------------------
// Assumptions.

struct Assumption {
  std::string function;
  size_t arity = 0;
  std::vector<std::string> input_reprs;
  std::string output_repr;
  std::string text;
};

namespace engdetail {

inline std::string repr_of_bytes(const std::vector<Expr>& bytes,
                                 const ConstraintSet& cons,
                                 const SolverLimits& limits) {
  try {
    auto forced = forced_bytes(cons, bytes, limits);
    if (forced) return "0x" + hex_of(*forced);
  } catch (const BudgetExceededError&) {
  }
  for (Expr b : bytes) {
    if (b->has_syms) {
      std::set<uint64_t> syms;
      collect_symbols(b, syms);
      std::string l = sym_label(sym_from_key(*syms.begin()));
      size_t br = l.find('[');
      return br == std::string::npos ? l : l.substr(0, br);
    }
  }
  return "?";
}

inline std::string render_assumption(const SkippedCall& sc,
                                     const std::vector<std::string>& ins,
                                     const std::string& outr) {
  if (!sc.entry->assume_template.empty()) {
    std::string t = sc.entry->assume_template;
    auto replace_all = [&](const std::string& from, const std::string& to) {
      size_t p = 0;
      while ((p = t.find(from, p)) != std::string::npos) {
        t.replace(p, from.size(), to);
        p += to.size();
      }
    };
    replace_all("%name", sc.entry->name);
    replace_all("%out", outr);
    for (size_t k = 0; k < ins.size(); ++k)
      replace_all("%in" + std::to_string(k), ins[k]);
    return t;
  }
  std::string t = "exists ";
  bool first = true;
  for (const auto& r : ins) {
    if (r.rfind("0x", 0) == 0) continue;  // concrete inputs are not bound
    if (!first) t += ", ";
    t += r;
    first = false;
  }
  if (first) t += "_";
  t += ": " + sc.entry->name + "(";
  for (size_t k = 0; k < ins.size(); ++k) {
    if (k) t += ", ";
    t += ins[k];
  }
  t += ") = " + outr;
  return t;
}

}  // namespace engdetail

// One assumption per still-skipped call; each must match the whitelist.
struct AssumptionReport {
  std::vector<Assumption> assumptions;
  std::vector<std::string> violations;  // rendered, non-whitelisted
};

inline AssumptionReport collect_assumptions(
    const std::vector<SkippedCall>& skipped, const ConstraintSet& cons,
    const Whitelist& whitelist, const SolverLimits& limits = {}) {
  AssumptionReport out;
  for (const auto& sc : skipped) {
    Assumption a;
    a.function = sc.entry->name;
    a.arity = sc.input_bytes.size();
    for (const auto& in : sc.input_bytes)
      a.input_reprs.push_back(engdetail::repr_of_bytes(in, cons, limits));
    a.output_repr = engdetail::repr_of_bytes(sc.output_bytes, cons, limits);
    a.text = engdetail::render_assumption(sc, a.input_reprs, a.output_repr);
    if (!whitelist.allows(a.function, a.arity)) {
      out.violations.push_back(a.text);
    }
    out.assumptions.push_back(std::move(a));
  }
  return out;
}

// ---------------------------------------------------------------------
// Session driver.

struct MessageVerdict {
  enum class Why { Ok, SkippedS2C, Exhausted, Budget, Timeout };
  bool valid = false;
  Why why = Why::Exhausted;
  int64_t cost_ms = 0;
  uint32_t passes = 0;
  size_t size_bytes = 0;
  Dir dir = Dir::C2S;
  int64_t arrival_ms = 0;
  uint64_t steps = 0;  // fragment instructions of the accepted path
  uint64_t nodes_created = 0;
};

struct SessionVerdict {
  bool valid = false;
  enum class Reason { Ok, Exhausted, Budget, Whitelist };
  Reason reason = Reason::Ok;
  std::optional<size_t> invalid_index;
  std::vector<MessageVerdict> messages;
  std::vector<Assumption> assumptions;
  std::vector<std::string> whitelist_violations;
  std::vector<LagRecord> lag;
  std::vector<std::string> warnings;
  std::vector<std::vector<PassEvent>> logs;  // per message
  NodePtr final_node;
  uint64_t backtrack_events = 0;
};

inline RegistryRuntime make_registry_runtime(const ProhibitiveRegistry& defs,
                                             const MessageTrace& trace) {
  RegistryRuntime rt;
  rt.defs = &defs;
  for (const auto& name : defs.names()) {
    const InjectionPoint* ip = defs.injection_for(name);
    if (!ip) continue;
    auto v = trace.metadata_value(ip->metadata_key);
    if (!v)
      throw EngineConfigError("trace metadata lacks key '" +
                              ip->metadata_key + "' required to inject '" +
                              name + "'");
    rt.injected[ip->metadata_key] = *v;
  }
  return rt;
}

inline SessionVerdict verify_session(const Program& program,
                                     const MessageTrace& trace,
                                     const ProhibitiveRegistry& defs,
                                     const EngineConfig& cfg) {
  using Clock = std::chrono::steady_clock;
  SessionVerdict out;
  {
    auto diags = check_program(program, defs);
    if (!diags.empty())
      throw EngineConfigError("program fails check_program: " +
                              diags.front().message);
  }
  RegistryRuntime rt = make_registry_runtime(defs, trace);
  unsigned hw = std::thread::hardware_concurrency();
  if (hw && cfg.workers > hw)
    out.warnings.push_back("workers=" + std::to_string(cfg.workers) +
                           " exceeds logical cores (" + std::to_string(hw) +
                           ")");

  std::optional<Clock::time_point> deadline;
  if (cfg.wall_clock_timeout_ms >= 0)
    deadline = Clock::now() +
               std::chrono::milliseconds(cfg.wall_clock_timeout_ms);

  struct Level {
    NodePtr root;
    std::vector<NodePtr> frontier;
    std::set<uint64_t> banned;  // fingerprints of previously accepted paths
  };
  std::vector<Level> levels;
  NodePtr final_uncompacted;
  {
    auto root = std::make_shared<Node>();
    root->state = initial_state(program);
    levels.push_back(Level{std::move(root), {}, {}});
  }

  const size_t nmsgs = trace.messages.size();
  out.messages.resize(nmsgs);
  for (size_t i = 0; i < nmsgs; ++i) {
    out.messages[i].size_bytes = trace.messages[i].payload.size();
    out.messages[i].dir = trace.messages[i].dir;
    out.messages[i].arrival_ms = int64_t(trace.messages[i].arrival_ms);
  }
  out.logs.resize(nmsgs);

  size_t target = 0;
  while (target < nmsgs) {
    auto t0 = Clock::now();
    MessageVerdict& mv = out.messages[target];
    bool resolved = false;
    bool timed_out = false;
    bool budget_seen = false;
    bool direction_only = false;

    size_t cursor = target;
    std::vector<NodePtr> seeds;  // empty = fresh clone of level root

    while (!resolved && !timed_out) {
      Level& lv = levels[cursor];
      lv.root->state.steps = 0;  // fragment step counting per message
      VerifyOutcome oc = parallel_verify(
          lv.root, std::move(seeds), trace.messages[cursor], rt, cfg, deadline,
          lv.banned.empty() ? nullptr : &lv.banned);
      seeds.clear();
      if (cursor == target) out.logs[target] = std::move(oc.log);
      mv.nodes_created += oc.nodes_created;
      budget_seen |= oc.budget_deaths;

      if (oc.status == VerifyOutcome::Status::Success) {
        lv.frontier = std::move(oc.survivors);
        lv.banned.insert(oc.result->state.path.fingerprint());
        // History compaction: constraints that can no longer influence
        // reachable symbols are dropped before the state roots the next
        // message's tree. The uncompacted result is kept for reporting
        // (witnesses, assumptions).
        auto rooted = std::make_shared<Node>(*oc.result);
        rooted->state.cons = compact_constraints(
            rooted->state.cons, collect_live_symbols(rooted->state),
            cfg.vm_limits().solver);
        if (cursor + 1 == nmsgs) final_uncompacted = oc.result;
        if (levels.size() <= cursor + 1) levels.resize(cursor + 2);
        levels[cursor + 1] = Level{rooted, {}, {}};
        if (cursor == target) {
          mv.valid = true;
          mv.why = MessageVerdict::Why::Ok;
          mv.passes = oc.passes;
          mv.steps = oc.result->state.steps;
          resolved = true;
        } else {
          ++cursor;
        }
        continue;
      }
      if (oc.status == VerifyOutcome::Status::Timeout) {
        timed_out = true;
        break;
      }
      // exhausted
      if (cursor == target) direction_only = oc.direction_only_exhaust;
      if (cursor == target && cfg.drop_s2c_appdata &&
          trace.messages[target].dir == Dir::S2C) {
        // server-to-client data no live path can consume: ignore it
        mv.valid = true;
        mv.why = MessageVerdict::Why::SkippedS2C;
        if (levels.size() <= target + 1) levels.resize(target + 2);
        levels[target + 1] = Level{levels[target].root, {}, {}};
        resolved = true;
        continue;
      }
      // backtrack to the deepest level with remaining alternatives
      bool found = false;
      for (size_t m = cursor; m-- > 0;) {
        if (!levels[m].frontier.empty()) {
          out.backtrack_events++;
          seeds = std::move(levels[m].frontier);
          levels[m].frontier.clear();
          levels.resize(m + 1);
          cursor = m;
          found = true;
          break;
        }
      }
      if (!found) break;  // no alternatives anywhere: invalid
    }

    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                       Clock::now() - t0)
                       .count();
    if (cfg.synthetic_cost) {
      mv.cost_ms = resolved && mv.why == MessageVerdict::Why::Ok
                       ? int64_t(mv.steps)
                       : 0;
    } else {
      mv.cost_ms = elapsed;
    }

    if (!resolved) {
      mv.valid = false;
      mv.why = timed_out ? MessageVerdict::Why::Timeout
               : budget_seen ? MessageVerdict::Why::Budget
                             : MessageVerdict::Why::Exhausted;
      (void)direction_only;
      out.valid = false;
      out.reason = (timed_out || budget_seen) ? SessionVerdict::Reason::Budget
                                              : SessionVerdict::Reason::Exhausted;
      out.invalid_index = target;
      break;
    }
    ++target;
  }

  // metrics over the messages that were actually reached
  {
    std::vector<int64_t> arrivals, costs;
    size_t upto = out.invalid_index ? *out.invalid_index + 1 : nmsgs;
    for (size_t i = 0; i < upto; ++i) {
      arrivals.push_back(out.messages[i].arrival_ms);
      costs.push_back(out.messages[i].cost_ms);
    }
    out.lag = record_metrics(arrivals, costs);
  }

  if (out.invalid_index) return out;

  // session end: validate late-concretizable skipped calls, then emit
  // assumptions for the rest
  out.final_node = final_uncompacted ? final_uncompacted : levels[nmsgs].root;
  ExecState& fin = out.final_node->state;
  std::vector<SkippedCall> residual;
  SolverLimits slimits = cfg.vm_limits().solver;
  for (const auto& sc : fin.skipped) {
    bool validated = false;
    try {
      std::vector<Bytes> ins;
      bool all = true;
      for (const auto& in : sc.input_bytes) {
        auto f = forced_bytes(fin.cons, in, slimits);
        if (!f) {
          all = false;
          break;
        }
        ins.push_back(*f);
      }
      if (all) {
        Bytes outv = sc.entry->impl(ins);
        ConstraintSet cs = fin.cons;
        bool contra = false;
        for (size_t j = 0; j < outv.size() && !contra; ++j) {
          Expr eq = mk_binary(BinOp::Eq, sc.output_bytes[j],
                              mk_concrete(8, outv[j]));
          if (is_false(eq)) contra = true;
          else cs = cs.append(eq);
        }
        if (!contra) contra = !check_sat(cs, slimits).sat;
        if (contra) {
          out.valid = false;
          out.reason = SessionVerdict::Reason::Exhausted;
          out.invalid_index = nmsgs - 1;
          out.messages[nmsgs - 1].valid = false;
          out.messages[nmsgs - 1].why = MessageVerdict::Why::Exhausted;
          return out;
        }
        fin.cons = cs;
        validated = true;
      }
    } catch (const BudgetExceededError&) {
    }
    if (!validated) residual.push_back(sc);
  }

  AssumptionReport ar =
      collect_assumptions(residual, fin.cons, cfg.whitelist, slimits);
  out.assumptions = std::move(ar.assumptions);
  out.whitelist_violations = std::move(ar.violations);
  if (!out.whitelist_violations.empty()) {
    out.valid = false;
    out.reason = SessionVerdict::Reason::Whitelist;
    return out;
  }
  out.valid = true;
  out.reason = SessionVerdict::Reason::Ok;
  return out;
}

}  // namespace cbv
