// cbv: batch verification of recorded message traces against client
// programs, plus benchmarking and fixture generation.
//
//   cbv verify --program client.prog --trace session.trace
//   cbv bench  --program client.prog --trace session.trace --workers-list 1,8
//   cbv gen paper_example --out demos/
//   cbv report --records out/records.tsv --bucket-ms 1000 --out out/
//
// Exit codes: 0 valid, 1 invalid, 2 usage or input error, 3 bench
// verdict disagreement.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "cbverify/cbverify.hpp"

namespace fs = std::filesystem;
using namespace cbv;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

struct CommonOpts {
  std::string program_path;
  std::string trace_path;
  unsigned workers = 8;
  int64_t timeout_ms = -1;
  bool drop_s2c = false;
  bool synthetic_cost = false;
  std::string whitelist_path;
  std::string registry_path;
  std::string out_dir;
  uint64_t seed = 1;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--program", o.program_path, "client program file")
      ->required();
  cmd->add_option("--trace", o.trace_path, "message trace file")->required();
  cmd->add_option("--workers", o.workers, "worker threads per engine");
  cmd->add_option("--timeout-ms", o.timeout_ms,
                  "wall-clock budget for the whole session");
  cmd->add_flag("--drop-s2c", o.drop_s2c,
                "ignore server-to-client application data");
  cmd->add_flag("--synthetic-cost", o.synthetic_cost,
                "deterministic cost = instructions retired on the accepted "
                "fragment");
  cmd->add_option("--whitelist", o.whitelist_path, "assumption whitelist file");
  cmd->add_option("--registry", o.registry_path,
                  "prohibitive-function declaration file");
  cmd->add_option("--out", o.out_dir, "output directory for TSV reports");
  cmd->add_option("--seed", o.seed, "fixture generation seed");
}

EngineConfig config_of(const CommonOpts& o) {
  EngineConfig cfg;
  cfg.workers = o.workers;
  cfg.wall_clock_timeout_ms = o.timeout_ms;
  cfg.drop_s2c_appdata = o.drop_s2c;
  cfg.synthetic_cost = o.synthetic_cost;
  cfg.collect_log = false;
  if (!o.whitelist_path.empty())
    cfg.whitelist = parse_whitelist(read_file(o.whitelist_path));
  return cfg;
}

ProhibitiveRegistry registry_of(const CommonOpts& o) {
  ProhibitiveRegistry reg = builtin_suite();
  if (!o.registry_path.empty())
    reg = parse_registry_file(read_file(o.registry_path), std::move(reg));
  return reg;
}

std::string records_tsv(const SessionVerdict& v) {
  std::ostringstream os;
  os << "msg\tdirection\tsize_bytes\tarrival_ms\tcost_ms\tlag_ms\n";
  for (size_t i = 0; i < v.lag.size(); ++i) {
    const MessageVerdict& m = v.messages[i];
    os << i << "\t" << dir_name(m.dir) << "\t" << m.size_bytes << "\t"
       << m.arrival_ms << "\t" << m.cost_ms << "\t" << v.lag[i].lag_ms
       << "\n";
  }
  return os.str();
}

void print_verdict(const SessionVerdict& v, std::ostream& os) {
  for (size_t i = 0; i < v.lag.size(); ++i) {
    const MessageVerdict& m = v.messages[i];
    os << "msg " << i << " " << (m.valid ? "VALID" : "INVALID")
       << " cost_ms=" << m.cost_ms << " lag_ms=" << v.lag[i].lag_ms << "\n";
  }
  for (const auto& a : v.assumptions) os << "assume " << a.text << "\n";
  for (const auto& w : v.whitelist_violations)
    os << "assume-rejected " << w << "\n";
  os << "VERDICT " << (v.valid ? "VALID" : "INVALID") << "\n";
}

int cmd_verify(const CommonOpts& o, unsigned sessions) {
  Program program = parse_program(read_file(o.program_path));
  MessageTrace trace = parse_trace(read_file(o.trace_path));
  ProhibitiveRegistry reg = registry_of(o);
  auto diags = check_program(program, reg);
  if (!diags.empty()) {
    for (const auto& d : diags)
      std::cerr << "error[" << d.code << "] " << d.pos.line << ":" << d.pos.col
                << ": " << d.message << "\n";
    return 2;
  }
  EngineConfig cfg = config_of(o);

  SessionVerdict v;
  if (sessions <= 1) {
    v = verify_session(program, trace, reg, cfg);
  } else {
    // independent engine instances over the same capture
    std::vector<std::future<SessionVerdict>> futs;
    for (unsigned s = 0; s < sessions; ++s)
      futs.push_back(std::async(std::launch::async, [&] {
        return verify_session(program, trace, reg, cfg);
      }));
    std::vector<SessionVerdict> all;
    for (auto& f : futs) all.push_back(f.get());
    for (const auto& r : all)
      if (r.valid != all[0].valid)
        throw std::runtime_error("concurrent sessions disagree");
    v = std::move(all[0]);
    std::cout << "sessions " << sessions << " agree\n";
  }

  for (const auto& w : v.warnings) std::cerr << "warning: " << w << "\n";
  print_verdict(v, std::cout);
  if (!o.out_dir.empty())
    write_file(fs::path(o.out_dir) / "records.tsv", records_tsv(v));
  return v.valid ? 0 : 1;
}

int cmd_bench(const CommonOpts& o, std::vector<unsigned> workers_list) {
  Program program = parse_program(read_file(o.program_path));
  MessageTrace trace = parse_trace(read_file(o.trace_path));
  ProhibitiveRegistry reg = registry_of(o);
  if (workers_list.empty()) workers_list = {1, 8};
  if (workers_list.front() != 1) workers_list.insert(workers_list.begin(), 1);

  std::ostringstream costs;
  costs << "workers\tmsg\tcost_ms\tlag_ms\n";
  std::vector<SizeCostRow> size_cost;
  std::optional<bool> verdict;

  for (unsigned w : workers_list) {
    EngineConfig cfg = config_of(o);
    cfg.workers = w;
    SessionVerdict v = verify_session(program, trace, reg, cfg);
    for (size_t i = 0; i < v.lag.size(); ++i) {
      costs << w << "\t" << i << "\t" << v.messages[i].cost_ms << "\t"
            << v.lag[i].lag_ms << "\n";
      if (w == workers_list.front())
        size_cost.push_back(SizeCostRow{v.messages[i].size_bytes,
                                        v.messages[i].cost_ms,
                                        v.messages[i].dir});
    }
    int64_t total = 0;
    for (size_t i = 0; i < v.lag.size(); ++i) total += v.messages[i].cost_ms;
    std::cout << "workers=" << w
              << " verdict=" << (v.valid ? "VALID" : "INVALID")
              << " total_cost_ms=" << total << "\n";
    if (!verdict) {
      verdict = v.valid;
    } else if (*verdict != v.valid) {
      std::cerr << "error: verdicts disagree across worker counts\n";
      return 3;
    }
  }
  if (!o.out_dir.empty()) {
    write_file(fs::path(o.out_dir) / "bench_costs.tsv", costs.str());
    write_file(fs::path(o.out_dir) / "bench_size_cost.tsv",
               format_size_cost_tsv(size_cost));
  }
  return *verdict ? 0 : 1;
}

int cmd_gen(const std::string& demo, const std::string& out_dir, uint64_t seed,
            uint32_t pad, uint32_t records) {
  fs::path out = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
  DemoParams params;
  params.seed = seed;
  params.pad = pad;
  params.records = records;

  if (demo == "union_handshake") {
    Demo a = make_demo("toy_handshake", params);
    Demo b = make_demo("toy_handshake_v2", params);
    Program u = build_union_client(a.program, b.program);
    write_file(out / "union_handshake.prog", pretty_print(u));
    write_file(out / "union_handshake.registry", "inject TOYKDF from master\n");
    write_file(out / "union_handshake.v1.trace",
               serialize_trace(demo_benign_trace(a)));
    write_file(out / "union_handshake.v2.trace",
               serialize_trace(demo_benign_trace(b)));
    std::cout << "wrote union_handshake fixtures to " << out.string() << "\n";
    return 0;
  }

  Demo d = make_demo(demo, params);
  write_file(out / (d.name + ".prog"), pretty_print(d.program));
  MessageTrace benign = demo_benign_trace(d);
  write_file(out / (d.name + ".benign.trace"), serialize_trace(benign));
  if (!d.attack_kind.empty()) {
    MessageTrace attack = make_attack_trace(d.attack_kind, benign);
    write_file(out / (d.name + ".attack.trace"), serialize_trace(attack));
  }
  std::ostringstream regfile;
  bool has_injection = false;
  for (const auto& fn : d.registry.names()) {
    if (const InjectionPoint* ip = d.registry.injection_for(fn)) {
      regfile << "inject " << ip->function << " from " << ip->metadata_key
              << "\n";
      has_injection = true;
    }
  }
  if (has_injection) write_file(out / (d.name + ".registry"), regfile.str());
  std::cout << "wrote " << d.name << " fixtures to " << out.string() << "\n";
  return 0;
}

int cmd_report(const std::string& records_path, int64_t bucket_ms,
               const std::string& out_dir) {
  std::istringstream in(read_file(records_path));
  std::string line;
  std::getline(in, line);  // header
  std::vector<int64_t> arrivals;
  std::vector<LagRecord> lags;
  std::vector<SizeCostRow> size_cost;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    size_t msg, size;
    std::string dir;
    int64_t arrival, cost, lag;
    if (!(ls >> msg >> dir >> size >> arrival >> cost >> lag))
      throw std::runtime_error("malformed records row: " + line);
    arrivals.push_back(arrival);
    LagRecord r;
    r.cost_ms = cost;
    r.lag_ms = lag;
    r.completion_ms = arrival + lag;
    lags.push_back(r);
    size_cost.push_back(
        SizeCostRow{size, cost, dir == "C2S" ? Dir::C2S : Dir::S2C});
  }
  std::string buckets =
      format_bucket_tsv(report_buckets(arrivals, lags, bucket_ms));
  std::string sc = format_size_cost_tsv(size_cost);
  if (out_dir.empty()) {
    std::cout << buckets << "\n" << sc;
  } else {
    write_file(fs::path(out_dir) / "lag_buckets.tsv", buckets);
    write_file(fs::path(out_dir) / "size_cost.tsv", sc);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"client-behavior verification engine"};
  app.require_subcommand(1);

  CommonOpts vo;
  unsigned sessions = 1;
  auto* verify =
      app.add_subcommand("verify", "verify a trace against a program");
  add_common(verify, vo);
  verify->add_option("--sessions", sessions,
                     "run this many independent engine instances");

  CommonOpts bo;
  std::string workers_csv;
  auto* bench = app.add_subcommand("bench", "compare worker counts");
  add_common(bench, bo);
  bench->add_option("--workers-list", workers_csv,
                    "comma-separated worker counts (1 is always included)");

  std::string demo, gen_out;
  uint64_t gen_seed = 1;
  uint32_t pad = 64, records = 20;
  auto* gen = app.add_subcommand("gen", "write demo program/trace fixtures");
  gen->add_option("demo", demo, "demo name or 'union_handshake'")->required();
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--pad", pad, "padded_records: max padding bytes");
  gen->add_option("--records", records, "padded_records: record count");

  std::string records_path, report_out;
  int64_t bucket_ms = 1000;
  auto* report =
      app.add_subcommand("report", "bucketed lag summary from records.tsv");
  report->add_option("--records", records_path, "records.tsv from verify --out")
      ->required();
  report->add_option("--bucket-ms", bucket_ms, "bucket width");
  report->add_option("--out", report_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*verify) return cmd_verify(vo, sessions);
    if (*bench) {
      std::vector<unsigned> ws;
      if (!workers_csv.empty()) {
        std::istringstream ss(workers_csv);
        std::string tok;
        while (std::getline(ss, tok, ','))
          ws.push_back(unsigned(std::stoul(tok)));
      }
      return cmd_bench(bo, ws);
    }
    if (*gen) return cmd_gen(demo, gen_out, gen_seed, pad, records);
    if (*report) return cmd_report(records_path, bucket_ms, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
