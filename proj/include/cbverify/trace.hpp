#pragma once

// Message traces and verification metrics (cost, completion, lag).
//
// Trace file format, one record per UTF-8 line:
//   #key <name>=<hex>            metadata (e.g. logged session secrets)
//   <DIR>|<arrival_ms>|<hex>     message, DIR in {C2S, S2C}, lowercase hex
// Other '#' lines are comments. Arrival times are non-decreasing.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbverify/registry.hpp"  // Bytes, hex helpers

namespace cbv {

enum class Dir : uint8_t { C2S, S2C };

inline const char* dir_name(Dir d) { return d == Dir::C2S ? "C2S" : "S2C"; }

struct Message {
  Dir dir = Dir::C2S;
  uint64_t arrival_ms = 0;
  Bytes payload;
};

struct MessageTrace {
  std::vector<Message> messages;
  std::vector<std::pair<std::string, Bytes>> metadata;  // insertion order

  std::optional<Bytes> metadata_value(const std::string& key) const {
    for (const auto& [k, v] : metadata)
      if (k == key) return v;
    return std::nullopt;
  }
};

struct MalformedLineError : std::runtime_error {
  int line;
  explicit MalformedLineError(int l)
      : std::runtime_error("malformed trace line " + std::to_string(l)),
        line(l) {}
};

struct NonMonotoneArrivalError : std::runtime_error {
  int line;
  explicit NonMonotoneArrivalError(int l)
      : std::runtime_error("arrival time decreases at line " +
                           std::to_string(l)),
        line(l) {}
};

inline MessageTrace parse_trace(const std::string& text) {
  MessageTrace t;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  uint64_t last_arrival = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("#key ", 0) == 0) {
        std::string rest = line.substr(5);
        size_t eq = rest.find('=');
        if (eq == std::string::npos || eq == 0) throw MalformedLineError(lineno);
        auto bytes = bytes_from_hex(rest.substr(eq + 1));
        if (!bytes) throw MalformedLineError(lineno);
        t.metadata.emplace_back(rest.substr(0, eq), *bytes);
      }
      continue;
    }
    size_t p1 = line.find('|');
    size_t p2 = p1 == std::string::npos ? std::string::npos
                                        : line.find('|', p1 + 1);
    if (p2 == std::string::npos) throw MalformedLineError(lineno);
    std::string dir = line.substr(0, p1);
    std::string at = line.substr(p1 + 1, p2 - p1 - 1);
    std::string hex = line.substr(p2 + 1);
    Message m;
    if (dir == "C2S") m.dir = Dir::C2S;
    else if (dir == "S2C") m.dir = Dir::S2C;
    else throw MalformedLineError(lineno);
    try {
      size_t used = 0;
      m.arrival_ms = std::stoull(at, &used);
      if (used != at.size()) throw MalformedLineError(lineno);
    } catch (const MalformedLineError&) {
      throw;
    } catch (...) {
      throw MalformedLineError(lineno);
    }
    auto payload = bytes_from_hex(hex);
    if (!payload) throw MalformedLineError(lineno);
    for (char c : hex)
      if (std::isupper(uint8_t(c))) throw MalformedLineError(lineno);
    m.payload = *payload;
    if (!t.messages.empty() && m.arrival_ms < last_arrival)
      throw NonMonotoneArrivalError(lineno);
    last_arrival = m.arrival_ms;
    t.messages.push_back(std::move(m));
  }
  return t;
}

inline std::string serialize_trace(const MessageTrace& t) {
  std::ostringstream os;
  for (const auto& [k, v] : t.metadata)
    os << "#key " << k << "=" << hex_of(v) << "\n";
  for (const auto& m : t.messages)
    os << dir_name(m.dir) << "|" << m.arrival_ms << "|" << hex_of(m.payload)
       << "\n";
  return os.str();
}

// ---------------------------------------------------------------------
// Metrics. completion_0 = cost_0; completion_n = max(arrival_n,
// completion_{n-1}) + cost_n; lag_n = completion_n - arrival_n. The
// corrected_first variant counts arrival_0 into completion_0 for traces
// that do not start at t=0.

struct LagRecord {
  int64_t cost_ms = 0;
  int64_t completion_ms = 0;
  int64_t lag_ms = 0;
};

struct LengthMismatchError : std::runtime_error {
  LengthMismatchError() : std::runtime_error("arrivals/costs length mismatch") {}
};

inline std::vector<LagRecord> record_metrics(const std::vector<int64_t>& arrivals,
                                             const std::vector<int64_t>& costs,
                                             bool corrected_first = false) {
  if (arrivals.size() != costs.size()) throw LengthMismatchError();
  std::vector<LagRecord> out;
  out.reserve(arrivals.size());
  int64_t prev_completion = 0;
  for (size_t n = 0; n < arrivals.size(); ++n) {
    LagRecord r;
    r.cost_ms = costs[n];
    if (n == 0) {
      r.completion_ms =
          corrected_first ? std::max<int64_t>(arrivals[0], 0) + costs[0]
                          : costs[0];
    } else {
      r.completion_ms = std::max(arrivals[n], prev_completion) + costs[n];
    }
    r.lag_ms = r.completion_ms - arrivals[n];
    prev_completion = r.completion_ms;
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------
// Report: per-bucket lag quartiles plus the flat size-vs-cost pairs used
// for the linearity check.

struct BucketRow {
  int64_t bucket_start_ms = 0;
  int64_t min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  double mean = 0.0;
  size_t n = 0;
};

inline std::vector<BucketRow> report_buckets(
    const std::vector<int64_t>& arrivals, const std::vector<LagRecord>& records,
    int64_t bucket_ms) {
  if (bucket_ms <= 0) throw std::invalid_argument("bucket_ms must be positive");
  if (arrivals.size() != records.size()) throw LengthMismatchError();
  std::vector<BucketRow> out;
  if (records.empty()) return out;
  std::map<int64_t, std::vector<int64_t>> buckets;
  for (size_t i = 0; i < records.size(); ++i) {
    int64_t b = arrivals[i] / bucket_ms * bucket_ms;
    buckets[b].push_back(records[i].lag_ms);
  }
  for (auto& [start, lags] : buckets) {
    std::sort(lags.begin(), lags.end());
    BucketRow r;
    r.bucket_start_ms = start;
    r.n = lags.size();
    r.min = lags.front();
    r.max = lags.back();
    r.q1 = lags[(lags.size() - 1) / 4];
    r.median = lags[(lags.size() - 1) / 2];
    r.q3 = lags[(lags.size() - 1) * 3 / 4];
    double sum = 0;
    for (int64_t v : lags) sum += double(v);
    r.mean = sum / double(lags.size());
    out.push_back(r);
  }
  return out;
}

struct SizeCostRow {
  size_t msg_size_bytes = 0;
  int64_t cost_ms = 0;
  Dir dir = Dir::C2S;
};

inline std::string format_bucket_tsv(const std::vector<BucketRow>& rows) {
  std::ostringstream os;
  os << "bucket_start_ms\tmin\tq1\tmedian\tq3\tmax\tmean\tn\n";
  for (const auto& r : rows) {
    char mean[32];
    std::snprintf(mean, sizeof mean, "%.3f", r.mean);
    os << r.bucket_start_ms << "\t" << r.min << "\t" << r.q1 << "\t"
       << r.median << "\t" << r.q3 << "\t" << r.max << "\t" << mean << "\t"
       << r.n << "\n";
  }
  return os.str();
}

inline std::string format_size_cost_tsv(const std::vector<SizeCostRow>& rows) {
  std::ostringstream os;
  os << "msg_size_bytes\tcost_ms\tdirection\n";
  for (const auto& r : rows)
    os << r.msg_size_bytes << "\t" << r.cost_ms << "\t" << dir_name(r.dir)
       << "\n";
  return os.str();
}

// Pearson correlation, used by the size-vs-cost linearity check.
inline double pearson(const std::vector<double>& xs,
                      const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) return 0.0;
  double n = double(xs.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    syy += ys[i] * ys[i];
    sxy += xs[i] * ys[i];
  }
  double cov = sxy - sx * sy / n;
  double vx = sxx - sx * sx / n;
  double vy = syy - sy * sy / n;
  if (vx <= 0 || vy <= 0) return 0.0;
  return cov / std::sqrt(vx * vy);
}

}  // namespace cbv
