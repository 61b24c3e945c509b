#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cbverify/trace.hpp"

using namespace cbv;

TEST_CASE("trace parsing") {
  SECTION("message line") {
    MessageTrace t = parse_trace("C2S|0|12349dac\n");
    REQUIRE(t.messages.size() == 1);
    REQUIRE(t.messages[0].dir == Dir::C2S);
    REQUIRE(t.messages[0].arrival_ms == 0);
    REQUIRE(t.messages[0].payload == Bytes{0x12, 0x34, 0x9D, 0xAC});
  }
  SECTION("metadata and comments") {
    MessageTrace t = parse_trace(
        "# a comment\n#key master=00ff\nC2S|5|ab\nS2C|9|\n");
    REQUIRE(t.metadata.size() == 1);
    REQUIRE(*t.metadata_value("master") == Bytes{0x00, 0xFF});
    REQUIRE(t.messages.size() == 2);
    REQUIRE(t.messages[1].payload.empty());
  }
  SECTION("decreasing arrival") {
    REQUIRE_THROWS_AS(parse_trace("C2S|10|ab\nC2S|5|cd\n"),
                      NonMonotoneArrivalError);
  }
  SECTION("malformed lines") {
    REQUIRE_THROWS_AS(parse_trace("C2S|x|ab\n"), MalformedLineError);
    REQUIRE_THROWS_AS(parse_trace("X2X|1|ab\n"), MalformedLineError);
    REQUIRE_THROWS_AS(parse_trace("C2S|1|abc\n"), MalformedLineError);
    REQUIRE_THROWS_AS(parse_trace("C2S|1|AB\n"), MalformedLineError);
    try {
      parse_trace("C2S|0|ab\nbogus\n");
      FAIL();
    } catch (const MalformedLineError& e) {
      REQUIRE(e.line == 2);
    }
  }
}

TEST_CASE("parse/serialize round-trip is byte-exact") {
  std::mt19937_64 rng(42);
  for (int iter = 0; iter < 50; ++iter) {
    MessageTrace t;
    size_t nmeta = rng() % 3;
    for (size_t i = 0; i < nmeta; ++i) {
      Bytes v(rng() % 6);
      for (auto& b : v) b = uint8_t(rng());
      t.metadata.emplace_back("k" + std::to_string(i), v);
    }
    uint64_t at = 0;
    size_t nmsg = rng() % 6;
    for (size_t i = 0; i < nmsg; ++i) {
      Message m;
      m.dir = rng() % 2 ? Dir::C2S : Dir::S2C;
      at += rng() % 100;
      m.arrival_ms = at;
      m.payload.resize(rng() % 10);
      for (auto& b : m.payload) b = uint8_t(rng());
      t.messages.push_back(std::move(m));
    }
    std::string text = serialize_trace(t);
    MessageTrace back = parse_trace(text);
    REQUIRE(serialize_trace(back) == text);
    REQUIRE(back.messages.size() == t.messages.size());
    for (size_t i = 0; i < t.messages.size(); ++i) {
      REQUIRE(back.messages[i].dir == t.messages[i].dir);
      REQUIRE(back.messages[i].arrival_ms == t.messages[i].arrival_ms);
      REQUIRE(back.messages[i].payload == t.messages[i].payload);
    }
  }
}

TEST_CASE("lag recurrence") {
  SECTION("worked values") {
    auto r = record_metrics({0, 100, 200}, {50, 150, 30});
    REQUIRE(r.size() == 3);
    REQUIRE(r[0].completion_ms == 50);
    REQUIRE(r[1].completion_ms == 250);
    REQUIRE(r[2].completion_ms == 280);
    REQUIRE(r[0].lag_ms == 50);
    REQUIRE(r[1].lag_ms == 150);
    REQUIRE(r[2].lag_ms == 80);
  }
  SECTION("zero costs give zero lags") {
    auto r = record_metrics({0, 10, 20}, {0, 0, 0});
    for (const auto& x : r) REQUIRE(x.lag_ms == 0);
  }
  SECTION("first completion ignores the arrival unless corrected") {
    auto verbatim = record_metrics({10}, {5});
    REQUIRE(verbatim[0].completion_ms == 5);
    REQUIRE(verbatim[0].lag_ms == -5);
    auto corrected = record_metrics({10}, {5}, true);
    REQUIRE(corrected[0].completion_ms == 15);
    REQUIRE(corrected[0].lag_ms == 5);
  }
  SECTION("length mismatch") {
    REQUIRE_THROWS_AS(record_metrics({0, 1}, {5}), LengthMismatchError);
  }
}

TEST_CASE("recurrence matches an independent evaluation on random input") {
  std::mt19937_64 rng(4242);
  for (int iter = 0; iter < 1000; ++iter) {
    size_t n = 1 + rng() % 20;
    std::vector<int64_t> arrivals(n), costs(n);
    int64_t at = 0;
    for (size_t i = 0; i < n; ++i) {
      at += int64_t(rng() % 50);
      arrivals[i] = at;
      costs[i] = int64_t(rng() % 100);
    }
    auto got = record_metrics(arrivals, costs);
    // straightforward re-evaluation, written independently
    int64_t completion = 0;
    for (size_t i = 0; i < n; ++i) {
      int64_t start = i == 0 ? 0 : std::max(arrivals[i], completion);
      completion = start + costs[i];
      REQUIRE(got[i].completion_ms == completion);
      REQUIRE(got[i].lag_ms == completion - arrivals[i]);
      // lag >= cost whenever the verifier was idle at arrival
      if (i > 0 && arrivals[i] >= got[i - 1].completion_ms)
        REQUIRE(got[i].lag_ms == got[i].cost_ms);
      if (i > 0) REQUIRE(got[i].lag_ms >= got[i].cost_ms);
    }
  }
}

TEST_CASE("bucketed report") {
  SECTION("single bucket covers the whole set") {
    auto r = record_metrics({0, 1, 2, 3}, {4, 4, 4, 4});
    std::vector<int64_t> arrivals{0, 1, 2, 3};
    auto rows = report_buckets(arrivals, r, 1000);
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].n == 4);
    REQUIRE(rows[0].min == rows[0].q1);
  }
  SECTION("worked example buckets") {
    auto r = record_metrics({0, 100, 200}, {50, 150, 30});
    auto rows = report_buckets({0, 100, 200}, r, 100);
    REQUIRE(rows.size() == 3);
    REQUIRE(rows[0].median == 50);
    REQUIRE(rows[1].median == 150);
    REQUIRE(rows[2].median == 80);
  }
  SECTION("empty records produce an empty table") {
    auto rows = report_buckets({}, {}, 100);
    REQUIRE(rows.empty());
  }
  SECTION("tsv shape") {
    auto r = record_metrics({0}, {7});
    std::string tsv = format_bucket_tsv(report_buckets({0}, r, 100));
    REQUIRE(tsv.rfind("bucket_start_ms\tmin\tq1\tmedian\tq3\tmax\tmean\tn\n",
                      0) == 0);
    REQUIRE(tsv.find("0\t7\t7\t7\t7\t7\t7.000\t1\n") != std::string::npos);
  }
}

TEST_CASE("size-cost tsv and pearson") {
  std::vector<SizeCostRow> rows{{16, 10, Dir::C2S}, {32, 20, Dir::C2S}};
  std::string tsv = format_size_cost_tsv(rows);
  REQUIRE(tsv.find("16\t10\tC2S") != std::string::npos);

  std::vector<double> xs{1, 2, 3, 4}, ys{2, 4, 6, 8};
  REQUIRE(pearson(xs, ys) > 0.999);
  std::vector<double> zs{5, 1, 9, 2};
  REQUIRE(pearson(xs, zs) < 0.9);
}
