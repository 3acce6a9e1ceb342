#include <random>
#include <sstream>

#include "doctest.h"
#include "support/fixtures.hpp"
#include "turbex/error.hpp"
#include "turbex/kpi.hpp"

using namespace turbex;

namespace {

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::io;
}

EventLog alerts_with_followups(int alerts, int investigated, std::int64_t t0 = 1000) {
  EventLog log;
  for (int i = 0; i < alerts; ++i) {
    const std::string id = "A" + std::to_string(i);
    log.record(AlertEvent{id, "T01", t0 + i, 0.9});
    log.record(DecisionEvent{id, i < investigated, t0 + i + 1});
  }
  return log;
}

}  // namespace

TEST_CASE("recording events") {
  EventLog log;
  log.record(AlertEvent{"A1", "T01", 10, 0.8});
  log.record(DecisionEvent{"A1", true, 11});
  CHECK(log.size() == 2);
  CHECK(kind_of([&] { log.record(DecisionEvent{"A9", true, 12}); }) == ErrorKind::reference);
  CHECK(kind_of([&] { log.record(AlertEvent{"A1", "T02", 13, 0.1}); }) == ErrorKind::conflict);
  CHECK(kind_of([&] { log.record(OutcomeEvent{"T01", 14, false, -1.0}); }) == ErrorKind::invalid_argument);
  CHECK(log.size() == 2);
}

TEST_CASE("total downtime over half-open windows") {
  EventLog log;
  log.record(OutcomeEvent{"T01", 10, false, 4.0});
  log.record(OutcomeEvent{"T02", 20, true, 6.0});
  log.record(OutcomeEvent{"T03", 30, true, 100.0});
  CHECK(kpi_total_downtime(log, {0, 30}) == 10.0);
  CHECK(kpi_total_downtime(log, {30, 31}) == 100.0);
  CHECK(kpi_total_downtime(EventLog{}, {0, 30}) == 0.0);
  CHECK(kind_of([&] { kpi_total_downtime(log, {30, 30}); }) == ErrorKind::invalid_argument);
  CHECK(kind_of([&] { kpi_total_downtime(log, {31, 30}); }) == ErrorKind::invalid_argument);
}

TEST_CASE("failures versus investigations") {
  EventLog log = alerts_with_followups(6, 4);
  log.record(OutcomeEvent{"T01", 1003, true, 48});
  log.record(OutcomeEvent{"T01", 5000, true, 48});
  const auto c = kpi_failures_vs_investigations(log, {1000, 2000});
  CHECK(c.failures == 1);
  CHECK(c.investigations == 4);
  const auto empty = kpi_failures_vs_investigations(EventLog{}, {0, 1});
  CHECK(empty.failures == 0);
  CHECK(empty.investigations == 0);
}

TEST_CASE("alert follow-up rate") {
  CHECK(kpi_alert_followup_rate(alerts_with_followups(10, 3), {0, 5000}) == 0.3);
  CHECK_FALSE(kpi_alert_followup_rate(EventLog{}, {0, 5000}).has_value());

  EventLog late;
  late.record(AlertEvent{"A1", "T01", 50, 0.9});
  late.record(DecisionEvent{"A1", true, 500});
  CHECK(kpi_alert_followup_rate(late, {0, 100}) == 1.0);
  CHECK_FALSE(kpi_alert_followup_rate(late, {100, 1000}).has_value());
}

TEST_CASE("an in-window investigation never lowers the rate") {
  EventLog log = alerts_with_followups(5, 1);
  const double before = *kpi_alert_followup_rate(log, {0, 5000});
  log.record(DecisionEvent{"A3", true, 1500});
  CHECK(*kpi_alert_followup_rate(log, {0, 5000}) >= before);
}

TEST_CASE("downtime is additive over adjacent windows") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::int64_t> when(0, 10'000);
  std::uniform_real_distribution<double> hours(0, 50);
  EventLog log;
  for (int i = 0; i < 400; ++i) log.record(OutcomeEvent{"T01", when(rng), i % 3 == 0, hours(rng)});
  for (int t = 0; t < 50; ++t) {
    std::int64_t a = when(rng), b = when(rng), c = when(rng);
    std::int64_t lo = std::min({a, b, c}), hi = std::max({a, b, c}), mid = a + b + c - lo - hi;
    if (lo == mid || mid == hi) continue;
    const double whole = kpi_total_downtime(log, {lo, hi});
    const double parts = kpi_total_downtime(log, {lo, mid}) + kpi_total_downtime(log, {mid, hi});
    CHECK(whole == doctest::Approx(parts).epsilon(1e-12));
  }
}

TEST_CASE("baseline report against hand-computed values") {
  // evaluation [1000,1100): rate 1/2. baselines [0,100): 1/5, [500,600): 2/5.
  EventLog log;
  auto add = [&](const std::string& id, std::int64_t t, bool inv) {
    log.record(AlertEvent{id, "T01", t, 0.9});
    log.record(DecisionEvent{id, inv, t + 1});
  };
  add("e1", 1000, true);
  add("e2", 1001, false);
  for (int i = 0; i < 5; ++i) add("b" + std::to_string(i), 10 + i, i < 1);
  for (int i = 0; i < 5; ++i) add("c" + std::to_string(i), 510 + i, i < 2);
  log.record(OutcomeEvent{"T01", 1050, true, 12.0});
  log.record(OutcomeEvent{"T01", 50, false, 2.0});
  log.record(OutcomeEvent{"T01", 550, false, 6.0});

  const auto r = baseline_report(log, {1000, 1100}, {{0, 100}, {500, 600}});
  REQUIRE(r.baselines.size() == 2);
  REQUIRE(r.baseline_mean.has_value());
  REQUIRE(r.deltas.has_value());
  CHECK(*r.evaluation.alert_followup_rate == 0.5);
  CHECK(*r.baseline_mean->alert_followup_rate == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(*r.deltas->alert_followup_rate == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(r.baseline_mean->total_downtime_hours == 4.0);
  CHECK(r.deltas->total_downtime_hours == 8.0);
  CHECK(r.deltas->failures == 1.0);
  CHECK(r.deltas->investigations == doctest::Approx(1.0 - 1.5));

  const auto same = baseline_report(log, {1000, 1100}, {{1000, 1100}});
  CHECK(same.deltas->total_downtime_hours == 0.0);
  CHECK(same.deltas->failures == 0.0);
  CHECK(same.deltas->investigations == 0.0);
  CHECK(*same.deltas->alert_followup_rate == 0.0);
}

TEST_CASE("undefined baseline rates are left out of the mean") {
  EventLog log = alerts_with_followups(2, 1, 1000);
  const auto r = baseline_report(log, {1000, 1100}, {{0, 100}, {200, 300}});
  CHECK_FALSE(r.baseline_mean->alert_followup_rate.has_value());
  CHECK_FALSE(r.deltas->alert_followup_rate.has_value());
  const auto j = to_json(r);
  CHECK(j["deltas"]["kpi3_alert_followup_rate"].is_null());
  CHECK(j["kpi3_alert_followup_rate"] == 0.5);
}

TEST_CASE("baselines of another length are rejected by name") {
  try {
    baseline_report(EventLog{}, {0, 100}, {{200, 300}, {400, 450}});
    FAIL("expected an argument error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_argument);
    CHECK(std::string(e.what()).find("[400, 450)") != std::string::npos);
  }
}

TEST_CASE("fixture log end to end") {
  const auto log = read_event_log_file((fixtures::data_dir() / "kpi_events.ndjson").string());
  CHECK(log.size() == 9);
  const auto k = compute_kpis(log, {100, 200});
  CHECK(k.total_downtime_hours == 10.0);
  CHECK(k.counts.failures == 1);
  CHECK(k.counts.investigations == 1);
  CHECK(k.alerts == 3);
  CHECK(*k.alert_followup_rate == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("event log files") {
  std::istringstream bad("{\"kind\":\"alert\",\"alert_id\":\"A\",\"entity_id\":\"T\",\"time\":1,\"score\":1}\n"
                         "{\"kind\":\"decision\",\"alert_id\":\"B\",\"investigated\":true,\"time\":2}\n");
  try {
    read_event_log(bad);
    FAIL("expected a reference error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::reference);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::istringstream garbage("{\"kind\":\"alert\"\n");
  CHECK(kind_of([&] { read_event_log(garbage); }) == ErrorKind::parse);
  std::istringstream extra("{\"kind\":\"outcome\",\"entity_id\":\"T\",\"time\":1,\"failed\":true,\"downtime_hours\":1,\"x\":0}\n");
  CHECK(kind_of([&] { read_event_log(extra); }) == ErrorKind::parse);

  const auto log = read_event_log_file((fixtures::data_dir() / "kpi_events.ndjson").string());
  std::ostringstream out;
  write_event_log(log, out);
  CHECK(out.str() == fixtures::read_text(fixtures::data_dir() / "kpi_events.ndjson"));
}
