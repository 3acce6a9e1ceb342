#include "turbex/kpi.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "turbex/error.hpp"

namespace turbex {

using nlohmann::json;

std::string Window::str() const { return "[" + std::to_string(start) + ", " + std::to_string(end) + ")"; }

void Window::validate() const {
  if (!(start < end)) fail(ErrorKind::invalid_argument, "window " + str() + " must have start < end");
}

void EventLog::record(const Event& event) {
  if (const auto* a = std::get_if<AlertEvent>(&event)) {
    if (a->alert_id.empty()) fail(ErrorKind::invalid_argument, "alert_id must be non-empty");
    if (!std::isfinite(a->score)) fail(ErrorKind::invalid_argument, "alert score must be finite");
    if (alerts_.count(a->alert_id)) fail(ErrorKind::conflict, "alert '" + a->alert_id + "' already recorded");
    alerts_.emplace(a->alert_id, events_.size());
  } else if (const auto* d = std::get_if<DecisionEvent>(&event)) {
    if (!alerts_.count(d->alert_id)) {
      fail(ErrorKind::reference, "decision references unknown alert '" + d->alert_id + "'");
    }
  } else {
    const auto& o = std::get<OutcomeEvent>(event);
    if (!(o.downtime_hours >= 0.0) || !std::isfinite(o.downtime_hours)) {
      fail(ErrorKind::invalid_argument, "downtime_hours must be finite and >= 0");
    }
  }
  events_.push_back(event);
}

// ---------------------------------------------------------------------------

namespace {

void expect_fields(const json& doc, const std::set<std::string>& allowed) {
  for (const auto& [key, _] : doc.items()) {
    if (!allowed.count(key)) fail(ErrorKind::parse, "event: unknown field '" + key + "'");
  }
  for (const auto& key : allowed) {
    if (!doc.contains(key)) fail(ErrorKind::parse, "event: missing field '" + key + "'");
  }
}

std::string text(const json& doc, const char* key) {
  if (!doc[key].is_string()) fail(ErrorKind::parse, std::string("event: '") + key + "' must be a string");
  return doc[key].get<std::string>();
}

std::int64_t epoch(const json& doc, const char* key) {
  if (!doc[key].is_number_integer()) fail(ErrorKind::parse, std::string("event: '") + key + "' must be an integer");
  return doc[key].get<std::int64_t>();
}

double number(const json& doc, const char* key) {
  if (!doc[key].is_number()) fail(ErrorKind::parse, std::string("event: '") + key + "' must be a number");
  return doc[key].get<double>();
}

bool flag(const json& doc, const char* key) {
  if (!doc[key].is_boolean()) fail(ErrorKind::parse, std::string("event: '") + key + "' must be a boolean");
  return doc[key].get<bool>();
}

}  // namespace

Event parse_event(const json& doc) {
  if (!doc.is_object() || !doc.contains("kind") || !doc["kind"].is_string()) {
    fail(ErrorKind::parse, "event: expected an object with a string 'kind'");
  }
  const std::string kind = doc["kind"].get<std::string>();
  if (kind == "alert") {
    expect_fields(doc, {"kind", "alert_id", "entity_id", "time", "score"});
    return AlertEvent{text(doc, "alert_id"), text(doc, "entity_id"), epoch(doc, "time"), number(doc, "score")};
  }
  if (kind == "decision") {
    expect_fields(doc, {"kind", "alert_id", "investigated", "time"});
    return DecisionEvent{text(doc, "alert_id"), flag(doc, "investigated"), epoch(doc, "time")};
  }
  if (kind == "outcome") {
    expect_fields(doc, {"kind", "entity_id", "time", "failed", "downtime_hours"});
    return OutcomeEvent{text(doc, "entity_id"), epoch(doc, "time"), flag(doc, "failed"), number(doc, "downtime_hours")};
  }
  fail(ErrorKind::parse, "event: unknown kind '" + kind + "'");
}

nlohmann::ordered_json to_json(const Event& event) {
  nlohmann::ordered_json j;
  if (const auto* a = std::get_if<AlertEvent>(&event)) {
    j["kind"] = "alert";
    j["alert_id"] = a->alert_id;
    j["entity_id"] = a->entity_id;
    j["time"] = a->time;
    j["score"] = a->score;
  } else if (const auto* d = std::get_if<DecisionEvent>(&event)) {
    j["kind"] = "decision";
    j["alert_id"] = d->alert_id;
    j["investigated"] = d->investigated;
    j["time"] = d->time;
  } else {
    const auto& o = std::get<OutcomeEvent>(event);
    j["kind"] = "outcome";
    j["entity_id"] = o.entity_id;
    j["time"] = o.time;
    j["failed"] = o.failed;
    j["downtime_hours"] = o.downtime_hours;
  }
  return j;
}

EventLog read_event_log(std::istream& in) {
  EventLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      log.record(parse_event(json::parse(line)));
    } catch (const json::parse_error& e) {
      fail(ErrorKind::parse, "event log line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      fail(e.kind(), "event log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return log;
}

EventLog read_event_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open event log '" + path + "'");
  return read_event_log(in);
}

void write_event_log(const EventLog& log, std::ostream& out) {
  for (const auto& e : log.events()) out << to_json(e).dump() << '\n';
}

// ---------------------------------------------------------------------------

double kpi_total_downtime(const EventLog& log, const Window& window) {
  window.validate();
  double total = 0.0;
  for (const auto& e : log.events()) {
    if (const auto* o = std::get_if<OutcomeEvent>(&e); o && window.contains(o->time)) total += o->downtime_hours;
  }
  return total;
}

FailureCounts kpi_failures_vs_investigations(const EventLog& log, const Window& window) {
  window.validate();
  FailureCounts counts;
  for (const auto& e : log.events()) {
    if (const auto* o = std::get_if<OutcomeEvent>(&e)) {
      if (o->failed && window.contains(o->time)) ++counts.failures;
    } else if (const auto* d = std::get_if<DecisionEvent>(&e)) {
      if (d->investigated && window.contains(d->time)) ++counts.investigations;
    }
  }
  return counts;
}

namespace {

struct AlertTally {
  std::int64_t alerts = 0;
  std::int64_t followed_up = 0;
};

AlertTally tally_alerts(const EventLog& log, const Window& window) {
  std::set<std::string> in_window;
  std::set<std::string> investigated;
  for (const auto& e : log.events()) {
    if (const auto* a = std::get_if<AlertEvent>(&e)) {
      if (window.contains(a->time)) in_window.insert(a->alert_id);
    } else if (const auto* d = std::get_if<DecisionEvent>(&e)) {
      if (d->investigated) investigated.insert(d->alert_id);
    }
  }
  AlertTally t;
  t.alerts = static_cast<std::int64_t>(in_window.size());
  for (const auto& id : in_window) t.followed_up += investigated.count(id) ? 1 : 0;
  return t;
}

}  // namespace

std::optional<double> kpi_alert_followup_rate(const EventLog& log, const Window& window) {
  window.validate();
  const AlertTally t = tally_alerts(log, window);
  if (t.alerts == 0) return std::nullopt;
  return static_cast<double>(t.followed_up) / static_cast<double>(t.alerts);
}

KpiValues compute_kpis(const EventLog& log, const Window& window) {
  KpiValues v;
  v.window = window;
  v.total_downtime_hours = kpi_total_downtime(log, window);
  v.counts = kpi_failures_vs_investigations(log, window);
  v.alert_followup_rate = kpi_alert_followup_rate(log, window);
  v.alerts = tally_alerts(log, window).alerts;
  return v;
}

KpiReport baseline_report(const EventLog& log, const Window& evaluation, const std::vector<Window>& historic) {
  evaluation.validate();
  for (const auto& w : historic) {
    w.validate();
    if (w.duration() != evaluation.duration()) {
      fail(ErrorKind::invalid_argument, "baseline window " + w.str() + " lasts " + std::to_string(w.duration()) +
                                            " s, evaluation window lasts " + std::to_string(evaluation.duration()) + " s");
    }
  }
  KpiReport report;
  report.evaluation = compute_kpis(log, evaluation);
  for (const auto& w : historic) report.baselines.push_back(compute_kpis(log, w));
  if (report.baselines.empty()) return report;

  KpiDeltas mean;
  double rate_sum = 0.0;
  std::size_t rate_count = 0;
  for (const auto& b : report.baselines) {
    mean.total_downtime_hours += b.total_downtime_hours;
    mean.failures += static_cast<double>(b.counts.failures);
    mean.investigations += static_cast<double>(b.counts.investigations);
    if (b.alert_followup_rate) {
      rate_sum += *b.alert_followup_rate;
      ++rate_count;
    }
  }
  const auto n = static_cast<double>(report.baselines.size());
  mean.total_downtime_hours /= n;
  mean.failures /= n;
  mean.investigations /= n;
  if (rate_count > 0) mean.alert_followup_rate = rate_sum / static_cast<double>(rate_count);
  report.baseline_mean = mean;

  const auto& e = report.evaluation;
  KpiDeltas delta;
  delta.total_downtime_hours = e.total_downtime_hours - mean.total_downtime_hours;
  delta.failures = static_cast<double>(e.counts.failures) - mean.failures;
  delta.investigations = static_cast<double>(e.counts.investigations) - mean.investigations;
  if (e.alert_followup_rate && mean.alert_followup_rate) {
    delta.alert_followup_rate = *e.alert_followup_rate - *mean.alert_followup_rate;
  }
  report.deltas = delta;
  return report;
}

namespace {

nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json window_json(const Window& w) { return {{"start", w.start}, {"end", w.end}}; }

nlohmann::ordered_json values_json(const KpiValues& v) {
  nlohmann::ordered_json j;
  j["window"] = window_json(v.window);
  j["kpi1_total_downtime_hours"] = v.total_downtime_hours;
  j["kpi2"] = {{"failures", v.counts.failures}, {"investigations", v.counts.investigations}};
  j["kpi3_alert_followup_rate"] = optional_number(v.alert_followup_rate);
  j["alerts"] = v.alerts;
  return j;
}

nlohmann::ordered_json deltas_json(const KpiDeltas& d) {
  nlohmann::ordered_json j;
  j["kpi1_total_downtime_hours"] = d.total_downtime_hours;
  j["kpi2"] = {{"failures", d.failures}, {"investigations", d.investigations}};
  j["kpi3_alert_followup_rate"] = optional_number(d.alert_followup_rate);
  return j;
}

}  // namespace

nlohmann::ordered_json to_json(const KpiReport& report) {
  nlohmann::ordered_json j = values_json(report.evaluation);
  j["baselines"] = nlohmann::ordered_json::array();
  for (const auto& b : report.baselines) j["baselines"].push_back(values_json(b));
  j["baseline_mean"] = report.baseline_mean ? deltas_json(*report.baseline_mean) : nlohmann::ordered_json(nullptr);
  j["deltas"] = report.deltas ? deltas_json(*report.deltas) : nlohmann::ordered_json(nullptr);
  return j;
}

}  // namespace turbex
