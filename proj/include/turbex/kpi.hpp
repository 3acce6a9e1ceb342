#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace turbex {

struct AlertEvent {
  std::string alert_id;
  std::string entity_id;
  std::int64_t time = 0;
  double score = 0.0;
};

struct DecisionEvent {
  std::string alert_id;
  bool investigated = false;
  std::int64_t time = 0;
};

struct OutcomeEvent {
  std::string entity_id;
  std::int64_t time = 0;
  bool failed = false;
  double downtime_hours = 0.0;
};

using Event = std::variant<AlertEvent, DecisionEvent, OutcomeEvent>;

/// Half-open interval [start, end) in epoch seconds.
struct Window {
  std::int64_t start = 0;
  std::int64_t end = 0;

  std::int64_t duration() const noexcept { return end - start; }
  bool contains(std::int64_t t) const noexcept { return t >= start && t < end; }
  std::string str() const;
  /// Throws ErrorKind::invalid_argument unless start < end.
  void validate() const;
};

/// Append-only record of alerts, analyst decisions and outcomes in arrival order.
class EventLog {
 public:
  /// Throws ErrorKind::conflict for a repeated alert_id, ErrorKind::reference
  /// for a decision on an unknown alert, ErrorKind::invalid_argument for a
  /// malformed event.
  void record(const Event& event);

  const std::vector<Event>& events() const noexcept { return events_; }
  std::size_t size() const noexcept { return events_.size(); }
  bool has_alert(const std::string& alert_id) const { return alerts_.count(alert_id) > 0; }

 private:
  std::vector<Event> events_;
  std::map<std::string, std::size_t> alerts_;
};

Event parse_event(const nlohmann::json& document);
nlohmann::ordered_json to_json(const Event& event);
EventLog read_event_log(std::istream& in);
EventLog read_event_log_file(const std::string& path);
void write_event_log(const EventLog& log, std::ostream& out);

double kpi_total_downtime(const EventLog& log, const Window& window);

struct FailureCounts {
  std::int64_t failures = 0;
  std::int64_t investigations = 0;
};

FailureCounts kpi_failures_vs_investigations(const EventLog& log, const Window& window);

/// Share of alerts raised in the window that received an investigated=true
/// decision at any time. nullopt when the window holds no alerts.
std::optional<double> kpi_alert_followup_rate(const EventLog& log, const Window& window);

struct KpiValues {
  Window window;
  double total_downtime_hours = 0.0;
  FailureCounts counts;
  std::optional<double> alert_followup_rate;
  std::int64_t alerts = 0;
};

KpiValues compute_kpis(const EventLog& log, const Window& window);

struct KpiDeltas {
  double total_downtime_hours = 0.0;
  double failures = 0.0;
  double investigations = 0.0;
  std::optional<double> alert_followup_rate;
};

struct KpiReport {
  KpiValues evaluation;
  std::vector<KpiValues> baselines;
  std::optional<KpiDeltas> baseline_mean;  // absent without baselines
  std::optional<KpiDeltas> deltas;         // evaluation minus baseline_mean
};

/// Every historic window must have exactly the evaluation window's duration.
KpiReport baseline_report(const EventLog& log, const Window& evaluation, const std::vector<Window>& historic);

nlohmann::ordered_json to_json(const KpiReport& report);

}  // namespace turbex
