#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "turbex/dataset.hpp"
#include "turbex/kpi.hpp"
#include "turbex/model.hpp"
#include "turbex/synthetic.hpp"

namespace turbex {

// File-driven pipelines behind the command line: synthetic fleet generation,
// reference training and a simulated alert/decision/outcome log.

/// Labelled rows only; unlabelled rows are skipped.
TrainingData to_training_data(const Dataset& dataset);

TrainParams parse_train_params(const nlohmann::json& document);
SyntheticParams parse_synthetic_params(const nlohmann::json& document);

struct AlertPolicy {
  double threshold = 0.5;        // alert when failure probability reaches this
  double followup_rate = 0.4;    // chance an analyst investigates a false alarm
  double inspection_hours = 4.0; // downtime of an investigation that finds nothing
  double failure_hours = 48.0;   // downtime of an unprevented failure
  std::uint64_t seed = 0;
};

/// At most one alert per turbine per day; investigated alerts on turbines
/// heading into failure prevent it, the rest fail at the episode time.
EventLog simulate_event_log(const SyntheticFleet& fleet, const TreeEnsemble& model, const AlertPolicy& policy);

/// Runs a generation job described by a JSON document:
///   {"n_turbines":..,"n_days":..,"readings_per_day":..,"failure_rate_per_month":..,
///    "seed":..,"label_window_days":..,"missing_rate":..,
///    "output":"data.csv", "catalog_output":?, "transforms_output":?,
///    "model_output":?, "train":{...}?, "events_output":?, "alert_policy":{...}?,
///    "config_output":?}
/// Relative paths resolve against base_dir. Returns a short summary.
nlohmann::ordered_json run_synthetic_job(const nlohmann::json& job, const std::string& base_dir);

/// {"dataset_path":..,"catalog_path":..,"train":{...},"model_output":..}
nlohmann::ordered_json run_train_job(const nlohmann::json& job, const std::string& base_dir);

}  // namespace turbex
