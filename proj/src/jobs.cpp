#include "turbex/jobs.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "turbex/error.hpp"
#include "turbex/features.hpp"

namespace turbex {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

TrainingData to_training_data(const Dataset& dataset) {
  TrainingData data;
  for (const auto& r : dataset.rows()) {
    if (!r.label) continue;
    data.rows.push_back(r.values);
    data.labels.push_back(*r.label);
  }
  return data;
}

namespace {

void reject_unknown(const json& doc, const std::set<std::string>& known, const std::string& what) {
  if (!doc.is_object()) fail(ErrorKind::invalid_argument, what + ": expected a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) fail(ErrorKind::invalid_argument, what + ": unknown field '" + key + "'");
  }
}

template <typename T>
void read_number(const json& doc, const char* key, T& out, const std::string& what) {
  if (!doc.contains(key)) return;
  const auto& v = doc[key];
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) fail(ErrorKind::invalid_argument, what + ": '" + key + "' must be an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0) fail(ErrorKind::invalid_argument, what + ": '" + key + "' must be >= 0");
    }
  } else {
    if (!v.is_number()) fail(ErrorKind::invalid_argument, what + ": '" + key + "' must be a number");
  }
  out = v.get<T>();
}

std::string out_path(const json& job, const char* key, const std::string& base_dir) {
  if (!job.contains(key)) return {};
  if (!job[key].is_string()) fail(ErrorKind::invalid_argument, std::string("job: '") + key + "' must be a string");
  std::filesystem::path p(job[key].get<std::string>());
  if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
  return p.lexically_normal().string();
}

std::ofstream open_out(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write '" + path + "'");
  return out;
}

std::string relative_to(const std::string& path, const std::string& dir) {
  return std::filesystem::path(path).lexically_relative(std::filesystem::path(dir).lexically_normal()).string();
}

}  // namespace

TrainParams parse_train_params(const json& doc) {
  TrainParams p;
  if (doc.is_null()) return p;
  reject_unknown(doc, {"n_trees", "max_depth", "learning_rate", "l2_lambda", "gamma", "min_child_weight", "seed"},
                 "train params");
  read_number(doc, "n_trees", p.n_trees, "train params");
  read_number(doc, "max_depth", p.max_depth, "train params");
  read_number(doc, "learning_rate", p.learning_rate, "train params");
  read_number(doc, "l2_lambda", p.l2_lambda, "train params");
  read_number(doc, "gamma", p.gamma, "train params");
  read_number(doc, "min_child_weight", p.min_child_weight, "train params");
  read_number(doc, "seed", p.seed, "train params");
  p.validate();
  return p;
}

SyntheticParams parse_synthetic_params(const json& doc) {
  SyntheticParams p;
  const std::string what = "synthetic params";
  read_number(doc, "n_turbines", p.n_turbines, what);
  read_number(doc, "n_days", p.n_days, what);
  read_number(doc, "readings_per_day", p.readings_per_day, what);
  read_number(doc, "failure_rate_per_month", p.failure_rate_per_month, what);
  read_number(doc, "seed", p.seed, what);
  read_number(doc, "label_window_days", p.label_window_days, what);
  read_number(doc, "missing_rate", p.missing_rate, what);
  read_number(doc, "start_time", p.start_time, what);
  p.validate();
  return p;
}

EventLog simulate_event_log(const SyntheticFleet& fleet, const TreeEnsemble& model, const AlertPolicy& policy) {
  constexpr std::int64_t kDay = 86400;
  std::mt19937_64 rng(policy.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Event> pending;
  std::set<std::size_t> prevented;  // episode indices
  std::set<std::pair<std::string, std::int64_t>> alerted_days;

  auto episode_for = [&](const EntityRow& r) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < fleet.episodes.size(); ++i) {
      const auto& e = fleet.episodes[i];
      if (e.entity_id == r.ref.entity_id && r.ref.row_id >= e.window_start && r.ref.row_id < e.failure_time) return i;
    }
    return std::nullopt;
  };

  for (const auto& id : fleet.dataset.entities()) {
    for (const EntityRow* r : fleet.dataset.rows_for(id)) {
      const double p = predict_proba(model, r->values);
      if (p < policy.threshold) continue;
      const std::int64_t day = r->ref.row_id / kDay;
      if (!alerted_days.insert({id, day}).second) continue;
      const std::string alert_id = "A-" + id + "-" + std::to_string(r->ref.row_id);
      pending.emplace_back(AlertEvent{alert_id, id, r->ref.row_id, p});
      const auto episode = episode_for(*r);
      const double chance = episode ? std::max(0.8, policy.followup_rate) : policy.followup_rate;
      const bool investigated = unit(rng) < chance;
      const std::int64_t decided = r->ref.row_id + 3600;
      pending.emplace_back(DecisionEvent{alert_id, investigated, decided});
      if (investigated) {
        pending.emplace_back(OutcomeEvent{id, decided + 3600, false, policy.inspection_hours});
        if (episode) prevented.insert(*episode);
      }
    }
  }
  for (std::size_t i = 0; i < fleet.episodes.size(); ++i) {
    if (prevented.count(i)) continue;
    const auto& e = fleet.episodes[i];
    pending.emplace_back(OutcomeEvent{e.entity_id, e.failure_time, true, policy.failure_hours});
  }

  auto time_of = [](const Event& e) { return std::visit([](const auto& v) { return v.time; }, e); };
  std::stable_sort(pending.begin(), pending.end(), [&](const Event& a, const Event& b) { return time_of(a) < time_of(b); });
  EventLog log;
  for (const auto& e : pending) log.record(e);
  return log;
}

ojson run_synthetic_job(const json& job, const std::string& base_dir) {
  reject_unknown(job,
                 {"n_turbines", "n_days", "readings_per_day", "failure_rate_per_month", "seed", "label_window_days",
                  "missing_rate", "start_time", "output", "catalog_output", "transforms_output", "model_output", "train",
                  "events_output", "alert_policy", "config_output"},
                 "synthetic job");
  const SyntheticParams params = parse_synthetic_params(job);
  const std::string data_path = out_path(job, "output", base_dir);
  if (data_path.empty()) fail(ErrorKind::invalid_argument, "synthetic job: 'output' is required");

  const FeatureCatalog catalog = turbine_catalog();
  const TransformSpec spec = turbine_transforms();
  const SyntheticFleet fleet = generate_synthetic(params, catalog);

  ojson summary;
  summary["rows"] = fleet.dataset.size();
  summary["turbines"] = params.n_turbines;
  summary["failure_episodes"] = fleet.episodes.size();
  std::size_t positives = 0;
  for (const auto& r : fleet.dataset.rows()) positives += (r.label && *r.label == 1) ? 1 : 0;
  summary["positive_rows"] = positives;

  {
    auto out = open_out(data_path);
    write_csv(fleet.dataset, out);
  }
  summary["output"] = data_path;

  const std::string catalog_path = out_path(job, "catalog_output", base_dir);
  if (!catalog_path.empty()) {
    auto out = open_out(catalog_path);
    write_catalog_csv(catalog, out);
  }
  const std::string transforms_path = out_path(job, "transforms_output", base_dir);
  if (!transforms_path.empty()) {
    auto out = open_out(transforms_path);
    out << save_transform_spec(spec).dump(2) << '\n';
  }

  const std::string model_path = out_path(job, "model_output", base_dir);
  const std::string events_path = out_path(job, "events_output", base_dir);
  if ((!events_path.empty() || job.contains("train")) && model_path.empty()) {
    fail(ErrorKind::invalid_argument, "synthetic job: 'train' and 'events_output' need 'model_output'");
  }
  if (!model_path.empty()) {
    const TrainParams train = parse_train_params(job.contains("train") ? job["train"] : json());
    const TreeEnsemble model = train_reference(to_training_data(fleet.dataset), train);
    auto out = open_out(model_path);
    out << dump_model(model);
    summary["model_output"] = model_path;
    summary["trees"] = model.trees.size();

    if (!events_path.empty()) {
      AlertPolicy policy;
      if (job.contains("alert_policy")) {
        const auto& ap = job["alert_policy"];
        reject_unknown(ap, {"threshold", "followup_rate", "inspection_hours", "failure_hours", "seed"}, "alert_policy");
        read_number(ap, "threshold", policy.threshold, "alert_policy");
        read_number(ap, "followup_rate", policy.followup_rate, "alert_policy");
        read_number(ap, "inspection_hours", policy.inspection_hours, "alert_policy");
        read_number(ap, "failure_hours", policy.failure_hours, "alert_policy");
        read_number(ap, "seed", policy.seed, "alert_policy");
      }
      const EventLog log = simulate_event_log(fleet, model, policy);
      auto eout = open_out(events_path);
      write_event_log(log, eout);
      summary["events_output"] = events_path;
      summary["events"] = log.size();
    }
  }

  const std::string config_path = out_path(job, "config_output", base_dir);
  if (!config_path.empty()) {
    if (model_path.empty() || catalog_path.empty()) {
      fail(ErrorKind::invalid_argument, "synthetic job: 'config_output' needs 'model_output' and 'catalog_output'");
    }
    const std::string dir = std::filesystem::path(config_path).parent_path().string();
    ojson cfg;
    cfg["model_path"] = relative_to(model_path, dir);
    cfg["dataset_path"] = relative_to(data_path, dir);
    cfg["catalog_path"] = relative_to(catalog_path, dir);
    if (!transforms_path.empty()) cfg["transform_spec_path"] = relative_to(transforms_path, dir);
    cfg["background_size"] = 64;
    cfg["background_seed"] = 0;
    cfg["distance"] = {{"standardize", true}};
    cfg["listen_address"] = "127.0.0.1";
    cfg["port"] = 8080;
    if (!events_path.empty()) cfg["event_log_path"] = relative_to(events_path, dir);
    auto out = open_out(config_path);
    out << cfg.dump(2) << '\n';
    summary["config_output"] = config_path;
  }
  return summary;
}

ojson run_train_job(const json& job, const std::string& base_dir) {
  reject_unknown(job, {"dataset_path", "catalog_path", "train", "model_output"}, "train job");
  const std::string data_path = out_path(job, "dataset_path", base_dir);
  const std::string catalog_path = out_path(job, "catalog_path", base_dir);
  const std::string model_path = out_path(job, "model_output", base_dir);
  if (data_path.empty() || catalog_path.empty() || model_path.empty()) {
    fail(ErrorKind::invalid_argument, "train job: 'dataset_path', 'catalog_path' and 'model_output' are required");
  }
  const Dataset dataset = ingest_file(data_path, load_catalog_file(catalog_path));
  const TrainParams params = parse_train_params(job.contains("train") ? job["train"] : json());
  std::vector<double> losses;
  const TreeEnsemble model =
      train_reference(to_training_data(dataset), params, [&](int, double loss) { losses.push_back(loss); });
  auto out = open_out(model_path);
  out << dump_model(model);
  ojson summary;
  summary["model_output"] = model_path;
  summary["trees"] = model.trees.size();
  summary["initial_loss"] = losses.front();
  summary["final_loss"] = losses.back();
  return summary;
}

}  // namespace turbex
