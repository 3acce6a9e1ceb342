#include "turbex/service.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <thread>

#include "httplib.h"
#include "turbex/dataset.hpp"
#include "turbex/error.hpp"

namespace turbex {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string resolve_path(const std::string& base_dir, const std::string& path) {
  if (path.empty() || base_dir.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

std::string config_string(const json& doc, const char* key, bool required) {
  if (!doc.contains(key)) {
    if (required) fail(ErrorKind::configuration, std::string("config: missing '") + key + "'");
    return {};
  }
  if (!doc[key].is_string()) fail(ErrorKind::configuration, std::string("config: '") + key + "' must be a string");
  return doc[key].get<std::string>();
}

}  // namespace

AppConfig parse_config(const json& doc, const std::string& base_dir) {
  if (!doc.is_object()) fail(ErrorKind::configuration, "config: expected a JSON object");
  static const std::set<std::string> known = {"model_path",      "dataset_path",    "catalog_path",
                                              "transform_spec_path", "background_size", "background_seed",
                                              "distance",        "listen_address",  "port",
                                              "event_log_path"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) fail(ErrorKind::configuration, "config: unknown field '" + key + "'");
  }
  AppConfig cfg;
  cfg.model_path = resolve_path(base_dir, config_string(doc, "model_path", true));
  cfg.dataset_path = resolve_path(base_dir, config_string(doc, "dataset_path", true));
  cfg.catalog_path = resolve_path(base_dir, config_string(doc, "catalog_path", true));
  cfg.transform_spec_path = resolve_path(base_dir, config_string(doc, "transform_spec_path", false));
  cfg.event_log_path = resolve_path(base_dir, config_string(doc, "event_log_path", false));
  if (doc.contains("listen_address")) cfg.listen_address = config_string(doc, "listen_address", true);
  if (doc.contains("background_size")) {
    const auto& v = doc["background_size"];
    if (!v.is_number_integer() || v.get<std::int64_t>() < 1) {
      fail(ErrorKind::configuration, "config: 'background_size' must be an integer >= 1");
    }
    cfg.background_size = v.get<std::size_t>();
  }
  if (doc.contains("background_seed")) {
    if (!doc["background_seed"].is_number_unsigned()) {
      fail(ErrorKind::configuration, "config: 'background_seed' must be a non-negative integer");
    }
    cfg.background_seed = doc["background_seed"].get<std::uint64_t>();
  }
  if (doc.contains("port")) {
    const auto& v = doc["port"];
    if (!v.is_number_integer() || v.get<int>() < 0 || v.get<int>() > 65535) {
      fail(ErrorKind::configuration, "config: 'port' must be an integer in [0, 65535]");
    }
    cfg.port = v.get<int>();
  }
  if (doc.contains("distance")) {
    const auto& d = doc["distance"];
    if (!d.is_object()) fail(ErrorKind::configuration, "config: 'distance' must be an object");
    for (const auto& [key, value] : d.items()) {
      if (key == "feature_subset") {
        if (!value.is_array()) fail(ErrorKind::configuration, "config: distance.feature_subset must be an array");
        for (const auto& f : value) {
          if (!f.is_string()) fail(ErrorKind::configuration, "config: distance.feature_subset entries must be strings");
          cfg.distance.feature_subset.push_back(f.get<std::string>());
        }
      } else if (key == "weights") {
        if (!value.is_object()) fail(ErrorKind::configuration, "config: distance.weights must be an object");
        for (const auto& [name, w] : value.items()) {
          if (!w.is_number()) fail(ErrorKind::configuration, "config: distance.weights values must be numbers");
          cfg.distance.weights.emplace_back(name, w.get<double>());
        }
      } else if (key == "standardize") {
        if (!value.is_boolean()) fail(ErrorKind::configuration, "config: distance.standardize must be a boolean");
        cfg.distance.standardize = value.get<bool>();
      } else {
        fail(ErrorKind::configuration, "config: unknown field 'distance." + key + "'");
      }
    }
  }
  return cfg;
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::configuration, "config file '" + path + "': " + e.what());
  }
  return parse_config(doc, std::filesystem::path(path).parent_path().string());
}

// ---------------------------------------------------------------------------
// Request handling

namespace {

/// A request failure that maps onto an HTTP status and a structured body.
struct ApiError {
  int status;
  std::string error;
  std::string message;
  std::optional<std::string> field;
  ojson extra = ojson::object();
};

[[noreturn]] void bad_field(const std::string& field, const std::string& message) {
  throw ApiError{400, "invalid_request", message, field};
}

std::string percent_decode(std::string_view s, bool plus_is_space) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size() && std::isxdigit(static_cast<unsigned char>(s[i + 1])) &&
        std::isxdigit(static_cast<unsigned char>(s[i + 2]))) {
      out.push_back(static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16)));
      i += 2;
    } else if (plus_is_space && s[i] == '+') {
      out.push_back(' ');
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

struct Target {
  std::vector<std::string> segments;
  std::vector<std::pair<std::string, std::string>> query;
};

Target parse_target(std::string_view target) {
  Target t;
  const auto qpos = target.find('?');
  std::string_view path = target.substr(0, qpos);
  std::size_t start = 0;
  while (start <= path.size()) {
    const auto slash = path.find('/', start);
    const auto piece = path.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start);
    if (!piece.empty()) t.segments.push_back(percent_decode(piece, false));
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  if (qpos != std::string_view::npos) {
    std::string_view q = target.substr(qpos + 1);
    std::size_t pos = 0;
    while (pos <= q.size()) {
      const auto amp = q.find('&', pos);
      const auto item = q.substr(pos, amp == std::string_view::npos ? std::string_view::npos : amp - pos);
      if (!item.empty()) {
        const auto eq = item.find('=');
        t.query.emplace_back(percent_decode(item.substr(0, eq), true),
                             eq == std::string_view::npos ? std::string() : percent_decode(item.substr(eq + 1), true));
      }
      if (amp == std::string_view::npos) break;
      pos = amp + 1;
    }
  }
  return t;
}

class Query {
 public:
  Query(const std::vector<std::pair<std::string, std::string>>& items, std::set<std::string> allowed) {
    for (const auto& [k, v] : items) {
      if (!allowed.count(k)) bad_field(k, "unknown query parameter '" + k + "'");
      values_[k].push_back(v);
    }
  }
  std::optional<std::string> single(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    if (it->second.size() > 1) bad_field(key, "query parameter '" + key + "' given more than once");
    return it->second.front();
  }
  std::vector<std::string> all(const std::string& key) const {
    auto it = values_.find(key);
    return it == values_.end() ? std::vector<std::string>{} : it->second;
  }

 private:
  std::map<std::string, std::vector<std::string>> values_;
};

std::int64_t parse_epoch(const std::string& text, const std::string& field) {
  std::int64_t v = 0;
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, v);
  if (text.empty() || res.ec != std::errc() || res.ptr != end) bad_field(field, "'" + field + "' must be an integer");
  return v;
}

/// Strict JSON object reader: unknown fields are rejected by name.
class Body {
 public:
  Body(std::string_view text, std::set<std::string> allowed) {
    try {
      doc_ = json::parse(text.empty() ? std::string_view("{}") : text);
    } catch (const json::parse_error&) {
      throw ApiError{400, "invalid_json", "request body is not valid JSON", std::nullopt};
    }
    if (!doc_.is_object()) throw ApiError{400, "invalid_json", "request body must be a JSON object", std::nullopt};
    for (const auto& [key, _] : doc_.items()) {
      if (!allowed.count(key)) bad_field(key, "unknown field '" + key + "'");
    }
  }
  explicit Body(json doc, const std::string& prefix, std::set<std::string> allowed) : doc_(std::move(doc)), prefix_(prefix) {
    if (!doc_.is_object()) bad_field(prefix_, "'" + prefix_ + "' must be an object");
    for (const auto& [key, _] : doc_.items()) {
      if (!allowed.count(key)) bad_field(name(key), "unknown field '" + name(key) + "'");
    }
  }

  bool has(const std::string& key) const { return doc_.contains(key); }
  const json& raw(const std::string& key) const { return doc_.at(key); }

  const json& required(const std::string& key) const {
    if (!doc_.contains(key)) bad_field(name(key), "missing required field '" + name(key) + "'");
    return doc_.at(key);
  }
  std::string string(const std::string& key) const {
    const auto& v = required(key);
    if (!v.is_string()) bad_field(name(key), "'" + name(key) + "' must be a string");
    return v.get<std::string>();
  }
  std::int64_t integer(const std::string& key) const {
    const auto& v = required(key);
    if (!v.is_number_integer()) bad_field(name(key), "'" + name(key) + "' must be an integer");
    return v.get<std::int64_t>();
  }
  std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

 private:
  json doc_;
  std::string prefix_;
};

RowRef parse_row_ref(const Body& body) { return {body.string("entity_id"), body.integer("row_id")}; }

ojson optional_label(const std::optional<int>& label) { return label ? ojson(*label) : ojson(nullptr); }

std::string humanize(const std::string& name) {
  std::string out = name;
  std::replace(out.begin(), out.end(), '_', ' ');
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

}  // namespace

struct Service::Impl {
  AppConfig config;
  TreeEnsemble model;
  FeatureCatalog catalog;
  TransformSpec spec;
  Dataset dataset;
  Background background;
  std::unique_ptr<InterpretableLayout> layout;
  DistanceConfig distance;

  std::once_flag contributions_once;
  std::vector<ContributionSet> contributions;  // model space, aligned with dataset rows

  std::shared_mutex log_mutex;
  EventLog log;

  httplib::Server server;
  bool bound = false;
  std::atomic<bool> in_run{false};
  std::atomic<bool> stop_requested{false};

  explicit Impl(const AppConfig& cfg) : config(cfg) {
    if (config.background_size < 1) fail(ErrorKind::configuration, "background_size must be >= 1");
    catalog = load_catalog_file(config.catalog_path);
    model = load_model_file(config.model_path);
    if (static_cast<std::size_t>(model.n_features) != catalog.size()) {
      fail(ErrorKind::configuration, "model n_features (" + std::to_string(model.n_features) +
                                         ") does not match catalog size (" + std::to_string(catalog.size()) + ")");
    }
    if (!config.transform_spec_path.empty()) spec = load_transform_spec_file(config.transform_spec_path);
    dataset = ingest_file(config.dataset_path, catalog);
    const auto diagnostics = validate_catalog(catalog, spec, dataset);
    if (!diagnostics.empty()) {
      std::string msg = "catalog validation failed:";
      for (const auto& d : diagnostics) msg += " [" + std::string(to_string(d.kind)) + "] " + d.message + ";";
      fail(ErrorKind::configuration, msg);
    }
    if (dataset.empty()) fail(ErrorKind::configuration, "dataset '" + config.dataset_path + "' has no rows");
    layout = std::make_unique<InterpretableLayout>(catalog.names(), spec);
    background = sample_background(dataset, config.background_size, config.background_seed);
    distance = resolve_distance(config.distance.feature_subset, config.distance.weights, config.distance.standardize,
                                [](const std::string& field, const std::string& msg) {
                                  fail(ErrorKind::configuration, "config distance." + field + ": " + msg);
                                });
    // surface a bad default (e.g. all-zero weights) at startup
    (void)row_distance(dataset, distance, dataset.rows().front().values, dataset.rows().front().values);
    if (!config.event_log_path.empty() && std::filesystem::exists(config.event_log_path)) {
      log = read_event_log_file(config.event_log_path);
    }
  }

  template <typename OnError>
  DistanceConfig resolve_distance(const std::vector<std::string>& subset,
                                  const std::vector<std::pair<std::string, double>>& weights, bool standardize,
                                  OnError on_error) const {
    DistanceConfig d;
    d.standardize = standardize;
    std::set<std::size_t> chosen;
    for (const auto& name : subset) {
      if (auto c = catalog.find(name)) {
        chosen.insert(*c);
      } else if (auto i = layout->find(name)) {
        for (std::size_t c2 : layout->features()[*i].columns) chosen.insert(c2);
      } else {
        on_error("feature_subset", "unknown feature '" + name + "'");
      }
    }
    d.feature_subset.assign(chosen.begin(), chosen.end());
    if (!weights.empty()) {
      d.weights.assign(catalog.size(), 1.0);
      for (const auto& [name, w] : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) on_error("weights", "weight for '" + name + "' must be finite and >= 0");
        if (auto c = catalog.find(name)) {
          d.weights[*c] = w;
        } else if (auto i = layout->find(name)) {
          for (std::size_t c2 : layout->features()[*i].columns) d.weights[c2] = w;
        } else {
          on_error("weights", "unknown feature '" + name + "'");
        }
      }
    }
    return d;
  }

  const std::vector<ContributionSet>& all_contributions() {
    std::call_once(contributions_once, [this] {
      contributions.reserve(dataset.size());
      const auto names = catalog.names();
      for (const auto& r : dataset.rows()) {
        ContributionSet c = local_contributions(model, r.values, background);
        c.row_ref = r.ref;
        c.features = names;
        contributions.push_back(std::move(c));
      }
    });
    return contributions;
  }

  std::size_t row_index(const RowRef& ref) const {
    const EntityRow* r = dataset.find(ref.entity_id, ref.row_id);
    if (!r) {
      ojson extra = {{"entity_id", ref.entity_id}, {"row_id", ref.row_id}};
      throw ApiError{404, "not_found",
                     "no row for entity '" + ref.entity_id + "' at row_id " + std::to_string(ref.row_id),
                     std::nullopt, extra};
    }
    return static_cast<std::size_t>(r - dataset.rows().data());
  }

  ContributionSet interpretable(std::size_t index) { return to_interpretable(all_contributions()[index], spec); }

  ojson feature_meta(const InterpretableFeature& f) const {
    ojson j;
    j["feature"] = f.name;
    if (f.one_hot) {
      j["display_name"] = humanize(f.name);
      j["category"] = catalog.at(f.columns.front()).category;
    } else {
      const auto& info = catalog.at(f.columns.front());
      j["display_name"] = info.display_name;
      j["category"] = info.category;
    }
    return j;
  }

  std::size_t interpretable_index(const std::string& name) const {
    auto i = layout->find(name);
    if (!i) {
      throw ApiError{404, "not_found", "unknown feature '" + name + "'", std::nullopt, ojson{{"feature", name}}};
    }
    return *i;
  }

  // --- endpoints -----------------------------------------------------------

  ojson entities() const {
    ojson list = ojson::array();
    for (const auto& id : dataset.entities()) {
      const auto rows = dataset.rows_for(id);
      list.push_back({{"entity_id", id},
                      {"n_rows", rows.size()},
                      {"first_row_id", rows.front()->ref.row_id},
                      {"last_row_id", rows.back()->ref.row_id}});
    }
    return {{"entities", list}};
  }

  ojson entity_rows(const std::string& id) const {
    const auto rows = dataset.rows_for(id);
    if (rows.empty()) {
      throw ApiError{404, "not_found", "unknown entity '" + id + "'", std::nullopt, ojson{{"entity_id", id}}};
    }
    ojson list = ojson::array();
    for (const auto* r : rows) {
      const double margin = predict_margin(model, r->values);
      list.push_back({{"row_id", r->ref.row_id},
                      {"label", optional_label(r->label)},
                      {"margin", margin},
                      {"probability", logistic(margin)}});
    }
    return {{"entity_id", id}, {"rows", list}};
  }

  ojson features() const {
    ojson list = ojson::array();
    for (const auto& f : catalog.features()) {
      list.push_back({{"name", f.name},
                      {"display_name", f.display_name},
                      {"category", f.category},
                      {"type", to_string(f.type)},
                      {"unit", f.unit}});
    }
    ojson inter = ojson::array();
    for (const auto& f : layout->features()) {
      ojson j = feature_meta(f);
      ojson cols = ojson::array();
      for (std::size_t c : f.columns) cols.push_back(catalog.at(c).name);
      j["columns"] = cols;
      inter.push_back(std::move(j));
    }
    return {{"features", list}, {"interpretable_features", inter}};
  }

  ojson predict(std::string_view text) const {
    Body body(text, {"entity_id", "row_id"});
    const RowRef ref = parse_row_ref(body);
    const EntityRow& r = dataset.rows()[row_index(ref)];
    const double margin = predict_margin(model, r.values);
    return {{"entity_id", ref.entity_id},
            {"row_id", ref.row_id},
            {"margin", margin},
            {"probability", logistic(margin)},
            {"label", optional_label(r.label)}};
  }

  ojson contributions_for(std::string_view text) {
    Body body(text, {"entity_id", "row_id"});
    const RowRef ref = parse_row_ref(body);
    const std::size_t index = row_index(ref);
    const ContributionSet c = interpretable(index);
    const auto& values = dataset.rows()[index].values;
    ojson list = ojson::array();
    for (std::size_t i = 0; i < c.features.size(); ++i) {
      const auto& f = layout->features()[i];
      ojson j = feature_meta(f);
      const DisplayValue dv = display_value(catalog, spec, f.name, values);
      j["value"] = dv.value;
      j["unit"] = dv.unit;
      j["missing"] = dv.missing;
      j["contribution"] = c.contributions[i];
      list.push_back(std::move(j));
    }
    return {{"entity_id", ref.entity_id},
            {"row_id", ref.row_id},
            {"base_value", c.base_value},
            {"predicted_margin", c.predicted_margin},
            {"probability", logistic(c.predicted_margin)},
            {"contributions", list}};
  }

  ojson similar(std::string_view text) const {
    Body body(text, {"entity_id", "row_id", "k", "feature_subset", "weights", "standardize"});
    const RowRef ref = parse_row_ref(body);
    const std::int64_t k = body.integer("k");
    if (k < 1) bad_field("k", "'k' must be >= 1");
    DistanceConfig cfg = distance;
    if (body.has("feature_subset") || body.has("weights") || body.has("standardize")) {
      std::vector<std::string> subset = config.distance.feature_subset;
      std::vector<std::pair<std::string, double>> weights = config.distance.weights;
      bool standardize = config.distance.standardize;
      if (body.has("feature_subset")) {
        const auto& v = body.raw("feature_subset");
        if (!v.is_array()) bad_field("feature_subset", "'feature_subset' must be an array of feature names");
        subset.clear();
        for (const auto& f : v) {
          if (!f.is_string()) bad_field("feature_subset", "'feature_subset' must be an array of feature names");
          subset.push_back(f.get<std::string>());
        }
      }
      if (body.has("weights")) {
        const auto& v = body.raw("weights");
        if (!v.is_object()) bad_field("weights", "'weights' must map feature names to numbers");
        weights.clear();
        for (const auto& [name, w] : v.items()) {
          if (!w.is_number()) bad_field("weights", "'weights' must map feature names to numbers");
          weights.emplace_back(name, w.get<double>());
        }
      }
      if (body.has("standardize")) {
        if (!body.raw("standardize").is_boolean()) bad_field("standardize", "'standardize' must be a boolean");
        standardize = body.raw("standardize").get<bool>();
      }
      cfg = resolve_distance(subset, weights, standardize,
                             [](const std::string& field, const std::string& msg) { bad_field(field, msg); });
    }
    const EntityRow& r = dataset.rows()[row_index(ref)];
    std::vector<Neighbor> neighbors;
    try {
      neighbors = nearest_neighbors(dataset, r.values, static_cast<std::size_t>(k), cfg);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::configuration) bad_field("weights", e.what());
      throw;
    }
    ojson list = ojson::array();
    for (const auto& n : neighbors) {
      list.push_back({{"entity_id", n.row_ref.entity_id},
                      {"row_id", n.row_ref.row_id},
                      {"distance", n.distance},
                      {"label", optional_label(n.label)}});
    }
    return {{"entity_id", ref.entity_id}, {"row_id", ref.row_id}, {"k", k}, {"neighbors", list}};
  }

  ojson compare(std::string_view text) {
    Body body(text, {"a", "b"});
    const Body a_body(body.required("a"), "a", {"entity_id", "row_id"});
    const Body b_body(body.required("b"), "b", {"entity_id", "row_id"});
    const RowRef ref_a = parse_row_ref(a_body);
    const RowRef ref_b = parse_row_ref(b_body);
    const std::size_t ia = row_index(ref_a);
    const std::size_t ib = row_index(ref_b);
    const ContributionSet ca = interpretable(ia);
    const ContributionSet cb = interpretable(ib);
    const auto& va = dataset.rows()[ia].values;
    const auto& vb = dataset.rows()[ib].values;
    const std::vector<double> agg_a = layout->aggregate(va);
    const std::vector<double> agg_b = layout->aggregate(vb);
    const ComparisonReport report = compare_contributions(ca, cb, agg_a, agg_b);

    ojson list = ojson::array();
    for (std::size_t i = 0; i < report.features.size(); ++i) {
      const auto& f = layout->features()[i];
      const auto& fc = report.features[i];
      ojson j = feature_meta(f);
      j["value_a"] = display_value(catalog, spec, f.name, va).str();
      j["value_b"] = display_value(catalog, spec, f.name, vb).str();
      j["contribution_a"] = fc.contribution_a;
      j["contribution_b"] = fc.contribution_b;
      j["delta_contribution"] = fc.delta_contribution;
      list.push_back(std::move(j));
    }
    auto side = [](const RowRef& ref, const Prediction& p) {
      return ojson{{"entity_id", ref.entity_id}, {"row_id", ref.row_id}, {"margin", p.margin}, {"probability", p.probability}};
    };
    return {{"a", side(ref_a, report.prediction_a)}, {"b", side(ref_b, report.prediction_b)}, {"features", list}};
  }

  ojson importance(const Query& q) {
    const std::string text = q.single("method").value_or("gain");
    const auto method = parse_importance_method(text);
    if (!method) bad_field("method", "method must be one of gain, mean_abs_shap, signed_mean_shap");
    ImportanceTable table;
    if (*method == ImportanceMethod::gain) {
      table.method = *method;
      table.scores = normalize_scores(layout->aggregate(gain_totals(model)));
      table.normalized = true;
    } else {
      std::vector<ContributionSet> sets;
      sets.reserve(dataset.size());
      for (std::size_t i = 0; i < dataset.size(); ++i) sets.push_back(interpretable(i));
      table = importance_from_contributions(sets, *method);
    }
    ojson list = ojson::array();
    for (std::size_t i = 0; i < layout->size(); ++i) {
      ojson j = feature_meta(layout->features()[i]);
      j["score"] = table.scores[i];
      list.push_back(std::move(j));
    }
    return {{"method", to_string(*method)}, {"normalized", table.normalized}, {"scores", list}};
  }

  ojson scatter(const std::string& name) {
    const std::size_t fi = interpretable_index(name);
    const auto& f = layout->features()[fi];
    ojson points = ojson::array();
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const EntityRow& r = dataset.rows()[i];
      const ContributionSet c = interpretable(i);
      const DisplayValue dv = display_value(catalog, spec, f.name, r.values);
      ojson p;
      p["entity_id"] = r.ref.entity_id;
      p["row_id"] = r.ref.row_id;
      if (f.one_hot || dv.missing) {
        p["value"] = nullptr;
      } else {
        const double raw = r.values[f.columns.front()];
        p["value"] = f.affine ? f.affine->scale * raw + f.affine->offset : raw;
      }
      p["display"] = dv.str();
      p["missing"] = dv.missing;
      p["contribution"] = c.contributions[fi];
      p["probability"] = logistic(c.predicted_margin);
      points.push_back(std::move(p));
    }
    ojson j = feature_meta(f);
    j["unit"] = f.one_hot ? "" : catalog.at(f.columns.front()).unit;
    j["points"] = points;
    return j;
  }

  ojson distribution(const std::string& name) const {
    const std::size_t fi = interpretable_index(name);
    const auto& f = layout->features()[fi];
    const std::size_t column = f.columns.front();
    if (f.one_hot || catalog.at(column).type != ValueType::numeric) {
      bad_field("name", "feature '" + name + "' is not numeric");
    }
    std::vector<double> values;
    values.reserve(dataset.size());
    for (const auto& r : dataset.rows()) {
      const double raw = r.values[column];
      values.push_back(f.affine && !is_missing(raw) ? f.affine->scale * raw + f.affine->offset : raw);
    }
    BoxStats s;
    try {
      s = box_stats(values);
    } catch (const Error&) {
      throw ApiError{422, "empty_distribution", "feature '" + name + "' has no readings", std::nullopt,
                     ojson{{"feature", name}}};
    }
    ojson j = feature_meta(f);
    j["unit"] = catalog.at(column).unit;
    j["min"] = s.min;
    j["q1"] = s.q1;
    j["median"] = s.median;
    j["q3"] = s.q3;
    j["max"] = s.max;
    j["count"] = s.count;
    return j;
  }

  HttpResponse record_event(std::string_view text) {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error&) {
      throw ApiError{400, "invalid_json", "request body is not valid JSON", std::nullopt};
    }
    Event event;
    try {
      event = parse_event(doc);
    } catch (const Error& e) {
      const std::string msg = e.what();
      std::optional<std::string> field;
      const auto q1 = msg.find('\'');
      const auto q2 = q1 == std::string::npos ? q1 : msg.find('\'', q1 + 1);
      if (q2 != std::string::npos) field = msg.substr(q1 + 1, q2 - q1 - 1);
      throw ApiError{400, "invalid_request", msg, field};
    }
    std::unique_lock lock(log_mutex);
    try {
      log.record(event);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::conflict) throw ApiError{409, "conflict", e.what(), std::string("alert_id")};
      if (e.kind() == ErrorKind::reference) throw ApiError{422, "reference_error", e.what(), std::string("alert_id")};
      throw ApiError{400, "invalid_request", e.what(), std::nullopt};
    }
    if (!config.event_log_path.empty()) {
      std::ofstream out(config.event_log_path, std::ios::app);
      out << to_json(event).dump() << '\n';
    }
    ojson j = {{"recorded", to_json(event)["kind"]}, {"events", log.size()}};
    return {201, j.dump()};
  }

  ojson kpi_report(const Query& q) {
    auto start = q.single("start");
    auto end = q.single("end");
    if (!start) bad_field("start", "missing required query parameter 'start'");
    if (!end) bad_field("end", "missing required query parameter 'end'");
    const Window eval{parse_epoch(*start, "start"), parse_epoch(*end, "end")};
    if (!(eval.start < eval.end)) bad_field("end", "window end must be after start");
    std::vector<Window> historic;
    for (const auto& item : q.all("baseline")) {
      std::size_t pos = 0;
      while (pos <= item.size()) {
        const auto comma = item.find(',', pos);
        const std::string piece = item.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        const auto colon = piece.find(':');
        if (colon == std::string::npos) bad_field("baseline", "baseline windows are written start:end");
        historic.push_back({parse_epoch(piece.substr(0, colon), "baseline"), parse_epoch(piece.substr(colon + 1), "baseline")});
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    }
    std::shared_lock lock(log_mutex);
    try {
      return to_json(baseline_report(log, eval, historic));
    } catch (const Error& e) {
      bad_field("baseline", e.what());
    }
  }

  HttpResponse route(std::string_view method, std::string_view target, std::string_view body) {
    const Target t = parse_target(target);
    const auto& s = t.segments;
    auto ok = [](const ojson& j) { return HttpResponse{200, j.dump()}; };
    auto expect = [&](std::string_view wanted) {
      if (method != wanted) {
        throw ApiError{405, "method_not_allowed", "use " + std::string(wanted) + " for this endpoint", std::nullopt};
      }
    };
    auto no_query = [&] { Query(t.query, {}); };
    if (s.size() < 3 || s[0] != "api" || s[1] != "v1") {
      throw ApiError{404, "not_found", "no such endpoint", std::nullopt};
    }
    const std::string& head = s[2];
    if (head == "entities" && s.size() == 3) {
      expect("GET");
      no_query();
      return ok(entities());
    }
    if (head == "entities" && s.size() == 5 && s[4] == "rows") {
      expect("GET");
      no_query();
      return ok(entity_rows(s[3]));
    }
    if (head == "features" && s.size() == 3) {
      expect("GET");
      no_query();
      return ok(features());
    }
    if (head == "predict" && s.size() == 3) {
      expect("POST");
      no_query();
      return ok(predict(body));
    }
    if (head == "contributions" && s.size() == 3) {
      expect("POST");
      no_query();
      return ok(contributions_for(body));
    }
    if (head == "similar" && s.size() == 3) {
      expect("POST");
      no_query();
      return ok(similar(body));
    }
    if (head == "compare" && s.size() == 3) {
      expect("POST");
      no_query();
      return ok(compare(body));
    }
    if (head == "importance" && s.size() == 3) {
      expect("GET");
      return ok(importance(Query(t.query, {"method"})));
    }
    if (head == "feature" && s.size() == 5 && s[4] == "scatter") {
      expect("GET");
      no_query();
      return ok(scatter(s[3]));
    }
    if (head == "feature" && s.size() == 5 && s[4] == "distribution") {
      expect("GET");
      no_query();
      return ok(distribution(s[3]));
    }
    if (head == "events" && s.size() == 3) {
      expect("POST");
      no_query();
      return record_event(body);
    }
    if (head == "kpi" && s.size() == 4 && s[3] == "report") {
      expect("GET");
      return ok(kpi_report(Query(t.query, {"start", "end", "baseline"})));
    }
    throw ApiError{404, "not_found", "no such endpoint", std::nullopt};
  }
};

Service::Service(const AppConfig& config) : impl_(std::make_unique<Impl>(config)) {}

Service::~Service() = default;

const AppConfig& Service::config() const noexcept { return impl_->config; }

HttpResponse Service::handle(std::string_view method, std::string_view target, std::string_view body) {
  auto error_body = [](const ApiError& e) {
    ojson j;
    j["error"] = e.error;
    j["field"] = e.field ? ojson(*e.field) : ojson(nullptr);
    j["message"] = e.message;
    for (const auto& [k, v] : e.extra.items()) j[k] = v;
    return j.dump();
  };
  try {
    return impl_->route(method, target, body);
  } catch (const ApiError& e) {
    return {e.status, error_body(e)};
  } catch (const Error& e) {
    const int status = e.kind() == ErrorKind::not_found ? 404 : 500;
    return {status, error_body(ApiError{status, to_string(e.kind()), e.what(), std::nullopt})};
  } catch (const std::exception& e) {
    return {500, error_body(ApiError{500, "internal_error", e.what(), std::nullopt})};
  }
}

int Service::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    // The raw target; req.params would also hold form-encoded body fields.
    const std::string& target = req.target.empty() ? req.path : req.target;
    const HttpResponse out = handle(req.method, target, req.body);
    res.status = out.status;
    res.set_content(out.body, "application/json");
  };
  srv.Get(".*", handler);
  srv.Post(".*", handler);
  srv.Put(".*", handler);
  srv.Delete(".*", handler);
  int bound_port = port;
  if (port == 0) {
    bound_port = srv.bind_to_any_port(host);
    if (bound_port < 0) fail(ErrorKind::configuration, "cannot bind " + host + " on any port");
  } else if (!srv.bind_to_port(host, port)) {
    fail(ErrorKind::configuration, "cannot listen on " + host + ":" + std::to_string(port) + " (port in use?)");
  }
  impl_->bound = true;
  return bound_port;
}

void Service::run() {
  if (!impl_->bound) fail(ErrorKind::configuration, "run() called before bind()");
  impl_->in_run = true;
  if (!impl_->stop_requested) impl_->server.listen_after_bind();
  impl_->in_run = false;
}

void Service::stop() {
  // httplib ignores stop() until the accept loop is live, so wait for it.
  impl_->stop_requested = true;
  while (impl_->in_run && !impl_->server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  impl_->server.stop();
}

}  // namespace turbex
