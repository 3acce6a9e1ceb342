#include "turbex/features.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include "csv.hpp"
#include "turbex/dataset.hpp"
#include "turbex/error.hpp"
#include "turbex/explain.hpp"

namespace turbex {

using nlohmann::json;

const char* to_string(ValueType type) noexcept {
  switch (type) {
    case ValueType::numeric: return "numeric";
    case ValueType::categorical: return "categorical";
    case ValueType::boolean: return "boolean";
  }
  return "numeric";
}

FeatureCatalog::FeatureCatalog(std::vector<FeatureInfo> features) : features_(std::move(features)) {
  for (std::size_t i = 0; i < features_.size(); ++i) index_.emplace(features_[i].name, i);
}

std::optional<std::size_t> FeatureCatalog::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> FeatureCatalog::names() const {
  std::vector<std::string> out;
  out.reserve(features_.size());
  for (const auto& f : features_) out.push_back(f.name);
  return out;
}

FeatureCatalog parse_catalog_csv(std::istream& in) {
  std::string line;
  if (!csv::read_line(in, line)) fail(ErrorKind::parse, "catalog: missing header line");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (line != "name,display_name,category,type,unit") {
    fail(ErrorKind::parse, "catalog line 1: header must be 'name,display_name,category,type,unit'");
  }
  std::vector<FeatureInfo> features;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = csv::split(line);
    const std::string loc = "catalog line " + std::to_string(line_no);
    if (!fields) fail(ErrorKind::parse, loc + ": unterminated quote");
    if (fields->size() != 5) fail(ErrorKind::parse, loc + ": expected 5 fields, found " + std::to_string(fields->size()));
    FeatureInfo info;
    info.name = (*fields)[0];
    info.display_name = (*fields)[1];
    info.category = (*fields)[2];
    const std::string& type = (*fields)[3];
    if (type == "numeric") {
      info.type = ValueType::numeric;
    } else if (type == "categorical") {
      info.type = ValueType::categorical;
    } else if (type == "boolean") {
      info.type = ValueType::boolean;
    } else {
      fail(ErrorKind::parse, loc + ": unknown type '" + type + "'");
    }
    info.unit = (*fields)[4];
    if (info.name.empty()) fail(ErrorKind::parse, loc + ": empty feature name");
    features.push_back(std::move(info));
  }
  return FeatureCatalog(std::move(features));
}

FeatureCatalog load_catalog_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open catalog file '" + path + "'");
  return parse_catalog_csv(in);
}

void write_catalog_csv(const FeatureCatalog& catalog, std::ostream& out) {
  out << "name,display_name,category,type,unit\n";
  for (const auto& f : catalog.features()) {
    out << csv::quote(f.name) << ',' << csv::quote(f.display_name) << ',' << csv::quote(f.category) << ','
        << to_string(f.type) << ',' << csv::quote(f.unit) << '\n';
  }
}

// ---------------------------------------------------------------------------

namespace {

std::string string_field(const json& obj, const char* field, const std::string& loc) {
  if (!obj.contains(field) || !obj[field].is_string()) {
    fail(ErrorKind::parse, loc + ": '" + field + "' must be a string");
  }
  return obj[field].get<std::string>();
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& loc) {
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key)) fail(ErrorKind::parse, loc + ": unknown field '" + key + "'");
  }
}

}  // namespace

TransformSpec parse_transform_spec(const json& document) {
  if (!document.is_object() || !document.contains("transforms") || !document["transforms"].is_array()) {
    fail(ErrorKind::parse, "transform spec: expected {\"transforms\": [...]}");
  }
  reject_unknown(document, {"transforms"}, "transform spec");
  TransformSpec spec;
  std::size_t index = 0;
  for (const auto& t : document["transforms"]) {
    const std::string loc = "transform " + std::to_string(index++);
    if (!t.is_object()) fail(ErrorKind::parse, loc + ": must be an object");
    const std::string kind = string_field(t, "kind", loc);
    if (kind == "one_hot_group") {
      reject_unknown(t, {"kind", "name", "columns"}, loc);
      OneHotGroup g;
      g.name = string_field(t, "name", loc);
      if (!t.contains("columns") || !t["columns"].is_array() || t["columns"].empty()) {
        fail(ErrorKind::parse, loc + ": 'columns' must be a non-empty array");
      }
      for (const auto& c : t["columns"]) {
        if (!c.is_string()) fail(ErrorKind::parse, loc + ": column names must be strings");
        g.columns.push_back(c.get<std::string>());
      }
      spec.transforms.emplace_back(std::move(g));
    } else if (kind == "affine") {
      reject_unknown(t, {"kind", "column", "scale", "offset"}, loc);
      Affine a;
      a.column = string_field(t, "column", loc);
      if (!t.contains("scale") || !t["scale"].is_number()) fail(ErrorKind::parse, loc + ": 'scale' must be a number");
      a.scale = t["scale"].get<double>();
      if (t.contains("offset")) {
        if (!t["offset"].is_number()) fail(ErrorKind::parse, loc + ": 'offset' must be a number");
        a.offset = t["offset"].get<double>();
      }
      spec.transforms.emplace_back(std::move(a));
    } else if (kind == "rename") {
      reject_unknown(t, {"kind", "column", "name"}, loc);
      spec.transforms.emplace_back(Rename{string_field(t, "column", loc), string_field(t, "name", loc)});
    } else {
      fail(ErrorKind::parse, loc + ": unknown kind '" + kind + "'");
    }
  }
  return spec;
}

TransformSpec load_transform_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open transform spec '" + path + "'");
  try {
    return parse_transform_spec(json::parse(in));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::parse, "transform spec '" + path + "': " + e.what());
  }
}

nlohmann::ordered_json save_transform_spec(const TransformSpec& spec) {
  nlohmann::ordered_json doc;
  doc["transforms"] = nlohmann::ordered_json::array();
  for (const auto& t : spec.transforms) {
    nlohmann::ordered_json j;
    if (const auto* g = std::get_if<OneHotGroup>(&t)) {
      j["kind"] = "one_hot_group";
      j["name"] = g->name;
      j["columns"] = g->columns;
    } else if (const auto* a = std::get_if<Affine>(&t)) {
      j["kind"] = "affine";
      j["column"] = a->column;
      j["scale"] = a->scale;
      j["offset"] = a->offset;
    } else {
      const auto& r = std::get<Rename>(t);
      j["kind"] = "rename";
      j["column"] = r.column;
      j["name"] = r.name;
    }
    doc["transforms"].push_back(std::move(j));
  }
  return doc;
}

// ---------------------------------------------------------------------------

InterpretableLayout::InterpretableLayout(std::span<const std::string> model_features, const TransformSpec& spec) {
  // column name -> transform record index
  std::map<std::string, std::size_t> claimed;
  for (std::size_t t = 0; t < spec.transforms.size(); ++t) {
    auto claim = [&](const std::string& column) {
      if (!claimed.emplace(column, t).second) {
        fail(ErrorKind::configuration, "transform spec: column '" + column + "' is claimed by more than one transform");
      }
    };
    std::visit(
        [&](const auto& rec) {
          using T = std::decay_t<decltype(rec)>;
          if constexpr (std::is_same_v<T, OneHotGroup>) {
            for (const auto& c : rec.columns) claim(c);
          } else {
            claim(rec.column);
          }
        },
        spec.transforms[t]);
  }

  std::map<std::size_t, std::size_t> group_slot;  // transform index -> features_ index
  for (std::size_t i = 0; i < model_features.size(); ++i) {
    auto it = claimed.find(model_features[i]);
    if (it == claimed.end()) {
      features_.push_back({model_features[i], {i}, false, std::nullopt});
      continue;
    }
    const Transform& rec = spec.transforms[it->second];
    if (const auto* g = std::get_if<OneHotGroup>(&rec)) {
      auto slot = group_slot.find(it->second);
      if (slot == group_slot.end()) {
        group_slot.emplace(it->second, features_.size());
        features_.push_back({g->name, {i}, true, std::nullopt});
      } else {
        features_[slot->second].columns.push_back(i);
      }
    } else if (const auto* a = std::get_if<Affine>(&rec)) {
      features_.push_back({model_features[i], {i}, false, *a});
    } else {
      features_.push_back({std::get<Rename>(rec).name, {i}, false, std::nullopt});
    }
  }
}

std::optional<std::size_t> InterpretableLayout::find(std::string_view name) const {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<double> InterpretableLayout::aggregate(std::span<const double> model_values) const {
  std::vector<double> out;
  out.reserve(features_.size());
  for (const auto& f : features_) {
    double sum = 0.0;
    for (std::size_t c : f.columns) sum += model_values[c];
    out.push_back(sum);
  }
  return out;
}

ContributionSet to_interpretable(const ContributionSet& contributions, const TransformSpec& spec) {
  if (contributions.features.size() != contributions.contributions.size()) {
    fail(ErrorKind::dimension, "contribution set has mismatched names and values");
  }
  InterpretableLayout layout(contributions.features, spec);
  ContributionSet out;
  out.row_ref = contributions.row_ref;
  out.base_value = contributions.base_value;
  out.predicted_margin = contributions.predicted_margin;
  out.contributions = layout.aggregate(contributions.contributions);
  for (const auto& f : layout.features()) out.features.push_back(f.name);
  return out;
}

// ---------------------------------------------------------------------------

std::string format_number(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 10);
  return std::string(buf, res.ptr);
}

namespace {

DisplayValue format_column(const FeatureInfo& info, const std::optional<Affine>& affine, double raw) {
  if (std::isnan(raw)) return {std::string(kNoReading), "", true};
  switch (info.type) {
    case ValueType::boolean:
      return {raw != 0.0 ? "true" : "false", "", false};
    case ValueType::categorical:
      return {format_number(raw), info.unit, false};
    case ValueType::numeric:
      break;
  }
  const double shown = affine ? affine->scale * raw + affine->offset : raw;
  return {format_number(shown), info.unit, false};
}

}  // namespace

DisplayValue display_value(const FeatureCatalog& catalog, const TransformSpec& spec, std::string_view feature,
                           std::span<const double> model_row) {
  if (model_row.size() != catalog.size()) {
    fail(ErrorKind::dimension, "row width " + std::to_string(model_row.size()) + " does not match catalog size " +
                                   std::to_string(catalog.size()));
  }
  const auto names = catalog.names();
  InterpretableLayout layout(names, spec);
  auto idx = layout.find(feature);
  if (!idx) fail(ErrorKind::not_found, "unknown feature '" + std::string(feature) + "'");
  const auto& f = layout.features()[*idx];
  if (f.one_hot) {
    bool any_present = false;
    for (std::size_t c : f.columns) {
      const double v = model_row[c];
      if (std::isnan(v)) continue;
      any_present = true;
      if (v >= 0.5) return {catalog.at(c).name, "", false};
    }
    if (!any_present) return {std::string(kNoReading), "", true};
    return {"none", "", false};
  }
  const std::size_t c = f.columns.front();
  return format_column(catalog.at(c), f.affine, model_row[c]);
}

DisplayValue display_value(const FeatureCatalog& catalog, const TransformSpec& spec, std::string_view feature,
                           double raw_value) {
  const auto names = catalog.names();
  InterpretableLayout layout(names, spec);
  auto idx = layout.find(feature);
  if (!idx) fail(ErrorKind::not_found, "unknown feature '" + std::string(feature) + "'");
  const auto& f = layout.features()[*idx];
  if (f.one_hot) {
    fail(ErrorKind::invalid_argument, "feature '" + std::string(feature) + "' is a one-hot group; pass the full row");
  }
  const std::size_t c = f.columns.front();
  return format_column(catalog.at(c), f.affine, raw_value);
}

// ---------------------------------------------------------------------------

const char* to_string(DiagnosticKind kind) noexcept {
  switch (kind) {
    case DiagnosticKind::uncataloged_column: return "uncataloged_column";
    case DiagnosticKind::duplicate_name: return "duplicate_name";
    case DiagnosticKind::empty_display_name: return "empty_display_name";
    case DiagnosticKind::overlapping_group: return "overlapping_group";
    case DiagnosticKind::duplicate_transform_column: return "duplicate_transform_column";
    case DiagnosticKind::unknown_transform_column: return "unknown_transform_column";
    case DiagnosticKind::zero_scale: return "zero_scale";
  }
  return "unknown";
}

std::vector<Diagnostic> validate_catalog(const FeatureCatalog& catalog, const TransformSpec& spec,
                                         std::span<const std::string> dataset_columns) {
  std::vector<Diagnostic> out;
  for (const auto& column : dataset_columns) {
    if (!catalog.find(column)) {
      out.push_back({DiagnosticKind::uncataloged_column, column, "dataset column '" + column + "' has no catalog entry"});
    }
  }
  std::set<std::string> seen;
  for (const auto& f : catalog.features()) {
    if (!seen.insert(f.name).second) {
      out.push_back({DiagnosticKind::duplicate_name, f.name, "catalog name '" + f.name + "' appears more than once"});
    }
    if (f.display_name.empty()) {
      out.push_back({DiagnosticKind::empty_display_name, f.name, "feature '" + f.name + "' has an empty display name"});
    }
  }

  std::map<std::string, std::vector<std::string>> group_members;  // column -> groups
  std::map<std::string, int> other_claims;                        // column -> non-group records
  auto check_known = [&](const std::string& column) {
    if (!catalog.find(column)) {
      out.push_back({DiagnosticKind::unknown_transform_column, column,
                     "transform references column '" + column + "' which is not in the catalog"});
    }
  };
  for (const auto& t : spec.transforms) {
    if (const auto* g = std::get_if<OneHotGroup>(&t)) {
      for (const auto& c : g->columns) {
        group_members[c].push_back(g->name);
        check_known(c);
      }
    } else if (const auto* a = std::get_if<Affine>(&t)) {
      ++other_claims[a->column];
      check_known(a->column);
      if (a->scale == 0.0) {
        out.push_back({DiagnosticKind::zero_scale, a->column, "affine transform on '" + a->column + "' has scale 0"});
      }
    } else {
      const auto& r = std::get<Rename>(t);
      ++other_claims[r.column];
      check_known(r.column);
    }
  }
  for (const auto& [column, groups] : group_members) {
    if (groups.size() > 1) {
      std::string list;
      for (const auto& g : groups) list += (list.empty() ? "" : ", ") + g;
      out.push_back({DiagnosticKind::overlapping_group, column,
                     "column '" + column + "' belongs to several one-hot groups: " + list});
    }
  }
  for (const auto& [column, count] : other_claims) {
    const int total = count + (group_members.count(column) ? 1 : 0);
    if (total > 1) {
      out.push_back({DiagnosticKind::duplicate_transform_column, column,
                     "column '" + column + "' is claimed by more than one transform record"});
    }
  }
  return out;
}

std::vector<Diagnostic> validate_catalog(const FeatureCatalog& catalog, const TransformSpec& spec,
                                         const Dataset& dataset) {
  const auto columns = dataset.columns();
  return validate_catalog(catalog, spec, columns);
}

}  // namespace turbex
