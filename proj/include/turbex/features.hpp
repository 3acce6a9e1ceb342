#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "json.hpp"

namespace turbex {

class Dataset;
struct ContributionSet;

enum class ValueType { numeric, categorical, boolean };

const char* to_string(ValueType type) noexcept;

struct FeatureInfo {
  std::string name;          // machine name, matches the data file header
  std::string display_name;  // what analysts read
  std::string category;
  ValueType type = ValueType::numeric;
  std::string unit;
};

/// Curated per-feature metadata. Lookup is by machine name.
class FeatureCatalog {
 public:
  FeatureCatalog() = default;
  /// Duplicate names are kept so that validate_catalog can report them;
  /// find() resolves to the first occurrence.
  explicit FeatureCatalog(std::vector<FeatureInfo> features);

  std::size_t size() const noexcept { return features_.size(); }
  bool empty() const noexcept { return features_.empty(); }
  const FeatureInfo& at(std::size_t index) const { return features_.at(index); }
  const std::vector<FeatureInfo>& features() const noexcept { return features_; }
  std::optional<std::size_t> find(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  std::vector<FeatureInfo> features_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Reads `name,display_name,category,type,unit`.
FeatureCatalog parse_catalog_csv(std::istream& in);
FeatureCatalog load_catalog_file(const std::string& path);
void write_catalog_csv(const FeatureCatalog& catalog, std::ostream& out);

struct OneHotGroup {
  std::string name;
  std::vector<std::string> columns;
};

/// Display value = scale * model value + offset.
struct Affine {
  std::string column;
  double scale = 1.0;
  double offset = 0.0;
};

struct Rename {
  std::string column;
  std::string name;
};

using Transform = std::variant<OneHotGroup, Affine, Rename>;

struct TransformSpec {
  std::vector<Transform> transforms;
};

TransformSpec parse_transform_spec(const nlohmann::json& document);
TransformSpec load_transform_spec_file(const std::string& path);
nlohmann::ordered_json save_transform_spec(const TransformSpec& spec);

/// One feature of the interpretable space and the model columns it covers.
struct InterpretableFeature {
  std::string name;
  std::vector<std::size_t> columns;  // indices into the model-space feature list
  bool one_hot = false;
  std::optional<Affine> affine;
};

/// Mapping from an ordered model-space feature list to the interpretable
/// space. Interpretable features keep the position of their first column.
class InterpretableLayout {
 public:
  InterpretableLayout(std::span<const std::string> model_features, const TransformSpec& spec);

  const std::vector<InterpretableFeature>& features() const noexcept { return features_; }
  std::size_t size() const noexcept { return features_.size(); }
  std::optional<std::size_t> find(std::string_view name) const;
  /// Sums model-space values into interpretable slots.
  std::vector<double> aggregate(std::span<const double> model_values) const;

 private:
  std::vector<InterpretableFeature> features_;
};

/// Collapses one-hot groups by summation and applies renames. Base value and
/// predicted margin are carried over unchanged.
ContributionSet to_interpretable(const ContributionSet& contributions, const TransformSpec& spec);

struct DisplayValue {
  std::string value;
  std::string unit;
  bool missing = false;

  std::string str() const { return unit.empty() ? value : value + " " + unit; }
};

inline constexpr std::string_view kNoReading = "no reading";

/// Formats the reading of interpretable feature `feature` from a model-space
/// row laid out in catalog order.
DisplayValue display_value(const FeatureCatalog& catalog, const TransformSpec& spec, std::string_view feature,
                           std::span<const double> model_row);

/// Single-column shorthand; not valid for one-hot groups.
DisplayValue display_value(const FeatureCatalog& catalog, const TransformSpec& spec, std::string_view feature,
                           double raw_value);

std::string format_number(double value);

enum class DiagnosticKind {
  uncataloged_column,
  duplicate_name,
  empty_display_name,
  overlapping_group,
  duplicate_transform_column,
  unknown_transform_column,
  zero_scale,
};

const char* to_string(DiagnosticKind kind) noexcept;

struct Diagnostic {
  DiagnosticKind kind;
  std::string subject;
  std::string message;
};

std::vector<Diagnostic> validate_catalog(const FeatureCatalog& catalog, const TransformSpec& spec,
                                         std::span<const std::string> dataset_columns);
std::vector<Diagnostic> validate_catalog(const FeatureCatalog& catalog, const TransformSpec& spec,
                                         const Dataset& dataset);

}  // namespace turbex
