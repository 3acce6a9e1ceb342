#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "turbex/dataset.hpp"
#include "turbex/model.hpp"

namespace turbex {

/// Row-major block of background rows, each of model width.
using Background = std::vector<std::vector<double>>;

/// A local explanation on the margin scale:
/// base_value + sum(contributions) == predicted_margin.
struct ContributionSet {
  RowRef row_ref;
  double base_value = 0.0;
  double predicted_margin = 0.0;
  std::vector<std::string> features;
  std::vector<double> contributions;

  double total() const;
};

/// Exact interventional Shapley values of the margin, computed per tree by
/// walking the paths where the explained row and a background row disagree.
/// Cost is O(|background| * leaves * depth).
ContributionSet local_contributions(const TreeEnsemble& model, std::span<const double> row,
                                    const Background& background);

/// Deterministic sample of at most `size` dataset rows (seeded partial shuffle).
Background sample_background(const Dataset& dataset, std::size_t size, std::uint64_t seed);

/// Names the contributions after the catalog when the widths agree, else f0..fN.
std::vector<std::string> feature_names(const TreeEnsemble& model, const FeatureCatalog* catalog);

enum class ImportanceMethod { gain, mean_abs_shap, signed_mean_shap };

const char* to_string(ImportanceMethod method) noexcept;
std::optional<ImportanceMethod> parse_importance_method(std::string_view text);

struct ImportanceTable {
  ImportanceMethod method = ImportanceMethod::gain;
  std::vector<std::string> features;
  std::vector<double> scores;
  bool normalized = false;
};

/// Scales a non-negative vector to sum 1; an all-zero vector stays zero.
std::vector<double> normalize_scores(std::vector<double> scores);

ImportanceTable global_importance(const TreeEnsemble& model, const Dataset& dataset, const Background& background,
                                  ImportanceMethod method);

/// SHAP-based importances from precomputed explanations (any feature space).
ImportanceTable importance_from_contributions(std::span<const ContributionSet> explanations,
                                              ImportanceMethod method);

struct DistanceConfig {
  std::vector<std::size_t> feature_subset;  // empty = every numeric feature
  std::vector<double> weights;              // empty = unit weights, else one per catalog feature
  bool standardize = true;
};

struct Neighbor {
  RowRef row_ref;
  double distance = 0.0;
  std::optional<int> label;
};

/// Weighted distance between two catalog-ordered rows. Numeric features add
/// w * d^2 under the square root, d optionally divided by the training
/// standard deviation (zero deviation contributes nothing); a numeric value
/// missing on exactly one side counts as d = 1. Categorical and boolean
/// features add w per mismatch outside the root.
double row_distance(const Dataset& dataset, const DistanceConfig& config, std::span<const double> a,
                    std::span<const double> b);

/// The k closest dataset rows ascending by distance, ties by (entity_id, row_id).
std::vector<Neighbor> nearest_neighbors(const Dataset& dataset, std::span<const double> query, std::size_t k,
                                        const DistanceConfig& config);

struct FeatureComparison {
  std::string feature;
  double value_a = 0.0;
  double value_b = 0.0;
  double contribution_a = 0.0;
  double contribution_b = 0.0;
  double delta_contribution = 0.0;  // b - a
};

struct Prediction {
  double margin = 0.0;
  double probability = 0.0;
};

struct ComparisonReport {
  RowRef row_a;
  RowRef row_b;
  std::vector<FeatureComparison> features;
  Prediction prediction_a;
  Prediction prediction_b;
};

/// Builds the report from two explanations over the same feature space.
ComparisonReport compare_contributions(const ContributionSet& a, const ContributionSet& b,
                                       std::span<const double> values_a, std::span<const double> values_b);

ComparisonReport compare_rows(const TreeEnsemble& model, const EntityRow& row_a, const EntityRow& row_b,
                              const Background& background);

struct ScatterPoint {
  RowRef row_ref;
  std::optional<double> value;  // nullopt = no reading
  double contribution = 0.0;
  double probability = 0.0;
};

std::vector<ScatterPoint> feature_scatter(const TreeEnsemble& model, const Dataset& dataset, std::size_t feature,
                                          const Background& background);

struct BoxStats {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

/// Type-7 quantiles over the non-missing values.
BoxStats box_stats(std::span<const double> values);
BoxStats feature_distribution(const Dataset& dataset, std::size_t feature);

}  // namespace turbex
