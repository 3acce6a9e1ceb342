#include "turbex/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "turbex/error.hpp"

namespace turbex {

double ContributionSet::total() const {
  double sum = 0.0;
  for (double c : contributions) sum += c;
  return sum;
}

// ---------------------------------------------------------------------------
// Interventional Shapley values for tree ensembles.
//
// For one tree and one background row b, the composite row that takes
// features in S from x and the rest from b reaches a leaf L iff every split
// on the path to L is satisfied. A split where x and b route the same way
// places no constraint on S; a split where they differ requires the feature
// to be in S (x side) or out of S (b side). Each leaf therefore contributes
// value * [A subset of S] * [B disjoint from S], whose Shapley values are
//   +value * (|A|-1)! |B|! / (|A|+|B|)!   for i in A,
//   -value * |A|! (|B|-1)! / (|A|+|B|)!   for i in B.

namespace {

class BinomialTable {
 public:
  explicit BinomialTable(std::size_t max_n) : rows_(max_n + 1) {
    for (std::size_t n = 0; n <= max_n; ++n) {
      rows_[n].assign(n + 1, 1.0);
      for (std::size_t k = 1; k < n; ++k) rows_[n][k] = rows_[n - 1][k - 1] + rows_[n - 1][k];
    }
  }
  double operator()(std::size_t n, std::size_t k) const { return rows_[n][k]; }

 private:
  std::vector<std::vector<double>> rows_;
};

enum class Side : unsigned char { unset, foreground, background };

class PathAttributor {
 public:
  PathAttributor(const Tree& tree, std::span<const double> x, std::span<const double> b, const BinomialTable& binom,
                 std::vector<Side>& sides, std::vector<double>& phi)
      : tree_(tree), x_(x), b_(b), binom_(binom), sides_(sides), phi_(phi) {}

  void run() { walk(0); }

 private:
  void walk(int id) {
    const TreeNode& n = tree_.node(id);
    if (n.is_leaf()) {
      credit(*n.leaf_value);
      return;
    }
    const auto f = static_cast<std::size_t>(*n.feature_index);
    const int to_x = tree_.next(n, x_[f]);
    const int to_b = tree_.next(n, b_[f]);
    switch (sides_[f]) {
      case Side::foreground: walk(to_x); return;
      case Side::background: walk(to_b); return;
      case Side::unset: break;
    }
    if (to_x == to_b) {
      walk(to_x);
      return;
    }
    path_.push_back(f);
    sides_[f] = Side::foreground;
    ++n_fore_;
    walk(to_x);
    --n_fore_;
    sides_[f] = Side::background;
    ++n_back_;
    walk(to_b);
    --n_back_;
    sides_[f] = Side::unset;
    path_.pop_back();
  }

  void credit(double value) {
    if (path_.empty()) return;
    const std::size_t total = n_fore_ + n_back_;
    const double w_fore = n_fore_ ? value / (static_cast<double>(n_fore_) * binom_(total, n_fore_)) : 0.0;
    const double w_back = n_back_ ? value / (static_cast<double>(n_back_) * binom_(total, n_back_)) : 0.0;
    for (std::size_t f : path_) {
      if (sides_[f] == Side::foreground) {
        phi_[f] += w_fore;
      } else {
        phi_[f] -= w_back;
      }
    }
  }

  const Tree& tree_;
  std::span<const double> x_;
  std::span<const double> b_;
  const BinomialTable& binom_;
  std::vector<Side>& sides_;
  std::vector<double>& phi_;
  std::vector<std::size_t> path_;
  std::size_t n_fore_ = 0;
  std::size_t n_back_ = 0;
};

std::size_t max_tree_depth(const Tree& tree) {
  std::size_t deepest = 0;
  std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [id, depth] = stack.back();
    stack.pop_back();
    const TreeNode& n = tree.node(id);
    if (n.is_leaf()) {
      deepest = std::max(deepest, depth);
    } else {
      stack.emplace_back(*n.left_child, depth + 1);
      stack.emplace_back(*n.right_child, depth + 1);
    }
  }
  return deepest;
}

void check_width(const TreeEnsemble& model, std::span<const double> row, const char* what) {
  if (row.size() != static_cast<std::size_t>(model.n_features)) {
    fail(ErrorKind::dimension, std::string(what) + " has " + std::to_string(row.size()) + " values, model expects " +
                                   std::to_string(model.n_features));
  }
}

}  // namespace

ContributionSet local_contributions(const TreeEnsemble& model, std::span<const double> row,
                                    const Background& background) {
  if (background.empty()) fail(ErrorKind::configuration, "background set is empty");
  check_width(model, row, "row");
  for (const auto& b : background) check_width(model, b, "background row");

  std::size_t depth = 0;
  for (const auto& tree : model.trees) depth = std::max(depth, max_tree_depth(tree));
  const BinomialTable binom(depth);

  const auto width = static_cast<std::size_t>(model.n_features);
  std::vector<double> phi(width, 0.0);
  std::vector<Side> sides(width, Side::unset);
  double base_sum = 0.0;
  for (const auto& b : background) {
    base_sum += predict_margin(model, b);
    for (const auto& tree : model.trees) PathAttributor(tree, row, b, binom, sides, phi).run();
  }

  const auto n_background = static_cast<double>(background.size());
  ContributionSet out;
  out.base_value = base_sum / n_background;
  out.predicted_margin = predict_margin(model, row);
  out.contributions.resize(width);
  for (std::size_t f = 0; f < width; ++f) out.contributions[f] = phi[f] / n_background;
  out.features = feature_names(model, nullptr);
  return out;
}

std::vector<std::string> feature_names(const TreeEnsemble& model, const FeatureCatalog* catalog) {
  if (catalog && catalog->size() == static_cast<std::size_t>(model.n_features)) return catalog->names();
  std::vector<std::string> out;
  for (int f = 0; f < model.n_features; ++f) out.push_back("f" + std::to_string(f));
  return out;
}

Background sample_background(const Dataset& dataset, std::size_t size, std::uint64_t seed) {
  const std::size_t n = dataset.size();
  std::vector<std::size_t> picked(n);
  std::iota(picked.begin(), picked.end(), 0);
  if (size < n) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
      std::swap(picked[i], picked[j]);
    }
    picked.resize(size);
    std::sort(picked.begin(), picked.end());
  }
  Background out;
  out.reserve(picked.size());
  for (std::size_t i : picked) out.push_back(dataset.rows()[i].values);
  return out;
}

// ---------------------------------------------------------------------------

const char* to_string(ImportanceMethod method) noexcept {
  switch (method) {
    case ImportanceMethod::gain: return "gain";
    case ImportanceMethod::mean_abs_shap: return "mean_abs_shap";
    case ImportanceMethod::signed_mean_shap: return "signed_mean_shap";
  }
  return "gain";
}

std::optional<ImportanceMethod> parse_importance_method(std::string_view text) {
  if (text == "gain") return ImportanceMethod::gain;
  if (text == "mean_abs_shap") return ImportanceMethod::mean_abs_shap;
  if (text == "signed_mean_shap") return ImportanceMethod::signed_mean_shap;
  return std::nullopt;
}

std::vector<double> normalize_scores(std::vector<double> scores) {
  double total = 0.0;
  for (double s : scores) {
    if (s < 0.0) fail(ErrorKind::invalid_argument, "cannot normalize negative importance scores");
    total += s;
  }
  if (total > 0.0) {
    for (double& s : scores) s /= total;
  }
  return scores;
}

ImportanceTable importance_from_contributions(std::span<const ContributionSet> explanations,
                                              ImportanceMethod method) {
  if (method == ImportanceMethod::gain) {
    fail(ErrorKind::invalid_argument, "gain importance is computed from the model, not from contributions");
  }
  if (explanations.empty()) fail(ErrorKind::configuration, "SHAP importance needs a non-empty dataset");
  const auto& first = explanations.front();
  ImportanceTable table;
  table.method = method;
  table.features = first.features;
  std::vector<double> sums(first.contributions.size(), 0.0);
  for (const auto& e : explanations) {
    if (e.contributions.size() != sums.size()) fail(ErrorKind::dimension, "explanations differ in width");
    for (std::size_t f = 0; f < sums.size(); ++f) {
      sums[f] += method == ImportanceMethod::mean_abs_shap ? std::abs(e.contributions[f]) : e.contributions[f];
    }
  }
  for (double& s : sums) s /= static_cast<double>(explanations.size());
  if (method == ImportanceMethod::mean_abs_shap) {
    table.scores = normalize_scores(std::move(sums));
    table.normalized = true;
  } else {
    table.scores = std::move(sums);
    table.normalized = false;
  }
  return table;
}

ImportanceTable global_importance(const TreeEnsemble& model, const Dataset& dataset, const Background& background,
                                  ImportanceMethod method) {
  if (method == ImportanceMethod::gain) {
    ImportanceTable table;
    table.method = method;
    table.features = feature_names(model, &dataset.catalog());
    table.scores = normalize_scores(gain_totals(model));
    table.normalized = true;
    return table;
  }
  if (dataset.empty()) fail(ErrorKind::configuration, "SHAP importance needs a non-empty dataset");
  std::vector<ContributionSet> explanations;
  explanations.reserve(dataset.size());
  for (const auto& r : dataset.rows()) explanations.push_back(local_contributions(model, r.values, background));
  ImportanceTable table = importance_from_contributions(explanations, method);
  table.features = feature_names(model, &dataset.catalog());
  return table;
}

// ---------------------------------------------------------------------------

namespace {

struct ResolvedDistance {
  std::vector<std::size_t> subset;
  std::vector<double> weights;  // per catalog feature
};

ResolvedDistance resolve(const Dataset& dataset, const DistanceConfig& config) {
  const std::size_t width = dataset.n_features();
  ResolvedDistance out;
  if (config.feature_subset.empty()) {
    for (std::size_t f = 0; f < width; ++f) {
      if (dataset.catalog().at(f).type == ValueType::numeric) out.subset.push_back(f);
    }
  } else {
    out.subset = config.feature_subset;
    for (std::size_t f : out.subset) {
      if (f >= width) fail(ErrorKind::configuration, "distance feature index " + std::to_string(f) + " out of range");
    }
  }
  if (out.subset.empty()) fail(ErrorKind::configuration, "distance feature subset is empty");
  if (config.weights.empty()) {
    out.weights.assign(width, 1.0);
  } else {
    if (config.weights.size() != width) {
      fail(ErrorKind::configuration, "distance weights must list one value per catalog feature");
    }
    out.weights = config.weights;
  }
  bool any_positive = false;
  for (std::size_t f : out.subset) {
    const double w = out.weights[f];
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorKind::configuration, "distance weights must be finite and >= 0");
    any_positive = any_positive || w > 0.0;
  }
  if (!any_positive) fail(ErrorKind::configuration, "all distance weights are zero");
  return out;
}

double resolved_distance(const Dataset& dataset, const ResolvedDistance& cfg, bool standardize,
                         std::span<const double> a, std::span<const double> b) {
  double squares = 0.0;
  double mismatches = 0.0;
  for (std::size_t f : cfg.subset) {
    const double w = cfg.weights[f];
    const bool ma = is_missing(a[f]);
    const bool mb = is_missing(b[f]);
    if (dataset.catalog().at(f).type != ValueType::numeric) {
      if (ma != mb || (!ma && a[f] != b[f])) mismatches += w;
      continue;
    }
    if (ma && mb) continue;
    double d = 1.0;
    if (!ma && !mb) {
      d = a[f] - b[f];
      if (standardize) {
        const double sd = dataset.stats()[f].stddev;
        d = sd > 0.0 ? d / sd : 0.0;
      }
    }
    squares += w * d * d;
  }
  return std::sqrt(squares) + mismatches;
}

}  // namespace

double row_distance(const Dataset& dataset, const DistanceConfig& config, std::span<const double> a,
                    std::span<const double> b) {
  if (a.size() != dataset.n_features() || b.size() != dataset.n_features()) {
    fail(ErrorKind::dimension, "distance rows must match the catalog width");
  }
  return resolved_distance(dataset, resolve(dataset, config), config.standardize, a, b);
}

std::vector<Neighbor> nearest_neighbors(const Dataset& dataset, std::span<const double> query, std::size_t k,
                                        const DistanceConfig& config) {
  if (k < 1) fail(ErrorKind::invalid_argument, "k must be >= 1");
  if (dataset.empty()) fail(ErrorKind::configuration, "neighbor search needs a non-empty dataset");
  if (query.size() != dataset.n_features()) {
    fail(ErrorKind::dimension, "query has " + std::to_string(query.size()) + " values, dataset has " +
                                   std::to_string(dataset.n_features()));
  }
  const ResolvedDistance cfg = resolve(dataset, config);
  const auto& rows = dataset.rows();
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    scored.emplace_back(resolved_distance(dataset, cfg, config.standardize, query, rows[i].values), i);
  }
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                    [&](const auto& l, const auto& r) {
                      if (l.first != r.first) return l.first < r.first;
                      return rows[l.second].ref < rows[r.second].ref;
                    });
  std::vector<Neighbor> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const auto& row = rows[scored[i].second];
    out.push_back({row.ref, scored[i].first, row.label});
  }
  return out;
}

// ---------------------------------------------------------------------------

ComparisonReport compare_contributions(const ContributionSet& a, const ContributionSet& b,
                                       std::span<const double> values_a, std::span<const double> values_b) {
  if (a.features != b.features) fail(ErrorKind::invalid_argument, "compared explanations use different features");
  if (values_a.size() != a.features.size() || values_b.size() != b.features.size()) {
    fail(ErrorKind::dimension, "compared values do not match the explanation width");
  }
  ComparisonReport report;
  report.row_a = a.row_ref;
  report.row_b = b.row_ref;
  report.prediction_a = {a.predicted_margin, logistic(a.predicted_margin)};
  report.prediction_b = {b.predicted_margin, logistic(b.predicted_margin)};
  report.features.reserve(a.features.size());
  for (std::size_t f = 0; f < a.features.size(); ++f) {
    report.features.push_back({a.features[f], values_a[f], values_b[f], a.contributions[f], b.contributions[f],
                               b.contributions[f] - a.contributions[f]});
  }
  return report;
}

ComparisonReport compare_rows(const TreeEnsemble& model, const EntityRow& row_a, const EntityRow& row_b,
                              const Background& background) {
  ContributionSet a = local_contributions(model, row_a.values, background);
  ContributionSet b = local_contributions(model, row_b.values, background);
  a.row_ref = row_a.ref;
  b.row_ref = row_b.ref;
  return compare_contributions(a, b, row_a.values, row_b.values);
}

std::vector<ScatterPoint> feature_scatter(const TreeEnsemble& model, const Dataset& dataset, std::size_t feature,
                                          const Background& background) {
  if (feature >= static_cast<std::size_t>(model.n_features) || feature >= dataset.n_features()) {
    fail(ErrorKind::not_found, "unknown feature index " + std::to_string(feature));
  }
  if (dataset.empty()) fail(ErrorKind::configuration, "scatter needs a non-empty dataset");
  std::vector<ScatterPoint> out;
  out.reserve(dataset.size());
  for (const auto& r : dataset.rows()) {
    const ContributionSet c = local_contributions(model, r.values, background);
    ScatterPoint p;
    p.row_ref = r.ref;
    if (!is_missing(r.values[feature])) p.value = r.values[feature];
    p.contribution = c.contributions[feature];
    p.probability = logistic(c.predicted_margin);
    out.push_back(std::move(p));
  }
  return out;
}

BoxStats box_stats(std::span<const double> values) {
  std::vector<double> sorted;
  sorted.reserve(values.size());
  for (double v : values) {
    if (!is_missing(v)) sorted.push_back(v);
  }
  if (sorted.empty()) fail(ErrorKind::empty_distribution, "no non-missing values");
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double p) {
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  return {sorted.front(), quantile(0.25), quantile(0.5), quantile(0.75), sorted.back(), sorted.size()};
}

BoxStats feature_distribution(const Dataset& dataset, std::size_t feature) {
  if (feature >= dataset.n_features()) fail(ErrorKind::not_found, "unknown feature index " + std::to_string(feature));
  std::vector<double> values;
  values.reserve(dataset.size());
  for (const auto& r : dataset.rows()) values.push_back(r.values[feature]);
  try {
    return box_stats(values);
  } catch (const Error&) {
    fail(ErrorKind::empty_distribution, "feature '" + dataset.catalog().at(feature).name + "' has no readings");
  }
}

}  // namespace turbex
