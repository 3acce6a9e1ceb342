#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace turbex {

/// Missing readings are carried as quiet NaN in every feature vector.
bool is_missing(double value) noexcept;
double missing_value() noexcept;

enum class MissingDirection { left, right };

/// One node of a regression tree. A node is either a split (feature, threshold,
/// children, gain) or a leaf (leaf_value). Rows go left iff value < threshold.
struct TreeNode {
  int node_id = 0;
  std::optional<int> feature_index;
  double threshold = 0.0;
  std::optional<int> left_child;
  std::optional<int> right_child;
  MissingDirection missing_direction = MissingDirection::left;
  std::optional<double> leaf_value;
  std::optional<double> split_gain;

  bool is_leaf() const noexcept { return leaf_value.has_value(); }
};

/// A tree stores its nodes in a dense vector where nodes[i].node_id == i and
/// the root is node 0. load_model renumbers arbitrary ids into this layout.
struct Tree {
  std::vector<TreeNode> nodes;

  const TreeNode& root() const { return nodes.front(); }
  const TreeNode& node(int id) const { return nodes[static_cast<std::size_t>(id)]; }
  /// Child reached by `value` from split node `n`, honouring the missing rule.
  int next(const TreeNode& n, double value) const noexcept;
};

enum class Objective { binary_logistic };

struct TreeEnsemble {
  std::vector<Tree> trees;
  double base_score = 0.0;  // margin (log-odds) scale
  int n_features = 0;
  Objective objective = Objective::binary_logistic;
};

struct TrainParams {
  int n_trees = 50;
  int max_depth = 3;
  double learning_rate = 0.3;
  double l2_lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1.0;
  std::uint64_t seed = 0;

  /// Throws ErrorKind::invalid_argument when a bound is violated.
  void validate() const;
};

/// Dense training matrix: rows x n_features plus binary labels.
struct TrainingData {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
};

TreeEnsemble load_model(const nlohmann::json& document);
TreeEnsemble load_model_file(const std::string& path);
nlohmann::ordered_json save_model(const TreeEnsemble& model);
/// Canonical textual form; equal models serialize to identical bytes.
std::string dump_model(const TreeEnsemble& model);

double predict_margin(const TreeEnsemble& model, std::span<const double> row);
double predict_proba(const TreeEnsemble& model, std::span<const double> row);
double logistic(double margin) noexcept;

/// Sum of recorded split gains per feature across the ensemble.
std::vector<double> gain_totals(const TreeEnsemble& model);

/// Features that appear in at least one split, ascending.
std::vector<int> used_features(const TreeEnsemble& model);

/// Called with the mean training log-loss after each round; round 0 is the
/// base score alone.
using RoundCallback = std::function<void(int round, double loss)>;

TreeEnsemble train_reference(const TrainingData& data, const TrainParams& params,
                             const RoundCallback& on_round = {});

double mean_log_loss(const TreeEnsemble& model, const TrainingData& data);

}  // namespace turbex
