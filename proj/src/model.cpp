#include "turbex/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "turbex/error.hpp"

namespace turbex {

using nlohmann::json;

bool is_missing(double value) noexcept { return std::isnan(value); }

double missing_value() noexcept { return std::numeric_limits<double>::quiet_NaN(); }

int Tree::next(const TreeNode& n, double value) const noexcept {
  if (is_missing(value)) {
    return n.missing_direction == MissingDirection::left ? *n.left_child : *n.right_child;
  }
  return value < n.threshold ? *n.left_child : *n.right_child;
}

void TrainParams::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::invalid_argument, "train params: " + what); };
  if (n_trees < 1) bad("n_trees must be >= 1");
  if (max_depth < 1) bad("max_depth must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) bad("learning_rate must lie in (0, 1]");
  if (!(l2_lambda >= 0.0)) bad("l2_lambda must be >= 0");
  if (!(gamma >= 0.0)) bad("gamma must be >= 0");
  if (!(min_child_weight >= 0.0)) bad("min_child_weight must be >= 0");
}

// ---------------------------------------------------------------------------
// Loading and validation

namespace {

std::string where(std::size_t tree, const std::string& node) {
  return "tree " + std::to_string(tree) + ", node " + node;
}

double finite_number(const json& v, const std::string& field, const std::string& loc) {
  if (!v.is_number()) fail(ErrorKind::parse, loc + ": field '" + field + "' must be a number");
  double d = v.get<double>();
  if (!std::isfinite(d)) fail(ErrorKind::parse, loc + ": field '" + field + "' must be finite");
  return d;
}

int integer_field(const json& v, const std::string& field, const std::string& loc) {
  if (!v.is_number_integer()) fail(ErrorKind::parse, loc + ": field '" + field + "' must be an integer");
  return v.get<int>();
}

struct RawNode {
  TreeNode node;
  std::string label;
};

Tree load_tree(const json& doc, std::size_t tree_index, int n_features) {
  const std::string tloc = "tree " + std::to_string(tree_index);
  if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array()) {
    fail(ErrorKind::parse, tloc + ": expected an object with a 'nodes' array");
  }
  const auto& nodes = doc["nodes"];
  if (nodes.empty()) fail(ErrorKind::structure, tloc + ": tree has no nodes");

  std::map<int, TreeNode> by_id;
  std::size_t position = 0;
  for (const auto& jn : nodes) {
    std::string loc = tloc + ", node #" + std::to_string(position++);
    if (!jn.is_object()) fail(ErrorKind::parse, loc + ": node must be an object");
    if (!jn.contains("id")) fail(ErrorKind::parse, loc + ": missing 'id'");
    TreeNode n;
    n.node_id = integer_field(jn["id"], "id", loc);
    loc = where(tree_index, std::to_string(n.node_id));
    if (n.node_id < 0) fail(ErrorKind::parse, loc + ": node id must be >= 0");

    for (const auto& [key, _] : jn.items()) {
      static const std::set<std::string> known = {"id", "feature", "threshold", "left", "right",
                                                  "missing", "gain", "leaf"};
      if (!known.count(key)) fail(ErrorKind::parse, loc + ": unknown field '" + key + "'");
    }

    const bool has_leaf = jn.contains("leaf");
    const bool has_split = jn.contains("feature") || jn.contains("threshold") || jn.contains("left") ||
                           jn.contains("right") || jn.contains("gain") || jn.contains("missing");
    if (has_leaf && has_split) {
      fail(ErrorKind::structure, loc + ": node carries both a leaf value and split fields");
    }
    if (has_leaf) {
      n.leaf_value = finite_number(jn["leaf"], "leaf", loc);
    } else {
      for (const char* required : {"feature", "threshold", "left", "right"}) {
        if (!jn.contains(required)) {
          fail(ErrorKind::parse, loc + ": split node missing '" + std::string(required) + "'");
        }
      }
      n.feature_index = integer_field(jn["feature"], "feature", loc);
      if (*n.feature_index < 0 || *n.feature_index >= n_features) {
        fail(ErrorKind::structure, loc + ": feature index " + std::to_string(*n.feature_index) +
                                       " outside [0, " + std::to_string(n_features) + ")");
      }
      n.threshold = finite_number(jn["threshold"], "threshold", loc);
      n.left_child = integer_field(jn["left"], "left", loc);
      n.right_child = integer_field(jn["right"], "right", loc);
      if (jn.contains("missing")) {
        const auto& m = jn["missing"];
        if (m == "left") {
          n.missing_direction = MissingDirection::left;
        } else if (m == "right") {
          n.missing_direction = MissingDirection::right;
        } else {
          fail(ErrorKind::parse, loc + ": 'missing' must be \"left\" or \"right\"");
        }
      }
      n.split_gain = jn.contains("gain") ? finite_number(jn["gain"], "gain", loc) : 0.0;
      if (*n.split_gain < 0.0) fail(ErrorKind::structure, loc + ": split gain must be >= 0");
    }
    if (!by_id.emplace(n.node_id, n).second) {
      fail(ErrorKind::structure, loc + ": duplicate node id");
    }
  }

  if (!by_id.count(0)) fail(ErrorKind::structure, tloc + ": no root node with id 0");

  // Parent counting catches shared children and cycles through the root;
  // the reachability walk below catches detached cycles.
  std::map<int, int> parents;
  for (const auto& [id, n] : by_id) {
    if (n.is_leaf()) continue;
    for (int child : {*n.left_child, *n.right_child}) {
      if (!by_id.count(child)) {
        fail(ErrorKind::structure, where(tree_index, std::to_string(id)) + ": child id " +
                                       std::to_string(child) + " does not exist");
      }
      if (child == 0) fail(ErrorKind::structure, where(tree_index, std::to_string(id)) + ": root used as a child");
      if (++parents[child] > 1) {
        fail(ErrorKind::structure, where(tree_index, std::to_string(child)) + ": node has more than one parent");
      }
    }
  }

  // Renumber in depth-first preorder so that node ids are dense vector indices.
  Tree tree;
  std::map<int, int> remap;
  std::vector<int> stack{0};
  std::vector<int> order;
  while (!stack.empty()) {
    int id = stack.back();
    stack.pop_back();
    remap[id] = static_cast<int>(order.size());
    order.push_back(id);
    const auto& n = by_id.at(id);
    if (!n.is_leaf()) {
      stack.push_back(*n.right_child);
      stack.push_back(*n.left_child);
    }
  }
  if (order.size() != by_id.size()) {
    for (const auto& [id, _] : by_id) {
      if (!remap.count(id)) {
        fail(ErrorKind::structure, where(tree_index, std::to_string(id)) + ": node is not reachable from the root");
      }
    }
  }
  tree.nodes.reserve(order.size());
  for (int id : order) {
    TreeNode n = by_id.at(id);
    n.node_id = remap.at(id);
    if (!n.is_leaf()) {
      n.left_child = remap.at(*n.left_child);
      n.right_child = remap.at(*n.right_child);
    }
    tree.nodes.push_back(n);
  }
  return tree;
}

}  // namespace

TreeEnsemble load_model(const json& document) {
  if (!document.is_object()) fail(ErrorKind::parse, "model document must be a JSON object");
  for (const auto& [key, _] : document.items()) {
    static const std::set<std::string> known = {"version", "objective", "base_score", "n_features", "trees"};
    if (!known.count(key)) fail(ErrorKind::parse, "model: unknown top-level field '" + key + "'");
  }
  for (const char* required : {"version", "objective", "base_score", "n_features", "trees"}) {
    if (!document.contains(required)) fail(ErrorKind::parse, "model: missing field '" + std::string(required) + "'");
  }
  if (!document["version"].is_number_integer() || document["version"].get<int>() != 1) {
    fail(ErrorKind::parse, "model: unsupported version (expected 1)");
  }
  if (document["objective"] != "binary_logistic") {
    fail(ErrorKind::parse, "model: unsupported objective (expected \"binary_logistic\")");
  }
  TreeEnsemble model;
  model.base_score = finite_number(document["base_score"], "base_score", "model");
  model.n_features = integer_field(document["n_features"], "n_features", "model");
  if (model.n_features < 1) fail(ErrorKind::parse, "model: n_features must be >= 1");
  if (!document["trees"].is_array()) fail(ErrorKind::parse, "model: 'trees' must be an array");
  std::size_t index = 0;
  for (const auto& t : document["trees"]) model.trees.push_back(load_tree(t, index++, model.n_features));
  return model;
}

TreeEnsemble load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open model file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::parse, "model file '" + path + "': " + e.what());
  }
  return load_model(doc);
}

nlohmann::ordered_json save_model(const TreeEnsemble& model) {
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  doc["objective"] = "binary_logistic";
  doc["base_score"] = model.base_score;
  doc["n_features"] = model.n_features;
  doc["trees"] = nlohmann::ordered_json::array();
  for (const auto& tree : model.trees) {
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (const auto& n : tree.nodes) {
      nlohmann::ordered_json jn;
      jn["id"] = n.node_id;
      if (n.is_leaf()) {
        jn["leaf"] = *n.leaf_value;
      } else {
        jn["feature"] = *n.feature_index;
        jn["threshold"] = n.threshold;
        jn["left"] = *n.left_child;
        jn["right"] = *n.right_child;
        jn["missing"] = n.missing_direction == MissingDirection::left ? "left" : "right";
        jn["gain"] = n.split_gain.value_or(0.0);
      }
      nodes.push_back(std::move(jn));
    }
    doc["trees"].push_back({{"nodes", std::move(nodes)}});
  }
  return doc;
}

std::string dump_model(const TreeEnsemble& model) { return save_model(model).dump(1) + "\n"; }

// ---------------------------------------------------------------------------
// Inference

namespace {

double route_leaf(const Tree& tree, std::span<const double> row) {
  const TreeNode* n = &tree.root();
  while (!n->is_leaf()) n = &tree.node(tree.next(*n, row[static_cast<std::size_t>(*n->feature_index)]));
  return *n->leaf_value;
}

}  // namespace

double predict_margin(const TreeEnsemble& model, std::span<const double> row) {
  if (row.size() != static_cast<std::size_t>(model.n_features)) {
    fail(ErrorKind::dimension, "row has " + std::to_string(row.size()) + " values, model expects " +
                                   std::to_string(model.n_features));
  }
  double margin = model.base_score;
  for (const auto& tree : model.trees) margin += route_leaf(tree, row);
  return margin;
}

double logistic(double margin) noexcept { return 1.0 / (1.0 + std::exp(-margin)); }

double predict_proba(const TreeEnsemble& model, std::span<const double> row) {
  return logistic(predict_margin(model, row));
}

std::vector<double> gain_totals(const TreeEnsemble& model) {
  std::vector<double> totals(static_cast<std::size_t>(model.n_features), 0.0);
  for (const auto& tree : model.trees) {
    for (const auto& n : tree.nodes) {
      if (!n.is_leaf()) totals[static_cast<std::size_t>(*n.feature_index)] += n.split_gain.value_or(0.0);
    }
  }
  return totals;
}

std::vector<int> used_features(const TreeEnsemble& model) {
  std::set<int> used;
  for (const auto& tree : model.trees) {
    for (const auto& n : tree.nodes) {
      if (!n.is_leaf()) used.insert(*n.feature_index);
    }
  }
  return {used.begin(), used.end()};
}

// ---------------------------------------------------------------------------
// Reference trainer: second-order boosting on logistic loss, exact greedy splits.

namespace {

double row_log_loss(double margin, int label) {
  // log(1 + e^m) - y*m, evaluated without overflow
  return std::log1p(std::exp(-std::abs(margin))) + std::max(margin, 0.0) - label * margin;
}

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  MissingDirection missing = MissingDirection::left;
};

class TreeGrower {
 public:
  TreeGrower(const TrainingData& data, const TrainParams& params, const std::vector<std::vector<int>>& sorted,
             const std::vector<double>& grad, const std::vector<double>& hess)
      : data_(data), params_(params), sorted_(sorted), grad_(grad), hess_(hess),
        n_features_(static_cast<int>(data.rows.front().size())) {}

  Tree grow() {
    std::vector<int> all(data_.rows.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    in_node_.assign(data_.rows.size(), 0);
    tree_.nodes.clear();
    build(all, 0);
    return std::move(tree_);
  }

 private:
  double score(double g, double h) const { return g * g / (h + params_.l2_lambda); }

  double leaf_weight(double g, double h) const {
    const double denom = h + params_.l2_lambda;
    return denom > 0.0 ? -g / denom * params_.learning_rate : 0.0;
  }

  SplitCandidate best_split(const std::vector<int>& rows, double g_total, double h_total) {
    for (int r : rows) in_node_[static_cast<std::size_t>(r)] = 1;
    SplitCandidate best;
    const double parent = score(g_total, h_total);
    for (int f = 0; f < n_features_; ++f) {
      double g_miss = 0.0, h_miss = 0.0;
      for (int r : rows) {
        if (is_missing(data_.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(f)])) {
          g_miss += grad_[static_cast<std::size_t>(r)];
          h_miss += hess_[static_cast<std::size_t>(r)];
        }
      }
      double gl = 0.0, hl = 0.0;
      bool have_prev = false;
      double prev = 0.0;
      for (int r : sorted_[static_cast<std::size_t>(f)]) {
        if (!in_node_[static_cast<std::size_t>(r)]) continue;
        const double v = data_.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(f)];
        if (have_prev && v > prev) {
          // candidate: value < v goes left
          for (MissingDirection dir : {MissingDirection::left, MissingDirection::right}) {
            const double gL = dir == MissingDirection::left ? gl + g_miss : gl;
            const double hL = dir == MissingDirection::left ? hl + h_miss : hl;
            const double gR = g_total - gL;
            const double hR = h_total - hL;
            if (hL < params_.min_child_weight || hR < params_.min_child_weight) continue;
            const double gain = 0.5 * (score(gL, hL) + score(gR, hR) - parent) - params_.gamma;
            if (gain > best.gain) best = {gain, f, v, dir};
          }
        }
        gl += grad_[static_cast<std::size_t>(r)];
        hl += hess_[static_cast<std::size_t>(r)];
        prev = v;
        have_prev = true;
      }
    }
    for (int r : rows) in_node_[static_cast<std::size_t>(r)] = 0;
    return best;
  }

  int build(const std::vector<int>& rows, int depth) {
    double g = 0.0, h = 0.0;
    for (int r : rows) {
      g += grad_[static_cast<std::size_t>(r)];
      h += hess_[static_cast<std::size_t>(r)];
    }
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.nodes.back().node_id = id;

    SplitCandidate split;
    if (depth < params_.max_depth && rows.size() >= 2) split = best_split(rows, g, h);
    if (split.feature < 0) {
      tree_.nodes[static_cast<std::size_t>(id)].leaf_value = leaf_weight(g, h);
      return id;
    }

    std::vector<int> left, right;
    for (int r : rows) {
      const double v = data_.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(split.feature)];
      const bool go_left = is_missing(v) ? split.missing == MissingDirection::left : v < split.threshold;
      (go_left ? left : right).push_back(r);
    }
    const int l = build(left, depth + 1);
    const int rgt = build(right, depth + 1);
    auto& n = tree_.nodes[static_cast<std::size_t>(id)];
    n.feature_index = split.feature;
    n.threshold = split.threshold;
    n.missing_direction = split.missing;
    n.split_gain = split.gain;
    n.left_child = l;
    n.right_child = rgt;
    return id;
  }

  const TrainingData& data_;
  const TrainParams& params_;
  const std::vector<std::vector<int>>& sorted_;
  const std::vector<double>& grad_;
  const std::vector<double>& hess_;
  int n_features_;
  std::vector<char> in_node_;
  Tree tree_;
};

}  // namespace

double mean_log_loss(const TreeEnsemble& model, const TrainingData& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows.size(); ++i) total += row_log_loss(predict_margin(model, data.rows[i]), data.labels[i]);
  return data.rows.empty() ? 0.0 : total / static_cast<double>(data.rows.size());
}

TreeEnsemble train_reference(const TrainingData& data, const TrainParams& params, const RoundCallback& on_round) {
  params.validate();
  if (data.rows.empty()) fail(ErrorKind::training, "training data is empty");
  if (data.rows.size() != data.labels.size()) fail(ErrorKind::training, "rows and labels differ in length");
  if (data.rows.size() < 2) fail(ErrorKind::training, "training needs at least 2 rows");
  const std::size_t n_features = data.rows.front().size();
  if (n_features == 0) fail(ErrorKind::training, "training rows have no features");
  std::size_t positives = 0;
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    if (data.rows[i].size() != n_features) fail(ErrorKind::dimension, "training row " + std::to_string(i) + " has the wrong width");
    if (data.labels[i] != 0 && data.labels[i] != 1) fail(ErrorKind::training, "labels must be 0 or 1");
    positives += static_cast<std::size_t>(data.labels[i]);
  }
  if (positives == 0 || positives == data.rows.size()) fail(ErrorKind::training, "training labels contain a single class");

  TreeEnsemble model;
  model.n_features = static_cast<int>(n_features);
  const double p = static_cast<double>(positives) / static_cast<double>(data.rows.size());
  model.base_score = std::log(p / (1.0 - p));

  // Stable sort keeps equal values in row order, which fixes the scan order.
  std::vector<std::vector<int>> sorted(n_features);
  for (std::size_t f = 0; f < n_features; ++f) {
    for (std::size_t r = 0; r < data.rows.size(); ++r) {
      if (!is_missing(data.rows[r][f])) sorted[f].push_back(static_cast<int>(r));
    }
    std::stable_sort(sorted[f].begin(), sorted[f].end(),
                     [&](int a, int b) { return data.rows[static_cast<std::size_t>(a)][f] < data.rows[static_cast<std::size_t>(b)][f]; });
  }

  std::vector<double> margin(data.rows.size(), model.base_score);
  std::vector<double> grad(data.rows.size()), hess(data.rows.size());
  auto report = [&](int round) {
    if (!on_round) return;
    double total = 0.0;
    for (std::size_t i = 0; i < margin.size(); ++i) total += row_log_loss(margin[i], data.labels[i]);
    on_round(round, total / static_cast<double>(margin.size()));
  };
  report(0);

  for (int round = 1; round <= params.n_trees; ++round) {
    for (std::size_t i = 0; i < margin.size(); ++i) {
      const double s = logistic(margin[i]);
      grad[i] = s - data.labels[i];
      hess[i] = s * (1.0 - s);
    }
    TreeGrower grower(data, params, sorted, grad, hess);
    model.trees.push_back(grower.grow());
    const Tree& tree = model.trees.back();
    for (std::size_t i = 0; i < margin.size(); ++i) margin[i] += route_leaf(tree, data.rows[i]);
    report(round);
  }
  return model;
}

}  // namespace turbex
