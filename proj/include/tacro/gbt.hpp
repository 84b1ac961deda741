#pragma once

// Second-order gradient-boosted regression trees (squared error) with exact
// greedy split search, plus the mean-predicting baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tacro/error.hpp"
#include "tacro/random.hpp"

namespace tacro {

struct GbtParams {
  int n_rounds = 300;
  double learning_rate = 0.1;
  int max_depth = 3;
  double min_child_weight = 1.0;
  double lambda = 1.0;
  double gamma = 0.0;
  double subsample = 1.0;
  double colsample = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    const auto fail = [](const char* what) { throw Error(ErrorCode::kConfiguration, what); };
    if (n_rounds < 0) fail("n_rounds must be >= 0");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) fail("learning_rate must lie in (0, 1]");
    if (max_depth < 1) fail("max_depth must be >= 1");
    if (min_child_weight < 0 || lambda < 0 || gamma < 0) fail("min_child_weight, lambda, gamma must be >= 0");
    if (!(subsample > 0.0 && subsample <= 1.0)) fail("subsample must lie in (0, 1]");
    if (!(colsample > 0.0 && colsample <= 1.0)) fail("colsample must lie in (0, 1]");
  }

  friend bool operator==(const GbtParams&, const GbtParams&) = default;
};

inline void to_json(nlohmann::json& j, const GbtParams& p) {
  j = nlohmann::json{{"n_rounds", p.n_rounds},   {"learning_rate", p.learning_rate},
                     {"max_depth", p.max_depth}, {"min_child_weight", p.min_child_weight},
                     {"lambda", p.lambda},       {"gamma", p.gamma},
                     {"subsample", p.subsample}, {"colsample", p.colsample},
                     {"seed", p.seed}};
}

inline void from_json(const nlohmann::json& j, GbtParams& p) {
  const GbtParams defaults;
  p.n_rounds = j.value("n_rounds", defaults.n_rounds);
  p.learning_rate = j.value("learning_rate", defaults.learning_rate);
  p.max_depth = j.value("max_depth", defaults.max_depth);
  p.min_child_weight = j.value("min_child_weight", defaults.min_child_weight);
  p.lambda = j.value("lambda", defaults.lambda);
  p.gamma = j.value("gamma", defaults.gamma);
  p.subsample = j.value("subsample", defaults.subsample);
  p.colsample = j.value("colsample", defaults.colsample);
  p.seed = j.value("seed", defaults.seed);
}

/// gain = ½·[G_L²/(H_L+λ) + G_R²/(H_R+λ) − (G_L+G_R)²/(H_L+H_R+λ)] − γ
inline double split_gain(double g_left, double h_left, double g_right, double h_right, double lambda,
                         double gamma) {
  if (lambda == 0.0 && (h_left == 0.0 || h_right == 0.0)) {
    throw Error(ErrorCode::kUndefinedSplit, "empty hessian with lambda = 0");
  }
  const double g = g_left + g_right;
  const double h = h_left + h_right;
  return 0.5 * (g_left * g_left / (h_left + lambda) + g_right * g_right / (h_right + lambda) -
                g * g / (h + lambda)) -
         gamma;
}

inline double leaf_weight(double g, double h, double lambda) {
  if (h + lambda == 0.0) throw Error(ErrorCode::kUndefinedLeaf, "H + lambda = 0");
  return -g / (h + lambda);
}

/// Split selection order: a later candidate (higher feature index or higher
/// threshold) must beat the incumbent by more than round-off to replace it.
inline bool gain_improves(double candidate, double incumbent) {
  return candidate > incumbent + 1e-12 * std::max(1.0, std::abs(incumbent));
}

/// Threshold between two adjacent distinct sorted values; rows with
/// x < threshold go left.
inline double midpoint_threshold(double lower, double upper) {
  const double mid = lower + (upper - lower) / 2.0;
  return mid > lower ? mid : upper;
}

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  bool default_left = true;  // kept for format stability; inputs are always complete
  double weight = 0.0;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  int leaf_index(std::span<const double> x) const {
    int i = 0;
    while (!nodes[i].is_leaf()) {
      const auto& n = nodes[i];
      i = x[n.feature] < n.threshold ? n.left : n.right;
    }
    return i;
  }
  double predict(std::span<const double> x) const { return nodes[leaf_index(x)].weight; }

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

inline constexpr int kModelFormatVersion = 1;

struct GbtModel {
  std::string schema_id;
  std::size_t n_features = 0;
  double base_score = 0.0;
  GbtParams params;
  std::vector<RegressionTree> trees;

  /// base_score + η·Σ leaf weights.
  double predict(std::span<const double> x) const {
    if (x.size() != n_features) {
      throw Error(ErrorCode::kSchema, "expected " + std::to_string(n_features) + " features, got " +
                                          std::to_string(x.size()));
    }
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(x);
    return base_score + params.learning_rate * sum;
  }

  friend bool operator==(const GbtModel&, const GbtModel&) = default;
};

inline void to_json(nlohmann::json& j, const GbtModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) {
        nodes.push_back({{"leaf", n.weight}});
      } else {
        nodes.push_back({{"feature", n.feature},
                         {"threshold", n.threshold},
                         {"left", n.left},
                         {"right", n.right},
                         {"default_left", n.default_left}});
      }
    }
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  j = nlohmann::json{{"format_version", kModelFormatVersion},
                     {"schema_id", m.schema_id},
                     {"n_features", m.n_features},
                     {"base_score", m.base_score},
                     {"params", m.params},
                     {"trees", std::move(trees)}};
}

inline void from_json(const nlohmann::json& j, GbtModel& m) {
  if (j.at("format_version").get<int>() != kModelFormatVersion) {
    throw Error(ErrorCode::kSchema, "unsupported model format_version");
  }
  m.schema_id = j.at("schema_id").get<std::string>();
  m.n_features = j.at("n_features").get<std::size_t>();
  m.base_score = j.at("base_score").get<double>();
  m.params = j.at("params").get<GbtParams>();
  m.trees.clear();
  for (const auto& t : j.at("trees")) {
    RegressionTree tree;
    for (const auto& n : t.at("nodes")) {
      TreeNode node;
      if (n.contains("leaf")) {
        node.weight = n.at("leaf").get<double>();
      } else {
        node.feature = n.at("feature").get<int>();
        node.threshold = n.at("threshold").get<double>();
        node.left = n.at("left").get<int>();
        node.right = n.at("right").get<int>();
        node.default_left = n.value("default_left", true);
        if (node.feature < 0 || static_cast<std::size_t>(node.feature) >= m.n_features) {
          throw Error(ErrorCode::kSchema, "split feature out of range");
        }
      }
      tree.nodes.push_back(node);
    }
    const auto count = static_cast<int>(tree.nodes.size());
    for (const auto& node : tree.nodes) {
      if (!node.is_leaf() && (node.left <= 0 || node.right <= 0 || node.left >= count || node.right >= count)) {
        throw Error(ErrorCode::kSchema, "child index out of range");
      }
    }
    if (tree.nodes.empty()) throw Error(ErrorCode::kSchema, "empty tree");
    m.trees.push_back(std::move(tree));
  }
}

namespace detail {

struct NodeStats {
  double g = 0.0;
  double h = 0.0;
};

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  double g_left = 0.0, h_left = 0.0;
};

/// Level-wise exact greedy growth over presorted feature columns.
class TreeGrower {
 public:
  TreeGrower(const std::vector<std::vector<double>>& x, const std::vector<std::vector<std::uint32_t>>& sorted,
             const GbtParams& params)
      : x_(x), sorted_(sorted), params_(params) {}

  RegressionTree grow(std::span<const double> grad, std::span<const double> hess,
                      std::span<const std::uint8_t> in_sample, std::span<const int> features) {
    const std::size_t n = x_.size();
    RegressionTree tree;
    node_of_.assign(n, -1);
    NodeStats root;
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_sample[i]) continue;
      node_of_[i] = 0;
      root.g += grad[i];
      root.h += hess[i];
    }
    tree.nodes.push_back({});
    std::vector<NodeStats> stats = {root};
    std::vector<int> frontier = {0};

    for (int depth = 0; depth < params_.max_depth && !frontier.empty(); ++depth) {
      const auto best = find_splits(tree, stats, frontier, grad, hess, features);
      std::vector<int> next;
      std::vector<int> remap(tree.nodes.size(), -1);
      for (std::size_t f = 0; f < frontier.size(); ++f) {
        const int id = frontier[f];
        const auto& s = best[f];
        if (s.feature < 0) continue;
        const int left = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        tree.nodes.push_back({});
        stats.push_back({s.g_left, s.h_left});
        stats.push_back({stats[id].g - s.g_left, stats[id].h - s.h_left});
        auto& node = tree.nodes[id];
        node.feature = s.feature;
        node.threshold = s.threshold;
        node.left = left;
        node.right = left + 1;
        next.push_back(left);
        next.push_back(left + 1);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const int id = node_of_[i];
        if (id < 0 || tree.nodes[id].is_leaf()) continue;
        const auto& node = tree.nodes[id];
        node_of_[i] = x_[i][node.feature] < node.threshold ? node.left : node.right;
      }
      frontier = std::move(next);
    }
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
      if (tree.nodes[id].is_leaf()) tree.nodes[id].weight = leaf_weight(stats[id].g, stats[id].h, params_.lambda);
    }
    return tree;
  }

 private:
  std::vector<SplitCandidate> find_splits(const RegressionTree& tree, const std::vector<NodeStats>& stats,
                                          const std::vector<int>& frontier, std::span<const double> grad,
                                          std::span<const double> hess, std::span<const int> features) {
    const std::size_t node_count = tree.nodes.size();
    std::vector<int> slot(node_count, -1);
    for (std::size_t f = 0; f < frontier.size(); ++f) slot[frontier[f]] = static_cast<int>(f);
    std::vector<SplitCandidate> best(frontier.size());
    std::vector<double> g_left(frontier.size()), h_left(frontier.size()), last(frontier.size());
    std::vector<std::uint8_t> seen(frontier.size());

    for (const int feature : features) {
      std::fill(g_left.begin(), g_left.end(), 0.0);
      std::fill(h_left.begin(), h_left.end(), 0.0);
      std::fill(seen.begin(), seen.end(), 0);
      const auto& column = sorted_[feature];
      for (const auto row : column) {
        const int id = node_of_[row];
        if (id < 0) continue;
        const int k = slot[id];
        if (k < 0) continue;
        const double value = x_[row][feature];
        if (seen[k] && value > last[k]) {
          const double gl = g_left[k], hl = h_left[k];
          const double gr = stats[id].g - gl, hr = stats[id].h - hl;
          if (hl >= params_.min_child_weight && hr >= params_.min_child_weight) {
            const double gain = split_gain(gl, hl, gr, hr, params_.lambda, params_.gamma);
            if (gain > 0.0 && gain_improves(gain, best[k].gain)) {
              best[k] = {gain, feature, midpoint_threshold(last[k], value), gl, hl};
            }
          }
        }
        g_left[k] += grad[row];
        h_left[k] += hess[row];
        last[k] = value;
        seen[k] = 1;
      }
    }
    return best;
  }

  const std::vector<std::vector<double>>& x_;
  const std::vector<std::vector<std::uint32_t>>& sorted_;
  const GbtParams& params_;
  std::vector<int> node_of_;
};

inline std::size_t sample_count(double fraction, std::size_t n) {
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1, n);
}

}  // namespace detail

/// Fits `params.n_rounds` trees to squared-error gradients (g = pred − y,
/// h = 1). Row and column subsets are drawn per round from `params.seed`.
inline GbtModel train_gbt(const std::vector<std::vector<double>>& features, std::span<const double> targets,
                          const GbtParams& params, std::string schema_id = {}) {
  params.validate();
  const std::size_t n = features.size();
  if (n == 0 || targets.size() != n) throw Error(ErrorCode::kEmptyData, "training data is empty or misaligned");
  const std::size_t d = features.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != d) throw Error(ErrorCode::kSchema, "ragged feature matrix");
    for (const double v : features[i]) {
      if (!std::isfinite(v)) throw Error(ErrorCode::kSchema, "non-finite feature value");
    }
    if (!std::isfinite(targets[i])) throw Error(ErrorCode::kSchema, "non-finite target");
  }

  GbtModel model;
  model.schema_id = std::move(schema_id);
  model.n_features = d;
  model.params = params;
  model.base_score = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(n);
  if (params.n_rounds == 0 || d == 0) return model;

  std::vector<std::vector<std::uint32_t>> sorted(d);
  for (std::size_t f = 0; f < d; ++f) {
    auto& col = sorted[f];
    col.resize(n);
    std::iota(col.begin(), col.end(), 0u);
    std::stable_sort(col.begin(), col.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return features[a][f] < features[b][f]; });
  }

  Rng rng(derive_seed(params.seed, "gbt"));
  std::vector<double> pred(n, model.base_score), grad(n), hess(n, 1.0);
  std::vector<std::uint8_t> in_sample(n, 1);
  std::vector<std::uint32_t> rows(n);
  std::vector<int> all_features(d);
  std::iota(all_features.begin(), all_features.end(), 0);
  std::vector<int> cols = all_features;
  const std::size_t row_count = detail::sample_count(params.subsample, n);
  const std::size_t col_count = detail::sample_count(params.colsample, d);

  detail::TreeGrower grower(features, sorted, params);
  model.trees.reserve(static_cast<std::size_t>(params.n_rounds));
  for (int round = 0; round < params.n_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = pred[i] - targets[i];
    if (row_count < n) {
      std::iota(rows.begin(), rows.end(), 0u);
      std::shuffle(rows.begin(), rows.end(), rng);
      std::fill(in_sample.begin(), in_sample.end(), 0);
      for (std::size_t i = 0; i < row_count; ++i) in_sample[rows[i]] = 1;
    }
    if (col_count < d) {
      cols = all_features;
      std::shuffle(cols.begin(), cols.end(), rng);
      cols.resize(col_count);
      std::sort(cols.begin(), cols.end());
    }
    auto tree = grower.grow(grad, hess, in_sample, cols);
    for (std::size_t i = 0; i < n; ++i) pred[i] += params.learning_rate * tree.predict(features[i]);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

/// Always predicts the training mean.
struct DummyRegressor {
  double mean = 0.0;
  double predict(std::span<const double>) const { return mean; }
};

inline DummyRegressor dummy_predict(std::span<const double> training_targets) {
  if (training_targets.empty()) throw Error(ErrorCode::kEmptyData, "no training targets");
  return {std::accumulate(training_targets.begin(), training_targets.end(), 0.0) /
          static_cast<double>(training_targets.size())};
}

}  // namespace tacro
