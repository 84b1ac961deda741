#pragma once

// Interventional Shapley values for GbtModel predictions against a background
// set, computed exactly tree by tree, plus a subset-enumeration reference.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tacro/error.hpp"
#include "tacro/gbt.hpp"

namespace tacro {

struct Attribution {
  double base_value = 0.0;
  std::vector<double> phi;
  std::vector<std::string> feature_names;

  double total() const { return base_value + std::accumulate(phi.begin(), phi.end(), 0.0); }
};

namespace detail {

/// coalition_weight(s, n) = s!·(n−1−s)!/n!, the Shapley weight of a coalition
/// of size s among n players.
inline double coalition_weight(int s, int n) {
  return std::exp(std::lgamma(s + 1.0) + std::lgamma(n - s) - std::lgamma(n + 1.0));
}

/// Precomputed coalition weights indexed [s][n] for n up to `max_players`.
class CoalitionWeights {
 public:
  explicit CoalitionWeights(int max_players) : n_(max_players + 1), w_(n_ * n_, 0.0) {
    for (int n = 1; n < n_; ++n) {
      for (int s = 0; s < n; ++s) w_[s * n_ + n] = coalition_weight(s, n);
    }
  }
  double operator()(int s, int n) const { return w_[s * n_ + n]; }

 private:
  int n_;
  std::vector<double> w_;
};

/// Walks one tree for a (foreground x, background z) pair. Features where the
/// two disagree split the walk: following x puts the feature in the x-set,
/// following z puts it in the z-set. A leaf reached with |x-set| = s and
/// |x-set| + |z-set| = n credits s-coalition weights to x-set members and
/// debits the rest.
class PairWalker {
 public:
  PairWalker(const RegressionTree& tree, std::span<const double> x, std::span<const double> z,
             const CoalitionWeights& weights, std::span<double> phi)
      : tree_(tree), x_(x), z_(z), weights_(weights), phi_(phi), side_(x.size(), 0) {}

  void run() { visit(0); }

 private:
  enum : std::uint8_t { kNone = 0, kX = 1, kZ = 2 };

  void visit(int id) {
    const auto& node = tree_.nodes[id];
    if (node.is_leaf()) {
      if (path_.empty()) return;
      const int n = static_cast<int>(path_.size());
      for (const int f : path_) {
        if (side_[f] == kX) {
          phi_[f] += weights_(x_count_ - 1, n) * node.weight;
        } else {
          phi_[f] -= weights_(x_count_, n) * node.weight;
        }
      }
      return;
    }
    const int f = node.feature;
    const int x_child = x_[f] < node.threshold ? node.left : node.right;
    const int z_child = z_[f] < node.threshold ? node.left : node.right;
    if (x_child == z_child) return visit(x_child);
    if (side_[f] == kX) return visit(x_child);
    if (side_[f] == kZ) return visit(z_child);

    side_[f] = kX;
    ++x_count_;
    path_.push_back(f);
    visit(x_child);
    side_[f] = kZ;
    --x_count_;
    visit(z_child);
    path_.pop_back();
    side_[f] = kNone;
  }

  const RegressionTree& tree_;
  std::span<const double> x_;
  std::span<const double> z_;
  const CoalitionWeights& weights_;
  std::span<double> phi_;
  std::vector<std::uint8_t> side_;
  std::vector<int> path_;
  int x_count_ = 0;
};

inline int max_tree_depth(const RegressionTree& tree, int id = 0) {
  const auto& n = tree.nodes[id];
  if (n.is_leaf()) return 0;
  return 1 + std::max(max_tree_depth(tree, n.left), max_tree_depth(tree, n.right));
}

inline void check_inputs(const GbtModel& model, std::span<const double> x,
                         const std::vector<std::vector<double>>& background) {
  if (background.empty()) throw Error(ErrorCode::kEmptyData, "background set is empty");
  if (x.size() != model.n_features) throw Error(ErrorCode::kSchema, "explained row does not match the model");
  for (const auto& b : background) {
    if (b.size() != model.n_features) throw Error(ErrorCode::kSchema, "background row does not match the model");
  }
}

}  // namespace detail

/// Exact interventional Shapley values: v(S) is the mean prediction over
/// background rows with features in S taken from `x`. base_value = v(∅).
inline Attribution shap_values(const GbtModel& model, std::span<const double> x,
                               const std::vector<std::vector<double>>& background,
                               std::vector<std::string> feature_names = {}) {
  detail::check_inputs(model, x, background);
  Attribution out;
  out.phi.assign(model.n_features, 0.0);
  out.feature_names = std::move(feature_names);

  int depth = 1;
  for (const auto& t : model.trees) depth = std::max(depth, detail::max_tree_depth(t));
  const detail::CoalitionWeights weights(depth);

  double base_sum = 0.0;
  for (const auto& z : background) {
    base_sum += model.predict(z);
    for (const auto& tree : model.trees) {
      detail::PairWalker(tree, x, z, weights, out.phi).run();
    }
  }
  const double scale = model.params.learning_rate / static_cast<double>(background.size());
  for (auto& p : out.phi) p *= scale;
  out.base_value = base_sum / static_cast<double>(background.size());
  return out;
}

inline constexpr std::size_t kBruteForceMaxFeatures = 12;

/// Reference implementation: Shapley combination over all 2^d coalitions.
inline Attribution brute_force_shap(const GbtModel& model, std::span<const double> x,
                                    const std::vector<std::vector<double>>& background,
                                    std::vector<std::string> feature_names = {}) {
  detail::check_inputs(model, x, background);
  const std::size_t d = model.n_features;
  if (d > kBruteForceMaxFeatures) throw Error(ErrorCode::kConfiguration, "too many features for enumeration");
  const std::size_t subsets = std::size_t{1} << d;
  std::vector<double> value(subsets, 0.0);
  std::vector<double> composite(d);
  for (std::size_t mask = 0; mask < subsets; ++mask) {
    double sum = 0.0;
    for (const auto& z : background) {
      for (std::size_t f = 0; f < d; ++f) composite[f] = (mask >> f) & 1 ? x[f] : z[f];
      sum += model.predict(composite);
    }
    value[mask] = sum / static_cast<double>(background.size());
  }
  Attribution out;
  out.phi.assign(d, 0.0);
  out.feature_names = std::move(feature_names);
  out.base_value = value[0];
  const int n = static_cast<int>(d);
  for (std::size_t f = 0; f < d; ++f) {
    const std::size_t bit = std::size_t{1} << f;
    for (std::size_t mask = 0; mask < subsets; ++mask) {
      if (mask & bit) continue;
      const int s = static_cast<int>(std::popcount(mask));
      out.phi[f] += detail::coalition_weight(s, n) * (value[mask | bit] - value[mask]);
    }
  }
  return out;
}

struct FeatureRank {
  std::size_t index = 0;
  std::string name;
  double mean_abs_phi = 0.0;
  int rank = 0;  // 1-based
};

/// Orders features by mean |phi| (descending), ties by feature index.
inline std::vector<FeatureRank> rank_features(std::span<const Attribution> attributions) {
  if (attributions.empty()) return {};
  const std::size_t d = attributions.front().phi.size();
  std::vector<FeatureRank> ranks(d);
  for (std::size_t f = 0; f < d; ++f) {
    ranks[f].index = f;
    const auto& names = attributions.front().feature_names;
    ranks[f].name = f < names.size() ? names[f] : "f" + std::to_string(f);
  }
  for (const auto& a : attributions) {
    if (a.phi.size() != d) throw Error(ErrorCode::kSchema, "attributions disagree on feature count");
    for (std::size_t f = 0; f < d; ++f) ranks[f].mean_abs_phi += std::abs(a.phi[f]);
  }
  for (auto& r : ranks) r.mean_abs_phi /= static_cast<double>(attributions.size());
  std::stable_sort(ranks.begin(), ranks.end(),
                   [](const FeatureRank& a, const FeatureRank& b) { return a.mean_abs_phi > b.mean_abs_phi; });
  for (std::size_t i = 0; i < d; ++i) ranks[i].rank = static_cast<int>(i + 1);
  return ranks;
}

}  // namespace tacro
