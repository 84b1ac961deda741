#include "tacro/gbt.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace tacro {
namespace {

TEST(SplitGain, Examples) {
  EXPECT_NEAR(split_gain(-4, 2, 4, 2, 1, 0), 16.0 / 3.0, 1e-12);
  EXPECT_NEAR(split_gain(-4, 2, 4, 2, 1, 10), 16.0 / 3.0 - 10.0, 1e-12);
  EXPECT_NEAR(split_gain(-4, 2, 0, 0, 1, 0.5), -0.5, 1e-12);
  try {
    (void)split_gain(-4, 2, 0, 0, 0, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUndefinedSplit);
  }
}

TEST(LeafWeight, Examples) {
  EXPECT_DOUBLE_EQ(leaf_weight(6, 2, 1), -2.0);
  EXPECT_EQ(leaf_weight(0, 3, 1), 0.0);
  EXPECT_LT(std::abs(leaf_weight(6, 2, 1e9)), 1e-8);
  try {
    (void)leaf_weight(1, 0, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUndefinedLeaf);
  }
}

GbtModel hand_built() {
  GbtModel m;
  m.n_features = 1;
  m.base_score = 10;
  m.params.learning_rate = 0.5;
  RegressionTree t;
  t.nodes = {TreeNode{0, 5.0, 1, 2, true, 0.0}, TreeNode{-1, 0, -1, -1, true, -1.0},
             TreeNode{-1, 0, -1, -1, true, 1.0}};
  m.trees.push_back(t);
  return m;
}

TEST(Predict, HandBuiltModel) {
  const auto m = hand_built();
  const std::vector<double> x = {3.0};
  EXPECT_DOUBLE_EQ(m.predict(x), 9.5);
  EXPECT_DOUBLE_EQ(m.predict(std::vector<double>{5.0}), 10.5);
  EXPECT_EQ(m.predict(x), m.predict(x));
  try {
    (void)m.predict(std::vector<double>{1, 2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchema);
  }
}

TEST(Train, ZeroRoundsPredictsBase) {
  const std::vector<std::vector<double>> x = {{1}, {2}, {3}};
  const std::vector<double> y = {1, 2, 6};
  GbtParams p;
  p.n_rounds = 0;
  const auto m = train_gbt(x, y, p);
  EXPECT_TRUE(m.trees.empty());
  for (const auto& row : x) EXPECT_DOUBLE_EQ(m.predict(row), 3.0);
}

TEST(Train, SingleRow) {
  const std::vector<std::vector<double>> x = {{1, 2}};
  const std::vector<double> y = {120};
  const auto m = train_gbt(x, y, GbtParams{});
  EXPECT_EQ(m.base_score, 120.0);
  for (const auto& t : m.trees) {
    ASSERT_EQ(t.nodes.size(), 1u);
    EXPECT_EQ(t.nodes[0].weight, 0.0);
  }
}

TEST(Train, EmptyDataRejected) {
  try {
    (void)train_gbt({}, std::vector<double>{}, GbtParams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyData);
  }
}

TEST(Train, InvalidParamsRejected) {
  GbtParams p;
  p.learning_rate = 0;
  try {
    (void)train_gbt({{1}}, std::vector<double>{1}, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfiguration);
  }
}

struct Toy {
  std::vector<std::vector<double>> x;
  std::vector<double> y;
};

Toy smooth_toy(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2, 2);
  Toy t;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng);
    t.x.push_back({a, b, c});
    t.y.push_back(50 + 10 * a + 5 * b * b - 3 * a * c);
  }
  return t;
}

double train_rrmse(const GbtModel& m, const Toy& t) {
  double se = 0, mean = 0;
  for (std::size_t i = 0; i < t.y.size(); ++i) {
    se += std::pow(m.predict(t.x[i]) - t.y[i], 2);
    mean += t.y[i];
  }
  mean /= static_cast<double>(t.y.size());
  return std::sqrt(se / static_cast<double>(t.y.size())) / mean;
}

TEST(Train, FitsNoiselessDataAlmostExactly) {
  const auto toy = smooth_toy(50, 1);
  GbtParams p;
  p.n_rounds = 500;
  p.max_depth = 6;
  p.learning_rate = 0.3;
  p.lambda = 1;
  EXPECT_LT(train_rrmse(train_gbt(toy.x, toy.y, p), toy), 1e-3);
}

TEST(Train, TrainingLossNonIncreasing) {
  const auto toy = smooth_toy(80, 2);
  GbtParams p;
  p.n_rounds = 60;
  p.max_depth = 3;
  const auto m = train_gbt(toy.x, toy.y, p);
  GbtModel partial = m;
  double last = INFINITY;
  for (std::size_t r = 0; r <= m.trees.size(); ++r) {
    partial.trees.assign(m.trees.begin(), m.trees.begin() + static_cast<long>(r));
    const double loss = train_rrmse(partial, toy);
    EXPECT_LE(loss, last + 1e-12);
    last = loss;
  }
}

TEST(Train, DeterministicBytesAndJsonRoundTrip) {
  const auto toy = smooth_toy(60, 3);
  GbtParams p;
  p.n_rounds = 40;
  p.subsample = 0.7;
  p.colsample = 0.67;
  p.seed = 99;
  const auto a = train_gbt(toy.x, toy.y, p, "toy");
  const auto b = train_gbt(toy.x, toy.y, p, "toy");
  const std::string ja = nlohmann::json(a).dump();
  EXPECT_EQ(ja, nlohmann::json(b).dump());
  const auto back = nlohmann::json::parse(ja).get<GbtModel>();
  EXPECT_EQ(back, a);
  for (const auto& row : toy.x) EXPECT_EQ(back.predict(row), a.predict(row));

  p.seed = 100;
  EXPECT_NE(nlohmann::json(train_gbt(toy.x, toy.y, p, "toy")).dump(), ja);
}

TEST(ModelJson, RejectsBadFormat) {
  auto j = nlohmann::json(hand_built());
  j["format_version"] = 2;
  try {
    (void)j.get<GbtModel>();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchema);
  }
  j = nlohmann::json(hand_built());
  j["trees"][0]["nodes"][0]["feature"] = 4;
  EXPECT_THROW((void)j.get<GbtModel>(), Error);
}

// Depth-1 single-round trees against exhaustive enumeration.
TEST(SplitOracle, RootSplitMatchesEnumeration) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> rows(2, 12), cols(1, 3), level(0, 5);
  std::uniform_real_distribution<double> target(-5, 5);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = rows(rng), d = cols(rng);
    std::vector<std::vector<double>> x(n, std::vector<double>(d));
    std::vector<double> y(n);
    for (auto& row : x) {
      for (auto& v : row) v = level(rng) * 0.5;
    }
    for (auto& v : y) v = target(rng);
    GbtParams p;
    p.n_rounds = 1;
    p.max_depth = 1;
    p.learning_rate = 1.0;
    p.lambda = trial % 2 == 0 ? 1.0 : 0.3;
    p.min_child_weight = trial % 3 == 0 ? 2.0 : 1.0;
    const auto m = train_gbt(x, y, p);
    double base = 0;
    for (const double v : y) base += v;
    base /= n;
    std::vector<double> grad(n);
    for (int i = 0; i < n; ++i) grad[i] = base - y[i];
    const auto want = oracle::enumerate_root_split(x, grad, p.lambda, p.gamma, p.min_child_weight);
    const auto& root = m.trees.at(0).nodes.at(0);
    ASSERT_EQ(!root.is_leaf(), want.found) << "trial " << trial;
    if (!want.found) {
      double g = 0;
      for (const double v : grad) g += v;
      EXPECT_NEAR(root.weight, -g / (n + p.lambda), 1e-12);
      continue;
    }
    EXPECT_EQ(root.feature, want.feature) << "trial " << trial;
    EXPECT_EQ(root.threshold, want.threshold) << "trial " << trial;
    const auto& nodes = m.trees[0].nodes;
    EXPECT_NEAR(nodes[root.left].weight, -want.g_left / (want.h_left + p.lambda), 1e-12);
    EXPECT_NEAR(nodes[root.right].weight, -want.g_right / (want.h_right + p.lambda), 1e-12);
  }
}

TEST(Dummy, PredictsTrainingMean) {
  EXPECT_EQ(dummy_predict(std::vector<double>{100, 200}).mean, 150.0);
  const auto d = dummy_predict(std::vector<double>{120});
  EXPECT_EQ(d.predict(std::vector<double>{1, 2, 3}), 120.0);
  EXPECT_EQ(d.predict(std::vector<double>{}), 120.0);
  EXPECT_THROW((void)dummy_predict(std::vector<double>{}), Error);
}

}  // namespace
}  // namespace tacro
