#pragma once

// Baseline classifiers: L2-regularized logistic regression (full-batch
// gradient descent), CART with Gini impurity, and a bagged random forest.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace fairedu {

using Index = Eigen::Index;

enum class ModelFamily { LogisticRegression, DecisionTree, RandomForest };

std::string to_string(ModelFamily family);
ModelFamily model_family_from_string(const std::string& s);

struct LogisticParams {
  double l2 = 1e-4;
  double learning_rate = 0.1;  // initial step of each backtracking search
  int max_iterations = 2000;
  double gradient_tolerance = 1e-6;
};

struct TreeParams {
  std::optional<int> max_depth = 10;  // nullopt: unlimited
  Index min_leaf = 5;
  Index max_features = 0;  // features examined per split, 0: all
};

struct ForestParams {
  int trees = 100;
  // Forest members grow to purity; max_features 0 means ceil(sqrt(d)).
  TreeParams tree{std::nullopt, 1, 0};
};

struct ModelSpec {
  ModelFamily family = ModelFamily::LogisticRegression;
  LogisticParams logistic;
  TreeParams tree;
  ForestParams forest;
  std::uint64_t seed = 0;

  /// Throws ConfigError when a hyperparameter is out of range.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

struct LogisticModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
};

struct TreeNode {
  Index feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // rows with x[feature] <= threshold go left
  Index left = -1;
  Index right = -1;
  double positive_fraction = 0.0;
  Index samples = 0;

  bool is_leaf() const { return feature < 0; }
};

struct DecisionTreeModel {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  /// Positive fraction of the leaf reached by `row`.
  double leaf_fraction(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  Index depth() const;
};

struct ForestModel {
  std::vector<DecisionTreeModel> trees;
};

struct TrainedModel {
  ModelSpec spec;
  Index feature_count = 0;
  std::variant<LogisticModel, DecisionTreeModel, ForestModel> params;

  nlohmann::ordered_json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);
};

/// Mean log-loss of sigmoid(Xw + b) against y plus (l2 / 2) * ||w||^2.
double logistic_loss(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                     const Eigen::Ref<const Eigen::VectorXd>& weights, double bias, double l2);

struct LogisticGradient {
  Eigen::VectorXd weights;
  double bias = 0.0;
};

LogisticGradient logistic_gradient(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXd>& y,
                                   const Eigen::Ref<const Eigen::VectorXd>& weights, double bias, double l2);

/// Labels must be 0/1 with both classes present.
TrainedModel train(const ModelSpec& spec, const Eigen::MatrixXd& features, const Eigen::VectorXd& labels);

/// Probability of class 1 (logistic), leaf class fraction (tree) or vote
/// fraction (forest).
Eigen::VectorXd predict_proba(const TrainedModel& model, const Eigen::MatrixXd& features);

/// Hard labels. Ties at exactly 0.5 go to class 1.
Eigen::VectorXi predict(const TrainedModel& model, const Eigen::MatrixXd& features);

}  // namespace fairedu
