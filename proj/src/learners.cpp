#include "fairedu/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fairedu/error.hpp"
#include "fairedu/tabular.hpp"

namespace fairedu {

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_training_data(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw ShapeError("feature rows and label count differ");
  if (!x.allFinite() || !y.allFinite()) throw NumericError("non-finite training input");
  Index positives = 0;
  for (Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw NumericError("labels must be 0 or 1");
    positives += y(i) == 1.0;
  }
  if (y.size() < 2 || positives == 0 || positives == y.size()) {
    throw DegenerateLabelsError("training labels need both classes and at least 2 rows");
  }
}

// --- logistic regression ---------------------------------------------------

LogisticModel fit_logistic(const LogisticParams& params, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  // Gradient descent runs on z-scored columns; the weights are mapped back
  // to the raw feature scale afterwards.
  const Index d = x.cols();
  const Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::RowVectorXd scale = ((x.rowwise() - mean).array().square().colwise().mean()).sqrt();
  for (Index j = 0; j < d; ++j) {
    if (!(scale(j) > 0)) scale(j) = 1.0;
  }
  const Eigen::MatrixXd z = (x.rowwise() - mean).array().rowwise() / scale.array();

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double b = 0.0;
  double loss = logistic_loss(z, y, w, b, params.l2);
  LogisticModel model;
  int it = 0;
  for (; it < params.max_iterations; ++it) {
    const LogisticGradient g = logistic_gradient(z, y, w, b, params.l2);
    const double g2 = g.weights.squaredNorm() + g.bias * g.bias;
    model.gradient_norm = std::sqrt(g2);
    if (model.gradient_norm < params.gradient_tolerance) {
      model.converged = true;
      break;
    }
    double step = params.learning_rate;
    for (;;) {
      const Eigen::VectorXd w_next = w - step * g.weights;
      const double b_next = b - step * g.bias;
      const double next = logistic_loss(z, y, w_next, b_next, params.l2);
      if (next <= loss - 0.5 * step * g2 || step < 1e-12) {
        w = w_next;
        b = b_next;
        loss = next;
        break;
      }
      step *= 0.5;
    }
  }
  if (!model.converged) {
    const LogisticGradient g = logistic_gradient(z, y, w, b, params.l2);
    model.gradient_norm = std::sqrt(g.weights.squaredNorm() + g.bias * g.bias);
    model.converged = model.gradient_norm < params.gradient_tolerance;
  }
  model.iterations = it;
  model.weights = w.array() / scale.transpose().array();
  model.bias = b - model.weights.dot(mean.transpose());
  return model;
}

// --- CART --------------------------------------------------------------------

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const TreeParams& params,
              std::mt19937_64* rng)
      : x_(x), y_(y), params_(params), rng_(rng) {}

  DecisionTreeModel build(std::vector<Index> rows) {
    DecisionTreeModel tree;
    tree.nodes.reserve(2 * rows.size() / std::max<Index>(1, params_.min_leaf) + 1);
    grow(tree, rows, 0);
    return tree;
  }

 private:
  struct Split {
    Index feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;  // n_left * gini_left + n_right * gini_right
  };

  Index grow(DecisionTreeModel& tree, std::vector<Index>& rows, int depth) {
    const auto n = static_cast<Index>(rows.size());
    double positives = 0;
    for (Index r : rows) positives += y_(r);
    const Index id = static_cast<Index>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[static_cast<std::size_t>(id)].positive_fraction = positives / static_cast<double>(n);
    tree.nodes[static_cast<std::size_t>(id)].samples = n;

    const bool pure = positives == 0 || positives == static_cast<double>(n);
    const bool depth_limited = params_.max_depth && depth >= *params_.max_depth;
    if (pure || depth_limited || n < 2 * params_.min_leaf || n < 2) return id;

    const auto split = best_split(rows, positives);
    if (!split) return id;

    std::vector<Index> left, right;
    for (Index r : rows) (x_(r, split->feature) <= split->threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    const Index l = grow(tree, left, depth + 1);
    const Index rgt = grow(tree, right, depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = split->feature;
    node.threshold = split->threshold;
    node.left = l;
    node.right = rgt;
    return id;
  }

  std::vector<Index> candidate_features() {
    const Index d = x_.cols();
    std::vector<Index> all(static_cast<std::size_t>(d));
    std::iota(all.begin(), all.end(), Index{0});
    const Index m = params_.max_features;
    if (m <= 0 || m >= d || rng_ == nullptr) return all;
    for (Index i = 0; i < m; ++i) {
      const auto j = i + static_cast<Index>(uniform_below(*rng_, static_cast<std::uint64_t>(d - i)));
      std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
    }
    all.resize(static_cast<std::size_t>(m));
    std::sort(all.begin(), all.end());
    return all;
  }

  std::optional<Split> best_split(const std::vector<Index>& rows, double positives) {
    const auto n = static_cast<Index>(rows.size());
    std::optional<Split> best;
    std::vector<Index> order(rows);
    for (Index f : candidate_features()) {
      std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        const double xa = x_(a, f), xb = x_(b, f);
        return xa < xb || (xa == xb && a < b);
      });
      double left_pos = 0;
      for (Index i = 0; i + 1 < n; ++i) {
        left_pos += y_(order[static_cast<std::size_t>(i)]);
        const double lo = x_(order[static_cast<std::size_t>(i)], f);
        const double hi = x_(order[static_cast<std::size_t>(i + 1)], f);
        if (!(lo < hi)) continue;
        const Index nl = i + 1;
        const Index nr = n - nl;
        if (nl < params_.min_leaf || nr < params_.min_leaf) continue;
        const double right_pos = positives - left_pos;
        const double ln = static_cast<double>(nl), rn = static_cast<double>(nr);
        const double impurity = (ln - (left_pos * left_pos + (ln - left_pos) * (ln - left_pos)) / ln) +
                                (rn - (right_pos * right_pos + (rn - right_pos) * (rn - right_pos)) / rn);
        if (!best || impurity < best->impurity) {
          double threshold = 0.5 * (lo + hi);
          if (!(threshold < hi)) threshold = lo;
          best = Split{f, threshold, impurity};
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& y_;
  TreeParams params_;
  std::mt19937_64* rng_;
};

DecisionTreeModel fit_tree(const TreeParams& params, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  std::vector<Index> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  return TreeBuilder(x, y, params, nullptr).build(std::move(rows));
}

ForestModel fit_forest(const ForestParams& params, std::uint64_t seed, const Eigen::MatrixXd& x,
                       const Eigen::VectorXd& y) {
  TreeParams tree_params = params.tree;
  if (tree_params.max_features <= 0) {
    tree_params.max_features = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(x.cols()))));
  }
  const Index n = x.rows();
  ForestModel forest;
  forest.trees.reserve(static_cast<std::size_t>(params.trees));
  for (int t = 0; t < params.trees; ++t) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(t));
    std::vector<Index> sample(static_cast<std::size_t>(n));
    for (auto& r : sample) r = static_cast<Index>(uniform_below(rng, static_cast<std::uint64_t>(n)));
    forest.trees.push_back(TreeBuilder(x, y, tree_params, &rng).build(std::move(sample)));
  }
  return forest;
}

}  // namespace

// --- public API --------------------------------------------------------------

std::string to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::LogisticRegression: return "logistic";
    case ModelFamily::DecisionTree: return "tree";
    case ModelFamily::RandomForest: return "forest";
  }
  return "unknown";
}

ModelFamily model_family_from_string(const std::string& s) {
  if (s == "logistic" || s == "lr") return ModelFamily::LogisticRegression;
  if (s == "tree" || s == "dt") return ModelFamily::DecisionTree;
  if (s == "forest" || s == "rf") return ModelFamily::RandomForest;
  throw ConfigError("unknown model family '" + s + "' (expected logistic, tree or forest)");
}

void ModelSpec::validate() const {
  if (!(logistic.l2 >= 0)) throw ConfigError("l2 must be >= 0");
  if (!(logistic.learning_rate > 0)) throw ConfigError("learning rate must be > 0");
  if (logistic.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  if (!(logistic.gradient_tolerance > 0)) throw ConfigError("gradient tolerance must be > 0");
  for (const TreeParams* t : {&tree, &forest.tree}) {
    if (t->max_depth && *t->max_depth < 0) throw ConfigError("max_depth must be >= 0");
    if (t->min_leaf < 1) throw ConfigError("min_leaf must be >= 1");
    if (t->max_features < 0) throw ConfigError("max_features must be >= 0");
  }
  if (forest.trees < 1) throw ConfigError("tree count must be >= 1");
}

namespace {

nlohmann::ordered_json tree_params_json(const TreeParams& t) {
  nlohmann::ordered_json j;
  j["max_depth"] = t.max_depth ? nlohmann::ordered_json(*t.max_depth) : nlohmann::ordered_json(nullptr);
  j["min_leaf"] = t.min_leaf;
  j["max_features"] = t.max_features;
  return j;
}

TreeParams tree_params_from_json(const nlohmann::json& j, TreeParams t) {
  if (j.contains("max_depth")) {
    t.max_depth = j.at("max_depth").is_null() ? std::nullopt : std::optional<int>(j.at("max_depth").get<int>());
  }
  if (j.contains("min_leaf")) t.min_leaf = j.at("min_leaf").get<Index>();
  if (j.contains("max_features")) t.max_features = j.at("max_features").get<Index>();
  return t;
}

}  // namespace

nlohmann::ordered_json ModelSpec::to_json() const {
  nlohmann::ordered_json j;
  j["family"] = fairedu::to_string(family);
  j["seed"] = seed;
  switch (family) {
    case ModelFamily::LogisticRegression:
      j["l2"] = logistic.l2;
      j["learning_rate"] = logistic.learning_rate;
      j["max_iterations"] = logistic.max_iterations;
      j["gradient_tolerance"] = logistic.gradient_tolerance;
      break;
    case ModelFamily::DecisionTree:
      j.update(tree_params_json(tree));
      break;
    case ModelFamily::RandomForest:
      j["trees"] = forest.trees;
      j.update(tree_params_json(forest.tree));
      break;
  }
  return j;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  try {
    s.family = model_family_from_string(j.at("family").get<std::string>());
    s.seed = j.value("seed", std::uint64_t{0});
    s.logistic.l2 = j.value("l2", s.logistic.l2);
    s.logistic.learning_rate = j.value("learning_rate", s.logistic.learning_rate);
    s.logistic.max_iterations = j.value("max_iterations", s.logistic.max_iterations);
    s.logistic.gradient_tolerance = j.value("gradient_tolerance", s.logistic.gradient_tolerance);
    if (s.family == ModelFamily::DecisionTree) s.tree = tree_params_from_json(j, s.tree);
    if (s.family == ModelFamily::RandomForest) {
      s.forest.trees = j.value("trees", s.forest.trees);
      s.forest.tree = tree_params_from_json(j, s.forest.tree);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model spec: ") + e.what());
  }
  s.validate();
  return s;
}

double DecisionTreeModel::leaf_fraction(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  Index id = 0;
  for (;;) {
    const auto& node = nodes[static_cast<std::size_t>(id)];
    if (node.is_leaf()) return node.positive_fraction;
    id = row(node.feature) <= node.threshold ? node.left : node.right;
  }
}

Index DecisionTreeModel::depth() const {
  std::vector<std::pair<Index, Index>> stack{{0, 0}};
  Index best = 0;
  while (!stack.empty()) {
    const auto [id, depth] = stack.back();
    stack.pop_back();
    best = std::max(best, depth);
    const auto& node = nodes[static_cast<std::size_t>(id)];
    if (!node.is_leaf()) {
      stack.push_back({node.left, depth + 1});
      stack.push_back({node.right, depth + 1});
    }
  }
  return best;
}

double logistic_loss(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                     const Eigen::Ref<const Eigen::VectorXd>& weights, double bias, double l2) {
  const Eigen::VectorXd z = (x * weights).array() + bias;
  double sum = 0.0;
  for (Index i = 0; i < z.size(); ++i) sum += softplus(z(i)) - y(i) * z(i);
  return sum / static_cast<double>(z.size()) + 0.5 * l2 * weights.squaredNorm();
}

LogisticGradient logistic_gradient(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXd>& y,
                                   const Eigen::Ref<const Eigen::VectorXd>& weights, double bias, double l2) {
  const Eigen::VectorXd z = (x * weights).array() + bias;
  Eigen::VectorXd residual(z.size());
  for (Index i = 0; i < z.size(); ++i) residual(i) = sigmoid(z(i)) - y(i);
  const double inv_n = 1.0 / static_cast<double>(z.size());
  LogisticGradient g;
  g.weights = inv_n * (x.transpose() * residual) + l2 * weights;
  g.bias = inv_n * residual.sum();
  return g;
}

TrainedModel train(const ModelSpec& spec, const Eigen::MatrixXd& features, const Eigen::VectorXd& labels) {
  spec.validate();
  check_training_data(features, labels);
  TrainedModel model;
  model.spec = spec;
  model.feature_count = features.cols();
  switch (spec.family) {
    case ModelFamily::LogisticRegression:
      model.params = fit_logistic(spec.logistic, features, labels);
      break;
    case ModelFamily::DecisionTree:
      model.params = fit_tree(spec.tree, features, labels);
      break;
    case ModelFamily::RandomForest:
      model.params = fit_forest(spec.forest, spec.seed, features, labels);
      break;
  }
  return model;
}

Eigen::VectorXd predict_proba(const TrainedModel& model, const Eigen::MatrixXd& features) {
  if (features.cols() != model.feature_count) {
    throw ShapeError("model expects " + std::to_string(model.feature_count) + " features, got " +
                     std::to_string(features.cols()));
  }
  const Index m = features.rows();
  Eigen::VectorXd out(m);
  if (const auto* lr = std::get_if<LogisticModel>(&model.params)) {
    const Eigen::VectorXd z = (features * lr->weights).array() + lr->bias;
    for (Index i = 0; i < m; ++i) out(i) = sigmoid(z(i));
  } else if (const auto* tree = std::get_if<DecisionTreeModel>(&model.params)) {
    for (Index i = 0; i < m; ++i) out(i) = tree->leaf_fraction(features.row(i));
  } else {
    const auto& forest = std::get<ForestModel>(model.params);
    if (forest.trees.empty()) throw ShapeError("forest has no trees");
    for (Index i = 0; i < m; ++i) {
      int votes = 0;
      for (const auto& t : forest.trees) votes += t.leaf_fraction(features.row(i)) >= 0.5;
      out(i) = static_cast<double>(votes) / static_cast<double>(forest.trees.size());
    }
  }
  return out;
}

Eigen::VectorXi predict(const TrainedModel& model, const Eigen::MatrixXd& features) {
  const Eigen::VectorXd p = predict_proba(model, features);
  return (p.array() >= 0.5).cast<int>();
}

// --- serialization -----------------------------------------------------------

namespace {

nlohmann::ordered_json tree_json(const DecisionTreeModel& t) {
  nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
  for (const auto& n : t.nodes) {
    nodes.push_back({n.feature, n.threshold, n.left, n.right, n.positive_fraction, n.samples});
  }
  return nodes;
}

DecisionTreeModel tree_from_json(const nlohmann::json& j, Index feature_count) {
  DecisionTreeModel t;
  for (const auto& n : j) {
    TreeNode node;
    node.feature = n.at(0).get<Index>();
    node.threshold = n.at(1).get<double>();
    node.left = n.at(2).get<Index>();
    node.right = n.at(3).get<Index>();
    node.positive_fraction = n.at(4).get<double>();
    node.samples = n.at(5).get<Index>();
    t.nodes.push_back(node);
  }
  const auto size = static_cast<Index>(t.nodes.size());
  if (size == 0) throw ConfigError("tree has no nodes");
  for (const auto& n : t.nodes) {
    if (!n.is_leaf() && (n.feature >= feature_count || n.left <= 0 || n.right <= 0 || n.left >= size ||
                         n.right >= size)) {
      throw ConfigError("tree node references out of range");
    }
  }
  return t;
}

}  // namespace

nlohmann::ordered_json TrainedModel::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "fairedu-model";
  j["version"] = 1;
  j["spec"] = spec.to_json();
  j["feature_count"] = feature_count;
  if (const auto* lr = std::get_if<LogisticModel>(&params)) {
    j["weights"] = std::vector<double>(lr->weights.data(), lr->weights.data() + lr->weights.size());
    j["bias"] = lr->bias;
    j["iterations"] = lr->iterations;
    j["converged"] = lr->converged;
  } else if (const auto* tree = std::get_if<DecisionTreeModel>(&params)) {
    j["nodes"] = tree_json(*tree);
  } else {
    nlohmann::ordered_json trees = nlohmann::ordered_json::array();
    for (const auto& t : std::get<ForestModel>(params).trees) trees.push_back(tree_json(t));
    j["trees"] = trees;
  }
  return j;
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
  TrainedModel m;
  try {
    if (j.value("format", std::string{}) != "fairedu-model") throw ConfigError("not a model document");
    if (j.at("version").get<int>() != 1) throw ConfigError("unsupported model version");
    m.spec = ModelSpec::from_json(j.at("spec"));
    m.feature_count = j.at("feature_count").get<Index>();
    switch (m.spec.family) {
      case ModelFamily::LogisticRegression: {
        LogisticModel lr;
        const auto w = j.at("weights").get<std::vector<double>>();
        if (static_cast<Index>(w.size()) != m.feature_count) throw ConfigError("weight count mismatch");
        lr.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Index>(w.size()));
        lr.bias = j.at("bias").get<double>();
        lr.iterations = j.value("iterations", 0);
        lr.converged = j.value("converged", false);
        m.params = lr;
        break;
      }
      case ModelFamily::DecisionTree:
        m.params = tree_from_json(j.at("nodes"), m.feature_count);
        break;
      case ModelFamily::RandomForest: {
        ForestModel f;
        for (const auto& t : j.at("trees")) f.trees.push_back(tree_from_json(t, m.feature_count));
        m.params = std::move(f);
        break;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model: ") + e.what());
  }
  return m;
}

}  // namespace fairedu
