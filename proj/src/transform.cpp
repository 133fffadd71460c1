#include "fairedu/transform.hpp"

#include <algorithm>
#include <optional>

#include "fairedu/error.hpp"
#include "fairedu/regression.hpp"

namespace fairedu {

std::string to_string(PlanMode mode) {
  return mode == PlanMode::MultiFeature ? "multi" : "ltdd";
}

PlanMode plan_mode_from_string(const std::string& s) {
  if (s == "multi") return PlanMode::MultiFeature;
  if (s == "ltdd" || s == "single") return PlanMode::SingleFeature;
  throw ConfigError("unknown plan mode '" + s + "' (expected multi or ltdd)");
}

std::size_t DebiasPlan::applied_count() const {
  return static_cast<std::size_t>(
      std::count_if(features.begin(), features.end(), [](const auto& f) { return f.applied; }));
}

const FeatureAdjustment& DebiasPlan::feature(const std::string& name) const {
  for (const auto& f : features) {
    if (f.name == name) return f;
  }
  throw IndexError("plan has no feature '" + name + "'");
}

DebiasPlan fit_plan(const Eigen::MatrixXd& features, const Eigen::MatrixXd& sensitive,
                    const std::vector<std::string>& feature_names,
                    const std::vector<std::string>& sensitive_names, const PlanOptions& options) {
  const Index k = sensitive.cols();
  if (k < 1) throw SchemaError("debiasing needs at least one sensitive column");
  if (features.cols() < 1) throw SchemaError("debiasing needs at least one non-sensitive column");
  if (features.rows() != sensitive.rows()) throw ShapeError("feature and sensitive row counts differ");
  if (static_cast<Index>(feature_names.size()) != features.cols() ||
      static_cast<Index>(sensitive_names.size()) != k) {
    throw ShapeError("name lists do not match matrix widths");
  }
  if (!(options.threshold >= 0.0 && options.threshold <= 1.0)) {
    throw ConfigError("significance threshold must lie in [0, 1]");
  }

  DebiasPlan plan;
  plan.mode = options.mode;
  plan.threshold = options.threshold;
  plan.fitted_on = features.rows();
  plan.sensitive_names = sensitive_names;

  // Positions within the sensitive matrix that enter the regression.
  std::vector<Index> regressors;
  if (options.mode == PlanMode::SingleFeature) {
    const auto it = std::find(sensitive_names.begin(), sensitive_names.end(), options.target);
    if (it == sensitive_names.end()) {
      throw ConfigError("ltdd target '" + options.target + "' is not a sensitive column");
    }
    plan.target = options.target;
    regressors.push_back(static_cast<Index>(it - sensitive_names.begin()));
  } else {
    for (Index m = 0; m < k; ++m) regressors.push_back(m);
  }

  Eigen::MatrixXd design(sensitive.rows(), static_cast<Index>(regressors.size()));
  std::vector<std::string> design_names;
  for (std::size_t c = 0; c < regressors.size(); ++c) {
    design.col(static_cast<Index>(c)) = sensitive.col(regressors[c]);
    design_names.push_back(sensitive_names[static_cast<std::size_t>(regressors[c])]);
  }

  auto annotate = [&](const std::string& feature, const Error& e) {
    return "feature '" + feature + "': " + e.what();
  };

  std::optional<LeastSquaresDesign<double>> solver;
  try {
    solver.emplace(design, design_names);
  } catch (const RankError& e) {
    throw RankError(annotate(feature_names.front(), e), e.deficient_columns());
  } catch (const DofError& e) {
    throw DofError(annotate(feature_names.front(), e));
  }

  plan.features.reserve(feature_names.size());
  for (Index i = 0; i < features.cols(); ++i) {
    const auto& name = feature_names[static_cast<std::size_t>(i)];
    RegressionFit<double> fit;
    try {
      fit = solver->fit(features.col(i));
    } catch (const Error& e) {
      throw NumericError(annotate(name, e));
    }
    FeatureAdjustment adj;
    adj.name = name;
    adj.p_value = f_test_p_value(fit);
    adj.slopes = Eigen::VectorXd::Zero(k);
    adj.slope_p_values = Eigen::VectorXd::Ones(k);
    for (std::size_t c = 0; c < regressors.size(); ++c) {
      adj.slope_p_values(regressors[c]) = fit.p_values(static_cast<Index>(c));
    }
    if (adj.p_value < options.threshold) {
      adj.applied = true;
      adj.intercept = fit.intercept;
      for (std::size_t c = 0; c < regressors.size(); ++c) {
        adj.slopes(regressors[c]) = fit.slopes(static_cast<Index>(c));
      }
    }
    plan.features.push_back(std::move(adj));
  }
  return plan;
}

DebiasPlan fit_plan(const Dataset& train, const PlanOptions& options) {
  if (!train.has_sensitive_columns()) throw SchemaError("training data has no sensitive columns");
  std::vector<std::string> feature_names;
  for (Index i : train.feature_indices()) feature_names.push_back(train.columns[static_cast<std::size_t>(i)].name);
  DebiasPlan plan = fit_plan(train.features(), train.sensitive_values(), feature_names,
                             train.sensitive_names(), options);
  plan.source_columns = train.column_names();
  return plan;
}

Eigen::MatrixXd residualize(const DebiasPlan& plan, const Eigen::MatrixXd& features,
                            const Eigen::MatrixXd& sensitive) {
  const auto p = static_cast<Index>(plan.features.size());
  const auto k = static_cast<Index>(plan.sensitive_names.size());
  if (features.cols() != p || sensitive.cols() != k || features.rows() != sensitive.rows()) {
    throw PlanMismatchError("matrix shapes do not match the plan");
  }
  Eigen::MatrixXd out = features;
  for (Index i = 0; i < p; ++i) {
    const auto& adj = plan.features[static_cast<std::size_t>(i)];
    if (!adj.applied) continue;
    out.col(i).array() -= adj.intercept;
    out.col(i).noalias() -= sensitive * adj.slopes;
  }
  return out;
}

Dataset drop_sensitive(const Dataset& ds) {
  if (!ds.has_sensitive_columns()) return ds;
  Dataset out;
  out.schema = ds.schema;
  out.dropped_rows = ds.dropped_rows;
  out.side_table.names = ds.sensitive_names();
  out.side_table.values = ds.sensitive_values();
  std::vector<Index> keep;
  for (std::size_t j = 0; j < ds.columns.size(); ++j) {
    if (ds.columns[j].role != RoleKind::Sensitive) keep.push_back(static_cast<Index>(j));
  }
  out.values.resize(ds.rows(), static_cast<Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    out.values.col(static_cast<Index>(j)) = ds.values.col(keep[j]);
    out.columns.push_back(ds.columns[static_cast<std::size_t>(keep[j])]);
    if (keep[j] == ds.label_index) out.label_index = static_cast<Index>(j);
  }
  return out;
}

Dataset apply_plan(const DebiasPlan& plan, const Dataset& ds) {
  if (!ds.has_sensitive_columns()) throw PlanMismatchError("dataset has no sensitive columns to condition on");
  if (ds.column_names() != plan.source_columns) {
    throw PlanMismatchError("dataset columns do not match the columns the plan was fitted on");
  }
  if (ds.sensitive_names() != plan.sensitive_names) {
    throw PlanMismatchError("sensitive columns do not match the plan");
  }
  const auto feature_idx = ds.feature_indices();
  if (feature_idx.size() != plan.features.size()) throw PlanMismatchError("feature count does not match the plan");

  const Eigen::MatrixXd adjusted = residualize(plan, ds.features(), ds.sensitive_values());
  Dataset with_adjusted = ds;
  for (std::size_t i = 0; i < feature_idx.size(); ++i) {
    with_adjusted.values.col(feature_idx[i]) = adjusted.col(static_cast<Index>(i));
  }
  return drop_sensitive(with_adjusted);
}

DebiasedSplit debias_split(const SplitPair& pair, const PlanOptions& options) {
  DebiasedSplit out;
  out.plan = fit_plan(pair.train, options);
  out.train = apply_plan(out.plan, pair.train);
  out.test = apply_plan(out.plan, pair.test);
  return out;
}

// --- JSON ------------------------------------------------------------------

nlohmann::ordered_json DebiasPlan::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "fairedu-plan";
  j["version"] = 1;
  j["mode"] = fairedu::to_string(mode);
  j["target"] = mode == PlanMode::SingleFeature ? nlohmann::ordered_json(target) : nlohmann::ordered_json(nullptr);
  j["threshold"] = threshold;
  j["fitted_on"] = fitted_on;
  j["sensitive"] = sensitive_names;
  j["columns"] = source_columns;
  nlohmann::ordered_json feats = nlohmann::ordered_json::object();
  for (const auto& f : features) {
    nlohmann::ordered_json e;
    e["applied"] = f.applied;
    e["p_value"] = f.p_value;
    e["intercept"] = f.intercept;
    nlohmann::ordered_json slopes = nlohmann::ordered_json::object();
    nlohmann::ordered_json slope_p = nlohmann::ordered_json::object();
    for (std::size_t m = 0; m < sensitive_names.size(); ++m) {
      slopes[sensitive_names[m]] = f.slopes(static_cast<Index>(m));
      slope_p[sensitive_names[m]] = f.slope_p_values(static_cast<Index>(m));
    }
    e["slopes"] = slopes;
    e["slope_p_values"] = slope_p;
    feats[f.name] = e;
  }
  j["features"] = feats;
  return j;
}

DebiasPlan DebiasPlan::from_json(const nlohmann::json& j) {
  DebiasPlan plan;
  try {
    if (j.value("format", std::string{}) != "fairedu-plan") throw ConfigError("not a debias plan document");
    if (j.at("version").get<int>() != 1) throw ConfigError("unsupported plan version");
    plan.mode = plan_mode_from_string(j.at("mode").get<std::string>());
    if (plan.mode == PlanMode::SingleFeature) plan.target = j.at("target").get<std::string>();
    plan.threshold = j.at("threshold").get<double>();
    plan.fitted_on = j.at("fitted_on").get<Index>();
    plan.sensitive_names = j.at("sensitive").get<std::vector<std::string>>();
    plan.source_columns = j.at("columns").get<std::vector<std::string>>();
    const auto k = static_cast<Index>(plan.sensitive_names.size());
    for (const auto& [name, e] : j.at("features").items()) {
      FeatureAdjustment f;
      f.name = name;
      f.applied = e.at("applied").get<bool>();
      f.p_value = e.at("p_value").get<double>();
      f.intercept = e.at("intercept").get<double>();
      f.slopes = Eigen::VectorXd::Zero(k);
      f.slope_p_values = Eigen::VectorXd::Ones(k);
      for (Index m = 0; m < k; ++m) {
        const auto& s = plan.sensitive_names[static_cast<std::size_t>(m)];
        f.slopes(m) = e.at("slopes").at(s).get<double>();
        if (e.contains("slope_p_values")) f.slope_p_values(m) = e.at("slope_p_values").at(s).get<double>();
      }
      if (!f.applied && (f.intercept != 0.0 || !f.slopes.isZero(0.0))) {
        throw ConfigError("feature '" + name + "' is not applied but carries coefficients");
      }
      plan.features.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed plan: ") + e.what());
  }
  // Feature order follows the fitted dataset's column order.
  std::vector<FeatureAdjustment> ordered;
  for (const auto& c : plan.source_columns) {
    auto it = std::find_if(plan.features.begin(), plan.features.end(), [&](const auto& f) { return f.name == c; });
    if (it != plan.features.end()) ordered.push_back(std::move(*it));
  }
  if (!plan.source_columns.empty()) {
    if (ordered.size() != plan.features.size()) throw ConfigError("plan features are not a subset of its columns");
    plan.features = std::move(ordered);
  }
  return plan;
}

}  // namespace fairedu
