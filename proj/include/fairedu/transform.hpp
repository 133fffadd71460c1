#pragma once

// Multi-attribute residualization: regress every non-sensitive feature on
// the sensitive columns, subtract the fitted part where the joint slope
// test is significant, and drop the sensitive columns.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "fairedu/tabular.hpp"

namespace fairedu {

enum class PlanMode {
  MultiFeature,   // regress on all k sensitive columns
  SingleFeature,  // regress on one designated column (LTDD)
};

struct PlanOptions {
  PlanMode mode = PlanMode::MultiFeature;
  std::string target;  // sensitive column name, SingleFeature only
  double threshold = 0.05;
};

struct FeatureAdjustment {
  std::string name;
  bool applied = false;
  double intercept = 0.0;
  Eigen::VectorXd slopes;          // length k, one entry per sensitive column
  double p_value = 1.0;            // joint F-test p-value, the gate
  Eigen::VectorXd slope_p_values;  // per-slope Wald p-values, diagnostics only
};

struct DebiasPlan {
  PlanMode mode = PlanMode::MultiFeature;
  std::string target;
  double threshold = 0.05;
  Index fitted_on = 0;
  std::vector<std::string> sensitive_names;
  std::vector<std::string> source_columns;  // encoded column names of the fitted dataset
  std::vector<FeatureAdjustment> features;

  std::size_t applied_count() const;
  const FeatureAdjustment& feature(const std::string& name) const;

  nlohmann::ordered_json to_json() const;
  static DebiasPlan from_json(const nlohmann::json& j);
};

/// Fits the plan from a feature matrix (n x p) and the sensitive matrix
/// (n x k). RankError and DofError from the regression kernel are rethrown
/// with the feature name prepended.
DebiasPlan fit_plan(const Eigen::MatrixXd& features, const Eigen::MatrixXd& sensitive,
                    const std::vector<std::string>& feature_names,
                    const std::vector<std::string>& sensitive_names, const PlanOptions& options = {});

DebiasPlan fit_plan(const Dataset& train, const PlanOptions& options = {});

/// x_i - (a_i + sum_m b_im * s_m) for every applied feature; other
/// columns are returned untouched.
Eigen::MatrixXd residualize(const DebiasPlan& plan, const Eigen::MatrixXd& features,
                            const Eigen::MatrixXd& sensitive);

/// Residualizes the dataset's features and removes its sensitive columns.
/// The result carries the original sensitive values in its side table.
Dataset apply_plan(const DebiasPlan& plan, const Dataset& ds);

struct DebiasedSplit {
  Dataset train;
  Dataset test;
  DebiasPlan plan;
};

/// Fits on the training partition only and applies to both partitions.
DebiasedSplit debias_split(const SplitPair& pair, const PlanOptions& options = {});

/// Removes the sensitive columns without residualizing (side table kept).
Dataset drop_sensitive(const Dataset& ds);

std::string to_string(PlanMode mode);
PlanMode plan_mode_from_string(const std::string& s);

}  // namespace fairedu
