#pragma once

// Group fairness metrics (DI, SPD, AOD, EOD) and pooled accuracy/recall,
// computed from confusion counts split by a binary group indicator
// (1 = privileged, 0 = unprivileged).

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fairedu {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  std::int64_t favorable() const { return tp + fp; }
  std::int64_t actual_positives() const { return tp + fn; }
  std::int64_t actual_negatives() const { return fp + tn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o);
  bool operator==(const ConfusionCounts&) const = default;
};

struct GroupOutcome {
  ConfusionCounts privileged;    // A = 1
  ConfusionCounts unprivileged;  // A = 0

  ConfusionCounts pooled() const;
};

GroupOutcome tally(const Eigen::Ref<const Eigen::VectorXi>& y_true, const Eigen::Ref<const Eigen::VectorXi>& y_pred,
                   const Eigen::Ref<const Eigen::VectorXi>& group);

/// rate(A=0) / rate(A=1); nullopt when the privileged favorable rate is 0.
std::optional<double> disparate_impact(const GroupOutcome& go);
double statistical_parity_difference(const GroupOutcome& go);
double average_odds_difference(const GroupOutcome& go);
double equal_opportunity_difference(const GroupOutcome& go);

struct Performance {
  double accuracy = 0.0;
  std::optional<double> recall;  // nullopt without any actual positive
};

Performance performance(const GroupOutcome& go);

/// Signed (A=0 minus A=1) variants kept for diagnostics.
struct SignedDifferences {
  std::optional<double> spd;
  std::optional<double> aod;
  std::optional<double> eod;
};

struct MetricReport {
  std::optional<double> di;
  std::optional<double> abs_one_minus_di;
  std::optional<double> spd;
  std::optional<double> aod;
  std::optional<double> eod;
  std::optional<double> acc;
  std::optional<double> recall;
  std::vector<std::pair<std::string, std::string>> undefined_reasons;  // (metric, cause)
  SignedDifferences signed_diff;

  nlohmann::ordered_json to_json() const;
};

/// Evaluates every metric; a metric whose precondition fails is left unset
/// and its cause recorded instead of throwing.
MetricReport evaluate(const GroupOutcome& go);

/// Field names of MetricReport in serialization order.
const std::vector<std::string>& metric_names();

/// Value of the named metric (one of metric_names()).
std::optional<double> metric_value(const MetricReport& report, const std::string& name);

}  // namespace fairedu
