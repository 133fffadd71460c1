#include "fairedu/metrics.hpp"

#include <cmath>

#include "fairedu/error.hpp"

namespace fairedu {

namespace {

double ratio(std::int64_t num, std::int64_t den) { return static_cast<double>(num) / static_cast<double>(den); }

void require_nonempty(const GroupOutcome& go) {
  if (go.privileged.total() == 0) throw EmptyGroupError("privileged group (A=1) is empty");
  if (go.unprivileged.total() == 0) throw EmptyGroupError("unprivileged group (A=0) is empty");
}

double tpr(const ConfusionCounts& c, const char* group) {
  if (c.actual_positives() == 0) {
    throw UndefinedRateError(std::string("TPR undefined: no positive labels in the ") + group + " group");
  }
  return ratio(c.tp, c.actual_positives());
}

double fpr(const ConfusionCounts& c, const char* group) {
  if (c.actual_negatives() == 0) {
    throw UndefinedRateError(std::string("FPR undefined: no negative labels in the ") + group + " group");
  }
  return ratio(c.fp, c.actual_negatives());
}

double favorable_rate(const ConfusionCounts& c) { return ratio(c.favorable(), c.total()); }

double signed_spd(const GroupOutcome& go) {
  require_nonempty(go);
  return favorable_rate(go.unprivileged) - favorable_rate(go.privileged);
}

double signed_eod(const GroupOutcome& go) {
  return tpr(go.unprivileged, "unprivileged") - tpr(go.privileged, "privileged");
}

double signed_aod(const GroupOutcome& go) {
  const double dfpr = fpr(go.unprivileged, "unprivileged") - fpr(go.privileged, "privileged");
  return 0.5 * (dfpr + signed_eod(go));
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

ConfusionCounts GroupOutcome::pooled() const {
  ConfusionCounts c = privileged;
  c += unprivileged;
  return c;
}

GroupOutcome tally(const Eigen::Ref<const Eigen::VectorXi>& y_true, const Eigen::Ref<const Eigen::VectorXi>& y_pred,
                   const Eigen::Ref<const Eigen::VectorXi>& group) {
  if (y_true.size() != y_pred.size() || y_true.size() != group.size()) {
    throw ShapeError("tally needs equal-length label, prediction and group vectors");
  }
  if (y_true.size() == 0) throw ShapeError("tally needs at least one row");
  GroupOutcome go;
  for (Eigen::Index i = 0; i < y_true.size(); ++i) {
    auto& c = group(i) != 0 ? go.privileged : go.unprivileged;
    const bool truth = y_true(i) != 0;
    const bool pred = y_pred(i) != 0;
    if (truth && pred) ++c.tp;
    else if (!truth && pred) ++c.fp;
    else if (!truth && !pred) ++c.tn;
    else ++c.fn;
  }
  return go;
}

std::optional<double> disparate_impact(const GroupOutcome& go) {
  require_nonempty(go);
  if (go.privileged.favorable() == 0) return std::nullopt;
  return favorable_rate(go.unprivileged) / favorable_rate(go.privileged);
}

double statistical_parity_difference(const GroupOutcome& go) { return std::abs(signed_spd(go)); }

double average_odds_difference(const GroupOutcome& go) {
  require_nonempty(go);
  const double dfpr = fpr(go.unprivileged, "unprivileged") - fpr(go.privileged, "privileged");
  const double dtpr = tpr(go.unprivileged, "unprivileged") - tpr(go.privileged, "privileged");
  return 0.5 * (std::abs(dfpr) + std::abs(dtpr));
}

double equal_opportunity_difference(const GroupOutcome& go) {
  require_nonempty(go);
  return std::abs(signed_eod(go));
}

Performance performance(const GroupOutcome& go) {
  const ConfusionCounts c = go.pooled();
  if (c.total() == 0) throw EmptyGroupError("no rows to score");
  Performance p;
  p.accuracy = ratio(c.tp + c.tn, c.total());
  if (c.actual_positives() > 0) p.recall = ratio(c.tp, c.actual_positives());
  return p;
}

MetricReport evaluate(const GroupOutcome& go) {
  MetricReport r;
  auto attempt = [&](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      r.undefined_reasons.emplace_back(name, std::string(e.kind()) + ": " + e.what());
    }
  };
  attempt("di", [&] {
    r.di = disparate_impact(go);
    if (r.di) {
      r.abs_one_minus_di = std::abs(1.0 - *r.di);
    } else {
      r.undefined_reasons.emplace_back("di", "ZeroPrivilegedRate: privileged favorable rate is 0");
    }
  });
  attempt("spd", [&] {
    r.signed_diff.spd = signed_spd(go);
    r.spd = std::abs(*r.signed_diff.spd);
  });
  attempt("aod", [&] {
    r.aod = average_odds_difference(go);
    r.signed_diff.aod = signed_aod(go);
  });
  attempt("eod", [&] {
    r.eod = equal_opportunity_difference(go);
    r.signed_diff.eod = signed_eod(go);
  });
  attempt("acc", [&] {
    const Performance p = performance(go);
    r.acc = p.accuracy;
    r.recall = p.recall;
    if (!p.recall) r.undefined_reasons.emplace_back("recall", "NoPositives: no actual positive labels");
  });
  if (!r.acc) r.undefined_reasons.emplace_back("recall", "EmptyGroupError: no rows to score");
  return r;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"di", "abs_one_minus_di", "spd", "aod", "eod", "acc", "recall"};
  return names;
}

std::optional<double> metric_value(const MetricReport& r, const std::string& name) {
  if (name == "di") return r.di;
  if (name == "abs_one_minus_di") return r.abs_one_minus_di;
  if (name == "spd") return r.spd;
  if (name == "aod") return r.aod;
  if (name == "eod") return r.eod;
  if (name == "acc") return r.acc;
  if (name == "recall") return r.recall;
  throw ConfigError("unknown metric '" + name + "'");
}

nlohmann::ordered_json MetricReport::to_json() const {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["di"] = opt(di);
  j["abs_one_minus_di"] = opt(abs_one_minus_di);
  j["spd"] = opt(spd);
  j["aod"] = opt(aod);
  j["eod"] = opt(eod);
  j["acc"] = opt(acc);
  j["recall"] = opt(recall);
  nlohmann::ordered_json reasons = nlohmann::ordered_json::array();
  for (const auto& [metric, cause] : undefined_reasons) reasons.push_back({{"metric", metric}, {"cause", cause}});
  j["undefined_reasons"] = reasons;
  j["diagnostics"] = {{"spd_signed", opt(signed_diff.spd)},
                      {"aod_signed", opt(signed_diff.aod)},
                      {"eod_signed", opt(signed_diff.eod)}};
  return j;
}

}  // namespace fairedu
