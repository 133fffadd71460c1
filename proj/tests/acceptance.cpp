// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
//
//   acceptance [--only N[,N...]] [--data-dir DIR]

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fairedu/error.hpp"
#include "fairedu/experiment.hpp"
#include "fairedu/learners.hpp"
#include "fairedu/metrics.hpp"
#include "fairedu/regression.hpp"
#include "fairedu/special_functions.hpp"
#include "fairedu/tabular.hpp"
#include "fairedu/transform.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

namespace fs = std::filesystem;
using namespace fairedu;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1. Exhaustive metric enumeration for n <= 6.
Outcome metric_oracle() {
  long checked = 0;
  double worst = 0.0;
  long mismatched_definedness = 0;
  for (int n = 1; n <= 6; ++n) {
    const long combos = 1L << (3 * n);
    std::vector<int> y(n), yhat(n), a(n);
    for (long code = 0; code < combos; ++code) {
      for (int i = 0; i < n; ++i) {
        const int row = static_cast<int>((code >> (3 * i)) & 7);
        y[i] = row & 1;
        yhat[i] = (row >> 1) & 1;
        a[i] = (row >> 2) & 1;
      }
      Eigen::Map<const Eigen::VectorXi> vy(y.data(), n), vp(yhat.data(), n), va(a.data(), n);
      const MetricReport r = evaluate(tally(vy, vp, va));
      const auto compare = [&](const std::optional<double>& got, const std::optional<double>& want) {
        if (got.has_value() != want.has_value()) {
          ++mismatched_definedness;
          return;
        }
        if (got) {
          worst = std::max(worst, std::abs(*got - *want));
          ++checked;
        }
      };
      const auto odi = oracle::di(y, yhat, a);
      compare(r.di, odi);
      compare(r.abs_one_minus_di, odi ? std::optional<double>(std::abs(1.0 - *odi)) : std::nullopt);
      compare(r.spd, oracle::spd(y, yhat, a));
      compare(r.aod, oracle::aod(y, yhat, a));
      compare(r.eod, oracle::eod(y, yhat, a));
      compare(r.acc, oracle::accuracy(y, yhat));
      compare(r.recall, oracle::recall(y, yhat));
    }
  }
  return {worst < 1e-12 && mismatched_definedness == 0,
          std::to_string(checked) + " values, max diff " + fmt("%.3g", worst) + ", definedness mismatches " +
              std::to_string(mismatched_definedness)};
}

// 2. OLS against the normal-equations pseudo-inverse.
Outcome ols_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> kdist(1, 5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double worst_coef = 0.0, worst_orth = 0.0;
  int fits = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = kdist(rng);
    const int n = std::uniform_int_distribution<int>(k + 2, 30)(rng);
    Eigen::MatrixXd x(n, k);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = gauss(rng) + x.row(i).sum();
    const auto fit = ols_fit(y, x);
    Eigen::VectorXd coef(k + 1);
    coef << fit.intercept, fit.slopes;
    const Eigen::VectorXd want = oracle::normal_equations(x, y);
    worst_coef = std::max(worst_coef, (coef - want).norm());
    Eigen::MatrixXd d(n, k + 1);
    d << Eigen::VectorXd::Ones(n), x;
    const double orth = (d.transpose() * fit.residuals).norm() / (d.norm() * y.norm());
    worst_orth = std::max(worst_orth, orth);
    ++fits;
  }
  return {worst_coef < 1e-8 && worst_orth < 1e-8, std::to_string(fits) + " fits, coef err " +
                                                       fmt("%.3g", worst_coef) + ", orthogonality " +
                                                       fmt("%.3g", worst_orth)};
}

// 3. Student t CDF special cases.
Outcome t_cdf() {
  bool ok = true;
  for (std::int64_t dof : {1, 2, 5, 30, 1000}) ok = ok && student_t_cdf(0.0, dof) == 0.5;
  double cauchy = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double t = -50.0 + 100.0 * i / 99.0;
    cauchy = std::max(cauchy, std::abs(student_t_cdf(t, 1) - oracle::cauchy_cdf(t)));
  }
  double normal = 0.0;
  for (int i = 0; i <= 800; ++i) {
    const double t = -4.0 + 8.0 * i / 800.0;
    normal = std::max(normal, std::abs(student_t_cdf(t, 1000) - oracle::standard_normal_cdf(t)));
  }
  return {ok && cauchy < 1e-12 && normal < 1e-3, std::string("t=0 exact ") + (ok ? "yes" : "no") +
                                                     ", Cauchy err " + fmt("%.3g", cauchy) + ", normal err " +
                                                     fmt("%.3g", normal)};
}

// 4. Transformed columns are uncorrelated with the sensitive columns and a
// refit finds no remaining slope.
Outcome transform_orthogonality() {
  std::mt19937_64 rng(77);
  double worst_corr = 0.0, worst_slope = 0.0;
  int applied = 0;
  for (int d = 0; d < 50; ++d) {
    synthetic::Planted p;
    p.rows = std::uniform_int_distribution<int>(60, 400)(rng);
    p.sensitive = std::uniform_int_distribution<int>(1, 3)(rng);
    p.features = std::uniform_int_distribution<int>(2, 6)(rng);
    p.dependent = std::uniform_int_distribution<int>(1, p.features)(rng);
    p.noise = std::uniform_real_distribution<double>(0.2, 2.0)(rng);
    p.seed = 1000 + d;
    const Dataset ds = synthetic::planted(p);
    const DebiasPlan plan = fit_plan(ds);
    const Dataset out = apply_plan(plan, ds);
    const Eigen::MatrixXd sens = ds.sensitive_values();
    const Eigen::MatrixXd feats = out.features();
    for (std::size_t j = 0; j < plan.features.size(); ++j) {
      if (!plan.features[j].applied) continue;
      ++applied;
      const Eigen::VectorXd col = feats.col(static_cast<Eigen::Index>(j));
      for (Eigen::Index m = 0; m < sens.cols(); ++m) {
        worst_corr = std::max(worst_corr, std::abs(oracle::pearson(col, sens.col(m))));
      }
      const auto refit = ols_fit(col, sens);
      worst_slope = std::max(worst_slope, refit.slopes.cwiseAbs().maxCoeff());
    }
  }
  return {applied > 0 && worst_corr < 1e-6 && worst_slope < 1e-8,
          std::to_string(applied) + " applied features, max |corr| " + fmt("%.3g", worst_corr) +
              ", max refit slope " + fmt("%.3g", worst_slope)};
}

// 5. With one sensitive column the single-feature mode reduces to the
// multi-feature mode.
Outcome ltdd_reduction() {
  double worst = 0.0;
  bool structure_ok = true;
  int fixtures = 0;
  for (int d = 0; d < 30; ++d) {
    synthetic::Planted p;
    p.rows = 80 + 10 * d;
    p.sensitive = 1;
    p.features = 2 + d % 5;
    p.dependent = 1 + d % p.features;
    p.seed = 500 + d;
    const Dataset ds = synthetic::planted(p);
    const SplitPair pair = split(ds, 0.85, d);
    const DebiasedSplit multi = debias_split(pair, {PlanMode::MultiFeature, "", 0.05});
    const DebiasedSplit single = debias_split(pair, {PlanMode::SingleFeature, "s0", 0.05});
    for (std::size_t j = 0; j < multi.plan.features.size(); ++j) {
      const auto& a = multi.plan.features[j];
      const auto& b = single.plan.features[j];
      structure_ok = structure_ok && a.applied == b.applied && a.name == b.name;
      worst = std::max({worst, std::abs(a.intercept - b.intercept), (a.slopes - b.slopes).cwiseAbs().maxCoeff(),
                        std::abs(a.p_value - b.p_value)});
    }
    structure_ok = structure_ok && multi.train.column_names() == single.train.column_names();
    worst = std::max(worst, (multi.train.values - single.train.values).cwiseAbs().maxCoeff());
    worst = std::max(worst, (multi.test.values - single.test.values).cwiseAbs().maxCoeff());
    ++fixtures;
  }
  return {structure_ok && worst < 1e-12,
          std::to_string(fixtures) + " fixtures, max diff " + fmt("%.3g", worst)};
}

// 6. Logistic gradient against central differences.
Outcome gradient_check() {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const double h = 1e-5;
  double worst = 0.0;
  for (int problem = 0; problem < 20; ++problem) {
    const int n = 10 + problem * 3;
    const int d = 1 + problem % 6;
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = coin(rng);
    Eigen::VectorXd w(d);
    for (int j = 0; j < d; ++j) w(j) = gauss(rng);
    const double b = gauss(rng);
    const double l2 = problem % 2 ? 1e-4 : 0.1;
    const auto g = logistic_gradient(x, y, w, b, l2);
    Eigen::VectorXd analytic(d + 1), numeric(d + 1);
    analytic << g.weights, g.bias;
    for (int j = 0; j < d; ++j) {
      Eigen::VectorXd wp = w, wm = w;
      wp(j) += h;
      wm(j) -= h;
      numeric(j) = (logistic_loss(x, y, wp, b, l2) - logistic_loss(x, y, wm, b, l2)) / (2 * h);
    }
    numeric(d) = (logistic_loss(x, y, w, b + h, l2) - logistic_loss(x, y, w, b - h, l2)) / (2 * h);
    const double rel = (analytic - numeric).norm() / std::max(analytic.norm(), numeric.norm());
    worst = std::max(worst, rel);
  }
  return {worst < 1e-6, "20 problems, max relative error " + fmt("%.3g", worst)};
}

// Shared runs for criteria 7 and 8.
struct RealRun {
  std::optional<ExperimentReport> report;
  std::string error;
  double seconds = 0.0;
};

RealRun run_real(const fs::path& data, const fs::path& recipe, const std::string& name) {
  RealRun out;
  if (!fs::exists(data)) {
    out.error = "missing data file " + data.string();
    return out;
  }
  ExperimentConfig cfg;
  cfg.datasets.push_back({name, data, recipe});
  cfg.models.push_back({"lr", ModelSpec{}});
  cfg.methods = {Method::Original, Method::FairEdu};
  cfg.repetitions = 10;
  cfg.base_seed = 0;
  const auto start = std::chrono::steady_clock::now();
  try {
    out.report = run_experiment(cfg);
  } catch (const Error& e) {
    out.error = std::string(e.kind()) + ": " + e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::optional<double> mean_of(const ExperimentReport& r, const std::string& ds, const std::string& sens,
                              const std::string& method, const std::string& metric) {
  return r.cell({ds, sens, "lr", method}).metrics.at(metric).mean;
}

// 7. Adult + LR fairness reduction.
Outcome adult_fairness(const RealRun& run) {
  if (!run.report) return {false, run.error};
  const auto& r = *run.report;
  bool ok = run.seconds <= 300.0;
  std::ostringstream d;
  for (const std::string sens : {"sex", "race"}) {
    for (const std::string metric : {"abs_one_minus_di", "spd"}) {
      const auto before = mean_of(r, "adult", sens, "original", metric);
      const auto after = mean_of(r, "adult", sens, "fairedu", metric);
      if (!before || !after) {
        ok = false;
        d << sens << "/" << metric << " undefined; ";
        continue;
      }
      const double reduction = 1.0 - *after / *before;
      ok = ok && reduction >= 0.5;
      d << sens << " " << metric << " " << fmt("%.4f", *before) << "->" << fmt("%.4f", *after) << " ("
        << fmt("%.1f", 100 * reduction) << "% less); ";
    }
  }
  d << fmt("%.0f", run.seconds) << "s";
  return {ok, d.str()};
}

// 8. Accuracy and recall cost on the same runs.
Outcome adult_tradeoff(const RealRun& run) {
  if (!run.report) return {false, run.error};
  const auto& r = *run.report;
  const auto acc0 = mean_of(r, "adult", "sex", "original", "acc");
  const auto acc1 = mean_of(r, "adult", "sex", "fairedu", "acc");
  const auto rec0 = mean_of(r, "adult", "sex", "original", "recall");
  const auto rec1 = mean_of(r, "adult", "sex", "fairedu", "recall");
  if (!acc0 || !acc1 || !rec0 || !rec1) return {false, "accuracy or recall undefined"};
  const double acc_drop = *acc0 - *acc1;
  const double rec_drop = *rec0 - *rec1;
  return {acc_drop <= 0.05 && rec_drop <= 0.15, "accuracy " + fmt("%.4f", *acc0) + "->" + fmt("%.4f", *acc1) +
                                                    " (drop " + fmt("%.4f", acc_drop) + "), recall " +
                                                    fmt("%.4f", *rec0) + "->" + fmt("%.4f", *rec1) + " (drop " +
                                                    fmt("%.4f", rec_drop) + ")"};
}

// 9. COMPAS + LR.
Outcome compas_fairness(const RealRun& run) {
  if (!run.report) return {false, run.error};
  const auto& r = *run.report;
  bool ok = true;
  std::ostringstream d;
  for (const std::string sens : {"race", "sex"}) {
    const auto before = mean_of(r, "compas", sens, "original", "abs_one_minus_di");
    const auto after = mean_of(r, "compas", sens, "fairedu", "abs_one_minus_di");
    if (!before || !after) {
      ok = false;
      d << sens << " undefined; ";
      continue;
    }
    ok = ok && *after < *before;
    if (sens == "race") ok = ok && *after <= 0.15;
    d << sens << " |1-DI| " << fmt("%.4f", *before) << "->" << fmt("%.4f", *after) << "; ";
  }
  d << fmt("%.0f", run.seconds) << "s";
  return {ok, d.str()};
}

// 10. Synthetic ablation with a paired sign test.
Outcome synthetic_ablation() {
  const auto start = std::chrono::steady_clock::now();
  const Dataset ds = synthetic::ablation(2000, 31337);
  ExperimentConfig cfg;
  cfg.models.push_back({"lr", ModelSpec{}});
  cfg.methods = {Method::Original, Method::FairEdu};
  cfg.repetitions = 20;
  cfg.base_seed = 100;
  const ExperimentReport r = run_experiment(cfg, {{"synthetic", ds}});
  const auto& orig = r.cell({"synthetic", "a", "lr", "original"});
  const auto& fair = r.cell({"synthetic", "a", "lr", "fairedu"});
  int wins = 0, decided = 0;
  for (std::size_t t = 0; t < orig.per_trial.size(); ++t) {
    const auto& a = orig.per_trial[t];
    const auto& b = fair.per_trial[t];
    if (!a || !b || !a->spd || !b->spd || *a->spd == *b->spd) continue;
    ++decided;
    wins += *b->spd < *a->spd;
  }
  const double p = decided > 0 ? oracle::sign_test_p(wins, decided) : 1.0;
  const auto m0 = orig.metrics.at("spd").mean;
  const auto m1 = fair.metrics.at("spd").mean;
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = m0 && m1 && *m1 < *m0 && p < 0.05 && seconds <= 30.0;
  return {ok, "SPD " + fmt("%.4f", m0.value_or(NAN)) + "->" + fmt("%.4f", m1.value_or(NAN)) + ", " +
                  std::to_string(wins) + "/" + std::to_string(decided) + " paired wins, sign test p=" +
                  fmt("%.3g", p) + ", " + fmt("%.1f", seconds) + "s"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path data_dir = FAIREDU_SOURCE_DIR "/data";
  const fs::path recipe_dir = FAIREDU_SOURCE_DIR "/recipes";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string item; std::getline(ss, item, ',');) only.insert(std::stoi(item));
    } else if (arg == "--data-dir" && i + 1 < argc) {
      data_dir = argv[++i];
    } else {
      std::fprintf(stderr, "usage: acceptance [--only N[,N...]] [--data-dir DIR]\n");
      return 2;
    }
  }
  const auto wanted = [&](int n) { return only.empty() || only.count(n) > 0; };

  std::optional<RealRun> adult, compas;
  const auto adult_run = [&]() -> const RealRun& {
    if (!adult) adult = run_real(data_dir / "adult.csv", recipe_dir / "adult.json", "adult");
    return *adult;
  };
  const auto compas_run = [&]() -> const RealRun& {
    if (!compas) compas = run_real(data_dir / "compas.csv", recipe_dir / "compas.json", "compas");
    return *compas;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"metric oracle equivalence (exhaustive n <= 6)", metric_oracle},
      {"OLS matches normal-equations oracle (1000 systems)", ols_oracle},
      {"t CDF: t=0, Cauchy and normal limits", t_cdf},
      {"transform orthogonality and refit slopes (50 datasets)", transform_orthogonality},
      {"single-feature mode equals multi-feature mode for k=1", ltdd_reduction},
      {"logistic gradient vs central differences", gradient_check},
      {"Adult LR R=10: |1-DI| and SPD reduced by >= 50%", [&] { return adult_fairness(adult_run()); }},
      {"Adult LR R=10: accuracy drop <= 0.05, recall drop <= 0.15", [&] { return adult_tradeoff(adult_run()); }},
      {"COMPAS LR R=10: race |1-DI| <= 0.15, sex and race reduced", [&] { return compas_fairness(compas_run()); }},
      {"synthetic ablation: SPD lower, paired sign test p < 0.05", synthetic_ablation},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2d  %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
