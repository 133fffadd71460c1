// fairedu command-line front end: debias, evaluate, experiment, inspect-plan.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include "fairedu/error.hpp"
#include "fairedu/experiment.hpp"
#include "fairedu/learners.hpp"
#include "fairedu/metrics.hpp"
#include "fairedu/tabular.hpp"
#include "fairedu/transform.hpp"

namespace fs = std::filesystem;
using namespace fairedu;

namespace {

// Exit codes.
constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kCellFailed = 2;

void print_error(const std::string& kind, const std::string& message) {
  nlohmann::json j{{"error", kind}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

void print_resolved(const nlohmann::ordered_json& j) { std::cout << "resolved: " << j.dump() << "\n"; }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) throw IoError(std::string(what) + " '" + path.string() + "' does not exist");
}

void require_writable_dir(const fs::path& out) {
  const fs::path dir = out.parent_path().empty() ? fs::path(".") : out.parent_path();
  if (!fs::is_directory(dir)) throw IoError("output directory '" + dir.string() + "' does not exist");
}

fs::path side_table_path(const fs::path& out) {
  fs::path p = out;
  p.replace_extension();
  p += ".sensitive.csv";
  return p;
}

unsigned thread_cap() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FAIREDU_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    } catch (const std::exception&) {
      throw ConfigError(std::string("FAIREDU_THREADS must be a positive integer, got '") + env + "'");
    }
  }
  return n;
}

struct CommonFlags {
  std::string data;
  std::string recipe;
  std::string mode = "multi";
  std::string target;
  std::uint64_t seed = 0;
  double train_fraction = 0.85;
  double threshold = 0.05;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--data", f.data, "CSV data file")->required();
  cmd->add_option("--recipe", f.recipe, "JSON schema recipe")->required();
  cmd->add_option("--seed", f.seed, "split and model seed");
  cmd->add_option("--train-fraction", f.train_fraction, "training share of the split")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--threshold", f.threshold, "significance level for the regression gate")
      ->check(CLI::Range(0.0, 1.0));
}

PlanOptions plan_options(const CommonFlags& f) {
  PlanOptions o;
  o.mode = plan_mode_from_string(f.mode);
  o.threshold = f.threshold;
  if (o.mode == PlanMode::SingleFeature) {
    if (f.target.empty()) throw ConfigError("--mode ltdd requires --target");
    o.target = f.target;
  } else if (!f.target.empty()) {
    throw ConfigError("--target is only valid with --mode ltdd");
  }
  return o;
}

std::string render(const std::function<void(std::ostream&)>& fn) {
  std::ostringstream ss;
  fn(ss);
  return ss.str();
}

// --- debias ----------------------------------------------------------------------

struct DebiasFlags {
  CommonFlags common;
  std::string out_train, out_test, out_plan;
};

int cmd_debias(const DebiasFlags& f) {
  const PlanOptions options = plan_options(f.common);
  require_file(f.common.data, "data file");
  require_file(f.common.recipe, "recipe");
  for (const auto& p : {f.out_train, f.out_test, f.out_plan}) require_writable_dir(p);

  const SchemaConfig recipe = SchemaConfig::load(f.common.recipe);
  const Dataset ds = load_csv(f.common.data, recipe);
  const SplitPair pair = split(ds, f.common.train_fraction, f.common.seed);
  const DebiasedSplit out = debias_split(pair, options);

  // Render everything before the first write so a failure leaves no files.
  const std::string train_csv = render([&](std::ostream& o) { write_encoded_csv(out.train, o); });
  const std::string test_csv = render([&](std::ostream& o) { write_encoded_csv(out.test, o); });
  const std::string train_side = render([&](std::ostream& o) { write_side_table_csv(out.train, o); });
  const std::string test_side = render([&](std::ostream& o) { write_side_table_csv(out.test, o); });
  const std::string plan_json = out.plan.to_json().dump(2) + "\n";

  write_file_atomic(f.out_train, train_csv);
  write_file_atomic(side_table_path(f.out_train), train_side);
  write_file_atomic(f.out_test, test_csv);
  write_file_atomic(side_table_path(f.out_test), test_side);
  write_file_atomic(f.out_plan, plan_json);

  nlohmann::ordered_json r;
  r["command"] = "debias";
  r["seed"] = f.common.seed;
  r["train_fraction"] = f.common.train_fraction;
  r["threshold"] = options.threshold;
  r["mode"] = to_string(options.mode);
  if (!options.target.empty()) r["target"] = options.target;
  r["rows"] = {{"dropped", ds.dropped_rows}, {"train", out.train.rows()}, {"test", out.test.rows()}};
  r["applied"] = out.plan.applied_count();
  r["features"] = out.plan.features.size();
  print_resolved(r);
  return kOk;
}

// --- evaluate --------------------------------------------------------------------

struct EvaluateFlags {
  CommonFlags common;
  std::string model = "logistic";
  std::string method = "fairedu";
  std::string plan;
  std::string out;
};

int cmd_evaluate(const EvaluateFlags& f) {
  const Method method = method_from_string(f.method);
  CommonFlags common = f.common;
  if (method == Method::Ltdd) common.mode = "ltdd";
  ModelSpec spec;
  spec.family = model_family_from_string(f.model);
  spec.seed = common.seed;
  spec.validate();
  std::optional<PlanOptions> options;
  if (method != Method::Original) options = plan_options(common);
  if (!f.plan.empty() && method == Method::Original) throw ConfigError("--plan cannot be used with --method original");
  require_file(common.data, "data file");
  require_file(common.recipe, "recipe");
  if (!f.plan.empty()) require_file(f.plan, "plan");
  if (!f.out.empty()) require_writable_dir(f.out);

  const SchemaConfig recipe = SchemaConfig::load(common.recipe);
  const Dataset ds = load_csv(common.data, recipe);
  const SplitPair pair = split(ds, common.train_fraction, common.seed);

  Dataset train_set, test_set;
  std::optional<DebiasPlan> plan;
  if (method == Method::Original) {
    train_set = drop_sensitive(pair.train);
    test_set = drop_sensitive(pair.test);
  } else {
    if (!f.plan.empty()) {
      nlohmann::json pj;
      try {
        pj = nlohmann::json::parse(read_file(f.plan));
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("plan '" + f.plan + "': " + e.what());
      }
      plan = DebiasPlan::from_json(pj);
    } else {
      plan = fit_plan(pair.train, *options);
    }
    train_set = apply_plan(*plan, pair.train);
    test_set = apply_plan(*plan, pair.test);
  }

  const TrainedModel model = train(spec, train_set.features(), train_set.labels());
  const Eigen::VectorXi pred = predict(model, test_set.features());
  const Eigen::VectorXi truth = (test_set.labels().array() != 0.0).cast<int>();

  std::vector<std::string> groups = test_set.sensitive_names();
  if (method == Method::Ltdd) groups = {plan->target};
  nlohmann::ordered_json metrics;
  for (const auto& g : groups) {
    const Eigen::VectorXi a = (test_set.group(g).array() != 0.0).cast<int>();
    metrics[g] = evaluate(tally(truth, pred, a)).to_json();
  }

  nlohmann::ordered_json r;
  r["command"] = "evaluate";
  r["seed"] = common.seed;
  r["train_fraction"] = common.train_fraction;
  r["threshold"] = plan ? plan->threshold : common.threshold;
  r["method"] = to_string(method);
  if (plan) r["mode"] = to_string(plan->mode);
  if (plan && !plan->target.empty()) r["target"] = plan->target;
  r["model"] = spec.to_json();
  print_resolved(r);

  nlohmann::ordered_json doc{{"metrics", metrics}};
  if (plan) doc["applied"] = plan->applied_count();
  const std::string text = doc.dump(2) + "\n";
  if (f.out.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(f.out, text);
  }
  return kOk;
}

// --- experiment ------------------------------------------------------------------

struct ExperimentFlags {
  std::string config;
  std::optional<int> reps;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  std::optional<double> train_fraction;
  std::string format = "json";
  std::string out;
  bool keep_sensitive = false;
};

int cmd_experiment(const ExperimentFlags& f) {
  const ReportFormat format = report_format_from_string(f.format);
  require_file(f.config, "experiment config");
  if (!f.out.empty()) require_writable_dir(f.out);

  ExperimentConfig cfg = ExperimentConfig::load(f.config);
  if (f.reps) cfg.repetitions = *f.reps;
  if (f.seed) cfg.base_seed = *f.seed;
  if (f.threshold) cfg.threshold = *f.threshold;
  if (f.train_fraction) cfg.train_fraction = *f.train_fraction;
  if (f.keep_sensitive) cfg.original_keeps_sensitive = true;
  cfg.threads = thread_cap();
  cfg.validate();
  for (const auto& d : cfg.datasets) {
    require_file(d.data, "data file");
    require_file(d.recipe, "recipe");
  }

  nlohmann::ordered_json r;
  r["command"] = "experiment";
  r["base_seed"] = cfg.base_seed;
  r["repetitions"] = cfg.repetitions;
  r["train_fraction"] = cfg.train_fraction;
  r["threshold"] = cfg.threshold;
  r["original_keeps_sensitive"] = cfg.original_keeps_sensitive;
  r["threads"] = cfg.threads;
  print_resolved(r);

  const ExperimentReport report = run_experiment(cfg);
  const std::string text = render_report(report, format);
  if (f.out.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(f.out, text);
  }
  const bool has_baseline = std::any_of(report.cells.begin(), report.cells.end(),
                                        [](const CellResult& c) { return c.key.method == "original"; });
  if (has_baseline) std::cout << render_comparison(compare(report, "original"));
  for (const auto& c : report.cells) {
    if (c.fully_failed()) {
      print_error("CellFailed", c.key.dataset + "/" + c.key.sensitive + "/" + c.key.model + "/" + c.key.method +
                                    ": " + (c.errors.empty() ? std::string("unknown") : c.errors.front()));
    }
  }
  return report.any_cell_failed() ? kCellFailed : kOk;
}

// --- inspect-plan ----------------------------------------------------------------

int cmd_inspect_plan(const std::string& path) {
  require_file(path, "plan");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("plan '" + path + "': " + e.what());
  }
  const DebiasPlan plan = DebiasPlan::from_json(j);

  std::vector<const FeatureAdjustment*> rows;
  for (const auto& f : plan.features) rows.push_back(&f);
  std::stable_sort(rows.begin(), rows.end(), [](const FeatureAdjustment* a, const FeatureAdjustment* b) {
    if (a->applied != b->applied) return a->applied;
    return a->p_value < b->p_value;
  });

  nlohmann::ordered_json r;
  r["command"] = "inspect-plan";
  r["mode"] = to_string(plan.mode);
  if (!plan.target.empty()) r["target"] = plan.target;
  r["threshold"] = plan.threshold;
  r["fitted_on"] = plan.fitted_on;
  print_resolved(r);

  std::cout << "feature,applied,p_value,intercept";
  for (const auto& s : plan.sensitive_names) std::cout << ",slope[" << s << "]";
  std::cout << "\n";
  for (const auto* f : rows) {
    std::cout << f->name << "," << (f->applied ? "yes" : "no") << "," << format_double(f->p_value) << ","
              << format_double(f->intercept);
    for (Eigen::Index m = 0; m < f->slopes.size(); ++m) std::cout << "," << format_double(f->slopes(m));
    std::cout << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regression-based removal of sensitive-feature dependence from tabular data"};
  app.require_subcommand(1);

  DebiasFlags debias;
  auto* c_debias = app.add_subcommand("debias", "split, fit a debias plan on train, transform both partitions");
  add_common(c_debias, debias.common);
  c_debias->add_option("--mode", debias.common.mode, "multi or ltdd")->check(CLI::IsMember({"multi", "ltdd"}));
  c_debias->add_option("--target", debias.common.target, "sensitive column for --mode ltdd");
  c_debias->add_option("--out-train", debias.out_train, "transformed training CSV")->required();
  c_debias->add_option("--out-test", debias.out_test, "transformed test CSV")->required();
  c_debias->add_option("--out-plan", debias.out_plan, "plan JSON")->required();

  EvaluateFlags eval;
  auto* c_eval = app.add_subcommand("evaluate", "one seeded split, train, predict and report metrics");
  add_common(c_eval, eval.common);
  c_eval->add_option("--target", eval.common.target, "sensitive column for --method ltdd");
  c_eval->add_option("--model", eval.model, "logistic, tree or forest");
  c_eval->add_option("--method", eval.method, "original, fairedu or ltdd")
      ->check(CLI::IsMember({"original", "fairedu", "ltdd"}));
  c_eval->add_option("--plan", eval.plan, "reuse a saved plan instead of fitting one");
  c_eval->add_option("--out", eval.out, "write the metric JSON here instead of stdout");

  ExperimentFlags exp;
  auto* c_exp = app.add_subcommand("experiment", "repeated seeded trials from a JSON config");
  c_exp->add_option("--config", exp.config, "experiment config JSON")->required();
  c_exp->add_option("--reps", exp.reps, "override the repetition count")->check(CLI::PositiveNumber);
  c_exp->add_option("--seed", exp.seed, "override the base seed");
  c_exp->add_option("--threshold", exp.threshold, "override the significance level")->check(CLI::Range(0.0, 1.0));
  c_exp->add_option("--train-fraction", exp.train_fraction, "override the training share")
      ->check(CLI::Range(0.0, 1.0));
  c_exp->add_option("--format", exp.format, "json, csv or markdown")
      ->check(CLI::IsMember({"json", "csv", "markdown"}));
  c_exp->add_option("--out", exp.out, "report path (stdout when omitted)");
  c_exp->add_flag("--original-keeps-sensitive", exp.keep_sensitive,
                  "train the original baseline with the sensitive columns as features");

  std::string plan_path;
  auto* c_inspect = app.add_subcommand("inspect-plan", "print a saved plan sorted by applied flag and p-value");
  c_inspect->add_option("--plan", plan_path, "plan JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("UsageError", e.what());
    return kFailure;
  }

  try {
    if (*c_debias) return cmd_debias(debias);
    if (*c_eval) return cmd_evaluate(eval);
    if (*c_exp) return cmd_experiment(exp);
    if (*c_inspect) return cmd_inspect_plan(plan_path);
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return kFailure;
  } catch (const std::exception& e) {
    print_error("InternalError", e.what());
    return kFailure;
  }
  return kFailure;
}
