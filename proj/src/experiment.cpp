#include "fairedu/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "fairedu/csv.hpp"
#include "fairedu/error.hpp"
#include "fairedu/transform.hpp"

namespace fairedu {

std::string to_string(Method m) {
  switch (m) {
    case Method::Original: return "original";
    case Method::FairEdu: return "fairedu";
    case Method::Ltdd: return "ltdd";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  if (s == "original") return Method::Original;
  if (s == "fairedu" || s == "multi") return Method::FairEdu;
  if (s == "ltdd") return Method::Ltdd;
  throw ConfigError("unknown method '" + s + "' (expected original, fairedu or ltdd)");
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Win: return "win";
    case Verdict::Tie: return "tie";
    case Verdict::Loss: return "loss";
  }
  return "unknown";
}

// --- configuration -------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (methods.empty()) throw ConfigError("at least one method is required");
  if (models.empty()) throw ConfigError("at least one model is required");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
  for (const auto& m : models) m.spec.validate();
  std::vector<std::string> names;
  for (const auto& m : models) names.push_back(m.name);
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end()) throw ConfigError("model names must be unique");
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  try {
    const auto& ds = j.at("datasets");
    for (const auto& d : ds) {
      DatasetSource src;
      src.data = resolve(d.at("data").get<std::string>());
      src.recipe = resolve(d.at("recipe").get<std::string>());
      src.name = d.value("name", src.data.stem().string());
      c.datasets.push_back(std::move(src));
    }
    if (j.contains("models")) {
      for (const auto& m : j.at("models")) {
        NamedModel nm;
        nm.spec = ModelSpec::from_json(m);
        nm.name = m.value("name", to_string(nm.spec.family));
        c.models.push_back(std::move(nm));
      }
    } else {
      c.models.push_back({"logistic", ModelSpec{}});
    }
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(method_from_string(m.get<std::string>()));
    }
    c.repetitions = j.value("repetitions", c.repetitions);
    c.base_seed = j.value("base_seed", c.base_seed);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.threshold = j.value("threshold", c.threshold);
    if (j.contains("sensitive")) c.sensitive = j.at("sensitive").get<std::vector<std::string>>();
    c.original_keeps_sensitive = j.value("original_keeps_sensitive", false);
    c.threads = j.value("threads", 1u);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
  if (c.datasets.empty()) throw ConfigError("experiment config lists no datasets");
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open experiment config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("experiment config '" + path.string() + "': " + e.what());
  }
  return from_json(j, path.parent_path());
}

// --- trials ----------------------------------------------------------------------

namespace {

struct TrialOutcome {
  CellKey key;
  std::optional<MetricReport> report;
  std::string error;
};

Eigen::VectorXi as_binary(const Eigen::VectorXd& v) { return (v.array() != 0.0).cast<int>(); }

Eigen::MatrixXd model_features(const Dataset& ds, bool with_sensitive) {
  if (!with_sensitive) return ds.features();
  const Eigen::MatrixXd f = ds.features();
  const Eigen::MatrixXd s = ds.sensitive_values();
  Eigen::MatrixXd out(f.rows(), f.cols() + s.cols());
  out << f, s;
  return out;
}

std::vector<TrialOutcome> run_trial(const ExperimentConfig& cfg, const std::string& ds_name, const Dataset& ds,
                                    const std::vector<std::string>& eval_sensitive, int trial) {
  const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(trial);
  std::vector<TrialOutcome> out;

  auto fail_all = [&](const std::string& model, const std::string& method,
                      const std::vector<std::string>& features, const std::string& msg) {
    for (const auto& s : features) out.push_back({{ds_name, s, model, method}, std::nullopt, msg});
  };

  std::optional<SplitPair> pair;
  std::string split_error;
  try {
    pair = split(ds, cfg.train_fraction, seed);
  } catch (const Error& e) {
    split_error = std::string(e.kind()) + ": " + e.what();
  }

  // Debiased partitions are shared by every model of the trial.
  std::optional<DebiasedSplit> multi;
  std::string multi_error;
  std::map<std::string, DebiasedSplit> single;
  std::map<std::string, std::string> single_error;
  if (pair) {
    if (std::find(cfg.methods.begin(), cfg.methods.end(), Method::FairEdu) != cfg.methods.end()) {
      try {
        multi = debias_split(*pair, {PlanMode::MultiFeature, "", cfg.threshold});
      } catch (const Error& e) {
        multi_error = std::string(e.kind()) + ": " + e.what();
      }
    }
    if (std::find(cfg.methods.begin(), cfg.methods.end(), Method::Ltdd) != cfg.methods.end()) {
      for (const auto& s : eval_sensitive) {
        try {
          single.emplace(s, debias_split(*pair, {PlanMode::SingleFeature, s, cfg.threshold}));
        } catch (const Error& e) {
          single_error[s] = std::string(e.kind()) + ": " + e.what();
        }
      }
    }
  }

  for (const auto& model : cfg.models) {
    ModelSpec spec = model.spec;
    spec.seed = seed;
    for (Method method : cfg.methods) {
      const std::string mname = to_string(method);
      if (!pair) {
        fail_all(model.name, mname, eval_sensitive, split_error);
        continue;
      }
      auto score = [&](const Dataset& train_set, const Dataset& test_set, bool with_sensitive,
                       const std::vector<std::string>& features) {
        try {
          const TrainedModel trained =
              fairedu::train(spec, model_features(train_set, with_sensitive), train_set.labels());
          const Eigen::VectorXi pred = predict(trained, model_features(test_set, with_sensitive));
          const Eigen::VectorXi truth = as_binary(test_set.labels());
          for (const auto& s : features) {
            const GroupOutcome go = tally(truth, pred, as_binary(test_set.group(s)));
            out.push_back({{ds_name, s, model.name, mname}, evaluate(go), {}});
          }
        } catch (const Error& e) {
          fail_all(model.name, mname, features, std::string(e.kind()) + ": " + e.what());
        }
      };
      switch (method) {
        case Method::Original:
          if (cfg.original_keeps_sensitive) {
            score(pair->train, pair->test, true, eval_sensitive);
          } else {
            score(drop_sensitive(pair->train), drop_sensitive(pair->test), false, eval_sensitive);
          }
          break;
        case Method::FairEdu:
          if (multi) {
            score(multi->train, multi->test, false, eval_sensitive);
          } else {
            fail_all(model.name, mname, eval_sensitive, multi_error);
          }
          break;
        case Method::Ltdd:
          for (const auto& s : eval_sensitive) {
            const auto it = single.find(s);
            if (it != single.end()) {
              score(it->second.train, it->second.test, false, {s});
            } else {
              fail_all(model.name, mname, {s}, single_error[s]);
            }
          }
          break;
      }
    }
  }
  return out;
}

std::vector<std::string> protocol_lines(const ExperimentConfig& cfg) {
  std::vector<std::string> lines;
  lines.push_back("repetitions: " + std::to_string(cfg.repetitions));
  lines.push_back("seeding: trial r uses seed " + std::to_string(cfg.base_seed) +
                  " + r for both the split and the model");
  lines.push_back("train_fraction: " + format_double(cfg.train_fraction));
  lines.push_back("significance threshold: " + format_double(cfg.threshold));
  lines.push_back(std::string("original baseline: sensitive columns ") +
                  (cfg.original_keeps_sensitive ? "kept as model features"
                                                : "removed from model features, kept for grouping"));
  lines.push_back("ltdd: single-attribute residualization, one run per sensitive feature");
  return lines;
}

}  // namespace

MetricSummary summarize(const std::vector<std::optional<double>>& values) {
  MetricSummary s;
  double sum = 0.0;
  for (const auto& v : values) {
    if (!v) {
      ++s.undefined;
      continue;
    }
    ++s.defined;
    sum += *v;
    s.min = s.min ? std::min(*s.min, *v) : *v;
    s.max = s.max ? std::max(*s.max, *v) : *v;
  }
  if (s.defined == 0) return s;
  const double mean = sum / s.defined;
  double ss = 0.0;
  for (const auto& v : values) {
    if (v) ss += (*v - mean) * (*v - mean);
  }
  // Rounding can push the mean a hair outside the observed range.
  s.mean = std::clamp(mean, *s.min, *s.max);
  s.stddev = s.defined > 1 ? std::sqrt(ss / (s.defined - 1)) : 0.0;
  return s;
}

std::optional<double> percent_change(double before, double after) {
  if (after == before) return 0.0;
  if (before == 0.0) return std::nullopt;
  return (after - before) / before * 100.0;
}

Verdict verdict(double before, double after) {
  if (std::abs(after - before) <= kTieTolerance) return Verdict::Tie;
  return after < before ? Verdict::Win : Verdict::Loss;
}

const CellResult& ExperimentReport::cell(const CellKey& key) const {
  for (const auto& c : cells) {
    if (c.key == key) return c;
  }
  throw ConfigError("report has no cell " + key.dataset + "/" + key.sensitive + "/" + key.model + "/" + key.method);
}

bool ExperimentReport::any_cell_failed() const {
  return std::any_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.fully_failed(); });
}

ExperimentReport run_experiment(const ExperimentConfig& config,
                                const std::vector<std::pair<std::string, Dataset>>& datasets) {
  config.validate();
  ExperimentReport report;
  report.protocol = protocol_lines(config);
  std::map<CellKey, CellResult> cells;

  for (const auto& [name, ds] : datasets) {
    std::vector<std::string> eval = config.sensitive;
    const auto available = ds.sensitive_names();
    if (eval.empty()) {
      eval = available;
    } else {
      eval.erase(std::remove_if(eval.begin(), eval.end(),
                                [&](const std::string& s) {
                                  return std::find(available.begin(), available.end(), s) == available.end();
                                }),
                 eval.end());
    }
    if (eval.empty()) throw ConfigError("dataset '" + name + "' has none of the requested sensitive features");

    const int reps = config.repetitions;
    std::vector<std::vector<TrialOutcome>> outcomes(static_cast<std::size_t>(reps));
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int r = next++; r < reps; r = next++) {
        outcomes[static_cast<std::size_t>(r)] = run_trial(config, name, ds, eval, r);
      }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(reps)));
    if (threads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }

    for (const auto& trial : outcomes) {
      for (const auto& o : trial) {
        auto& cell = cells[o.key];
        cell.key = o.key;
        ++cell.trials;
        cell.per_trial.push_back(o.report);
        if (!o.report) {
          ++cell.failed_trials;
          cell.errors.push_back(o.error);
        }
      }
    }
  }

  for (auto& [key, cell] : cells) {
    for (const auto& m : metric_names()) {
      std::vector<std::optional<double>> values;
      for (const auto& t : cell.per_trial) {
        if (t) values.push_back(metric_value(*t, m));
      }
      cell.metrics[m] = summarize(values);
    }
  }
  for (auto& [key, cell] : cells) {
    CellKey base = key;
    base.method = to_string(Method::Original);
    const auto it = cells.find(base);
    if (it == cells.end()) continue;
    for (auto& [m, summary] : cell.metrics) {
      const auto& before = it->second.metrics.at(m).mean;
      if (before && summary.mean) summary.percent_change = percent_change(*before, *summary.mean);
    }
  }
  for (auto& [key, cell] : cells) report.cells.push_back(std::move(cell));
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::vector<std::pair<std::string, Dataset>> loaded;
  for (const auto& src : config.datasets) {
    const SchemaConfig recipe = SchemaConfig::load(src.recipe);
    loaded.emplace_back(src.name, load_csv(src.data, recipe));
  }
  return run_experiment(config, loaded);
}

// --- comparison ------------------------------------------------------------------

namespace {
const std::vector<std::string> kFairnessMetrics{"abs_one_minus_di", "spd", "aod", "eod"};

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s(buf);
  return s == "-0.0000" ? "0.0000" : s;
}

std::string fixed4(const std::optional<double>& v) { return v ? fixed4(*v) : std::string{}; }

double round4(double v) {
  const double r = std::round(v * 1e4) / 1e4;
  return r == 0.0 ? 0.0 : r;
}

nlohmann::ordered_json json4(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(round4(*v)) : nlohmann::ordered_json(nullptr);
}
}  // namespace

std::vector<ComparisonRow> compare(const ExperimentReport& report, const std::string& baseline_method) {
  const bool present = std::any_of(report.cells.begin(), report.cells.end(),
                                   [&](const CellResult& c) { return c.key.method == baseline_method; });
  if (!present) throw ConfigError("baseline method '" + baseline_method + "' is not in the report");
  std::vector<ComparisonRow> rows;
  for (const auto& cell : report.cells) {
    if (cell.key.method == baseline_method) continue;
    CellKey base = cell.key;
    base.method = baseline_method;
    const auto it = std::find_if(report.cells.begin(), report.cells.end(),
                                 [&](const CellResult& c) { return c.key == base; });
    if (it == report.cells.end()) continue;
    for (const auto& m : kFairnessMetrics) {
      const auto& before = it->metrics.at(m).mean;
      const auto& after = cell.metrics.at(m).mean;
      if (!before || !after) continue;
      rows.push_back({cell.key, m, *before, *after, percent_change(*before, *after), verdict(*before, *after)});
    }
  }
  return rows;
}

std::map<std::string, std::array<int, 3>> win_tie_loss(const std::vector<ComparisonRow>& rows) {
  std::map<std::string, std::array<int, 3>> out;
  for (const auto& r : rows) ++out[r.key.method][static_cast<std::size_t>(r.verdict)];
  return out;
}

std::string render_comparison(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  out << "| dataset | sensitive | model | method | metric | baseline | value | change | verdict |\n";
  out << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out << "| " << r.key.dataset << " | " << r.key.sensitive << " | " << r.key.model << " | " << r.key.method
        << " | " << r.metric << " | " << fixed4(r.baseline) << " | " << fixed4(r.value) << " | "
        << (r.percent_change ? fixed4(*r.percent_change) + "%" : std::string("n/a")) << " | "
        << to_string(r.verdict) << " |\n";
  }
  for (const auto& [method, wtl] : win_tie_loss(rows)) {
    out << "\nW/T/L " << method << ": " << wtl[0] << "/" << wtl[1] << "/" << wtl[2];
  }
  out << "\n";
  return out.str();
}

// --- report rendering ------------------------------------------------------------

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  throw ConfigError("unknown report format '" + s + "' (expected json, csv or markdown)");
}

std::string render_report(const ExperimentReport& report, ReportFormat format) {
  std::ostringstream out;
  switch (format) {
    case ReportFormat::Json: {
      nlohmann::ordered_json j;
      j["protocol"] = report.protocol;
      nlohmann::ordered_json cells = nlohmann::ordered_json::array();
      for (const auto& c : report.cells) {
        nlohmann::ordered_json cj;
        cj["dataset"] = c.key.dataset;
        cj["sensitive"] = c.key.sensitive;
        cj["model"] = c.key.model;
        cj["method"] = c.key.method;
        cj["trials"] = c.trials;
        cj["failed_trials"] = c.failed_trials;
        nlohmann::ordered_json metrics;
        for (const auto& m : metric_names()) {
          const auto& s = c.metrics.at(m);
          metrics[m] = {{"mean", json4(s.mean)},       {"std", json4(s.stddev)},
                        {"min", json4(s.min)},         {"max", json4(s.max)},
                        {"defined", s.defined},        {"undefined", s.undefined},
                        {"percent_change", json4(s.percent_change)}};
        }
        cj["metrics"] = metrics;
        if (!c.errors.empty()) cj["errors"] = c.errors;
        cells.push_back(cj);
      }
      j["cells"] = cells;
      out << j.dump(2) << "\n";
      break;
    }
    case ReportFormat::Csv: {
      std::vector<std::string> header{"dataset", "sensitive", "model", "method", "trials", "failed_trials"};
      for (const auto& m : metric_names()) {
        for (const char* suffix : {"_mean", "_std", "_defined", "_pct_change"}) header.push_back(m + suffix);
      }
      csv::write_row(out, header);
      for (const auto& c : report.cells) {
        std::vector<std::string> row{c.key.dataset, c.key.sensitive, c.key.model, c.key.method,
                                     std::to_string(c.trials), std::to_string(c.failed_trials)};
        for (const auto& m : metric_names()) {
          const auto& s = c.metrics.at(m);
          row.push_back(fixed4(s.mean));
          row.push_back(fixed4(s.stddev));
          row.push_back(std::to_string(s.defined));
          row.push_back(fixed4(s.percent_change));
        }
        csv::write_row(out, row);
      }
      break;
    }
    case ReportFormat::Markdown: {
      out << "# Experiment report\n\n";
      for (const auto& line : report.protocol) out << "- " << line << "\n";
      out << "\nCells show the mean over defined trials; parentheses give the percent change against "
             "the original baseline.\n\n";
      out << "| dataset | sensitive | model | method | trials | failed | abs(1-DI) | SPD | AOD | EOD | ACC | Recall |\n";
      out << "|---|---|---|---|---|---|---|---|---|---|---|---|\n";
      for (const auto& c : report.cells) {
        out << "| " << c.key.dataset << " | " << c.key.sensitive << " | " << c.key.model << " | " << c.key.method
            << " | " << c.trials << " | " << c.failed_trials << " |";
        for (const char* m : {"abs_one_minus_di", "spd", "aod", "eod", "acc", "recall"}) {
          const auto& s = c.metrics.at(m);
          out << " ";
          if (!s.mean) {
            out << "n/a";
          } else {
            out << fixed4(*s.mean);
            if (c.key.method != "original" && s.percent_change) out << " (" << fixed4(*s.percent_change) << "%)";
          }
          out << " |";
        }
        out << "\n";
      }
      break;
    }
  }
  return out.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("failed writing '" + path.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move temp file onto '" + path.string() + "'");
  }
}

void emit_report(const ExperimentReport& report, ReportFormat format, const std::filesystem::path& path) {
  write_file_atomic(path, render_report(report, format));
}

}  // namespace fairedu
