#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "fairedu/csv.hpp"
#include "fairedu/error.hpp"
#include "fairedu/experiment.hpp"
#include "fairedu/transform.hpp"
#include "support/synthetic.hpp"

using namespace fairedu;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(int reps) {
  ExperimentConfig cfg;
  cfg.models.push_back({"lr", ModelSpec{}});
  cfg.repetitions = reps;
  cfg.base_seed = 17;
  return cfg;
}

std::vector<std::pair<std::string, Dataset>> planted_data() {
  synthetic::Planted p;
  p.rows = 400;
  p.sensitive = 2;
  p.features = 3;
  p.dependent = 2;
  p.seed = 21;
  return {{"planted", synthetic::planted(p)}};
}

}  // namespace

TEST_CASE("percent change and verdicts") {
  CHECK(*percent_change(0.5894, 0.172) == doctest::Approx(-70.8177).epsilon(1e-5));
  CHECK(verdict(0.5894, 0.172) == Verdict::Win);
  CHECK(*percent_change(0.036, 0.045) == doctest::Approx(25.0));
  CHECK(verdict(0.036, 0.045) == Verdict::Loss);
  CHECK(*percent_change(0.3, 0.3) == 0.0);
  CHECK(verdict(0.3, 0.3) == Verdict::Tie);
  CHECK(verdict(0.3, 0.30005) == Verdict::Tie);
  CHECK_FALSE(percent_change(0.0, 0.1).has_value());
  CHECK(*percent_change(0.0, 0.0) == 0.0);
}

TEST_CASE("summaries over defined trials") {
  const auto s = summarize({0.1, 0.2, 0.3});
  CHECK(*s.mean == doctest::Approx(0.2));
  CHECK(*s.stddev == doctest::Approx(0.1));
  CHECK(s.defined == 3);
  const auto gaps = summarize({0.4, std::nullopt, 0.6, std::nullopt});
  CHECK(*gaps.mean == doctest::Approx(0.5));
  CHECK(gaps.undefined == 2);
  CHECK(*summarize({0.25}).stddev == 0.0);
  CHECK_FALSE(summarize({std::nullopt}).mean.has_value());
  const auto same = summarize({0.1, 0.1, 0.1});
  CHECK(*same.mean >= *same.min);
  CHECK(*same.mean <= *same.max);
}

TEST_CASE("one trial reproduces the single pipeline run") {
  auto cfg = small_config(1);
  const auto data = planted_data();
  const ExperimentReport report = run_experiment(cfg, data);

  const std::uint64_t seed = cfg.base_seed;
  const SplitPair pair = split(data[0].second, cfg.train_fraction, seed);
  const DebiasedSplit d = debias_split(pair);
  ModelSpec spec;
  spec.seed = seed;
  const TrainedModel m = train(spec, d.train.features(), d.train.labels());
  const Eigen::VectorXi pred = predict(m, d.test.features());
  const Eigen::VectorXi truth = d.test.labels().cast<int>();
  const MetricReport want = evaluate(tally(truth, pred, d.test.group("s1").cast<int>()));

  const auto& cell = report.cell({"planted", "s1", "lr", "fairedu"});
  CHECK(cell.trials == 1);
  for (const auto& name : metric_names()) CHECK(cell.metrics.at(name).mean == metric_value(want, name));
}

TEST_CASE("report layout and percent change of the baseline") {
  const ExperimentReport report = run_experiment(small_config(3), planted_data());
  // 2 sensitive features x (original + fairedu + ltdd)
  CHECK(report.cells.size() == 6);
  CHECK(std::is_sorted(report.cells.begin(), report.cells.end(),
                       [](const CellResult& a, const CellResult& b) { return a.key < b.key; }));
  for (const auto& c : report.cells) {
    CHECK(c.trials == 3);
    CHECK(c.failed_trials == 0);
    if (c.key.method == "original") {
      for (const auto& [name, s] : c.metrics) {
        if (s.mean) CHECK(*s.percent_change == 0.0);
      }
    }
    for (const auto& [name, s] : c.metrics) {
      if (s.mean) {
        CHECK(*s.mean >= *s.min);
        CHECK(*s.mean <= *s.max);
      }
    }
  }
  CHECK_FALSE(report.any_cell_failed());
  CHECK_THROWS_AS(report.cell({"planted", "s9", "lr", "original"}), ConfigError);
}

TEST_CASE("original and residualized runs see the same number of features") {
  const auto data = planted_data();
  const SplitPair pair = split(data[0].second, 0.85, 1);
  CHECK(drop_sensitive(pair.train).features().cols() == debias_split(pair).train.features().cols());
  CHECK(drop_sensitive(pair.train).features().cols() ==
        debias_split(pair, {PlanMode::SingleFeature, "s0", 0.05}).train.features().cols());
}

TEST_CASE("identical configs give byte-identical reports, whatever the thread count") {
  auto cfg = small_config(4);
  const auto data = planted_data();
  const std::string a = render_report(run_experiment(cfg, data), ReportFormat::Json);
  const std::string b = render_report(run_experiment(cfg, data), ReportFormat::Json);
  cfg.threads = 3;
  const std::string c = render_report(run_experiment(cfg, data), ReportFormat::Json);
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("more repetitions change only the averaging") {
  const auto data = planted_data();
  const ExperimentReport one = run_experiment(small_config(1), data);
  const ExperimentReport two = run_experiment(small_config(2), data);
  for (std::size_t i = 0; i < one.cells.size(); ++i) {
    const auto& c1 = one.cells[i];
    const auto& c2 = two.cells[i];
    CHECK(c1.key == c2.key);
    for (const auto& name : metric_names()) {
      const auto first = c2.per_trial[0] ? metric_value(*c2.per_trial[0], name) : std::nullopt;
      CHECK(c1.metrics.at(name).mean == first);
    }
  }
}

TEST_CASE("comparison table") {
  const ExperimentReport report = run_experiment(small_config(2), planted_data());
  const auto rows = compare(report, "original");
  CHECK(rows.size() == 2 * 2 * 4);  // sensitive x method x fairness metric
  int total = 0;
  for (const auto& [method, wtl] : win_tie_loss(rows)) total += wtl[0] + wtl[1] + wtl[2];
  CHECK(total == static_cast<int>(rows.size()));
  CHECK(render_comparison(rows).find("W/T/L fairedu") != std::string::npos);
  CHECK_THROWS_AS(compare(report, "reweighing"), ConfigError);
}

TEST_CASE("renderers") {
  const ExperimentReport report = run_experiment(small_config(2), planted_data());
  SUBCASE("json is stable and parses") {
    const std::string text = render_report(report, ReportFormat::Json);
    CHECK(text == render_report(report, ReportFormat::Json));
    const auto j = nlohmann::json::parse(text);
    CHECK(j["cells"].size() == report.cells.size());
  }
  SUBCASE("csv round-trips through a parser") {
    std::istringstream in(render_report(report, ReportFormat::Csv));
    const auto rows = csv::read(in);
    REQUIRE(rows.size() == report.cells.size() + 1);
    const auto col = std::find(rows[0].begin(), rows[0].end(), "spd_mean") - rows[0].begin();
    for (std::size_t i = 0; i < report.cells.size(); ++i) {
      const auto mean = report.cells[i].metrics.at("spd").mean;
      CHECK(std::stod(rows[i + 1][static_cast<std::size_t>(col)]) == doctest::Approx(*mean).epsilon(1e-4));
    }
  }
  SUBCASE("markdown has one row per cell plus the header") {
    std::istringstream in(render_report(report, ReportFormat::Markdown));
    int table_rows = 0;
    for (std::string line; std::getline(in, line);) {
      if (line.rfind("| ", 0) == 0) ++table_rows;
    }
    CHECK(table_rows == static_cast<int>(report.cells.size()) + 1);
  }
  SUBCASE("atomic emission") {
    const fs::path dir = fs::temp_directory_path() / "fairedu_report_test";
    fs::create_directories(dir);
    emit_report(report, ReportFormat::Markdown, dir / "r.md");
    CHECK(fs::exists(dir / "r.md"));
    CHECK_FALSE(fs::exists(dir / "r.md.tmp"));
    CHECK_THROWS_AS(emit_report(report, ReportFormat::Json, dir / "missing" / "r.json"), IoError);
    fs::remove_all(dir);
  }
  CHECK_THROWS_AS(report_format_from_string("xml"), ConfigError);
}

TEST_CASE("a cell whose every trial fails is reported, not thrown") {
  std::ostringstream csv;
  csv << "sex,gender,x,y\n";
  for (int i = 0; i < 200; ++i) {
    const bool m = i % 3 == 0;
    csv << (m ? "m" : "f") << "," << (m ? "m" : "f") << "," << (i % 17) + (m ? 2.0 : 0.0) << ","
        << (i % 2 ? "yes" : "no") << "\n";
  }
  std::istringstream in(csv.str());
  const Dataset ds = parse_csv(in, SchemaConfig::from_json(nlohmann::json::parse(R"({
    "label": {"column": "y", "favorable": "yes"},
    "sensitive": [{"column": "sex", "privileged": "m"}, {"column": "gender", "privileged": "m"}]})")));
  auto cfg = small_config(2);
  cfg.methods = {Method::Original, Method::FairEdu};
  const ExperimentReport report = run_experiment(cfg, {{"dup", ds}});
  const auto& fair = report.cell({"dup", "sex", "lr", "fairedu"});
  CHECK(fair.fully_failed());
  CHECK(fair.errors.front().find("RankError") == 0);
  CHECK_FALSE(report.cell({"dup", "sex", "lr", "original"}).fully_failed());
  CHECK(report.any_cell_failed());
}

TEST_CASE("config parsing") {
  const auto j = nlohmann::json::parse(R"({
    "datasets": [{"name": "a", "data": "d/a.csv", "recipe": "r/a.json"}],
    "models": [{"name": "forest", "family": "rf", "trees": 7}],
    "methods": ["original", "ltdd"],
    "repetitions": 5, "base_seed": 9, "train_fraction": 0.7})");
  const auto cfg = ExperimentConfig::from_json(j, "/base");
  CHECK(cfg.datasets[0].data == fs::path("/base/d/a.csv"));
  CHECK(cfg.models[0].spec.forest.trees == 7);
  CHECK(cfg.methods == std::vector<Method>{Method::Original, Method::Ltdd});
  CHECK(cfg.repetitions == 5);
  CHECK(cfg.base_seed == 9);
  CHECK(cfg.train_fraction == 0.7);

  auto bad = j;
  bad["repetitions"] = 0;
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
  bad = j;
  bad["methods"] = nlohmann::json::array();
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
  bad = j;
  bad["methods"] = {"fairway"};
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
}
