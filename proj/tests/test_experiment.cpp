#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"

using namespace nmf_energy;

namespace {

ExperimentConfig small(ExperimentId e) {
  ExperimentConfig c;
  c.experiment = e;
  c.cases = 2;
  c.runs_per_case = 2;
  c.sizes = {1, 2};
  c.seed = 17;
  return c;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') cur += '"', ++i;
      else if (ch == '"') quoted = false;
      else cur += ch;
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::map<std::string, std::string>> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    const auto f = split_csv_line(line);
    EXPECT_EQ(f.size(), header.size());
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < f.size(); ++i) row[header[i]] = f[i];
    rows.push_back(row);
  }
  return rows;
}

CaseRecord record(const std::string& id, const std::string& method, double delta) {
  CaseRecord r;
  r.case_id = id;
  r.method = method;
  r.delta = delta;
  r.schedule = method == "hals" ? 0 : 1;
  return r;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c = small(ExperimentId::IV);
  c.schedules = {1, 2};
  c.levels = 6;
  const Json j = c;
  const auto back = Json::parse(j.dump()).get<ExperimentConfig>();
  EXPECT_EQ(Json(back), j);
  EXPECT_EQ(Json::parse(R"({"experiment": 3})").get<ExperimentConfig>().experiment, ExperimentId::III);
  EXPECT_THROW(parse_experiment_id("V"), InvalidArgument);
}

TEST(Config, RejectsFiveByFive) {
  ExperimentConfig c = small(ExperimentId::I);
  c.sizes = {4, 5};
  EXPECT_THROW(c.validate(), BudgetViolation);
  c.sizes = {4};
  EXPECT_NO_THROW(c.validate());
  EXPECT_THROW(run_experiment([] {
                 auto x = small(ExperimentId::I);
                 x.sizes = {5};
                 return x;
               }()),
               BudgetViolation);
}

TEST(Config, OtherValidation) {
  ExperimentConfig c = small(ExperimentId::III);
  c.qubo_bits_N = 1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small(ExperimentId::II);
  c.p = 5;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small(ExperimentId::I);
  c.schedules = {4};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = small(ExperimentId::IV);
  c.levels = 30;
  EXPECT_THROW(c.validate(), BudgetViolation);
}

TEST(Experiment, DeterministicAcrossThreadCounts) {
  const auto cfg = small(ExperimentId::I);
  setenv("NMF_ENERGY_THREADS", "1", 1);
  const std::string a = render_cases_csv(run_experiment(cfg));
  setenv("NMF_ENERGY_THREADS", "3", 1);
  const std::string b = render_cases_csv(run_experiment(cfg));
  unsetenv("NMF_ENERGY_THREADS");
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a.empty());
}

TEST(Experiment, AuditClosure) {
  const ExperimentReport r = run_experiment(small(ExperimentId::II));
  const auto rows = parse_csv(render_cases_csv(r));
  ASSERT_EQ(rows.size(), r.cases.size());
  for (const auto& agg : r.aggregates) {
    std::vector<double> d, t;
    std::size_t skipped = 0;
    for (const auto& row : rows) {
      if (row.at("set") != agg.set || std::stoul(row.at("n")) != agg.n ||
          std::stoul(row.at("m")) != agg.m || std::stoul(row.at("p")) != agg.p ||
          row.at("method") != agg.method || std::stoi(row.at("schedule")) != agg.schedule)
        continue;
      if (row.at("status") != "ok") {
        ++skipped;
        continue;
      }
      d.push_back(std::stod(row.at("delta")));
      t.push_back(std::stod(row.at("elapsed")));
    }
    EXPECT_EQ(d.size(), agg.count);
    EXPECT_EQ(skipped, agg.skipped);
    ASSERT_FALSE(d.empty());
    EXPECT_EQ(median_mad(d).median, agg.delta.median);
    EXPECT_EQ(median_mad(d).mad, agg.delta.mad);
    EXPECT_EQ(median_mad(t).median, agg.elapsed.median);
  }
  std::size_t total = 0;
  for (const auto& t : r.comparisons) total += t.records.size();
  EXPECT_EQ(total, 2u * 2u);  // two sets of two cases, one schedule
}

TEST(Experiment, QuboSkippedAtFourByFour) {
  ExperimentConfig c = small(ExperimentId::III);
  c.sizes = {4};
  c.cases = 1;
  c.runs_per_case = 1;
  const ExperimentReport r = run_experiment(c);
  bool saw = false;
  for (const auto& rec : r.cases)
    if (rec.method == "qubo") {
      saw = true;
      EXPECT_EQ(rec.status, "skipped");
      EXPECT_FALSE(rec.reason.empty());
    }
  EXPECT_TRUE(saw);
}

TEST(Experiment, VariableCountClosedForms) {
  ExperimentConfig c = small(ExperimentId::III);
  c.sizes = {1, 2, 3, 4};
  const auto rows = detail::variable_counts(c);
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& row : rows) {
    EXPECT_EQ(row.quardp_vars, row.p * (row.n + row.m) + 1);
    EXPECT_EQ(row.qubo_main_bits, 3 * row.p * (row.n + row.m));
    EXPECT_EQ(row.qubo_total, row.qubo_main_bits + row.qubo_aux);
    EXPECT_EQ(row.qubo_fits, 2 * row.qubo_total <= 954);
  }
  EXPECT_EQ(rows.back().n, 4u);
  EXPECT_EQ(rows.back().m, 8u);
  EXPECT_EQ(rows.back().quardp_vars, 37u);
  EXPECT_FALSE(rows[3].qubo_fits);
  EXPECT_TRUE(rows[0].qubo_fits);
}

TEST(Experiment, EveryExperimentRuns) {
  for (auto e : {ExperimentId::III, ExperimentId::IV}) {
    const ExperimentReport r = run_experiment(small(e));
    EXPECT_FALSE(r.cases.empty());
    EXPECT_FALSE(r.comparisons.empty());
    EXPECT_EQ(r.provenance.at("tool_version"), kToolVersion);
    for (const auto& c : r.cases)
      if (c.ok()) {
        EXPECT_GE(c.delta, 0.0);
      }
  }
}

TEST(Report, SyntheticWinnerCounts) {
  std::vector<CaseRecord> cases;
  for (int i = 0; i < 100; ++i) {
    const std::string id = "c" + std::to_string(i);
    cases.push_back(record(id, "hals", i < 78 ? 0.2 : 0.1));
    cases.push_back(record(id, "fusion", i < 78 ? 0.1 : 0.2));
  }
  const ComparisonTable t = detail::compare_methods(cases, "", 1, "hals", 0, "fusion", 20);
  EXPECT_EQ(t.summary.n_b, 78u);
  EXPECT_EQ(t.summary.n_w, 22u);
  EXPECT_NEAR(t.summary.p_value, 7.95e-9, 0.02 * 7.95e-9);
  EXPECT_EQ(t.name, "fusion_vs_hals_s1");
}

TEST(Report, EmptyComparison) {
  const ComparisonTable t = detail::compare_methods({}, "A", 1, "hals", 0, "fusion", 20);
  EXPECT_EQ(t.summary.n_b, 0u);
  EXPECT_EQ(t.summary.n_w, 0u);
  EXPECT_EQ(t.summary.p_value, 1.0);
  EXPECT_TRUE(t.histogram.empty());
}

TEST(Report, HistogramBins) {
  std::vector<CaseRecord> cases;
  const double news[] = {0.05, 0.05, 0.11};
  for (int i = 0; i < 3; ++i) {
    cases.push_back(record("c" + std::to_string(i), "hals", 0.1));
    cases.push_back(record("c" + std::to_string(i), "fusion", news[i]));
  }
  ExperimentReport r;
  r.config.histogram_width = 20;
  r.comparisons.push_back(detail::compare_methods(cases, "", 1, "hals", 0, "fusion", 20));
  const auto& h = r.comparisons[0].histogram;
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h.at(-1), 1u);
  EXPECT_EQ(h.at(2), 2u);
  EXPECT_EQ(render_histogram_csv(r.comparisons[0], 20), "bin_low,bin_high,count\n-20,0,1\n40,60,2\n");
}

TEST(Report, WritesAllArtifacts) {
  const ExperimentReport r = run_experiment(small(ExperimentId::I));
  const auto dir = std::filesystem::temp_directory_path() / "nmf_energy_report_test";
  std::filesystem::remove_all(dir);
  report_tables(r, dir);
  for (const char* f : {"cases.csv", "aggregates.json", "comparisons.csv", "provenance.json", "curve_fits.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  EXPECT_FALSE(std::filesystem::is_empty(dir / "histograms"));
  const Json prov = read_json_file(dir / "provenance.json");
  for (const char* k : {"config_hash", "seed", "tool_version", "calibration", "schedules"})
    EXPECT_TRUE(prov.contains(k)) << k;
  const auto cmp = parse_csv(render_comparisons_csv(r));
  ASSERT_FALSE(cmp.empty());
  for (const char* k : {"case_id", "delta_base", "delta_new", "winner", "pct_decrease"})
    EXPECT_TRUE(cmp[0].count(k)) << k;
  std::filesystem::remove_all(dir);
}
