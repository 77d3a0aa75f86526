#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "featsel/harness.hpp"

using namespace featsel;

namespace {

std::string temp_prefix(const std::string& stem) {
  return std::string(::testing::TempDir()) + stem;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

Dataset tiny_planted() {
  PlantedSpec spec;
  spec.informative_fields = {0, 3};
  spec.weight_scale = 2.0;
  spec.seed = 9;
  return generate_synthetic(6, 16, 3000, spec);
}

ExperimentPlan tiny_plan(std::vector<std::string> methods,
                         std::vector<std::uint64_t> seeds) {
  ExperimentPlan plan;
  plan.base.method = Method::ensemble;
  plan.base.ensemble_size = 2;
  plan.base.target_n = 2;
  plan.base.batch_size = 256;
  plan.base.pretrain_epochs = 1;
  plan.base.search_epochs = 1;
  plan.base.retrain_epochs = 1;
  plan.methods = std::move(methods);
  plan.seeds = std::move(seeds);
  return plan;
}

std::vector<std::string> csv_lines(const std::string& csv) {
  std::vector<std::string> lines;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

}  // namespace

TEST(MethodLabels, ParseIntoConfig) {
  PipelineConfig cfg;
  apply_method_label(cfg, "ensemble_min");
  EXPECT_EQ(cfg.method, Method::ensemble);
  EXPECT_EQ(cfg.aggregation, Aggregation::min);
  apply_method_label(cfg, "gumbel");
  EXPECT_EQ(cfg.method, Method::gumbel);
  apply_method_label(cfg, "all_features");
  EXPECT_EQ(cfg.method, Method::all_features);
  EXPECT_THROW(apply_method_label(cfg, "nonsense"), std::invalid_argument);
}

TEST(RunExperiment, SingleCellReporto) {
  const Dataset data = tiny_planted();
  const auto report = run_experiment(tiny_plan({"random"}, {3}), data, 1);
  ASSERT_EQ(report.cells.size(), 1u);
  EXPECT_TRUE(report.cells[0].ok);
  ASSERT_EQ(report.aggregates.size(), 1u);
  EXPECT_EQ(report.aggregates[0].n, 1u);
  EXPECT_DOUBLE_EQ(report.aggregates[0].auc_std, 0.0);  // n=1 flagged via n
  EXPECT_TRUE(report.aggregates[0].recovery_mean.has_value());
}

TEST(RunExperiment, FailedCellDoesNotSinkOthers) {
  const Dataset data = tiny_planted();
  auto plan = tiny_plan({"random", "gating"}, {3});
  plan.base.target_n = 99;  // invalid: every cell fails the precondition
  const auto report = run_experiment(plan, data, 1);
  EXPECT_FALSE(report.cells[0].ok);
  EXPECT_FALSE(report.cells[1].ok);
  EXPECT_FALSE(report.cells[0].error.empty());
  EXPECT_EQ(report.aggregates[0].n, 0u);

  // mixed: one valid method, one broken label is caught at parse time per cell
  auto plan2 = tiny_plan({"random"}, {3, 4});
  const auto ok = run_experiment(plan2, data, 2);
  EXPECT_TRUE(ok.cells[0].ok);
  EXPECT_TRUE(ok.cells[1].ok);
}

TEST(RunExperiment, ConcurrencyLevelDoesNotChangeResults) {
  const Dataset data = tiny_planted();
  const auto plan = tiny_plan({"random", "all_features"}, {1, 2});
  const auto serial = run_experiment(plan, data, 1);
  const auto parallel = run_experiment(plan, data, 2);
  EXPECT_EQ(report_to_json(serial).dump(), report_to_json(parallel).dump());
}

TEST(RunExperiment, ByteIdenticalReports) {
  const Dataset data = tiny_planted();
  const auto plan = tiny_plan({"ensemble_avg", "random"}, {1, 2});
  const auto a = run_experiment(plan, data, 2);
  const auto b = run_experiment(plan, data, 2);
  EXPECT_EQ(report_to_json(a).dump(), report_to_json(b).dump());
  EXPECT_EQ(report_to_csv(a), report_to_csv(b));
}

TEST(EmitReport, FilesAndCsvJsonAgreement) {
  const Dataset data = tiny_planted();
  const auto report =
      run_experiment(tiny_plan({"ensemble_avg", "random"}, {1, 2}), data, 2);
  const std::string prefix = temp_prefix("rep");
  const auto files = emit_report(report, prefix);

  const auto j = nlohmann::json::parse(file_bytes(files.json_path));
  const auto lines = csv_lines(file_bytes(files.csv_path));
  ASSERT_GE(lines.size(), 1u + 4u + 4u);  // header + 4 cells + mean/std rows
  EXPECT_EQ(lines[0], "kind,method,seed,status,test_auc,recovery,selected");

  // each cell row matches the JSON cell for the shared fields
  for (std::size_t i = 0; i < 4; ++i) {
    std::istringstream row(lines[1 + i]);
    std::string kind, method, seed, status, auc_s, rec_s, sel_s;
    std::getline(row, kind, ',');
    std::getline(row, method, ',');
    std::getline(row, seed, ',');
    std::getline(row, status, ',');
    std::getline(row, auc_s, ',');
    std::getline(row, rec_s, ',');
    std::getline(row, sel_s, ',');
    const auto& cj = j.at("cells").at(i);
    EXPECT_EQ(kind, "cell");
    EXPECT_EQ(method, cj.at("method").get<std::string>());
    EXPECT_EQ(std::stoull(seed), cj.at("seed").get<std::uint64_t>());
    EXPECT_EQ(status, cj.at("status").get<std::string>());
    EXPECT_NEAR(std::stod(auc_s), cj.at("test_auc").get<double>(), 5e-6);
    EXPECT_EQ(std::stoi(rec_s), cj.at("recovery").get<int>());
    std::string joined;
    for (const auto& f : cj.at("selected")) {
      if (!joined.empty()) joined += ";";
      joined += std::to_string(f.get<std::uint32_t>());
    }
    EXPECT_EQ(sel_s, joined);
  }

  // null / blank policy: JSON uses null, CSV leaves blank, keys never vanish
  EXPECT_TRUE(j.at("top3_score").is_null() || j.at("top3_score").is_number());
  for (const auto& cell : j.at("cells")) {
    EXPECT_TRUE(cell.contains("error"));
    EXPECT_TRUE(cell.contains("recovery"));
  }
}

TEST(EmitReport, CurveRowCountEqualsLoggingEvents) {
  const Dataset data = tiny_planted();
  const auto report = run_experiment(tiny_plan({"ensemble_avg"}, {1}), data, 1);
  const std::string prefix = temp_prefix("curves");
  const auto files = emit_report(report, prefix);
  std::size_t search_events = 0;
  for (const auto& l : report.cells[0].record.logs)
    if (l.phase == "search") ++search_events;
  ASSERT_FALSE(files.curve_paths.empty());
  const auto gates_csv = csv_lines(file_bytes(files.curve_paths[0]));
  EXPECT_EQ(gates_csv.size(), 1u + search_events);  // header + one row per event
}

TEST(EmitReport, SummariesRoundTripThroughReportFromSummaries) {
  const Dataset data = tiny_planted();
  const auto report =
      run_experiment(tiny_plan({"ensemble_avg", "random"}, {1, 2}), data, 2);
  const std::string prefix = temp_prefix("sumrt");
  const auto files = emit_report(report, prefix);
  const auto rebuilt = report_from_summaries(files.summaries_path, report.plan.base);
  ASSERT_EQ(rebuilt.aggregates.size(), report.aggregates.size());
  for (std::size_t i = 0; i < rebuilt.aggregates.size(); ++i) {
    EXPECT_EQ(rebuilt.aggregates[i].method, report.aggregates[i].method);
    EXPECT_DOUBLE_EQ(rebuilt.aggregates[i].auc_mean, report.aggregates[i].auc_mean);
    EXPECT_DOUBLE_EQ(rebuilt.aggregates[i].auc_std, report.aggregates[i].auc_std);
  }
  for (std::size_t i = 0; i < report.cells.size(); ++i) {
    EXPECT_EQ(rebuilt.cells[i].record.selection.selected,
              report.cells[i].record.selection.selected);
    EXPECT_EQ(rebuilt.cells[i].record.test_auc, report.cells[i].record.test_auc);
  }
}

TEST(Top3InReport, PresentOnlyForTwoMethodsWithFiveRuns) {
  const Dataset data = tiny_planted();
  const auto two_methods_two_seeds =
      run_experiment(tiny_plan({"random", "all_features"}, {1, 2}), data, 2);
  EXPECT_FALSE(two_methods_two_seeds.top3.has_value());
  const auto five = run_experiment(
      tiny_plan({"random", "all_features"}, {1, 2, 3, 4, 5}), data, 2);
  ASSERT_TRUE(five.top3.has_value());
  EXPECT_GE(*five.top3, 0);
  EXPECT_LE(*five.top3, 3);
}
