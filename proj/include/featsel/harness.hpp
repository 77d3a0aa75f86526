#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "featsel/data.hpp"
#include "featsel/metrics.hpp"
#include "featsel/training.hpp"

namespace featsel {

/// One method token per column: a plain method name, or "ensemble_<agg>" to
/// pin the aggregation for that column.
inline void apply_method_label(PipelineConfig& cfg, const std::string& label) {
  if (label.rfind("ensemble_", 0) == 0 || label.rfind("ensemble-", 0) == 0) {
    cfg.method = Method::ensemble;
    cfg.aggregation = aggregation_from_string(label.substr(9));
    return;
  }
  cfg.method = method_from_string(label);
}

struct ExperimentPlan {
  PipelineConfig base;
  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
};

struct CellResult {
  std::string method;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  ExperimentRecord record;
};

struct MethodAggregate {
  std::string method;
  std::size_t n = 0;
  double auc_mean = 0.0;
  double auc_std = 0.0;  // sample (n-1) deviation; 0 when n = 1
  std::optional<double> recovery_mean;
};

struct ExperimentReport {
  ExperimentPlan plan;
  std::size_t dataset_rows = 0;
  std::size_t dataset_fields = 0;
  std::optional<std::vector<std::uint32_t>> planted_fields;
  std::vector<CellResult> cells;  // methods-major, then seeds
  std::vector<MethodAggregate> aggregates;
  std::optional<int> top3;  // only when exactly two methods with 5 runs each

  const CellResult& cell(std::size_t method_idx, std::size_t seed_idx) const {
    return cells[method_idx * plan.seeds.size() + seed_idx];
  }
};

namespace detail {
inline void aggregate_report(ExperimentReport& report) {
  const std::size_t n_seeds = report.plan.seeds.size();
  for (std::size_t mi = 0; mi < report.plan.methods.size(); ++mi) {
    MethodAggregate agg;
    agg.method = report.plan.methods[mi];
    std::vector<double> aucs;
    std::vector<double> recoveries;
    for (std::size_t si = 0; si < n_seeds; ++si) {
      const CellResult& c = report.cells[mi * n_seeds + si];
      if (!c.ok) continue;
      aucs.push_back(c.record.test_auc);
      if (c.record.recovery) recoveries.push_back(*c.record.recovery);
    }
    agg.n = aucs.size();
    agg.auc_mean = mean(aucs);
    agg.auc_std = sample_std(aucs);
    if (!recoveries.empty()) agg.recovery_mean = mean(recoveries);
    report.aggregates.push_back(std::move(agg));
  }
  if (report.plan.methods.size() == 2) {
    std::vector<double> a, b;
    for (std::size_t si = 0; si < n_seeds; ++si) {
      if (report.cells[si].ok) a.push_back(report.cells[si].record.test_auc);
      if (report.cells[n_seeds + si].ok)
        b.push_back(report.cells[n_seeds + si].record.test_auc);
    }
    if (a.size() == 5 && b.size() == 5) report.top3 = top3_score(a, b);
  }
}
}  // namespace detail

/// Runs the methods x seeds matrix. Cells are independent and deterministic
/// given (method, seed), so they are dispatched to a small worker pool and
/// collected into fixed slots; results do not depend on scheduling.
inline ExperimentReport run_experiment(const ExperimentPlan& plan,
                                       const Dataset& data,
                                       std::size_t workers = 0) {
  if (plan.methods.empty() || plan.seeds.empty())
    throw std::invalid_argument("run_experiment: needs >= 1 method and seed");
  ExperimentReport report;
  report.plan = plan;
  report.dataset_rows = data.rows;
  report.dataset_fields = data.field_count();
  if (data.planted) report.planted_fields = data.planted->spec.informative_fields;
  const std::size_t total = plan.methods.size() * plan.seeds.size();
  report.cells.resize(total);

  if (workers == 0) {
    workers = std::thread::hardware_concurrency();
    if (workers == 0) workers = 1;
  }
  workers = std::min(workers, total);

  std::atomic<std::size_t> next{0};
  auto run_cells = [&]() {
    while (true) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= total) return;
      const std::size_t mi = idx / plan.seeds.size();
      const std::size_t si = idx % plan.seeds.size();
      CellResult& cell = report.cells[idx];
      cell.method = plan.methods[mi];
      cell.seed = plan.seeds[si];
      try {
        PipelineConfig cfg = plan.base;
        apply_method_label(cfg, cell.method);
        cfg.seed = cell.seed;
        cell.record = run_pipeline(cfg, data);
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
      }
    }
  };

  if (workers <= 1) {
    run_cells();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(run_cells);
    for (auto& t : pool) t.join();
  }

  detail::aggregate_report(report);
  return report;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json report_to_json(const ExperimentReport& r) {
  nlohmann::ordered_json j;
  j["config"] = config_to_json(r.plan.base);
  j["methods"] = r.plan.methods;
  j["seeds"] = r.plan.seeds;
  j["dataset"] = {{"rows", r.dataset_rows},
                  {"fields", r.dataset_fields},
                  {"planted", r.planted_fields
                                  ? nlohmann::ordered_json(*r.planted_fields)
                                  : nlohmann::ordered_json(nullptr)}};
  auto cells = nlohmann::ordered_json::array();
  for (const auto& c : r.cells) {
    nlohmann::ordered_json cj;
    cj["method"] = c.method;
    cj["seed"] = c.seed;
    cj["status"] = c.ok ? "ok" : "failed";
    cj["error"] = c.ok ? nlohmann::ordered_json(nullptr)
                       : nlohmann::ordered_json(c.error);
    cj["selected"] = c.ok ? nlohmann::ordered_json(c.record.selection.selected)
                          : nlohmann::ordered_json(nullptr);
    cj["test_auc"] = c.ok ? nlohmann::ordered_json(c.record.test_auc)
                          : nlohmann::ordered_json(nullptr);
    cj["recovery"] = (c.ok && c.record.recovery)
                         ? nlohmann::ordered_json(*c.record.recovery)
                         : nlohmann::ordered_json(nullptr);
    cells.push_back(std::move(cj));
  }
  j["cells"] = std::move(cells);
  auto aggs = nlohmann::ordered_json::array();
  for (const auto& a : r.aggregates) {
    nlohmann::ordered_json aj;
    aj["method"] = a.method;
    aj["n"] = a.n;
    aj["auc_mean"] = a.auc_mean;
    aj["auc_std"] = a.auc_std;
    aj["recovery_mean"] = a.recovery_mean
                              ? nlohmann::ordered_json(*a.recovery_mean)
                              : nlohmann::ordered_json(nullptr);
    aggs.push_back(std::move(aj));
  }
  j["aggregates"] = std::move(aggs);
  j["top3_score"] = r.top3 ? nlohmann::ordered_json(*r.top3)
                           : nlohmann::ordered_json(nullptr);
  return j;
}

namespace detail {
inline std::string csv_number(double v) {
  std::ostringstream os;
  os.precision(5);
  os << std::fixed << v;
  return os.str();
}

inline std::string join_indices(const std::vector<std::uint32_t>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ";" : "") << v[i];
  return os.str();
}
}  // namespace detail

/// CSV: one "cell" row per (method, seed) plus "mean"/"std" aggregate rows.
/// Empty optional fields are blank, never omitted columns.
inline std::string report_to_csv(const ExperimentReport& r) {
  std::ostringstream os;
  os << "kind,method,seed,status,test_auc,recovery,selected\n";
  for (const auto& c : r.cells) {
    os << "cell," << c.method << "," << c.seed << "," << (c.ok ? "ok" : "failed")
       << ",";
    if (c.ok) os << detail::csv_number(c.record.test_auc);
    os << ",";
    if (c.ok && c.record.recovery) os << *c.record.recovery;
    os << ",";
    if (c.ok) os << detail::join_indices(c.record.selection.selected);
    os << "\n";
  }
  for (const auto& a : r.aggregates) {
    os << "mean," << a.method << ",,," << detail::csv_number(a.auc_mean) << ",";
    if (a.recovery_mean) os << detail::csv_number(*a.recovery_mean);
    os << ",\n";
    os << "std," << a.method << ",,," << detail::csv_number(a.auc_std) << ",,\n";
  }
  return os.str();
}

struct EmittedFiles {
  std::string json_path;
  std::string csv_path;
  std::string summaries_path;
  std::vector<std::string> log_paths;
  std::vector<std::string> curve_paths;
};

/// Writes <prefix>.json, <prefix>.csv, one summary JSON-line per run, the
/// per-run JSON-lines logs, and per-cell plot-data CSVs for the open-gate
/// and inter-group-difference curves (one row per search logging event),
/// ready for external plotting.
inline EmittedFiles emit_report(const ExperimentReport& r, const std::string& prefix) {
  EmittedFiles files;
  files.json_path = prefix + ".json";
  {
    std::ofstream out(files.json_path);
    if (!out) throw std::runtime_error("emit_report: cannot write " + files.json_path);
    out << report_to_json(r).dump(2) << '\n';
  }
  files.csv_path = prefix + ".csv";
  {
    std::ofstream out(files.csv_path);
    if (!out) throw std::runtime_error("emit_report: cannot write " + files.csv_path);
    out << report_to_csv(r);
  }
  files.summaries_path = prefix + ".summaries.jsonl";
  {
    std::ofstream out(files.summaries_path);
    if (!out)
      throw std::runtime_error("emit_report: cannot write " + files.summaries_path);
    for (const auto& c : r.cells)
      if (c.ok) out << c.record.summary_json().dump() << '\n';
  }
  for (const auto& c : r.cells) {
    if (!c.ok) continue;
    const std::string path =
        prefix + ".logs." + c.method + "." + std::to_string(c.seed) + ".jsonl";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("emit_report: cannot write " + path);
    for (const auto& l : c.record.logs) out << l.to_line() << '\n';
    files.log_paths.push_back(path);
  }
  for (const auto& c : r.cells) {
    if (!c.ok) continue;
    std::vector<const LogRecord*> search_logs;
    for (const auto& l : c.record.logs)
      if (l.phase == "search") search_logs.push_back(&l);
    if (search_logs.empty()) continue;
    const std::string stem = prefix + ".curves." + c.method + "." +
                             std::to_string(c.seed);
    {
      const std::string path = stem + ".gates.csv";
      std::ofstream out(path);
      if (!out) throw std::runtime_error("emit_report: cannot write " + path);
      const std::size_t k = search_logs.front()->open_gates->size();
      out << "step";
      for (std::size_t g = 0; g < k; ++g) out << ",group" << g;
      out << "\n";
      for (const auto* l : search_logs) {
        out << l->step;
        for (int v : *l->open_gates) out << "," << v;
        out << "\n";
      }
      files.curve_paths.push_back(path);
    }
    if (search_logs.front()->intergroup_diff) {
      const std::string path = stem + ".diff.csv";
      std::ofstream out(path);
      if (!out) throw std::runtime_error("emit_report: cannot write " + path);
      out << "step,intergroup_diff\n";
      for (const auto* l : search_logs)
        out << l->step << "," << *l->intergroup_diff << "\n";
      files.curve_paths.push_back(path);
    }
  }
  return files;
}

/// Rebuilds a report from a summaries JSON-lines file (one run per line), so
/// aggregates and emitted files can be regenerated without re-running.
inline ExperimentReport report_from_summaries(const std::string& path,
                                              PipelineConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("report: cannot open " + path);
  ExperimentReport report;
  report.plan.base = base;
  std::vector<CellResult> loaded;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    CellResult c;
    c.method = j.at("method").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.ok = true;
    c.record.method = c.method;
    c.record.seed = c.seed;
    c.record.selection.selected =
        j.at("selected").get<std::vector<std::uint32_t>>();
    c.record.test_auc = j.at("test_auc").get<double>();
    if (!j.at("recovery").is_null()) c.record.recovery = j.at("recovery").get<int>();
    for (const auto& lj : j.at("search_logs"))
      c.record.logs.push_back(LogRecord::from_json(lj));
    loaded.push_back(std::move(c));
  }
  if (loaded.empty()) throw std::runtime_error("report: no runs in " + path);
  for (const auto& c : loaded) {
    if (std::find(report.plan.methods.begin(), report.plan.methods.end(), c.method) ==
        report.plan.methods.end())
      report.plan.methods.push_back(c.method);
    if (std::find(report.plan.seeds.begin(), report.plan.seeds.end(), c.seed) ==
        report.plan.seeds.end())
      report.plan.seeds.push_back(c.seed);
  }
  report.cells.resize(report.plan.methods.size() * report.plan.seeds.size());
  for (std::size_t mi = 0; mi < report.plan.methods.size(); ++mi)
    for (std::size_t si = 0; si < report.plan.seeds.size(); ++si) {
      CellResult& slot = report.cells[mi * report.plan.seeds.size() + si];
      slot.method = report.plan.methods[mi];
      slot.seed = report.plan.seeds[si];
      slot.ok = false;
      slot.error = "missing from summaries";
    }
  for (auto& c : loaded) {
    const auto mi = static_cast<std::size_t>(
        std::find(report.plan.methods.begin(), report.plan.methods.end(), c.method) -
        report.plan.methods.begin());
    const auto si = static_cast<std::size_t>(
        std::find(report.plan.seeds.begin(), report.plan.seeds.end(), c.seed) -
        report.plan.seeds.begin());
    report.cells[mi * report.plan.seeds.size() + si] = std::move(c);
  }
  detail::aggregate_report(report);
  return report;
}

}  // namespace featsel
