// featsel command line: synthetic data generation, the pretrain/search/retrain
// phases (individually or as one run), and multi-seed experiment batches.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "featsel/checkpoint.hpp"
#include "featsel/data.hpp"
#include "featsel/harness.hpp"
#include "featsel/training.hpp"

namespace {

using namespace featsel;

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto pos = s.find(',', start);
    if (pos == std::string::npos) {
      if (start < s.size()) out.push_back(s.substr(start));
      break;
    }
    if (pos > start) out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

/// Registers one CLI flag per pipeline-config key; flags present on the
/// command line override values read from --config.
struct ConfigFlags {
  std::map<std::string, std::string> overrides;
  std::string config_path;

  void attach(CLI::App& app) {
    static const std::vector<std::string> keys = {
        "method",          "model",
        "ensemble_size",   "target_n",
        "batch_size",      "pretrain_epochs",
        "search_epochs",   "retrain_epochs",
        "lr_network",      "lr_gates",
        "gate_lr_scale",   "weight_decay",
        "beta_s",          "embed_dim",
        "init_mode",       "init_open_fraction",
        "init_magnitude",  "init_constant",
        "search_data",     "freeze_network",
        "aggregation",     "seed",
        "log_every"};
    app.add_option("--config", config_path,
                   "key = value config file; explicit flags win");
    for (const auto& key : keys) {
      app.add_option_function<std::string>(
          "--" + key, [this, key](const std::string& v) { overrides[key] = v; });
    }
  }

  PipelineConfig build() const {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = load_config_file(config_path);
    for (const auto& [k, v] : overrides) apply_config_kv(cfg, k, v);
    return cfg;
  }
};

Dataset load_data(const std::string& path) { return load_with_sidecar(path); }

struct SplitView {
  std::vector<Dataset> parts;
  const Dataset* train;
  const Dataset* validation;  // null unless validation search mode
  const Dataset* test;
};

SplitView pipeline_split(const PipelineConfig& cfg, const Dataset& data) {
  SplitView v;
  if (cfg.search_data == SearchDataMode::validation) {
    v.parts = split(data, {0.8, 0.1, 0.1}, derive_seed(cfg.seed, 100));
    v.train = &v.parts[0];
    v.validation = &v.parts[1];
    v.test = &v.parts[2];
  } else {
    v.parts = split(data, {0.8, 0.2}, derive_seed(cfg.seed, 100));
    v.train = &v.parts[0];
    v.validation = nullptr;
    v.test = &v.parts[1];
  }
  return v;
}

void write_lines(const std::string& path, const std::vector<LogRecord>& logs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& l : logs) out << l.to_line() << '\n';
}

void save_search_checkpoint(const std::string& path, const ParameterStore& store,
                            const GatingEnsemble& ens) {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (std::size_t i = 0; i < store.size(); ++i)
    tensors.emplace_back(store[i].name, &store[i].value);
  std::vector<Tensor> gate_tensors;
  gate_tensors.reserve(ens.size());
  for (std::size_t k = 0; k < ens.size(); ++k)
    gate_tensors.emplace_back(std::vector<std::size_t>{ens.groups[k].size()},
                              ens.groups[k].alpha);
  for (std::size_t k = 0; k < ens.size(); ++k)
    tensors.emplace_back("gate.alpha." + std::to_string(k), &gate_tensors[k]);
  save_checkpoint(path, tensors);
}

int cmd_generate_data(std::size_t fields, std::uint32_t vocab, std::size_t rows,
                      const std::string& planted_csv, std::size_t num_planted,
                      double scale, double bias, std::uint64_t seed,
                      const std::string& out) {
  PlantedSpec spec;
  spec.weight_scale = scale;
  spec.bias = bias;
  spec.seed = seed;
  if (!planted_csv.empty()) {
    for (const auto& tok : split_csv(planted_csv))
      spec.informative_fields.push_back(
          static_cast<std::uint32_t>(std::stoul(tok)));
  } else if (num_planted > 0) {
    RngStream rng(derive_seed(seed, 77));
    spec.informative_fields = rng.sample_without_replacement(fields, num_planted);
    std::sort(spec.informative_fields.begin(), spec.informative_fields.end());
  } else {
    throw std::runtime_error("generate-data: give --planted or --num-planted");
  }
  const Dataset ds = generate_synthetic(fields, vocab, rows, spec);
  write_delimited(ds, out);
  nlohmann::ordered_json j;
  j["rows"] = ds.rows;
  j["fields"] = ds.field_count();
  j["planted"] = ds.planted->spec.informative_fields;
  j["path"] = out;
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_run(const PipelineConfig& cfg, const std::string& data_path,
            const std::string& log_path, const std::string& selection_path) {
  const Dataset data = load_data(data_path);
  const ExperimentRecord rec = run_pipeline(cfg, data);
  if (!log_path.empty()) write_lines(log_path, rec.logs);
  if (!selection_path.empty()) {
    std::ofstream out(selection_path);
    if (!out) throw std::runtime_error("cannot write " + selection_path);
    out << rec.selection.to_json().dump(2) << '\n';
  }
  std::cout << rec.summary_json().dump() << "\n";
  return 0;
}

int cmd_experiment(const PipelineConfig& base, const std::string& data_path,
                   const std::string& methods_csv, const std::string& seeds_csv,
                   const std::string& report_prefix, std::size_t workers) {
  ExperimentPlan plan;
  plan.base = base;
  plan.methods = split_csv(methods_csv);
  for (const auto& tok : split_csv(seeds_csv))
    plan.seeds.push_back(std::stoull(tok));
  const Dataset data = load_data(data_path);
  const ExperimentReport report = run_experiment(plan, data, workers);
  const EmittedFiles files = emit_report(report, report_prefix);
  for (const auto& a : report.aggregates) {
    std::cout << a.method << ": auc " << a.auc_mean << " (std " << a.auc_std
              << ", n=" << a.n << ")";
    if (a.recovery_mean) std::cout << " recovery " << *a.recovery_mean;
    std::cout << "\n";
  }
  if (report.top3) std::cout << "top3_score " << *report.top3 << "\n";
  std::cout << "report: " << files.json_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural feature selection via ensembles of binary gates"};
  app.require_subcommand(1);

  // generate-data
  auto* gen = app.add_subcommand("generate-data",
                                 "Write a synthetic planted-feature dataset");
  std::size_t g_fields = 20, g_rows = 50000, g_num_planted = 0;
  std::uint32_t g_vocab = 100;
  double g_scale = 2.0, g_bias = 0.0;
  std::uint64_t g_seed = 1;
  std::string g_planted, g_out;
  gen->add_option("--fields", g_fields, "number of feature fields (M)");
  gen->add_option("--vocab-size", g_vocab, "hash buckets per field");
  gen->add_option("--rows", g_rows, "rows to generate");
  gen->add_option("--planted", g_planted, "comma list of informative field indices");
  gen->add_option("--num-planted", g_num_planted,
                  "draw this many informative fields by seed");
  gen->add_option("--scale", g_scale, "planted weight scale");
  gen->add_option("--bias", g_bias, "logit bias");
  gen->add_option("--seed", g_seed, "generator seed");
  gen->add_option("--out", g_out, "output path")->required();

  // phase subcommands share the config surface
  ConfigFlags run_cfg, pre_cfg, search_cfg, retrain_cfg, exp_cfg;

  auto* pre = app.add_subcommand("pretrain", "Train on all features, save weights");
  std::string p_data, p_out;
  pre->add_option("--data", p_data, "dataset path")->required();
  pre->add_option("--out", p_out, "checkpoint path")->required();
  pre_cfg.attach(*pre);

  auto* sea = app.add_subcommand("search",
                                 "Gate search over a pretrained checkpoint");
  std::string s_data, s_ckpt, s_sel, s_log, s_out_ckpt;
  sea->add_option("--data", s_data, "dataset path")->required();
  sea->add_option("--checkpoint", s_ckpt, "pretrained checkpoint")->required();
  sea->add_option("--out-selection", s_sel, "selection JSON path")->required();
  sea->add_option("--log", s_log, "JSON-lines log path");
  sea->add_option("--out-checkpoint", s_out_ckpt,
                  "post-search checkpoint (weights + gate.alpha.k)");
  search_cfg.attach(*sea);

  auto* ret = app.add_subcommand("retrain",
                                 "Retrain from scratch on a selection, print AUC");
  std::string r_data, r_sel, r_log;
  ret->add_option("--data", r_data, "dataset path")->required();
  ret->add_option("--selection", r_sel, "selection JSON path")->required();
  ret->add_option("--log", r_log, "JSON-lines log path");
  retrain_cfg.attach(*ret);

  auto* run = app.add_subcommand("run", "Full pretrain -> search -> retrain");
  std::string run_data, run_log, run_sel;
  run->add_option("--data", run_data, "dataset path")->required();
  run->add_option("--log", run_log, "JSON-lines log path");
  run->add_option("--out-selection", run_sel, "selection JSON path");
  run_cfg.attach(*run);

  auto* exp = app.add_subcommand("experiment", "methods x seeds matrix");
  std::string e_data, e_methods, e_seeds, e_report;
  std::size_t e_workers = 0;
  exp->add_option("--data", e_data, "dataset path")->required();
  exp->add_option("--methods", e_methods, "comma list of methods")->required();
  exp->add_option("--seeds", e_seeds, "comma list of seeds")->required();
  exp->add_option("--report", e_report, "output prefix")->required();
  exp->add_option("--workers", e_workers, "worker threads (0 = hardware)");
  exp_cfg.attach(*exp);

  auto* rep = app.add_subcommand("report", "Re-aggregate from a summaries file");
  std::string rep_in, rep_out;
  rep->add_option("--summaries", rep_in, "summaries .jsonl path")->required();
  rep->add_option("--out", rep_out, "output prefix")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_generate_data(g_fields, g_vocab, g_rows, g_planted, g_num_planted,
                               g_scale, g_bias, g_seed, g_out);
    if (pre->parsed()) {
      const PipelineConfig cfg = pre_cfg.build();
      const Dataset data = load_data(p_data);
      cfg.validate(data.field_count());
      const SplitView sv = pipeline_split(cfg, data);
      std::vector<LogRecord> logs;
      auto result = pretrain(cfg, *sv.train, &logs);
      save_store_checkpoint(p_out, result.store);
      for (const auto& l : logs) std::cout << l.to_line() << "\n";
      return 0;
    }
    if (sea->parsed()) {
      const PipelineConfig cfg = search_cfg.build();
      const Dataset data = load_data(s_data);
      cfg.validate(data.field_count());
      const SplitView sv = pipeline_split(cfg, data);
      RngStream init_rng(derive_seed(cfg.seed, 1));
      ParameterStore store =
          init_model_params(cfg.model, sv.train->schema, cfg.embed_dim, init_rng);
      load_into_store(s_ckpt, store);
      std::vector<LogRecord> logs;
      auto out = search(cfg, store, *sv.train, sv.validation, &logs);
      if (!s_log.empty()) write_lines(s_log, logs);
      if (!s_out_ckpt.empty()) save_search_checkpoint(s_out_ckpt, store, out.ensemble);
      std::ofstream sel(s_sel);
      if (!sel) throw std::runtime_error("cannot write " + s_sel);
      sel << out.selection.to_json().dump(2) << '\n';
      std::cout << out.selection.to_json().dump() << "\n";
      return 0;
    }
    if (ret->parsed()) {
      const PipelineConfig cfg = retrain_cfg.build();
      const Dataset data = load_data(r_data);
      const SplitView sv = pipeline_split(cfg, data);
      std::ifstream sel_in(r_sel);
      if (!sel_in) throw std::runtime_error("cannot open " + r_sel);
      nlohmann::json sj;
      sel_in >> sj;
      const SelectionResult sel = SelectionResult::from_json(sj);
      std::vector<LogRecord> logs;
      const double result = retrain(cfg, sel.selected, *sv.train, *sv.test, &logs);
      if (!r_log.empty()) write_lines(r_log, logs);
      std::cout << nlohmann::ordered_json{{"test_auc", result}}.dump() << "\n";
      return 0;
    }
    if (run->parsed()) return cmd_run(run_cfg.build(), run_data, run_log, run_sel);
    if (exp->parsed())
      return cmd_experiment(exp_cfg.build(), e_data, e_methods, e_seeds, e_report,
                            e_workers);
    if (rep->parsed()) {
      const ExperimentReport report = report_from_summaries(rep_in);
      const EmittedFiles files = emit_report(report, rep_out);
      std::cout << "report: " << files.json_path << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
