#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "featsel/checkpoint.hpp"
#include "featsel/data.hpp"
#include "featsel/ensemble.hpp"
#include "featsel/gating.hpp"
#include "featsel/metrics.hpp"
#include "featsel/models.hpp"
#include "featsel/optim.hpp"
#include "featsel/rng.hpp"

namespace featsel {

enum class Method { gating, ensemble, gumbel, random_baseline, all_features };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::gating: return "gating";
    case Method::ensemble: return "ensemble";
    case Method::gumbel: return "gumbel";
    case Method::random_baseline: return "random";
    case Method::all_features: return "all_features";
  }
  return "?";
}

inline Method method_from_string(std::string_view s) {
  if (s == "gating") return Method::gating;
  if (s == "ensemble") return Method::ensemble;
  if (s == "gumbel") return Method::gumbel;
  if (s == "random") return Method::random_baseline;
  if (s == "all_features" || s == "all-features") return Method::all_features;
  throw std::invalid_argument("unknown method: " + std::string(s));
}

enum class SearchDataMode { train, validation };

inline std::string to_string(SearchDataMode m) {
  return m == SearchDataMode::train ? "train" : "validation";
}

inline SearchDataMode search_data_from_string(std::string_view s) {
  if (s == "train") return SearchDataMode::train;
  if (s == "validation") return SearchDataMode::validation;
  throw std::invalid_argument("unknown search_data: " + std::string(s));
}

/// Sparse-regularizer weight. Sized so the over-target push
/// (lr_gates * beta_s per gate update) closes surplus gates within the first
/// couple of epochs at the data scales this harness runs; informative
/// features' loss gradients then re-open their gates from just below the
/// threshold.
inline constexpr double kDefaultBetaS = 2.0;

/// All hyperparameters of one pretrain -> search -> retrain run.
struct PipelineConfig {
  Method method = Method::ensemble;
  ModelKind model = ModelKind::dcn;
  std::size_t ensemble_size = 5;  // K
  std::size_t target_n = 0;       // N; required unless method = all_features
  std::size_t batch_size = 2048;
  std::size_t pretrain_epochs = 10;
  std::size_t search_epochs = 8;
  std::size_t retrain_epochs = 10;
  double lr_network = 1e-3;   // Adam
  double lr_gates = 1e-3;     // SGD
  double gate_lr_scale = 1.0;
  double weight_decay = 1e-6;
  double beta_s = kDefaultBetaS;
  std::size_t embed_dim = 8;  // V
  GateInitMode init_mode = GateInitMode::constant;
  double init_open_fraction = 0.8;  // p
  double init_magnitude = 0.01;     // c
  std::optional<double> init_constant;  // defaults to +c*p
  SearchDataMode search_data = SearchDataMode::train;
  bool freeze_network = false;
  Aggregation aggregation = Aggregation::avg;
  std::uint64_t seed = 1;
  std::size_t log_every = 500;

  std::size_t effective_k() const {
    return method == Method::ensemble ? ensemble_size : 1;
  }

  BinarizeKind gate_kind() const {
    return method == Method::gumbel ? BinarizeKind::gumbel : BinarizeKind::ste;
  }

  GateInitSpec resolved_init() const {
    GateInitSpec spec;
    spec.mode = init_mode;
    spec.open_fraction = init_open_fraction;
    spec.magnitude = init_magnitude;
    spec.constant_value =
        init_constant.value_or(init_magnitude * init_open_fraction);
    return spec;
  }

  void validate(std::size_t field_count) const {
    if (method != Method::all_features &&
        (target_n < 1 || target_n > field_count))
      throw std::invalid_argument("config: target_n must be in [1, M]");
    if (ensemble_size < 1)
      throw std::invalid_argument("config: ensemble_size must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (pretrain_epochs < 1 || search_epochs < 1 || retrain_epochs < 1)
      throw std::invalid_argument("config: all epochs must be >= 1");
    if (!(lr_network > 0.0) || !(lr_gates > 0.0) || !(gate_lr_scale > 0.0))
      throw std::invalid_argument("config: learning rates must be > 0");
    if (weight_decay < 0.0 || beta_s < 0.0)
      throw std::invalid_argument("config: weight_decay/beta_s must be >= 0");
    if (embed_dim < 1) throw std::invalid_argument("config: embed_dim must be >= 1");
    if (log_every < 1) throw std::invalid_argument("config: log_every must be >= 1");
    resolved_init().validate();
  }

  std::string method_label() const {
    if (method == Method::ensemble)
      return "ensemble_" + featsel::to_string(aggregation);
    return featsel::to_string(method);
  }
};

// ---------------------------------------------------------------------------
// Config file: flat "key = value" lines, '#' comments.
// ---------------------------------------------------------------------------

namespace detail {
inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected boolean, got: " + v);
}
}  // namespace detail

inline void apply_config_kv(PipelineConfig& cfg, const std::string& key,
                            const std::string& value) {
  if (key == "method") cfg.method = method_from_string(value);
  else if (key == "model") cfg.model = model_kind_from_string(value);
  else if (key == "ensemble_size" || key == "k") cfg.ensemble_size = std::stoul(value);
  else if (key == "target_n") cfg.target_n = std::stoul(value);
  else if (key == "batch_size") cfg.batch_size = std::stoul(value);
  else if (key == "pretrain_epochs") cfg.pretrain_epochs = std::stoul(value);
  else if (key == "search_epochs") cfg.search_epochs = std::stoul(value);
  else if (key == "retrain_epochs") cfg.retrain_epochs = std::stoul(value);
  else if (key == "lr_network") cfg.lr_network = std::stod(value);
  else if (key == "lr_gates") cfg.lr_gates = std::stod(value);
  else if (key == "gate_lr_scale") cfg.gate_lr_scale = std::stod(value);
  else if (key == "weight_decay") cfg.weight_decay = std::stod(value);
  else if (key == "beta_s") cfg.beta_s = std::stod(value);
  else if (key == "embed_dim" || key == "v") cfg.embed_dim = std::stoul(value);
  else if (key == "init_mode") cfg.init_mode = gate_init_mode_from_string(value);
  else if (key == "init_open_fraction") cfg.init_open_fraction = std::stod(value);
  else if (key == "init_magnitude") cfg.init_magnitude = std::stod(value);
  else if (key == "init_constant") cfg.init_constant = std::stod(value);
  else if (key == "search_data") cfg.search_data = search_data_from_string(value);
  else if (key == "freeze_network") cfg.freeze_network = detail::parse_bool(value);
  else if (key == "aggregation") cfg.aggregation = aggregation_from_string(value);
  else if (key == "seed") cfg.seed = std::stoull(value);
  else if (key == "log_every") cfg.log_every = std::stoul(value);
  else throw std::invalid_argument("unknown config key: " + key);
}

inline PipelineConfig load_config_file(const std::string& path,
                                       PipelineConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected key = value");
    try {
      apply_config_kv(base, detail::trim(trimmed.substr(0, eq)),
                      detail::trim(trimmed.substr(eq + 1)));
    } catch (const std::exception& e) {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return base;
}

inline nlohmann::ordered_json config_to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["method"] = to_string(c.method);
  j["model"] = to_string(c.model);
  j["ensemble_size"] = c.ensemble_size;
  j["target_n"] = c.target_n;
  j["batch_size"] = c.batch_size;
  j["pretrain_epochs"] = c.pretrain_epochs;
  j["search_epochs"] = c.search_epochs;
  j["retrain_epochs"] = c.retrain_epochs;
  j["lr_network"] = c.lr_network;
  j["lr_gates"] = c.lr_gates;
  j["gate_lr_scale"] = c.gate_lr_scale;
  j["weight_decay"] = c.weight_decay;
  j["beta_s"] = c.beta_s;
  j["embed_dim"] = c.embed_dim;
  j["init_mode"] = to_string(c.init_mode);
  j["init_open_fraction"] = c.init_open_fraction;
  j["init_magnitude"] = c.init_magnitude;
  if (c.init_constant)
    j["init_constant"] = *c.init_constant;
  else
    j["init_constant"] = nullptr;
  j["search_data"] = to_string(c.search_data);
  j["freeze_network"] = c.freeze_network;
  j["aggregation"] = to_string(c.aggregation);
  j["seed"] = c.seed;
  j["log_every"] = c.log_every;
  return j;
}

// ---------------------------------------------------------------------------
// JSON-lines logging
// ---------------------------------------------------------------------------

struct LogRecord {
  std::size_t step = 0;
  std::string phase;
  std::optional<int> group;
  double loss = 0.0;
  std::optional<std::vector<int>> open_gates;
  std::optional<double> intergroup_diff;
  std::optional<double> gamma;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["phase"] = phase;
    j["group"] = group ? nlohmann::ordered_json(*group) : nullptr;
    j["loss"] = loss;
    j["open_gates"] = open_gates ? nlohmann::ordered_json(*open_gates) : nullptr;
    j["intergroup_diff"] =
        intergroup_diff ? nlohmann::ordered_json(*intergroup_diff) : nullptr;
    j["gamma"] = gamma ? nlohmann::ordered_json(*gamma) : nullptr;
    return j;
  }

  std::string to_line() const { return to_json().dump(); }

  static LogRecord from_json(const nlohmann::json& j) {
    LogRecord r;
    r.step = j.at("step").get<std::size_t>();
    r.phase = j.at("phase").get<std::string>();
    if (!j.at("group").is_null()) r.group = j.at("group").get<int>();
    r.loss = j.at("loss").get<double>();
    if (!j.at("open_gates").is_null())
      r.open_gates = j.at("open_gates").get<std::vector<int>>();
    if (!j.at("intergroup_diff").is_null())
      r.intergroup_diff = j.at("intergroup_diff").get<double>();
    if (!j.at("gamma").is_null()) r.gamma = j.at("gamma").get<double>();
    return r;
  }
};

// ---------------------------------------------------------------------------
// Phases
// ---------------------------------------------------------------------------

struct TrainResult {
  ParameterStore store;
  std::vector<double> epoch_losses;
};

namespace detail {
inline Tensor label_tensor(const ExampleBatch& b) {
  return Tensor({b.rows}, b.labels);
}

/// Stream tags for per-run RNG derivation. Streams never depend on the
/// method so paired-seed runs see identical data and initialization.
enum SeedTag : std::uint64_t {
  kTagInit = 1,
  kTagBatches = 2,
  kTagGateInit = 3,
  kTagPick = 4,
  kTagNetBatches = 5,
  kTagGateBatches = 6,
  kTagRandomSelection = 7,
  kTagSplit = 100,
  kTagGumbelNoise = 14,
};
}  // namespace detail

/// Fresh parameters trained for a fixed number of epochs with Adam plus
/// weight decay; used by pretraining, Lottery-Ticket retraining and the Min
/// aggregation's one-epoch probes.
inline TrainResult train_model(ModelKind kind, const Dataset& data,
                               std::size_t embed_dim, std::size_t epochs,
                               std::size_t batch_size, double lr, double weight_decay,
                               std::uint64_t seed, const char* phase,
                               std::vector<LogRecord>* logs = nullptr) {
  if (data.rows == 0) throw std::invalid_argument(std::string(phase) + ": empty dataset");
  RngStream init_rng(derive_seed(seed, detail::kTagInit));
  TrainResult result{init_model_params(kind, data.schema, embed_dim, init_rng), {}};
  Adam adam(result.store, AdamConfig{lr});
  const std::size_t steps_per_epoch = (data.rows + batch_size - 1) / batch_size;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto batches =
        make_batches(data, batch_size, derive_seed(seed, detail::kTagBatches), epoch);
    double loss_sum = 0.0;
    for (const auto& batch : batches) {
      result.store.zero_grads();
      Tape tape;
      const auto emb = embed_gather(tape, result.store, batch, embed_dim);
      const auto probs = model_forward(tape, kind, emb, result.store);
      const auto obj = training_objective(tape, probs, detail::label_tensor(batch),
                                          result.store, weight_decay);
      if (!std::isfinite(obj.value))
        throw std::runtime_error(std::string(phase) + ": loss diverged");
      tape.backward(obj.loss_node);
      apply_weight_decay(result.store, weight_decay);
      adam.step(result.store);
      loss_sum += obj.value;
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(batches.size()));
    if (logs)
      logs->push_back(LogRecord{(epoch + 1) * steps_per_epoch, phase, std::nullopt,
                                result.epoch_losses.back(), std::nullopt,
                                std::nullopt, std::nullopt});
  }
  return result;
}

/// Phase 1: train on all features, no gates.
inline TrainResult pretrain(const PipelineConfig& cfg, const Dataset& train,
                            std::vector<LogRecord>* logs = nullptr) {
  return train_model(cfg.model, train, cfg.embed_dim, cfg.pretrain_epochs,
                     cfg.batch_size, cfg.lr_network, cfg.weight_decay, cfg.seed,
                     "pretrain", logs);
}

inline std::vector<double> predict(ModelKind kind, ParameterStore& store,
                                   const Dataset& data, std::size_t embed_dim,
                                   std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(data.rows);
  for (const auto& batch : make_eval_batches(data, batch_size)) {
    Tape tape;
    const auto emb = embed_gather(tape, store, batch, embed_dim);
    const auto probs = model_forward(tape, kind, emb, store);
    const Tensor& p = tape.value(probs);
    out.insert(out.end(), p.data.begin(), p.data.end());
  }
  return out;
}

/// Phase 3: Lottery-Ticket retraining. Fresh parameters from a seed stream
/// distinct from the search seed; unselected fields are never looked up.
inline double retrain(const PipelineConfig& cfg,
                      const std::vector<std::uint32_t>& selected,
                      const Dataset& train, const Dataset& test,
                      std::vector<LogRecord>* logs = nullptr) {
  if (selected.empty()) throw std::invalid_argument("retrain: empty selection");
  if (test.rows == 0) throw std::invalid_argument("retrain: empty test set");
  const Dataset sub_train = select_fields(train, selected);
  const Dataset sub_test = select_fields(test, selected);
  auto trained = train_model(cfg.model, sub_train, cfg.embed_dim, cfg.retrain_epochs,
                             cfg.batch_size, cfg.lr_network, cfg.weight_decay,
                             cfg.seed + 10007, "retrain", logs);
  const auto scores =
      predict(cfg.model, trained.store, sub_test, cfg.embed_dim, cfg.batch_size);
  return auc(scores, sub_test.labels);
}

struct SearchOutput {
  SelectionResult selection;
  GatingEnsemble ensemble;
};

namespace detail {

inline void spot_check_closed_gate_grads(const ParameterStore& store,
                                         const GateGroup& group) {
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (group.alpha[i] > 0.0) continue;
    const Parameter& table = store.at("embed." + std::to_string(i));
    for (double g : table.grad.data)
      if (g != 0.0)
        throw std::logic_error(
            "closed gate leaked gradient into embedding table " +
            std::to_string(i));
  }
}

inline LogRecord search_log_record(std::size_t step, std::optional<int> group,
                                   double loss, const GatingEnsemble& ens,
                                   bool gumbel, double gamma) {
  LogRecord r;
  r.step = step;
  r.phase = "search";
  r.group = group;
  r.loss = loss;
  std::vector<int> open;
  open.reserve(ens.size());
  for (const auto& g : ens.groups) open.push_back(static_cast<int>(g.open_count()));
  r.open_gates = std::move(open);
  if (ens.size() >= 2) r.intergroup_diff = intergroup_difference(ens);
  if (gumbel) r.gamma = gamma;
  return r;
}

}  // namespace detail

/// Phase 2: iterative search over a pretrained network. Per mini-batch one
/// uniformly chosen gate group is active: the network trains through the
/// masked embeddings (unless frozen), then the active group's weights take an
/// SGD step from the same backward pass (or from an independent validation
/// batch when search_data = validation), plus the sparse-count push.
inline SearchOutput search(const PipelineConfig& cfg, ParameterStore& store,
                           const Dataset& train, const Dataset* validation,
                           std::vector<LogRecord>* logs = nullptr) {
  const std::size_t m = train.field_count();
  cfg.validate(m);
  if (cfg.search_data == SearchDataMode::validation && validation == nullptr)
    throw std::invalid_argument("search: validation mode needs a validation set");

  const std::size_t k_groups = cfg.effective_k();
  const BinarizeKind kind = cfg.gate_kind();
  const GateInitSpec init_spec = cfg.resolved_init();

  GatingEnsemble ens;
  ens.groups.reserve(k_groups);
  for (std::size_t k = 0; k < k_groups; ++k) {
    GateGroup g = init_gates(init_spec, m, derive_seed(cfg.seed, detail::kTagGateInit, k));
    g.kind = kind;
    ens.groups.push_back(std::move(g));
  }

  Adam adam(store, AdamConfig{cfg.lr_network});
  RngStream pick_rng(derive_seed(cfg.seed, detail::kTagPick));
  RngStream noise_rng(derive_seed(cfg.seed, detail::kTagGumbelNoise));
  const std::size_t steps_per_epoch = (train.rows + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = cfg.search_epochs * steps_per_epoch;
  const double gate_lr = cfg.lr_gates * cfg.gate_lr_scale;

  std::size_t step = 0;
  bool warned_all_closed = false;
  for (std::size_t epoch = 0; epoch < cfg.search_epochs; ++epoch) {
    const auto net_batches = make_batches(
        train, cfg.batch_size, derive_seed(cfg.seed, detail::kTagNetBatches), epoch);
    std::vector<ExampleBatch> gate_batches;
    if (cfg.search_data == SearchDataMode::validation)
      gate_batches = make_batches(*validation, cfg.batch_size,
                                  derive_seed(cfg.seed, detail::kTagGateBatches), epoch);
    for (const auto& batch : net_batches) {
      ++step;
      const std::size_t k = pick_group(ens, pick_rng);
      GateGroup& group = ens.groups[k];
      if (kind == BinarizeKind::gumbel)
        group.gumbel_temperature =
            anneal_temperature(step - 1, total_steps > 1 ? total_steps - 1 : 1);

      store.zero_grads();
      group.zero_grad();
      Tape tape;
      const auto emb = embed_gather(tape, store, batch, cfg.embed_dim);
      const auto masked = apply_gates(tape, emb, group,
                                      kind == BinarizeKind::gumbel ? &noise_rng : nullptr);
      const auto probs = model_forward(tape, cfg.model, masked, store);
      const auto obj = training_objective(tape, probs, detail::label_tensor(batch),
                                          store, cfg.weight_decay);
      if (!std::isfinite(obj.value)) throw std::runtime_error("search: loss diverged");
      tape.backward(obj.loss_node);

      const bool log_step = step == 1 || step % cfg.log_every == 0 ||
                            step % steps_per_epoch == 0 || step == total_steps;
      if (log_step && kind == BinarizeKind::ste)
        detail::spot_check_closed_gate_grads(store, group);

      // Network step first, gate step second, both from the same backward
      // pass when the gate data equals the training data.
      if (!cfg.freeze_network) {
        apply_weight_decay(store, cfg.weight_decay);
        adam.step(store);
      }

      if (cfg.search_data == SearchDataMode::validation) {
        group.zero_grad();
        store.zero_grads();
        const ExampleBatch& gb = gate_batches[(step - 1) % gate_batches.size()];
        Tape gate_tape;
        const auto gemb = embed_gather(gate_tape, store, gb, cfg.embed_dim);
        const auto gmask = apply_gates(gate_tape, gemb, group,
                                       kind == BinarizeKind::gumbel ? &noise_rng : nullptr);
        const auto gprobs = model_forward(gate_tape, cfg.model, gmask, store);
        const auto gloss = op_bce(gate_tape, gprobs, detail::label_tensor(gb));
        gate_tape.backward(gloss);
        // network parameters stay frozen during the gate step; their
        // gradients from this pass are discarded.
      }

      const SparseReg reg = sparse_regularizer(group, cfg.target_n);
      for (std::size_t i = 0; i < m; ++i)
        group.alpha_grad[i] += cfg.beta_s * reg.alpha_grad[i];
      sgd_step(group.alpha, group.alpha_grad, gate_lr);

      if (!warned_all_closed) {
        bool all_closed = true;
        for (const auto& g : ens.groups) all_closed &= g.open_count() == 0;
        if (all_closed) {
          warned_all_closed = true;
          // The loss gradient reopens gates from here; keep searching.
        }
      }

      if (log_step && logs)
        logs->push_back(detail::search_log_record(
            step, static_cast<int>(k), obj.value, ens,
            kind == BinarizeKind::gumbel, group.gumbel_temperature));
    }
  }

  auto retrain_probe = [&](std::size_t k, const std::vector<std::uint32_t>& sel) {
    const Dataset sub = select_fields(train, sel);
    auto probe = train_model(cfg.model, sub, cfg.embed_dim, 1, cfg.batch_size,
                             cfg.lr_network, cfg.weight_decay, cfg.seed + k,
                             "min_probe");
    return probe.epoch_losses.front();
  };
  const Aggregation how =
      cfg.method == Method::ensemble ? cfg.aggregation : Aggregation::avg;
  SearchOutput out;
  out.selection = aggregate(ens, how, cfg.target_n, retrain_probe);
  out.ensemble = std::move(ens);
  return out;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

struct ExperimentRecord {
  std::string method;
  std::uint64_t seed = 0;
  SelectionResult selection;
  double test_auc = 0.0;
  std::vector<LogRecord> logs;
  std::optional<int> recovery;  // |selected ∩ planted| when ground truth known

  nlohmann::ordered_json summary_json() const {
    nlohmann::ordered_json j;
    j["method"] = method;
    j["seed"] = seed;
    j["selected"] = selection.selected;
    j["test_auc"] = test_auc;
    j["recovery"] = recovery ? nlohmann::ordered_json(*recovery) : nullptr;
    auto search_logs = nlohmann::ordered_json::array();
    for (const auto& r : logs)
      if (r.phase == "search") search_logs.push_back(r.to_json());
    j["search_logs"] = std::move(search_logs);
    return j;
  }
};

inline int recovery_count(const SelectionResult& sel, const PlantedInfo& planted) {
  int n = 0;
  for (std::uint32_t f : sel.selected)
    for (std::uint32_t p : planted.spec.informative_fields)
      if (f == p) ++n;
  return n;
}

/// pretrain -> search -> retrain over one dataset. The split is 80/20
/// train/test, with the test half further split in two when the gate updates
/// run on a separate validation set.
inline ExperimentRecord run_pipeline(const PipelineConfig& cfg, const Dataset& data) {
  const std::size_t m = data.field_count();
  cfg.validate(m);
  const std::size_t target = cfg.method == Method::all_features ? m : cfg.target_n;

  std::vector<Dataset> parts;
  const Dataset* validation = nullptr;
  if (cfg.search_data == SearchDataMode::validation) {
    parts = split(data, {0.8, 0.1, 0.1}, derive_seed(cfg.seed, detail::kTagSplit));
    validation = &parts[1];
  } else {
    parts = split(data, {0.8, 0.2}, derive_seed(cfg.seed, detail::kTagSplit));
  }
  const Dataset& train_set = parts.front();
  const Dataset& test_set = parts.back();

  ExperimentRecord rec;
  rec.method = cfg.method_label();
  rec.seed = cfg.seed;

  switch (cfg.method) {
    case Method::random_baseline: {
      RngStream rng(derive_seed(cfg.seed, detail::kTagRandomSelection));
      rec.selection.selected = rng.sample_without_replacement(m, target);
      std::sort(rec.selection.selected.begin(), rec.selection.selected.end());
      rec.selection.aggregation = "none";
      break;
    }
    case Method::all_features: {
      rec.selection.selected.resize(m);
      std::iota(rec.selection.selected.begin(), rec.selection.selected.end(), 0u);
      rec.selection.aggregation = "none";
      break;
    }
    default: {
      auto pretrained = pretrain(cfg, train_set, &rec.logs);
      auto found = search(cfg, pretrained.store, train_set, validation, &rec.logs);
      rec.selection = std::move(found.selection);
      break;
    }
  }

  rec.test_auc = retrain(cfg, rec.selection.selected, train_set, test_set, &rec.logs);
  if (data.planted) rec.recovery = recovery_count(rec.selection, *data.planted);
  return rec;
}

}  // namespace featsel
