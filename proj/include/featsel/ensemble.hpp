#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "featsel/gating.hpp"
#include "featsel/rng.hpp"

namespace featsel {

/// K independent gate groups sharing one network. K = 1 degenerates exactly
/// to plain Gating.
struct GatingEnsemble {
  std::vector<GateGroup> groups;

  std::size_t size() const { return groups.size(); }
  std::size_t fields() const { return groups.empty() ? 0 : groups[0].size(); }

  void validate() const {
    if (groups.empty()) throw std::invalid_argument("ensemble: K must be >= 1");
    for (const auto& g : groups)
      if (g.size() != groups[0].size() || g.kind != groups[0].kind)
        throw std::invalid_argument("ensemble: groups must share M and binarize kind");
  }
};

enum class Aggregation { voting, avg, min };

inline std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::voting: return "voting";
    case Aggregation::avg: return "avg";
    case Aggregation::min: return "min";
  }
  return "?";
}

inline Aggregation aggregation_from_string(std::string_view s) {
  if (s == "voting") return Aggregation::voting;
  if (s == "avg") return Aggregation::avg;
  if (s == "min") return Aggregation::min;
  throw std::invalid_argument("unknown aggregation: " + std::string(s));
}

/// Final selection: exactly N field indices (ascending), plus the raw
/// per-group decisions and the aggregation evidence.
struct SelectionResult {
  std::vector<std::uint32_t> selected;
  std::vector<std::vector<std::uint8_t>> per_group_decisions;
  std::string aggregation;
  bool post_processed = false;
  std::vector<int> votes;          // voting only; empty otherwise
  std::vector<double> mean_alpha;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["selected"] = selected;
    j["aggregation"] = aggregation;
    if (votes.empty())
      j["votes"] = nullptr;
    else
      j["votes"] = votes;
    j["mean_alpha"] = mean_alpha;
    j["post_processed"] = post_processed;
    return j;
  }

  static SelectionResult from_json(const nlohmann::json& j) {
    SelectionResult r;
    r.selected = j.at("selected").get<std::vector<std::uint32_t>>();
    r.aggregation = j.at("aggregation").get<std::string>();
    if (!j.at("votes").is_null()) r.votes = j.at("votes").get<std::vector<int>>();
    r.mean_alpha = j.at("mean_alpha").get<std::vector<double>>();
    r.post_processed = j.at("post_processed").get<bool>();
    return r;
  }
};

inline std::size_t pick_group(const GatingEnsemble& ens, RngStream& rng) {
  ens.validate();
  return static_cast<std::size_t>(rng.below(ens.size()));
}

inline std::vector<double> ensemble_mean_alpha(const GatingEnsemble& ens) {
  ens.validate();
  const std::size_t m = ens.fields();
  std::vector<double> mean(m, 0.0);
  for (const auto& g : ens.groups)
    for (std::size_t i = 0; i < m; ++i) mean[i] += g.alpha[i];
  for (double& v : mean) v /= static_cast<double>(ens.size());
  return mean;
}

struct PostProcessOutcome {
  std::vector<std::uint32_t> selected;  // ascending
  bool changed = false;
};

/// Forces a binary decision to exactly N fields: over-target drops the open
/// fields with the smallest ranking weights, under-target adds the closed
/// fields with the largest ranking weights. Ties go to the lower index.
inline PostProcessOutcome post_process(const std::vector<std::uint8_t>& decision,
                                       const std::vector<double>& ranking,
                                       std::size_t n) {
  if (decision.size() != ranking.size())
    throw std::invalid_argument("post_process: decision/ranking length mismatch");
  if (n == 0 || n > decision.size())
    throw std::invalid_argument("post_process: n must be in [1, M]");
  std::vector<std::uint32_t> open, closed;
  for (std::uint32_t i = 0; i < decision.size(); ++i)
    (decision[i] ? open : closed).push_back(i);
  auto by_rank_desc = [&](std::uint32_t a, std::uint32_t b) {
    if (ranking[a] != ranking[b]) return ranking[a] > ranking[b];
    return a < b;
  };
  PostProcessOutcome out;
  out.changed = open.size() != n;
  if (open.size() > n) {
    std::sort(open.begin(), open.end(), by_rank_desc);
    open.resize(n);
    out.selected = std::move(open);
  } else {
    out.selected = std::move(open);
    std::sort(closed.begin(), closed.end(), by_rank_desc);
    for (std::uint32_t i : closed) {
      if (out.selected.size() == n) break;
      out.selected.push_back(i);
    }
  }
  std::sort(out.selected.begin(), out.selected.end());
  return out;
}

namespace detail {
inline std::vector<std::vector<std::uint8_t>> all_decisions(const GatingEnsemble& e) {
  std::vector<std::vector<std::uint8_t>> d;
  d.reserve(e.size());
  for (const auto& g : e.groups) d.push_back(g.decision());
  return d;
}
}  // namespace detail

/// Majority voting: the N fields with the most per-group open decisions.
/// Ties break by higher mean gate weight, then lower field index.
inline SelectionResult aggregate_voting(const GatingEnsemble& ens, std::size_t n) {
  ens.validate();
  const std::size_t m = ens.fields();
  if (n == 0 || n > m) throw std::invalid_argument("aggregate_voting: bad N");
  SelectionResult r;
  r.aggregation = "voting";
  r.per_group_decisions = detail::all_decisions(ens);
  r.mean_alpha = ensemble_mean_alpha(ens);
  r.votes.assign(m, 0);
  for (const auto& d : r.per_group_decisions)
    for (std::size_t i = 0; i < m; ++i) r.votes[i] += d[i];
  std::vector<std::uint32_t> order(m);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (r.votes[a] != r.votes[b]) return r.votes[a] > r.votes[b];
    if (r.mean_alpha[a] != r.mean_alpha[b]) return r.mean_alpha[a] > r.mean_alpha[b];
    return a < b;
  });
  r.selected.assign(order.begin(), order.begin() + n);
  std::sort(r.selected.begin(), r.selected.end());
  return r;
}

/// Mean-gate-weight aggregation: binarize the per-field mean of the gate
/// weights, then force exactly N via post-processing ranked by the mean.
inline SelectionResult aggregate_avg(const GatingEnsemble& ens, std::size_t n) {
  ens.validate();
  const std::size_t m = ens.fields();
  if (n == 0 || n > m) throw std::invalid_argument("aggregate_avg: bad N");
  SelectionResult r;
  r.aggregation = "avg";
  r.per_group_decisions = detail::all_decisions(ens);
  r.mean_alpha = ensemble_mean_alpha(ens);
  std::vector<std::uint8_t> decision(m);
  for (std::size_t i = 0; i < m; ++i) decision[i] = r.mean_alpha[i] > 0.0 ? 1 : 0;
  auto pp = post_process(decision, r.mean_alpha, n);
  r.selected = std::move(pp.selected);
  r.post_processed = pp.changed;
  return r;
}

/// Minimal-retraining-loss aggregation: each group derives its own
/// N-feature selection, retrain_loss trains a fresh model on it for one
/// epoch, and the selection of the lowest-loss group wins (ties: lower
/// group index).
inline SelectionResult aggregate_min(
    const GatingEnsemble& ens, std::size_t n,
    const std::function<double(std::size_t, const std::vector<std::uint32_t>&)>&
        retrain_loss) {
  ens.validate();
  const std::size_t m = ens.fields();
  if (n == 0 || n > m) throw std::invalid_argument("aggregate_min: bad N");
  SelectionResult r;
  r.aggregation = "min";
  r.per_group_decisions = detail::all_decisions(ens);
  r.mean_alpha = ensemble_mean_alpha(ens);
  double best_loss = 0.0;
  std::size_t best_k = 0;
  PostProcessOutcome best_pp;
  for (std::size_t k = 0; k < ens.size(); ++k) {
    auto pp = post_process(r.per_group_decisions[k], ens.groups[k].alpha, n);
    double loss;
    try {
      loss = retrain_loss(k, pp.selected);
    } catch (const std::exception& e) {
      throw std::runtime_error("aggregate_min: retrain failed for group " +
                               std::to_string(k) + ": " + e.what());
    }
    if (k == 0 || loss < best_loss) {
      best_loss = loss;
      best_k = k;
      best_pp = std::move(pp);
    }
  }
  (void)best_k;
  r.selected = std::move(best_pp.selected);
  r.post_processed = best_pp.changed;
  return r;
}

inline SelectionResult aggregate(
    const GatingEnsemble& ens, Aggregation how, std::size_t n,
    const std::function<double(std::size_t, const std::vector<std::uint32_t>&)>&
        retrain_loss = nullptr) {
  switch (how) {
    case Aggregation::voting: return aggregate_voting(ens, n);
    case Aggregation::avg: return aggregate_avg(ens, n);
    case Aggregation::min:
      if (!retrain_loss)
        throw std::invalid_argument("aggregate: min needs a retrain function");
      return aggregate_min(ens, n, retrain_loss);
  }
  throw std::logic_error("unreachable");
}

/// Mean Hamming distance between binarized decisions over all unordered
/// group pairs. Requires K >= 2.
inline double intergroup_difference(const GatingEnsemble& ens) {
  ens.validate();
  const std::size_t k = ens.size();
  if (k < 2) throw std::invalid_argument("intergroup_difference: needs K >= 2");
  const auto decisions = detail::all_decisions(ens);
  const std::size_t m = ens.fields();
  std::size_t total = 0;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b)
      for (std::size_t i = 0; i < m; ++i)
        total += decisions[a][i] != decisions[b][i] ? 1 : 0;
  return static_cast<double>(total) / (static_cast<double>(k) * (k - 1) / 2.0);
}

}  // namespace featsel
