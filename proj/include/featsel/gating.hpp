#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "featsel/rng.hpp"
#include "featsel/tape.hpp"
#include "featsel/tensor.hpp"

namespace featsel {

enum class BinarizeKind { ste, gumbel };

/// One gate group: a real-valued weight per feature field. The sign of each
/// weight is the hard gate decision; the surrogate used for gradients
/// depends on the binarize kind.
struct GateGroup {
  std::vector<double> alpha;
  std::vector<double> alpha_grad;
  BinarizeKind kind = BinarizeKind::ste;
  double gumbel_temperature = 1e-3;

  std::size_t size() const { return alpha.size(); }

  void zero_grad() { std::fill(alpha_grad.begin(), alpha_grad.end(), 0.0); }

  std::vector<std::uint8_t> decision() const {
    std::vector<std::uint8_t> d(alpha.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) d[i] = alpha[i] > 0.0 ? 1 : 0;
    return d;
  }

  std::size_t open_count() const {
    std::size_t n = 0;
    for (double a : alpha) n += a > 0.0 ? 1 : 0;
    return n;
  }
};

enum class GateInitMode { constant, random_uniform };

inline std::string to_string(GateInitMode m) {
  return m == GateInitMode::constant ? "constant" : "random";
}

inline GateInitMode gate_init_mode_from_string(std::string_view s) {
  if (s == "constant") return GateInitMode::constant;
  if (s == "random") return GateInitMode::random_uniform;
  throw std::invalid_argument("unknown init_mode: " + std::string(s));
}

/// Gate weight initialization. Random mode draws from
/// Uniform(-c*(1-p), c*p) so a fraction p of gates starts open.
struct GateInitSpec {
  GateInitMode mode = GateInitMode::constant;
  double open_fraction = 0.8;   // p
  double magnitude = 0.01;      // c
  double constant_value = 0.008;  // defaults to +c*p

  void validate() const {
    if (!(open_fraction > 0.0 && open_fraction < 1.0))
      throw std::invalid_argument("gate init: open_fraction must be in (0,1)");
    if (!(magnitude > 0.0))
      throw std::invalid_argument("gate init: magnitude must be > 0");
  }
};

/// Hard threshold: 1 iff alpha > 0. The straight-through surrogate treats
/// this as the identity in the backward pass.
inline double binarize_ste(double alpha) { return alpha > 0.0 ? 1.0 : 0.0; }

inline double ste_surrogate_backward(double upstream) { return upstream; }

inline double gumbel_noise(RngStream& rng) {
  double u = rng.uniform01();
  u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
  return -std::log(-std::log(u));
}

/// Gumbel-Sigmoid with explicit noise values (two independent samples).
inline double binarize_gumbel_from_noise(double alpha, double gamma, double gk,
                                         double gl) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gumbel: gamma must be > 0");
  return sigmoid_scalar((alpha + gk - gl) / gamma);
}

/// Soft gate in (0,1): sigmoid((alpha + g_k - g_l) / gamma).
inline double binarize_gumbel(double alpha, double gamma, RngStream& rng) {
  const double gk = gumbel_noise(rng);
  const double gl = gumbel_noise(rng);
  return binarize_gumbel_from_noise(alpha, gamma, gk, gl);
}

inline GateGroup init_gates(const GateInitSpec& spec, std::size_t m,
                            std::uint64_t seed) {
  spec.validate();
  GateGroup g;
  g.alpha.resize(m);
  g.alpha_grad.assign(m, 0.0);
  if (spec.mode == GateInitMode::constant) {
    std::fill(g.alpha.begin(), g.alpha.end(), spec.constant_value);
  } else {
    RngStream rng(derive_seed(seed, 55));
    const double lo = -spec.magnitude * (1.0 - spec.open_fraction);
    const double hi = spec.magnitude * spec.open_fraction;
    for (double& a : g.alpha) a = rng.uniform(lo, hi);
  }
  return g;
}

/// Sparse-count regularizer: the open-gate count when it exceeds the target,
/// zero otherwise. Going under target is never penalized. The gradient runs
/// through the straight-through surrogate: 1 for every gate weight while over
/// target, 0 otherwise. The caller scales by beta_s.
struct SparseReg {
  double value = 0.0;
  std::vector<double> alpha_grad;
};

inline SparseReg sparse_regularizer(const GateGroup& group, std::size_t target) {
  if (target == 0 || target > group.size())
    throw std::invalid_argument("sparse_regularizer: target must be in [1, M]");
  SparseReg r;
  r.alpha_grad.assign(group.size(), 0.0);
  const std::size_t open = group.open_count();
  if (open > target) {
    r.value = static_cast<double>(open);
    std::fill(r.alpha_grad.begin(), r.alpha_grad.end(), 1.0);
  }
  return r;
}

/// Geometric temperature schedule from 1e-3 down to 1e-4.
inline double anneal_temperature(std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return 1e-3;
  if (step > total_steps)
    throw std::invalid_argument("anneal_temperature: step beyond total");
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return 1e-3 * std::pow(0.1, frac);
}

/// Masks a [B, M, V] embedding node per field with the group's gates.
/// Backward routes gradients both to the embeddings (scaled by the gate
/// value, exactly zero through a closed STE gate) and to the gate weights
/// through the binarize surrogate. Gumbel noise is drawn fresh per field per
/// forward pass.
inline Tape::NodeId apply_gates(Tape& t, Tape::NodeId emb, GateGroup& group,
                                RngStream* noise_rng = nullptr) {
  const Tensor& e = t.value(emb);
  if (e.rank() != 3) throw std::invalid_argument("apply_gates: expected [B,M,V]");
  const std::size_t B = e.shape[0], M = e.shape[1], V = e.shape[2];
  if (M != group.size())
    throw std::invalid_argument("apply_gates: group has " +
                                std::to_string(group.size()) + " gates, batch has " +
                                std::to_string(M) + " fields");
  std::vector<double> gates(M), dg_dalpha(M);
  if (group.kind == BinarizeKind::ste) {
    for (std::size_t i = 0; i < M; ++i) {
      gates[i] = binarize_ste(group.alpha[i]);
      dg_dalpha[i] = 1.0;  // identity surrogate
    }
  } else {
    if (noise_rng == nullptr)
      throw std::invalid_argument("apply_gates: gumbel gates need an rng");
    const double gamma = group.gumbel_temperature;
    for (std::size_t i = 0; i < M; ++i) {
      gates[i] = binarize_gumbel(group.alpha[i], gamma, *noise_rng);
      dg_dalpha[i] = gates[i] * (1.0 - gates[i]) / gamma;
    }
  }
  Tensor out({B, M, V});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < M; ++i) {
      const double g = gates[i];
      const std::size_t base = (b * M + i) * V;
      for (std::size_t v = 0; v < V; ++v) out.data[base + v] = g * e.data[base + v];
    }
  GateGroup* grp = &group;
  const Tape::NodeId id = t.push("apply_gates", std::move(out));
  t.set_backward(id, [=, gates = std::move(gates),
                      dg = std::move(dg_dalpha)](Tape& tp) {
    const Tensor& up = tp.grad(id);
    const Tensor& ev = tp.value(emb);
    Tensor& de = tp.grad(emb);
    for (std::size_t i = 0; i < M; ++i) {
      const double g = gates[i];
      double dot = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t base = (b * M + i) * V;
        for (std::size_t v = 0; v < V; ++v) {
          dot += up.data[base + v] * ev.data[base + v];
          de.data[base + v] += g * up.data[base + v];
        }
      }
      grp->alpha_grad[i] += dot * dg[i];
    }
  });
  return id;
}

}  // namespace featsel
