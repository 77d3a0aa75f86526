#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "featsel/data.hpp"
#include "featsel/rng.hpp"
#include "featsel/tape.hpp"

namespace featsel {

enum class ModelKind { dcn, deepfm, autoint };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::dcn: return "dcn";
    case ModelKind::deepfm: return "deepfm";
    case ModelKind::autoint: return "autoint";
  }
  return "?";
}

inline ModelKind model_kind_from_string(std::string_view s) {
  if (s == "dcn") return ModelKind::dcn;
  if (s == "deepfm") return ModelKind::deepfm;
  if (s == "autoint") return ModelKind::autoint;
  throw std::invalid_argument("unknown model kind: " + std::string(s));
}

// Fixed interaction sizes; the pipeline is about feature selection, not
// architecture tuning, so the model zoo is small and static.
inline constexpr std::size_t kMlpHidden0 = 64;
inline constexpr std::size_t kMlpHidden1 = 32;
inline constexpr std::size_t kCrossLayers = 2;
inline constexpr std::size_t kAttnDim = 8;

namespace detail {

inline Tensor glorot_uniform(std::vector<std::size_t> shape, std::size_t fan_in,
                             std::size_t fan_out, RngStream& rng) {
  Tensor t(std::move(shape));
  const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data) v = rng.uniform(-lim, lim);
  return t;
}

inline void add_linear(ParameterStore& store, const std::string& prefix,
                       std::size_t in, std::size_t out, RngStream& rng) {
  store.add(prefix + ".w", glorot_uniform({in, out}, in, out, rng));
  store.add(prefix + ".b", Tensor({out}));
}

}  // namespace detail

/// Builds all parameters for one model over the given schema: per-field
/// embedding tables "embed.<i>" (Normal(0, 0.01^2)) followed by the
/// interaction weights of the chosen architecture (Glorot uniform, zero bias).
inline ParameterStore init_model_params(ModelKind kind, const DatasetSchema& schema,
                                        std::size_t embed_dim, RngStream& rng) {
  const std::size_t m = schema.field_count();
  ParameterStore store;
  for (std::size_t i = 0; i < m; ++i) {
    Tensor table({schema.fields[i].vocab_size, embed_dim});
    for (double& v : table.data) v = rng.normal(0.0, 0.01);
    store.add("embed." + std::to_string(i), std::move(table));
  }
  const std::size_t d = m * embed_dim;
  switch (kind) {
    case ModelKind::dcn:
      for (std::size_t l = 0; l < kCrossLayers; ++l) {
        const std::string p = "cross" + std::to_string(l);
        store.add(p + ".w", detail::glorot_uniform({d}, d, 1, rng));
        store.add(p + ".b", Tensor({d}));
      }
      detail::add_linear(store, "mlp0", d, kMlpHidden0, rng);
      detail::add_linear(store, "mlp1", kMlpHidden0, kMlpHidden1, rng);
      detail::add_linear(store, "head", kMlpHidden1, 1, rng);
      break;
    case ModelKind::deepfm:
      detail::add_linear(store, "mlp0", d, kMlpHidden0, rng);
      detail::add_linear(store, "mlp1", kMlpHidden0, kMlpHidden1, rng);
      detail::add_linear(store, "head", kMlpHidden1, 1, rng);
      break;
    case ModelKind::autoint:
      store.add("attn.wq", detail::glorot_uniform({embed_dim, kAttnDim}, embed_dim,
                                                  kAttnDim, rng));
      store.add("attn.wk", detail::glorot_uniform({embed_dim, kAttnDim}, embed_dim,
                                                  kAttnDim, rng));
      store.add("attn.wv", detail::glorot_uniform({embed_dim, kAttnDim}, embed_dim,
                                                  kAttnDim, rng));
      store.add("attn.wres", detail::glorot_uniform({embed_dim, kAttnDim}, embed_dim,
                                                    kAttnDim, rng));
      detail::add_linear(store, "head", m * kAttnDim, 1, rng);
      break;
  }
  return store;
}

/// Row lookup into the per-field embedding tables; equivalent to the one-hot
/// matrix product. Backward scatters gradients to looked-up rows only, so
/// untouched buckets keep an exactly-zero gradient.
inline Tape::NodeId embed_gather(Tape& t, ParameterStore& store,
                                 const ExampleBatch& batch, std::size_t embed_dim) {
  const std::size_t B = batch.rows, M = batch.fields, V = embed_dim;
  std::vector<Parameter*> tables(M);
  for (std::size_t i = 0; i < M; ++i) {
    tables[i] = &store.at("embed." + std::to_string(i));
    const std::size_t vocab = tables[i]->value.shape[0];
    for (std::size_t b = 0; b < B; ++b)
      if (batch.index(b, i) >= vocab)
        throw std::out_of_range("embed: index " + std::to_string(batch.index(b, i)) +
                                " out of range for field " + std::to_string(i));
  }
  Tensor out({B, M, V});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < M; ++i) {
      const double* row = tables[i]->value.data.data() + batch.index(b, i) * V;
      std::copy(row, row + V, out.data.begin() + (b * M + i) * V);
    }
  const Tape::NodeId id = t.push("embed", std::move(out));
  std::vector<std::uint32_t> idx = batch.indices;
  t.set_backward(id, [=, idx = std::move(idx), tables = std::move(tables)](Tape& tp) {
    const Tensor& g = tp.grad(id);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < M; ++i) {
        double* row = tables[i]->grad.data.data() + idx[b * M + i] * V;
        const double* src = g.data.data() + (b * M + i) * V;
        for (std::size_t v = 0; v < V; ++v) row[v] += src[v];
      }
  });
  return id;
}

namespace detail {

inline Tape::NodeId mlp_head(Tape& t, ParameterStore& s, Tape::NodeId x) {
  auto h0 = op_relu(t, op_affine(t, x, t.param_leaf(s.at("mlp0.w")),
                                 t.param_leaf(s.at("mlp0.b"))));
  auto h1 = op_relu(t, op_affine(t, h0, t.param_leaf(s.at("mlp1.w")),
                                 t.param_leaf(s.at("mlp1.b"))));
  return op_affine(t, h1, t.param_leaf(s.at("head.w")), t.param_leaf(s.at("head.b")));
}

inline Tape::NodeId flatten_fields(Tape& t, Tape::NodeId emb) {
  // [B, M, V] and [B, M*V] share the row-major layout; re-shape via a
  // pass-through node so downstream 2-D ops see the flattened view.
  const Tensor& e = t.value(emb);
  Tensor flat({e.shape[0], e.shape[1] * e.shape[2]}, e.data);
  const Tape::NodeId id = t.push("flatten", std::move(flat));
  t.set_backward(id, [=](Tape& tp) {
    const Tensor& g = tp.grad(id);
    Tensor& de = tp.grad(emb);
    for (std::size_t i = 0; i < g.numel(); ++i) de.data[i] += g.data[i];
  });
  return id;
}

inline Tape::NodeId dcn_logits(Tape& t, ParameterStore& s, Tape::NodeId emb) {
  auto x0 = flatten_fields(t, emb);
  auto x = x0;
  for (std::size_t l = 0; l < kCrossLayers; ++l) {
    const std::string p = "cross" + std::to_string(l);
    x = op_cross_layer(t, x0, x, t.param_leaf(s.at(p + ".w")),
                       t.param_leaf(s.at(p + ".b")));
  }
  return mlp_head(t, s, x);
}

inline Tape::NodeId deepfm_logits(Tape& t, ParameterStore& s, Tape::NodeId emb) {
  auto fm = op_fm_pairwise(t, emb);
  auto deep = mlp_head(t, s, flatten_fields(t, emb));
  return op_add(t, fm, deep);
}

inline Tape::NodeId autoint_logits(Tape& t, ParameterStore& s, Tape::NodeId emb) {
  auto q = op_affine(t, emb, t.param_leaf(s.at("attn.wq")));
  auto k = op_affine(t, emb, t.param_leaf(s.at("attn.wk")));
  auto v = op_affine(t, emb, t.param_leaf(s.at("attn.wv")));
  auto scores = op_bmm_nt(t, q, k, 1.0 / std::sqrt(static_cast<double>(kAttnDim)));
  auto attn = op_softmax_rows(t, scores);
  auto o = op_bmm_nn(t, attn, v);
  auto res = op_affine(t, emb, t.param_leaf(s.at("attn.wres")));
  auto h = op_relu(t, op_add(t, o, res));
  auto flat = flatten_fields(t, h);
  return op_affine(t, flat, t.param_leaf(s.at("head.w")), t.param_leaf(s.at("head.b")));
}

}  // namespace detail

/// Interaction layers plus sigmoid head over (possibly gated) [B, M, V]
/// embeddings. Returns a [B, 1] probability node. A non-finite output raises
/// with the name of the first offending layer.
inline Tape::NodeId model_forward(Tape& t, ModelKind kind, Tape::NodeId emb,
                                  ParameterStore& store) {
  Tape::NodeId logits;
  switch (kind) {
    case ModelKind::dcn: logits = detail::dcn_logits(t, store, emb); break;
    case ModelKind::deepfm: logits = detail::deepfm_logits(t, store, emb); break;
    case ModelKind::autoint: logits = detail::autoint_logits(t, store, emb); break;
    default: throw std::logic_error("unreachable");
  }
  const Tape::NodeId probs = op_sigmoid(t, logits);
  if (!t.value(probs).all_finite()) {
    auto bad = t.first_nonfinite();
    throw std::runtime_error("model_forward(" + to_string(kind) +
                             "): non-finite output, first bad layer: " +
                             (bad ? bad->first : "sigmoid"));
  }
  return probs;
}

/// Training objective value: mean BCE plus weight decay over every parameter
/// (embeddings included). The decay gradients are applied separately via
/// apply_weight_decay after the data-term backward pass.
struct Objective {
  Tape::NodeId loss_node;  // data term (BCE) on the tape
  double value = 0.0;      // BCE + wd * sum of squares
};

inline Objective training_objective(Tape& t, Tape::NodeId probs,
                                    const Tensor& labels, const ParameterStore& store,
                                    double weight_decay) {
  if (weight_decay < 0.0)
    throw std::invalid_argument("training_objective: weight_decay must be >= 0");
  Objective obj;
  obj.loss_node = op_bce(t, probs, labels);
  obj.value = t.value(obj.loss_node).data[0] +
              (weight_decay > 0.0 ? weight_decay * store.sum_squares() : 0.0);
  return obj;
}

/// grad += 2 * wd * value for every parameter.
inline void apply_weight_decay(ParameterStore& store, double weight_decay) {
  if (weight_decay == 0.0) return;
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store[i];
    for (std::size_t j = 0; j < p.value.numel(); ++j)
      p.grad.data[j] += 2.0 * weight_decay * p.value.data[j];
  }
}

}  // namespace featsel
