#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "featsel/tensor.hpp"

namespace featsel {

/// A named dense tensor with a same-shaped gradient buffer.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape) {}
};

/// Named parameters in insertion order. Insertion order is the canonical
/// order for checkpoints, optimizer state and weight-decay sums.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value) {
    if (index_.count(name))
      throw std::invalid_argument("ParameterStore: duplicate name " + name);
    params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
    index_.emplace(params_.back()->name, params_.size() - 1);
    return *params_.back();
  }

  bool contains(std::string_view name) const {
    return index_.count(std::string(name)) != 0;
  }

  Parameter& at(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end())
      throw std::out_of_range("ParameterStore: no parameter " + std::string(name));
    return *params_[it->second];
  }
  const Parameter& at(std::string_view name) const {
    return const_cast<ParameterStore*>(this)->at(name);
  }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grads() {
    for (auto& p : params_) p->grad.fill(0.0);
  }

  double sum_squares() const {
    double s = 0.0;
    for (const auto& p : params_)
      for (double v : p->value.data) s += v * v;
    return s;
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Reverse-mode tape. Nodes are appended in forward order; backward() replays
/// their closures in exact reverse order, accumulating into per-node gradient
/// buffers and, at leaves, into external Parameter gradients.
class Tape {
 public:
  using NodeId = std::size_t;

  NodeId input(Tensor value) { return push("input", std::move(value)); }

  /// Leaf bound to an external parameter: backward adds the node gradient
  /// into the parameter's gradient buffer.
  NodeId param_leaf(Parameter& p) {
    const NodeId id = push("param", p.value);
    set_backward(id, [id, &p](Tape& t) {
      const Tensor& g = t.grad(id);
      for (std::size_t i = 0; i < g.numel(); ++i) p.grad.data[i] += g.data[i];
    });
    return id;
  }

  NodeId push(const char* op, Tensor value) {
    nodes_.push_back(Node{op, std::move(value), Tensor(), nullptr});
    nodes_.back().grad = Tensor(nodes_.back().value.shape);
    return nodes_.size() - 1;
  }

  void set_backward(NodeId id, std::function<void(Tape&)> fn) {
    nodes_[id].backward = std::move(fn);
  }

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  Tensor& grad(NodeId id) { return nodes_[id].grad; }
  const char* op(NodeId id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root) = 1 and replays recorded operations in exact reverse
  /// forward order. root must be a scalar node.
  void backward(NodeId root) {
    if (value(root).numel() != 1)
      throw std::invalid_argument("Tape::backward: root must be scalar");
    grad(root).data[0] = 1.0;
    for (std::size_t i = root + 1; i-- > 0;) {
      if (nodes_[i].backward) nodes_[i].backward(*this);
    }
  }

  /// First node (forward order) holding a non-finite value, if any.
  std::optional<std::pair<const char*, NodeId>> first_nonfinite() const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (!nodes_[i].value.all_finite()) return std::make_pair(nodes_[i].op, i);
    return std::nullopt;
  }

 private:
  struct Node {
    const char* op;
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> backward;
  };
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operations. Each op records its own backward closure; the gradient
// contracts are exercised by central-difference checks in the test suite.
// ---------------------------------------------------------------------------

/// C = A*B for 2-D nodes. dA = dC*B^T, dB = A^T*dC.
inline Tape::NodeId op_matmul(Tape& t, Tape::NodeId a, Tape::NodeId b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  Tensor out = matmul(av, bv);  // validates shapes
  const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  const Tape::NodeId id = t.push("matmul", std::move(out));
  t.set_backward(id, [=](Tape& tp) {
    auto dC = ecmap(tp.grad(id), m, n);
    auto A = ecmap(tp.value(a), m, k);
    auto B = ecmap(tp.value(b), k, n);
    emap(tp.grad(a), m, k).noalias() += dC * B.transpose();
    emap(tp.grad(b), k, n).noalias() += A.transpose() * dC;
  });
  return id;
}

/// y = x W (+ bias). x is treated as rows of length W.rows(); the output
/// keeps x's leading shape with the last dimension replaced by W.cols().
inline Tape::NodeId op_affine(Tape& t, Tape::NodeId x, Tape::NodeId w,
                              std::optional<Tape::NodeId> bias = std::nullopt) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  if (xv.rank() < 1 || wv.rank() != 2 || xv.shape.back() != wv.shape[0])
    throw std::invalid_argument("affine: dimension mismatch " +
                                shape_str(xv.shape) + " x " + shape_str(wv.shape));
  const std::size_t a = wv.shape[0], k = wv.shape[1];
  const std::size_t rows = xv.numel() / a;
  std::vector<std::size_t> out_shape(xv.shape.begin(), xv.shape.end() - 1);
  out_shape.push_back(k);
  Tensor out(out_shape);
  emap(out, rows, k).noalias() = ecmap(xv, rows, a) * ecmap(wv, a, k);
  if (bias) {
    const Tensor& bv = t.value(*bias);
    if (bv.numel() != k) throw std::invalid_argument("affine: bias length mismatch");
    auto o = emap(out, rows, k);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < k; ++c) o(r, c) += bv.data[c];
  }
  const Tape::NodeId id = t.push("affine", std::move(out));
  t.set_backward(id, [=](Tape& tp) {
    auto dY = ecmap(tp.grad(id), rows, k);
    auto X = ecmap(tp.value(x), rows, a);
    auto W = ecmap(tp.value(w), a, k);
    emap(tp.grad(x), rows, a).noalias() += dY * W.transpose();
    emap(tp.grad(w), a, k).noalias() += X.transpose() * dY;
    if (bias) {
      Tensor& db = tp.grad(*bias);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < k; ++c) db.data[c] += dY(r, c);
    }
  });
  return id;
}

/// Elementwise sum of two same-shaped nodes.
inline Tape::NodeId op_add(Tape& t, Tape::NodeId a, Tape::NodeId b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.shape != bv.shape)
    throw std::invalid_argument("add: shape mismatch " + shape_str(av.shape) +
                                " vs " + shape_str(bv.shape));
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i];
  const Tape::NodeId id = t.push("add", std::move(out));
  t.set_backward(id, [=](Tape& tp) {
    const Tensor& g = tp.grad(id);
    Tensor& da = tp.grad(a);
    Tensor& db = tp.grad(b);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      da.data[i] += g.data[i];
      db.data[i] += g.data[i];
    }
  });
  return id;
}

inline Tape::NodeId op_relu(Tape& t, Tape::NodeId x) {
  Tensor out = t.value(x);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  const Tape::NodeId id = t.push("relu", std::move(out));
  t.set_backward(id, [=](Tape& tp) {
    const Tensor& g = tp.grad(id);
    const Tensor& xv = tp.value(x);
    Tensor& dx = tp.grad(x);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (xv.data[i] > 0.0) dx.data[i] += g.data[i];
  });
  return id;
}

/// Elementwise logistic; dX = dY * y * (1 - y).
inline Tape::NodeId op_sigmoid(Tape& t, Tape::NodeId x) {
  Tensor out = t.value(x);
  for (double& v : out.data) v = sigmoid_scalar(v);
  const Tape::NodeId id = t.push("sigmoid", std::move(out));
  t.set_backward(id, [=](Tape& tp) {
    const Tensor& g = tp.grad(id);
    const Tensor& y = tp.value(id);
    Tensor& dx = tp.grad(x);
    for (std::size_t i = 0; i < g.numel(); ++i)
      dx.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
  });
  return id;
}

/// Mean binary cross-entropy with probabilities clamped to [eps, 1-eps].
/// The backward is zero on clamped entries (the clamp pins them).
inline constexpr double kBceEps = 1e-12;

inline Tape::NodeId op_bce(Tape& t, Tape::NodeId p, const Tensor& labels) {
  const Tensor& pv = t.value(p);
  if (pv.numel() != labels.numel())
    throw std::invalid_argument("bce: length mismatch " + shape_str(pv.shape) +
                                " vs " + shape_str(labels.shape));
  const std::size_t n = pv.numel();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pc = std::min(std::max(pv.data[i], kBceEps), 1.0 - kBceEps);
    const double y = labels.data[i];
    loss += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
  }
  loss /= static_cast<double>(n);
  const Tape::NodeId id = t.push("bce", Tensor({1}, {loss}));
  Tensor lab = labels;
  t.set_backward(id, [=, lab = std::move(lab)](Tape& tp) {
    const double g = tp.grad(id).data[0];
    const Tensor& pvv = tp.value(p);
    Tensor& dp = tp.grad(p);
    for (std::size_t i = 0; i < n; ++i) {
      const double raw = pvv.data[i];
      if (raw <= kBceEps || raw >= 1.0 - kBceEps) continue;
      const double y = lab.data[i];
      dp.data[i] += g * (raw - y) / (raw * (1.0 - raw)) / static_cast<double>(n);
    }
  });
  return id;
}

/// One cross layer: y = x0 .* (xl w) + b + xl, with x0, xl of shape [R, d],
/// w of shape [d] (or [d,1]) and b of shape [d].
inline Tape::NodeId op_cross_layer(Tape& t, Tape::NodeId x0, Tape::NodeId xl,
                                   Tape::NodeId w, Tape::NodeId b) {
  const Tensor& x0v = t.value(x0);
  const Tensor& xlv = t.value(xl);
  const Tensor& wv = t.value(w);
  const Tensor& bv = t.value(b);
  if (x0v.shape != xlv.shape || x0v.rank() != 2)
    throw std::invalid_argument("cross: x0/xl shape mismatch");
  const std::size_t rows = x0v.shape[0], d = x0v.shape[1];
  if (wv.numel() != d || bv.numel() != d)
    throw std::invalid_argument("cross: w/b length mismatch");
  Tensor s({rows});
  Tensor out({rows, d});
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < d; ++c) dot += xlv(r, c) * wv.data[c];
    s.data[r] = dot;
    for (std::size_t c = 0; c < d; ++c)
      out(r, c) = x0v(r, c) * dot + bv.data[c] + xlv(r, c);
  }
  const Tape::NodeId id = t.push("cross", std::move(out));
  t.set_backward(id, [=, s = std::move(s)](Tape& tp) {
    const Tensor& g = tp.grad(id);
    const Tensor& x0vv = tp.value(x0);
    const Tensor& xlvv = tp.value(xl);
    const Tensor& wvv = tp.value(w);
    Tensor& dx0 = tp.grad(x0);
    Tensor& dxl = tp.grad(xl);
    Tensor& dw = tp.grad(w);
    Tensor& db = tp.grad(b);
    for (std::size_t r = 0; r < rows; ++r) {
      double ds = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double gy = g(r, c);
        ds += gy * x0vv(r, c);
        dx0(r, c) += gy * s.data[r];
        dxl(r, c) += gy;  // identity path
        db.data[c] += gy;
      }
      for (std::size_t c = 0; c < d; ++c) {
        dxl(r, c) += ds * wvv.data[c];
        dw.data[c] += ds * xlvv(r, c);
      }
    }
  });
  return id;
}

/// Order-2 FM interaction: for emb of shape [B, M, V] returns [B, 1] with
/// y_b = sum_{i<j} e_i . e_j = 0.5 * (||sum_i e_i||^2 - sum_i ||e_i||^2).
inline Tape::NodeId op_fm_pairwise(Tape& t, Tape::NodeId emb) {
  const Tensor& e = t.value(emb);
  if (e.rank() != 3) throw std::invalid_argument("fm: expected [B,M,V] input");
  const std::size_t B = e.shape[0], M = e.shape[1], V = e.shape[2];
  Tensor sums({B, V});
  Tensor out({B, 1});
  for (std::size_t b = 0; b < B; ++b) {
    double sq_of_sum = 0.0, sum_of_sq = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      double s = 0.0;
      for (std::size_t i = 0; i < M; ++i) {
        const double x = e.data[(b * M + i) * V + v];
        s += x;
        sum_of_sq += x * x;
      }
      sums(b, v) = s;
      sq_of_sum += s * s;
    }
    out.data[b] = 0.5 * (sq_of_sum - sum_of_sq);
  }
  const Tape::NodeId id = t.push("fm_pairwise", std::move(out));
  t.set_backward(id, [=, sums = std::move(sums)](Tape& tp) {
    const Tensor& g = tp.grad(id);
    const Tensor& ev = tp.value(emb);
    Tensor& de = tp.grad(emb);
    for (std::size_t b = 0; b < B; ++b) {
      const double gy = g.data[b];
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t v = 0; v < V; ++v) {
          const std::size_t k = (b * M + i) * V + v;
          de.data[k] += gy * (sums(b, v) - ev.data[k]);
        }
    }
  });
  return id;
}

/// Batched S_b = scale * Q_b K_b^T for Q, K of shape [B, M, A].
inline Tape::NodeId op_bmm_nt(Tape& t, Tape::NodeId q, Tape::NodeId k, double scale) {
  const Tensor& qv = t.value(q);
  const Tensor& kv = t.value(k);
  if (qv.rank() != 3 || qv.shape != kv.shape)
    throw std::invalid_argument("bmm_nt: expected equal [B,M,A] inputs");
  const std::size_t B = qv.shape[0], M = qv.shape[1], A = qv.shape[2];
  Tensor out({B, M, M});
  for (std::size_t b = 0; b < B; ++b) {
    Eigen::Map<const EMat> Q(qv.data.data() + b * M * A, M, A);
    Eigen::Map<const EMat> K(kv.data.data() + b * M * A, M, A);
    Eigen::Map<EMat> S(out.data.data() + b * M * M, M, M);
    S.noalias() = scale * (Q * K.transpose());
  }
  const Tape::NodeId id = t.push("bmm_nt", std::move(out));
  t.set_backward(id, [=](Tape& tp) {
    const Tensor& g = tp.grad(id);
    const Tensor& qvv = tp.value(q);
    const Tensor& kvv = tp.value(k);
    for (std::size_t b = 0; b < B; ++b) {
      Eigen::Map<const EMat> dS(g.data.data() + b * M * M, M, M);
      Eigen::Map<const EMat> Q(qvv.data.data() + b * M * A, M, A);
      Eigen::Map<const EMat> K(kvv.data.data() + b * M * A, M, A);
      Eigen::Map<EMat> dQ(tp.grad(q).data.data() + b * M * A, M, A);
      Eigen::Map<EMat> dK(tp.grad(k).data.data() + b * M * A, M, A);
      dQ.noalias() += scale * (dS * K);
      dK.noalias() += scale * (dS.transpose() * Q);
    }
  });
  return id;
}

/// Batched O_b = A_b V_b for A of shape [B, M, M], V of shape [B, M, A].
inline Tape::NodeId op_bmm_nn(Tape& t, Tape::NodeId a, Tape::NodeId v) {
  const Tensor& av = t.value(a);
  const Tensor& vv = t.value(v);
  if (av.rank() != 3 || vv.rank() != 3 || av.shape[0] != vv.shape[0] ||
      av.shape[1] != av.shape[2] || av.shape[2] != vv.shape[1])
    throw std::invalid_argument("bmm_nn: dimension mismatch");
  const std::size_t B = av.shape[0], M = av.shape[1], A = vv.shape[2];
  Tensor out({B, M, A});
  for (std::size_t b = 0; b < B; ++b) {
    Eigen::Map<const EMat> Ab(av.data.data() + b * M * M, M, M);
    Eigen::Map<const EMat> Vb(vv.data.data() + b * M * A, M, A);
    Eigen::Map<EMat> Ob(out.data.data() + b * M * A, M, A);
    Ob.noalias() = Ab * Vb;
  }
  const Tape::NodeId id = t.push("bmm_nn", std::move(out));
  t.set_backward(id, [=](Tape& tp) {
    const Tensor& g = tp.grad(id);
    const Tensor& avv = tp.value(a);
    const Tensor& vvv = tp.value(v);
    for (std::size_t b = 0; b < B; ++b) {
      Eigen::Map<const EMat> dO(g.data.data() + b * M * A, M, A);
      Eigen::Map<const EMat> Ab(avv.data.data() + b * M * M, M, M);
      Eigen::Map<const EMat> Vb(vvv.data.data() + b * M * A, M, A);
      Eigen::Map<EMat> dA(tp.grad(a).data.data() + b * M * M, M, M);
      Eigen::Map<EMat> dV(tp.grad(v).data.data() + b * M * A, M, A);
      dA.noalias() += dO * Vb.transpose();
      dV.noalias() += Ab.transpose() * dO;
    }
  });
  return id;
}

/// Row-stable softmax over the last dimension.
inline Tape::NodeId op_softmax_rows(Tape& t, Tape::NodeId x) {
  const Tensor& xv = t.value(x);
  if (xv.rank() < 1) throw std::invalid_argument("softmax: rank-0 input");
  const std::size_t L = xv.shape.back();
  const std::size_t rows = xv.numel() / L;
  Tensor out = xv;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data.data() + r * L;
    double mx = row[0];
    for (std::size_t c = 1; c < L; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < L; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (std::size_t c = 0; c < L; ++c) row[c] /= sum;
  }
  const Tape::NodeId id = t.push("softmax", std::move(out));
  t.set_backward(id, [=](Tape& tp) {
    const Tensor& g = tp.grad(id);
    const Tensor& y = tp.value(id);
    Tensor& dx = tp.grad(x);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gr = g.data.data() + r * L;
      const double* yr = y.data.data() + r * L;
      double dot = 0.0;
      for (std::size_t c = 0; c < L; ++c) dot += gr[c] * yr[c];
      double* dr = dx.data.data() + r * L;
      for (std::size_t c = 0; c < L; ++c) dr[c] += yr[c] * (gr[c] - dot);
    }
  });
  return id;
}

}  // namespace featsel
