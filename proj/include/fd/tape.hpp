#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "fd/prng.hpp"
#include "fd/tensor.hpp"

namespace fd {

template <typename T>
class Tape;

// Handle into a tape. Cheap to copy; only valid for the tape's lifetime.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor<T>& value() const { return tape->value(id); }
};

// Reverse-mode gradient tape. Ops append nodes in execution order, which
// is a topological order of the graph, so the backward pass is a single
// reverse sweep that visits each recorded op exactly once. A tape is
// confined to one training step on one thread.
//
// Nodes whose inputs carry no gradient requirement are recorded value-only
// (no closure), so an eval-mode forward pays nothing for the tape.
template <typename T>
class Tape {
 public:
  Var<T> leaf(Tensor<T> v, bool requires_grad = false) {
    return make(std::move(v), requires_grad);
  }

  Var<T> make(Tensor<T> v, bool requires_grad) {
    nodes_.push_back(Node{std::move(v), Tensor<T>{}, nullptr, requires_grad});
    return Var<T>{this, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  void set_backward(std::int32_t id, std::function<void(Tape&)> bw) {
    nodes_[id].bw = std::move(bw);
  }

  const Tensor<T>& value(std::int32_t id) const { return nodes_[id].value; }
  const Tensor<T>& value(const Var<T>& v) const { return nodes_[v.id].value; }
  bool requires_grad(std::int32_t id) const { return nodes_[id].requires_grad; }

  // Gradient accumulated for a node; empty tensor means "never touched",
  // i.e. an exact zero.
  const Tensor<T>& grad(const Var<T>& v) const { return nodes_[v.id].grad; }
  const Tensor<T>& node_grad(std::int32_t id) const { return nodes_[id].grad; }
  bool has_grad(std::int32_t id) const { return !nodes_[id].grad.empty(); }

  // Gradient buffer for accumulation, allocated to zeros on first use.
  Tensor<T>& grad_buffer(std::int32_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
    return n.grad;
  }

  void accumulate(std::int32_t id, const Tensor<T>& g) {
    if (!nodes_[id].requires_grad) return;
    Tensor<T>& buf = grad_buffer(id);
    for (std::size_t i = 0; i < g.values.size(); ++i) buf.values[i] += g.values[i];
  }

  // Seeds d(root)/d(root) = 1 and sweeps the tape once in reverse.
  // root must be scalar.
  void backward(const Var<T>& root) {
    const Tensor<T>& v = value(root);
    if (v.numel() != 1)
      throw ShapeError("backward root must be scalar, got " + shape_str(v.shape));
    ensure_finite(v, "backward root");
    grad_buffer(root.id).values[0] += T(1);
    for (std::int32_t i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.bw && n.requires_grad) n.bw(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // lazily allocated; empty == exact zero
    std::function<void(Tape&)> bw;
    bool requires_grad;
  };
  std::vector<Node> nodes_;
};

namespace detail {

// ---- raw matrix kernels (row-major) ------------------------------------

// out[m x n] += a[m x k] * b[k x n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* orow = out + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T aik = arow[kk];
      const T* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
}

// out[m x n] += a[m x k] * b[n x k]^T  (dot products of contiguous rows)
template <typename T>
void gemm_nt(const T* a, const T* b, T* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* orow = out + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      orow[j] += acc;
    }
  }
}

// out[m x n] += a[k x m]^T * b[k x n]  (rank-1 row accumulation)
template <typename T>
void gemm_tn(const T* a, const T* b, T* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const T* arow = a + kk * m;
    const T* brow = b + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T aki = arow[i];
      T* orow = out + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aki * brow[j];
    }
  }
}

template <typename T>
bool any_requires(std::initializer_list<Var<T>> vs) {
  for (const Var<T>& v : vs)
    if (v.tape->requires_grad(v.id)) return true;
  return false;
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.value().shape) + " vs " +
                     shape_str(b.value().shape));
}

// Saturation-safe logistic; never feeds exp() a large positive argument.
inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// ---- elementwise --------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "add");
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += bv.values[i];
  ensure_finite(out, "add");
  Var<T> y = t.make(std::move(out), detail::any_requires<T>({a, b}));
  if (t.requires_grad(y.id)) {
    const auto aid = a.id, bid = b.id, yid = y.id;
    t.set_backward(yid, [aid, bid, yid](Tape<T>& tp) {
      if (!tp.has_grad(yid)) return;
      const Tensor<T>& gy = tp.node_grad(yid);
      tp.accumulate(aid, gy);
      tp.accumulate(bid, gy);
    });
  }
  return y;
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "sub");
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= bv.values[i];
  ensure_finite(out, "sub");
  Var<T> y = t.make(std::move(out), detail::any_requires<T>({a, b}));
  if (t.requires_grad(y.id)) {
    const auto aid = a.id, bid = b.id, yid = y.id;
    t.set_backward(yid, [aid, bid, yid](Tape<T>& tp) {
      if (!tp.has_grad(yid)) return;
      const Tensor<T>& gy = tp.node_grad(yid);
      tp.accumulate(aid, gy);
      if (tp.requires_grad(bid)) {
        Tensor<T>& gb = tp.grad_buffer(bid);
        for (std::size_t i = 0; i < gy.values.size(); ++i)
          gb.values[i] -= gy.values[i];
      }
    });
  }
  return y;
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "mul");
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= bv.values[i];
  ensure_finite(out, "mul");
  Var<T> y = t.make(std::move(out), detail::any_requires<T>({a, b}));
  if (t.requires_grad(y.id)) {
    const auto aid = a.id, bid = b.id, yid = y.id;
    t.set_backward(yid, [aid, bid, yid](Tape<T>& tp) {
      if (!tp.has_grad(yid)) return;
      const Tensor<T>& gy = tp.node_grad(yid);
      if (tp.requires_grad(aid)) {
        const Tensor<T>& bvv = tp.value(bid);
        Tensor<T>& ga = tp.grad_buffer(aid);
        for (std::size_t i = 0; i < gy.values.size(); ++i)
          ga.values[i] += gy.values[i] * bvv.values[i];
      }
      if (tp.requires_grad(bid)) {
        const Tensor<T>& avv = tp.value(aid);
        Tensor<T>& gb = tp.grad_buffer(bid);
        for (std::size_t i = 0; i < gy.values.size(); ++i)
          gb.values[i] += gy.values[i] * avv.values[i];
      }
    });
  }
  return y;
}

template <typename T>
Var<T> scale(Var<T> x, T c) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = x.value();
  for (T& v : out.values) v *= c;
  ensure_finite(out, "scale");
  Var<T> y = t.make(std::move(out), t.requires_grad(x.id));
  if (t.requires_grad(y.id)) {
    const auto xid = x.id, yid = y.id;
    t.set_backward(yid, [xid, yid, c](Tape<T>& tp) {
      if (!tp.has_grad(yid)) return;
      const Tensor<T>& gy = tp.node_grad(yid);
      Tensor<T>& gx = tp.grad_buffer(xid);
      for (std::size_t i = 0; i < gy.values.size(); ++i)
        gx.values[i] += c * gy.values[i];
    });
  }
  return y;
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = x.value();
  for (T& v : out.values)
    v = static_cast<T>(detail::stable_sigmoid(static_cast<double>(v)));
  ensure_finite(out, "sigmoid");
  Var<T> y = t.make(std::move(out), t.requires_grad(x.id));
  if (t.requires_grad(y.id)) {
    const auto xid = x.id, yid = y.id;
    t.set_backward(yid, [xid, yid](Tape<T>& tp) {
      if (!tp.has_grad(yid)) return;
      const Tensor<T>& gy = tp.node_grad(yid);
      const Tensor<T>& yv = tp.value(yid);
      Tensor<T>& gx = tp.grad_buffer(xid);
      for (std::size_t i = 0; i < gy.values.size(); ++i) {
        const T s = yv.values[i];
        gx.values[i] += gy.values[i] * s * (T(1) - s);
      }
    });
  }
  return y;
}

template <typename T>
Var<T> tanh(Var<T> x) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = x.value();
  for (T& v : out.values) v = std::tanh(v);
  ensure_finite(out, "tanh");
  Var<T> y = t.make(std::move(out), t.requires_grad(x.id));
  if (t.requires_grad(y.id)) {
    const auto xid = x.id, yid = y.id;
    t.set_backward(yid, [xid, yid](Tape<T>& tp) {
      if (!tp.has_grad(yid)) return;
      const Tensor<T>& gy = tp.node_grad(yid);
      const Tensor<T>& yv = tp.value(yid);
      Tensor<T>& gx = tp.grad_buffer(xid);
      for (std::size_t i = 0; i < gy.values.size(); ++i) {
        const T th = yv.values[i];
        gx.values[i] += gy.values[i] * (T(1) - th * th);
      }
    });
  }
  return y;
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tape<T>& t = *x.tape;
  Tensor<T> out = x.value();
  for (T& v : out.values) v = v > T(0) ? v : T(0);
  Var<T> y = t.make(std::move(out), t.requires_grad(x.id));
  if (t.requires_grad(y.id)) {
    const auto xid = x.id, yid = y.id;
    t.set_backward(yid, [xid, yid](Tape<T>& tp) {
      if (!tp.has_grad(yid)) return;
      const Tensor<T>& gy = tp.node_grad(yid);
      const Tensor<T>& xv = tp.value(xid);
      Tensor<T>& gx = tp.grad_buffer(xid);
      for (std::size_t i = 0; i < gy.values.size(); ++i)
        if (xv.values[i] > T(0)) gx.values[i] += gy.values[i];
    });
  }
  return y;
}

// Value copy with the gradient path severed.
template <typename T>
Var<T> detach(Var<T> x) {
  return x.tape->leaf(x.value(), false);
}

// ---- reductions / structured ops ---------------------------------------

template <typename T>
Var<T> sumall(Var<T> x) {
  Tape<T>& t = *x.tape;
  T acc = T(0);
  for (const T& v : x.value().values) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  ensure_finite(out, "sumall");
  Var<T> y = t.make(std::move(out), t.requires_grad(x.id));
  if (t.requires_grad(y.id)) {
    const auto xid = x.id, yid = y.id;
    t.set_backward(yid, [xid, yid](Tape<T>& tp) {
      if (!tp.has_grad(yid)) return;
      const T g = tp.node_grad(yid).values[0];
      Tensor<T>& gx = tp.grad_buffer(xid);
      for (T& v : gx.values) v += g;
    });
  }
  return y;
}

// Standard matrix product a[m x k] * b[k x n].
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.shape.size() != 2 || bv.shape.size() != 2 || av.shape[1] != bv.shape[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(av.shape) +
                     " vs " + shape_str(bv.shape));
  const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  Tape<T>& t = *a.tape;
  Tensor<T> out = Tensor<T>::zeros({m, n});
  detail::gemm_nn(av.values.data(), bv.values.data(), out.values.data(), m, k, n);
  ensure_finite(out, "matmul");
  Var<T> y = t.make(std::move(out), detail::any_requires<T>({a, b}));
  if (t.requires_grad(y.id)) {
    const auto aid = a.id, bid = b.id, yid = y.id;
    t.set_backward(yid, [aid, bid, yid, m, k, n](Tape<T>& tp) {
      if (!tp.has_grad(yid)) return;
      const Tensor<T>& gy = tp.node_grad(yid);
      if (tp.requires_grad(aid)) {
        // dA = dY * B^T
        detail::gemm_nt(gy.values.data(), tp.value(bid).values.data(),
                        tp.grad_buffer(aid).values.data(), m, n, k);
      }
      if (tp.requires_grad(bid)) {
        // dB = A^T * dY
        detail::gemm_tn(tp.value(aid).values.data(), gy.values.data(),
                        tp.grad_buffer(bid).values.data(), k, m, n);
      }
    });
  }
  return y;
}

// Affine map y = x * W^T + bias with W stored [out_dim x in_dim], the
// layout every parameter tensor in the project uses.
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  const Tensor<T>& bv = bias.value();
  if (xv.shape.size() != 2 || wv.shape.size() != 2 || xv.shape[1] != wv.shape[1])
    throw ShapeError("linear: input " + shape_str(xv.shape) +
                     " incompatible with weight " + shape_str(wv.shape));
  const std::size_t bsz = xv.shape[0], in = xv.shape[1], out_dim = wv.shape[0];
  if (bv.numel() != out_dim)
    throw ShapeError("linear: bias " + shape_str(bv.shape) + " vs out dim " +
                     std::to_string(out_dim));
  Tape<T>& t = *x.tape;
  Tensor<T> out({bsz, out_dim}, std::vector<T>(bsz * out_dim));
  for (std::size_t i = 0; i < bsz; ++i)
    for (std::size_t o = 0; o < out_dim; ++o) out.values[i * out_dim + o] = bv.values[o];
  detail::gemm_nt(xv.values.data(), wv.values.data(), out.values.data(), bsz, in,
                  out_dim);
  ensure_finite(out, "linear");
  Var<T> y = t.make(std::move(out), detail::any_requires<T>({x, w, bias}));
  if (t.requires_grad(y.id)) {
    const auto xid = x.id, wid = w.id, bid = bias.id, yid = y.id;
    t.set_backward(yid, [xid, wid, bid, yid, bsz, in, out_dim](Tape<T>& tp) {
      if (!tp.has_grad(yid)) return;
      const Tensor<T>& gy = tp.node_grad(yid);
      if (tp.requires_grad(xid)) {
        // dX = dY * W
        detail::gemm_nn(gy.values.data(), tp.value(wid).values.data(),
                        tp.grad_buffer(xid).values.data(), bsz, out_dim, in);
      }
      if (tp.requires_grad(wid)) {
        // dW = dY^T * X
        detail::gemm_tn(gy.values.data(), tp.value(xid).values.data(),
                        tp.grad_buffer(wid).values.data(), out_dim, bsz, in);
      }
      if (tp.requires_grad(bid)) {
        Tensor<T>& gb = tp.grad_buffer(bid);
        for (std::size_t i = 0; i < bsz; ++i)
          for (std::size_t o = 0; o < out_dim; ++o)
            gb.values[o] += gy.values[i * out_dim + o];
      }
    });
  }
  return y;
}

// Per-row selection between two same-shaped matrices: rows with mask set
// come from `on`, the rest from `off`. Gradient routes to the chosen side.
// Used to carry recurrent state unchanged across padded positions.
template <typename T>
Var<T> row_select(const std::vector<std::uint8_t>& mask, Var<T> on, Var<T> off) {
  detail::require_same_shape(on, off, "row_select");
  const Tensor<T>& onv = on.value();
  const std::size_t rows = onv.rows(), cols = onv.cols();
  if (mask.size() != rows)
    throw ShapeError("row_select: mask size " + std::to_string(mask.size()) +
                     " vs rows " + std::to_string(rows));
  Tape<T>& t = *on.tape;
  Tensor<T> out = onv;
  const Tensor<T>& offv = off.value();
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r])
      for (std::size_t c = 0; c < cols; ++c)
        out.values[r * cols + c] = offv.values[r * cols + c];
  }
  Var<T> y = t.make(std::move(out), detail::any_requires<T>({on, off}));
  if (t.requires_grad(y.id)) {
    const auto onid = on.id, offid = off.id, yid = y.id;
    t.set_backward(yid, [mask, onid, offid, yid, rows, cols](Tape<T>& tp) {
      if (!tp.has_grad(yid)) return;
      const Tensor<T>& gy = tp.node_grad(yid);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto target = mask[r] ? onid : offid;
        if (!tp.requires_grad(target)) continue;
        Tensor<T>& g = tp.grad_buffer(target);
        for (std::size_t c = 0; c < cols; ++c)
          g.values[r * cols + c] += gy.values[r * cols + c];
      }
    });
  }
  return y;
}

// (1/rows) * sum_r ||a_r - b_r||^2
template <typename T>
Var<T> mean_row_sqdist(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "mean_row_sqdist");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const std::size_t rows = av.rows();
  Tape<T>& t = *a.tape;
  T acc = T(0);
  for (std::size_t i = 0; i < av.values.size(); ++i) {
    const T d = av.values[i] - bv.values[i];
    acc += d * d;
  }
  const T inv = T(1) / static_cast<T>(rows);
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  ensure_finite(out, "mean_row_sqdist");
  Var<T> y = t.make(std::move(out), detail::any_requires<T>({a, b}));
  if (t.requires_grad(y.id)) {
    const auto aid = a.id, bid = b.id, yid = y.id;
    t.set_backward(yid, [aid, bid, yid, inv](Tape<T>& tp) {
      if (!tp.has_grad(yid)) return;
      const T g = tp.node_grad(yid).values[0];
      const Tensor<T>& av2 = tp.value(aid);
      const Tensor<T>& bv2 = tp.value(bid);
      const T c = T(2) * inv * g;
      if (tp.requires_grad(aid)) {
        Tensor<T>& ga = tp.grad_buffer(aid);
        for (std::size_t i = 0; i < av2.values.size(); ++i)
          ga.values[i] += c * (av2.values[i] - bv2.values[i]);
      }
      if (tp.requires_grad(bid)) {
        Tensor<T>& gb = tp.grad_buffer(bid);
        for (std::size_t i = 0; i < av2.values.size(); ++i)
          gb.values[i] -= c * (av2.values[i] - bv2.values[i]);
      }
    });
  }
  return y;
}

// sum over rows with mask set of ||a_r - b_r||^2 (no normalization; the
// caller divides by its own pair count).
template <typename T>
Var<T> masked_row_sqdist_sum(Var<T> a, Var<T> b,
                             const std::vector<std::uint8_t>& mask) {
  detail::require_same_shape(a, b, "masked_row_sqdist_sum");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  if (mask.size() != rows)
    throw ShapeError("masked_row_sqdist_sum: mask size " +
                     std::to_string(mask.size()) + " vs rows " +
                     std::to_string(rows));
  Tape<T>& t = *a.tape;
  T acc = T(0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    for (std::size_t c = 0; c < cols; ++c) {
      const T d = av.values[r * cols + c] - bv.values[r * cols + c];
      acc += d * d;
    }
  }
  Tensor<T> out = Tensor<T>::scalar(acc);
  ensure_finite(out, "masked_row_sqdist_sum");
  Var<T> y = t.make(std::move(out), detail::any_requires<T>({a, b}));
  if (t.requires_grad(y.id)) {
    const auto aid = a.id, bid = b.id, yid = y.id;
    t.set_backward(yid, [mask, aid, bid, yid, rows, cols](Tape<T>& tp) {
      if (!tp.has_grad(yid)) return;
      const T g = tp.node_grad(yid).values[0];
      const Tensor<T>& av2 = tp.value(aid);
      const Tensor<T>& bv2 = tp.value(bid);
      for (std::size_t r = 0; r < rows; ++r) {
        if (!mask[r]) continue;
        for (std::size_t c = 0; c < cols; ++c) {
          const std::size_t i = r * cols + c;
          const T d = T(2) * g * (av2.values[i] - bv2.values[i]);
          if (tp.requires_grad(aid)) tp.grad_buffer(aid).values[i] += d;
          if (tp.requires_grad(bid)) tp.grad_buffer(bid).values[i] -= d;
        }
      }
    });
  }
  return y;
}

// Multi-label cross entropy, summed over classes and averaged over rows:
//   L = (1/B) * sum_b sum_c -( y log yhat + (1-y) log(1-yhat) )
// with yhat clamped to [eps, 1-eps]. The clamp is a true clamp: positions
// pushed back into range propagate no gradient.
template <typename T>
Var<T> bce_multilabel_mean(Var<T> yhat, const Tensor<T>& labels, T eps) {
  const Tensor<T>& pv = yhat.value();
  if (!pv.same_shape(labels))
    throw ShapeError("bce: predictions " + shape_str(pv.shape) + " vs labels " +
                     shape_str(labels.shape));
  const std::size_t rows = pv.rows();
  Tape<T>& t = *yhat.tape;
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.values.size(); ++i) {
    double p = static_cast<double>(pv.values[i]);
    p = std::min(std::max(p, static_cast<double>(eps)),
                 1.0 - static_cast<double>(eps));
    const double yl = static_cast<double>(labels.values[i]);
    acc -= yl * std::log(p) + (1.0 - yl) * std::log(1.0 - p);
  }
  const T inv = T(1) / static_cast<T>(rows);
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc) * inv);
  ensure_finite(out, "bce_multilabel_mean");
  Var<T> y = t.make(std::move(out), t.requires_grad(yhat.id));
  if (t.requires_grad(y.id)) {
    const auto pid = yhat.id, yid = y.id;
    t.set_backward(yid, [pid, yid, labels, eps, inv](Tape<T>& tp) {
      if (!tp.has_grad(yid)) return;
      const T g = tp.node_grad(yid).values[0];
      const Tensor<T>& pv2 = tp.value(pid);
      Tensor<T>& gp = tp.grad_buffer(pid);
      for (std::size_t i = 0; i < pv2.values.size(); ++i) {
        const T p = pv2.values[i];
        if (p < eps || p > T(1) - eps) continue;  // clamped: no gradient
        const T yl = labels.values[i];
        gp.values[i] += g * inv * (-yl / p + (T(1) - yl) / (T(1) - p));
      }
    });
  }
  return y;
}

// Inverted dropout: zero each element with probability `rate`, scale the
// survivors by 1/(1-rate) so eval needs no rescaling. Eval mode returns
// the input var unchanged (bit-identical). Mask elements are drawn in
// row-major order, one uniform01 per element, kept when u >= rate.
template <typename T>
Var<T> dropout(Var<T> x, double rate, bool training, Prng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = x.value();
  Tensor<T> mask(xv.shape, std::vector<T>(xv.numel()));
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < mask.values.size(); ++i)
    mask.values[i] = rng.uniform01() >= rate ? keep_scale : T(0);
  return mul(x, t.leaf(std::move(mask), false));
}

}  // namespace fd
