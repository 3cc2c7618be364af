#pragma once

#include <memory>
#include <string>
#include <utility>

#include "fd/params.hpp"
#include "fd/tape.hpp"
#include "fd/tensor.hpp"

namespace fd {

// One LSTM cell of a stack. Weight rows partition into gate order
// (input, forget, candidate, output): rows [0,H) input gate, [H,2H)
// forget, [2H,3H) candidate, [3H,4H) output. Checkpoint portability
// depends on this ordering, so it is fixed here and nowhere else.
template <typename T>
struct LstmCellParams {
  Var<T> input_weights;      // [4H x D]
  Var<T> recurrent_weights;  // [4H x H]
  Var<T> biases;             // [4H]
  std::size_t hidden = 0;    // H
  std::size_t input = 0;     // D
};

// Creates the three tensors of one cell under `prefix` ("<prefix>/w_x",
// "<prefix>/w_h", "<prefix>/b"). Forget-gate bias rows start at 1.0, all
// other biases at 0; weights are uniform with fan-in scaling.
template <typename T>
void init_lstm_cell(ParameterStore<T>& store, const std::string& prefix,
                    std::size_t input_dim, std::size_t hidden,
                    std::uint64_t seed) {
  store.emplace(prefix + "/w_x",
                init_uniform_fanin<T>({4 * hidden, input_dim}, seed, prefix + "/w_x"));
  store.emplace(prefix + "/w_h",
                init_uniform_fanin<T>({4 * hidden, hidden}, seed, prefix + "/w_h"));
  Tensor<T> b = Tensor<T>::zeros({4 * hidden});
  for (std::size_t i = hidden; i < 2 * hidden; ++i) b.values[i] = T(1);
  store.emplace(prefix + "/b", std::move(b));
}

template <typename T>
LstmCellParams<T> bind_lstm_cell(Tape<T>& tape, ParameterStore<T>& store,
                                 const std::string& prefix, bool requires_grad) {
  LstmCellParams<T> p;
  p.input_weights = tape.leaf(store.at(prefix + "/w_x"), requires_grad);
  p.recurrent_weights = tape.leaf(store.at(prefix + "/w_h"), requires_grad);
  p.biases = tape.leaf(store.at(prefix + "/b"), requires_grad);
  p.hidden = p.recurrent_weights.value().shape[1];
  p.input = p.input_weights.value().shape[1];
  return p;
}

namespace detail {

template <typename T>
struct LstmStepAux {
  Tensor<T> gate_i, gate_f, gate_g, gate_o, tanh_c;
  std::int32_t h_id = -1, c_id = -1;
};

}  // namespace detail

// One recurrence step of the canonical gated LSTM:
//   i,f,o = sigmoid gates, g = tanh candidate,
//   c = f (*) c_prev + i (*) g,   h = o (*) tanh(c).
// Implemented as a single fused tape op (two GEMMs plus pointwise work)
// with a hand-derived backward; the gradient checker pins it against
// central finite differences.
template <typename T>
std::pair<Var<T>, Var<T>> lstm_cell_step(const LstmCellParams<T>& p, Var<T> x,
                                         Var<T> h_prev, Var<T> c_prev) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = x.value();
  const Tensor<T>& hv = h_prev.value();
  const Tensor<T>& cv = c_prev.value();
  const std::size_t B = xv.rows(), H = p.hidden, D = p.input;
  if (xv.cols() != D)
    throw ShapeError("lstm_cell_step: input " + shape_str(xv.shape) +
                     " vs weights " + shape_str(p.input_weights.value().shape));
  if (hv.rows() != B || hv.cols() != H || cv.rows() != B || cv.cols() != H)
    throw ShapeError("lstm_cell_step: state " + shape_str(hv.shape) + "/" +
                     shape_str(cv.shape) + " vs expected [" + std::to_string(B) +
                     "x" + std::to_string(H) + "]");

  const Tensor<T>& wx = p.input_weights.value();
  const Tensor<T>& wh = p.recurrent_weights.value();
  const Tensor<T>& bias = p.biases.value();

  // z = x*Wx^T + h_prev*Wh^T + b, columns grouped by gate.
  Tensor<T> z({B, 4 * H}, std::vector<T>(B * 4 * H));
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t g = 0; g < 4 * H; ++g) z.values[i * 4 * H + g] = bias.values[g];
  detail::gemm_nt(xv.values.data(), wx.values.data(), z.values.data(), B, D, 4 * H);
  detail::gemm_nt(hv.values.data(), wh.values.data(), z.values.data(), B, H, 4 * H);

  auto aux = std::make_shared<detail::LstmStepAux<T>>();
  aux->gate_i = Tensor<T>::zeros({B, H});
  aux->gate_f = Tensor<T>::zeros({B, H});
  aux->gate_g = Tensor<T>::zeros({B, H});
  aux->gate_o = Tensor<T>::zeros({B, H});
  aux->tanh_c = Tensor<T>::zeros({B, H});
  Tensor<T> h_out = Tensor<T>::zeros({B, H});
  Tensor<T> c_out = Tensor<T>::zeros({B, H});

  for (std::size_t b = 0; b < B; ++b) {
    const T* zrow = z.values.data() + b * 4 * H;
    for (std::size_t j = 0; j < H; ++j) {
      const T gi = static_cast<T>(detail::stable_sigmoid(static_cast<double>(zrow[j])));
      const T gf = static_cast<T>(detail::stable_sigmoid(static_cast<double>(zrow[H + j])));
      const T gg = std::tanh(zrow[2 * H + j]);
      const T go = static_cast<T>(detail::stable_sigmoid(static_cast<double>(zrow[3 * H + j])));
      const std::size_t idx = b * H + j;
      const T c_new = gf * cv.values[idx] + gi * gg;
      const T tc = std::tanh(c_new);
      aux->gate_i.values[idx] = gi;
      aux->gate_f.values[idx] = gf;
      aux->gate_g.values[idx] = gg;
      aux->gate_o.values[idx] = go;
      aux->tanh_c.values[idx] = tc;
      c_out.values[idx] = c_new;
      h_out.values[idx] = go * tc;
    }
  }
  ensure_finite(h_out, "lstm_cell_step");
  ensure_finite(c_out, "lstm_cell_step");

  const bool rg = detail::any_requires<T>(
      {p.input_weights, p.recurrent_weights, p.biases, x, h_prev, c_prev});
  Var<T> h = t.make(std::move(h_out), rg);
  Var<T> c = t.make(std::move(c_out), rg);
  aux->h_id = h.id;
  aux->c_id = c.id;

  if (rg) {
    const auto wx_id = p.input_weights.id, wh_id = p.recurrent_weights.id,
               b_id = p.biases.id, x_id = x.id, hp_id = h_prev.id, cp_id = c_prev.id;
    // Backward lives on the h node (the earlier id): by the time the
    // reverse sweep reaches it, both h and c grads are complete.
    t.set_backward(h.id, [aux, wx_id, wh_id, b_id, x_id, hp_id, cp_id, B, H,
                          D](Tape<T>& tp) {
      const bool gh = tp.has_grad(aux->h_id);
      const bool gc = tp.has_grad(aux->c_id);
      if (!gh && !gc) return;
      const Tensor<T>* dh = gh ? &tp.node_grad(aux->h_id) : nullptr;
      const Tensor<T>* dc_out = gc ? &tp.node_grad(aux->c_id) : nullptr;
      const Tensor<T>& cpv = tp.value(cp_id);

      Tensor<T> dz({B, 4 * H}, std::vector<T>(B * 4 * H));
      Tensor<T> dcp = Tensor<T>::zeros({B, H});
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t j = 0; j < H; ++j) {
          const std::size_t idx = b * H + j;
          const T gi = aux->gate_i.values[idx];
          const T gf = aux->gate_f.values[idx];
          const T gg = aux->gate_g.values[idx];
          const T go = aux->gate_o.values[idx];
          const T tc = aux->tanh_c.values[idx];
          const T dh_v = gh ? dh->values[idx] : T(0);
          const T dc_v = (gc ? dc_out->values[idx] : T(0)) +
                         dh_v * go * (T(1) - tc * tc);
          const T do_v = dh_v * tc;
          T* dzrow = dz.values.data() + b * 4 * H;
          dzrow[j] = dc_v * gg * gi * (T(1) - gi);
          dzrow[H + j] = dc_v * cpv.values[idx] * gf * (T(1) - gf);
          dzrow[2 * H + j] = dc_v * gi * (T(1) - gg * gg);
          dzrow[3 * H + j] = do_v * go * (T(1) - go);
          dcp.values[idx] = dc_v * gf;
        }
      }
      if (tp.requires_grad(cp_id)) tp.accumulate(cp_id, dcp);
      if (tp.requires_grad(x_id))
        detail::gemm_nn(dz.values.data(), tp.value(wx_id).values.data(),
                        tp.grad_buffer(x_id).values.data(), B, 4 * H, D);
      if (tp.requires_grad(hp_id))
        detail::gemm_nn(dz.values.data(), tp.value(wh_id).values.data(),
                        tp.grad_buffer(hp_id).values.data(), B, 4 * H, H);
      if (tp.requires_grad(wx_id))
        detail::gemm_tn(dz.values.data(), tp.value(x_id).values.data(),
                        tp.grad_buffer(wx_id).values.data(), 4 * H, B, D);
      if (tp.requires_grad(wh_id))
        detail::gemm_tn(dz.values.data(), tp.value(hp_id).values.data(),
                        tp.grad_buffer(wh_id).values.data(), 4 * H, B, H);
      if (tp.requires_grad(b_id)) {
        Tensor<T>& gb = tp.grad_buffer(b_id);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t g = 0; g < 4 * H; ++g)
            gb.values[g] += dz.values[b * 4 * H + g];
      }
    });
  }
  return {h, c};
}

}  // namespace fd
