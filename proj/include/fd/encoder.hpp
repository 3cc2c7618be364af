#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "fd/data.hpp"
#include "fd/lstm.hpp"
#include "fd/params.hpp"
#include "fd/tape.hpp"

namespace fd {

// Hierarchical two-level recurrent encoder: a lower-level stacked LSTM
// encodes each block of `block_len` frames (state reset at every block
// boundary), and an upper-level stacked LSTM encodes the sequence of block
// encodings. The video encoding is the upper top-layer hidden state after
// the last real block.
struct EncoderConfig {
  std::size_t feature_dim = 16;   // D
  std::size_t block_len = 20;     // m, frames per block
  std::size_t num_layers = 2;     // stacked LSTM layers per level
  std::size_t cell_size = 32;     // H, lower-level hidden size
  std::size_t encoding_dim = 32;  // E, upper-level hidden size = dim of E_T/E_S

  void validate() const {
    if (feature_dim < 1 || block_len < 1 || num_layers < 1 || cell_size < 1 ||
        encoding_dim < 1)
      throw ConfigError("encoder config: all extents must be >= 1");
  }
};

// Dropout applies to the classifier hidden layer only; the recurrent
// stacks stay clean (dropout inside short-block recurrences at this scale
// mostly starves optimization rather than regularizing). `seed` is
// pre-derived per (run, network, epoch, step); sites add their own tag so
// mask streams are independent of evaluation order.
struct DropoutPlan {
  double rate = 0.0;
  bool training = false;
  std::uint64_t seed = 0;

  static DropoutPlan eval() { return DropoutPlan{}; }
};

template <typename T>
struct EncoderLeaves {
  std::vector<LstmCellParams<T>> lower, upper;
};

// Parameters live under "<prefix>/lower/l<i>/{w_x,w_h,b}" and
// "<prefix>/upper/l<i>/{w_x,w_h,b}".
template <typename T>
void init_encoder(ParameterStore<T>& store, const std::string& prefix,
                  const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    init_lstm_cell(store, prefix + "/lower/l" + std::to_string(l),
                   l == 0 ? cfg.feature_dim : cfg.cell_size, cfg.cell_size, seed);
    init_lstm_cell(store, prefix + "/upper/l" + std::to_string(l),
                   l == 0 ? cfg.cell_size : cfg.encoding_dim, cfg.encoding_dim,
                   seed);
  }
}

template <typename T>
EncoderLeaves<T> bind_encoder(Tape<T>& tape, ParameterStore<T>& store,
                              const std::string& prefix, const EncoderConfig& cfg,
                              bool requires_grad) {
  EncoderLeaves<T> net;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    net.lower.push_back(bind_lstm_cell(tape, store,
                                       prefix + "/lower/l" + std::to_string(l),
                                       requires_grad));
    net.upper.push_back(bind_lstm_cell(tape, store,
                                       prefix + "/upper/l" + std::to_string(l),
                                       requires_grad));
  }
  return net;
}

// Builds EncoderLeaves from pre-bound vars (the gradient checker binds all
// parameters itself and hands out a name -> Var map).
template <typename T>
EncoderLeaves<T> encoder_from_leaves(const std::map<std::string, Var<T>>& leaves,
                                     const std::string& prefix,
                                     const EncoderConfig& cfg) {
  auto cell = [&](const std::string& p) {
    LstmCellParams<T> c;
    c.input_weights = leaves.at(p + "/w_x");
    c.recurrent_weights = leaves.at(p + "/w_h");
    c.biases = leaves.at(p + "/b");
    c.hidden = c.recurrent_weights.value().shape[1];
    c.input = c.input_weights.value().shape[1];
    return c;
  };
  EncoderLeaves<T> net;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    net.lower.push_back(cell(prefix + "/lower/l" + std::to_string(l)));
    net.upper.push_back(cell(prefix + "/upper/l" + std::to_string(l)));
  }
  return net;
}

// Encoder output. frame_states[t] is the lower-level top-layer hidden state
// at position t; batch->frame_indices maps positions back to absolute frame
// indices so teacher and student states can be aligned.
template <typename T>
struct VideoEncoding {
  Var<T> final;                      // [B x E]
  std::vector<Var<T>> frame_states;  // per position, [B x H]
  const Batch* batch = nullptr;
};

namespace detail {

template <typename T>
Tensor<T> position_as(const Batch& batch, std::size_t t) {
  if constexpr (std::is_same_v<T, float>) return batch.position(t);
  else return batch.position(t).template cast<T>();
}

inline bool all_set(const std::vector<std::uint8_t>& m) {
  return std::all_of(m.begin(), m.end(), [](std::uint8_t v) { return v != 0; });
}
inline bool none_set(const std::vector<std::uint8_t>& m) {
  return std::none_of(m.begin(), m.end(), [](std::uint8_t v) { return v != 0; });
}

// One masked step of a stacked LSTM level. Rows with mask clear carry
// their previous state unchanged.
template <typename T>
void stack_step(std::vector<LstmCellParams<T>> const& cells, Var<T> x,
                const std::vector<std::uint8_t>& mask_t,
                std::vector<Var<T>>& h, std::vector<Var<T>>& c) {
  const bool full = all_set(mask_t);
  Var<T> input = x;
  for (std::size_t l = 0; l < cells.size(); ++l) {
    auto [h_new, c_new] = lstm_cell_step(cells[l], input, h[l], c[l]);
    if (full) {
      h[l] = h_new;
      c[l] = c_new;
    } else {
      h[l] = row_select(mask_t, h_new, h[l]);
      c[l] = row_select(mask_t, c_new, c[l]);
    }
    input = h[l];
  }
}

}  // namespace detail

// Runs the hierarchical encoder over a padded batch. Splits the T positions
// into ceil(T/m) blocks, encodes each block with the lower level (state
// reset per block, padded rows masked out), then the block encodings with
// the upper level. Positions past a video's last frame never alter its
// state, so appending padding cannot change the result.
template <typename T>
VideoEncoding<T> encode(Tape<T>& tape, const EncoderConfig& cfg,
                        const EncoderLeaves<T>& net, const Batch& batch) {
  cfg.validate();
  const std::size_t B = batch.batch(), Tlen = batch.time(), D = batch.dim();
  if (Tlen == 0) throw BoundsError("encode: zero-length sequence");
  if (D != cfg.feature_dim)
    throw ShapeError("encode: batch feature dim " + std::to_string(D) +
                     " vs config " + std::to_string(cfg.feature_dim));

  const std::size_t H = cfg.cell_size, E = cfg.encoding_dim, m = cfg.block_len;
  const std::size_t blocks = (Tlen + m - 1) / m;

  VideoEncoding<T> out;
  out.batch = &batch;
  out.frame_states.resize(Tlen);

  std::vector<Var<T>> block_feed;
  std::vector<std::vector<std::uint8_t>> block_valid;
  block_feed.reserve(blocks);

  Var<T> zero_h = tape.leaf(Tensor<T>::zeros({B, H}), false);
  for (std::size_t k = 0; k < blocks; ++k) {
    std::vector<Var<T>> h(cfg.num_layers, zero_h), c(cfg.num_layers, zero_h);
    const std::size_t t0 = k * m, t1 = std::min(t0 + m, Tlen);
    for (std::size_t t = t0; t < t1; ++t) {
      const auto mask_t = batch.valid(t);
      if (detail::none_set(mask_t)) {
        out.frame_states[t] = h.back();
        continue;
      }
      Var<T> x = tape.leaf(detail::position_as<T>(batch, t), false);
      detail::stack_step(net.lower, x, mask_t, h, c);
      out.frame_states[t] = h.back();
    }
    block_feed.push_back(h.back());
    std::vector<std::uint8_t> bv(B);
    for (std::size_t b = 0; b < B; ++b)
      bv[b] = t0 < batch.frame_indices[b].size() ? 1 : 0;
    block_valid.push_back(std::move(bv));
  }

  Var<T> zero_e = tape.leaf(Tensor<T>::zeros({B, E}), false);
  std::vector<Var<T>> uh(cfg.num_layers, zero_e), uc(cfg.num_layers, zero_e);
  for (std::size_t k = 0; k < blocks; ++k) {
    if (detail::none_set(block_valid[k])) continue;
    detail::stack_step(net.upper, block_feed[k], block_valid[k], uh, uc);
  }
  out.final = uh.back();
  return out;
}

// ---- classifier head ------------------------------------------------------

// Feedforward head: one hidden layer, then a C-wide output layer with an
// independent sigmoid per class (multi-label; outputs need not sum to 1).
struct HeadConfig {
  std::size_t encoding_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t classes = 8;
};

template <typename T>
struct HeadLeaves {
  Var<T> w_hidden, b_hidden, w_out, b_out;
};

template <typename T>
void init_head(ParameterStore<T>& store, const std::string& prefix,
               const HeadConfig& cfg, std::uint64_t seed) {
  store.emplace(prefix + "/hidden/w",
                init_uniform_fanin<T>({cfg.hidden_dim, cfg.encoding_dim}, seed,
                                      prefix + "/hidden/w"));
  store.emplace(prefix + "/hidden/b", Tensor<T>::zeros({cfg.hidden_dim}));
  store.emplace(prefix + "/out/w",
                init_uniform_fanin<T>({cfg.classes, cfg.hidden_dim}, seed,
                                      prefix + "/out/w"));
  store.emplace(prefix + "/out/b", Tensor<T>::zeros({cfg.classes}));
}

template <typename T>
HeadLeaves<T> bind_head(Tape<T>& tape, ParameterStore<T>& store,
                        const std::string& prefix, bool requires_grad) {
  HeadLeaves<T> h;
  h.w_hidden = tape.leaf(store.at(prefix + "/hidden/w"), requires_grad);
  h.b_hidden = tape.leaf(store.at(prefix + "/hidden/b"), requires_grad);
  h.w_out = tape.leaf(store.at(prefix + "/out/w"), requires_grad);
  h.b_out = tape.leaf(store.at(prefix + "/out/b"), requires_grad);
  return h;
}

template <typename T>
HeadLeaves<T> head_from_leaves(const std::map<std::string, Var<T>>& leaves,
                               const std::string& prefix) {
  return HeadLeaves<T>{leaves.at(prefix + "/hidden/w"), leaves.at(prefix + "/hidden/b"),
                       leaves.at(prefix + "/out/w"), leaves.at(prefix + "/out/b")};
}

template <typename T>
Var<T> classify(Tape<T>& tape, const HeadLeaves<T>& head, Var<T> encoding,
                const DropoutPlan& drop = DropoutPlan::eval()) {
  Var<T> hidden = relu(linear(encoding, head.w_hidden, head.b_hidden));
  if (drop.training && drop.rate > 0.0) {
    Prng rng = substream(drop.seed, "head");
    hidden = dropout(hidden, drop.rate, true, rng);
  }
  (void)tape;
  return sigmoid(linear(hidden, head.w_out, head.b_out));
}

// ---- teacher/student state alignment ---------------------------------------

// Which (teacher position, student position) hold the same absolute frame,
// per video. Alignment is structural: it depends only on the frame index
// bookkeeping, not on parameter values.
struct StatePairs {
  struct Pair {
    std::size_t video;
    std::size_t student_pos;
    std::size_t teacher_pos;
  };
  std::vector<Pair> pairs;

  std::size_t size() const { return pairs.size(); }
};

inline StatePairs align_positions(const Batch& teacher, const Batch& student) {
  if (teacher.batch() != student.batch())
    throw ShapeError("align_states: teacher batch " + std::to_string(teacher.batch()) +
                     " vs student batch " + std::to_string(student.batch()));
  StatePairs out;
  for (std::size_t b = 0; b < teacher.batch(); ++b) {
    std::unordered_map<std::size_t, std::size_t> teacher_pos;
    for (std::size_t p = 0; p < teacher.frame_indices[b].size(); ++p)
      teacher_pos.emplace(teacher.frame_indices[b][p], p);
    for (std::size_t p = 0; p < student.frame_indices[b].size(); ++p) {
      const std::size_t abs = student.frame_indices[b][p];
      auto it = teacher_pos.find(abs);
      if (it == teacher_pos.end())
        throw BoundsError("align_states: student frame " + std::to_string(abs) +
                          " of video '" + student.ids[b] +
                          "' absent from teacher selection");
      out.pairs.push_back(StatePairs::Pair{b, p, it->second});
    }
  }
  return out;
}

template <typename T>
StatePairs align_states(const VideoEncoding<T>& teacher,
                        const VideoEncoding<T>& student) {
  return align_positions(*teacher.batch, *student.batch);
}

}  // namespace fd
