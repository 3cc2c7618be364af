#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "fd/encoder.hpp"
#include "fd/tape.hpp"

namespace fd {

enum class Phase { Joint, Finetune };

// Multi-label classification loss: cross entropy summed over classes,
// averaged over the batch. Predictions are clamped to [eps, 1-eps].
template <typename T>
Var<T> cross_entropy_multilabel(const Tensor<T>& labels, Var<T> predictions,
                                T eps = static_cast<T>(1e-7)) {
  for (const T& y : labels.values)
    if (y != T(0) && y != T(1))
      throw SchemaError("cross_entropy_multilabel: labels must be 0 or 1");
  return bce_multilabel_mean(predictions, labels, eps);
}

// || E_T - E_S ||^2 averaged over the batch. By default the teacher side is
// a constant target (stop-gradient); pass stop_teacher_gradient=false to let
// gradients flow both ways (ablation switch).
template <typename T>
Var<T> encoding_match_loss(Var<T> teacher_encoding, Var<T> student_encoding,
                           bool stop_teacher_gradient = true) {
  Var<T> target =
      stop_teacher_gradient ? detach(teacher_encoding) : teacher_encoding;
  return mean_row_sqdist(student_encoding, target);
}

// Mean over aligned (teacher, student) frame-state pairs of the squared L2
// distance. Pairs sharing (student_pos, teacher_pos) are batched into one
// masked op; when the teacher side is a constant target the per-video
// gather collapses to a single dense target per student position.
template <typename T>
Var<T> intermediate_match_loss(Tape<T>& tape, const VideoEncoding<T>& teacher,
                               const VideoEncoding<T>& student,
                               const StatePairs& aligned,
                               bool stop_teacher_gradient = true) {
  if (aligned.pairs.empty())
    throw BoundsError("intermediate_match_loss: empty pair list");
  const std::size_t B = teacher.batch->batch();

  std::optional<Var<T>> total;
  auto add_term = [&](Var<T> term) {
    total = total ? add(*total, term) : term;
  };

  if (stop_teacher_gradient) {
    // One masked op per student position against a gathered constant.
    std::map<std::size_t, std::vector<const StatePairs::Pair*>> by_pos;
    for (const auto& p : aligned.pairs) by_pos[p.student_pos].push_back(&p);
    for (const auto& [spos, group] : by_pos) {
      const Tensor<T>& sval = student.frame_states[spos].value();
      Tensor<T> target = Tensor<T>::zeros(sval.shape);
      std::vector<std::uint8_t> mask(B, 0);
      for (const auto* p : group) {
        const Tensor<T>& tstate = teacher.frame_states[p->teacher_pos].value();
        const std::size_t cols = tstate.cols();
        for (std::size_t c = 0; c < cols; ++c)
          target.values[p->video * cols + c] = tstate.values[p->video * cols + c];
        mask[p->video] = 1;
      }
      add_term(masked_row_sqdist_sum(student.frame_states[spos],
                                     tape.leaf(std::move(target), false), mask));
    }
  } else {
    std::map<std::pair<std::size_t, std::size_t>, std::vector<std::uint8_t>> groups;
    for (const auto& p : aligned.pairs) {
      auto& mask = groups[{p.student_pos, p.teacher_pos}];
      mask.resize(B, 0);
      mask[p.video] = 1;
    }
    for (const auto& [key, mask] : groups)
      add_term(masked_row_sqdist_sum(student.frame_states[key.first],
                                     teacher.frame_states[key.second], mask));
  }
  return scale(*total, T(1) / static_cast<T>(aligned.pairs.size()));
}

// The combined training objective and its per-term values.
template <typename T>
struct LossBreakdown {
  double l_model = 0.0;
  double l_student_final = 0.0;
  double l_student_inter = 0.0;
  double total = 0.0;
  double lambda_final = 0.0;
  double lambda_inter = 0.0;
  Var<T> total_var;  // differentiable root
};

// Joint phase: total = L_model + lambda_final*L_final + lambda_inter*L_inter
// (terms with zero weight or absent vars are dropped). Finetune phase:
// total = L_model only; matching terms are reported but not optimized.
template <typename T>
LossBreakdown<T> combine(std::optional<Var<T>> l_model,
                         std::optional<Var<T>> l_final,
                         std::optional<Var<T>> l_inter, double lambda_final,
                         double lambda_inter, Phase phase) {
  if (lambda_final < 0.0 || lambda_inter < 0.0)
    throw ConfigError("combine: loss weights must be non-negative");
  if (!l_model) throw ConfigError("combine: classification loss is required");

  LossBreakdown<T> out;
  // Finetune optimizes L_model alone; zero weights keep the breakdown's
  // total == l_model + lf*l_final + li*l_inter identity true in both phases.
  out.lambda_final = phase == Phase::Joint ? lambda_final : 0.0;
  out.lambda_inter = phase == Phase::Joint ? lambda_inter : 0.0;
  out.l_model = static_cast<double>(l_model->value().values[0]);
  if (l_final) out.l_student_final = static_cast<double>(l_final->value().values[0]);
  if (l_inter) out.l_student_inter = static_cast<double>(l_inter->value().values[0]);

  Var<T> total = *l_model;
  if (phase == Phase::Joint) {
    if (l_final && lambda_final > 0.0)
      total = add(total, scale(*l_final, static_cast<T>(lambda_final)));
    if (l_inter && lambda_inter > 0.0)
      total = add(total, scale(*l_inter, static_cast<T>(lambda_inter)));
  }
  out.total_var = total;
  out.total = static_cast<double>(total.value().values[0]);
  return out;
}

}  // namespace fd
