#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fd/config.hpp"
#include "fd/data.hpp"
#include "fd/losses.hpp"
#include "fd/metrics.hpp"
#include "fd/params.hpp"

namespace fd {

// lr0 * decay^epoch, per-epoch granularity.
double lr_at_epoch(double lr0, double decay, std::uint64_t epoch);

struct AdamState {
  ParameterStore<float> m, v;
  std::uint64_t t = 0;
};

// Canonical Adam with bias correction. Only parameters named in `grads`
// are updated (that set defines the trainables of the phase); L2 enters as
// an added gradient l2_coeff * theta. Non-finite gradients abort.
void adam_step(ParameterStore<float>& params,
               const std::map<std::string, Tensor<float>>& grads, AdamState& state,
               double lr, double l2_coeff, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

struct EpochRecord {
  std::uint64_t epoch = 0;  // global epoch index (joint + finetune share it)
  std::string phase;        // "joint" | "finetune" | "baseline"
  double lr = 0.0;
  double l_model = 0.0, l_final = 0.0, l_inter = 0.0, total = 0.0;
  // Deployment-path metrics (student-fed for student variants).
  std::optional<MetricReport> eval_primary;
  // Teacher-fed metrics, logged during the joint phase.
  std::optional<MetricReport> eval_teacher;
};

struct Checkpoint {
  std::uint32_t version = 1;
  nlohmann::json config;  // resolved RunConfig echo
  std::string phase = "init";
  std::uint64_t epochs_done = 0;
  ParameterStore<float> params;
  AdamState adam;
};

// Binary container: magic "FDCK", version, config JSON, named tensors,
// Adam moments, counters, RNG seed blob. save(load(f)) is byte-identical.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Which network and sampler evaluation runs through.
struct PredictPath {
  std::string slot;  // parameter prefix: "teacher" or "student"
  SamplerSpec sampler;
  std::size_t block_len = 1;
};

// The path a trained artifact serves predictions with: the sampled student
// for distillation variants, the single (teacher-slot) network otherwise.
PredictPath deployment_path(const RunConfig& cfg);
PredictPath teacher_path(const RunConfig& cfg);

// Exact work counters for the cost report. frames counts selected frame
// positions; lower/upper steps count cell recurrences (frames and blocks
// times the stacked layer count).
struct StepCounters {
  std::uint64_t frames = 0;
  std::uint64_t lower_steps = 0;
  std::uint64_t upper_steps = 0;
  std::uint64_t videos = 0;
};

// Eval-mode forward over a whole dataset; deterministic (the random
// sampler draws from the fixed "eval" substream).
std::vector<EvalRecord> predict(const RunConfig& cfg, const ParameterStore<float>& params,
                                const Dataset& data, const PredictPath& path,
                                StepCounters* counters = nullptr);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> log;
  bool aborted = false;
  std::string abort_reason;
};

// Drives the full schedule for a RunConfig: the two-phase distillation
// (joint teacher+student training, then teacher removal and student
// finetuning) for student variants, or single-network training for the
// baselines. One Trainer = one run = one logical thread.
class Trainer {
 public:
  using EpochSink = std::function<void(const EpochRecord&)>;

  Trainer(RunConfig cfg, const Dataset* train_data, const Dataset* eval_data);

  // Full schedule from scratch.
  TrainResult run(const EpochSink& on_epoch = nullptr);

  // Resume: continues the schedule recorded in the checkpoint.
  TrainResult resume(const Checkpoint& ckpt, const EpochSink& on_epoch = nullptr);

  // Spec surface, usable standalone.
  TrainResult train_joint(const EpochSink& on_epoch = nullptr);
  TrainResult finetune_student(const Checkpoint& from,
                               const EpochSink& on_epoch = nullptr);
  TrainResult train_baseline(const EpochSink& on_epoch = nullptr);

 private:
  enum class StepMode { Joint, Finetune, Baseline };

  void init_params();
  void restore(const Checkpoint& ckpt);
  Checkpoint snapshot(const std::string& phase) const;
  TrainResult run_phases(bool joint_done, std::uint64_t epochs_into_phase,
                         const EpochSink& on_epoch);
  // Runs one phase; returns false on abort (state already rolled back to
  // the last completed epoch). *completed reports epochs finished.
  bool run_phase(StepMode mode, std::uint64_t phase_epochs,
                 std::uint64_t already_done, const EpochSink& on_epoch,
                 std::uint64_t* completed, std::string* abort_reason);
  EpochRecord train_one_epoch(StepMode mode, std::uint64_t global_epoch);
  MetricReport eval_report(const PredictPath& path);

  RunConfig cfg_;
  const Dataset* train_;
  const Dataset* eval_;
  ParameterStore<float> params_;
  AdamState adam_;
  std::vector<EpochRecord> log_;
};

}  // namespace fd
