#include "fd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "fd/gradcheck.hpp"
#include "fd/sampling.hpp"

namespace fd {

double lr_at_epoch(double lr0, double decay, std::uint64_t epoch) {
  return lr0 * std::pow(decay, static_cast<double>(epoch));
}

void adam_step(ParameterStore<float>& params,
               const std::map<std::string, Tensor<float>>& grads, AdamState& state,
               double lr, double l2_coeff, double beta1, double beta2, double eps) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (const auto& [name, grad] : grads) {
    Tensor<float>& theta = params.at(name);
    if (!grad.same_shape(theta))
      throw ShapeError("adam_step: grad " + shape_str(grad.shape) + " vs param " +
                       shape_str(theta.shape) + " for " + name);
    if (!state.m.contains(name)) {
      state.m.emplace(name, Tensor<float>::zeros(theta.shape));
      state.v.emplace(name, Tensor<float>::zeros(theta.shape));
    }
    Tensor<float>& m = state.m.at(name);
    Tensor<float>& v = state.v.at(name);
    for (std::size_t i = 0; i < theta.values.size(); ++i) {
      const double g =
          static_cast<double>(grad.values[i]) + l2_coeff * theta.values[i];
      if (!std::isfinite(g))
        throw NumericError("adam_step: non-finite gradient for " + name);
      const double mi = beta1 * m.values[i] + (1.0 - beta1) * g;
      const double vi = beta2 * v.values[i] + (1.0 - beta2) * g * g;
      m.values[i] = static_cast<float>(mi);
      v.values[i] = static_cast<float>(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      theta.values[i] -= static_cast<float>(lr * m_hat / (std::sqrt(v_hat) + eps));
    }
  }
}

PredictPath deployment_path(const RunConfig& cfg) {
  if (is_student_variant(cfg.variant))
    return PredictPath{"student", cfg.sampler, cfg.student_block_len};
  SamplerSpec s = cfg.variant == Variant::TeacherOnly ? SamplerSpec::full() : cfg.sampler;
  return PredictPath{"teacher", s, cfg.baseline_block_len()};
}

PredictPath teacher_path(const RunConfig& cfg) {
  return PredictPath{"teacher", SamplerSpec::full(), cfg.teacher_block_len};
}

std::vector<EvalRecord> predict(const RunConfig& cfg, const ParameterStore<float>& params,
                                const Dataset& data, const PredictPath& path,
                                StepCounters* counters) {
  if (data.feature_dim != cfg.feature_dim)
    throw ShapeError("predict: dataset feature dim " + std::to_string(data.feature_dim) +
                     " vs model " + std::to_string(cfg.feature_dim));
  EncoderConfig ec{cfg.feature_dim, path.block_len, cfg.num_layers, cfg.cell_size,
                   cfg.encoding_dim};
  const std::uint64_t eval_stream = derive_seed(cfg.sampler_seed, "eval");
  std::vector<EvalRecord> out;
  out.reserve(data.size());
  const auto groups =
      epoch_batches(data.size(), cfg.batch_size, 0, 0, /*shuffle=*/false);
  for (const auto& idx : groups) {
    Batch batch = make_sampled_batch(data, idx, cfg.classes, path.sampler, eval_stream);
    Tape<float> tape;
    LeafMap<float> leaves;
    for (const auto& [name, tensor] : params)
      if (name.starts_with(path.slot + "/") || name.starts_with("head/"))
        leaves[name] = tape.leaf(tensor, false);
    auto net = encoder_from_leaves(leaves, path.slot, ec);
    auto head = head_from_leaves(leaves, "head");
    auto enc = encode(tape, ec, net, batch);
    auto yhat = classify(tape, head, enc.final);
    const Tensor<float>& scores = yhat.value();
    for (std::size_t b = 0; b < batch.batch(); ++b) {
      EvalRecord rec;
      rec.video_id = batch.ids[b];
      rec.truth = data.videos[batch.dataset_indices[b]].labels;
      rec.scores.assign(scores.row(b).begin(), scores.row(b).end());
      out.push_back(std::move(rec));
      if (counters) {
        const std::size_t sel = batch.frame_indices[b].size();
        counters->lower_steps += sel;
        counters->upper_steps += (sel + path.block_len - 1) / path.block_len;
        counters->videos += 1;
      }
    }
  }
  return out;
}

// ---- checkpoint serialization ----------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'F', 'D', 'C', 'K'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v & 0xffffffffULL));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ParseError("truncated checkpoint");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is) {
  const std::uint64_t lo = get_u32(is);
  const std::uint64_t hi = get_u32(is);
  return lo | (hi << 32);
}

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<long>(s.size()));
}

std::string get_string(std::istream& is) {
  const std::uint32_t len = get_u32(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (!is) throw ParseError("truncated checkpoint string");
  return s;
}

void put_store(std::ostream& os, const ParameterStore<float>& store) {
  put_u32(os, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, tensor] : store) {
    put_string(os, name);
    put_u32(os, static_cast<std::uint32_t>(tensor.shape.size()));
    for (std::size_t d : tensor.shape) put_u32(os, static_cast<std::uint32_t>(d));
    for (float f : tensor.values) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(os, bits);
    }
  }
}

ParameterStore<float> get_store(std::istream& is) {
  ParameterStore<float> store;
  const std::uint32_t n = get_u32(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string name = get_string(is);
    const std::uint32_t ndim = get_u32(is);
    Shape shape(ndim);
    for (auto& d : shape) d = get_u32(is);
    Tensor<float> t = Tensor<float>::zeros(shape);
    for (float& f : t.values) {
      const std::uint32_t bits = get_u32(is);
      std::memcpy(&f, &bits, 4);
    }
    store.emplace(name, std::move(t));
  }
  return store;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot open checkpoint for writing: " + path.string());
  os.write(kCheckpointMagic, 4);
  put_u32(os, ckpt.version);
  put_string(os, ckpt.config.dump());
  put_string(os, ckpt.phase);
  put_u64(os, ckpt.epochs_done);
  put_store(os, ckpt.params);
  put_store(os, ckpt.adam.m);
  put_store(os, ckpt.adam.v);
  put_u64(os, ckpt.adam.t);
  // RNG state: streams are stateless functions of (seed, epoch, step), so
  // the seeds plus the epoch counter are the whole generator state.
  nlohmann::json rng;
  rng["epochs_done"] = ckpt.epochs_done;
  rng["seed"] = ckpt.config.contains("train")
                    ? ckpt.config["train"].value("seed", std::uint64_t{0})
                    : std::uint64_t{0};
  rng["sampler_seed"] = ckpt.config.contains("sampler")
                            ? ckpt.config["sampler"].value("seed", std::uint64_t{0})
                            : std::uint64_t{0};
  put_string(os, rng.dump());
  if (!os) throw ParseError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open checkpoint: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw ParseError("bad checkpoint magic in " + path.string());
  Checkpoint ckpt;
  ckpt.version = get_u32(is);
  if (ckpt.version != 1)
    throw ParseError("unsupported checkpoint version " + std::to_string(ckpt.version));
  try {
    ckpt.config = nlohmann::json::parse(get_string(is));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint config blob: ") + e.what());
  }
  ckpt.phase = get_string(is);
  ckpt.epochs_done = get_u64(is);
  ckpt.params = get_store(is);
  ckpt.adam.m = get_store(is);
  ckpt.adam.v = get_store(is);
  ckpt.adam.t = get_u64(is);
  (void)get_string(is);  // RNG blob is documentary; state derives from config
  return ckpt;
}

// ---- Trainer ----------------------------------------------------------------

Trainer::Trainer(RunConfig cfg, const Dataset* train_data, const Dataset* eval_data)
    : cfg_(std::move(cfg)), train_(train_data), eval_(eval_data) {
  cfg_.validate();
  if (!train_) throw ConfigError("trainer: training dataset required");
}

void Trainer::init_params() {
  params_ = ParameterStore<float>{};
  adam_ = AdamState{};
  log_.clear();
  // Baselines train a single network that lives in the teacher slot, so a
  // baseline and a joint run with equal seeds share their init bit-exactly.
  init_encoder(params_, "teacher", cfg_.teacher_encoder(), cfg_.seed);
  if (is_student_variant(cfg_.variant))
    init_encoder(params_, "student", cfg_.student_encoder(), cfg_.seed);
  init_head<float>(params_, "head", cfg_.head(), cfg_.seed);
}

void Trainer::restore(const Checkpoint& ckpt) {
  params_ = ckpt.params;
  adam_ = ckpt.adam;
}

Checkpoint Trainer::snapshot(const std::string& phase) const {
  Checkpoint ckpt;
  ckpt.config = cfg_.to_json();
  ckpt.phase = phase;
  ckpt.epochs_done = 0;  // caller fills
  ckpt.params = params_;
  ckpt.adam = adam_;
  return ckpt;
}

MetricReport Trainer::eval_report(const PredictPath& path) {
  auto records = predict(cfg_, params_, *eval_, path);
  return compute_report(records, cfg_.top_n);
}

EpochRecord Trainer::train_one_epoch(StepMode mode, std::uint64_t global_epoch) {
  const double lr = lr_at_epoch(cfg_.lr0, cfg_.decay, global_epoch);
  const auto groups =
      epoch_batches(train_->size(), cfg_.batch_size, cfg_.seed, global_epoch, true);
  const std::uint64_t sampled_stream = derive_seed(
      cfg_.sampler_seed, cfg_.resample_per_epoch && cfg_.sampler.kind == SamplerKind::Random
                             ? "train/e" + std::to_string(global_epoch)
                             : "train");

  double sum_model = 0, sum_final = 0, sum_inter = 0, sum_total = 0;
  std::size_t weight = 0;

  const EncoderConfig tcfg = cfg_.teacher_encoder();
  const EncoderConfig scfg = cfg_.student_encoder();
  EncoderConfig bcfg = tcfg;
  bcfg.block_len = cfg_.baseline_block_len();

  for (std::size_t step = 0; step < groups.size(); ++step) {
    const auto& idx = groups[step];
    const std::string es_tag =
        "/e" + std::to_string(global_epoch) + "/s" + std::to_string(step);
    auto plan = [&](const char* net) {
      return DropoutPlan{cfg_.dropout, true,
                         derive_seed(cfg_.seed, std::string("dropout/") + net + es_tag)};
    };

    Tape<float> tape;
    LossBreakdown<float> bd;
    std::size_t bsz = idx.size();

    if (mode == StepMode::Joint) {
      Batch full = pack_batch(*train_, idx, cfg_.classes);
      Batch sampled =
          make_sampled_batch(*train_, idx, cfg_.classes, cfg_.sampler, sampled_stream);
      LeafMap<float> leaves = bind_all(tape, params_, true);
      auto teacher = encoder_from_leaves(leaves, "teacher", tcfg);
      auto student = encoder_from_leaves(leaves, "student", scfg);
      auto head = head_from_leaves(leaves, "head");
      auto et = encode(tape, tcfg, teacher, full);
      auto es = encode(tape, scfg, student, sampled);
      auto yhat = classify(tape, head, et.final, plan("head"));
      Var<float> l_model = cross_entropy_multilabel(full.labels, yhat);
      if (cfg_.classify_student_in_joint) {
        auto yhat_s = classify(tape, head, es.final, plan("head_student"));
        l_model = add(l_model, cross_entropy_multilabel(sampled.labels, yhat_s));
      }
      auto l_final =
          encoding_match_loss(et.final, es.final, cfg_.stop_gradient_teacher);
      std::optional<Var<float>> l_inter;
      if (cfg_.variant == Variant::StudentIntermediate) {
        auto pairs = align_states(et, es);
        l_inter = intermediate_match_loss(tape, et, es, pairs,
                                          cfg_.stop_gradient_teacher);
      }
      bd = combine<float>(l_model, l_final, l_inter, cfg_.lambda_final,
                          cfg_.lambda_inter, Phase::Joint);
      tape.backward(bd.total_var);
      std::map<std::string, Tensor<float>> grads;
      for (const auto& [name, var] : leaves) {
        const Tensor<float>& g = tape.grad(var);
        grads[name] = g.empty() ? Tensor<float>::zeros(var.value().shape) : g;
      }
      adam_step(params_, grads, adam_, lr, cfg_.l2_coeff);
    } else {
      const bool finetune = mode == StepMode::Finetune;
      const EncoderConfig& ncfg = finetune ? scfg : bcfg;
      const std::string slot = finetune ? "student" : "teacher";
      Batch batch = make_sampled_batch(*train_, idx, cfg_.classes, cfg_.sampler,
                                       sampled_stream);
      LeafMap<float> leaves;
      for (const auto& [name, tensor] : params_)
        if (name.starts_with(slot + "/") || name.starts_with("head/"))
          leaves[name] = tape.leaf(tensor, true);
      auto net = encoder_from_leaves(leaves, slot, ncfg);
      auto head = head_from_leaves(leaves, "head");
      auto enc = encode(tape, ncfg, net, batch);
      auto yhat = classify(tape, head, enc.final, plan("head"));
      auto l_model = cross_entropy_multilabel(batch.labels, yhat);
      bd = combine<float>(l_model, std::nullopt, std::nullopt, cfg_.lambda_final,
                          cfg_.lambda_inter,
                          finetune ? Phase::Finetune : Phase::Joint);
      tape.backward(bd.total_var);
      std::map<std::string, Tensor<float>> grads;
      for (const auto& [name, var] : leaves) {
        const Tensor<float>& g = tape.grad(var);
        grads[name] = g.empty() ? Tensor<float>::zeros(var.value().shape) : g;
      }
      adam_step(params_, grads, adam_, lr, cfg_.l2_coeff);
    }

    sum_model += bd.l_model * static_cast<double>(bsz);
    sum_final += bd.l_student_final * static_cast<double>(bsz);
    sum_inter += bd.l_student_inter * static_cast<double>(bsz);
    sum_total += bd.total * static_cast<double>(bsz);
    weight += bsz;
  }

  EpochRecord rec;
  rec.epoch = global_epoch;
  rec.phase = mode == StepMode::Joint ? "joint"
              : mode == StepMode::Finetune ? "finetune"
                                           : "baseline";
  rec.lr = lr;
  rec.l_model = sum_model / static_cast<double>(weight);
  rec.l_final = sum_final / static_cast<double>(weight);
  rec.l_inter = sum_inter / static_cast<double>(weight);
  rec.total = sum_total / static_cast<double>(weight);
  if (eval_ && cfg_.eval_every_epoch) {
    rec.eval_primary = eval_report(deployment_path(cfg_));
    if (mode == StepMode::Joint) rec.eval_teacher = eval_report(teacher_path(cfg_));
  }
  return rec;
}

bool Trainer::run_phase(StepMode mode, std::uint64_t phase_epochs,
                        std::uint64_t already_done, const EpochSink& on_epoch,
                        std::uint64_t* completed, std::string* abort_reason) {
  const std::string phase_name = mode == StepMode::Joint ? "joint"
                                 : mode == StepMode::Finetune ? "finetune"
                                                              : "baseline";
  Checkpoint last_good = snapshot(phase_name);
  *completed = already_done;
  for (std::uint64_t e = already_done; e < phase_epochs; ++e) {
    EpochRecord rec;
    try {
      rec = train_one_epoch(mode, e);
    } catch (const NumericError& err) {
      restore(last_good);  // roll back to the last completed epoch
      *abort_reason = err.what();
      return false;
    }
    *completed = e + 1;
    last_good = snapshot(phase_name);
    log_.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return true;
}

TrainResult Trainer::run(const EpochSink& on_epoch) {
  init_params();
  return run_phases(false, 0, on_epoch);
}

TrainResult Trainer::resume(const Checkpoint& ckpt, const EpochSink& on_epoch) {
  restore(ckpt);
  log_.clear();
  if (ckpt.phase == "finetune" || ckpt.phase == "done")
    return run_phases(true, ckpt.epochs_done, on_epoch);
  return run_phases(false, ckpt.epochs_done, on_epoch);
}

TrainResult Trainer::run_phases(bool joint_done, std::uint64_t epochs_into_phase,
                                const EpochSink& on_epoch) {
  TrainResult result;
  std::string reason;
  bool ok = true;
  std::uint64_t done = epochs_into_phase;
  std::string final_phase;

  if (!is_student_variant(cfg_.variant)) {
    const std::uint64_t total = cfg_.epochs_joint + cfg_.epochs_finetune;
    ok = run_phase(StepMode::Baseline, total, done, on_epoch, &done, &reason);
    final_phase = "baseline";
  } else {
    if (!joint_done) {
      ok = run_phase(StepMode::Joint, cfg_.epochs_joint, done, on_epoch, &done,
                     &reason);
      final_phase = "joint";
      // The parameter set changes at the phase boundary (teacher removed),
      // so stale moments are invalid.
      if (ok) adam_ = AdamState{};
    }
    if (ok) {
      const std::uint64_t total = cfg_.epochs_joint + cfg_.epochs_finetune;
      if (done < cfg_.epochs_joint) done = cfg_.epochs_joint;
      ok = run_phase(StepMode::Finetune, total, done, on_epoch, &done, &reason);
      final_phase = "finetune";
    }
  }

  result.checkpoint = snapshot(ok ? "done" : final_phase);
  result.checkpoint.epochs_done = done;
  result.log = log_;
  result.aborted = !ok;
  result.abort_reason = reason;
  return result;
}

TrainResult Trainer::train_joint(const EpochSink& on_epoch) {
  if (!is_student_variant(cfg_.variant))
    throw ConfigError("train_joint requires a student variant");
  init_params();
  TrainResult result;
  std::string reason;
  std::uint64_t done = 0;
  const bool ok =
      run_phase(StepMode::Joint, cfg_.epochs_joint, 0, on_epoch, &done, &reason);
  result.checkpoint = snapshot("joint");
  result.checkpoint.epochs_done = done;
  result.log = log_;
  result.aborted = !ok;
  result.abort_reason = reason;
  return result;
}

TrainResult Trainer::finetune_student(const Checkpoint& from,
                                      const EpochSink& on_epoch) {
  if (!is_student_variant(cfg_.variant))
    throw ConfigError("finetune_student requires a student variant");
  restore(from);
  log_.clear();
  adam_ = AdamState{};  // moments reset: the trainable set changed
  TrainResult result;
  std::string reason;
  const std::uint64_t start =
      std::max<std::uint64_t>(from.epochs_done, cfg_.epochs_joint);
  const std::uint64_t total = cfg_.epochs_joint + cfg_.epochs_finetune;
  std::uint64_t done = start;
  const bool ok =
      run_phase(StepMode::Finetune, total, start, on_epoch, &done, &reason);
  result.checkpoint = snapshot(ok ? "done" : "finetune");
  result.checkpoint.epochs_done = done;
  result.log = log_;
  result.aborted = !ok;
  result.abort_reason = reason;
  return result;
}

TrainResult Trainer::train_baseline(const EpochSink& on_epoch) {
  if (is_student_variant(cfg_.variant))
    throw ConfigError("train_baseline requires a baseline variant");
  return run(on_epoch);
}

}  // namespace fd
