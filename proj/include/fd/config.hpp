#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "fd/encoder.hpp"
#include "fd/sampling.hpp"

namespace fd {

enum class Variant {
  TeacherOnly,
  UniformBaseline,
  RandomBaseline,
  StudentFinal,
  StudentIntermediate
};

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// True for the two distillation variants (joint phase + finetune phase);
// false for the three single-network baselines.
bool is_student_variant(Variant v);

// Resolved run configuration. Every field has a default; JSON input may
// override any subset; unknown fields are rejected. The resolved form is
// echoed into every output artifact.
struct RunConfig {
  // data
  std::string train_path;
  std::string eval_path;
  std::size_t max_frames = 300;

  // model
  std::size_t feature_dim = 16;
  std::size_t classes = 8;
  std::size_t cell_size = 32;
  std::size_t encoding_dim = 32;
  std::size_t num_layers = 2;
  std::size_t teacher_block_len = 20;
  std::size_t student_block_len = 5;
  std::size_t head_hidden = 64;

  // sampler (for the k%-frames network of the variant)
  SamplerSpec sampler = SamplerSpec::full();
  bool sampler_given = false;  // not serialized; resolution bookkeeping
  bool resample_per_epoch = true;
  std::uint64_t sampler_seed = 9001;

  // train
  Variant variant = Variant::TeacherOnly;
  double lr0 = 0.001;
  double decay = 0.95;
  std::size_t batch_size = 32;
  std::size_t epochs_joint = 15;
  std::size_t epochs_finetune = 5;
  double l2_coeff = 1e-4;
  double dropout = 0.5;
  double lambda_final = 1.0;
  double lambda_inter = 1.0;
  std::uint64_t seed = 1;
  bool stop_gradient_teacher = true;
  bool classify_student_in_joint = false;
  bool eval_every_epoch = true;

  // eval
  std::size_t top_n = 20;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;

  EncoderConfig teacher_encoder() const;
  EncoderConfig student_encoder() const;
  HeadConfig head() const;

  // Block length of the single network trained by a baseline variant.
  std::size_t baseline_block_len() const {
    return variant == Variant::TeacherOnly ? teacher_block_len : student_block_len;
  }
};

// Strict JSON field checking: throws ConfigError naming the first unknown
// key. `where` prefixes the message ("train", "sampler", ...).
void reject_unknown_fields(const nlohmann::json& j,
                           std::initializer_list<const char*> allowed,
                           const std::string& where);

}  // namespace fd
