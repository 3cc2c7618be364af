#include "fd/config.hpp"

#include <fstream>
#include <set>

namespace fd {

using nlohmann::json;

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::TeacherOnly: return "teacher_only";
    case Variant::UniformBaseline: return "uniform_baseline";
    case Variant::RandomBaseline: return "random_baseline";
    case Variant::StudentFinal: return "student_final";
    case Variant::StudentIntermediate: return "student_intermediate";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "teacher_only") return Variant::TeacherOnly;
  if (name == "uniform_baseline") return Variant::UniformBaseline;
  if (name == "random_baseline") return Variant::RandomBaseline;
  if (name == "student_final") return Variant::StudentFinal;
  if (name == "student_intermediate") return Variant::StudentIntermediate;
  throw ConfigError("unknown variant: '" + name + "'");
}

bool is_student_variant(Variant v) {
  return v == Variant::StudentFinal || v == Variant::StudentIntermediate;
}

void reject_unknown_fields(const json& j, std::initializer_list<const char*> allowed,
                           const std::string& where) {
  if (!j.is_object())
    throw ConfigError("config section '" + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key))
      throw ConfigError("unknown config field '" + where + "." + key + "'");
}

namespace {

SamplerKind sampler_kind_from_name(const std::string& s) {
  if (s == "full") return SamplerKind::Full;
  if (s == "uniform") return SamplerKind::Uniform;
  if (s == "random") return SamplerKind::Random;
  throw ConfigError("unknown sampler kind: '" + s + "'");
}

std::string sampler_kind_name(SamplerKind k) {
  switch (k) {
    case SamplerKind::Full: return "full";
    case SamplerKind::Uniform: return "uniform";
    case SamplerKind::Random: return "random";
  }
  return "?";
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  reject_unknown_fields(j, {"data", "model", "sampler", "train", "eval"}, "config");
  RunConfig cfg;

  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown_fields(d, {"train", "eval", "max_frames"}, "data");
    maybe(d, "train", cfg.train_path);
    maybe(d, "eval", cfg.eval_path);
    maybe(d, "max_frames", cfg.max_frames);
  }

  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown_fields(m,
                          {"feature_dim", "classes", "cell_size", "encoding_dim",
                           "num_layers", "teacher_block_len", "student_block_len",
                           "head_hidden"},
                          "model");
    maybe(m, "feature_dim", cfg.feature_dim);
    maybe(m, "classes", cfg.classes);
    maybe(m, "cell_size", cfg.cell_size);
    maybe(m, "encoding_dim", cfg.encoding_dim);
    maybe(m, "num_layers", cfg.num_layers);
    maybe(m, "teacher_block_len", cfg.teacher_block_len);
    maybe(m, "student_block_len", cfg.student_block_len);
    maybe(m, "head_hidden", cfg.head_hidden);
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown_fields(
        t,
        {"variant", "lr0", "decay", "batch_size", "epochs_joint", "epochs_finetune",
         "l2_coeff", "dropout", "lambda_final", "lambda_inter", "seed",
         "stop_gradient_teacher", "classify_student_in_joint", "eval_every_epoch"},
        "train");
    if (t.contains("variant")) cfg.variant = variant_from_name(t.at("variant"));
    maybe(t, "lr0", cfg.lr0);
    maybe(t, "decay", cfg.decay);
    maybe(t, "batch_size", cfg.batch_size);
    maybe(t, "epochs_joint", cfg.epochs_joint);
    maybe(t, "epochs_finetune", cfg.epochs_finetune);
    maybe(t, "l2_coeff", cfg.l2_coeff);
    maybe(t, "dropout", cfg.dropout);
    maybe(t, "lambda_final", cfg.lambda_final);
    maybe(t, "lambda_inter", cfg.lambda_inter);
    maybe(t, "seed", cfg.seed);
    maybe(t, "stop_gradient_teacher", cfg.stop_gradient_teacher);
    maybe(t, "classify_student_in_joint", cfg.classify_student_in_joint);
    maybe(t, "eval_every_epoch", cfg.eval_every_epoch);
  }

  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    reject_unknown_fields(s, {"kind", "k", "seed", "resample_per_epoch"}, "sampler");
    cfg.sampler_given = true;
    SamplerKind kind = SamplerKind::Uniform;
    int k = 100;
    if (s.contains("kind")) kind = sampler_kind_from_name(s.at("kind"));
    maybe(s, "k", k);
    maybe(s, "seed", cfg.sampler_seed);
    maybe(s, "resample_per_epoch", cfg.resample_per_epoch);
    switch (kind) {
      case SamplerKind::Full: cfg.sampler = SamplerSpec::full(); break;
      case SamplerKind::Uniform: cfg.sampler = SamplerSpec::uniform(k); break;
      case SamplerKind::Random:
        cfg.sampler = SamplerSpec::random(k, cfg.sampler_seed);
        break;
    }
  } else {
    // Variant-derived default: baselines and students read 25% unless told
    // otherwise; the plain teacher reads everything.
    switch (cfg.variant) {
      case Variant::TeacherOnly: cfg.sampler = SamplerSpec::full(); break;
      case Variant::UniformBaseline:
      case Variant::StudentFinal:
      case Variant::StudentIntermediate:
        cfg.sampler = SamplerSpec::uniform(25);
        break;
      case Variant::RandomBaseline:
        cfg.sampler = SamplerSpec::random(25, cfg.sampler_seed);
        break;
    }
  }

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    reject_unknown_fields(e, {"top_n"}, "eval");
    maybe(e, "top_n", cfg.top_n);
  }

  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("bad config JSON in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  json j;
  j["data"] = {{"train", train_path}, {"eval", eval_path}, {"max_frames", max_frames}};
  j["model"] = {{"feature_dim", feature_dim},
                {"classes", classes},
                {"cell_size", cell_size},
                {"encoding_dim", encoding_dim},
                {"num_layers", num_layers},
                {"teacher_block_len", teacher_block_len},
                {"student_block_len", student_block_len},
                {"head_hidden", head_hidden}};
  j["sampler"] = {{"kind", sampler_kind_name(sampler.kind)},
                  {"k", sampler.percent},
                  {"seed", sampler_seed},
                  {"resample_per_epoch", resample_per_epoch}};
  j["train"] = {{"variant", variant_name(variant)},
                {"lr0", lr0},
                {"decay", decay},
                {"batch_size", batch_size},
                {"epochs_joint", epochs_joint},
                {"epochs_finetune", epochs_finetune},
                {"l2_coeff", l2_coeff},
                {"dropout", dropout},
                {"lambda_final", lambda_final},
                {"lambda_inter", lambda_inter},
                {"seed", seed},
                {"stop_gradient_teacher", stop_gradient_teacher},
                {"classify_student_in_joint", classify_student_in_joint},
                {"eval_every_epoch", eval_every_epoch}};
  j["eval"] = {{"top_n", top_n}};
  return j;
}

void RunConfig::validate() const {
  if (lr0 <= 0) throw ConfigError("train.lr0 must be > 0");
  if (decay <= 0 || decay > 1) throw ConfigError("train.decay must be in (0, 1]");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (dropout < 0 || dropout >= 1) throw ConfigError("train.dropout must be in [0, 1)");
  if (lambda_final < 0 || lambda_inter < 0)
    throw ConfigError("train.lambda_* must be non-negative");
  if (l2_coeff < 0) throw ConfigError("train.l2_coeff must be non-negative");
  if (classes < 2) throw ConfigError("model.classes must be >= 2");
  sampler.validate();
  switch (variant) {
    case Variant::TeacherOnly:
      if (sampler.kind != SamplerKind::Full)
        throw ConfigError("teacher_only reads all frames; sampler must be full");
      break;
    case Variant::UniformBaseline:
      if (sampler.kind == SamplerKind::Random)
        throw ConfigError("uniform_baseline cannot use a random sampler");
      break;
    case Variant::RandomBaseline:
      if (sampler.kind != SamplerKind::Random)
        throw ConfigError("random_baseline requires a random sampler");
      break;
    case Variant::StudentFinal:
    case Variant::StudentIntermediate:
      break;
  }
  teacher_encoder().validate();
  student_encoder().validate();
}

EncoderConfig RunConfig::teacher_encoder() const {
  return EncoderConfig{feature_dim, teacher_block_len, num_layers, cell_size,
                       encoding_dim};
}

EncoderConfig RunConfig::student_encoder() const {
  return EncoderConfig{feature_dim, student_block_len, num_layers, cell_size,
                       encoding_dim};
}

HeadConfig RunConfig::head() const {
  return HeadConfig{encoding_dim, head_hidden, classes};
}

}  // namespace fd
