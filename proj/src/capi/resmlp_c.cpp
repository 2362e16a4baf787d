// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "resmlp/resmlp.h"

#include <cstring>
#include <new>
#include <optional>
#include <sstream>
#include <string>

#include "analysis/filters.hpp"
#include "analysis/sparsity.hpp"
#include "io/checkpoint.hpp"
#include "io/config_file.hpp"
#include "io/datasets.hpp"
#include "seq2seq/search.hpp"
#include "seq2seq/trainer.hpp"
#include "train/trainer.hpp"

struct resmlp_config {
  resmlp::RunConfig cfg;
};

struct resmlp_model {
  resmlp::VisionModel<float> model;
};

struct resmlp_translator {
  resmlp::Seq2SeqModel<float> model;
  resmlp::Vocabulary vocab;
};

namespace {

thread_local std::string last_error;

resmlp_status status_of(resmlp::ErrorKind kind) {
  using resmlp::ErrorKind;
  switch (kind) {
    case ErrorKind::dimension:
    case ErrorKind::rank:
      return RESMLP_E_DIMENSION;
    case ErrorKind::configuration:
      return RESMLP_E_CONFIG;
    case ErrorKind::contract:
      return RESMLP_E_CONTRACT;
    case ErrorKind::data:
      return RESMLP_E_DATA;
    case ErrorKind::capacity:
      return RESMLP_E_CAPACITY;
    case ErrorKind::invariant:
      return RESMLP_E_INVARIANT;
    case ErrorKind::corrupt_checkpoint:
      return RESMLP_E_CORRUPT_CHECKPOINT;
    case ErrorKind::parse:
      return RESMLP_E_PARSE;
    case ErrorKind::io:
      return RESMLP_E_IO;
    case ErrorKind::training:
      return RESMLP_E_TRAINING;
  }
  return RESMLP_E_INTERNAL;
}

resmlp_status fail(resmlp_status status, std::string message) {
  last_error = std::move(message);
  return status;
}

// Runs `fn`, translating exceptions into status codes.
template <typename F>
resmlp_status guarded(F&& fn) {
  last_error.clear();
  try {
    return fn();
  } catch (const resmlp::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(RESMLP_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(RESMLP_E_INTERNAL, e.what());
  }
}

#define RESMLP_REQUIRE(cond)                                                  \
  do {                                                                        \
    if (!(cond)) return fail(RESMLP_E_INVALID_ARGUMENT, "null or invalid argument: " #cond); \
  } while (0)

resmlp_status copy_out(const std::string& text, char* buffer, std::size_t capacity, std::size_t* needed) {
  if (needed) *needed = text.size() + 1;
  if (buffer == nullptr || capacity < text.size() + 1) {
    return fail(RESMLP_E_BUFFER_TOO_SMALL, "buffer holds " + std::to_string(capacity) + " bytes, " +
                                               std::to_string(text.size() + 1) + " needed");
  }
  std::memcpy(buffer, text.c_str(), text.size() + 1);
  return RESMLP_OK;
}

std::function<void(const resmlp::EpochRecord&)> epoch_hook(resmlp_epoch_fn fn, void* user) {
  if (fn == nullptr) return {};
  return [fn, user](const resmlp::EpochRecord& r) { fn(r.epoch, r.loss, r.accuracy, r.seconds, user); };
}

std::vector<std::vector<int>> decode_pairs(const resmlp::Seq2SeqModel<float>& model,
                                           const std::vector<resmlp::SequencePair>& pairs, int beam) {
  std::vector<std::vector<int>> hyps;
  if (beam == 0) {
    std::vector<std::vector<int>> sources;
    for (const auto& p : pairs) sources.push_back(p.source);
    return resmlp::greedy_decode_batch(model, sources, model.config.max_len);
  }
  for (const auto& p : pairs) {
    hyps.push_back(resmlp::beam_search(resmlp::model_scorer(model, p.source), {beam, model.config.max_len, true}).tokens);
  }
  return hyps;
}

}  // namespace

extern "C" {

const char* resmlp_version(void) { return "0.1.0"; }

const char* resmlp_status_string(resmlp_status status) {
  switch (status) {
    case RESMLP_OK: return "ok";
    case RESMLP_E_INVALID_ARGUMENT: return "invalid argument";
    case RESMLP_E_DIMENSION: return "dimension error";
    case RESMLP_E_CONFIG: return "configuration error";
    case RESMLP_E_CONTRACT: return "contract error";
    case RESMLP_E_DATA: return "data error";
    case RESMLP_E_CAPACITY: return "capacity error";
    case RESMLP_E_INVARIANT: return "invariant violation";
    case RESMLP_E_CORRUPT_CHECKPOINT: return "corrupt checkpoint";
    case RESMLP_E_PARSE: return "parse error";
    case RESMLP_E_IO: return "i/o error";
    case RESMLP_E_TRAINING: return "training error";
    case RESMLP_E_BUFFER_TOO_SMALL: return "buffer too small";
    case RESMLP_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* resmlp_last_error(void) { return last_error.c_str(); }

// ---- Configuration --------------------------------------------------------

resmlp_status resmlp_config_default(resmlp_config** out) {
  RESMLP_REQUIRE(out);
  return guarded([&] {
    *out = new resmlp_config{};
    return RESMLP_OK;
  });
}

resmlp_status resmlp_config_parse(const char* text, resmlp_config** out) {
  RESMLP_REQUIRE(text && out);
  return guarded([&] {
    *out = new resmlp_config{resmlp::parse_config_text(text)};
    return RESMLP_OK;
  });
}

resmlp_status resmlp_config_load(const char* path, resmlp_config** out) {
  RESMLP_REQUIRE(path && out);
  return guarded([&] {
    *out = new resmlp_config{resmlp::parse_config(path)};
    return RESMLP_OK;
  });
}

resmlp_status resmlp_config_set(resmlp_config* cfg, const char* key, const char* value) {
  RESMLP_REQUIRE(cfg && key && value);
  return guarded([&] {
    resmlp::set_config_value(cfg->cfg, key, value);
    return RESMLP_OK;
  });
}

resmlp_status resmlp_config_serialize(const resmlp_config* cfg, char* buffer, size_t capacity, size_t* needed) {
  RESMLP_REQUIRE(cfg);
  return guarded([&] { return copy_out(resmlp::serialize_config(cfg->cfg), buffer, capacity, needed); });
}

void resmlp_config_free(resmlp_config* cfg) { delete cfg; }

resmlp_status resmlp_count(const resmlp_config* cfg, uint64_t* params, uint64_t* macs) {
  RESMLP_REQUIRE(cfg);
  return guarded([&] {
    cfg->cfg.model.validate();
    if (params) *params = resmlp::count_params(cfg->cfg.model);
    if (macs) *macs = resmlp::count_flops(cfg->cfg.model);
    return RESMLP_OK;
  });
}

// ---- Image models ---------------------------------------------------------

resmlp_status resmlp_model_init(const resmlp_config* cfg, uint64_t seed, resmlp_model** out) {
  RESMLP_REQUIRE(cfg && out);
  return guarded([&] {
    *out = new resmlp_model{resmlp::VisionModel<float>::init(cfg->cfg.model, seed)};
    return RESMLP_OK;
  });
}

resmlp_status resmlp_model_load(const char* path, resmlp_model** out) {
  RESMLP_REQUIRE(path && out);
  return guarded([&] {
    *out = new resmlp_model{resmlp::load_vision_checkpoint(path)};
    return RESMLP_OK;
  });
}

resmlp_status resmlp_model_save(const resmlp_model* model, const char* path) {
  RESMLP_REQUIRE(model && path);
  return guarded([&] {
    resmlp::save_checkpoint(model->model, path);
    return RESMLP_OK;
  });
}

resmlp_status resmlp_model_fuse(const resmlp_model* model, resmlp_model** out) {
  RESMLP_REQUIRE(model && out);
  return guarded([&] {
    *out = new resmlp_model{resmlp::fuse_affine(model->model)};
    return RESMLP_OK;
  });
}

resmlp_status resmlp_model_param_count(const resmlp_model* model, uint64_t* count) {
  RESMLP_REQUIRE(model && count);
  *count = model->model.parameter_count();
  last_error.clear();
  return RESMLP_OK;
}

resmlp_status resmlp_model_depth(const resmlp_model* model, int* depth) {
  RESMLP_REQUIRE(model && depth);
  *depth = static_cast<int>(model->model.blocks.size());
  last_error.clear();
  return RESMLP_OK;
}

resmlp_status resmlp_model_config(const resmlp_model* model, resmlp_config** out) {
  RESMLP_REQUIRE(model && out);
  return guarded([&] {
    auto* c = new resmlp_config{};
    c->cfg.model = model->model.config;
    *out = c;
    return RESMLP_OK;
  });
}

resmlp_status resmlp_model_logits(const resmlp_model* model, const float* images, int64_t batch, float* logits,
                                  size_t logits_len) {
  RESMLP_REQUIRE(model && images && logits && batch > 0);
  return guarded([&] {
    const auto& c = model->model.config;
    const auto k = static_cast<std::size_t>(c.num_classes);
    if (logits_len < static_cast<std::size_t>(batch) * k) {
      return fail(RESMLP_E_BUFFER_TOO_SMALL, "logits buffer holds " + std::to_string(logits_len) + " floats, " +
                                                 std::to_string(static_cast<std::size_t>(batch) * k) + " needed");
    }
    resmlp::Tensor<float> x(resmlp::Shape{batch, c.channels, c.image_size, c.image_size});
    std::memcpy(x.data(), images, x.size() * sizeof(float));
    const auto y = model->model.logits(x);
    std::memcpy(logits, y.data(), y.size() * sizeof(float));
    return RESMLP_OK;
  });
}

resmlp_status resmlp_train(const resmlp_config* cfg, const char* out_dir, resmlp_epoch_fn on_epoch, void* user,
                           resmlp_model** out, double* best_accuracy) {
  RESMLP_REQUIRE(cfg);
  return guarded([&] {
    const auto& rc = cfg->cfg;
    const auto train = resmlp::load_image_dataset(rc.data, resmlp::Split::train, rc.model, rc.train.seed);
    const auto test = resmlp::load_image_dataset(rc.data, resmlp::Split::test, rc.model, rc.train.seed);
    std::optional<resmlp::VisionModel<float>> teacher;
    resmlp::FitOptions options;
    if (out_dir) options.out_dir = out_dir;
    options.on_epoch = epoch_hook(on_epoch, user);
    if (rc.train.mode == resmlp::TrainMode::hard_distill) {
      if (rc.train.teacher.empty()) throw resmlp::ConfigError("hard distillation needs train.teacher");
      teacher = resmlp::load_vision_checkpoint(rc.train.teacher);
      options.teacher = &*teacher;
    }
    auto model = resmlp::VisionModel<float>::init(rc.model, rc.train.seed);
    const auto report = resmlp::fit(model, train, test, rc.train, options);
    if (best_accuracy) *best_accuracy = report.best_accuracy;
    if (out) *out = new resmlp_model{std::move(model)};
    return RESMLP_OK;
  });
}

resmlp_status resmlp_model_evaluate(const resmlp_model* model, const resmlp_config* cfg, double* accuracy) {
  RESMLP_REQUIRE(model && cfg && accuracy);
  return guarded([&] {
    const auto test =
        resmlp::load_image_dataset(cfg->cfg.data, resmlp::Split::test, model->model.config, cfg->cfg.train.seed);
    *accuracy = resmlp::evaluate(model->model, test);
    return RESMLP_OK;
  });
}

resmlp_status resmlp_model_sparsity_csv(const resmlp_model* model, double tau, const char* path) {
  RESMLP_REQUIRE(model && path);
  return guarded([&] {
    resmlp::write_sparsity_csv(std::string(path), resmlp::sparsity_report(model->model, tau));
    return RESMLP_OK;
  });
}

resmlp_status resmlp_model_export_filters(const resmlp_model* model, int layer, const char* selection,
                                          const char* path) {
  RESMLP_REQUIRE(model && selection && path);
  return guarded([&] {
    resmlp::export_filter_grid(model->model, layer, resmlp::PatchSelection::parse(selection), path);
    return RESMLP_OK;
  });
}

void resmlp_model_free(resmlp_model* model) { delete model; }

// ---- Translators ----------------------------------------------------------

resmlp_status resmlp_translator_train(const resmlp_config* cfg, const char* out_dir, resmlp_epoch_fn on_epoch,
                                      void* user, resmlp_translator** out, double* exact_match) {
  RESMLP_REQUIRE(cfg);
  return guarded([&] {
    const auto& rc = cfg->cfg;
    auto data = resmlp::load_seq2seq_data(rc.data, rc.seq2seq.vocab_size, rc.train.seed);
    auto mc = rc.seq2seq;
    if (!rc.data.corpus.empty()) mc.vocab_size = data.vocab.size();
    auto model = resmlp::Seq2SeqModel<float>::init(mc, rc.train.seed);
    resmlp::Seq2SeqFitOptions options;
    if (out_dir) options.out_dir = out_dir;
    options.on_epoch = epoch_hook(on_epoch, user);
    options.vocab = &data.vocab;
    options.eval_limit = static_cast<std::int64_t>(data.test.size());
    const auto report = resmlp::fit_seq2seq(model, data.train, data.test, rc.train, options);
    if (exact_match) *exact_match = report.best_accuracy;
    if (out) *out = new resmlp_translator{std::move(model), std::move(data.vocab)};
    return RESMLP_OK;
  });
}

resmlp_status resmlp_translator_load(const char* path, resmlp_translator** out) {
  RESMLP_REQUIRE(path && out);
  return guarded([&] {
    resmlp::Vocabulary vocab;
    auto model = resmlp::load_seq2seq_checkpoint(path, &vocab);
    *out = new resmlp_translator{std::move(model), std::move(vocab)};
    return RESMLP_OK;
  });
}

resmlp_status resmlp_translator_save(const resmlp_translator* t, const char* path) {
  RESMLP_REQUIRE(t && path);
  return guarded([&] {
    resmlp::save_checkpoint(t->model, path, &t->vocab);
    return RESMLP_OK;
  });
}

resmlp_status resmlp_translate(const resmlp_translator* t, const char* source, int beam, char* buffer,
                               size_t capacity, size_t* needed) {
  RESMLP_REQUIRE(t && source && beam >= 0);
  return guarded([&] {
    const auto ids = t->vocab.encode(source);
    if (ids.empty()) throw resmlp::DataError("empty source sentence");
    const auto hyps = decode_pairs(t->model, {resmlp::SequencePair{ids, {}}}, beam);
    return copy_out(t->vocab.decode(hyps.at(0)), buffer, capacity, needed);
  });
}

resmlp_status resmlp_translator_evaluate(const resmlp_translator* t, const resmlp_config* cfg, int beam,
                                         double* exact_match) {
  RESMLP_REQUIRE(t && cfg && exact_match && beam >= 0);
  return guarded([&] {
    auto data_cfg = cfg->cfg.data;
    if (!data_cfg.corpus.empty() && data_cfg.vocab.empty()) {
      throw resmlp::ConfigError("evaluating on a corpus needs data.vocab so ids match the translator");
    }
    const auto data = resmlp::load_seq2seq_data(data_cfg, t->model.config.vocab_size, cfg->cfg.train.seed);
    *exact_match = resmlp::exact_match(decode_pairs(t->model, data.test, beam), data.test);
    return RESMLP_OK;
  });
}

void resmlp_translator_free(resmlp_translator* t) { delete t; }

}  // extern "C"
