// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

// Command-line front end. Links only the C API.

#include <resmlp/resmlp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

struct Failure {
  int code;
  std::string message;
};

void check(resmlp_status s) {
  if (s != RESMLP_OK) throw Failure{kRuntimeError, std::string(resmlp_status_string(s)) + ": " + resmlp_last_error()};
}

[[noreturn]] void usage(const std::string& message) { throw Failure{kUsageError, message}; }

using ConfigPtr = std::unique_ptr<resmlp_config, decltype(&resmlp_config_free)>;
using ModelPtr = std::unique_ptr<resmlp_model, decltype(&resmlp_model_free)>;
using TranslatorPtr = std::unique_ptr<resmlp_translator, decltype(&resmlp_translator_free)>;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  bool verbose = false;
};

ConfigPtr load_config(const Globals& g) {
  resmlp_config* raw = nullptr;
  check(g.config.empty() ? resmlp_config_default(&raw) : resmlp_config_load(g.config.c_str(), &raw));
  ConfigPtr cfg(raw, resmlp_config_free);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) usage("--set expects key=value, got '" + kv + "'");
    check(resmlp_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  if (g.seed) check(resmlp_config_set(cfg.get(), "train.seed", std::to_string(*g.seed).c_str()));
  return cfg;
}

std::uint64_t seed_of(const Globals& g) { return g.seed.value_or(0); }

const char* out_dir(const Globals& g) {
  if (g.out.empty()) return nullptr;
  std::filesystem::create_directories(g.out);
  return g.out.c_str();
}

std::string require_out(const Globals& g, const char* command) {
  if (g.out.empty()) usage(std::string(command) + " needs --out");
  std::filesystem::create_directories(g.out);
  return g.out;
}

ModelPtr load_model(const std::string& path) {
  resmlp_model* raw = nullptr;
  check(resmlp_model_load(path.c_str(), &raw));
  return ModelPtr(raw, resmlp_model_free);
}

// A checkpoint when given, otherwise a fresh model from the config.
ModelPtr model_from(const Globals& g, const std::string& path) {
  if (!path.empty()) return load_model(path);
  auto cfg = load_config(g);
  resmlp_model* raw = nullptr;
  check(resmlp_model_init(cfg.get(), seed_of(g), &raw));
  return ModelPtr(raw, resmlp_model_free);
}

void print_epoch(int epoch, double loss, double accuracy, double seconds, void* user) {
  const bool verbose = *static_cast<bool*>(user);
  std::printf("epoch %d loss %.6f acc %.4f", epoch, loss, accuracy);
  if (verbose) std::printf(" seconds %.1f", seconds);
  std::printf("\n");
  std::fflush(stdout);
}

std::string translate_line(const resmlp_translator* t, const std::string& line, int beam) {
  std::size_t needed = 0;
  std::vector<char> buf(1024);
  auto s = resmlp_translate(t, line.c_str(), beam, buf.data(), buf.size(), &needed);
  if (s == RESMLP_E_BUFFER_TOO_SMALL) {
    buf.resize(needed);
    s = resmlp_translate(t, line.c_str(), beam, buf.data(), buf.size(), &needed);
  }
  check(s);
  return buf.data();
}

int run(int argc, char** argv) {
  CLI::App app{"ResMLP image classification and sequence models"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Configuration file of section.key = value lines");
  app.add_option("--seed", g.seed, "Seed for initialization, shuffling and synthetic data");
  app.add_option("--out", g.out, "Directory for every file the command writes");
  app.add_option("--set", g.overrides, "Override one setting, e.g. --set model.depth=6");
  app.add_flag("--verbose", g.verbose, "Also print timings");

  auto* count = app.add_subcommand("count", "Print parameter and MAC counts of the configured image model");

  auto* train = app.add_subcommand("train", "Train an image model");

  std::string teacher;
  auto* distill = app.add_subcommand("distill", "Train an image model with hard distillation");
  distill->add_option("--teacher", teacher, "Teacher checkpoint")->required();

  std::string model_path;
  auto* eval = app.add_subcommand("eval", "Top-1 accuracy on the configured test split");
  eval->add_option("--model", model_path, "Checkpoint")->required();

  auto* translate_train = app.add_subcommand("translate-train", "Train a sequence model");

  int beam = 4;
  std::string input;
  std::vector<std::string> sentences;
  bool eval_mode = false;
  bool greedy = false;
  auto* translate = app.add_subcommand("translate", "Decode sentences with a sequence model");
  translate->add_option("--model", model_path, "Checkpoint")->required();
  translate->add_option("--beam", beam, "Beam width; 1 is greedy")->check(CLI::PositiveNumber);
  translate->add_option("--input", input, "File with one source sentence per line");
  translate->add_flag("--greedy", greedy, "Plain greedy decoding instead of beam search");
  translate->add_flag("--eval", eval_mode, "Report exact match on the configured test pairs");
  translate->add_option("sentences", sentences, "Source sentences (stdin when none)");

  double tau = 0.05;
  auto* analyze = app.add_subcommand("analyze", "Sparsity report of the weight matrices");
  analyze->add_option("--model", model_path, "Checkpoint (fresh model from the config when absent)");
  analyze->add_option("--tau", tau, "Threshold as a fraction of the largest magnitude")->check(CLI::NonNegativeNumber);

  std::vector<int> layers;
  std::string patches = "center6x6";
  auto* export_filters = app.add_subcommand("export-filters", "Write cross-patch filters as PGM grids");
  export_filters->add_option("--model", model_path, "Checkpoint (fresh model from the config when absent)");
  export_filters->add_option("--layer", layers, "Layer index; every layer when absent");
  export_filters->add_option("--patches", patches, "center6x6, all, or comma-separated patch indices");

  auto* fuse = app.add_subcommand("fuse", "Fold affine transforms into linear layers");
  fuse->add_option("--model", model_path, "Checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "resmlp: usage error: %s\n", e.what());
    return kUsageError;
  }

  if (count->parsed()) {
    auto cfg = load_config(g);
    std::uint64_t params = 0, macs = 0;
    check(resmlp_count(cfg.get(), &params, &macs));
    std::printf("params %llu (%.2fM)\nmacs %llu (%.2fG)\n", static_cast<unsigned long long>(params), params / 1e6,
                static_cast<unsigned long long>(macs), macs / 1e9);
  } else if (train->parsed() || distill->parsed()) {
    auto cfg = load_config(g);
    if (distill->parsed()) {
      check(resmlp_config_set(cfg.get(), "train.mode", "hard_distill"));
      check(resmlp_config_set(cfg.get(), "train.teacher", teacher.c_str()));
    }
    double best = 0;
    check(resmlp_train(cfg.get(), out_dir(g), print_epoch, &g.verbose, nullptr, &best));
    std::printf("best_accuracy %.4f\n", best);
  } else if (eval->parsed()) {
    auto cfg = load_config(g);
    auto model = load_model(model_path);
    double acc = 0;
    check(resmlp_model_evaluate(model.get(), cfg.get(), &acc));
    std::printf("accuracy %.4f\n", acc);
  } else if (translate_train->parsed()) {
    auto cfg = load_config(g);
    double em = 0;
    check(resmlp_translator_train(cfg.get(), out_dir(g), print_epoch, &g.verbose, nullptr, &em));
    std::printf("best_exact_match %.4f\n", em);
  } else if (translate->parsed()) {
    resmlp_translator* raw = nullptr;
    check(resmlp_translator_load(model_path.c_str(), &raw));
    TranslatorPtr t(raw, resmlp_translator_free);
    if (greedy) beam = 0;
    if (eval_mode) {
      auto cfg = load_config(g);
      double em = 0;
      check(resmlp_translator_evaluate(t.get(), cfg.get(), beam, &em));
      std::printf("exact_match %.4f\n", em);
      return 0;
    }
    if (!input.empty()) {
      std::ifstream in(input);
      if (!in) throw Failure{kRuntimeError, "cannot open '" + input + "'"};
      for (std::string line; std::getline(in, line);) sentences.push_back(line);
    } else if (sentences.empty()) {
      for (std::string line; std::getline(std::cin, line);) sentences.push_back(line);
    }
    for (const auto& s : sentences) std::printf("%s\n", translate_line(t.get(), s, beam).c_str());
  } else if (analyze->parsed()) {
    auto model = model_from(g, model_path);
    if (g.out.empty()) {
      std::fflush(stdout);
      check(resmlp_model_sparsity_csv(model.get(), tau, "/dev/stdout"));
    } else {
      const auto path = std::filesystem::path(require_out(g, "analyze")) / "sparsity.csv";
      check(resmlp_model_sparsity_csv(model.get(), tau, path.c_str()));
      std::printf("wrote %s\n", path.c_str());
    }
  } else if (export_filters->parsed()) {
    const auto dir = std::filesystem::path(require_out(g, "export-filters"));
    auto model = model_from(g, model_path);
    if (layers.empty()) {
      int depth = 0;
      check(resmlp_model_depth(model.get(), &depth));
      for (int i = 0; i < depth; ++i) layers.push_back(i);
    }
    for (int layer : layers) {
      const auto path = dir / ("filters_layer" + std::to_string(layer) + ".pgm");
      check(resmlp_model_export_filters(model.get(), layer, patches.c_str(), path.c_str()));
      std::printf("wrote %s\n", path.c_str());
    }
  } else if (fuse->parsed()) {
    const auto path = std::filesystem::path(require_out(g, "fuse")) / "fused.ckpt";
    auto model = load_model(model_path);
    resmlp_model* raw = nullptr;
    check(resmlp_model_fuse(model.get(), &raw));
    ModelPtr fused(raw, resmlp_model_free);
    check(resmlp_model_save(fused.get(), path.c_str()));
    std::printf("wrote %s\n", path.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Failure& f) {
    std::fprintf(stderr, "resmlp: %s\n", f.message.c_str());
    return f.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "resmlp: %s\n", e.what());
    return kRuntimeError;
  }
}
