// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include <doctest.h>

#include <resmlp/resmlp.h>

#include <string>
#include <vector>

#include "temp_dir.hpp"

namespace {

const char* kTinyConfig =
    "model.image_size = 16\n"
    "model.patch_size = 4\n"
    "model.dim = 16\n"
    "model.depth = 2\n"
    "model.num_classes = 4\n"
    "train.epochs = 1\n"
    "train.batch_size = 16\n"
    "train.warmup_epochs = 0\n"
    "data.synthetic_train = 64\n"
    "data.synthetic_test = 32\n";

std::string serialize(const resmlp_config* cfg) {
  std::size_t needed = 0;
  CHECK(resmlp_config_serialize(cfg, nullptr, 0, &needed) == RESMLP_E_BUFFER_TOO_SMALL);
  std::string text(needed, '\0');
  REQUIRE(resmlp_config_serialize(cfg, text.data(), text.size(), &needed) == RESMLP_OK);
  text.resize(needed - 1);
  return text;
}

}  // namespace

TEST_CASE("C API configuration") {
  CHECK(std::string(resmlp_status_string(RESMLP_E_CORRUPT_CHECKPOINT)) == "corrupt checkpoint");
  resmlp_config* cfg = nullptr;
  REQUIRE(resmlp_config_default(&cfg) == RESMLP_OK);
  std::uint64_t params = 0, macs = 0;
  REQUIRE(resmlp_count(cfg, &params, &macs) == RESMLP_OK);
  CHECK(params == 15350872u);
  CHECK(macs > 2'900'000'000u);
  CHECK(macs < 3'100'000'000u);

  CHECK(resmlp_config_set(cfg, "model.depth", "24") == RESMLP_OK);
  CHECK(resmlp_config_set(cfg, "model.depth", "-3") == RESMLP_E_CONFIG);
  CHECK(std::string(resmlp_last_error()).find("depth") != std::string::npos);
  CHECK(resmlp_config_set(cfg, "model.nope", "1") == RESMLP_E_CONFIG);
  CHECK(resmlp_config_set(cfg, "model.preset", "B24") == RESMLP_OK);
  REQUIRE(resmlp_count(cfg, &params, nullptr) == RESMLP_OK);
  CHECK(params > 115'000'000u);

  const auto text = serialize(cfg);
  resmlp_config* again = nullptr;
  REQUIRE(resmlp_config_parse(text.c_str(), &again) == RESMLP_OK);
  CHECK(serialize(again) == text);
  resmlp_config_free(again);

  resmlp_config* bad = nullptr;
  CHECK(resmlp_config_parse("model.depth = 3\nmodel.bogus = 1\n", &bad) == RESMLP_E_PARSE);
  CHECK(bad == nullptr);
  CHECK(std::string(resmlp_last_error()).find("2") != std::string::npos);
  CHECK(resmlp_config_load("/nonexistent/x.cfg", &bad) == RESMLP_E_IO);
  CHECK(resmlp_config_parse(nullptr, &bad) == RESMLP_E_INVALID_ARGUMENT);
  resmlp_config_free(cfg);
  resmlp_config_free(nullptr);
}

TEST_CASE("C API image models") {
  resmlp::testing::TempDir dir("capi");
  resmlp_config* cfg = nullptr;
  REQUIRE(resmlp_config_parse(kTinyConfig, &cfg) == RESMLP_OK);

  resmlp_model* model = nullptr;
  REQUIRE(resmlp_model_init(cfg, 3, &model) == RESMLP_OK);
  std::vector<float> images(2 * 3 * 16 * 16);
  for (std::size_t i = 0; i < images.size(); ++i) images[i] = static_cast<float>(i % 17) / 17.0f - 0.5f;
  std::vector<float> logits(8), fused_logits(8), loaded_logits(8);
  REQUIRE(resmlp_model_logits(model, images.data(), 2, logits.data(), logits.size()) == RESMLP_OK);
  CHECK(resmlp_model_logits(model, images.data(), 2, logits.data(), 7) == RESMLP_E_BUFFER_TOO_SMALL);

  resmlp_model* fused = nullptr;
  REQUIRE(resmlp_model_fuse(model, &fused) == RESMLP_OK);
  REQUIRE(resmlp_model_logits(fused, images.data(), 2, fused_logits.data(), 8) == RESMLP_OK);
  for (std::size_t i = 0; i < 8; ++i) CHECK(fused_logits[i] == doctest::Approx(logits[i]).epsilon(1e-4));

  const auto path = dir.file("m.ckpt");
  REQUIRE(resmlp_model_save(model, path.c_str()) == RESMLP_OK);
  resmlp_model* loaded = nullptr;
  REQUIRE(resmlp_model_load(path.c_str(), &loaded) == RESMLP_OK);
  REQUIRE(resmlp_model_logits(loaded, images.data(), 2, loaded_logits.data(), 8) == RESMLP_OK);
  CHECK(loaded_logits == logits);

  std::uint64_t count = 0;
  CHECK(resmlp_model_param_count(model, &count) == RESMLP_OK);
  std::uint64_t counted = 0;
  CHECK(resmlp_count(cfg, &counted, nullptr) == RESMLP_OK);
  CHECK(count == counted);

  CHECK(resmlp_model_sparsity_csv(model, 0.05, dir.file("s.csv").c_str()) == RESMLP_OK);
  CHECK(resmlp_model_export_filters(model, 0, "center6x6", dir.file("f.pgm").c_str()) == RESMLP_OK);
  CHECK(resmlp_model_export_filters(model, 7, "all", dir.file("g.pgm").c_str()) == RESMLP_E_CONTRACT);
  CHECK(resmlp_model_export_filters(model, 0, "x", dir.file("g.pgm").c_str()) == RESMLP_E_CONFIG);

  resmlp::testing::write_file(dir.file("junk.ckpt"), std::vector<char>{'n', 'o', 'p', 'e', 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  resmlp_model* junk = nullptr;
  CHECK(resmlp_model_load(dir.file("junk.ckpt").c_str(), &junk) == RESMLP_E_CORRUPT_CHECKPOINT);
  CHECK(junk == nullptr);

  resmlp_model* trained = nullptr;
  double best = -1;
  int epochs_seen = 0;
  const auto hook = [](int, double loss, double acc, double, void* user) {
    CHECK(loss > 0);
    CHECK(acc >= 0);
    ++*static_cast<int*>(user);
  };
  REQUIRE(resmlp_train(cfg, dir.str().c_str(), hook, &epochs_seen, &trained, &best) == RESMLP_OK);
  CHECK(epochs_seen == 1);
  CHECK(best >= 0.0);
  double acc = -1;
  REQUIRE(resmlp_model_evaluate(trained, cfg, &acc) == RESMLP_OK);
  CHECK(acc == best);

  REQUIRE(resmlp_config_set(cfg, "train.mode", "hard_distill") == RESMLP_OK);
  CHECK(resmlp_train(cfg, nullptr, nullptr, nullptr, nullptr, nullptr) == RESMLP_E_CONFIG);

  for (auto* m : {model, fused, loaded, trained}) resmlp_model_free(m);
  resmlp_config_free(cfg);
}

TEST_CASE("C API translators") {
  resmlp::testing::TempDir dir("capi_s2s");
  resmlp_config* cfg = nullptr;
  REQUIRE(resmlp_config_parse("seq2seq.vocab_size = 12\nseq2seq.dim = 16\nseq2seq.hidden = 32\n"
                              "seq2seq.encoder_depth = 1\nseq2seq.decoder_depth = 1\nseq2seq.max_len = 8\n"
                              "data.train_pairs = 64\ndata.test_pairs = 8\ndata.min_length = 2\ndata.max_length = 5\n"
                              "train.epochs = 1\ntrain.batch_size = 16\ntrain.warmup_epochs = 0\n",
                              &cfg) == RESMLP_OK);
  resmlp_translator* t = nullptr;
  double em = -1;
  REQUIRE(resmlp_translator_train(cfg, nullptr, nullptr, nullptr, &t, &em) == RESMLP_OK);
  CHECK(em >= 0.0);

  std::vector<char> greedy(256), beam1(256);
  std::size_t needed = 0;
  REQUIRE(resmlp_translate(t, "a b c", 0, greedy.data(), greedy.size(), &needed) == RESMLP_OK);
  REQUIRE(resmlp_translate(t, "a b c", 1, beam1.data(), beam1.size(), &needed) == RESMLP_OK);
  CHECK(std::string(greedy.data()) == std::string(beam1.data()));
  CHECK(resmlp_translate(t, "a zebra", 1, greedy.data(), greedy.size(), &needed) == RESMLP_E_DATA);
  CHECK(resmlp_translate(t, "a b c d e f g h i", 1, greedy.data(), greedy.size(), &needed) == RESMLP_E_CAPACITY);
  CHECK(resmlp_translate(t, "a", -1, greedy.data(), greedy.size(), &needed) == RESMLP_E_INVALID_ARGUMENT);

  const auto path = dir.file("t.ckpt");
  REQUIRE(resmlp_translator_save(t, path.c_str()) == RESMLP_OK);
  resmlp_translator* back = nullptr;
  REQUIRE(resmlp_translator_load(path.c_str(), &back) == RESMLP_OK);
  std::vector<char> again(256), beam(256);
  REQUIRE(resmlp_translate(back, "a b c", 1, again.data(), again.size(), &needed) == RESMLP_OK);
  CHECK(std::string(again.data()) == std::string(greedy.data()));
  CHECK(resmlp_translate(back, "a b c", 3, beam.data(), beam.size(), &needed) == RESMLP_OK);

  double g = -1, b = -1;
  REQUIRE(resmlp_translator_evaluate(back, cfg, 0, &g) == RESMLP_OK);
  REQUIRE(resmlp_translator_evaluate(back, cfg, 1, &b) == RESMLP_OK);
  CHECK(g == b);
  REQUIRE(resmlp_translator_evaluate(back, cfg, 2, &b) == RESMLP_OK);
  CHECK(b >= 0.0);

  resmlp_model* wrong = nullptr;
  CHECK(resmlp_model_load(path.c_str(), &wrong) == RESMLP_E_CONTRACT);
  resmlp_translator_free(t);
  resmlp_translator_free(back);
  resmlp_config_free(cfg);
}
