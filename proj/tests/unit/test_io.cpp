// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include <doctest.h>

#include <cstring>
#include <fstream>

#include "io/checkpoint.hpp"
#include "io/config_file.hpp"
#include "io/datasets.hpp"
#include "random_tensor.hpp"
#include "temp_dir.hpp"

using namespace resmlp;
using resmlp::testing::read_file;
using resmlp::testing::TempDir;
using resmlp::testing::write_file;

namespace {

int parse_error_line(std::string_view text) {
  try {
    parse_config_text(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return -1;
}

CheckpointCheck failed_check(const std::function<void()>& load) {
  try {
    load();
  } catch (const CorruptCheckpointError& e) {
    return e.check();
  }
  FAIL("no CorruptCheckpointError");
  return CheckpointCheck::header;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.image_size = 16;
  c.patch_size = 4;
  c.dim = 24;
  c.depth = 2;
  c.num_classes = 5;
  return c;
}

template <typename M>
void randomize_all(M& model, std::uint64_t seed) {
  Rng rng(seed);
  model.visit([&](const std::string&, Tensor<float>& t) {
    for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1, 1));
  });
}

template <typename M>
void check_bit_identical(const M& a, const M& b) {
  std::vector<std::pair<std::string, const Tensor<float>*>> left, right;
  a.visit([&](const std::string& n, const Tensor<float>& t) { left.emplace_back(n, &t); });
  b.visit([&](const std::string& n, const Tensor<float>& t) { right.emplace_back(n, &t); });
  REQUIRE(left.size() == right.size());
  for (std::size_t i = 0; i < left.size(); ++i) {
    CHECK(left[i].first == right[i].first);
    REQUIRE(left[i].second->shape() == right[i].second->shape());
    CHECK(std::memcmp(left[i].second->data(), right[i].second->data(), left[i].second->size() * sizeof(float)) == 0);
  }
}

std::vector<char> cifar_record(std::uint8_t label, std::uint8_t first_pixel) {
  std::vector<char> rec(kCifarRecordBytes);
  rec[0] = static_cast<char>(label);
  for (std::size_t i = 1; i < rec.size(); ++i) rec[i] = static_cast<char>((i * 7) % 256);
  rec[1] = static_cast<char>(first_pixel);
  return rec;
}

}  // namespace

TEST_CASE("config files") {
  SUBCASE("empty text gives defaults") {
    CHECK(parse_config_text("") == RunConfig{});
    CHECK(parse_config_text("# only a comment\n\n") == RunConfig{});
  }
  SUBCASE("presets") {
    const auto c = parse_config_text("model.preset = S12\n").model;
    CHECK(c.depth == 12);
    CHECK(c.dim == 384);
    CHECK(c.patch_size == 16);
    const auto b = parse_config_text("model.depth = 6   # override\nmodel.preset = B24\n").model;
    CHECK(b.depth == 6);
    CHECK(b.dim == 768);
  }
  SUBCASE("errors carry the line") {
    CHECK(parse_error_line("# header\nmodel.depth = -1\n") == 2);
    CHECK(parse_error_line("model.depth = 4\ntrain.lr = 0.1\nmodel.dpeth = 3\n") == 3);
    CHECK(parse_error_line("model.depth = twelve\n") == 1);
    CHECK(parse_error_line("model.depth = 4\nmodel.depth = 5\n") == 2);
    CHECK(parse_error_line("model.image_size = 30\nmodel.patch_size = 16\n") == 2);
    CHECK(parse_error_line("just some words\n") == 1);
    CHECK(parse_error_line("model.preset = S13\n") == 1);
    CHECK(parse_error_line("train.optimizer = lamb\n") == 1);
  }
  SUBCASE("serialization round trips") {
    RunConfig c;
    c.model = preset_config("S24/8");
    c.model.communication = Communication::mlp;
    c.model.layerscale_init = 0.25;
    c.model.pre_norm = PreNorm::layernorm;
    c.train.lr = 3.7e-4;
    c.train.label_smoothing = 0.0;
    c.train.mode = TrainMode::hard_distill;
    c.train.teacher = "teacher.ckpt";
    c.train.warmup_steps = 12;
    c.data.kind = DatasetKind::cifar10_binary;
    c.data.path = "/data/cifar";
    c.data.mean = {0.5, 0.25, 0.125};
    c.seq2seq.heads = 2;
    c.seq2seq.layerscale_init = 0.1;
    const auto text = serialize_config(c);
    const auto back = parse_config_text(text);
    CHECK(back == c);
    CHECK(serialize_config(back) == text);
    CHECK(parse_config_text(serialize_config(RunConfig{})) == RunConfig{});
  }
  SUBCASE("files") {
    TempDir dir("cfg");
    {
      std::ofstream out(dir.file("a.cfg"));
      out << "model.preset = S12\ntrain.epochs = 3\n";
    }
    CHECK(parse_config(dir.file("a.cfg")).train.epochs == 3);
    CHECK_THROWS_AS(parse_config(dir.file("missing.cfg")), IoError);
  }
}

TEST_CASE("vision checkpoints") {
  TempDir dir("ckpt");
  auto model = VisionModel<float>::init(tiny_config(), 1);
  randomize_all(model, 2);
  const auto path = dir.file("m.ckpt");
  save_checkpoint(model, path);
  CHECK(checkpoint_kind(path) == CheckpointKind::vision);

  SUBCASE("round trip is bit-exact") {
    const auto back = load_vision_checkpoint(path);
    CHECK(back.config == model.config);
    check_bit_identical(model, back);
    Rng rng(3);
    const auto images = resmlp::testing::random_tensor<float>({4, 3, 16, 16}, rng);
    const auto a = model.logits(images), b = back.logits(images);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
  }
  SUBCASE("fused and alternative layouts") {
    auto cfg = tiny_config();
    cfg.pooling = Pooling::class_mlp;
    cfg.communication = Communication::mlp;
    cfg.positional_embedding = true;
    cfg.post_affine_bias = true;
    auto other = VisionModel<float>::init(cfg, 4);
    randomize_all(other, 5);
    save_checkpoint(other, dir.file("o.ckpt"));
    check_bit_identical(other, load_vision_checkpoint(dir.file("o.ckpt")));
    const auto fused = fuse_affine(model);
    save_checkpoint(fused, dir.file("f.ckpt"));
    check_bit_identical(fused, load_vision_checkpoint(dir.file("f.ckpt")));
  }
  SUBCASE("damage is detected") {
    const auto bytes = read_file(path);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 10);
    write_file(dir.file("t.ckpt"), truncated);
    CHECK(failed_check([&] { load_vision_checkpoint(dir.file("t.ckpt")); }) == CheckpointCheck::crc);

    truncated.resize(40);
    write_file(dir.file("t2.ckpt"), truncated);
    CHECK(failed_check([&] { load_vision_checkpoint(dir.file("t2.ckpt")); }) == CheckpointCheck::crc);

    auto flipped = bytes;
    flipped[bytes.size() - 100] ^= 0x10;
    write_file(dir.file("x.ckpt"), flipped);
    CHECK(failed_check([&] { load_vision_checkpoint(dir.file("x.ckpt")); }) == CheckpointCheck::crc);

    auto magic = bytes;
    magic[0] = 'X';
    write_file(dir.file("m2.ckpt"), magic);
    CHECK(failed_check([&] { load_vision_checkpoint(dir.file("m2.ckpt")); }) == CheckpointCheck::magic);

    auto version = bytes;
    version[4] = 9;
    write_file(dir.file("v.ckpt"), version);
    CHECK(failed_check([&] { load_vision_checkpoint(dir.file("v.ckpt")); }) == CheckpointCheck::version);

    CHECK_THROWS_AS(load_vision_checkpoint(dir.file("nothing.ckpt")), IoError);
    CHECK_THROWS_AS(load_seq2seq_checkpoint(path), ContractError);
  }
}

TEST_CASE("seq2seq checkpoints") {
  TempDir dir("s2s_ckpt");
  Seq2SeqConfig cfg;
  cfg.vocab_size = 7;
  cfg.dim = 8;
  cfg.hidden = 16;
  cfg.encoder_depth = 1;
  cfg.decoder_depth = 2;
  cfg.heads = 2;
  cfg.max_len = 6;
  auto model = Seq2SeqModel<float>::init(cfg, 1);
  randomize_all(model, 2);
  Vocabulary vocab;
  for (const char* w : {"le", "chat", "noir", "un"}) vocab.add(w);
  save_checkpoint(model, dir.file("s.ckpt"), &vocab);
  CHECK(checkpoint_kind(dir.file("s.ckpt")) == CheckpointKind::seq2seq);
  Vocabulary loaded;
  const auto back = load_seq2seq_checkpoint(dir.file("s.ckpt"), &loaded);
  CHECK(back.config == cfg);
  check_bit_identical(model, back);
  CHECK(loaded.size() == 7);
  CHECK(loaded.id("noir") == 5);

  save_checkpoint(model, dir.file("plain.ckpt"));
  Vocabulary toy;
  load_seq2seq_checkpoint(dir.file("plain.ckpt"), &toy);
  CHECK(toy.size() == 7);
  CHECK_THROWS_AS(load_vision_checkpoint(dir.file("plain.ckpt")), ContractError);

  Vocabulary small;
  CHECK_THROWS_AS(save_checkpoint(model, dir.file("bad.ckpt"), &small), ContractError);
}

TEST_CASE("CIFAR binary files") {
  TempDir dir("cifar");
  auto bytes = cifar_record(3, 255);
  const auto second = cifar_record(7, 51);
  bytes.insert(bytes.end(), second.begin(), second.end());
  write_file(dir.file("two.bin"), bytes);

  const auto raw = load_cifar10_file(dir.file("two.bin"), {0, 0, 0}, {1, 1, 1});
  REQUIRE(raw.size() == 2);
  CHECK(raw.labels == std::vector<int>{3, 7});
  CHECK(raw.images.shape() == Shape{2, 3, 32, 32});
  CHECK(raw.images.at({0, 0, 0, 0}) == 1.0f);
  CHECK(raw.images.at({1, 0, 0, 0}) == 51.0f / 255.0f);
  // Byte 1 + 1024 is the first pixel of the second channel.
  CHECK(raw.images.at({0, 1, 0, 0}) == static_cast<float>((1025 * 7) % 256) / 255.0f);
  for (std::int64_t i = 0; i < 2; ++i) {
    for (std::int64_t k = 0; k < 3072; ++k) {
      const auto byte = static_cast<std::uint8_t>(bytes[static_cast<std::size_t>(i * 3073 + 1 + k)]);
      REQUIRE(raw.images.data()[i * 3072 + k] == static_cast<float>(byte) / 255.0f);
    }
  }

  const auto norm = load_cifar10_file(dir.file("two.bin"), {0.5, 0.5, 0.5}, {0.25, 0.25, 0.25});
  CHECK(norm.images.at({0, 0, 0, 0}) == doctest::Approx((1.0 - 0.5) / 0.25));

  auto missing_label = cifar_record(1, 1);
  missing_label.pop_back();
  write_file(dir.file("short.bin"), missing_label);
  CHECK_THROWS_WITH_AS(load_cifar10_file(dir.file("short.bin"), {0, 0, 0}, {1, 1, 1}),
                       doctest::Contains("at offset 0"), DataError);

  auto tail = bytes;
  tail.resize(tail.size() + 5);
  write_file(dir.file("tail.bin"), tail);
  CHECK_THROWS_WITH_AS(load_cifar10_file(dir.file("tail.bin"), {0, 0, 0}, {1, 1, 1}),
                       doctest::Contains("at offset 6146"), DataError);

  write_file(dir.file("label.bin"), cifar_record(10, 0));
  CHECK_THROWS_AS(load_cifar10_file(dir.file("label.bin"), {0, 0, 0}, {1, 1, 1}), DataError);
  CHECK_THROWS_AS(load_cifar10(dir.str(), Split::test, {0, 0, 0}, {1, 1, 1}), IoError);
  CHECK_THROWS_AS(load_cifar10_file(dir.file("two.bin"), {0, 0}, {1, 1}), ConfigError);
}

TEST_CASE("raw tensor directories") {
  TempDir dir("raw");
  std::filesystem::create_directories(dir.file("train"));
  {
    std::ofstream m(dir.file("train/manifest.txt"));
    m << "count = 3\nchannels = 1\nheight = 2\nwidth = 2\nclasses = 4\n";
  }
  write_file(dir.file("train/images.bin"), std::vector<char>{0, 51, 102, static_cast<char>(255), 1, 2, 3, 4, 5, 6, 7, 8});
  write_file(dir.file("train/labels.bin"), std::vector<char>{0, 3, 1});
  const auto d = load_raw_tensor_dir(dir.str(), Split::train, {0}, {1});
  CHECK(d.images.shape() == Shape{3, 1, 2, 2});
  CHECK(d.labels == std::vector<int>{0, 3, 1});
  CHECK(d.num_classes == 4);
  CHECK(d.images.at({0, 0, 1, 1}) == 1.0f);
  CHECK(d.images.at({0, 0, 0, 1}) == 0.2f);

  write_file(dir.file("train/labels.bin"), std::vector<char>{0, 4, 1});
  CHECK_THROWS_AS(load_raw_tensor_dir(dir.str(), Split::train, {0}, {1}), DataError);
  write_file(dir.file("train/labels.bin"), std::vector<char>{0, 1});
  CHECK_THROWS_AS(load_raw_tensor_dir(dir.str(), Split::train, {0}, {1}), DataError);
  CHECK_THROWS_AS(load_raw_tensor_dir(dir.str(), Split::test, {0}, {1}), IoError);
}

TEST_CASE("synthetic image data through the data config") {
  DataConfig dc;
  dc.synthetic_train = 30;
  dc.synthetic_test = 20;
  const auto train = load_image_dataset(dc, Split::train, tiny_config(), 9);
  const auto test = load_image_dataset(dc, Split::test, tiny_config(), 9);
  CHECK(train.size() == 30);
  CHECK(test.size() == 20);
  CHECK(train.images.shape() == Shape{30, 3, 16, 16});
  CHECK(train.num_classes == 5);
  CHECK(std::memcmp(train.images.data(), test.images.data(), 16 * sizeof(float)) != 0);
  const auto again = load_image_dataset(dc, Split::train, tiny_config(), 9);
  CHECK(std::memcmp(train.images.data(), again.images.data(), train.images.size() * sizeof(float)) == 0);
}

TEST_CASE("parallel text") {
  TempDir dir("text");
  {
    std::ofstream out(dir.file("p.tsv"));
    out << "le chat\tthe cat\nun chat noir\ta black cat\n";
  }
  Vocabulary v;
  const auto pairs = load_parallel_text(dir.file("p.tsv"), v, true);
  REQUIRE(pairs.size() == 2);
  CHECK(v.decode(pairs[1].source) == "un chat noir");
  CHECK(v.decode(pairs[1].target) == "a black cat");
  CHECK(pairs[0].source[1] == pairs[1].source[1]);

  Vocabulary fixed = v;
  {
    std::ofstream out(dir.file("q.tsv"));
    out << "le chien\tthe dog\n";
  }
  CHECK_THROWS_AS(load_parallel_text(dir.file("q.tsv"), fixed, false), DataError);
  {
    std::ofstream out(dir.file("r.tsv"));
    out << "le chat the cat\n";
  }
  CHECK_THROWS_WITH_AS(load_parallel_text(dir.file("r.tsv"), fixed, true), doctest::Contains(":1:"), DataError);
}
