// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "io/checkpoint.hpp"
#include "random_tensor.hpp"
#include "temp_dir.hpp"
#include "train/losses.hpp"
#include "train/trainer.hpp"

using namespace resmlp;
using resmlp::testing::TempDir;

namespace {

Var<double> const_logits(Tape<double>& tape, Shape shape, std::vector<double> values) {
  return tape.constant(Tensor<double>(std::move(shape), std::move(values)));
}

// Depth 2, d 64, p 4 on 32x32 inputs.
ModelConfig smoke_config() {
  ModelConfig cfg;
  cfg.image_size = 32;
  cfg.patch_size = 4;
  cfg.dim = 64;
  cfg.depth = 2;
  cfg.num_classes = 10;
  return cfg;
}

TrainConfig smoke_train(int epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 64;
  tc.lr = 2e-3;
  tc.warmup_epochs = 1;
  tc.seed = 7;
  return tc;
}

}  // namespace

TEST_CASE("cross entropy reference values") {
  Tape<double> tape(false);
  SUBCASE("uniform logits give ln K") {
    const std::vector<int> labels{3};
    auto loss = cross_entropy(const_logits(tape, {1, 7}, std::vector<double>(7, 0.25)), std::span<const int>(labels));
    CHECK(loss.value()[0] == doctest::Approx(std::log(7.0)).epsilon(1e-14));
  }
  SUBCASE("three classes") {
    // -log(e^3 / (e + e^2 + e^3)), evaluated in long double.
    const long double e1 = std::exp(1.0L), e2 = std::exp(2.0L), e3 = std::exp(3.0L);
    const double oracle = static_cast<double>(-std::log(e3 / (e1 + e2 + e3)));
    const std::vector<int> labels{2};
    auto loss = cross_entropy(const_logits(tape, {1, 3}, {1, 2, 3}), std::span<const int>(labels));
    CHECK(loss.value()[0] == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(loss.value()[0] == doctest::Approx(0.40761).epsilon(1e-5));
  }
  SUBCASE("smoothed optimum equals the entropy floor") {
    const double s = 0.1;
    const int k = 10;
    std::vector<double> logits(k, std::log(s / k));
    logits[4] = std::log(1 - s + s / k);
    const std::vector<int> labels{4};
    auto loss = cross_entropy(const_logits(tape, {1, k}, logits), std::span<const int>(labels), s);
    CHECK(loss.value()[0] == doctest::Approx(smoothed_entropy_floor(s, k)).epsilon(1e-12));
    const double stated = -(1 - s) * std::log(1 - s + s / k) - s * (k - 1) / k * std::log(s / k);
    CHECK(smoothed_entropy_floor(s, k) >= stated);
  }
}

TEST_CASE("hard distillation loss") {
  Tape<double> tape(false);
  SUBCASE("teacher agreeing with the label reduces to plain cross entropy") {
    Rng rng(3);
    auto student = resmlp::testing::random_tensor<double>({5, 6}, rng);
    auto teacher = resmlp::testing::random_tensor<double>({5, 6}, rng);
    std::vector<int> labels;
    for (int b = 0; b < 5; ++b) {
      int arg = 0;
      for (int k = 1; k < 6; ++k) {
        if (teacher.at({b, k}) > teacher.at({b, arg})) arg = k;
      }
      labels.push_back(arg);
    }
    auto s = tape.constant(student);
    const double distill = hard_distill_loss(s, std::span<const int>(labels), teacher, 0.1).value()[0];
    const double plain = cross_entropy(s, std::span<const int>(labels), 0.1).value()[0];
    CHECK(distill == plain);
  }
  SUBCASE("uniform teacher pseudo-labels class 0") {
    const std::vector<int> labels{2};
    auto s = const_logits(tape, {1, 3}, {0.3, -0.2, 0.5});
    const Tensor<double> teacher(Shape{1, 3}, std::vector<double>{1, 1, 1});
    const std::vector<int> zero{0};
    const double expected = 0.5 * cross_entropy(s, std::span<const int>(labels)).value()[0] +
                            0.5 * cross_entropy(s, std::span<const int>(zero)).value()[0];
    CHECK(hard_distill_loss(s, std::span<const int>(labels), teacher).value()[0] == doctest::Approx(expected));
  }
  SUBCASE("uniform student, disagreeing teacher") {
    const std::vector<int> labels{0};
    auto s = const_logits(tape, {1, 2}, {0, 0});
    const Tensor<double> teacher(Shape{1, 2}, std::vector<double>{-1, 1});
    CHECK(hard_distill_loss(s, std::span<const int>(labels), teacher).value()[0] ==
          doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }
  SUBCASE("class-count mismatch") {
    const std::vector<int> labels{0};
    auto s = const_logits(tape, {1, 2}, {0, 0});
    const Tensor<double> teacher(Shape{1, 3}, 0.0);
    CHECK_THROWS_AS(hard_distill_loss(s, std::span<const int>(labels), teacher), DimensionError);
  }
}

TEST_CASE("optimizer updates") {
  SUBCASE("zero gradient and zero decay leave parameters unchanged") {
    for (auto kind : {OptimizerKind::adamw, OptimizerKind::sgd}) {
      Tensor<double> p(Shape{3}, std::vector<double>{1, -2, 3});
      const auto before = p;
      OptimizerConfig cfg;
      cfg.kind = kind;
      cfg.weight_decay = 0;
      Optimizer<double> opt(cfg);
      std::vector<ParamSlot<double>> slots{{"p", &p, Tensor<double>(Shape{3}, 0.0), true}};
      opt.step(slots, 0.1);
      opt.step(slots, 0.1);
      CHECK(p == before);
    }
  }
  SUBCASE("plain sgd step") {
    Tensor<double> p = Tensor<double>::scalar(1.0);
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::sgd;
    cfg.momentum = 0;
    cfg.weight_decay = 0;
    Optimizer<double> opt(cfg);
    std::vector<ParamSlot<double>> slots{{"p", &p, Tensor<double>::scalar(1.0), true}};
    opt.step(slots, 0.1);
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-15));
  }
  SUBCASE("sgd momentum buffer") {
    // Buffer starts at g, then v = mu v + g.
    Tensor<double> p = Tensor<double>::scalar(1.0);
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::sgd;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0;
    Optimizer<double> opt(cfg);
    std::vector<ParamSlot<double>> slots{{"p", &p, Tensor<double>::scalar(1.0), true}};
    opt.step(slots, 0.1);
    opt.step(slots, 0.1);
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 - 0.1 * 1.9).epsilon(1e-15));
  }
  SUBCASE("adamw two steps against the closed form") {
    const double lr = 0.01, wd = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 0.3;
    double p_ref = 2.0, m = 0, v = 0;
    for (int t = 1; t <= 2; ++t) {
      p_ref *= 1 - lr * wd;
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      const double mhat = m / (1 - std::pow(b1, t));
      const double vhat = v / (1 - std::pow(b2, t));
      p_ref -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    Tensor<double> p = Tensor<double>::scalar(2.0);
    OptimizerConfig cfg;
    cfg.weight_decay = wd;
    Optimizer<double> opt(cfg);
    std::vector<ParamSlot<double>> slots{{"p", &p, Tensor<double>::scalar(g), true}};
    opt.step(slots, lr);
    opt.step(slots, lr);
    CHECK(p[0] == doctest::Approx(p_ref).epsilon(1e-14));
  }
  SUBCASE("decay flag exempts a slot") {
    Tensor<double> p = Tensor<double>::scalar(2.0);
    OptimizerConfig cfg;
    cfg.weight_decay = 0.5;
    Optimizer<double> opt(cfg);
    std::vector<ParamSlot<double>> slots{{"p", &p, Tensor<double>::scalar(0.0), false}};
    opt.step(slots, 0.1);
    CHECK(p[0] == 2.0);
  }
  SUBCASE("non-finite gradient aborts without updating") {
    Tensor<double> a = Tensor<double>::scalar(1.0);
    Tensor<double> b = Tensor<double>::scalar(1.0);
    Optimizer<double> opt(OptimizerConfig{});
    std::vector<ParamSlot<double>> slots{{"first", &a, Tensor<double>::scalar(0.5), true},
                                         {"blocks.1.fc1.weight", &b, Tensor<double>::scalar(NAN), true}};
    try {
      opt.step(slots, 0.1);
      FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
      CHECK(std::string(e.what()).find("blocks.1.fc1.weight") != std::string::npos);
    }
    CHECK(a[0] == 1.0);
  }
}

TEST_CASE("learning-rate schedules") {
  Schedule s;
  s.kind = ScheduleKind::cosine;
  s.warmup_steps = 4;
  s.total_steps = 14;
  CHECK(s.lr(1.0, 0) == doctest::Approx(0.25));
  CHECK(s.lr(1.0, 3) == doctest::Approx(1.0));
  CHECK(s.lr(1.0, 4) == doctest::Approx(1.0));
  CHECK(s.lr(1.0, 9) == doctest::Approx(0.5));
  CHECK(s.lr(1.0, 14) == doctest::Approx(0.0));
  s.kind = ScheduleKind::step;
  s.step_size = 3;
  s.gamma = 0.1;
  CHECK(s.lr(1.0, 6) == doctest::Approx(1.0));
  CHECK(s.lr(1.0, 7) == doctest::Approx(0.1));
  CHECK(s.lr(1.0, 10) == doctest::Approx(0.01));
  s.kind = ScheduleKind::constant;
  CHECK(s.lr(0.3, 100) == 0.3);
}

TEST_CASE("batch pipeline") {
  const auto data = synthetic_dataset(40, 4, 8, 1);
  SUBCASE("epoch order is a seeded permutation") {
    auto a = epoch_order(40, 5, 2, true);
    auto b = epoch_order(40, 5, 2, true);
    auto c = epoch_order(40, 5, 3, true);
    CHECK(a == b);
    CHECK(a != c);
    std::sort(c.begin(), c.end());
    for (std::int64_t i = 0; i < 40; ++i) CHECK(c[static_cast<std::size_t>(i)] == i);
  }
  SUBCASE("prefetcher matches direct assembly") {
    const auto order = epoch_order(40, 5, 0, true);
    BatchPrefetcher pre(data, order, 16, false, 5, 0);
    std::size_t start = 0;
    int count = 0;
    while (auto batch = pre.next()) {
      const std::size_t end = std::min(order.size(), start + 16);
      const auto direct = gather_batch(data, std::span<const std::int64_t>(order.data() + start, end - start));
      CHECK(batch->images == direct.images);
      CHECK(batch->labels == direct.labels);
      start = end;
      ++count;
    }
    CHECK(count == 3);
  }
  SUBCASE("augmented batches are reproducible") {
    const auto order = epoch_order(40, 5, 1, true);
    BatchPrefetcher a(data, order, 16, true, 5, 1);
    BatchPrefetcher b(data, order, 16, true, 5, 1);
    while (auto x = a.next()) {
      auto y = b.next();
      REQUIRE(y);
      CHECK(x->images == y->images);
    }
  }
  SUBCASE("flip and crop keep shape and pixel multiset under flip only") {
    const std::vector<std::int64_t> rows{0, 1, 2};
    Rng rng(9);
    const auto batch = gather_batch(data, rows, &rng, 0);
    CHECK(batch.images.shape() == Shape{3, 3, 8, 8});
    for (int b = 0; b < 3; ++b) {
      float direct = 0, aug = 0;
      for (std::int64_t i = 0; i < 192; ++i) {
        direct += data.images[static_cast<std::size_t>(rows[static_cast<std::size_t>(b)] * 192 + i)];
        aug += batch.images[static_cast<std::size_t>(b * 192 + i)];
      }
      CHECK(aug == doctest::Approx(direct).epsilon(1e-5));
    }
  }
}

TEST_CASE("evaluate") {
  auto cfg = smoke_config();
  cfg.image_size = 8;
  cfg.dim = 16;
  auto model = VisionModel<float>::init(cfg, 1);
  const auto data = synthetic_dataset(50, 10, 8, 2);
  SUBCASE("constant class-0 head on a balanced set") {
    for (auto& w : model.head_weight.values()) w = 0;
    for (auto& b : model.head_bias.values()) b = 0;
    model.head_bias[0] = 1;
    CHECK(evaluate(model, data, 16) == doctest::Approx(0.1));
  }
  SUBCASE("all-zero head ties resolve to class 0") {
    for (auto& w : model.head_weight.values()) w = 0;
    for (auto& b : model.head_bias.values()) b = 0;
    CHECK(evaluate(model, data) == doctest::Approx(0.1));
  }
  SUBCASE("fusion does not change accuracy") {
    CHECK(evaluate(fuse_affine(model), data) == evaluate(model, data));
  }
  SUBCASE("geometry mismatch") {
    const auto wrong = synthetic_dataset(10, 10, 16, 2);
    CHECK_THROWS_AS(evaluate(model, wrong), DimensionError);
  }
}

TEST_CASE("fit on the synthetic smoke task") {
  const auto cfg = smoke_config();
  const auto train = synthetic_dataset(640, 10, 32, 11, 0.5, 0);
  const auto test = synthetic_dataset(200, 10, 32, 11, 0.5, 1);

  SUBCASE("loss strictly decreases over three epochs and respects the floor") {
    TempDir dir("fit");
    auto model = VisionModel<float>::init(cfg, 3);
    auto tc = smoke_train(3);
    FitOptions opts;
    opts.out_dir = dir.str();
    const auto report = fit(model, train, test, tc, opts);
    REQUIRE(report.epochs.size() == 3);
    CHECK(report.epochs[1].loss < report.epochs[0].loss);
    CHECK(report.epochs[2].loss < report.epochs[1].loss);
    for (const auto& e : report.epochs) {
      CHECK(std::isfinite(e.loss));
      CHECK(e.loss >= smoothed_entropy_floor(tc.label_smoothing, 10) - 1e-6);
      CHECK(e.accuracy >= 0.0);
      CHECK(e.accuracy <= 1.0);
    }
    CHECK(std::filesystem::exists(report.best_checkpoint));
    CHECK(std::filesystem::exists(report.final_checkpoint));
    std::ifstream csv(dir.file("train.csv"));
    std::string header;
    std::getline(csv, header);
    CHECK(header == "epoch,loss,acc,seconds");
    // The best checkpoint reproduces the recorded best accuracy.
    const auto best = load_vision_checkpoint(report.best_checkpoint);
    CHECK(evaluate(best, test) == report.best_accuracy);
  }

  SUBCASE("same seed gives bit-identical checkpoints") {
    TempDir a("fit-a"), b("fit-b");
    auto tc = smoke_train(1);
    auto m1 = VisionModel<float>::init(cfg, 3);
    auto m2 = VisionModel<float>::init(cfg, 3);
    FitOptions o1, o2;
    o1.out_dir = a.str();
    o2.out_dir = b.str();
    fit(m1, train, test, tc, o1);
    fit(m2, train, test, tc, o2);
    CHECK(resmlp::testing::read_file(a.file("final.ckpt")) == resmlp::testing::read_file(b.file("final.ckpt")));
  }

  SUBCASE("zero learning rate leaves parameters unchanged") {
    auto tc = smoke_train(1);
    tc.lr = 0;
    auto model = VisionModel<float>::init(cfg, 3);
    const auto before = model;
    fit(model, train, test, tc);
    std::vector<const Tensor<float>*> after;
    model.visit([&](const std::string&, const Tensor<float>& t) { after.push_back(&t); });
    std::size_t i = 0;
    before.visit([&](const std::string& name, const Tensor<float>& t) {
      CHECK_MESSAGE(t == *after[i++], name);
    });
  }

  SUBCASE("hard distillation runs against a fused teacher") {
    auto teacher = VisionModel<float>::init(cfg, 4);
    auto model = VisionModel<float>::init(cfg, 3);
    auto tc = smoke_train(1);
    tc.mode = TrainMode::hard_distill;
    FitOptions opts;
    opts.teacher = &teacher;
    const auto report = fit(model, train, test, tc, opts);
    CHECK(std::isfinite(report.epochs[0].loss));
    CHECK_THROWS_AS(fit(model, train, test, tc), ConfigError);
  }

  SUBCASE("dataset geometry must match the model") {
    auto model = VisionModel<float>::init(cfg, 3);
    const auto wrong = synthetic_dataset(20, 10, 16, 1);
    CHECK_THROWS_AS(fit(model, wrong, wrong, smoke_train(1)), ConfigError);
  }

  SUBCASE("non-finite loss aborts") {
    auto model = VisionModel<float>::init(cfg, 3);
    model.head_bias[0] = NAN;
    CHECK_THROWS_AS(fit(model, train, test, smoke_train(1)), TrainingError);
  }
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  tc.lr = 0;  // allowed: a frozen run
  CHECK_NOTHROW(tc.validate());
  tc.lr = -1;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.label_smoothing = 1.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  CHECK(parse_train_mode(to_string(TrainMode::hard_distill)) == TrainMode::hard_distill);
  CHECK(parse_optimizer("sgd") == OptimizerKind::sgd);
  CHECK_THROWS_AS(parse_schedule("linear"), ConfigError);
}
