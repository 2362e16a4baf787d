// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <optional>

#include "common/random.hpp"
#include "gradcheck.hpp"
#include "random_tensor.hpp"
#include "tensor/ops.hpp"

using namespace resmlp;
using resmlp::testing::grad_check;
using resmlp::testing::random_tensor;

namespace {

using TD = Tensor<double>;

TD mat(Shape s, std::vector<double> v) { return TD(std::move(s), std::move(v)); }

// Gradient check of a scalarised op: loss = sum(op(x...) * w) with a fixed
// random weighting so every output element matters.
void check_op(std::vector<TD*> inputs, const std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>& op,
              std::uint64_t seed = 1) {
  Rng rng(seed);
  std::vector<resmlp::testing::Probe> probes;
  for (std::size_t i = 0; i < inputs.size(); ++i) probes.push_back({"in" + std::to_string(i), inputs[i]});
  std::optional<TD> weights;
  auto loss_fn = [&](Tape<double>& tape) {
    std::vector<Var<double>> vars;
    for (auto* t : inputs) vars.push_back(tape.parameter(*t));
    auto out = op(tape, vars);
    if (!weights) weights = random_tensor<double>(out.shape(), rng);
    return sum_all(mul(out, tape.constant(*weights)));
  };
  auto r = grad_check(probes, loss_fn);
  INFO("worst element " << r.worst);
  CHECK(r.max_rel_error < 1e-4);
}

}  // namespace

TEST_CASE("matmul examples") {
  Tape<double> tape(false);
  auto eye = tape.constant(mat({2, 2}, {1, 0, 0, 1}));
  auto a = tape.constant(mat({2, 2}, {1, 2, 3, 4}));
  CHECK(matmul(eye, a).value() == a.value());
  auto b = tape.constant(mat({2, 2}, {5, 6, 7, 8}));
  CHECK(matmul(a, b).value().vector() == std::vector<double>{19, 22, 43, 50});
  auto bad = tape.constant(TD({2, 3}));
  CHECK_THROWS_AS(matmul(bad, bad), DimensionError);
}

TEST_CASE("matmul is associative to 1e-10") {
  Rng rng(7);
  Tape<double> tape(false);
  auto a = tape.constant(random_tensor<double>({5, 7}, rng));
  auto b = tape.constant(random_tensor<double>({7, 3}, rng));
  auto c = tape.constant(random_tensor<double>({3, 6}, rng));
  auto left = matmul(matmul(a, b), c).value();
  auto right = matmul(a, matmul(b, c)).value();
  CHECK(max_abs_diff(left, right) < 1e-10);
}

TEST_CASE("transpose examples") {
  Tape<double> tape(false);
  auto row = tape.constant(mat({1, 3}, {1, 2, 3}));
  auto t = transpose(row);
  CHECK(t.shape() == Shape{3, 1});
  CHECK(t.value().vector() == std::vector<double>{1, 2, 3});
  Rng rng(3);
  auto x = tape.constant(random_tensor<double>({4, 5}, rng));
  CHECK(transpose(transpose(x)).value() == x.value());
  auto sym = tape.constant(mat({2, 2}, {1, 2, 2, 5}));
  CHECK(transpose(sym).value() == sym.value());
  CHECK_THROWS_AS(transpose(tape.constant(TD({3}))), RankError);
}

TEST_CASE("activation examples") {
  CHECK(activation_value(Activation::gelu, 0.0) == 0.0);
  CHECK(activation_value(Activation::relu, -2.5) == 0.0);
  CHECK(activation_value(Activation::relu, 2.5) == 2.5);
  // x * Phi(x) at 1 with Phi from erfc, computed independently of the kernel.
  const double oracle = 1.0 * 0.5 * std::erfc(-1.0 / std::sqrt(2.0));
  CHECK(std::abs(oracle - 0.841345) < 1e-6);
  CHECK(std::abs(activation_value(Activation::gelu, 1.0) - 0.841345) < 1e-5);
  Tape<float> tape(false);
  auto y = activation(tape.constant(Tensor<float>({1}, {1.0f})), Activation::gelu);
  CHECK(std::abs(y.value()[0] - 0.8413447f) < 1e-6f);
  CHECK_THROWS_AS(parse_activation("swish"), ConfigError);
  // SiLU and HardSwish reference points.
  CHECK(std::abs(activation_value(Activation::silu, 1.0) - 1.0 / (1.0 + std::exp(-1.0))) < 1e-15);
  CHECK(activation_value(Activation::hardswish, 4.0) == 4.0);
  CHECK(activation_value(Activation::hardswish, -4.0) == 0.0);
  CHECK(std::abs(activation_value(Activation::hardswish, 1.0) - 4.0 / 6.0) < 1e-15);
}

TEST_CASE("scale_shift and elementwise examples") {
  Tape<double> tape(false);
  auto x = tape.constant(mat({1, 2}, {2, 4}));
  auto y = scale_shift(x, tape.constant(mat({2}, {0.5, 0.25})), tape.constant(mat({2}, {1, 1})));
  CHECK(y.value().vector() == std::vector<double>{2, 2});
  Rng rng(11);
  auto r = tape.constant(random_tensor<double>({3, 4, 5}, rng));
  auto id = scale_shift(r, tape.constant(TD({5}, 1.0)), tape.constant(TD({5}, 0.0)));
  CHECK(id.value() == r.value());
  CHECK(add(r, tape.constant(TD({3, 4, 5}))).value() == r.value());
  CHECK_THROWS_AS(scale_shift(r, tape.constant(TD({4}, 1.0)), Var<double>()), DimensionError);
  CHECK_THROWS_AS(add(r, tape.constant(TD({4, 4}))), DimensionError);
}

TEST_CASE("scale_shift identity is bit-exact in f32") {
  Rng rng(5);
  Tape<float> tape(false);
  auto x = tape.constant(random_tensor<float>({7, 9}, rng, -1e3, 1e3));
  auto y = scale_shift(x, tape.constant(Tensor<float>({9}, 1.0f)), tape.constant(Tensor<float>({9}, 0.0f)));
  CHECK(y.value() == x.value());
}

TEST_CASE("reduce examples") {
  Tape<double> tape(false);
  auto x = tape.constant(mat({2, 2}, {1, 3, 5, 7}));
  CHECK(reduce(x, 1, ReduceKind::mean).value().vector() == std::vector<double>{2, 6});
  CHECK(sum_all(tape.constant(TD({3, 3}))).value()[0] == 0.0);
  auto v = tape.constant(mat({3}, {2, 9, 4}));
  CHECK(reduce(v, 0, ReduceKind::max).value()[0] == 9.0);
  CHECK(argmax_rows(mat({1, 3}, {2, 9, 4})) == std::vector<int>{1});
  CHECK(argmax_rows(mat({1, 3}, {5, 5, 5})) == std::vector<int>{0});
  CHECK_THROWS_AS(reduce(x, 2, ReduceKind::sum), RankError);
  CHECK(reduce(x, 0, ReduceKind::sum, true).shape() == Shape{1, 2});
}

TEST_CASE("backward examples") {
  Rng rng(2);
  TD x = random_tensor<double>({3, 4}, rng);
  Tape<double> tape;
  auto loss = sum_all(tape.parameter(x));
  tape.backward(loss);
  CHECK(tape.grad_of(x) == TD({3, 4}, 1.0));

  TD a({1}, {3.0});
  TD b({1}, {-2.0});
  Tape<double> t2;
  auto prod = sum_all(mul(t2.parameter(a), t2.parameter(b)));
  t2.backward(prod);
  CHECK(t2.grad_of(a)[0] == -2.0);
  CHECK(t2.grad_of(b)[0] == 3.0);
  const auto first = t2.grad_of(a);
  t2.backward(prod);
  CHECK(t2.grad_of(a) == first);

  Tape<double> t3;
  auto vec = t3.parameter(x);
  CHECK_THROWS_AS(t3.backward(vec), ContractError);
}

TEST_CASE("finite differences: linear algebra ops") {
  Rng rng(21);
  TD a = random_tensor<double>({2, 3, 4}, rng);
  TD b = random_tensor<double>({4, 5}, rng);
  check_op({&a, &b}, [](Tape<double>&, auto& v) { return matmul(v[0], v[1]); });
  TD t = random_tensor<double>({3, 4, 2}, rng);
  check_op({&t}, [](Tape<double>&, auto& v) { return transpose(v[0]); });
  TD w = random_tensor<double>({6, 4}, rng);
  TD bias = random_tensor<double>({6}, rng);
  check_op({&a, &w, &bias}, [](Tape<double>&, auto& v) { return linear(v[0], v[1], v[2]); });
  TD mixer = random_tensor<double>({5, 3}, rng);
  TD mix_bias = random_tensor<double>({5}, rng);
  TD mix_bias2 = random_tensor<double>({5, 4}, rng);
  check_op({&mixer, &a, &mix_bias}, [](Tape<double>&, auto& v) { return token_mix(v[0], v[1], v[2]); });
  check_op({&mixer, &a, &mix_bias2}, [](Tape<double>&, auto& v) { return token_mix(v[0], v[1], v[2]); });
  TD x2 = random_tensor<double>({3, 4}, rng);
  check_op({&mixer, &x2, &mix_bias}, [](Tape<double>&, auto& v) { return token_mix(v[0], v[1], v[2]); });
  TD p = random_tensor<double>({2, 3, 4}, rng);
  TD q = random_tensor<double>({2, 5, 4}, rng);
  TD q2 = random_tensor<double>({2, 4, 5}, rng);
  check_op({&p, &q}, [](Tape<double>&, auto& v) { return bmm(v[0], v[1], true); });
  check_op({&p, &q2}, [](Tape<double>&, auto& v) { return bmm(v[0], v[1], false); });
}

TEST_CASE("finite differences: elementwise and normalisation ops") {
  Rng rng(22);
  TD x = random_tensor<double>({3, 5}, rng, -2, 2);
  TD y = random_tensor<double>({3, 5}, rng);
  TD row = random_tensor<double>({5}, rng);
  TD alpha = random_tensor<double>({5}, rng);
  TD beta = random_tensor<double>({5}, rng);
  for (auto kind : {Activation::gelu, Activation::silu, Activation::relu, Activation::hardswish}) {
    check_op({&x}, [kind](Tape<double>&, auto& v) { return activation(v[0], kind); });
  }
  check_op({&x, &y}, [](Tape<double>&, auto& v) { return add(v[0], v[1]); });
  check_op({&x, &row}, [](Tape<double>&, auto& v) { return sub(v[0], v[1]); });
  check_op({&x, &y}, [](Tape<double>&, auto& v) { return mul(v[0], v[1]); });
  check_op({&x}, [](Tape<double>&, auto& v) { return scale(v[0], 0.3); });
  check_op({&x, &alpha, &beta}, [](Tape<double>&, auto& v) { return scale_shift(v[0], v[1], v[2]); });
  check_op({&x, &alpha, &beta}, [](Tape<double>&, auto& v) { return layer_norm(v[0], v[1], v[2]); });
  check_op({&x}, [](Tape<double>&, auto& v) { return layer_norm(v[0], Var<double>(), Var<double>()); });
  for (auto kind : {ReduceKind::mean, ReduceKind::sum, ReduceKind::max}) {
    check_op({&x}, [kind](Tape<double>&, auto& v) { return reduce(v[0], 0, kind); });
    check_op({&x}, [kind](Tape<double>&, auto& v) { return reduce(v[0], 1, kind, true); });
  }
}

TEST_CASE("finite differences: losses, attention and shape ops") {
  Rng rng(23);
  TD logits = random_tensor<double>({4, 3}, rng, -2, 2);
  const std::vector<int> labels{0, 2, 1, 2};
  const std::vector<double> weights{1.0, 0.0, 0.5, 2.0};
  check_op({&logits}, [&](Tape<double>&, auto& v) { return cross_entropy(v[0], std::span<const int>(labels), 0.1); });
  check_op({&logits}, [&](Tape<double>&, auto& v) {
    return cross_entropy(v[0], std::span<const int>(labels), 0.0, std::span<const double>(weights));
  });
  TD scores = random_tensor<double>({2, 3, 4}, rng, -2, 2);
  const std::vector<int> lengths{4, 2};
  check_op({&scores}, [&](Tape<double>&, auto& v) { return masked_softmax(v[0], std::span<const int>(lengths)); });
  TD x = random_tensor<double>({2, 3, 4}, rng);
  check_op({&x}, [](Tape<double>&, auto& v) { return permute(v[0], {2, 0, 1}); });
  check_op({&x}, [](Tape<double>&, auto& v) { return reshape(v[0], Shape{6, 4}); });
  check_op({&x}, [](Tape<double>&, auto& v) { return slice(v[0], 1, 1, 2); });
  TD x2 = random_tensor<double>({2, 1, 4}, rng);
  check_op({&x2, &x}, [](Tape<double>&, auto& v) { return concat(v[0], v[1], 1); });
  TD table = random_tensor<double>({6, 3}, rng);
  const std::vector<int> ids{0, 5, 5, 2};
  check_op({&table}, [&](Tape<double>&, auto& v) { return embedding(v[0], std::span<const int>(ids), Shape{2, 2}); });
  TD packed = random_tensor<double>({10}, rng);
  check_op({&packed}, [](Tape<double>&, auto& v) { return tril_expand(v[0], 3); });
  check_op({&x}, [&](Tape<double>&, auto& v) { return mask_rows(v[0], std::span<const int>(std::vector<int>{3, 1})); });
}

TEST_CASE("cross entropy oracles") {
  Tape<double> tape(false);
  const std::vector<int> label0{0};
  auto uniform = tape.constant(TD({1, 5}, 0.7));
  CHECK(std::abs(cross_entropy(uniform, std::span<const int>(label0)).value()[0] - std::log(5.0)) < 1e-12);

  const std::vector<int> label2{2};
  auto l = tape.constant(mat({1, 3}, {1, 2, 3}));
  // -log(e^3 / (e + e^2 + e^3)) evaluated term by term
  const double oracle = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0;
  CHECK(std::abs(oracle - 0.40761) < 1e-5);
  CHECK(std::abs(cross_entropy(l, std::span<const int>(label2)).value()[0] - oracle) < 1e-12);

  Tape<double> grad_tape;
  TD margin = mat({1, 3}, {50, 0, 0});
  auto loss = cross_entropy(grad_tape.parameter(margin), std::span<const int>(label0));
  CHECK(loss.value()[0] < 1e-6);
  grad_tape.backward(loss);
  const auto g = grad_tape.grad_of(margin);
  for (double v : g.values()) CHECK(std::abs(v) < 1e-6);

  const std::vector<int> bad{3};
  CHECK_THROWS_AS(cross_entropy(l, std::span<const int>(bad)), DataError);
  CHECK_THROWS_AS(cross_entropy(l, std::span<const int>(label2), 1.0), ConfigError);
}

TEST_CASE("masked softmax rows are distributions over unmasked positions") {
  Rng rng(31);
  Tape<double> tape(false);
  auto x = tape.constant(random_tensor<double>({3, 2, 5}, rng, -5, 5));
  const std::vector<int> lengths{5, 1, 3};
  auto p = masked_softmax(x, std::span<const int>(lengths)).value();
  for (int b = 0; b < 3; ++b) {
    for (int m = 0; m < 2; ++m) {
      double total = 0;
      for (int l = 0; l < 5; ++l) {
        const double v = p[(b * 2 + m) * 5 + l];
        CHECK(v >= 0.0);
        if (l >= lengths[b]) CHECK(v == 0.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
  const std::vector<int> empty{5, 0, 3};
  CHECK_THROWS_AS(masked_softmax(x, std::span<const int>(empty)), DataError);
}

TEST_CASE("tril_expand keeps the upper triangle structurally zero") {
  Tape<double> tape(false);
  std::vector<double> packed(6);
  std::iota(packed.begin(), packed.end(), 1.0);
  auto dense = tril_expand(tape.constant(TD({6}, packed)), 3).value();
  CHECK(dense.vector() == std::vector<double>{1, 0, 0, 2, 3, 0, 4, 5, 6});
  auto small = tril_expand(tape.constant(TD({6}, packed)), 2).value();
  CHECK(small.vector() == std::vector<double>{1, 0, 2, 3});
  CHECK_THROWS_AS(tril_expand(tape.constant(TD({6}, packed)), 4), CapacityError);
}

TEST_CASE("no-grad tape retains nothing and forward is deterministic") {
  Rng rng(41);
  TD w = random_tensor<double>({4, 4}, rng);
  TD x = random_tensor<double>({3, 4}, rng);
  Tape<double> tape(false);
  auto y1 = activation(linear(tape.constant(x), tape.parameter(w)), Activation::gelu).value();
  CHECK(tape.recorded() == 0);
  Tape<double> tape2(false);
  auto y2 = activation(linear(tape2.constant(x), tape2.parameter(w)), Activation::gelu).value();
  CHECK(y1 == y2);
}
