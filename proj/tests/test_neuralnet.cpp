#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>

#include "decoysl/errors.hpp"
#include "decoysl/neuralnet.hpp"

using namespace decoysl;
using namespace decoysl::nn;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(r, c);
  for (double& v : t.values) v = rng.uniform(-1.0, 1.0);
  return t;
}

using LossFn = std::function<Var(Tape&, ParamStore&)>;

// Central differences over every parameter entry against the tape gradient.
double worst_fd_error(ParamStore& ps, const LossFn& loss) {
  ps.zero_grad();
  {
    Tape t;
    t.backward(loss(t, ps));
  }
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = 0; j < ps.value(i).size(); ++j) {
      double& w = ps.value(i).values[j];
      const double saved = w;
      w = saved + h;
      Tape up;
      const double lu = up.value(loss(up, ps)).values[0];
      w = saved - h;
      Tape down;
      const double ld = down.value(loss(down, ps)).values[0];
      w = saved;
      const double num = (lu - ld) / (2 * h);
      const double ana = ps.grad(i).values[j];
      worst = std::max(worst, std::fabs(num - ana) / std::max({std::fabs(num), std::fabs(ana), 1e-5}));
    }
  return worst;
}

}  // namespace

TEST_CASE("masked softmax") {
  const auto p = masked_softmax({1.0, 2.0, 3.0});
  CHECK(p[0] == doctest::Approx(0.09003057).epsilon(1e-7));
  CHECK(p[1] == doctest::Approx(0.24472847).epsilon(1e-7));
  CHECK(p[2] == doctest::Approx(0.66524096).epsilon(1e-7));
  const std::vector<bool> mask{true, false, true};
  const auto q = masked_softmax({1.0, 50.0, 1.0}, &mask);
  CHECK(q[1] == 0.0);
  CHECK(q[0] == doctest::Approx(0.5));
  const std::vector<bool> none{false, false, false};
  CHECK_THROWS_AS(masked_softmax({1.0, 2.0, 3.0}, &none), std::invalid_argument);
  // Large logits stay finite.
  const auto big = masked_softmax({1000.0, 1000.0});
  CHECK(big[0] == doctest::Approx(0.5));
}

TEST_CASE("elementwise and linear ops match central differences") {
  Rng rng(1);
  ParamStore ps;
  ps.add("x", random_tensor(3, 4, rng));
  ps.add("w", random_tensor(5, 4, rng));
  ps.add("b", random_tensor(1, 5, rng));
  ps.add("y", random_tensor(3, 5, rng));
  const LossFn loss = [](Tape& t, ParamStore& s) {
    Var x = t.param(s, 0), w = t.param(s, 1), b = t.param(s, 2), y = t.param(s, 3);
    Var h = t.tanh(t.linear(x, w, b));
    Var m = t.mul(t.sigmoid(h), t.one_minus(t.sigmoid(y)));
    Var d = t.sub(t.add(m, t.scale(y, 0.3)), h);
    return t.mean(t.mul(d, d));
  };
  CHECK(worst_fd_error(ps, loss) <= 1e-4);
}

TEST_CASE("concat, gather and clamp match central differences") {
  Rng rng(2);
  ParamStore ps;
  ps.add("a", random_tensor(2, 3, rng));
  ps.add("table", random_tensor(4, 2, rng));
  const LossFn loss = [](Tape& t, ParamStore& s) {
    Var a = t.param(s, 0);
    Var rows = t.gather_rows(t.param(s, 1), {3, 0});
    Var c = t.concat_cols({a, rows});
    Var k = t.clamp_min(c, -0.5);
    return t.sum(t.mul(k, t.tanh(c)));
  };
  CHECK(worst_fd_error(ps, loss) <= 1e-4);
}

TEST_CASE("attention matches central differences and ignores padded slots") {
  Rng rng(3);
  ParamStore ps;
  ps.add("q", random_tensor(2, 3, rng));
  ps.add("k", random_tensor(6, 3, rng));
  ps.add("v", random_tensor(6, 3, rng));
  const std::vector<char> valid{1, 1, 0, 1, 0, 0};
  const LossFn loss = [&](Tape& t, ParamStore& s) {
    Var o = t.attention(t.param(s, 0), t.param(s, 1), t.param(s, 2), 3, valid);
    return t.sum(t.mul(o, o));
  };
  CHECK(worst_fd_error(ps, loss) <= 1e-4);

  // Changing a padded slot leaves the output unchanged.
  Tape a;
  const Tensor before = a.value(a.attention(a.param(ps, 0), a.param(ps, 1), a.param(ps, 2), 3, valid));
  ps.value(1)(2, 0) += 5.0;
  ps.value(2)(4, 1) -= 3.0;
  Tape b;
  CHECK(b.value(b.attention(b.param(ps, 0), b.param(ps, 1), b.param(ps, 2), 3, valid)) == before);
}

TEST_CASE("ragged log-softmax, entropy and pick match central differences") {
  Rng rng(4);
  ParamStore ps;
  ps.add("h", random_tensor(2, 3, rng));
  ps.add("w", random_tensor(7, 3, rng));
  ps.add("b", random_tensor(1, 7, rng));
  Ragged layout;
  layout.offsets = {0, 3, 5};
  const std::vector<std::size_t> rows{0, 4, 6, 1, 2};
  const LossFn loss = [&](Tape& t, ParamStore& s) {
    Var logits = t.row_logits(t.param(s, 0), t.param(s, 1), t.param(s, 2), layout, rows);
    Var logp = t.segment_log_softmax(logits, layout);
    Var ent = t.segment_entropy(logp, layout);
    return t.add(t.sum(t.pick(logp, {1, 4})), t.scale(t.sum(ent), 0.5));
  };
  CHECK(worst_fd_error(ps, loss) <= 1e-4);

  Tape t;
  Var logp = t.segment_log_softmax(t.row_logits(t.param(ps, 0), t.param(ps, 1), t.param(ps, 2), layout, rows),
                                   layout);
  const Tensor& lp = t.value(logp);
  double s0 = 0.0, s1 = 0.0;
  for (std::size_t i = 0; i < 3; ++i) s0 += std::exp(lp.values[i]);
  for (std::size_t i = 3; i < 5; ++i) s1 += std::exp(lp.values[i]);
  CHECK(s0 == doctest::Approx(1.0));
  CHECK(s1 == doctest::Approx(1.0));
}

TEST_CASE("nets with residual and recurrent blocks match central differences") {
  Rng rng(5);
  ParamStore ps;
  NetSpec spec;
  spec.blocks = {{BlockSpec::Kind::Dense, 6, BlockSpec::Act::Tanh},
                 {BlockSpec::Kind::Gru, 4, BlockSpec::Act::Tanh},
                 {BlockSpec::Kind::Residual, 0, BlockSpec::Act::Tanh},
                 {BlockSpec::Kind::Dense, 2, BlockSpec::Act::Identity}};
  Net net(ps, "net", 3, spec, rng);
  CHECK(net.out_dim() == 2);
  CHECK(spec.gru_width() == 4);
  const std::size_t x = ps.add("x", random_tensor(2, 3, rng));
  const std::size_t h0 = ps.add("h0", random_tensor(2, 4, rng));
  const LossFn loss = [&](Tape& t, ParamStore& s) {
    const auto out = net.forward(t, s, t.param(s, x), t.param(s, h0));
    REQUIRE(out.hidden.has_value());
    return t.add(t.sum(t.mul(out.y, out.y)), t.mean(*out.hidden));
  };
  CHECK(worst_fd_error(ps, loss) <= 1e-4);
}

TEST_CASE("backprop through a mutated parameter is refused") {
  Rng rng(6);
  ParamStore ps;
  const std::size_t w = ps.add("w", random_tensor(1, 2, rng));
  Tape t;
  Var loss = t.sum(t.param(ps, w));
  ps.touch(w);
  CHECK_THROWS_AS(t.backward(loss), StaleTape);
}

TEST_CASE("parameter store bookkeeping") {
  ParamStore ps;
  ps.add("a.w", Tensor(1, 1));
  ps.add("a.b", Tensor(1, 1));
  ps.add("b.w", Tensor(1, 1));
  CHECK(ps.ids_with_prefix("a.").size() == 2);
  CHECK(ps.find("b.w") == 2);
  CHECK_THROWS_AS(ps.add("a.w", Tensor(1, 1)), std::invalid_argument);
  CHECK_THROWS_AS(ps.find("c"), std::out_of_range);
}

TEST_CASE("checkpoint round trip and mismatch") {
  Rng rng(7);
  ParamStore a, b;
  a.add("w", random_tensor(2, 3, rng));
  b.add("v", random_tensor(1, 4, rng));
  const auto path = (std::filesystem::temp_directory_path() / "decoysl_nn_ckpt.bin").string();
  save_checkpoint(path, {&a, &b});

  ParamStore a2, b2;
  a2.add("w", Tensor(2, 3));
  b2.add("v", Tensor(1, 4));
  load_checkpoint(path, {&a2, &b2});
  CHECK(a2.value(0) == a.value(0));
  CHECK(b2.value(0) == b.value(0));

  ParamStore wrong_name;
  wrong_name.add("x", Tensor(2, 3));
  ParamStore b3;
  b3.add("v", Tensor(1, 4));
  CHECK_THROWS_AS(load_checkpoint(path, {&wrong_name, &b3}), std::runtime_error);
  ParamStore wrong_shape;
  wrong_shape.add("w", Tensor(3, 2));
  CHECK_THROWS_AS(load_checkpoint(path, {&wrong_shape, &b3}), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint(path, {&a2}), std::runtime_error);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path, {&a2, &b2}), std::runtime_error);
}

TEST_CASE("first Adam step moves each weight by the learning rate against the gradient sign") {
  ParamStore ps;
  const std::size_t w = ps.add("w", Tensor(1, 3, std::vector<double>{0.5, -0.5, 1.0}));
  ps.grad(w) = Tensor(1, 3, std::vector<double>{2.0, -0.1, 0.0});
  Optimizer opt({w}, OptimizerConfig{OptimizerConfig::Kind::Adam, 0.01});
  opt.step(ps);
  CHECK(ps.value(w).values[0] == doctest::Approx(0.49).epsilon(1e-6));
  CHECK(ps.value(w).values[1] == doctest::Approx(-0.49).epsilon(1e-6));
  CHECK(ps.value(w).values[2] == 1.0);
  CHECK(ps.version(w) == 1);
}

TEST_CASE("Adam minimizes a quadratic") {
  ParamStore ps;
  const std::size_t w = ps.add("w", Tensor(1, 2, std::vector<double>{3.0, -2.0}));
  Optimizer opt({w}, OptimizerConfig{OptimizerConfig::Kind::Adam, 0.05});
  for (int i = 0; i < 2000; ++i) {
    ps.zero_grad();
    Tape t;
    Var p = t.param(ps, w);
    t.backward(t.sum(t.mul(p, p)));
    opt.step(ps);
  }
  CHECK(std::fabs(ps.value(w).values[0]) < 1e-2);
  CHECK(std::fabs(ps.value(w).values[1]) < 1e-2);
}
