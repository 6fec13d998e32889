#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "decoysl/errors.hpp"
#include "decoysl/mhsl.hpp"
#include "decoysl/rng.hpp"

using namespace decoysl;
using namespace decoysl::mhsl;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.values) v = rng.uniform(-1.0, 1.0);
  return m;
}

// Straight-line scalar forward pass, independent of the library kernels.
Matrix scalar_forward(const std::vector<DenseLayer>& layers, const Matrix& x) {
  Matrix z = x;
  for (const auto& l : layers) {
    Matrix out(z.rows, l.weight.rows);
    for (std::size_t r = 0; r < z.rows; ++r)
      for (std::size_t o = 0; o < l.weight.rows; ++o) {
        double acc = l.bias[o];
        for (std::size_t i = 0; i < z.cols; ++i) acc += l.weight(o, i) * z(r, i);
        out(r, o) = l.act == Activation::Tanh ? std::tanh(acc) : acc;
      }
    z = out;
  }
  return z;
}

double rel_err(const Matrix& a, const Matrix& b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::fabs(a.values[i] - b.values[i]));
    scale = std::max(scale, std::fabs(b.values[i]));
  }
  return scale > 0 ? diff / scale : diff;
}

DenseLayer identity_layer(std::size_t n) {
  DenseLayer l;
  l.weight = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) l.weight(i, i) = 1.0;
  l.bias.assign(n, 0.0);
  l.act = Activation::Identity;
  return l;
}

}  // namespace

TEST_CASE("identity segments pass the batch through") {
  Rng rng(1);
  const Matrix x = random_matrix(5, 4, rng);
  const std::vector<DenseSegment> segs{{{identity_layer(4)}}, {{identity_layer(4), identity_layer(4)}}};
  const ForwardResult r = forward_chain(segs, x);
  CHECK(r.outputs.size() == 2);
  CHECK(r.outputs.back().values == x);
  CHECK(r.outputs[0].producer == 0);
  CHECK(r.outputs[1].producer == 1);
}

TEST_CASE("loss algebra") {
  Rng rng(2);
  const Matrix z = random_matrix(6, 3, rng);
  CHECK(compute_loss(z, z) == 0.0);
  Matrix shifted = z;
  for (double& v : shifted.values) v += 0.3;
  CHECK(compute_loss(shifted, z) == doctest::Approx(0.09).epsilon(1e-14));
  CHECK_THROWS_AS(compute_loss(z, Matrix(6, 2)), ShapeMismatch);

  const Matrix y = random_matrix(6, 3, rng);
  double acc = 0.0;
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 3; ++c) acc += (z(r, c) - y(r, c)) * (z(r, c) - y(r, c));
  CHECK(std::fabs(compute_loss(z, y) - acc / 18.0) <= 1e-14 * acc / 18.0);
}

TEST_CASE("split forward and backward match the unsplit stack on random models") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed * 31);
    const std::vector<std::size_t> dims{4, 7, 5, 6, 3};
    const auto layers = make_dense_layers(dims, seed);
    const Matrix x = random_matrix(8, 4, rng);
    const Matrix y = random_matrix(8, 3, rng);
    const std::vector<std::size_t> cuts = seed % 2 ? std::vector<std::size_t>{1, 3} : std::vector<std::size_t>{2};
    const auto segs = split_layers(layers, cuts);

    const ForwardResult fr = forward_chain(segs, x);
    CHECK(rel_err(fr.outputs.back().values, scalar_forward(layers, x)) <= 1e-12);

    const auto grads = backward_chain(fr.cache, segs, loss_gradient(fr.outputs.back().values, y));
    const OracleResult oracle = monolithic_oracle(layers, x, y);
    std::size_t li = 0;
    for (const auto& sg : grads)
      for (const auto& lg : sg.layers) {
        CHECK(rel_err(lg.weight, oracle.grads[li].weight) <= 1e-10);
        CHECK(rel_err(Matrix::row(lg.bias), Matrix::row(oracle.grads[li].bias)) <= 1e-10);
        ++li;
      }
    CHECK(li == layers.size());
  }
}

TEST_CASE("single segment chain equals the unsplit oracle bit for bit") {
  Rng rng(3);
  const auto layers = make_dense_layers({3, 4, 2}, 9);
  const Matrix x = random_matrix(4, 3, rng), y = random_matrix(4, 2, rng);
  const std::vector<DenseSegment> one{{layers}};
  const ForwardResult fr = forward_chain(one, x);
  const OracleResult oracle = monolithic_oracle(layers, x, y);
  CHECK(fr.outputs.back().values == oracle.output);
  const auto grads = backward_chain(fr.cache, one, loss_gradient(fr.outputs.back().values, y));
  for (std::size_t i = 0; i < layers.size(); ++i) CHECK(grads[0].layers[i].weight == oracle.grads[i].weight);
}

TEST_CASE("cut placement never changes the loss") {
  Rng rng(4);
  const auto layers = make_dense_layers({3, 5, 5, 5, 2}, 4);
  const Matrix x = random_matrix(6, 3, rng), y = random_matrix(6, 2, rng);
  const double ref = monolithic_oracle(layers, x, y).loss;
  for (const auto& cuts : std::vector<std::vector<std::size_t>>{{1}, {2}, {3}, {1, 2}, {1, 3}, {2, 3}, {1, 2, 3}}) {
    const auto segs = split_layers(layers, cuts);
    CHECK(compute_loss(forward_chain(segs, x).outputs.back().values, y) == ref);
  }
}

TEST_CASE("backward matches central differences") {
  Rng rng(5);
  auto layers = make_dense_layers({3, 6, 4, 2}, 5);
  const Matrix x = random_matrix(5, 3, rng), y = random_matrix(5, 2, rng);
  const auto grads = monolithic_oracle(layers, x, y).grads;
  const double h = 1e-6;
  for (int k = 0; k < 10; ++k) {
    const std::size_t li = rng.index(layers.size());
    const std::size_t wi = rng.index(layers[li].weight.size());
    double& w = layers[li].weight.values[wi];
    const double saved = w;
    w = saved + h;
    const double up = compute_loss(scalar_forward(layers, x), y);
    w = saved - h;
    const double down = compute_loss(scalar_forward(layers, x), y);
    w = saved;
    const double numeric = (up - down) / (2 * h);
    const double analytic = grads[li].weight.values[wi];
    CHECK(std::fabs(numeric - analytic) / std::max({std::fabs(numeric), std::fabs(analytic), 1e-5}) <= 1e-4);
  }
}

TEST_CASE("zero loss gradient gives zero parameter gradients") {
  Rng rng(6);
  const auto layers = make_dense_layers({3, 4, 2}, 6);
  const auto segs = split_layers(layers, {1});
  const Matrix x = random_matrix(4, 3, rng);
  const ForwardResult fr = forward_chain(segs, x);
  const auto grads = backward_chain(fr.cache, segs, Matrix(4, 2));
  for (const auto& sg : grads) {
    for (const auto& lg : sg.layers)
      CHECK(std::all_of(lg.weight.values.begin(), lg.weight.values.end(), [](double v) { return v == 0.0; }));
    CHECK(std::all_of(sg.input_grad.values.values.begin(), sg.input_grad.values.values.end(),
                      [](double v) { return v == 0.0; }));
  }
}

TEST_CASE("updates: zero step is a no-op and descent reduces the loss") {
  Rng rng(7);
  const auto layers = make_dense_layers({3, 8, 8, 1}, 1);
  auto segs = split_layers(layers, {1, 2});
  Matrix x(32, 3), y(32, 1);
  for (std::size_t r = 0; r < 32; ++r) {
    for (std::size_t c = 0; c < 3; ++c) x(r, c) = rng.uniform(-1.0, 1.0);
    y(r, 0) = 0.5 * x(r, 0) - 0.3 * x(r, 1) + 0.2 * x(r, 2);
  }
  auto step = [&](double lr) {
    const ForwardResult fr = forward_chain(segs, x);
    const double loss = compute_loss(fr.outputs.back().values, y);
    const auto grads = backward_chain(fr.cache, segs, loss_gradient(fr.outputs.back().values, y));
    apply_updates(segs, grads, lr);
    return loss;
  };
  const auto before = flatten(segs);
  step(0.0);
  const auto after = flatten(segs);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i].weight == after[i].weight);

  const double first = step(0.05);
  CHECK(step(0.05) < first);
  double last = first;
  for (int i = 0; i < 198; ++i) last = step(0.05);
  CHECK(last * 100.0 <= first);
}

TEST_CASE("errors") {
  const auto layers = make_dense_layers({3, 4, 4, 2}, 8);
  CHECK_THROWS_AS(split_layers(layers, {2, 1}), NonMonotoneCuts);
  CHECK_THROWS_AS(split_layers(layers, {3}), NonMonotoneCuts);
  const auto segs = split_layers(layers, {1});
  CHECK_THROWS_AS(forward_chain(segs, Matrix(2, 5)), ShapeMismatch);
  CHECK_THROWS_AS(backward_chain(ChainCache{}, segs, Matrix(2, 2)), std::logic_error);
}

TEST_CASE("gradients stay finite across seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto layers = make_dense_layers({4, 6, 3}, seed);
    const auto r = monolithic_oracle(layers, random_matrix(3, 4, rng), random_matrix(3, 3, rng));
    for (const auto& g : r.grads) CHECK(g.weight.all_finite());
  }
}

TEST_CASE("sizes of a real stack as a model description") {
  const auto layers = make_dense_layers({3, 8, 2}, 1);
  const ModelSpec m = to_model_spec(layers, 10);
  CHECK(m.input_bits == 10 * 3 * 64.0);
  CHECK(m.layers[0].param_bits == (24 + 8) * 64.0);
  CHECK(m.layers[1].boundary_activation_bits == 10 * 2 * 64.0);
}
