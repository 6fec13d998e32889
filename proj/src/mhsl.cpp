#include "decoysl/mhsl.hpp"

#include <cmath>
#include <stdexcept>

#include "decoysl/errors.hpp"
#include "decoysl/rng.hpp"

namespace decoysl::mhsl {

namespace {

Matrix dense_forward(const DenseLayer& l, const Matrix& x) {
  if (x.cols != l.in_dim()) throw ShapeMismatch("layer input width does not match");
  Matrix y(x.rows, l.out_dim());
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* xr = x.row_ptr(r);
    for (std::size_t o = 0; o < l.out_dim(); ++o) {
      const double* w = l.weight.row_ptr(o);
      double acc = l.bias[o];
      for (std::size_t i = 0; i < l.in_dim(); ++i) acc += w[i] * xr[i];
      y(r, o) = l.act == Activation::Tanh ? std::tanh(acc) : acc;
    }
  }
  return y;
}

// Given dL/dy for one layer, fills weight/bias grads and returns dL/dx.
Matrix dense_backward(const DenseLayer& l, const Matrix& x, const Matrix& y, const Matrix& gy, LayerGrads& g) {
  Matrix gpre = gy;
  if (l.act == Activation::Tanh)
    for (std::size_t i = 0; i < gpre.size(); ++i) gpre.values[i] *= 1.0 - y.values[i] * y.values[i];
  g.weight = Matrix(l.out_dim(), l.in_dim());
  g.bias.assign(l.out_dim(), 0.0);
  Matrix gx(x.rows, l.in_dim());
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* xr = x.row_ptr(r);
    double* gxr = gx.row_ptr(r);
    for (std::size_t o = 0; o < l.out_dim(); ++o) {
      const double go = gpre(r, o);
      g.bias[o] += go;
      double* gw = g.weight.row_ptr(o);
      const double* w = l.weight.row_ptr(o);
      for (std::size_t i = 0; i < l.in_dim(); ++i) {
        gw[i] += go * xr[i];
        gxr[i] += go * w[i];
      }
    }
  }
  return gx;
}

}  // namespace

ForwardResult forward_chain(std::span<const DenseSegment> segments, const Matrix& batch) {
  ForwardResult res;
  Matrix z = batch;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    if (segments[k].layers.empty()) throw ShapeMismatch("empty segment");
    if (z.cols != segments[k].in_dim()) throw ShapeMismatch("segment " + std::to_string(k + 1) + " input width");
    SegmentCache sc;
    for (const auto& l : segments[k].layers) {
      sc.inputs.push_back(z);
      z = dense_forward(l, z);
      sc.outputs.push_back(z);
    }
    res.cache.segments.push_back(std::move(sc));
    res.outputs.push_back({z, k});
  }
  return res;
}

double compute_loss(const Matrix& z, const Matrix& labels) {
  if (!z.same_shape(labels)) throw ShapeMismatch("loss: output and label shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = z.values[i] - labels.values[i];
    acc += d * d;
  }
  return acc / static_cast<double>(z.size());
}

Matrix loss_gradient(const Matrix& z, const Matrix& labels) {
  if (!z.same_shape(labels)) throw ShapeMismatch("loss: output and label shapes differ");
  Matrix g(z.rows, z.cols);
  const double scale = 2.0 / static_cast<double>(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) g.values[i] = scale * (z.values[i] - labels.values[i]);
  return g;
}

std::vector<SegmentGrads> backward_chain(const ChainCache& cache, std::span<const DenseSegment> segments,
                                         const Matrix& loss_grad) {
  if (cache.segments.size() != segments.size() || segments.empty())
    throw std::logic_error("backward_chain: forward cache missing or from a different chain");
  std::vector<SegmentGrads> out(segments.size());
  Matrix g = loss_grad;
  for (std::size_t k = segments.size(); k-- > 0;) {
    const auto& seg = segments[k];
    const auto& sc = cache.segments[k];
    if (sc.inputs.size() != seg.layers.size()) throw std::logic_error("backward_chain: cache does not match segment");
    if (!g.same_shape(sc.outputs.back())) throw ShapeMismatch("gradient message shape");
    out[k].layers.resize(seg.layers.size());
    for (std::size_t i = seg.layers.size(); i-- > 0;)
      g = dense_backward(seg.layers[i], sc.inputs[i], sc.outputs[i], g, out[k].layers[i]);
    out[k].input_grad = {g, k};
  }
  return out;
}

void apply_updates(std::span<DenseSegment> segments, std::span<const SegmentGrads> grads, double lr) {
  if (segments.size() != grads.size()) throw ShapeMismatch("one gradient set per segment");
  for (std::size_t k = 0; k < segments.size(); ++k) {
    if (segments[k].layers.size() != grads[k].layers.size()) throw ShapeMismatch("layer count");
    for (std::size_t i = 0; i < segments[k].layers.size(); ++i) {
      auto& l = segments[k].layers[i];
      const auto& g = grads[k].layers[i];
      if (!l.weight.same_shape(g.weight) || l.bias.size() != g.bias.size()) throw ShapeMismatch("gradient shape");
      for (std::size_t j = 0; j < l.weight.size(); ++j) l.weight.values[j] -= lr * g.weight.values[j];
      for (std::size_t j = 0; j < l.bias.size(); ++j) l.bias[j] -= lr * g.bias[j];
    }
  }
}

OracleResult monolithic_oracle(std::span<const DenseLayer> layers, const Matrix& batch, const Matrix& labels) {
  std::vector<Matrix> xs, ys;
  Matrix z = batch;
  for (const auto& l : layers) {
    xs.push_back(z);
    z = dense_forward(l, z);
    ys.push_back(z);
  }
  OracleResult r;
  r.loss = compute_loss(z, labels);
  r.output = z;
  r.grads.resize(layers.size());
  Matrix g = loss_gradient(z, labels);
  for (std::size_t i = layers.size(); i-- > 0;) g = dense_backward(layers[i], xs[i], ys[i], g, r.grads[i]);
  return r;
}

std::vector<DenseLayer> make_dense_layers(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("need at least one layer");
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer l;
    l.weight = Matrix(dims[i + 1], dims[i]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    for (double& w : l.weight.values) w = rng.uniform(-bound, bound);
    l.bias.resize(dims[i + 1]);
    for (double& b : l.bias) b = rng.uniform(-bound, bound);
    l.act = i + 2 == dims.size() ? Activation::Identity : Activation::Tanh;
    layers.push_back(std::move(l));
  }
  return layers;
}

std::vector<DenseSegment> split_layers(const std::vector<DenseLayer>& layers, const std::vector<std::size_t>& cuts) {
  std::vector<DenseSegment> segs;
  std::size_t first = 0;
  std::vector<std::size_t> bounds = cuts;
  bounds.push_back(layers.size());
  for (std::size_t c : bounds) {
    if (c <= first || c > layers.size()) throw NonMonotoneCuts("cuts must be strictly increasing");
    segs.push_back({std::vector<DenseLayer>(layers.begin() + first, layers.begin() + c)});
    first = c;
  }
  return segs;
}

std::vector<DenseLayer> flatten(std::span<const DenseSegment> segments) {
  std::vector<DenseLayer> out;
  for (const auto& s : segments) out.insert(out.end(), s.layers.begin(), s.layers.end());
  return out;
}

ModelSpec to_model_spec(std::span<const DenseLayer> layers, std::size_t batch_rows) {
  ModelSpec m;
  const double rows = static_cast<double>(batch_rows);
  m.input_bits = rows * static_cast<double>(layers.front().in_dim()) * kBitsPerElement;
  for (const auto& l : layers) {
    LayerSpec s;
    s.param_bits = static_cast<double>(l.weight.size() + l.bias.size()) * kBitsPerElement;
    s.boundary_activation_bits = rows * static_cast<double>(l.out_dim()) * kBitsPerElement;
    s.boundary_gradient_bits = s.boundary_activation_bits;
    // Rough per-bit costs; backward is about twice forward.
    s.fwd_flop_coeff = 1.0 / kBitsPerElement;
    s.bwd_flop_coeff = 2.0 / kBitsPerElement;
    m.layers.push_back(s);
    m.total_dim_bits += s.param_bits;
  }
  return m;
}

}  // namespace decoysl::mhsl
