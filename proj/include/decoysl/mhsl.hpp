#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "decoysl/matrix.hpp"
#include "decoysl/slmodel.hpp"

namespace decoysl::mhsl {

// Every message element is a double.
constexpr double kBitsPerElement = 64.0;

enum class Activation { Identity, Tanh };

struct DenseLayer {
  Matrix weight;  // out × in
  std::vector<double> bias;
  Activation act = Activation::Tanh;

  std::size_t in_dim() const { return weight.cols; }
  std::size_t out_dim() const { return weight.rows; }
};

struct DenseSegment {
  std::vector<DenseLayer> layers;
  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }
};

struct ActivationMsg {
  Matrix values;  // batch × boundary dim
  std::size_t producer = 0;
};

struct GradMsg {
  Matrix values;
  std::size_t producer = 0;
};

struct LayerGrads {
  Matrix weight;
  std::vector<double> bias;
};

struct SegmentGrads {
  std::vector<LayerGrads> layers;
  GradMsg input_grad;  // dL/dz_{k-1}, sent to the previous segment
};

// Per-layer inputs and outputs kept by each segment for its backward pass.
struct SegmentCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> outputs;
};

struct ChainCache {
  std::vector<SegmentCache> segments;
};

struct ForwardResult {
  std::vector<ActivationMsg> outputs;  // z_1..z_S
  ChainCache cache;
};

ForwardResult forward_chain(std::span<const DenseSegment> segments, const Matrix& batch);
double compute_loss(const Matrix& z, const Matrix& labels);
Matrix loss_gradient(const Matrix& z, const Matrix& labels);
std::vector<SegmentGrads> backward_chain(const ChainCache& cache, std::span<const DenseSegment> segments,
                                         const Matrix& loss_grad);
void apply_updates(std::span<DenseSegment> segments, std::span<const SegmentGrads> grads, double lr);

struct OracleResult {
  double loss = 0.0;
  Matrix output;
  std::vector<LayerGrads> grads;
};
OracleResult monolithic_oracle(std::span<const DenseLayer> layers, const Matrix& batch, const Matrix& labels);

// Random dense stack: dims[i] -> dims[i+1], tanh between layers, identity last.
std::vector<DenseLayer> make_dense_layers(const std::vector<std::size_t>& dims, std::uint64_t seed);
std::vector<DenseSegment> split_layers(const std::vector<DenseLayer>& layers, const std::vector<std::size_t>& cuts);
std::vector<DenseLayer> flatten(std::span<const DenseSegment> segments);

// Sizes of a real dense stack expressed as a ModelSpec, so boundary sizes in
// a SplitPlan match actual message shapes.
ModelSpec to_model_spec(std::span<const DenseLayer> layers, std::size_t batch_rows);

}  // namespace decoysl::mhsl
