#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "decoysl/matrix.hpp"
#include "decoysl/rng.hpp"

namespace decoysl::nn {

using Tensor = Matrix;

class ParamStore {
 public:
  std::size_t add(const std::string& name, Tensor init);
  std::size_t size() const { return values_.size(); }
  std::size_t find(const std::string& name) const;
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& value(std::size_t i) { return values_[i]; }
  const Tensor& value(std::size_t i) const { return values_[i]; }
  Tensor& grad(std::size_t i) { return grads_[i]; }
  const Tensor& grad(std::size_t i) const { return grads_[i]; }
  // Mutation counter; a tape built before a mutation may not backprop.
  std::uint64_t version(std::size_t i) const { return versions_[i]; }
  void touch(std::size_t i) { ++versions_[i]; }
  void zero_grad();
  void zero_grad(const std::vector<std::size_t>& ids);
  std::vector<std::size_t> ids_with_prefix(const std::string& prefix) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::vector<std::uint64_t> versions_;
};

// Uniform fan-in initialization: U(-k, k) with k = kInitScale / sqrt(fan_in).
constexpr double kInitScale = 1.0;
Tensor init_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng);

struct Var {
  std::size_t id = 0;
};

// Variable-length rows: row i owns flat positions [offsets[i], offsets[i+1]).
struct Ragged {
  std::vector<std::size_t> offsets{0};
  std::size_t rows() const { return offsets.size() - 1; }
  std::size_t total() const { return offsets.back(); }
};

class Tape {
 public:
  Var constant(Tensor v);
  Var param(ParamStore& ps, std::size_t idx);
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  // x (B×in) · wᵀ (w is out×in) + b (1×out)
  Var linear(Var x, Var w, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var one_minus(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var concat_cols(const std::vector<Var>& parts);
  Var gather_rows(Var table, const std::vector<std::size_t>& ids);
  // Batched single-query attention. q is B×C; k and v are (B·slots)×C.
  // Invalid slots receive zero weight; a sample with no valid slot
  // yields a zero row.
  Var attention(Var q, Var k, Var v, std::size_t slots, const std::vector<char>& valid);
  // Logits for selected rows of an output layer: flat[j] = h[i]·w[r]ᵀ + b[r]
  // for each row r listed for sample i. Result is 1×total.
  Var row_logits(Var h, Var w, Var b, const Ragged& layout, const std::vector<std::size_t>& rows);
  Var segment_log_softmax(Var flat, const Ragged& layout);
  // H = -Σ exp(logp)·logp per row (B×1).
  Var segment_entropy(Var logp, const Ragged& layout);
  Var pick(Var flat, const std::vector<std::size_t>& positions);
  // max(a, floor); no gradient where the floor is active.
  Var clamp_min(Var a, double floor);
  Var sum(Var a);
  Var mean(Var a);

  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> back;
    ParamStore* store = nullptr;
    std::size_t param_idx = 0;
    std::uint64_t version = 0;
  };
  std::vector<Node> nodes_;
  Var push(Tensor value, std::function<void(Tape&)> back);
  Tensor& g(Var v);
};

// Softmax over the unmasked entries; masked entries are exactly 0.
std::vector<double> masked_softmax(const std::vector<double>& logits, const std::vector<bool>* mask = nullptr);

struct BlockSpec {
  enum class Kind { Dense, Residual, Gru };
  Kind kind = Kind::Dense;
  std::size_t width = 0;  // ignored for Residual (keeps its input width)
  enum class Act { Identity, Tanh, Sigmoid } act = Act::Tanh;
};

struct NetSpec {
  std::vector<BlockSpec> blocks;
  std::size_t out_width(std::size_t in) const;
  bool has_gru() const;
  std::size_t gru_width() const;
};

// A stack of blocks whose parameters live in a ParamStore under `prefix`.
// At most one GRU block; its hidden state is passed explicitly.
class Net {
 public:
  Net() = default;
  Net(ParamStore& ps, const std::string& prefix, std::size_t in_dim, NetSpec spec, Rng& rng);

  struct Output {
    Var y;
    std::optional<Var> hidden;
  };
  Output forward(Tape& t, ParamStore& ps, Var x, std::optional<Var> hidden = std::nullopt) const;
  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }
  const NetSpec& spec() const { return spec_; }

 private:
  NetSpec spec_;
  std::size_t in_ = 0, out_ = 0;
  // Parameter ids per block: dense {w, b}; residual {w1, b1, w2, b2};
  // gru {wz, uz, bz, wr, ur, br, wh, uh, bh}.
  std::vector<std::vector<std::size_t>> ids_;
};

struct OptimizerConfig {
  enum class Kind { Adam, Sgd } kind = Kind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Optimizer {
 public:
  Optimizer(std::vector<std::size_t> params, OptimizerConfig cfg) : ids_(std::move(params)), cfg_(cfg) {}
  void step(ParamStore& ps);
  const std::vector<std::size_t>& params() const { return ids_; }

 private:
  std::vector<std::size_t> ids_;
  OptimizerConfig cfg_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

// Checkpoint container: "DSLCKPT1", u64 tensor count, then per tensor
// u64 name length, name bytes, u64 ndims, u64 dims..., little-endian f64s.
void save_checkpoint(const std::string& path, const std::vector<const ParamStore*>& stores);
void load_checkpoint(const std::string& path, const std::vector<ParamStore*>& stores);

}  // namespace decoysl::nn
