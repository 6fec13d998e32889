#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "decoysl/kvconfig.hpp"

namespace decoysl {

struct LayerSpec {
  double param_bits = 0.0;
  double boundary_activation_bits = 0.0;  // size of z if cut after this layer
  double boundary_gradient_bits = 0.0;    // size of dL/dz at the same cut
  double fwd_flop_coeff = 0.0;            // lambda_f contribution, cycles per bit²
  double bwd_flop_coeff = 0.0;            // lambda_b contribution
  double sensitivity_weight = 1.0;
  bool operator==(const LayerSpec&) const = default;
};

struct ModelSpec {
  std::vector<LayerSpec> layers;
  double input_bits = 0.0;  // size of z_0 (and of dL/dz_0)
  double total_dim_bits = 0.0;

  std::size_t layer_count() const { return layers.size(); }
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

struct SizeProfile {
  enum class Kind { Uniform, Pyramid };
  Kind kind = Kind::Pyramid;
  double param_bits = 5e5;
  double activation_bits = 4e5;  // base size; pyramid shrinks it with depth
  double fwd_coeff_lo = 1e-8;
  double fwd_coeff_hi = 2e-8;
  double bwd_coeff_lo = 1e-8;
  double bwd_coeff_hi = 2e-8;
  std::vector<double> sensitivity;  // per layer; empty means 1.0 everywhere

  static SizeProfile uniform(double param_bits, double activation_bits, double coeff);
  static SizeProfile pyramid();
  static Kind parse_kind(const std::string& s);
};

struct Segment {
  std::size_t first_layer = 0;
  std::size_t end_layer = 0;  // one past the last member layer
  double param_bits = 0.0;    // Gamma(theta_k)
  double out_bits = 0.0;      // Gamma(z_k)
  double grad_in_bits = 0.0;  // Gamma(dL/dz_{k-1})
  double fwd_coeff = 0.0;     // lambda_f
  double bwd_coeff = 0.0;     // lambda_b
  double sensitivity = 1.0;

  std::size_t layer_count() const { return end_layer - first_layer; }
  bool operator==(const Segment&) const = default;
};

struct SplitPlan {
  std::vector<std::size_t> cuts;
  std::vector<Segment> segments;
  std::size_t segment_count() const { return segments.size(); }
};

// Deterministic synthetic layered model. Coefficients are drawn from the
// profile's ranges with a stream seeded by `seed`.
ModelSpec make_model(std::size_t layer_count, const SizeProfile& profile, std::uint64_t seed,
                     std::size_t segments);

Segment make_segment(const ModelSpec& model, std::size_t first, std::size_t end);
SplitPlan split_at(const ModelSpec& model, const std::vector<std::size_t>& cuts);
bool validate_plan(const SplitPlan& plan, const ModelSpec& model);

KvConfig model_to_config(const ModelSpec& m);
ModelSpec model_from_config(const KvConfig& c);

}  // namespace decoysl
