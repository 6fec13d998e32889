#include "decoysl/slmodel.hpp"

#include <cmath>
#include <stdexcept>

#include "decoysl/errors.hpp"
#include "decoysl/rng.hpp"

namespace decoysl {

void ModelSpec::validate() const {
  if (layers.empty()) throw ConfigError("model has no layers");
  double total = 0.0;
  for (const auto& l : layers) {
    if (!(l.param_bits >= 0 && l.boundary_activation_bits >= 0 && l.boundary_gradient_bits >= 0 &&
          l.fwd_flop_coeff >= 0 && l.bwd_flop_coeff >= 0))
      throw ConfigError("layer sizes and coefficients must be nonnegative");
    if (!std::isfinite(l.sensitivity_weight) || l.sensitivity_weight < 0)
      throw ConfigError("sensitivity weight must be finite and nonnegative");
    total += l.param_bits;
  }
  if (!(input_bits >= 0)) throw ConfigError("input_bits must be nonnegative");
  if (total != total_dim_bits) throw ConfigError("total_dim_bits does not equal the sum of layer param bits");
}

SizeProfile SizeProfile::uniform(double param_bits, double activation_bits, double coeff) {
  SizeProfile p;
  p.kind = Kind::Uniform;
  p.param_bits = param_bits;
  p.activation_bits = activation_bits;
  p.fwd_coeff_lo = p.fwd_coeff_hi = coeff;
  p.bwd_coeff_lo = p.bwd_coeff_hi = coeff;
  return p;
}

SizeProfile SizeProfile::pyramid() { return SizeProfile{}; }

SizeProfile::Kind SizeProfile::parse_kind(const std::string& s) {
  if (s == "uniform") return Kind::Uniform;
  if (s == "pyramid") return Kind::Pyramid;
  throw ConfigError("unknown size profile '" + s + "'");
}

ModelSpec make_model(std::size_t layer_count, const SizeProfile& profile, std::uint64_t seed,
                     std::size_t segments) {
  if (layer_count < segments || layer_count == 0)
    throw std::invalid_argument("make_model: layer_count must be at least the segment count");
  if (!profile.sensitivity.empty() && profile.sensitivity.size() != layer_count)
    throw std::invalid_argument("make_model: sensitivity list length must equal layer_count");
  Rng rng(seed);
  ModelSpec m;
  m.input_bits = profile.activation_bits;
  const double L = static_cast<double>(layer_count);
  for (std::size_t i = 0; i < layer_count; ++i) {
    LayerSpec l;
    l.param_bits = profile.param_bits;
    if (profile.kind == SizeProfile::Kind::Pyramid)
      l.boundary_activation_bits = profile.activation_bits * (L - static_cast<double>(i)) / L;
    else
      l.boundary_activation_bits = profile.activation_bits;
    l.boundary_gradient_bits = l.boundary_activation_bits;
    l.fwd_flop_coeff = rng.uniform(profile.fwd_coeff_lo, profile.fwd_coeff_hi);
    l.bwd_flop_coeff = rng.uniform(profile.bwd_coeff_lo, profile.bwd_coeff_hi);
    l.sensitivity_weight = profile.sensitivity.empty() ? 1.0 : profile.sensitivity[i];
    m.layers.push_back(l);
    m.total_dim_bits += l.param_bits;
  }
  return m;
}

Segment make_segment(const ModelSpec& model, std::size_t first, std::size_t end) {
  if (!(first < end && end <= model.layer_count())) throw NonMonotoneCuts("empty or out-of-range segment");
  Segment s;
  s.first_layer = first;
  s.end_layer = end;
  double weighted = 0.0;
  double weight_sum = 0.0;
  for (std::size_t i = first; i < end; ++i) {
    const auto& l = model.layers[i];
    s.param_bits += l.param_bits;
    s.fwd_coeff += l.fwd_flop_coeff;
    s.bwd_coeff += l.bwd_flop_coeff;
    weighted += l.sensitivity_weight * l.param_bits;
    weight_sum += l.sensitivity_weight;
  }
  s.out_bits = model.layers[end - 1].boundary_activation_bits;
  s.grad_in_bits = first == 0 ? model.input_bits : model.layers[first - 1].boundary_gradient_bits;
  // Parameter-weighted mean sensitivity; plain mean if the segment holds no parameters.
  s.sensitivity = s.param_bits > 0 ? weighted / s.param_bits : weight_sum / static_cast<double>(end - first);
  return s;
}

SplitPlan split_at(const ModelSpec& model, const std::vector<std::size_t>& cuts) {
  std::size_t prev = 0;
  for (std::size_t c : cuts) {
    if (c <= prev || c >= model.layer_count())
      throw NonMonotoneCuts("cuts must be strictly increasing inside (0, layer_count)");
    prev = c;
  }
  SplitPlan plan;
  plan.cuts = cuts;
  std::size_t first = 0;
  for (std::size_t c : cuts) {
    plan.segments.push_back(make_segment(model, first, c));
    first = c;
  }
  plan.segments.push_back(make_segment(model, first, model.layer_count()));
  return plan;
}

bool validate_plan(const SplitPlan& plan, const ModelSpec& model) {
  if (plan.segments.empty() || plan.cuts.size() + 1 != plan.segments.size()) return false;
  std::size_t expect = 0;
  double total = 0.0;
  for (std::size_t k = 0; k < plan.segments.size(); ++k) {
    const Segment& s = plan.segments[k];
    if (s.first_layer != expect || s.end_layer <= s.first_layer || s.end_layer > model.layer_count()) return false;
    if (k + 1 < plan.segments.size() && plan.cuts[k] != s.end_layer) return false;
    if (!(s == make_segment(model, s.first_layer, s.end_layer))) return false;
    total += s.param_bits;
    expect = s.end_layer;
  }
  return expect == model.layer_count() && std::abs(total - model.total_dim_bits) <= 1e-12 * model.total_dim_bits;
}

KvConfig model_to_config(const ModelSpec& m) {
  KvConfig c;
  c.set("input_bits", m.input_bits);
  std::vector<double> p, a, g, f, b, w;
  for (const auto& l : m.layers) {
    p.push_back(l.param_bits);
    a.push_back(l.boundary_activation_bits);
    g.push_back(l.boundary_gradient_bits);
    f.push_back(l.fwd_flop_coeff);
    b.push_back(l.bwd_flop_coeff);
    w.push_back(l.sensitivity_weight);
  }
  c.set("layer_param_bits", p);
  c.set("layer_activation_bits", a);
  c.set("layer_gradient_bits", g);
  c.set("layer_fwd_coeff", f);
  c.set("layer_bwd_coeff", b);
  c.set("layer_sensitivity", w);
  return c;
}

ModelSpec model_from_config(const KvConfig& c) {
  ModelSpec m;
  m.input_bits = c.number("input_bits");
  const auto& p = c.array("layer_param_bits");
  const auto& a = c.array("layer_activation_bits");
  const auto& g = c.array("layer_gradient_bits");
  const auto& f = c.array("layer_fwd_coeff");
  const auto& b = c.array("layer_bwd_coeff");
  const auto w = c.array_or("layer_sensitivity", std::vector<double>(p.size(), 1.0));
  const std::size_t n = p.size();
  if (a.size() != n || g.size() != n || f.size() != n || b.size() != n || w.size() != n)
    throw ConfigError("layer arrays differ in length");
  for (std::size_t i = 0; i < n; ++i) {
    m.layers.push_back({p[i], a[i], g[i], f[i], b[i], w[i]});
    m.total_dim_bits += p[i];
  }
  m.validate();
  return m;
}

}  // namespace decoysl
