#include "decoysl/eavesdrop.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "decoysl/errors.hpp"

namespace decoysl {

nlohmann::json LeakageReport::to_json() const {
  return {{"expected_bits", expected_bits}, {"per_eavesdropper", per_eavesdropper}, {"per_hop", per_hop}};
}

double delta(const TransmissionSpec& t, const Segment& seg) { return t.payload_bits * seg.sensitivity; }

CaptureOutcome sample_capture(const TransmissionSpec& t, std::size_t e, const Scenario& scn, double delta_bits,
                              Rng& rng) {
  const NodeId eve = NodeId::eavesdropper(e);
  CaptureOutcome out;
  out.eavesdropper = eve;
  double best = sample_rx_power(t.tx_power, t.tx, eve, scn, rng).rx_power;
  out.captured_source = t.tx;
  for (const auto& d : t.deceivers) {
    const double p = sample_rx_power(d.power, d.node, eve, scn, rng).rx_power;
    // Ties go to the deceiver, so a silent transmitter never wins.
    if (p >= best) {
      best = p;
      out.captured_source = d.node;
    }
  }
  out.monitored = rng.bernoulli(scn.eavesdroppers.at(e).monitor_prob);
  if (out.monitored && out.captured_source == t.tx) out.leaked_bits = delta_bits;
  return out;
}

double capture_prob_from_strengths(double tx_strength, std::span<const double> deceiver_strengths) {
  double p = 1.0;
  for (double d : deceiver_strengths) {
    if (tx_strength == 0.0) return 0.0;
    p *= tx_strength / (d + tx_strength);
  }
  return p;
}

double capture_prob_closed(const TransmissionSpec& t, std::size_t e, const Scenario& scn) {
  if (!(t.tx_power >= 0.0)) throw std::invalid_argument("negative transmit power");
  const Position eve = scn.eavesdroppers.at(e).position;
  auto strength = [&](NodeId n, double power) {
    const double m = distance(scn.position_of(n), eve);
    if (!(m > 0.0)) throw DegenerateGeometry("node " + n.str() + " sits on the eavesdropper");
    return power / (m * m);
  };
  const double s = strength(t.tx, t.tx_power);
  std::vector<double> ds;
  for (const auto& d : t.deceivers) ds.push_back(strength(d.node, d.power));
  return capture_prob_from_strengths(s, ds);
}

LeakageReport expected_leakage_closed(std::span<const Hop> hops, const Scenario& scn) {
  LeakageReport r;
  r.per_eavesdropper.assign(scn.eavesdroppers.size(), 0.0);
  for (const auto& h : hops) {
    const double db = delta(h.tx, h.segment);
    double hop_bits = 0.0;
    for (std::size_t e = 0; e < scn.eavesdroppers.size(); ++e) {
      const double bits = capture_prob_closed(h.tx, e, scn) * scn.eavesdroppers[e].monitor_prob * db;
      hop_bits += bits;
      r.per_eavesdropper[e] += bits;
    }
    r.per_hop.push_back(hop_bits);
  }
  for (double b : r.per_hop) r.expected_bits += b;
  return r;
}

McEstimate mc_leakage_oracle(std::span<const Hop> hops, const Scenario& scn, std::size_t n_samples,
                             std::uint64_t seed) {
  if (n_samples == 0) throw std::invalid_argument("mc_leakage_oracle needs at least one sample");
  Rng rng(seed);
  std::vector<double> deltas;
  for (const auto& h : hops) deltas.push_back(delta(h.tx, h.segment));
  // Welford running moments.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    double total = 0.0;
    for (std::size_t k = 0; k < hops.size(); ++k)
      for (std::size_t e = 0; e < scn.eavesdroppers.size(); ++e)
        total += sample_capture(hops[k].tx, e, scn, deltas[k], rng).leaked_bits;
    const double d = total - mean;
    mean += d / static_cast<double>(i + 1);
    m2 += d * (total - mean);
  }
  McEstimate est;
  est.mean = mean;
  est.samples = n_samples;
  est.stderr_defined = n_samples > 1;
  if (est.stderr_defined) est.stderr_bits = std::sqrt(m2 / static_cast<double>(n_samples - 1) / n_samples);
  return est;
}

}  // namespace decoysl
