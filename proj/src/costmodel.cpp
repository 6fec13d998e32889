#include "decoysl/costmodel.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "decoysl/errors.hpp"

namespace decoysl {

void TransmissionSpec::validate() const {
  if (tx == rx) throw std::invalid_argument("transmission needs distinct endpoints");
  if (!(tx_power >= 0.0) || !(payload_bits >= 0.0)) throw std::invalid_argument("negative power or payload");
  for (const auto& d : deceivers) {
    if (d.node == tx || d.node == rx) throw std::invalid_argument("deceiver coincides with a hop endpoint");
    if (!(d.power >= 0.0)) throw std::invalid_argument("negative deceiver power");
  }
}

double TransmissionSpec::deceiver_power_sum() const {
  double s = 0.0;
  for (const auto& d : deceivers) s += d.power;
  return s;
}

double data_rate(const TransmissionSpec& t, const Scenario& scn) {
  t.validate();
  double interference = 0.0;
  for (const auto& d : t.deceivers) interference += d.power * mean_gain(d.node, t.rx, scn);
  const double signal = t.tx_power * mean_gain(t.tx, t.rx, scn);
  return scn.bandwidth_hz * std::log2(1.0 + signal / (interference + scn.bandwidth_hz * scn.noise_psd));
}

double tx_time(double payload_bits, double rate) {
  if (!(rate > 0.0)) throw UnreachableLink("zero data rate");
  return payload_bits / rate;
}

ComputeTimes compute_times(const Segment& seg, const ComputeProfile& dev) {
  return {dev.cycles_per_bit * seg.fwd_coeff * seg.out_bits * seg.param_bits / dev.cpu_hz,
          dev.cycles_per_bit * seg.bwd_coeff * seg.grad_in_bits * seg.param_bits / dev.cpu_hz};
}

double forward_compute_energy(const Segment& seg, const ComputeProfile& dev) {
  return dev.energy_coeff * dev.cpu_hz * dev.cpu_hz * seg.fwd_coeff * seg.param_bits;
}

double backward_compute_energy(const Segment& seg, const ComputeProfile& dev) {
  return dev.energy_coeff * dev.cpu_hz * dev.cpu_hz * seg.bwd_coeff * seg.param_bits;
}

LedgerEntry forward_compute_entry(const Segment& seg, const ComputeProfile& dev) {
  LedgerEntry e;
  e.t_fwd = compute_times(seg, dev).fwd;
  e.e_compute = forward_compute_energy(seg, dev);
  return e;
}

LedgerEntry backward_compute_entry(const Segment& seg, const ComputeProfile& dev) {
  LedgerEntry e;
  e.t_bwd = compute_times(seg, dev).bwd;
  e.e_compute = backward_compute_energy(seg, dev);
  return e;
}

void add_hop(LedgerEntry& e, const TransmissionSpec& t, const Scenario& scn) {
  e.t_tx = tx_time(t.payload_bits, data_rate(t, scn));
  e.e_tx = t.tx_power * e.t_tx;
  e.e_deceive = t.deceiver_power_sum() * e.t_tx;
}

void CostLedger::add(const LedgerEntry& e) {
  entries_.push_back(e);
  time_ += e.time();
  energy_ += e.energy();
}

nlohmann::json CostLedger::to_json() const {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& e : entries_)
    steps.push_back({{"t_tx", e.t_tx}, {"t_fwd", e.t_fwd}, {"t_bwd", e.t_bwd},
                     {"e_compute", e.e_compute}, {"e_tx", e.e_tx}, {"e_deceive", e.e_deceive}});
  return {{"time_spent", time_}, {"energy_spent", energy_}, {"per_step_breakdown", steps}};
}

CostLedger episode_totals(const SplitPlan& plan, std::span<const NodeId> assignments,
                          std::span<const TransmissionSpec> transmissions, const Scenario& scn) {
  const std::size_t S = plan.segment_count();
  if (assignments.size() != S) throw BrokenChain("need one assignment per segment");
  if (!(assignments[S - 1] == NodeId::server())) throw BrokenChain("last segment must run on the server");
  if (transmissions.size() != 2 * (S - 1)) throw BrokenChain("need S-1 forward and S-1 backward hops");
  for (std::size_t k = 0; k + 1 < S; ++k) {
    const auto& f = transmissions[k];
    if (!(f.tx == assignments[k] && f.rx == assignments[k + 1]))
      throw BrokenChain("forward hop " + std::to_string(k + 1) + " does not follow the chain");
    if (f.payload_bits != plan.segments[k].out_bits)
      throw BrokenChain("forward hop payload differs from the segment output size");
    const auto& b = transmissions[S - 1 + k];
    const std::size_t from = S - 1 - k;  // sender segment index (0-based)
    if (!(b.tx == assignments[from] && b.rx == assignments[from - 1]))
      throw BrokenChain("backward hop " + std::to_string(k + 1) + " does not follow the chain");
    if (b.payload_bits != plan.segments[from].grad_in_bits)
      throw BrokenChain("backward hop payload differs from the gradient size");
  }
  CostLedger ledger;
  for (std::size_t k = 0; k + 1 < S; ++k) {
    LedgerEntry e = forward_compute_entry(plan.segments[k], scn.compute_of(assignments[k]));
    add_hop(e, transmissions[k], scn);
    ledger.add(e);
  }
  ledger.add(forward_compute_entry(plan.segments[S - 1], scn.compute_of(assignments[S - 1])));
  for (std::size_t k = S - 1; k >= 1; --k) {
    LedgerEntry e = backward_compute_entry(plan.segments[k], scn.compute_of(assignments[k]));
    add_hop(e, transmissions[S - 1 + (S - 1 - k)], scn);
    ledger.add(e);
  }
  ledger.add(backward_compute_entry(plan.segments[0], scn.compute_of(assignments[0])));
  return ledger;
}

}  // namespace decoysl
