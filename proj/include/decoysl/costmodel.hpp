#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "decoysl/slmodel.hpp"
#include "decoysl/topology.hpp"

namespace decoysl {

struct DeceiverPower {
  NodeId node;
  double power = 0.0;
};

struct TransmissionSpec {
  NodeId tx;
  NodeId rx;
  double payload_bits = 0.0;
  double tx_power = 0.0;
  std::vector<DeceiverPower> deceivers;

  void validate() const;
  double deceiver_power_sum() const;
};

// TDMA rate with mean channel gains; deceivers interfere at the receiver.
double data_rate(const TransmissionSpec& t, const Scenario& scn);
double tx_time(double payload_bits, double rate);

struct ComputeTimes {
  double fwd = 0.0;
  double bwd = 0.0;
};
ComputeTimes compute_times(const Segment& seg, const ComputeProfile& dev);
double forward_compute_energy(const Segment& seg, const ComputeProfile& dev);
double backward_compute_energy(const Segment& seg, const ComputeProfile& dev);

struct LedgerEntry {
  double t_tx = 0.0;
  double t_fwd = 0.0;
  double t_bwd = 0.0;
  double e_compute = 0.0;
  double e_tx = 0.0;
  double e_deceive = 0.0;

  double time() const { return t_tx + t_fwd + t_bwd; }
  double energy() const { return e_compute + e_tx + e_deceive; }
};

// Building blocks for the chronological event list. An event is the
// compute a node performs before sending, plus the send itself.
LedgerEntry forward_compute_entry(const Segment& seg, const ComputeProfile& dev);
LedgerEntry backward_compute_entry(const Segment& seg, const ComputeProfile& dev);
void add_hop(LedgerEntry& e, const TransmissionSpec& t, const Scenario& scn);

class CostLedger {
 public:
  void add(const LedgerEntry& e);
  double time_spent() const { return time_; }
  double energy_spent() const { return energy_; }
  const std::vector<LedgerEntry>& entries() const { return entries_; }
  nlohmann::json to_json() const;

 private:
  double time_ = 0.0;
  double energy_ = 0.0;
  std::vector<LedgerEntry> entries_;
};

// Full SL iteration. `assignments` holds s_1..s_S (the last must be the
// server); `transmissions` holds the S−1 forward hops followed by the S−1
// backward hops, in chain order.
CostLedger episode_totals(const SplitPlan& plan, std::span<const NodeId> assignments,
                          std::span<const TransmissionSpec> transmissions, const Scenario& scn);

}  // namespace decoysl
