#pragma once

#include <cstddef>
#include <vector>

#include "decoysl/eavesdrop.hpp"

namespace decoysl {

struct HopBudget {
  double time_budget = 0.0;    // B_T
  double energy_budget = 0.0;  // B_E
  double payload_bits = 0.0;
};

// Distances describing one hop s_k -> s_{k+1} with its deceivers and the
// eavesdroppers that may overhear it.
struct HopGeometry {
  double link_dist = 0.0;                               // transmitter to receiver
  std::vector<double> deceiver_rx_dist;                 // deceiver to receiver (interference path)
  std::vector<double> tx_eaves_dist;                    // transmitter to each eavesdropper
  std::vector<std::vector<double>> deceiver_eaves_dist;  // [deceiver][eavesdropper]
  std::vector<double> monitor_prob;                     // per eavesdropper
  double delta_bits = 1.0;

  std::size_t deceiver_count() const { return deceiver_rx_dist.size(); }
  void validate() const;
};

HopGeometry hop_geometry(const TransmissionSpec& t, const Scenario& scn, double delta_bits);

enum class RateModel { WithInterference, InterferenceFree };

struct PowerSolution {
  double p_tx = 0.0;
  std::vector<double> p_deceivers;
  bool feasible = false;
  double objective = 0.0;
};

double hop_rate(const HopGeometry& g, const Channel& ch, RateModel model, double p_tx,
                const std::vector<double>& p_d);
double hop_objective(const HopGeometry& g, double p_tx, const std::vector<double>& p_d);

struct ConstraintResiduals {
  double time = 0.0;    // tx_time / B_T − 1 (≤ 0 when satisfied)
  double energy = 0.0;  // (Σp)·B_T / B_E − 1
};
ConstraintResiduals residuals(const HopGeometry& g, const Channel& ch, const HopBudget& b, RateModel model,
                              double p_tx, const std::vector<double>& p_d);

// Sign condition for a positive deceiver power under the single-deceiver
// closed form; strict.
bool feasibility(const HopBudget& b, const HopGeometry& g, const Channel& ch);

PowerSolution cor1_powers(const HopGeometry& g, const Channel& ch, const HopBudget& b);
PowerSolution cor2_powers(const HopGeometry& g, const Channel& ch, const HopBudget& b);

// Exhaustive search: p_tx over [0, B_E/B_T] and a common deceiver power over
// the remaining energy, both at `resolution` points. With one deceiver this
// covers the whole feasible simplex.
PowerSolution grid_oracle(const HopGeometry& g, const Channel& ch, const HopBudget& b, std::size_t resolution,
                          RateModel model);

}  // namespace decoysl
