#include "decoysl/powerstar.hpp"

#include <cmath>
#include <stdexcept>

#include "decoysl/errors.hpp"

namespace decoysl {

namespace {

constexpr double kFeasTol = 1e-12;

double inv_sq(double m) {
  if (!(m > 0.0)) throw DegenerateGeometry("zero distance in hop geometry");
  return 1.0 / (m * m);
}

// 2^{Γ/(B_T·B)} − 1
double snr_target(const HopBudget& b, const Channel& ch) {
  return std::expm1(std::log(2.0) * b.payload_bits / (b.time_budget * ch.bandwidth_hz));
}

}  // namespace

void HopGeometry::validate() const {
  const std::size_t E = tx_eaves_dist.size();
  if (deceiver_eaves_dist.size() != deceiver_rx_dist.size()) throw std::invalid_argument("deceiver lists differ");
  for (const auto& row : deceiver_eaves_dist)
    if (row.size() != E) throw std::invalid_argument("deceiver eavesdropper distances incomplete");
  if (monitor_prob.size() != E) throw std::invalid_argument("monitor_prob list incomplete");
}

HopGeometry hop_geometry(const TransmissionSpec& t, const Scenario& scn, double delta_bits) {
  HopGeometry g;
  const Position tx = scn.position_of(t.tx);
  const Position rx = scn.position_of(t.rx);
  g.link_dist = distance(tx, rx);
  for (const auto& e : scn.eavesdroppers) {
    g.tx_eaves_dist.push_back(distance(tx, e.position));
    g.monitor_prob.push_back(e.monitor_prob);
  }
  for (const auto& d : t.deceivers) {
    const Position dp = scn.position_of(d.node);
    g.deceiver_rx_dist.push_back(distance(dp, rx));
    std::vector<double> row;
    for (const auto& e : scn.eavesdroppers) row.push_back(distance(dp, e.position));
    g.deceiver_eaves_dist.push_back(row);
  }
  g.delta_bits = delta_bits;
  return g;
}

double hop_rate(const HopGeometry& g, const Channel& ch, RateModel model, double p_tx,
                const std::vector<double>& p_d) {
  double interference = 0.0;
  if (model == RateModel::WithInterference)
    for (std::size_t d = 0; d < p_d.size(); ++d) interference += p_d[d] * mean_gain_at(g.deceiver_rx_dist[d], ch.rayleigh_o);
  const double signal = p_tx * mean_gain_at(g.link_dist, ch.rayleigh_o);
  return ch.bandwidth_hz * std::log2(1.0 + signal / (interference + ch.bandwidth_hz * ch.noise_psd));
}

double hop_objective(const HopGeometry& g, double p_tx, const std::vector<double>& p_d) {
  double total = 0.0;
  std::vector<double> ds(p_d.size());
  for (std::size_t e = 0; e < g.tx_eaves_dist.size(); ++e) {
    for (std::size_t d = 0; d < p_d.size(); ++d) ds[d] = p_d[d] * inv_sq(g.deceiver_eaves_dist[d][e]);
    total += capture_prob_from_strengths(p_tx * inv_sq(g.tx_eaves_dist[e]), ds) * g.monitor_prob[e] * g.delta_bits;
  }
  return total;
}

ConstraintResiduals residuals(const HopGeometry& g, const Channel& ch, const HopBudget& b, RateModel model,
                              double p_tx, const std::vector<double>& p_d) {
  ConstraintResiduals r;
  const double rate = hop_rate(g, ch, model, p_tx, p_d);
  r.time = rate > 0 ? b.payload_bits / rate / b.time_budget - 1.0 : INFINITY;
  double sum = p_tx;
  for (double p : p_d) sum += p;
  r.energy = b.energy_budget > 0 ? sum * b.time_budget / b.energy_budget - 1.0 : (sum > 0 ? INFINITY : 0.0);
  return r;
}

bool feasibility(const HopBudget& b, const HopGeometry& g, const Channel& ch) {
  const double xi0 = mean_gain_at(g.link_dist, ch.rayleigh_o);
  const double chi2 = b.energy_budget / b.time_budget;
  const double chi1 = ch.bandwidth_hz * ch.noise_psd * snr_target(b, ch);
  return xi0 * chi2 - chi1 > 0.0;
}

PowerSolution cor1_powers(const HopGeometry& g, const Channel& ch, const HopBudget& b) {
  g.validate();
  if (g.deceiver_count() != 1) throw std::invalid_argument("cor1_powers needs exactly one deceiver");
  const double a = snr_target(b, ch);
  const double xi0 = mean_gain_at(g.link_dist, ch.rayleigh_o);
  const double xid = mean_gain_at(g.deceiver_rx_dist[0], ch.rayleigh_o) * a;
  const double chi1 = ch.bandwidth_hz * ch.noise_psd * a;
  const double chi2 = b.energy_budget / b.time_budget;
  PowerSolution s;
  s.p_tx = (chi1 + xid * chi2) / (xi0 + xid);
  s.p_deceivers = {(xi0 * chi2 - chi1) / (xi0 + xid)};
  s.feasible = feasibility(b, g, ch);
  s.objective = hop_objective(g, s.p_tx, s.p_deceivers);
  return s;
}

PowerSolution cor2_powers(const HopGeometry& g, const Channel& ch, const HopBudget& b) {
  g.validate();
  if (g.tx_eaves_dist.size() != 1) throw std::invalid_argument("cor2_powers needs exactly one eavesdropper");
  if (g.deceiver_count() == 0) throw std::invalid_argument("cor2_powers needs at least one deceiver");
  const double a = snr_target(b, ch);
  const double xi0 = mean_gain_at(g.link_dist, ch.rayleigh_o);
  const double chi1 = ch.bandwidth_hz * ch.noise_psd * a;
  const double chi2 = b.energy_budget / b.time_budget;
  PowerSolution s;
  s.p_tx = chi1 / xi0;
  // p_d ∝ m_de², which makes every odds factor p_d m_de⁻² / p_s m_se⁻² equal.
  double sum_sq = 0.0;
  for (const auto& row : g.deceiver_eaves_dist) sum_sq += row[0] * row[0];
  for (const auto& row : g.deceiver_eaves_dist)
    s.p_deceivers.push_back((xi0 * chi2 - chi1) / (xi0 * inv_sq(row[0]) * sum_sq));
  s.feasible = feasibility(b, g, ch);
  s.objective = hop_objective(g, s.p_tx, s.p_deceivers);
  return s;
}

PowerSolution grid_oracle(const HopGeometry& g, const Channel& ch, const HopBudget& b, std::size_t resolution,
                          RateModel model) {
  g.validate();
  if (resolution < 2) throw std::invalid_argument("grid resolution must be at least 2");
  PowerSolution best;
  const double chi2 = b.energy_budget / b.time_budget;
  const std::size_t nd = g.deceiver_count();
  const double n = static_cast<double>(resolution - 1);
  const double rate_needed = b.payload_bits / b.time_budget;
  std::vector<double> pd(nd);
  double best_total = INFINITY;
  for (std::size_t i = 0; i < resolution; ++i) {
    const double p_tx = chi2 * static_cast<double>(i) / n;
    const double room = chi2 - p_tx;
    for (std::size_t j = 0; j < (nd ? resolution : 1); ++j) {
      const double each = nd ? room * static_cast<double>(j) / n / static_cast<double>(nd) : 0.0;
      for (auto& p : pd) p = each;
      if (!(hop_rate(g, ch, model, p_tx, pd) >= rate_needed * (1.0 - kFeasTol))) continue;
      const double total = p_tx + each * static_cast<double>(nd);
      if (total > chi2 * (1.0 + kFeasTol)) continue;
      const double obj = hop_objective(g, p_tx, pd);
      if (!best.feasible || obj < best.objective || (obj == best.objective && total < best_total)) {
        best.feasible = true;
        best.objective = obj;
        best.p_tx = p_tx;
        best.p_deceivers = pd;
        best_total = total;
      }
    }
  }
  return best;
}

}  // namespace decoysl
