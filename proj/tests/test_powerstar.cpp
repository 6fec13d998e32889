#include <doctest.h>

#include <cmath>
#include <vector>

#include "decoysl/errors.hpp"
#include "decoysl/powerstar.hpp"

using namespace decoysl;

namespace {

const Channel kChannel{1e6, 1e-12, 1.0};

HopGeometry one_deceiver(double link, double dec_rx, double tx_eve, double dec_eve) {
  HopGeometry g;
  g.link_dist = link;
  g.deceiver_rx_dist = {dec_rx};
  g.tx_eaves_dist = {tx_eve};
  g.deceiver_eaves_dist = {{dec_eve}};
  g.monitor_prob = {0.8};
  g.delta_bits = 1e6;
  return g;
}

HopGeometry many_deceivers(const std::vector<double>& dec_eve) {
  HopGeometry g;
  g.link_dist = 100;
  g.tx_eaves_dist = {200};
  g.monitor_prob = {0.8};
  g.delta_bits = 1e6;
  for (double m : dec_eve) {
    g.deceiver_rx_dist.push_back(150);
    g.deceiver_eaves_dist.push_back({m});
  }
  return g;
}

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

TEST_CASE("one deceiver: closed form spends the whole budget and matches the grid") {
  const HopGeometry g = one_deceiver(100, 150, 200, 150);
  const HopBudget b{2.0, 0.01, 1e6};
  const PowerSolution s = cor1_powers(g, kChannel, b);
  REQUIRE(s.feasible);
  CHECK(s.p_tx > 0);
  CHECK(s.p_deceivers[0] > 0);
  CHECK(s.p_tx + s.p_deceivers[0] == doctest::Approx(0.005).epsilon(1e-12));

  const ConstraintResiduals r = residuals(g, kChannel, b, RateModel::WithInterference, s.p_tx, s.p_deceivers);
  CHECK(r.time <= 1e-9);
  CHECK(r.energy <= 1e-9);

  const PowerSolution grid = grid_oracle(g, kChannel, b, 1000, RateModel::WithInterference);
  REQUIRE(grid.feasible);
  CHECK(s.objective <= grid.objective * (1 + 1e-3));
  // Within one grid cell of the closed form.
  CHECK(std::fabs(grid.p_tx - s.p_tx) <= 0.005 / 999 * 1.000001);
}

TEST_CASE("zero energy budget admits no deceiver power") {
  const HopGeometry g = one_deceiver(100, 150, 200, 150);
  const HopBudget b{2.0, 0.0, 1e6};
  CHECK_FALSE(feasibility(b, g, kChannel));
  CHECK_FALSE(cor1_powers(g, kChannel, b).feasible);
  CHECK_FALSE(cor2_powers(g, kChannel, b).feasible);
}

TEST_CASE("feasibility is a strict sign test around the threshold") {
  const HopGeometry g = one_deceiver(100, 150, 200, 150);
  // Threshold energy: chi1 · B_T / xi0 with chi1 = B·N0·(2^{1/2} − 1).
  const double threshold = 1e6 * 1e-12 * (std::sqrt(2.0) - 1.0) * 2.0 / 1e-4;
  CHECK(feasibility({2.0, threshold * 1.001, 1e6}, g, kChannel));
  CHECK_FALSE(feasibility({2.0, threshold * 0.999, 1e6}, g, kChannel));
  CHECK(feasibility({2.0, 1e3, 1e6}, g, kChannel));
}

TEST_CASE("grid reports an empty feasible set") {
  const HopGeometry g = one_deceiver(100, 150, 200, 150);
  const PowerSolution s = grid_oracle(g, kChannel, {2.0, 1e-9, 1e6}, 200, RateModel::WithInterference);
  CHECK_FALSE(s.feasible);
  CHECK_THROWS_AS(grid_oracle(g, kChannel, {2.0, 1.0, 1e6}, 1, RateModel::WithInterference), std::invalid_argument);
}

TEST_CASE("grid optimum beats hand-picked feasible points") {
  const HopGeometry g = one_deceiver(120, 90, 250, 180);
  const HopBudget b{2.0, 0.02, 1e6};
  const PowerSolution best = grid_oracle(g, kChannel, b, 300, RateModel::WithInterference);
  REQUIRE(best.feasible);
  for (double p_tx : {0.004, 0.006, 0.009}) {
    const std::vector<double> pd{0.01 - p_tx};
    const ConstraintResiduals r = residuals(g, kChannel, b, RateModel::WithInterference, p_tx, pd);
    if (r.time > 0 || r.energy > 0) continue;
    CHECK(best.objective <= hop_objective(g, p_tx, pd));
  }
}

TEST_CASE("more energy never hurts the grid optimum") {
  const HopGeometry g = one_deceiver(100, 150, 200, 150);
  double prev = INFINITY;
  for (double be : {0.01, 0.02, 0.04, 0.08}) {
    const PowerSolution s = grid_oracle(g, kChannel, {2.0, be, 1e6}, 400, RateModel::WithInterference);
    REQUIRE(s.feasible);
    CHECK(s.objective <= prev * (1 + 1e-12));
    prev = s.objective;
  }
}

TEST_CASE("interference-free transmit power example") {
  const HopGeometry g = many_deceivers({150, 250});
  // Payload equals B_T·B, so 2^{Γ/(B_T B)} − 1 = 1 and p_tx = B·N0·m²/o.
  const PowerSolution s = cor2_powers(g, kChannel, {2.0, 0.1, 2e6});
  CHECK(s.p_tx == doctest::Approx(1e-2).epsilon(1e-12));
  const ConstraintResiduals r = residuals(g, kChannel, {2.0, 0.1, 2e6}, RateModel::InterferenceFree, s.p_tx,
                                          s.p_deceivers);
  CHECK(std::fabs(r.time) <= 1e-9);
  CHECK(std::fabs(r.energy) <= 1e-9);
}

TEST_CASE("interference-free transmit power falls as the time budget grows") {
  const HopGeometry g = many_deceivers({150});
  const double a = cor2_powers(g, kChannel, {1.0, 1.0, 1e6}).p_tx;
  const double b = cor2_powers(g, kChannel, {2.0, 1.0, 1e6}).p_tx;
  CHECK(b < a);
}

TEST_CASE("equidistant deceivers share the leftover budget equally") {
  const HopGeometry g = many_deceivers({180, 180, 180});
  const HopBudget b{2.0, 0.1, 1e6};
  const PowerSolution s = cor2_powers(g, kChannel, b);
  REQUIRE(s.feasible);
  CHECK(s.p_deceivers[0] == doctest::Approx(s.p_deceivers[1]).epsilon(1e-14));
  CHECK(s.p_deceivers[1] == doctest::Approx(s.p_deceivers[2]).epsilon(1e-14));
  CHECK(sum(s.p_deceivers) == doctest::Approx(0.05 - s.p_tx).epsilon(1e-12));
}

TEST_CASE("interference-free deceiver powers equalize the odds factors") {
  const HopGeometry g = many_deceivers({80, 160, 320});
  const PowerSolution s = cor2_powers(g, kChannel, {2.0, 0.1, 1e6});
  const double first = s.p_deceivers[0] / (80.0 * 80.0);
  CHECK(s.p_deceivers[1] / (160.0 * 160.0) == doctest::Approx(first).epsilon(1e-12));
  CHECK(s.p_deceivers[2] / (320.0 * 320.0) == doctest::Approx(first).epsilon(1e-12));
}

TEST_CASE("equal-odds split is beaten by an equal split on asymmetric geometry") {
  // Known defect of the interference-free closed form: with the transmitter
  // power fixed, Π 1/(1 + x_d) is minimized by equal powers, not equal odds.
  const HopGeometry g = many_deceivers({60, 300});
  const PowerSolution s = cor2_powers(g, kChannel, {2.0, 0.1, 1e6});
  REQUIRE(s.feasible);
  const double each = sum(s.p_deceivers) / 2.0;
  const double equal_split = hop_objective(g, s.p_tx, {each, each});
  CHECK(equal_split < s.objective);
}

TEST_CASE("preconditions") {
  CHECK_THROWS_AS(cor1_powers(many_deceivers({100, 200}), kChannel, {2.0, 0.1, 1e6}), std::invalid_argument);
  CHECK_THROWS_AS(cor2_powers(many_deceivers({}), kChannel, {2.0, 0.1, 1e6}), std::invalid_argument);
  HopGeometry two_eves = many_deceivers({100});
  two_eves.tx_eaves_dist.push_back(100);
  two_eves.deceiver_eaves_dist[0].push_back(100);
  two_eves.monitor_prob.push_back(0.5);
  CHECK_THROWS_AS(cor2_powers(two_eves, kChannel, {2.0, 0.1, 1e6}), std::invalid_argument);
  HopGeometry degenerate = one_deceiver(100, 150, 0.0, 150);
  CHECK_THROWS_AS(hop_objective(degenerate, 0.1, {0.1}), DegenerateGeometry);
}
