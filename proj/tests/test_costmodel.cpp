#include <doctest.h>

#include <cmath>

#include "decoysl/costmodel.hpp"
#include "decoysl/errors.hpp"

using namespace decoysl;

namespace {

Scenario line_scenario() {
  Scenario s = gen_scenario(1, 4, 1, 800.0);
  s.devices[0].position = {100, 100};
  s.devices[1].position = {200, 100};
  s.devices[2].position = {100, 300};
  s.devices[3].position = {700, 700};
  return s;
}

}  // namespace

TEST_CASE("rate without deceivers is Shannon capacity at mean gain") {
  const Scenario s = line_scenario();
  TransmissionSpec t{NodeId::device(0), NodeId::device(1), 1e6, 0.1, {}};
  const double snr = 0.1 * 1e-4 / (1e6 * 1e-12);
  CHECK(data_rate(t, s) == doctest::Approx(1e6 * std::log2(1.0 + snr)).epsilon(1e-14));
}

TEST_CASE("deceiver power interferes at the receiver") {
  const Scenario s = line_scenario();
  TransmissionSpec t{NodeId::device(0), NodeId::device(1), 1e6, 0.1, {{NodeId::device(3), 0.4}}};
  const double dist2 = std::pow(500.0, 2) + std::pow(600.0, 2);
  const double sinr = 0.1 * 1e-4 / (0.4 / dist2 + 1e6 * 1e-12);
  CHECK(data_rate(t, s) == doctest::Approx(1e6 * std::log2(1.0 + sinr)).epsilon(1e-14));
  TransmissionSpec quiet = t;
  quiet.deceivers.clear();
  CHECK(data_rate(t, s) < data_rate(quiet, s));
}

TEST_CASE("transmission time and unreachable links") {
  CHECK(tx_time(2e6, 1e6) == 2.0);
  CHECK_THROWS_AS(tx_time(1.0, 0.0), UnreachableLink);
  const Scenario s = line_scenario();
  TransmissionSpec t{NodeId::device(0), NodeId::device(1), 1e6, 0.0, {}};
  LedgerEntry e;
  CHECK_THROWS_AS(add_hop(e, t, s), UnreachableLink);
}

TEST_CASE("compute time and energy follow the per-bit cost model") {
  Segment seg;
  seg.param_bits = 1e6;
  seg.out_bits = 2e5;
  seg.grad_in_bits = 3e5;
  seg.fwd_coeff = 1e-8;
  seg.bwd_coeff = 2e-8;
  const ComputeProfile dev{5e9, 1e5, 4e-18};
  const ComputeTimes ct = compute_times(seg, dev);
  CHECK(ct.fwd == doctest::Approx(1e5 * 1e-8 * 2e5 * 1e6 / 5e9));
  CHECK(ct.bwd == doctest::Approx(1e5 * 2e-8 * 3e5 * 1e6 / 5e9));
  CHECK(forward_compute_energy(seg, dev) == doctest::Approx(4e-18 * 25e18 * 1e-8 * 1e6));
  CHECK(backward_compute_energy(seg, dev) == doctest::Approx(2.0 * forward_compute_energy(seg, dev)));
}

TEST_CASE("hop energy splits into transmitter and deceiver parts") {
  const Scenario s = line_scenario();
  TransmissionSpec t{NodeId::device(0), NodeId::device(1), 1e6, 0.1, {{NodeId::device(2), 0.2}, {NodeId::device(3), 0.05}}};
  LedgerEntry e;
  add_hop(e, t, s);
  CHECK(e.t_tx == doctest::Approx(1e6 / data_rate(t, s)));
  CHECK(e.e_tx == doctest::Approx(0.1 * e.t_tx));
  CHECK(e.e_deceive == doctest::Approx(0.25 * e.t_tx));
  CostLedger ledger;
  ledger.add(e);
  ledger.add(e);
  CHECK(ledger.time_spent() == doctest::Approx(2 * e.time()));
  CHECK(ledger.to_json()["per_step_breakdown"].size() == 2);
}

TEST_CASE("episode_totals checks the chain") {
  Scenario s = line_scenario();
  const ModelSpec m = make_model(4, SizeProfile::pyramid(), 1, 3);
  const SplitPlan plan = split_at(m, {1, 2});
  const std::vector<NodeId> chain{NodeId::device(0), NodeId::device(1), NodeId::server()};
  std::vector<TransmissionSpec> txs{
      {chain[0], chain[1], plan.segments[0].out_bits, 0.1, {}},
      {chain[1], chain[2], plan.segments[1].out_bits, 0.1, {}},
      {chain[2], chain[1], plan.segments[2].grad_in_bits, 0.1, {}},
      {chain[1], chain[0], plan.segments[1].grad_in_bits, 0.1, {}},
  };
  const CostLedger ok = episode_totals(plan, chain, txs, s);
  CHECK(ok.entries().size() == 6);
  CHECK(ok.time_spent() > 0.0);

  SUBCASE("hop out of order") {
    std::swap(txs[2], txs[3]);
    CHECK_THROWS_AS(episode_totals(plan, chain, txs, s), BrokenChain);
  }
  SUBCASE("wrong payload") {
    txs[0].payload_bits *= 2;
    CHECK_THROWS_AS(episode_totals(plan, chain, txs, s), BrokenChain);
  }
  SUBCASE("last segment not on the server") {
    const std::vector<NodeId> bad{NodeId::device(0), NodeId::device(1), NodeId::device(2)};
    CHECK_THROWS_AS(episode_totals(plan, bad, txs, s), BrokenChain);
  }
}
