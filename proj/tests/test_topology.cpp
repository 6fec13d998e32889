#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "decoysl/errors.hpp"
#include "decoysl/topology.hpp"

using namespace decoysl;

TEST_CASE("distance is euclidean and symmetric") {
  CHECK(distance({0, 0}, {3, 4}) == doctest::Approx(5.0));
  CHECK(distance({1, 2}, {1, 2}) == 0.0);
  // Corner to corner of an 800 m square.
  CHECK(distance({0, 0}, {800, 800}) == doctest::Approx(1131.3708498984761).epsilon(1e-14));
  CHECK(distance({5, -2}, {1, 7}) == distance({1, 7}, {5, -2}));
}

TEST_CASE("mean gain follows o / m^2 and rejects coincident nodes") {
  CHECK(mean_gain_at(100.0, 1.0) == doctest::Approx(1e-4));
  CHECK(mean_gain_at(10.0, 2.0) == doctest::Approx(0.02));
  CHECK_THROWS_AS(mean_gain_at(0.0, 1.0), DegenerateGeometry);
}

TEST_CASE("generated scenarios stay in the area and are seed-deterministic") {
  const Scenario a = gen_scenario(11, 6, 3, 800.0);
  const Scenario b = gen_scenario(11, 6, 3, 800.0);
  const Scenario c = gen_scenario(12, 6, 3, 800.0);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.devices.size() == 6);
  CHECK(a.eavesdroppers.size() == 3);
  for (const auto& d : a.devices) {
    CHECK(d.position.x >= 0.0);
    CHECK(d.position.x <= 800.0);
    CHECK(d.position.y >= 0.0);
    CHECK(d.position.y <= 800.0);
    CHECK(d.compute.cpu_hz >= 4e9);
    CHECK(d.compute.cpu_hz <= 7e9);
    CHECK(d.compute.cycles_per_bit >= 1e4);
    CHECK(d.compute.cycles_per_bit <= 1e6);
  }
  CHECK(a.server.position == Position{400.0, 400.0});
  CHECK(a.eavesdroppers[0].monitor_prob == 0.8);
  CHECK_NOTHROW(a.validate());
}

TEST_CASE("scenario validation rejects bad inputs") {
  Scenario s = gen_scenario(3, 4, 1, 800.0);
  SUBCASE("position outside area") {
    s.devices[0].position.x = 900.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
  SUBCASE("monitor probability") {
    s.eavesdroppers[0].monitor_prob = 1.5;
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
  SUBCASE("bandwidth") {
    s.bandwidth_hz = 0.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
}

TEST_CASE("scenario config round trip is exact") {
  const Scenario s = gen_scenario(5, 5, 2, 640.0);
  const KvConfig kv = scenario_to_config(s);
  CHECK(scenario_from_config(KvConfig::parse(kv.dump())) == s);
}

TEST_CASE("faded received power is exponential with mean p o / m^2") {
  Scenario s = gen_scenario(9, 2, 1, 800.0);
  s.devices[0].position = {100, 100};
  s.devices[1].position = {100, 300};
  const double mean = 0.2 * 1.0 / (200.0 * 200.0);
  Rng rng(1);
  const std::size_t n = 4000;
  std::vector<double> xs;
  for (std::size_t i = 0; i < n; ++i)
    xs.push_back(sample_rx_power(0.2, NodeId::device(0), NodeId::device(1), s, rng).rx_power);
  std::sort(xs.begin(), xs.end());
  // Kolmogorov-Smirnov statistic against the exponential CDF.
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = 1.0 - std::exp(-xs[i] / mean);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  CHECK(d < 1.63 / std::sqrt(static_cast<double>(n)));  // 1% level
  Rng zero(2);
  CHECK(sample_rx_power(0.0, NodeId::device(0), NodeId::device(1), s, zero).rx_power == 0.0);
}

TEST_CASE("node ids print and resolve") {
  const Scenario s = gen_scenario(1, 3, 2, 800.0);
  CHECK(NodeId::device(2).str() == "dev2");
  CHECK(s.position_of(NodeId::server()) == s.server.position);
  CHECK_THROWS(s.position_of(NodeId::device(7)));
  CHECK_THROWS(s.compute_of(NodeId::eavesdropper(0)));
}
