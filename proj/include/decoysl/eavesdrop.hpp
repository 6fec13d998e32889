#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "decoysl/costmodel.hpp"

namespace decoysl {

struct CaptureOutcome {
  NodeId eavesdropper;
  NodeId captured_source;
  bool monitored = false;
  double leaked_bits = 0.0;
};

struct Hop {
  TransmissionSpec tx;
  Segment segment;
};

struct LeakageReport {
  double expected_bits = 0.0;
  std::vector<double> per_eavesdropper;
  std::vector<double> per_hop;
  nlohmann::json to_json() const;
};

struct McEstimate {
  double mean = 0.0;
  double stderr_bits = 0.0;
  bool stderr_defined = false;
  std::size_t samples = 0;
};

// Leakage quantum: payload bits × segment sensitivity.
double delta(const TransmissionSpec& t, const Segment& seg);

// One fading realization toward eavesdropper `e`: the transmitter power is
// drawn first, then each deceiver in list order, then the monitoring
// indicator. The transmitter is captured only if it is strictly strongest.
CaptureOutcome sample_capture(const TransmissionSpec& t, std::size_t e, const Scenario& scn, double delta_bits,
                              Rng& rng);

// Probability that the transmitter wins the max-SNR selection, given the
// mean received strengths p·m⁻² of transmitter and deceivers.
double capture_prob_from_strengths(double tx_strength, std::span<const double> deceiver_strengths);
double capture_prob_closed(const TransmissionSpec& t, std::size_t e, const Scenario& scn);

LeakageReport expected_leakage_closed(std::span<const Hop> hops, const Scenario& scn);
McEstimate mc_leakage_oracle(std::span<const Hop> hops, const Scenario& scn, std::size_t n_samples,
                             std::uint64_t seed);

}  // namespace decoysl
