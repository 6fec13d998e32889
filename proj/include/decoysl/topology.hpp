#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "decoysl/kvconfig.hpp"
#include "decoysl/rng.hpp"

namespace decoysl {

struct Position {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Position&) const = default;
};

enum class NodeKind { Device, Server, Eavesdropper };

struct NodeId {
  NodeKind kind = NodeKind::Device;
  std::size_t index = 0;

  static NodeId device(std::size_t i) { return {NodeKind::Device, i}; }
  static NodeId server() { return {NodeKind::Server, 0}; }
  static NodeId eavesdropper(std::size_t i) { return {NodeKind::Eavesdropper, i}; }
  bool operator==(const NodeId&) const = default;
  std::string str() const;
};

struct ComputeProfile {
  double cpu_hz = 0.0;          // f
  double cycles_per_bit = 0.0;  // omega
  double energy_coeff = 0.0;    // vartheta, J·s²
  bool operator==(const ComputeProfile&) const = default;
};

struct Device {
  Position position;
  ComputeProfile compute;
  bool operator==(const Device&) const = default;
};

struct Server {
  Position position;
  ComputeProfile compute;
  bool operator==(const Server&) const = default;
};

struct Eavesdropper {
  Position position;
  double monitor_prob = 0.0;
  bool operator==(const Eavesdropper&) const = default;
};

struct Channel {
  double bandwidth_hz = 0.0;
  double noise_psd = 0.0;
  double rayleigh_o = 0.0;
};

struct Scenario {
  std::vector<Device> devices;
  Server server;
  std::vector<Eavesdropper> eavesdroppers;
  double bandwidth_hz = 0.0;
  double noise_psd = 0.0;
  double rayleigh_o = 0.0;
  double area_side = 0.0;
  double time_budget = 0.0;
  double energy_budget = 0.0;

  void validate() const;
  Position position_of(NodeId n) const;
  const ComputeProfile& compute_of(NodeId n) const;
  Channel channel() const { return {bandwidth_hz, noise_psd, rayleigh_o}; }
  double diagonal() const;
  bool operator==(const Scenario&) const = default;
};

// Parameter defaults for generated scenarios (the simulation table values).
struct ScenarioDefaults {
  double cpu_hz_min = 4e9;
  double cpu_hz_max = 7e9;
  double cycles_per_bit_min = 1e4;
  double cycles_per_bit_max = 1e6;
  double energy_coeff = 4e-18;
  double bandwidth_hz = 1e6;
  double noise_psd = 1e-12;  // -90 dBm/Hz
  double rayleigh_o = 1.0;
  double time_budget = 8.0;
  double energy_budget = 75.0;
  double monitor_prob = 0.8;
  ComputeProfile server_compute{5.5e9, 1e5, 4e-18};
};

struct FadingDraw {
  double rx_power = 0.0;
  NodeId source;
  NodeId sink;
};

double distance(Position a, Position b);
// o / m², the canonical expression for every mean-gain evaluation.
double mean_gain_at(double dist, double o);
double mean_gain(NodeId a, NodeId b, const Scenario& scn);
FadingDraw sample_rx_power(double tx_power, NodeId a, NodeId b, const Scenario& scn, Rng& rng);

Scenario gen_scenario(std::uint64_t seed, std::size_t u_count, std::size_t e_count, double area_side,
                      const ScenarioDefaults& defaults = {});

KvConfig scenario_to_config(const Scenario& scn);
Scenario scenario_from_config(const KvConfig& cfg);

}  // namespace decoysl
