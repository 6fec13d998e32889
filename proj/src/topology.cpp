#include "decoysl/topology.hpp"

#include <cmath>
#include <stdexcept>

#include "decoysl/errors.hpp"

namespace decoysl {

std::string NodeId::str() const {
  switch (kind) {
    case NodeKind::Device: return "dev" + std::to_string(index);
    case NodeKind::Server: return "server";
    case NodeKind::Eavesdropper: return "eve" + std::to_string(index);
  }
  return "?";
}

void Scenario::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be positive and finite");
  };
  positive(bandwidth_hz, "bandwidth_hz");
  positive(noise_psd, "noise_psd");
  positive(rayleigh_o, "rayleigh_o");
  positive(area_side, "area_side");
  positive(time_budget, "time_budget");
  positive(energy_budget, "energy_budget");
  if (devices.size() < 2) throw ConfigError("scenario needs at least two devices");
  auto in_area = [&](Position p, const std::string& who) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0 || p.y < 0 || p.x > area_side || p.y > area_side)
      throw ConfigError(who + " position outside the area");
  };
  for (std::size_t i = 0; i < devices.size(); ++i) {
    in_area(devices[i].position, "device " + std::to_string(i));
    positive(devices[i].compute.cpu_hz, "cpu_hz");
    positive(devices[i].compute.cycles_per_bit, "cycles_per_bit");
    positive(devices[i].compute.energy_coeff, "energy_coeff");
  }
  in_area(server.position, "server");
  positive(server.compute.cpu_hz, "server cpu_hz");
  positive(server.compute.cycles_per_bit, "server cycles_per_bit");
  positive(server.compute.energy_coeff, "server energy_coeff");
  for (std::size_t i = 0; i < eavesdroppers.size(); ++i) {
    in_area(eavesdroppers[i].position, "eavesdropper " + std::to_string(i));
    const double q = eavesdroppers[i].monitor_prob;
    if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("monitor_prob must lie in [0, 1]");
  }
}

Position Scenario::position_of(NodeId n) const {
  switch (n.kind) {
    case NodeKind::Device:
      if (n.index >= devices.size()) throw std::out_of_range("device index");
      return devices[n.index].position;
    case NodeKind::Server: return server.position;
    case NodeKind::Eavesdropper:
      if (n.index >= eavesdroppers.size()) throw std::out_of_range("eavesdropper index");
      return eavesdroppers[n.index].position;
  }
  throw std::logic_error("bad node kind");
}

const ComputeProfile& Scenario::compute_of(NodeId n) const {
  if (n.kind == NodeKind::Server) return server.compute;
  if (n.kind == NodeKind::Device && n.index < devices.size()) return devices[n.index].compute;
  throw std::invalid_argument("node " + n.str() + " has no compute profile");
}

double Scenario::diagonal() const { return area_side * std::sqrt(2.0); }

double distance(Position a, Position b) { return std::hypot(a.x - b.x, a.y - b.y); }

double mean_gain_at(double dist, double o) {
  if (!(dist > 0.0)) throw DegenerateGeometry("zero distance between distinct nodes");
  return o / (dist * dist);
}

double mean_gain(NodeId a, NodeId b, const Scenario& scn) {
  if (a == b) throw std::invalid_argument("mean_gain needs two distinct nodes");
  return mean_gain_at(distance(scn.position_of(a), scn.position_of(b)), scn.rayleigh_o);
}

FadingDraw sample_rx_power(double tx_power, NodeId a, NodeId b, const Scenario& scn, Rng& rng) {
  if (!(tx_power >= 0.0)) throw std::invalid_argument("negative transmit power");
  const double mean = tx_power * mean_gain(a, b, scn);
  return {rng.exponential(mean), a, b};
}

Scenario gen_scenario(std::uint64_t seed, std::size_t u_count, std::size_t e_count, double area_side,
                      const ScenarioDefaults& d) {
  if (u_count < 2) throw std::invalid_argument("gen_scenario needs at least two devices");
  Rng rng(seed);
  Scenario s;
  s.bandwidth_hz = d.bandwidth_hz;
  s.noise_psd = d.noise_psd;
  s.rayleigh_o = d.rayleigh_o;
  s.area_side = area_side;
  s.time_budget = d.time_budget;
  s.energy_budget = d.energy_budget;
  s.server.position = {area_side / 2, area_side / 2};
  s.server.compute = d.server_compute;
  const double log_lo = std::log(d.cycles_per_bit_min);
  const double log_hi = std::log(d.cycles_per_bit_max);
  for (std::size_t i = 0; i < u_count; ++i) {
    Device dev;
    dev.position.x = rng.uniform(0.0, area_side);
    dev.position.y = rng.uniform(0.0, area_side);
    dev.compute.cpu_hz = rng.uniform(d.cpu_hz_min, d.cpu_hz_max);
    dev.compute.cycles_per_bit = std::exp(rng.uniform(log_lo, log_hi));
    dev.compute.energy_coeff = d.energy_coeff;
    s.devices.push_back(dev);
  }
  for (std::size_t i = 0; i < e_count; ++i) {
    Eavesdropper e;
    e.position.x = rng.uniform(0.0, area_side);
    e.position.y = rng.uniform(0.0, area_side);
    e.monitor_prob = d.monitor_prob;
    s.eavesdroppers.push_back(e);
  }
  return s;
}

KvConfig scenario_to_config(const Scenario& scn) {
  KvConfig c;
  c.set("area_side", scn.area_side);
  c.set("bandwidth_hz", scn.bandwidth_hz);
  c.set("noise_psd", scn.noise_psd);
  c.set("rayleigh_o", scn.rayleigh_o);
  c.set("time_budget", scn.time_budget);
  c.set("energy_budget", scn.energy_budget);
  c.set("server_x", scn.server.position.x);
  c.set("server_y", scn.server.position.y);
  c.set("server_cpu_hz", scn.server.compute.cpu_hz);
  c.set("server_cycles_per_bit", scn.server.compute.cycles_per_bit);
  c.set("server_energy_coeff", scn.server.compute.energy_coeff);
  std::vector<double> dx, dy, df, dw, dv, ex, ey, eq;
  for (const auto& d : scn.devices) {
    dx.push_back(d.position.x);
    dy.push_back(d.position.y);
    df.push_back(d.compute.cpu_hz);
    dw.push_back(d.compute.cycles_per_bit);
    dv.push_back(d.compute.energy_coeff);
  }
  for (const auto& e : scn.eavesdroppers) {
    ex.push_back(e.position.x);
    ey.push_back(e.position.y);
    eq.push_back(e.monitor_prob);
  }
  c.set("device_x", dx);
  c.set("device_y", dy);
  c.set("device_cpu_hz", df);
  c.set("device_cycles_per_bit", dw);
  c.set("device_energy_coeff", dv);
  c.set("eaves_x", ex);
  c.set("eaves_y", ey);
  c.set("eaves_monitor_prob", eq);
  return c;
}

Scenario scenario_from_config(const KvConfig& c) {
  Scenario s;
  s.area_side = c.number("area_side");
  s.bandwidth_hz = c.number("bandwidth_hz");
  s.noise_psd = c.number("noise_psd");
  s.rayleigh_o = c.number("rayleigh_o");
  s.time_budget = c.number("time_budget");
  s.energy_budget = c.number("energy_budget");
  s.server.position = {c.number("server_x"), c.number("server_y")};
  s.server.compute = {c.number("server_cpu_hz"), c.number("server_cycles_per_bit"),
                      c.number("server_energy_coeff")};
  const auto& dx = c.array("device_x");
  const auto& dy = c.array("device_y");
  const auto& df = c.array("device_cpu_hz");
  const auto& dw = c.array("device_cycles_per_bit");
  const auto& dv = c.array("device_energy_coeff");
  if (dy.size() != dx.size() || df.size() != dx.size() || dw.size() != dx.size() || dv.size() != dx.size())
    throw ConfigError("device arrays differ in length");
  for (std::size_t i = 0; i < dx.size(); ++i) s.devices.push_back({{dx[i], dy[i]}, {df[i], dw[i], dv[i]}});
  const auto ex = c.array_or("eaves_x", {});
  const auto ey = c.array_or("eaves_y", {});
  const auto eq = c.array_or("eaves_monitor_prob", {});
  if (ey.size() != ex.size() || eq.size() != ex.size()) throw ConfigError("eavesdropper arrays differ in length");
  for (std::size_t i = 0; i < ex.size(); ++i) s.eavesdroppers.push_back({{ex[i], ey[i]}, eq[i]});
  s.validate();
  return s;
}

}  // namespace decoysl
