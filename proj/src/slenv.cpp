#include "decoysl/slenv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include <json.hpp>

#include "decoysl/errors.hpp"

namespace decoysl {

std::string Action::describe(const std::vector<double>& levels) const {
  std::string s;
  switch (family) {
    case ActionFamily::Select:
      return "select dev" + std::to_string(receiver) + " cut=" + std::to_string(cut);
    case ActionFamily::ForwardHop:
      s = "forward to dev" + std::to_string(receiver) + " cut=" + std::to_string(cut);
      break;
    case ActionFamily::ServerHop: s = "forward to server"; break;
    case ActionFamily::BackwardHop: s = "backward to position " + std::to_string(backward_receiver); break;
  }
  s += " p_tx=" + format_double(levels[tx_level]);
  if (!deceivers.empty()) {
    s += " deceivers=[";
    for (std::size_t i = 0; i < deceivers.size(); ++i) s += (i ? ",dev" : "dev") + std::to_string(deceivers[i]);
    s += "] p_d=" + format_double(levels[deceiver_level]);
  }
  return s;
}

ActionSpace::ActionSpace(std::size_t devices, std::size_t segments, std::size_t max_cut, std::size_t levels,
                         std::size_t max_deceivers)
    : devices_(devices), segments_(segments), max_cut_(max_cut), levels_(levels) {
  if (devices == 0 || segments < 2 || max_cut == 0 || levels == 0) throw ConfigError("degenerate action space");
  options_.push_back({});
  std::vector<std::vector<std::size_t>> subsets;
  if (max_deceivers >= 1)
    for (std::size_t i = 0; i < devices; ++i) subsets.push_back({i});
  if (max_deceivers >= 2)
    for (std::size_t i = 0; i < devices; ++i)
      for (std::size_t j = i + 1; j < devices; ++j) subsets.push_back({i, j});
  if (max_deceivers > 2) throw ConfigError("at most two simultaneous deceivers are supported");
  for (const auto& sub : subsets)
    for (std::size_t l = 0; l < levels; ++l) options_.push_back({sub, l});

  const std::size_t D = power_options();
  auto with_power = [&](Action a, std::size_t pa) {
    a.tx_level = pa / options_.size();
    const Option& o = options_[pa % options_.size()];
    a.deceivers = o.subset;
    a.deceiver_level = o.level;
    return a;
  };
  for (std::size_t u = 0; u < devices; ++u)
    for (std::size_t c = 1; c <= max_cut; ++c) {
      Action a;
      a.family = ActionFamily::Select;
      a.receiver = u;
      a.cut = c;
      actions_.push_back(a);
    }
  forward_base_ = actions_.size();
  for (std::size_t u = 0; u < devices; ++u)
    for (std::size_t c = 1; c <= max_cut; ++c)
      for (std::size_t pa = 0; pa < D; ++pa) {
        Action a;
        a.family = ActionFamily::ForwardHop;
        a.receiver = u;
        a.cut = c;
        actions_.push_back(with_power(a, pa));
      }
  server_base_ = actions_.size();
  for (std::size_t pa = 0; pa < D; ++pa) {
    Action a;
    a.family = ActionFamily::ServerHop;
    actions_.push_back(with_power(a, pa));
  }
  backward_base_ = actions_.size();
  for (std::size_t x = 1; x < segments; ++x)
    for (std::size_t pa = 0; pa < D; ++pa) {
      Action a;
      a.family = ActionFamily::BackwardHop;
      a.backward_receiver = x;
      actions_.push_back(with_power(a, pa));
    }
}

std::size_t ActionSpace::select_id(std::size_t u, std::size_t cut) const { return u * max_cut_ + (cut - 1); }
std::size_t ActionSpace::forward_id(std::size_t u, std::size_t cut, std::size_t pa) const {
  return forward_base_ + (u * max_cut_ + (cut - 1)) * power_options() + pa;
}
std::size_t ActionSpace::server_id(std::size_t pa) const { return server_base_ + pa; }
std::size_t ActionSpace::backward_id(std::size_t x, std::size_t pa) const {
  return backward_base_ + (x - 1) * power_options() + pa;
}

std::size_t ActionSpace::encode(const Action& a) const {
  std::size_t opt = 0;
  if (!a.deceivers.empty()) {
    auto it = std::find_if(options_.begin(), options_.end(), [&](const Option& o) {
      return o.subset == a.deceivers && o.level == a.deceiver_level;
    });
    if (it == options_.end()) throw InvalidAction("deceiver set not in the action space");
    opt = static_cast<std::size_t>(it - options_.begin());
  }
  const std::size_t pa = a.tx_level * options_.size() + opt;
  switch (a.family) {
    case ActionFamily::Select: return select_id(a.receiver, a.cut);
    case ActionFamily::ForwardHop: return forward_id(a.receiver, a.cut, pa);
    case ActionFamily::ServerHop: return server_id(pa);
    case ActionFamily::BackwardHop: return backward_id(a.backward_receiver, pa);
  }
  throw InvalidAction("unknown family");
}

std::vector<std::size_t> ActionSpace::power_assignments_avoiding(std::optional<std::size_t> a,
                                                                 std::optional<std::size_t> b) const {
  std::vector<std::size_t> opts;
  for (std::size_t o = 0; o < options_.size(); ++o) {
    const auto& sub = options_[o].subset;
    const bool clash = std::any_of(sub.begin(), sub.end(), [&](std::size_t d) { return d == a || d == b; });
    if (!clash) opts.push_back(o);
  }
  std::vector<std::size_t> pas;
  for (std::size_t t = 0; t < levels_; ++t)
    for (std::size_t o : opts) pas.push_back(t * options_.size() + o);
  return pas;
}

namespace {

std::optional<std::size_t> device_of(NodeId n) {
  if (n.kind == NodeKind::Device) return n.index;
  return std::nullopt;
}

}  // namespace

SplitEnv::SplitEnv(Scenario scn, ModelSpec model, EnvConfig cfg)
    : scn_(std::move(scn)),
      model_(std::move(model)),
      cfg_(std::move(cfg)),
      actions_(scn_.devices.size(), cfg_.segments,
               model_.layer_count() >= cfg_.segments ? model_.layer_count() - cfg_.segments + 1 : 1,
               cfg_.power_levels.size(), cfg_.max_deceivers) {
  scn_.validate();
  model_.validate();
  if (cfg_.segments < 2) throw ConfigError("need at least two segments");
  if (cfg_.segments - 1 > scn_.devices.size()) throw ConfigError("more device segments than devices");
  if (model_.layer_count() < cfg_.segments) throw ConfigError("model has fewer layers than segments");
  for (double p : cfg_.power_levels)
    if (!(p > 0.0)) throw ConfigError("power levels must be positive");
  double max_bits = 0.0;
  double max_weight = 0.0;
  for (std::size_t i = 0; i < model_.layer_count(); ++i) {
    const auto& l = model_.layers[i];
    max_weight = std::max(max_weight, l.sensitivity_weight);
    if (i + 1 < model_.layer_count())
      max_bits = std::max({max_bits, l.boundary_activation_bits, l.boundary_gradient_bits});
  }
  normalizer_ = max_bits * max_weight > 0 ? max_bits * max_weight : 1.0;
  reset(0);
}

const EnvState& SplitEnv::reset(std::uint64_t seed) {
  rng_ = Rng(seed);
  ledger_ = CostLedger{};
  hops_.clear();
  state_ = EnvState{};
  state_.remaining_energy = scn_.energy_budget;
  state_.remaining_time = scn_.time_budget;
  state_.assignment.assign(scn_.devices.size(), 0);
  refresh_distances(state_);
  return state_;
}

void SplitEnv::refresh_distances(EnvState& s) const {
  s.eavesdropper_dists.assign(scn_.eavesdroppers.size(), 0.0);
  s.device_dists.assign(scn_.devices.size(), 0.0);
  if (!s.transmitter) return;
  const Position v = scn_.position_of(*s.transmitter);
  for (std::size_t e = 0; e < scn_.eavesdroppers.size(); ++e)
    s.eavesdropper_dists[e] = distance(v, scn_.eavesdroppers[e].position);
  for (std::size_t u = 0; u < scn_.devices.size(); ++u) s.device_dists[u] = distance(v, scn_.devices[u].position);
}

std::vector<std::size_t> SplitEnv::valid_actions(const EnvState& s) const {
  std::vector<std::size_t> ids;
  const std::size_t S = cfg_.segments;
  const std::size_t L = model_.layer_count();
  const std::size_t n = s.step_idx;
  if (s.terminal) throw DeadEnd("episode already finished");
  if (n == 1) {
    for (std::size_t u = 0; u < scn_.devices.size(); ++u)
      for (std::size_t c = 1; c <= L - (S - 1); ++c) ids.push_back(actions_.select_id(u, c));
  } else if (n < S) {
    const auto tx = device_of(s.chain.back());
    const std::size_t remaining = L - s.boundaries.back();
    for (std::size_t u = 0; u < scn_.devices.size(); ++u) {
      if (s.assignment[u] != 0) continue;
      const auto pas = actions_.power_assignments_avoiding(tx, u);
      for (std::size_t c = 1; c + (S - n) <= remaining; ++c)
        for (std::size_t pa : pas) ids.push_back(actions_.forward_id(u, c, pa));
    }
  } else if (n == S) {
    for (std::size_t pa : actions_.power_assignments_avoiding(device_of(s.chain.back()), std::nullopt))
      ids.push_back(actions_.server_id(pa));
  } else {
    const std::size_t k = 2 * S - n + 1;
    const auto pas = actions_.power_assignments_avoiding(device_of(s.chain[k - 1]), device_of(s.chain[k - 2]));
    for (std::size_t pa : pas) ids.push_back(actions_.backward_id(k - 1, pa));
  }
  if (ids.empty()) throw DeadEnd("no valid action at step " + std::to_string(n));
  return ids;
}

std::vector<bool> SplitEnv::action_mask(const EnvState& s) const {
  std::vector<bool> mask(actions_.size(), false);
  for (std::size_t id : valid_actions(s)) mask[id] = true;
  return mask;
}

TransmissionSpec SplitEnv::make_transmission(NodeId tx, NodeId rx, double payload, const Action& a) const {
  TransmissionSpec t;
  t.tx = tx;
  t.rx = rx;
  t.payload_bits = payload;
  t.tx_power = cfg_.power_levels[a.tx_level];
  for (std::size_t d : a.deceivers) t.deceivers.push_back({NodeId::device(d), cfg_.power_levels[a.deceiver_level]});
  return t;
}

StepOutcome SplitEnv::step(std::size_t action_id) {
  const auto valid = valid_actions(state_);
  if (!std::binary_search(valid.begin(), valid.end(), action_id)) {
    ++invalid_actions_;
    throw InvalidAction("action " + std::to_string(action_id) + " is masked at step " +
                        std::to_string(state_.step_idx));
  }
  const Action& a = actions_.decode(action_id);
  const std::size_t S = cfg_.segments;
  const std::size_t L = model_.layer_count();
  const std::size_t n = state_.step_idx;
  EnvState& s = state_;
  StepOutcome out;
  auto segment = [&](std::size_t k) {  // 1-based
    return make_segment(model_, k == 1 ? 0 : s.boundaries[k - 2], s.boundaries[k - 1]);
  };
  const double time_before = ledger_.time_spent();
  const double energy_before = ledger_.energy_spent();

  std::optional<Hop> hop;
  if (n == 1) {
    s.chain.push_back(NodeId::device(a.receiver));
    s.boundaries.push_back(a.cut);
    s.assignment[a.receiver] = 1;
    s.transmitter = s.chain.back();
  } else if (n <= S) {
    const NodeId tx = s.chain.back();
    const NodeId rx = n < S ? NodeId::device(a.receiver) : NodeId::server();
    const Segment sender = segment(n - 1);
    hop = Hop{make_transmission(tx, rx, sender.out_bits, a), sender};
    LedgerEntry e = forward_compute_entry(sender, scn_.compute_of(tx));
    add_hop(e, hop->tx, scn_);
    ledger_.add(e);
    s.chain.push_back(rx);
    s.boundaries.push_back(n < S ? s.boundaries.back() + a.cut : L);
    if (n < S) s.assignment[a.receiver] = n;
    if (n == S) ledger_.add(forward_compute_entry(segment(S), scn_.compute_of(rx)));
    s.transmitter = rx;
  } else {
    const std::size_t k = 2 * S - n + 1;
    const NodeId tx = s.chain[k - 1];
    const NodeId rx = s.chain[k - 2];
    const Segment sender = segment(k);
    hop = Hop{make_transmission(tx, rx, sender.grad_in_bits, a), sender};
    LedgerEntry e = backward_compute_entry(sender, scn_.compute_of(tx));
    add_hop(e, hop->tx, scn_);
    ledger_.add(e);
    if (k == 2) ledger_.add(backward_compute_entry(segment(1), scn_.compute_of(rx)));
    s.transmitter = rx;
  }
  s.unassigned_fraction = static_cast<double>(L - s.boundaries.back()) / static_cast<double>(L);
  s.remaining_energy = scn_.energy_budget - ledger_.energy_spent();
  s.remaining_time = scn_.time_budget - ledger_.time_spent();
  out.delta_time = ledger_.time_spent() - time_before;
  out.delta_energy = ledger_.energy_spent() - energy_before;

  if (hop) {
    hops_.push_back(*hop);
    const double db = delta(hop->tx, hop->segment);
    for (std::size_t e = 0; e < scn_.eavesdroppers.size(); ++e) {
      out.captures.push_back(sample_capture(hop->tx, e, scn_, db, rng_));
      out.leakage_bits += out.captures.back().leaked_bits;
      out.leakage_norm += out.captures.back().leaked_bits / normalizer_;
    }
    out.expected_leakage_bits = expected_leakage_closed(std::span<const Hop>(&*hop, 1), scn_).expected_bits;
    double r = -out.leakage_norm;
    if (s.remaining_energy <= 0) {
      r -= cfg_.omega_energy;
      ++out.penalties;
    }
    if (s.remaining_time <= 0) {
      r -= cfg_.omega_time;
      ++out.penalties;
    }
    out.extrinsic_reward = r;
  }
  const RewardBounds rb = reward_bounds();
  const double slack = 1e-12 * std::max(1.0, -rb.lower);
  if (!(out.extrinsic_reward >= rb.lower - slack && out.extrinsic_reward <= rb.upper))
    throw RewardOutOfBounds("step reward " + format_double(out.extrinsic_reward) + " outside the bound");

  out.done = n == 2 * S - 1;
  if (out.done)
    s.terminal = true;
  else
    s.step_idx = n + 1;
  refresh_distances(s);
  out.next_state = s;
  return out;
}

RewardBounds SplitEnv::reward_bounds() const {
  // Largest single-transmission leakage quantum over the normalizer.
  double max_delta = 0.0;
  double max_weight = 0.0;
  for (std::size_t i = 0; i < model_.layer_count(); ++i) {
    max_weight = std::max(max_weight, model_.layers[i].sensitivity_weight);
    if (i + 1 < model_.layer_count())
      max_delta = std::max({max_delta, model_.layers[i].boundary_activation_bits,
                            model_.layers[i].boundary_gradient_bits});
  }
  const double delta_max_norm = max_delta * max_weight / normalizer_;
  const double E = static_cast<double>(scn_.eavesdroppers.size());
  return {-(E * delta_max_norm + cfg_.omega_energy + cfg_.omega_time), 0.0};
}

std::size_t SplitEnv::state_dim() const {
  const std::size_t U = scn_.devices.size();
  return 3 + U + (U + 1) + scn_.eavesdroppers.size() + U + 1;
}

std::vector<double> SplitEnv::encode_state(const EnvState& s) const {
  const std::size_t U = scn_.devices.size();
  const double S = static_cast<double>(cfg_.segments);
  const double diag = scn_.diagonal();
  std::vector<double> v;
  v.reserve(state_dim());
  v.push_back(s.remaining_energy / scn_.energy_budget);
  v.push_back(s.remaining_time / scn_.time_budget);
  v.push_back(s.unassigned_fraction);
  for (std::size_t u = 0; u < U; ++u) v.push_back(static_cast<double>(s.assignment[u]) / S);
  std::vector<double> onehot(U + 1, 0.0);
  if (s.transmitter) onehot[s.transmitter->kind == NodeKind::Server ? 0 : s.transmitter->index + 1] = 1.0;
  v.insert(v.end(), onehot.begin(), onehot.end());
  for (double d : s.eavesdropper_dists) v.push_back(cfg_.observe_eavesdroppers ? d / diag : 0.0);
  for (double d : s.device_dists) v.push_back(d / diag);
  v.push_back(static_cast<double>(s.step_idx) / (2.0 * S - 1.0));
  return v;
}

SplitPlan SplitEnv::plan() const {
  if (state_.boundaries.size() < cfg_.segments) throw BrokenChain("plan incomplete before step S");
  return split_at(model_, std::vector<std::size_t>(state_.boundaries.begin(), state_.boundaries.end() - 1));
}

std::uint64_t fnv1a(const std::vector<double>& v) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double d : v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &d, sizeof d);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::uint64_t quantize_state(const std::vector<double>& enc, std::size_t levels) {
  std::vector<double> q(enc.size());
  const double L = static_cast<double>(levels);
  for (std::size_t i = 0; i < enc.size(); ++i) q[i] = std::clamp(std::floor(enc[i] * L), 0.0, L - 1.0);
  return fnv1a(q);
}

nlohmann::json trace_record(std::size_t step, const std::vector<double>& state_enc, std::size_t action,
                            const StepOutcome& out) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(state_enc)));
  return {{"step", step},
          {"state_hash", hash},
          {"action", action},
          {"reward", out.extrinsic_reward},
          {"leakage_bits", out.leakage_bits},
          {"expected_leakage_bits", out.expected_leakage_bits},
          {"dt", out.delta_time},
          {"de", out.delta_energy},
          {"done", out.done}};
}

}  // namespace decoysl
