#include "decoysl/validation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "decoysl/agent.hpp"
#include "decoysl/errors.hpp"
#include "decoysl/mhsl.hpp"
#include "decoysl/powerstar.hpp"

namespace decoysl::validation {

using nlohmann::json;

SuiteOptions SuiteOptions::quick() {
  SuiteOptions o;
  o.mc_cases = 6;
  o.mc_samples = 20000;
  o.cor_cases = 4;
  o.grid = 200;
  o.split_cases = 6;
  o.fd_params = 10;
  o.mask_episodes = 300;
  o.ledger_episodes = 10;
  return o;
}

Reference reference_setup(std::uint64_t scenario_seed, std::size_t devices, std::size_t eavesdroppers) {
  Reference r;
  r.scenario = gen_scenario(scenario_seed, devices, eavesdroppers, 800.0);
  r.model = make_model(6, SizeProfile::pyramid(), scenario_seed, 4);
  return r;
}

namespace {

const Channel kChannel{1e6, 1e-12, 1.0};
constexpr double kPayload = 1e6;

template <typename F>
CheckResult timed(const std::string& name, F body) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  r.name = name;
  try {
    body(r);
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

double rel_diff(double a, double b) {
  const double scale = std::max(std::fabs(a), std::fabs(b));
  return scale > 0 ? std::fabs(a - b) / scale : 0.0;
}

struct PowerCase {
  HopGeometry geom;
  HopBudget budget;
};

PowerCase random_power_case(Rng& rng, std::size_t deceivers, std::size_t eavesdroppers) {
  PowerCase c;
  auto& g = c.geom;
  g.link_dist = rng.uniform(50.0, 200.0);
  for (std::size_t e = 0; e < eavesdroppers; ++e) {
    g.tx_eaves_dist.push_back(rng.uniform(50.0, 400.0));
    g.monitor_prob.push_back(rng.uniform(0.3, 0.9));
  }
  for (std::size_t d = 0; d < deceivers; ++d) {
    g.deceiver_rx_dist.push_back(rng.uniform(50.0, 300.0));
    std::vector<double> row;
    for (std::size_t e = 0; e < eavesdroppers; ++e) row.push_back(rng.uniform(50.0, 400.0));
    g.deceiver_eaves_dist.push_back(row);
  }
  g.delta_bits = kPayload;
  c.budget.payload_bits = kPayload;
  c.budget.time_budget = rng.uniform(1.0, 3.0);
  // Smallest sufficient transmit power, written out directly.
  const double snr = std::pow(2.0, kPayload / (c.budget.time_budget * kChannel.bandwidth_hz)) - 1.0;
  const double p_min = kChannel.bandwidth_hz * kChannel.noise_psd * snr * g.link_dist * g.link_dist / kChannel.rayleigh_o;
  c.budget.energy_budget = c.budget.time_budget * p_min * rng.uniform(1.5, 6.0);
  return c;
}

json solution_json(const PowerSolution& s) {
  return {{"p_tx", s.p_tx}, {"p_deceivers", s.p_deceivers}, {"feasible", s.feasible}, {"objective", s.objective}};
}

// Minimal synthetic batch drawn from random-policy play on the reference env.
struct GradFixture {
  std::vector<agent::Experience> experiences;
  std::vector<const agent::Experience*> batch;
  std::vector<icm::Transition> transitions;
};

GradFixture make_grad_fixture(SplitEnv& env, const icm::Icm& curiosity, const agent::TrainConfig& cfg,
                              std::uint64_t seed, std::size_t size) {
  GradFixture f;
  Rng rng(seed);
  agent::HistoryWindow history = agent::HistoryWindow::empty(cfg.history, env.state_dim());
  std::vector<double> hf = curiosity.zero_hidden(), hi = curiosity.zero_hidden();
  std::size_t episode = 0;
  env.reset(derive_seed(seed, episode));
  while (f.experiences.size() < size) {
    const auto s = env.encode_state(env.state());
    const auto valid = env.valid_actions(env.state());
    const std::size_t a = valid[rng.index(valid.size())];
    const StepOutcome out = env.step(a);
    const auto s2 = env.encode_state(out.next_state);
    const auto phi = curiosity.extract(s), phi2 = curiosity.extract(s2);
    const auto pred = curiosity.predict_next_feature(phi, a, hf);
    std::vector<double> hi_next;
    curiosity.predict_action_dist(phi, phi2, hi, valid, &hi_next);
    const double rc = icm::intrinsic_reward(phi2, pred.value);
    f.experiences.push_back({s, a, out.extrinsic_reward + cfg.zeta * rc, out.extrinsic_reward, s2, out.done, valid,
                             history, hf, hi});
    history.push(s, a);
    hf = pred.hidden;
    hi = hi_next;
    if (out.done) {
      env.reset(derive_seed(seed, ++episode));
      hf = curiosity.zero_hidden();
      hi = curiosity.zero_hidden();
    }
  }
  for (const auto& e : f.experiences) {
    f.batch.push_back(&e);
    f.transitions.push_back({e.state, e.next_state, e.action, e.valid, e.hidden_forward, e.hidden_inverse});
  }
  return f;
}

// Zero-initialized heads make most upstream gradients vanish; give them
// small random values so the check exercises every path.
void jitter_zero_params(nn::ParamStore& ps, Rng& rng) {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& v = ps.value(i).values;
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) {
      for (double& x : v) x = rng.uniform(-0.1, 0.1);
      ps.touch(i);
    }
  }
}

// Protocol rules stated on the decoded action, independent of the mask code.
std::string protocol_violation(const EnvState& s, const Action& a, std::size_t S, std::size_t L, std::size_t U) {
  const std::size_t n = s.step_idx;
  auto device_index = [](NodeId id) -> std::optional<std::size_t> {
    if (id.kind == NodeKind::Device) return id.index;
    return std::nullopt;
  };
  std::optional<std::size_t> tx, rx;
  if (n == 1) {
    if (a.family != ActionFamily::Select) return "step 1 must select the first trainer";
    if (a.receiver >= U) return "unknown device";
    if (a.cut < 1 || a.cut + (S - 1) > L) return "first cut leaves too few layers";
    return "";
  }
  if (n < S) {
    if (a.family != ActionFamily::ForwardHop) return "expected a forward hop";
    if (a.receiver >= U || s.assignment[a.receiver] != 0) return "receiver already trains a segment";
    const std::size_t used = s.boundaries.back();
    if (a.cut < 1 || used + a.cut + (S - n) > L) return "cut leaves too few layers";
    tx = device_index(s.chain.back());
    rx = a.receiver;
  } else if (n == S) {
    if (a.family != ActionFamily::ServerHop) return "expected the server hop";
    tx = device_index(s.chain.back());
  } else {
    if (a.family != ActionFamily::BackwardHop) return "expected a backward hop";
    const std::size_t k = 2 * S - n + 1;
    if (a.backward_receiver != k - 1) return "backward hop skips the chain";
    tx = device_index(s.chain[k - 1]);
    rx = device_index(s.chain[k - 2]);
  }
  if (a.deceivers.size() > 2) return "too many deceivers";
  for (std::size_t d : a.deceivers) {
    if (d >= U) return "unknown deceiver";
    if ((tx && d == *tx) || (rx && d == *rx)) return "deceiver is an endpoint of the hop";
  }
  for (std::size_t i = 1; i < a.deceivers.size(); ++i)
    if (a.deceivers[i] <= a.deceivers[i - 1]) return "deceiver subset not canonical";
  return "";
}

// P(tx strength beats every deceiver) for independent exponential received
// powers, by inclusion-exclusion over deceiver subsets. Diagnostic only.
double exact_race_capture(double tx_mean, const std::vector<double>& deceiver_means) {
  if (!(tx_mean > 0)) return 0.0;
  const std::size_t n = deceiver_means.size();
  double p = 0.0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    double rate = 1.0 / tx_mean;
    int sign = 1;
    for (std::size_t d = 0; d < n; ++d)
      if (mask >> d & 1) {
        rate += 1.0 / deceiver_means[d];
        sign = -sign;
      }
    p += sign * (1.0 / tx_mean) / rate;
  }
  return p;
}

double exact_race_leakage(const std::vector<Hop>& hops, const Scenario& scn) {
  double total = 0.0;
  for (const auto& h : hops)
    for (std::size_t e = 0; e < scn.eavesdroppers.size(); ++e) {
      const Position ep = scn.eavesdroppers[e].position;
      const double tx = h.tx.tx_power / std::pow(distance(scn.position_of(h.tx.tx), ep), 2);
      std::vector<double> ds;
      for (const auto& d : h.tx.deceivers) ds.push_back(d.power / std::pow(distance(scn.position_of(d.node), ep), 2));
      total += exact_race_capture(tx, ds) * scn.eavesdroppers[e].monitor_prob * delta(h.tx, h.segment);
    }
  return total;
}

}  // namespace

CheckResult check_capture_mc(const SuiteOptions& o) {
  return timed("capture_mc", [&](CheckResult& r) {
    std::size_t failures = 0;
    json cases = json::array();
    for (std::size_t i = 0; i < o.mc_cases; ++i) {
      Rng rng(derive_seed(o.seed, 100 + i));
      const std::size_t E = 1 + i % 3;
      const std::size_t nd = 1 + (i / 3) % 3;
      Scenario scn = gen_scenario(derive_seed(o.seed, 200 + i), 6, E, 800.0);
      for (auto& e : scn.eavesdroppers) e.monitor_prob = rng.uniform(0.3, 0.9);
      const ModelSpec model = make_model(6, SizeProfile::pyramid(), derive_seed(o.seed, 250 + i), 3);
      std::vector<Hop> hops;
      auto make_hop = [&](NodeId tx, NodeId rx, std::size_t first_deceiver, Segment seg) {
        TransmissionSpec t;
        t.tx = tx;
        t.rx = rx;
        t.payload_bits = seg.out_bits;
        t.tx_power = rng.uniform(0.05, 0.4);
        for (std::size_t d = 0; d < nd; ++d) t.deceivers.push_back({NodeId::device(first_deceiver + d), rng.uniform(0.05, 0.4)});
        hops.push_back({t, seg});
      };
      make_hop(NodeId::device(0), NodeId::device(1), 2, make_segment(model, 0, 2));
      make_hop(NodeId::device(1), NodeId::server(), 3, make_segment(model, 2, 4));
      const double closed = expected_leakage_closed(hops, scn).expected_bits;
      const McEstimate mc = mc_leakage_oracle(hops, scn, o.mc_samples, derive_seed(o.seed, 300 + i));
      const double diff = std::fabs(mc.mean - closed);
      const double exact = exact_race_leakage(hops, scn);
      const bool ok = mc.stderr_bits > 0 ? diff <= 4.0 * mc.stderr_bits : diff <= 1e-12 * std::fabs(closed);
      failures += !ok;
      cases.push_back({{"eavesdroppers", E}, {"deceivers", nd}, {"closed", closed}, {"mc_mean", mc.mean},
                       {"stderr", mc.stderr_bits}, {"z", mc.stderr_bits > 0 ? diff / mc.stderr_bits : 0.0},
                       {"exact_race", exact},
                       {"z_exact", mc.stderr_bits > 0 ? std::fabs(mc.mean - exact) / mc.stderr_bits : 0.0},
                       {"pass", ok}});
    }
    r.data = {{"cases", cases}, {"samples", o.mc_samples}};
    r.pass = failures == 0;
    r.detail = fmt::format("{} of {} cases within 4 stderr", o.mc_cases - failures, o.mc_cases);
  });
}

CheckResult check_powers_one_deceiver(const SuiteOptions& o) {
  return timed("powers_one_deceiver", [&](CheckResult& r) {
    std::size_t failures = 0;
    double worst_residual = 0.0, worst_gap = -INFINITY;
    json cases = json::array();
    for (std::size_t i = 0; i < o.cor_cases; ++i) {
      Rng rng(derive_seed(o.seed, 400 + i));
      const PowerCase c = random_power_case(rng, 1, 1 + i % 2);
      PowerSolution sol = cor1_powers(c.geom, kChannel, c.budget);
      if (o.corrupt) {
        sol.p_tx *= 1.001;
        sol.objective = hop_objective(c.geom, sol.p_tx, sol.p_deceivers);
      }
      const auto res = residuals(c.geom, kChannel, c.budget, RateModel::WithInterference, sol.p_tx, sol.p_deceivers);
      const PowerSolution grid = grid_oracle(c.geom, kChannel, c.budget, o.grid, RateModel::WithInterference);
      const double residual = std::max(res.time, res.energy);
      const double gap = grid.feasible ? (sol.objective - grid.objective) / grid.objective : INFINITY;
      const bool ok = sol.feasible && grid.feasible && residual <= 1e-9 && gap <= 1e-3;
      failures += !ok;
      worst_residual = std::max(worst_residual, residual);
      worst_gap = std::max(worst_gap, gap);
      cases.push_back({{"closed", solution_json(sol)}, {"grid", solution_json(grid)}, {"residual_time", res.time},
                       {"residual_energy", res.energy}, {"relative_gap", gap}, {"pass", ok}});
    }
    r.data = {{"cases", cases}, {"grid", o.grid}};
    r.pass = failures == 0;
    r.detail = fmt::format("{} of {} cases pass; worst residual {:.3g}, worst relative gap {:.3g}",
                           o.cor_cases - failures, o.cor_cases, worst_residual, worst_gap);
  });
}

CheckResult check_powers_zero_energy(const SuiteOptions& o) {
  return timed("powers_zero_energy", [&](CheckResult& r) {
    std::size_t failures = 0;
    for (std::size_t i = 0; i < o.cor_cases; ++i) {
      Rng rng(derive_seed(o.seed, 400 + i));
      PowerCase c = random_power_case(rng, 1, 1 + i % 2);
      c.budget.energy_budget = 0.0;
      const PowerSolution sol = cor1_powers(c.geom, kChannel, c.budget);
      const PowerSolution grid = grid_oracle(c.geom, kChannel, c.budget, std::min<std::size_t>(o.grid, 200),
                                             RateModel::WithInterference);
      const bool ok = !feasibility(c.budget, c.geom, kChannel) && !sol.feasible && sol.p_deceivers[0] <= 0.0 &&
                      !grid.feasible;
      failures += !ok;
    }
    r.pass = failures == 0;
    r.detail = fmt::format("{} of {} zero-energy cases flagged infeasible", o.cor_cases - failures, o.cor_cases);
  });
}

CheckResult check_powers_interference_free(const SuiteOptions& o) {
  return timed("powers_interference_free", [&](CheckResult& r) {
    std::size_t failures = 0;
    double worst_ptx = 0.0, worst_residual = -INFINITY;
    for (std::size_t i = 0; i < o.cor_cases; ++i) {
      Rng rng(derive_seed(o.seed, 500 + i));
      const PowerCase c = random_power_case(rng, 1 + i % 3, 1);
      const PowerSolution sol = cor2_powers(c.geom, kChannel, c.budget);
      const double snr = std::pow(2.0, c.budget.payload_bits / (c.budget.time_budget * kChannel.bandwidth_hz)) - 1.0;
      const double expect = kChannel.bandwidth_hz * kChannel.noise_psd * snr * c.geom.link_dist * c.geom.link_dist /
                            kChannel.rayleigh_o;
      const auto res = residuals(c.geom, kChannel, c.budget, RateModel::InterferenceFree, sol.p_tx, sol.p_deceivers);
      const double ptx_err = rel_diff(sol.p_tx, expect);
      const double residual = std::max(res.time, res.energy);
      const bool ok = sol.feasible && ptx_err <= 1e-12 && residual <= 1e-9;
      failures += !ok;
      worst_ptx = std::max(worst_ptx, ptx_err);
      worst_residual = std::max(worst_residual, residual);
    }
    r.pass = failures == 0;
    r.detail = fmt::format("{} of {} cases pass; worst p_tx error {:.3g}, worst residual {:.3g}",
                           o.cor_cases - failures, o.cor_cases, worst_ptx, worst_residual);
  });
}

CheckResult check_powers_equal_split(const SuiteOptions& o) {
  return timed("powers_equal_split", [&](CheckResult& r) {
    std::size_t failures = 0;
    json cases = json::array();
    for (std::size_t i = 0; i < o.cor_cases; ++i) {
      Rng rng(derive_seed(o.seed, 500 + i));
      const PowerCase c = random_power_case(rng, 1 + i % 3, 1);
      const PowerSolution sol = cor2_powers(c.geom, kChannel, c.budget);
      const PowerSolution grid = grid_oracle(c.geom, kChannel, c.budget, o.grid, RateModel::InterferenceFree);
      const double gap = grid.feasible ? (sol.objective - grid.objective) / grid.objective : INFINITY;
      const bool ok = grid.feasible && gap <= 1e-3;
      failures += !ok;
      cases.push_back({{"deceivers", c.geom.deceiver_count()}, {"closed", solution_json(sol)},
                       {"grid", solution_json(grid)}, {"relative_gap", gap}, {"pass", ok}});
    }
    r.data = {{"cases", cases}, {"grid", o.grid}};
    r.pass = failures == 0;
    r.detail = fmt::format("{} of {} cases at or below the equal-power grid optimum", o.cor_cases - failures,
                           o.cor_cases);
  });
}

CheckResult check_split_invisibility(const SuiteOptions& o) {
  return timed("split_invisibility", [&](CheckResult& r) {
    double worst = 0.0;
    for (std::size_t i = 0; i < o.split_cases; ++i) {
      Rng rng(derive_seed(o.seed, 600 + i));
      const std::size_t depth = 2 + rng.index(5);
      std::vector<std::size_t> dims;
      for (std::size_t d = 0; d <= depth; ++d) dims.push_back(1 + rng.index(6));
      const auto layers = mhsl::make_dense_layers(dims, derive_seed(o.seed, 650 + i));
      std::vector<std::size_t> cuts;
      for (std::size_t c = 1; c < depth; ++c)
        if (rng.bernoulli(0.5)) cuts.push_back(c);
      const auto segments = mhsl::split_layers(layers, cuts);
      const std::size_t rows = 1 + rng.index(5);
      Matrix x(rows, dims.front()), y(rows, dims.back());
      for (double& v : x.values) v = rng.uniform(-1.0, 1.0);
      for (double& v : y.values) v = rng.uniform(-1.0, 1.0);

      const auto fwd = mhsl::forward_chain(segments, x);
      const Matrix& z = fwd.outputs.back().values;
      const double loss = mhsl::compute_loss(z, y);
      const auto grads = mhsl::backward_chain(fwd.cache, segments, mhsl::loss_gradient(z, y));
      const auto oracle = mhsl::monolithic_oracle(layers, x, y);
      worst = std::max(worst, rel_diff(loss, oracle.loss));
      std::size_t li = 0;
      auto tensor_err = [](const std::vector<double>& a, const std::vector<double>& b) {
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
          num = std::max(num, std::fabs(a[k] - b[k]));
          den = std::max(den, std::fabs(b[k]));
        }
        return den > 0 ? num / den : num;
      };
      for (const auto& sg : grads)
        for (const auto& lg : sg.layers) {
          worst = std::max(worst, tensor_err(lg.weight.values, oracle.grads[li].weight.values));
          worst = std::max(worst, tensor_err(lg.bias, oracle.grads[li].bias));
          ++li;
        }
      if (li != layers.size()) throw std::logic_error("gradient count differs from layer count");
    }
    r.pass = worst <= 1e-10;
    r.data = {{"worst_relative_error", worst}};
    r.detail = fmt::format("worst relative error {:.3g} over {} models", worst, o.split_cases);
  });
}

FdReport fd_check(nn::ParamStore& ps, const std::vector<std::size_t>& ids,
                  const std::function<nn::Var(nn::Tape&)>& loss, std::size_t count, double step, Rng& rng) {
  if (ids.empty()) throw std::invalid_argument("fd_check needs parameters");
  auto eval = [&] {
    nn::Tape t;
    return t.value(loss(t)).values[0];
  };
  ps.zero_grad();
  {
    nn::Tape t;
    nn::Var l = loss(t);
    t.backward(l);
  }
  FdReport rep;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t id = ids[rng.index(ids.size())];
    const std::size_t e = rng.index(ps.value(id).size());
    const double analytic = ps.grad(id).values[e];
    const double orig = ps.value(id).values[e];
    ps.value(id).values[e] = orig + step;
    ps.touch(id);
    const double up = eval();
    ps.value(id).values[e] = orig - step;
    ps.touch(id);
    const double down = eval();
    ps.value(id).values[e] = orig;
    ps.touch(id);
    const double numeric = (up - down) / (2.0 * step);
    // Central differences at step 1e-6 on an O(1) loss carry ~1e-10 of
    // rounding noise, so gradients below 1e-5 are compared on that scale.
    const double err = std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), 1e-5});
    rep.max_rel_err = std::max(rep.max_rel_err, err);
    rep.samples.push_back({{"param", ps.name(id)}, {"index", e}, {"analytic", analytic}, {"numeric", numeric}, {"rel_err", err}});
    ++rep.checked;
  }
  return rep;
}

CheckResult check_gradients(const std::string& net, const SuiteOptions& o) {
  return timed("grad_" + net, [&](CheckResult& r) {
    Reference ref = reference_setup();
    SplitEnv env(ref.scenario, ref.model, ref.env);
    agent::TrainConfig cfg;
    cfg.seed = derive_seed(o.seed, 700);
    agent::IcmCaAgent ag(env.state_dim(), env.actions().size(), cfg);
    Rng rng(derive_seed(o.seed, 701));
    jitter_zero_params(ag.actor().params(), rng);
    jitter_zero_params(ag.critic().params(), rng);
    jitter_zero_params(ag.curiosity().params(), rng);
    const GradFixture fx = make_grad_fixture(env, ag.curiosity(), cfg, derive_seed(o.seed, 702), 8);
    auto& cur = ag.curiosity();
    FdReport rep;
    if (net == "actor") {
      rep = fd_check(ag.actor().params(), ag.actor().all_ids(), [&](nn::Tape& t) { return ag.actor_loss(t, fx.batch); },
                     o.fd_params, o.fd_step, rng);
    } else if (net == "critic") {
      rep = fd_check(ag.critic().params(), ag.critic().all_ids(),
                     [&](nn::Tape& t) { return ag.critic_loss(t, fx.batch); }, o.fd_params, o.fd_step, rng);
    } else if (net == "icm_extractor") {
      rep = fd_check(cur.params(), cur.extractor_ids(), [&](nn::Tape& t) { return cur.combined_loss(t, fx.transitions); },
                     o.fd_params, o.fd_step, rng);
    } else if (net == "icm_forward") {
      rep = fd_check(cur.params(), cur.forward_ids(), [&](nn::Tape& t) { return cur.forward_loss(t, fx.transitions); },
                     o.fd_params, o.fd_step, rng);
    } else if (net == "icm_inverse") {
      rep = fd_check(cur.params(), cur.inverse_ids(), [&](nn::Tape& t) { return cur.inverse_loss(t, fx.transitions); },
                     o.fd_params, o.fd_step, rng);
    } else {
      throw std::invalid_argument("unknown network " + net);
    }
    r.pass = rep.checked == o.fd_params && rep.max_rel_err <= 1e-4;
    r.data = {{"samples", rep.samples}, {"max_rel_err", rep.max_rel_err}, {"step", o.fd_step}};
    r.detail = fmt::format("max relative error {:.3g} over {} parameters", rep.max_rel_err, rep.checked);
  });
}

CheckResult check_mask_and_rewards(const SuiteOptions& o) {
  return timed("mask_and_reward_bounds", [&](CheckResult& r) {
    Reference ref = reference_setup();
    SplitEnv env(ref.scenario, ref.model, ref.env);
    const std::size_t S = ref.env.segments, L = ref.model.layer_count(), U = ref.scenario.devices.size();
    double max_bits = 0.0, max_weight = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
      max_weight = std::max(max_weight, ref.model.layers[i].sensitivity_weight);
      if (i + 1 < L)
        max_bits = std::max({max_bits, ref.model.layers[i].boundary_activation_bits,
                             ref.model.layers[i].boundary_gradient_bits});
    }
    const double delta_max_norm = max_bits * max_weight / env.leak_normalizer();
    const double lower = -(static_cast<double>(ref.scenario.eavesdroppers.size()) * delta_max_norm +
                           ref.env.omega_energy + ref.env.omega_time);
    Rng rng(derive_seed(o.seed, 800));
    std::size_t violations = 0, reward_out = 0, probes = 0, probes_rejected = 0, steps = 0, bad_plans = 0;
    std::string first_violation;
    double min_reward = 0.0;
    for (std::size_t ep = 0; ep < o.mask_episodes; ++ep) {
      env.reset(derive_seed(o.seed, 5000 + ep));
      for (;;) {
        const auto valid = env.valid_actions(env.state());
        for (std::size_t id : valid) {
          const std::string why = protocol_violation(env.state(), env.actions().decode(id), S, L, U);
          if (!why.empty()) {
            if (violations++ == 0) first_violation = env.actions().decode(id).describe(ref.env.power_levels) + ": " + why;
          }
        }
        // Probe one masked id; it must be rejected without changing state.
        const std::size_t probe = rng.index(env.actions().size());
        if (!std::binary_search(valid.begin(), valid.end(), probe)) {
          ++probes;
          const std::size_t before = env.state().step_idx;
          try {
            env.step(probe);
          } catch (const InvalidAction&) {
            probes_rejected += env.state().step_idx == before;
          }
        }
        const StepOutcome out = env.step(valid[rng.index(valid.size())]);
        ++steps;
        min_reward = std::min(min_reward, out.extrinsic_reward);
        if (!(out.extrinsic_reward >= lower && out.extrinsic_reward <= 0.0)) ++reward_out;
        if (out.done) break;
      }
      bad_plans += !validate_plan(env.plan(), ref.model);
    }
    r.pass = violations == 0 && reward_out == 0 && probes == probes_rejected && bad_plans == 0;
    r.data = {{"episodes", o.mask_episodes}, {"steps", steps}, {"protocol_violations", violations},
              {"first_violation", first_violation}, {"rewards_out_of_bound", reward_out}, {"lower_bound", lower},
              {"min_reward", min_reward}, {"masked_probes", probes}, {"masked_probes_rejected", probes_rejected},
              {"invalid_plans", bad_plans}};
    r.detail = fmt::format("{} episodes, {} protocol violations, {} rewards outside [{:.6g}, 0], {}/{} masked probes rejected",
                           o.mask_episodes, violations, reward_out, lower, probes_rejected, probes);
  });
}

CheckResult check_ledger(const SuiteOptions& o) {
  return timed("ledger_audit", [&](CheckResult& r) {
    Reference ref = reference_setup();
    SplitEnv env(ref.scenario, ref.model, ref.env);
    Rng rng(derive_seed(o.seed, 900));
    std::size_t mismatches = 0;
    for (std::size_t ep = 0; ep < o.ledger_episodes; ++ep) {
      env.reset(derive_seed(o.seed, 9000 + ep));
      for (;;) {
        const auto valid = env.valid_actions(env.state());
        if (env.step(valid[rng.index(valid.size())]).done) break;
      }
      std::vector<NodeId> chain = env.state().chain;
      std::vector<TransmissionSpec> txs;
      for (const auto& h : env.hops()) txs.push_back(h.tx);
      const CostLedger audit = episode_totals(env.plan(), chain, txs, ref.scenario);
      mismatches += !(audit.time_spent() == env.ledger().time_spent() &&
                      audit.energy_spent() == env.ledger().energy_spent());
    }
    r.pass = mismatches == 0;
    r.detail = fmt::format("{} of {} episodes bit-identical", o.ledger_episodes - mismatches, o.ledger_episodes);
  });
}

const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names{
      "capture_mc",      "powers_one_deceiver", "powers_zero_energy", "powers_interference_free", "powers_equal_split",
      "split_invisibility", "grad_actor",     "grad_critic",     "grad_icm_extractor", "grad_icm_forward",
      "grad_icm_inverse", "mask_and_reward_bounds", "ledger_audit"};
  return names;
}

CheckResult run_check(const std::string& name, const SuiteOptions& o) {
  if (name == "capture_mc") return check_capture_mc(o);
  if (name == "powers_one_deceiver") return check_powers_one_deceiver(o);
  if (name == "powers_zero_energy") return check_powers_zero_energy(o);
  if (name == "powers_interference_free") return check_powers_interference_free(o);
  if (name == "powers_equal_split") return check_powers_equal_split(o);
  if (name == "split_invisibility") return check_split_invisibility(o);
  if (name.rfind("grad_", 0) == 0) return check_gradients(name.substr(5), o);
  if (name == "mask_and_reward_bounds") return check_mask_and_rewards(o);
  if (name == "ledger_audit") return check_ledger(o);
  throw std::invalid_argument("unknown check " + name);
}

std::vector<CheckResult> run_suite(const SuiteOptions& o, const std::vector<std::string>& names) {
  std::vector<CheckResult> out;
  for (const auto& n : names) out.push_back(run_check(n, o));
  return out;
}

json suite_report(const std::vector<CheckResult>& results) {
  json checks = json::array();
  bool all = true;
  for (const auto& r : results) {
    all = all && r.pass;
    checks.push_back({{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}, {"data", r.data}});
  }
  return {{"pass", all}, {"checks", checks}};
}

}  // namespace decoysl::validation
