// Acceptance binary: `acceptance <criterion>` prints one PASS/FAIL line for
// the criterion (plus supporting detail) and exits nonzero on failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "decoysl/experiment.hpp"
#include "decoysl/validation.hpp"

using namespace decoysl;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int report(int criterion, bool pass, const std::string& what) {
  fmt::print("criterion {}: {} ({})\n", criterion, pass ? "PASS" : "FAIL", what);
  std::fflush(stdout);
  return pass ? 0 : 1;
}

bool run_checks(const std::vector<std::string>& names, std::string& summary) {
  const validation::SuiteOptions opts;
  bool pass = true;
  for (const auto& n : names) {
    const auto r = validation::run_check(n, opts);
    fmt::print("  {}: {} [{:.1f} s] {}\n", n, r.pass ? "pass" : "fail", r.seconds, r.detail);
    if (!r.pass && r.data.contains("cases"))
      for (const auto& c : r.data["cases"]) fmt::print("    {}\n", c.dump());
    if (!r.pass) summary += (summary.empty() ? "" : ", ") + n + " failed";
    pass = pass && r.pass;
  }
  if (pass) summary = "all checks pass";
  return pass;
}

// --- criterion 7: independent cost ledger -----------------------------------

struct Totals {
  double time = 0.0;
  double energy = 0.0;
};

Position where(const Scenario& s, NodeId n) {
  if (n.kind == NodeKind::Server) return s.server.position;
  if (n.kind == NodeKind::Device) return s.devices[n.index].position;
  return s.eavesdroppers[n.index].position;
}

const ComputeProfile& cpu(const Scenario& s, NodeId n) {
  return n.kind == NodeKind::Server ? s.server.compute : s.devices[n.index].compute;
}

double gain(const Scenario& s, NodeId a, NodeId b) {
  const Position p = where(s, a), q = where(s, b);
  const double d = std::hypot(p.x - q.x, p.y - q.y);
  return s.rayleigh_o / (d * d);
}

struct Seg {
  double params = 0.0, fwd = 0.0, bwd = 0.0, out = 0.0, grad_in = 0.0;
};

Seg seg_of(const ModelSpec& m, std::size_t first, std::size_t end) {
  Seg g;
  for (std::size_t i = first; i < end; ++i) {
    g.params += m.layers[i].param_bits;
    g.fwd += m.layers[i].fwd_flop_coeff;
    g.bwd += m.layers[i].bwd_flop_coeff;
  }
  g.out = m.layers[end - 1].boundary_activation_bits;
  g.grad_in = first == 0 ? m.input_bits : m.layers[first - 1].boundary_gradient_bits;
  return g;
}

struct Entry {
  double t_tx = 0, t_fwd = 0, t_bwd = 0, e_cmp = 0, e_tx = 0, e_dec = 0;
};

void hop(Entry& e, const Scenario& s, const TransmissionSpec& t, double payload) {
  double interference = 0.0;
  double dec_sum = 0.0;
  for (const auto& d : t.deceivers) interference += d.power * gain(s, d.node, t.rx);
  for (const auto& d : t.deceivers) dec_sum += d.power;
  const double signal = t.tx_power * gain(s, t.tx, t.rx);
  const double rate = s.bandwidth_hz * std::log2(1.0 + signal / (interference + s.bandwidth_hz * s.noise_psd));
  e.t_tx = payload / rate;
  e.e_tx = t.tx_power * e.t_tx;
  e.e_dec = dec_sum * e.t_tx;
}

Entry fwd_entry(const Seg& g, const ComputeProfile& c) {
  Entry e;
  e.t_fwd = c.cycles_per_bit * g.fwd * g.out * g.params / c.cpu_hz;
  e.e_cmp = c.energy_coeff * c.cpu_hz * c.cpu_hz * g.fwd * g.params;
  return e;
}

Entry bwd_entry(const Seg& g, const ComputeProfile& c) {
  Entry e;
  e.t_bwd = c.cycles_per_bit * g.bwd * g.grad_in * g.params / c.cpu_hz;
  e.e_cmp = c.energy_coeff * c.cpu_hz * c.cpu_hz * g.bwd * g.params;
  return e;
}

void book(Totals& t, const Entry& e) {
  t.time += e.t_tx + e.t_fwd + e.t_bwd;
  t.energy += e.e_cmp + e.e_tx + e.e_dec;
}

// Recomputes the totals from the chain, cut points and chosen powers.
Totals audit(const Scenario& s, const ModelSpec& m, const std::vector<NodeId>& chain,
             const std::vector<std::size_t>& ends, const std::vector<Hop>& hops, bool& payload_ok) {
  const std::size_t S = chain.size();
  std::vector<Seg> segs;
  for (std::size_t k = 0; k < S; ++k) segs.push_back(seg_of(m, k == 0 ? 0 : ends[k - 1], ends[k]));
  Totals t;
  for (std::size_t k = 0; k + 1 < S; ++k) {
    Entry e = fwd_entry(segs[k], cpu(s, chain[k]));
    payload_ok = payload_ok && hops[k].tx.payload_bits == segs[k].out;
    hop(e, s, hops[k].tx, segs[k].out);
    book(t, e);
  }
  book(t, fwd_entry(segs[S - 1], cpu(s, chain[S - 1])));
  for (std::size_t k = S - 1; k >= 1; --k) {
    const Hop& h = hops[S - 1 + (S - 1 - k)];
    Entry e = bwd_entry(segs[k], cpu(s, chain[k]));
    payload_ok = payload_ok && h.tx.payload_bits == segs[k].grad_in;
    hop(e, s, h.tx, segs[k].grad_in);
    book(t, e);
  }
  book(t, bwd_entry(segs[0], cpu(s, chain[0])));
  return t;
}

int criterion7() {
  const auto ref = validation::reference_setup();
  SplitEnv env(ref.scenario, ref.model, ref.env);
  Rng rng(77);
  std::size_t exact = 0;
  bool payload_ok = true;
  const std::size_t episodes = 50;
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    env.reset(1000 + ep);
    for (;;) {
      const auto valid = env.valid_actions(env.state());
      if (env.step(valid[rng.index(valid.size())]).done) break;
    }
    const Totals t = audit(ref.scenario, ref.model, env.state().chain, env.state().boundaries, env.hops(), payload_ok);
    exact += t.time == env.ledger().time_spent() && t.energy == env.ledger().energy_spent();
  }
  std::string lib;
  const bool lib_ok = run_checks({"ledger_audit"}, lib);
  return report(7, exact == episodes && payload_ok && lib_ok,
                fmt::format("{} of {} episodes bit-identical to the independent ledger; payloads {}; {}", exact,
                            episodes, payload_ok ? "match" : "differ", lib));
}

// --- criterion 8: training efficacy -------------------------------------------

int criterion8() {
  experiment::ExperimentConfig cfg;  // reference scenario, 200 episodes
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int a = 0, b = 0, c = 0;
  double slowest = 0.0;
  for (std::uint64_t seed : seeds) {
    struct Out {
      agent::RunResult r;
      double secs;
    };
    auto run = [&](experiment::AgentKind k) {
      SplitEnv env(cfg.build_scenario(), cfg.build_model(), cfg.env);
      const auto t0 = Clock::now();
      Out o{experiment::run_agent(cfg, k, seed, env), 0.0};
      o.secs = seconds_since(t0);
      slowest = std::max(slowest, o.secs);
      return o;
    };
    const Out icm = run(experiment::AgentKind::IcmCa);
    const Out noicm = run(experiment::AgentKind::NoIcm);
    const Out q = run(experiment::AgentKind::QLearning);
    const bool wa = icm.r.final_mean_reward() >= noicm.r.final_mean_reward();
    const bool wb = icm.r.distinct_states_window >= noicm.r.distinct_states_window;
    const bool wc = icm.r.final_mean_leakage() <= q.r.final_mean_leakage();
    a += wa;
    b += wb;
    c += wc;
    fmt::print("  seed {}: reward icm {:.4f} vs no-icm {:.4f} [{}]; distinct states {} vs {} [{}]; "
               "leakage icm {:.4g} vs q {:.4g} bits [{}]; time {:.1f} s / {:.1f} s / {:.2f} s\n",
               seed, icm.r.final_mean_reward(), noicm.r.final_mean_reward(), wa ? "ok" : "no",
               icm.r.distinct_states_window, noicm.r.distinct_states_window, wb ? "ok" : "no",
               icm.r.final_mean_leakage(), q.r.final_mean_leakage(), wc ? "ok" : "no", icm.secs, noicm.secs, q.secs);
    std::fflush(stdout);
  }
  const bool pass = a >= 3 && b == 5 && c >= 3 && slowest <= 600.0;
  return report(8, pass,
                fmt::format("(a) reward {}/5 need 3; (b) exploration {}/5 need 5; (c) leakage {}/5 need 3; "
                            "slowest run {:.1f} s of 600",
                            a, b, c, slowest));
}

// --- criterion 9: determinism ---------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int criterion9() {
  experiment::ExperimentConfig cfg = experiment::ExperimentConfig::from_kv(
      KvConfig::parse("episodes = 5\nseeds = [1, 2]\nexploration_window = 2\n"));
  const fs::path root = fs::temp_directory_path() / "decoysl_acceptance9";
  fs::remove_all(root);
  std::size_t compared = 0, equal = 0;
  const auto a = experiment::cmd_train(cfg, root / "a");
  const auto b = experiment::cmd_train(cfg, root / "b");
  for (std::size_t i = 0; i < a.files.size() && i < b.files.size(); ++i) {
    ++compared;
    equal += slurp(a.files[i]) == slurp(b.files[i]);
  }
  const bool same_count = a.files.size() == b.files.size();

  cfg.sweep_axis = experiment::SweepAxis::MonitorProb;
  cfg.sweep_agents = {experiment::AgentKind::IcmCa, experiment::AgentKind::QLearning};
  cfg.train.episodes = 3;
  ++compared;
  equal += experiment::sweep_csv(experiment::cmd_sweep(cfg)) == experiment::sweep_csv(experiment::cmd_sweep(cfg));

  const auto quick = validation::SuiteOptions::quick();
  ++compared;
  equal += experiment::cmd_validate(quick).dump() == experiment::cmd_validate(quick).dump();
  fs::remove_all(root);
  return report(9, same_count && equal == compared,
                fmt::format("{} of {} artifacts byte-identical across repeated runs (train, sweep, validate)", equal,
                            compared));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <criterion 1-9>\n");
    return 2;
  }
  const int c = std::atoi(argv[1]);
  std::string summary;
  switch (c) {
    case 1: {
      const auto t0 = Clock::now();
      const bool pass = run_checks({"capture_mc"}, summary);
      const double secs = seconds_since(t0);
      return report(1, pass && secs <= 60.0, fmt::format("{}; {:.1f} s of 60", summary, secs));
    }
    case 2: return report(2, run_checks({"powers_one_deceiver", "powers_zero_energy"}, summary), summary);
    case 3: return report(3, run_checks({"powers_interference_free", "powers_equal_split"}, summary), summary);
    case 4: return report(4, run_checks({"split_invisibility"}, summary), summary);
    case 5:
      return report(5,
                    run_checks({"grad_actor", "grad_critic", "grad_icm_extractor", "grad_icm_forward",
                                "grad_icm_inverse"},
                               summary),
                    summary);
    case 6: return report(6, run_checks({"mask_and_reward_bounds"}, summary), summary);
    case 7: return criterion7();
    case 8: return criterion8();
    case 9: return criterion9();
    default: std::fprintf(stderr, "unknown criterion %d\n", c); return 2;
  }
}
