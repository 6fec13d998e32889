#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "decoysl/errors.hpp"
#include "decoysl/experiment.hpp"
#include "decoysl/mhsl.hpp"
#include "decoysl/powerstar.hpp"

using namespace decoysl;
namespace fs = std::filesystem;

namespace {

experiment::ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  KvConfig kv = path.empty() ? KvConfig{} : KvConfig::load(path);
  std::string text;
  for (const auto& o : overrides) text += o + "\n";
  kv.merge(KvConfig::parse(text));
  experiment::ExperimentConfig cfg = experiment::ExperimentConfig::from_kv(kv);
  if (!path.empty()) {
    const fs::path base = fs::path(path).parent_path();
    for (std::string* f : {&cfg.scenario_file, &cfg.model_file})
      if (!f->empty() && fs::path(*f).is_relative()) *f = (base / *f).string();
  }
  cfg.validate();
  return cfg;
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

int run_validate(const validation::SuiteOptions& opts, const std::vector<std::string>& only, const std::string& report) {
  std::vector<validation::CheckResult> results;
  for (const auto& name : only.empty() ? validation::check_names() : only) {
    results.push_back(validation::run_check(name, opts));
    const auto& r = results.back();
    fmt::print("{:<24} {}  {}\n", r.name, r.pass ? "PASS" : "FAIL", r.detail);
    std::fflush(stdout);
  }
  const auto json = validation::suite_report(results);
  if (!report.empty()) write_file(report, json.dump(2) + "\n");
  bool ok = json["pass"].get<bool>();
  for (const auto& r : results)
    if (!r.pass) fmt::print(stderr, "failed check: {}\n", r.name);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deceptive-signal multi-hop split learning: theory checks, training and sweeps"};
  app.require_subcommand(1);

  // validate
  auto* val = app.add_subcommand("validate", "Run the oracle suite; nonzero exit on any failed check");
  bool quick = false, corrupt = false;
  std::uint64_t val_seed = 2024;
  std::vector<std::string> only;
  std::string report;
  val->add_flag("--quick", quick, "Reduced case counts");
  val->add_flag("--corrupt", corrupt, "Negative control: perturb the one-deceiver power closed form");
  val->add_option("--seed", val_seed, "Suite seed");
  val->add_option("--check", only, "Run only these checks")->check(CLI::IsMember(validation::check_names()));
  val->add_option("--report", report, "Write the JSON report here (relative to $DECOYSL_OUT)");

  // train
  auto* tr = app.add_subcommand("train", "Train one agent per seed; writes metrics JSONL, reward CSV, checkpoints");
  std::string config_path, out_dir;
  std::vector<std::string> overrides;
  bool skip_validate = false;
  tr->add_option("-c,--config", config_path, "Experiment config (key = value)");
  tr->add_option("--set", overrides, "Override a config entry, e.g. --set episodes=50");
  tr->add_option("-o,--out", out_dir, "Output directory (default: output_dir from the config)");
  tr->add_flag("--skip-validate", skip_validate, "Skip the pre-training check gate");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Final-policy leakage per sweep point, averaged over seeds (CSV)");
  std::string sweep_out;
  sw->add_option("-c,--config", config_path, "Experiment config");
  sw->add_option("--set", overrides, "Override a config entry");
  sw->add_option("-o,--out", sweep_out, "CSV path (default: <output_dir>/sweep_<axis>.csv)");

  // show-plan
  auto* sp = app.add_subcommand("show-plan", "Greedy rollout of a checkpoint with per-hop expected leakage");
  std::string checkpoint;
  std::uint64_t episode_seed = 0;
  bool as_json = false;
  sp->add_option("-c,--config", config_path, "Experiment config used for training");
  sp->add_option("--set", overrides, "Override a config entry");
  sp->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  sp->add_option("--episode-seed", episode_seed, "Environment seed for the rollout");
  sp->add_flag("--json", as_json, "Print JSON instead of text");

  // oracle
  auto* orc = app.add_subcommand("oracle", "Monte-Carlo leakage next to the closed form for one random hop");
  std::uint64_t orc_seed = 1;
  std::size_t orc_deceivers = 1, orc_eaves = 1, orc_samples = 100000;
  orc->add_option("--seed", orc_seed);
  orc->add_option("--deceivers", orc_deceivers)->check(CLI::Range(0, 4));
  orc->add_option("--eavesdroppers", orc_eaves)->check(CLI::Range(1, 4));
  orc->add_option("--samples", orc_samples);

  // powers
  auto* pw = app.add_subcommand("powers", "Closed-form optimal powers against the grid oracle (CSV)");
  std::uint64_t pw_seed = 1;
  std::size_t pw_cases = 5, pw_grid = 1000;
  pw->add_option("--seed", pw_seed);
  pw->add_option("--cases", pw_cases);
  pw->add_option("--grid", pw_grid)->check(CLI::Range(2, 100000));

  // gen-scenario
  auto* gs = app.add_subcommand("gen-scenario", "Write a generated scenario (and optionally a model) as key = value");
  std::uint64_t gs_seed = 7, gs_model_seed = 7;
  std::size_t gs_devices = 6, gs_eaves = 2, gs_layers = 6, gs_segments = 4;
  double gs_area = 800.0;
  std::string gs_out, gs_model_out;
  gs->add_option("--seed", gs_seed);
  gs->add_option("--devices", gs_devices);
  gs->add_option("--eavesdroppers", gs_eaves);
  gs->add_option("--area", gs_area);
  gs->add_option("-o,--out", gs_out, "Scenario file")->required();
  gs->add_option("--model-out", gs_model_out, "Also write a model file");
  gs->add_option("--layers", gs_layers);
  gs->add_option("--segments", gs_segments);
  gs->add_option("--model-seed", gs_model_seed);

  // mhsl-demo
  auto* md = app.add_subcommand("mhsl-demo", "Split training of a toy regression; loss curve CSV on stdout");
  std::size_t md_steps = 200;
  double md_lr = 0.05;
  std::uint64_t md_seed = 1;
  md->add_option("--steps", md_steps);
  md->add_option("--lr", md_lr);
  md->add_option("--seed", md_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*val) {
      validation::SuiteOptions opts = quick ? validation::SuiteOptions::quick() : validation::SuiteOptions{};
      opts.seed = val_seed;
      opts.corrupt = corrupt;
      return run_validate(opts, only, report.empty() ? std::string{} : experiment::output_root(report).string());
    }
    if (*tr) {
      const auto cfg = load_config(config_path, overrides);
      if (!skip_validate) {
        fmt::print("pre-training checks (quick):\n");
        const std::vector<std::string> gate{"grad_actor", "grad_critic", "grad_icm_extractor", "grad_icm_forward",
                                            "grad_icm_inverse", "mask_and_reward_bounds", "ledger_audit"};
        if (run_validate(validation::SuiteOptions::quick(), gate, {}) != 0) {
          fmt::print(stderr, "checks failed; not training (use --skip-validate to override)\n");
          return 1;
        }
      }
      const fs::path dir = experiment::output_root(out_dir.empty() ? cfg.output_dir : out_dir);
      const auto art = experiment::cmd_train(cfg, dir);
      for (std::size_t i = 0; i < art.runs.size(); ++i)
        fmt::print("{} seed {}: final-10 reward {}, final-10 expected leakage {} bits, distinct states (first {} "
                   "episodes) {}\n",
                   experiment::agent_label(cfg.agent), cfg.seeds[i], format_double(art.runs[i].final_mean_reward()),
                   format_double(art.runs[i].final_mean_leakage()), cfg.train.exploration_window,
                   art.runs[i].distinct_states_window);
      for (const auto& f : art.files) fmt::print("wrote {}\n", f.string());
      return 0;
    }
    if (*sw) {
      const auto cfg = load_config(config_path, overrides);
      const auto rows = experiment::cmd_sweep(cfg);
      const std::string csv = experiment::sweep_csv(rows);
      const fs::path path = experiment::output_root(
          sweep_out.empty() ? (fs::path(cfg.output_dir) / ("sweep_" + experiment::axis_label(cfg.sweep_axis) + ".csv")).string()
                            : sweep_out);
      write_file(path, csv);
      fmt::print("{}wrote {}\n", csv, path.string());
      return 0;
    }
    if (*sp) {
      const auto cfg = load_config(config_path, overrides);
      const auto plan = experiment::cmd_show_plan(cfg, checkpoint, episode_seed);
      std::cout << (as_json ? plan.dump(2) + "\n" : experiment::plan_text(plan));
      return plan["plan_valid"].get<bool>() && plan["actions_within_mask"].get<bool>() ? 0 : 1;
    }
    if (*orc) {
      Rng rng(orc_seed);
      Scenario scn = gen_scenario(derive_seed(orc_seed, 1), std::max<std::size_t>(2 + orc_deceivers, 3), orc_eaves, 800.0);
      const ModelSpec model = make_model(4, SizeProfile::pyramid(), orc_seed, 2);
      TransmissionSpec t;
      t.tx = NodeId::device(0);
      t.rx = NodeId::device(1);
      t.payload_bits = model.layers[1].boundary_activation_bits;
      t.tx_power = rng.uniform(0.05, 0.4);
      for (std::size_t d = 0; d < orc_deceivers; ++d) t.deceivers.push_back({NodeId::device(2 + d), rng.uniform(0.05, 0.4)});
      const std::vector<Hop> hops{{t, make_segment(model, 0, 2)}};
      const auto closed = expected_leakage_closed(hops, scn);
      const auto mc = mc_leakage_oracle(hops, scn, orc_samples, derive_seed(orc_seed, 2));
      fmt::print("closed form: {} bits\n", format_double(closed.expected_bits));
      fmt::print("monte carlo: {} +- {} bits (n={})\n", format_double(mc.mean), format_double(mc.stderr_bits), mc.samples);
      fmt::print("difference: {:.3f} stderr\n", mc.stderr_bits > 0 ? std::fabs(mc.mean - closed.expected_bits) / mc.stderr_bits : 0.0);
      std::cout << closed.to_json().dump() << "\n";
      return 0;
    }
    if (*pw) {
      const Channel ch{1e6, 1e-12, 1.0};
      fmt::print("case,corollary,deceivers,link_dist,time_budget,energy_budget,p_tx,p_d_sum,objective,grid_p_tx,"
                 "grid_p_d_sum,grid_objective,residual_time,residual_energy,feasible\n");
      for (std::size_t i = 0; i < pw_cases; ++i) {
        Rng rng(derive_seed(pw_seed, i));
        for (int which : {1, 2}) {
          const std::size_t nd = which == 1 ? 1 : 1 + i % 3;
          HopGeometry g;
          g.link_dist = rng.uniform(50.0, 200.0);
          g.tx_eaves_dist = {rng.uniform(50.0, 400.0)};
          g.monitor_prob = {0.8};
          g.delta_bits = 1e6;
          for (std::size_t d = 0; d < nd; ++d) {
            g.deceiver_rx_dist.push_back(rng.uniform(50.0, 300.0));
            g.deceiver_eaves_dist.push_back({rng.uniform(50.0, 400.0)});
          }
          HopBudget b{rng.uniform(1.0, 3.0), 0.0, 1e6};
          b.energy_budget = b.time_budget * rng.uniform(0.05, 0.5);
          const RateModel model = which == 1 ? RateModel::WithInterference : RateModel::InterferenceFree;
          const PowerSolution s = which == 1 ? cor1_powers(g, ch, b) : cor2_powers(g, ch, b);
          const PowerSolution o = grid_oracle(g, ch, b, pw_grid, model);
          const auto r = residuals(g, ch, b, model, s.p_tx, s.p_deceivers);
          double sd = 0, od = 0;
          for (double p : s.p_deceivers) sd += p;
          for (double p : o.p_deceivers) od += p;
          fmt::print("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", i, which, nd, format_double(g.link_dist),
                     format_double(b.time_budget), format_double(b.energy_budget), format_double(s.p_tx),
                     format_double(sd), format_double(s.objective), format_double(o.p_tx), format_double(od),
                     format_double(o.objective), format_double(r.time), format_double(r.energy), s.feasible ? 1 : 0);
        }
      }
      return 0;
    }
    if (*gs) {
      const Scenario scn = gen_scenario(gs_seed, gs_devices, gs_eaves, gs_area);
      write_file(gs_out, scenario_to_config(scn).dump());
      fmt::print("wrote {}\n", gs_out);
      if (!gs_model_out.empty()) {
        write_file(gs_model_out, model_to_config(make_model(gs_layers, SizeProfile::pyramid(), gs_model_seed, gs_segments)).dump());
        fmt::print("wrote {}\n", gs_model_out);
      }
      return 0;
    }
    if (*md) {
      auto layers = mhsl::make_dense_layers({3, 8, 8, 1}, md_seed);
      auto segments = mhsl::split_layers(layers, {1, 2});
      Rng rng(derive_seed(md_seed, 1));
      Matrix x(32, 3), y(32, 1);
      for (std::size_t r = 0; r < 32; ++r) {
        for (std::size_t c = 0; c < 3; ++c) x(r, c) = rng.uniform(-1.0, 1.0);
        y(r, 0) = 0.5 * x(r, 0) - 0.3 * x(r, 1) + 0.2 * x(r, 2);
      }
      fmt::print("step,loss\n");
      for (std::size_t s = 0; s <= md_steps; ++s) {
        const auto fwd = mhsl::forward_chain(segments, x);
        const Matrix& z = fwd.outputs.back().values;
        fmt::print("{},{}\n", s, format_double(mhsl::compute_loss(z, y)));
        if (s == md_steps) break;
        const auto grads = mhsl::backward_chain(fwd.cache, segments, mhsl::loss_gradient(z, y));
        mhsl::apply_updates(segments, grads, md_lr);
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
