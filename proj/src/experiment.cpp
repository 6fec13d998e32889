#include "decoysl/experiment.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "decoysl/errors.hpp"

namespace decoysl::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

AgentKind parse_agent(const std::string& s) {
  if (s == "icm_ca") return AgentKind::IcmCa;
  if (s == "no_icm") return AgentKind::NoIcm;
  if (s == "no_ca") return AgentKind::NoCa;
  if (s == "q") return AgentKind::QLearning;
  if (s == "random") return AgentKind::Random;
  throw ConfigError("unknown agent '" + s + "' (icm_ca, no_icm, no_ca, q, random)");
}

std::string agent_label(AgentKind k) {
  switch (k) {
    case AgentKind::IcmCa: return "icm_ca";
    case AgentKind::NoIcm: return "no_icm";
    case AgentKind::NoCa: return "no_ca";
    case AgentKind::QLearning: return "q";
    case AgentKind::Random: return "random";
  }
  return "?";
}

SweepAxis parse_axis(const std::string& s) {
  if (s == "monitor_prob") return SweepAxis::MonitorProb;
  if (s == "eavesdropper_count") return SweepAxis::EavesdropperCount;
  if (s == "agent_kind") return SweepAxis::AgentKind;
  if (s == "ablations") return SweepAxis::Ablations;
  if (s == "observe_eavesdroppers") return SweepAxis::ObserveEavesdroppers;
  throw ConfigError("unknown sweep axis '" + s + "'");
}

std::string axis_label(SweepAxis a) {
  switch (a) {
    case SweepAxis::MonitorProb: return "monitor_prob";
    case SweepAxis::EavesdropperCount: return "eavesdropper_count";
    case SweepAxis::AgentKind: return "agent_kind";
    case SweepAxis::Ablations: return "ablations";
    case SweepAxis::ObserveEavesdroppers: return "observe_eavesdroppers";
  }
  return "?";
}

namespace {

std::size_t count_of(const KvConfig& kv, const std::string& key, std::size_t fallback) {
  const double v = kv.number_or(key, static_cast<double>(fallback));
  if (!(v >= 0) || v != static_cast<double>(static_cast<std::size_t>(v)))
    throw ConfigError(key + " must be a nonnegative integer");
  return static_cast<std::size_t>(v);
}

bool flag_of(const KvConfig& kv, const std::string& key, bool fallback) {
  const double v = kv.number_or(key, fallback ? 1.0 : 0.0);
  if (v != 0.0 && v != 1.0) throw ConfigError(key + " must be 0 or 1");
  return v == 1.0;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_kv(const KvConfig& kv) {
  static const std::vector<std::string> known{
      "scenario_file", "scenario_seed", "devices", "eavesdroppers", "area_side", "monitor_prob", "model_file",
      "layers", "profile", "model_seed", "segments", "power_levels", "max_deceivers", "omega_energy",
      "omega_time", "observe_eavesdroppers", "agent", "seeds", "episodes", "gamma", "alpha", "zeta", "history",
      "eta_actor", "eta_critic", "batch", "buffer", "warmup", "entropy", "hidden", "attn_dim", "optimizer",
      "icm_feature_dim", "icm_eta1", "icm_eta2", "icm_eta3", "icm_upsilon", "q_lr", "q_epsilon", "q_levels",
      "exploration_window", "sweep_axis", "sweep_values", "sweep_agents", "output_dir"};
  for (const auto& k : kv.keys())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown config key '" + k + "'");

  ExperimentConfig c;
  c.scenario_file = kv.text_or("scenario_file", "");
  c.scenario_seed = count_of(kv, "scenario_seed", c.scenario_seed);
  c.devices = count_of(kv, "devices", c.devices);
  c.eavesdroppers = count_of(kv, "eavesdroppers", c.eavesdroppers);
  c.area_side = kv.number_or("area_side", c.area_side);
  c.monitor_prob = kv.number_or("monitor_prob", c.monitor_prob);
  c.model_file = kv.text_or("model_file", "");
  c.layers = count_of(kv, "layers", c.layers);
  c.profile = kv.text_or("profile", c.profile);
  c.model_seed = count_of(kv, "model_seed", c.model_seed);

  c.env.segments = count_of(kv, "segments", c.env.segments);
  c.env.power_levels = kv.array_or("power_levels", c.env.power_levels);
  c.env.max_deceivers = count_of(kv, "max_deceivers", c.env.max_deceivers);
  c.env.omega_energy = kv.number_or("omega_energy", c.env.omega_energy);
  c.env.omega_time = kv.number_or("omega_time", c.env.omega_time);
  c.env.observe_eavesdroppers = flag_of(kv, "observe_eavesdroppers", c.env.observe_eavesdroppers);

  c.agent = parse_agent(kv.text_or("agent", agent_label(c.agent)));
  if (kv.has("seeds")) {
    c.seeds.clear();
    for (double s : kv.array("seeds")) {
      if (!(s >= 0) || s != static_cast<double>(static_cast<std::uint64_t>(s)))
        throw ConfigError("seeds must be nonnegative integers");
      c.seeds.push_back(static_cast<std::uint64_t>(s));
    }
  }
  auto& t = c.train;
  t.episodes = count_of(kv, "episodes", t.episodes);
  t.gamma = kv.number_or("gamma", t.gamma);
  t.alpha = kv.number_or("alpha", t.alpha);
  t.zeta = kv.number_or("zeta", t.zeta);
  t.history = count_of(kv, "history", t.history);
  t.eta_actor = kv.number_or("eta_actor", t.eta_actor);
  t.eta_critic = kv.number_or("eta_critic", t.eta_critic);
  t.batch = count_of(kv, "batch", t.batch);
  t.buffer = count_of(kv, "buffer", t.buffer);
  t.warmup = count_of(kv, "warmup", t.warmup);
  t.hidden = count_of(kv, "hidden", t.hidden);
  t.attn_dim = count_of(kv, "attn_dim", t.attn_dim);
  const std::string entropy = kv.text_or("entropy", "as_written");
  if (entropy == "as_written")
    t.entropy = agent::EntropyTerm::AsWritten;
  else if (entropy == "bonus")
    t.entropy = agent::EntropyTerm::Bonus;
  else
    throw ConfigError("entropy must be as_written or bonus");
  const std::string opt = kv.text_or("optimizer", "adam");
  if (opt == "adam")
    t.optimizer = t.icm.optimizer = nn::OptimizerConfig::Kind::Adam;
  else if (opt == "sgd")
    t.optimizer = t.icm.optimizer = nn::OptimizerConfig::Kind::Sgd;
  else
    throw ConfigError("optimizer must be adam or sgd");
  t.icm.feature_dim = count_of(kv, "icm_feature_dim", t.icm.feature_dim);
  t.icm.eta1 = kv.number_or("icm_eta1", t.icm.eta1);
  t.icm.eta2 = kv.number_or("icm_eta2", t.icm.eta2);
  t.icm.eta3 = kv.number_or("icm_eta3", t.icm.eta3);
  t.icm.upsilon = kv.number_or("icm_upsilon", t.icm.upsilon);
  t.icm.zeta = t.zeta;
  t.q_lr = kv.number_or("q_lr", t.q_lr);
  t.q_epsilon = kv.number_or("q_epsilon", t.q_epsilon);
  t.q_levels = count_of(kv, "q_levels", t.q_levels);
  t.exploration_window = count_of(kv, "exploration_window", t.exploration_window);

  c.sweep_axis = parse_axis(kv.text_or("sweep_axis", axis_label(c.sweep_axis)));
  c.sweep_values = kv.array_or("sweep_values", {});
  if (kv.has("sweep_agents")) {
    c.sweep_agents.clear();
    std::stringstream ss(kv.text("sweep_agents"));
    for (std::string item; std::getline(ss, item, ',');) c.sweep_agents.push_back(parse_agent(item));
  }
  c.output_dir = kv.text_or("output_dir", c.output_dir);
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  ExperimentConfig c = from_kv(KvConfig::load(path));
  // Relative data files resolve against the config's directory.
  const fs::path base = fs::path(path).parent_path();
  for (std::string* f : {&c.scenario_file, &c.model_file})
    if (!f->empty() && fs::path(*f).is_relative()) *f = (base / *f).string();
  c.validate();
  return c;
}

KvConfig ExperimentConfig::to_kv() const {
  KvConfig kv;
  if (!scenario_file.empty()) kv.set("scenario_file", scenario_file);
  kv.set("scenario_seed", static_cast<double>(scenario_seed));
  kv.set("devices", static_cast<double>(devices));
  kv.set("eavesdroppers", static_cast<double>(eavesdroppers));
  kv.set("area_side", area_side);
  kv.set("monitor_prob", monitor_prob);
  if (!model_file.empty()) kv.set("model_file", model_file);
  kv.set("layers", static_cast<double>(layers));
  kv.set("profile", profile);
  kv.set("model_seed", static_cast<double>(model_seed));
  kv.set("segments", static_cast<double>(env.segments));
  kv.set("power_levels", env.power_levels);
  kv.set("max_deceivers", static_cast<double>(env.max_deceivers));
  kv.set("omega_energy", env.omega_energy);
  kv.set("omega_time", env.omega_time);
  kv.set("observe_eavesdroppers", env.observe_eavesdroppers ? 1.0 : 0.0);
  kv.set("agent", agent_label(agent));
  std::vector<double> s(seeds.begin(), seeds.end());
  kv.set("seeds", s);
  kv.set("episodes", static_cast<double>(train.episodes));
  kv.set("gamma", train.gamma);
  kv.set("alpha", train.alpha);
  kv.set("zeta", train.zeta);
  kv.set("history", static_cast<double>(train.history));
  kv.set("eta_actor", train.eta_actor);
  kv.set("eta_critic", train.eta_critic);
  kv.set("batch", static_cast<double>(train.batch));
  kv.set("buffer", static_cast<double>(train.buffer));
  kv.set("warmup", static_cast<double>(train.warmup));
  kv.set("entropy", std::string(train.entropy == agent::EntropyTerm::AsWritten ? "as_written" : "bonus"));
  kv.set("hidden", static_cast<double>(train.hidden));
  kv.set("attn_dim", static_cast<double>(train.attn_dim));
  kv.set("optimizer", std::string(train.optimizer == nn::OptimizerConfig::Kind::Adam ? "adam" : "sgd"));
  kv.set("icm_feature_dim", static_cast<double>(train.icm.feature_dim));
  kv.set("icm_eta1", train.icm.eta1);
  kv.set("icm_eta2", train.icm.eta2);
  kv.set("icm_eta3", train.icm.eta3);
  kv.set("icm_upsilon", train.icm.upsilon);
  kv.set("q_lr", train.q_lr);
  kv.set("q_epsilon", train.q_epsilon);
  kv.set("q_levels", static_cast<double>(train.q_levels));
  kv.set("exploration_window", static_cast<double>(train.exploration_window));
  kv.set("sweep_axis", axis_label(sweep_axis));
  if (!sweep_values.empty()) kv.set("sweep_values", sweep_values);
  std::string agents;
  for (auto a : sweep_agents) agents += (agents.empty() ? "" : ",") + agent_label(a);
  kv.set("sweep_agents", agents);
  kv.set("output_dir", output_dir);
  return kv;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds must be nonempty");
  if (!scenario_file.empty() && !fs::exists(scenario_file)) throw ConfigError("scenario_file not found: " + scenario_file);
  if (!model_file.empty() && !fs::exists(model_file)) throw ConfigError("model_file not found: " + model_file);
  if (!(monitor_prob >= 0.0 && monitor_prob <= 1.0)) throw ConfigError("monitor_prob must lie in [0, 1]");
  if (train.episodes == 0) throw ConfigError("episodes must be positive");
  if (sweep_agents.empty()) throw ConfigError("sweep_agents must be nonempty");
  SizeProfile::parse_kind(profile);
  train.validate();
}

Scenario ExperimentConfig::build_scenario() const {
  if (!scenario_file.empty()) return scenario_from_config(KvConfig::load(scenario_file));
  ScenarioDefaults d;
  d.monitor_prob = monitor_prob;
  return gen_scenario(scenario_seed, devices, eavesdroppers, area_side, d);
}

ModelSpec ExperimentConfig::build_model() const {
  if (!model_file.empty()) return model_from_config(KvConfig::load(model_file));
  SizeProfile p = SizeProfile::parse_kind(profile) == SizeProfile::Kind::Pyramid
                      ? SizeProfile::pyramid()
                      : SizeProfile::uniform(5e5, 4e5, 1.5e-8);
  return make_model(layers, p, model_seed, env.segments);
}

agent::TrainConfig ExperimentConfig::train_config(AgentKind kind, std::uint64_t seed) const {
  agent::TrainConfig t = train;
  t.seed = seed;
  t.no_icm = kind == AgentKind::NoIcm;
  t.no_ca = kind == AgentKind::NoCa;
  return t;
}

fs::path output_root(const std::string& dir) {
  const char* root = std::getenv("DECOYSL_OUT");
  if (root && *root && fs::path(dir).is_relative()) return fs::path(root) / dir;
  return fs::path(dir);
}

agent::RunResult run_agent(const ExperimentConfig& cfg, AgentKind kind, std::uint64_t seed, SplitEnv& env,
                           const agent::EpisodeHook& hook, const std::string& checkpoint) {
  const agent::TrainConfig t = cfg.train_config(kind, seed);
  switch (kind) {
    case AgentKind::QLearning: return agent::q_baseline_train(env, t, hook);
    case AgentKind::Random: return agent::random_policy_run(env, t, hook);
    default: break;
  }
  agent::IcmCaAgent ag(env.state_dim(), env.actions().size(), t);
  agent::RunResult r = ag.train(env, hook);
  if (!checkpoint.empty()) ag.save(checkpoint);
  return r;
}

json cmd_validate(const validation::SuiteOptions& opts, const std::vector<std::string>& only) {
  return validation::suite_report(validation::run_suite(opts, only.empty() ? validation::check_names() : only));
}

TrainArtifacts cmd_train(const ExperimentConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  TrainArtifacts art;
  const fs::path config_copy = out_dir / "config.kv";
  write_text(config_copy, cfg.to_kv().dump());
  art.files.push_back(config_copy);
  const std::string label = agent_label(cfg.agent);
  for (std::uint64_t seed : cfg.seeds) {
    SplitEnv env(cfg.build_scenario(), cfg.build_model(), cfg.env);
    const std::string stem = fmt::format("{}_seed{}", label, seed);
    std::ofstream metrics(out_dir / (stem + ".metrics.jsonl"), std::ios::binary);
    std::ostringstream csv;
    csv << "episode,reward,total_reward,leakage_bits,expected_leakage_bits,violations,distinct_states\n";
    auto hook = [&](const agent::EpisodeMetrics& m) {
      metrics << m.to_json().dump() << '\n';
      csv << m.episode << ',' << format_double(m.reward) << ',' << format_double(m.total_reward) << ','
          << format_double(m.leakage_bits) << ',' << format_double(m.expected_leakage_bits) << ',' << m.violations
          << ',' << m.distinct_states << '\n';
    };
    const bool neural = cfg.agent != AgentKind::QLearning && cfg.agent != AgentKind::Random;
    const fs::path ckpt = out_dir / (stem + ".ckpt");
    art.runs.push_back(run_agent(cfg, cfg.agent, seed, env, hook, neural ? ckpt.string() : std::string{}));
    metrics.close();
    write_text(out_dir / (stem + ".reward.csv"), csv.str());
    art.files.push_back(out_dir / (stem + ".metrics.jsonl"));
    art.files.push_back(out_dir / (stem + ".reward.csv"));
    if (neural) art.files.push_back(ckpt);
  }
  return art;
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<double> values = cfg.sweep_values;
  std::vector<AgentKind> agents = cfg.sweep_agents;
  switch (cfg.sweep_axis) {
    case SweepAxis::MonitorProb:
      if (values.empty()) values = {0.3, 0.5, 0.7, 0.9};
      break;
    case SweepAxis::EavesdropperCount:
      if (values.empty()) values = {1, 2, 3, 4};
      break;
    case SweepAxis::ObserveEavesdroppers:
      if (values.empty()) values = {1, 0};
      break;
    case SweepAxis::AgentKind:
      values = {0};
      break;
    case SweepAxis::Ablations:
      values = {0};
      agents = {AgentKind::IcmCa, AgentKind::NoIcm, AgentKind::NoCa};
      break;
  }
  std::vector<SweepRow> rows;
  for (double v : values) {
    ExperimentConfig point = cfg;
    if (cfg.sweep_axis == SweepAxis::MonitorProb) point.monitor_prob = v;
    if (cfg.sweep_axis == SweepAxis::EavesdropperCount) {
      if (!(v >= 1) || v != static_cast<double>(static_cast<std::size_t>(v)))
        throw ConfigError("eavesdropper counts must be positive integers");
      point.eavesdroppers = static_cast<std::size_t>(v);
      point.scenario_file.clear();
    }
    if (cfg.sweep_axis == SweepAxis::ObserveEavesdroppers) point.env.observe_eavesdroppers = v != 0.0;
    Scenario scn = point.build_scenario();
    if (cfg.sweep_axis == SweepAxis::MonitorProb)
      for (auto& e : scn.eavesdroppers) e.monitor_prob = v;
    const ModelSpec model = point.build_model();
    for (AgentKind kind : agents) {
      SweepRow row;
      row.axis = axis_label(cfg.sweep_axis);
      row.value = v;
      row.agent = agent_label(kind);
      for (std::uint64_t seed : point.seeds) {
        SplitEnv env(scn, model, point.env);
        const agent::RunResult r = run_agent(point, kind, seed, env);
        row.mean_final_leakage += r.final_mean_leakage();
        row.mean_final_reward += r.final_mean_reward();
        ++row.seeds;
      }
      row.mean_final_leakage /= static_cast<double>(row.seeds);
      row.mean_final_reward /= static_cast<double>(row.seeds);
      rows.push_back(row);
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "axis,value,agent,seeds,mean_final_leakage_bits,mean_final_reward\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{},{},{}\n", r.axis, format_double(r.value), r.agent, r.seeds,
                       format_double(r.mean_final_leakage), format_double(r.mean_final_reward));
  return out;
}

json cmd_show_plan(const ExperimentConfig& cfg, const std::string& checkpoint, std::uint64_t episode_seed) {
  if (cfg.agent == AgentKind::QLearning || cfg.agent == AgentKind::Random)
    throw ConfigError("show-plan needs a neural agent checkpoint");
  SplitEnv env(cfg.build_scenario(), cfg.build_model(), cfg.env);
  agent::IcmCaAgent ag(env.state_dim(), env.actions().size(), cfg.train_config(cfg.agent, cfg.seeds.front()));
  ag.load(checkpoint);
  const std::vector<std::size_t> chosen = ag.greedy_episode(env, episode_seed);

  // Replay with re-validation of every choice against the mask.
  env.reset(episode_seed);
  const Scenario& scn = env.scenario();
  json steps = json::array();
  bool masks_ok = true;
  double expected = 0.0;
  for (std::size_t id : chosen) {
    const auto valid = env.valid_actions(env.state());
    masks_ok = masks_ok && std::binary_search(valid.begin(), valid.end(), id);
    const std::size_t step_idx = env.state().step_idx;
    const StepOutcome out = env.step(id);
    json s = {{"step", step_idx},
              {"action", id},
              {"description", env.actions().decode(id).describe(env.config().power_levels)}};
    if (step_idx > 1) {
      const Hop& h = env.hops().back();
      json per_e = json::array();
      for (std::size_t e = 0; e < scn.eavesdroppers.size(); ++e)
        per_e.push_back(capture_prob_closed(h.tx, e, scn) * scn.eavesdroppers[e].monitor_prob * delta(h.tx, h.segment));
      json deceivers = json::array();
      for (const auto& d : h.tx.deceivers) deceivers.push_back({{"node", d.node.str()}, {"power", d.power}});
      s["hop"] = {{"tx", h.tx.tx.str()},
                  {"rx", h.tx.rx.str()},
                  {"payload_bits", h.tx.payload_bits},
                  {"tx_power", h.tx.tx_power},
                  {"deceivers", deceivers},
                  {"expected_leakage_bits", out.expected_leakage_bits},
                  {"expected_leakage_per_eavesdropper", per_e}};
      expected += out.expected_leakage_bits;
    }
    steps.push_back(s);
  }
  const SplitPlan plan = env.plan();
  json chain = json::array();
  for (const auto& n : env.state().chain) chain.push_back(n.str());
  return {{"checkpoint", fs::path(checkpoint).filename().string()},
          {"episode_seed", episode_seed},
          {"chain", chain},
          {"cuts", plan.cuts},
          {"plan_valid", validate_plan(plan, env.model())},
          {"actions_within_mask", masks_ok},
          {"time_spent", env.ledger().time_spent()},
          {"energy_spent", env.ledger().energy_spent()},
          {"time_budget", scn.time_budget},
          {"energy_budget", scn.energy_budget},
          {"expected_leakage_bits", expected},
          {"steps", steps}};
}

std::string plan_text(const json& plan) {
  std::string out;
  std::string chain;
  for (const auto& n : plan["chain"]) chain += (chain.empty() ? "" : " -> ") + n.get<std::string>();
  out += "chain: " + chain + "\n";
  std::string cuts;
  for (const auto& c : plan["cuts"]) cuts += (cuts.empty() ? "" : ", ") + std::to_string(c.get<std::size_t>());
  out += "cuts: [" + cuts + "]\n";
  for (const auto& s : plan["steps"]) {
    out += fmt::format("step {}: {}", s["step"].get<std::size_t>(), s["description"].get<std::string>());
    if (s.contains("hop"))
      out += fmt::format("  E[leak]={} bits", format_double(s["hop"]["expected_leakage_bits"].get<double>()));
    out += "\n";
  }
  out += fmt::format("time {} / {} s, energy {} / {} J, expected leakage {} bits\n",
                     format_double(plan["time_spent"].get<double>()), format_double(plan["time_budget"].get<double>()),
                     format_double(plan["energy_spent"].get<double>()),
                     format_double(plan["energy_budget"].get<double>()),
                     format_double(plan["expected_leakage_bits"].get<double>()));
  out += fmt::format("plan valid: {}, actions within mask: {}\n", plan["plan_valid"].get<bool>() ? "yes" : "no",
                     plan["actions_within_mask"].get<bool>() ? "yes" : "no");
  return out;
}

}  // namespace decoysl::experiment
