#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "decoysl/agent.hpp"
#include "decoysl/kvconfig.hpp"
#include "decoysl/validation.hpp"

namespace decoysl::experiment {

// Agent variants; the ablations differ from icm_ca by one flag.
enum class AgentKind { IcmCa, NoIcm, NoCa, QLearning, Random };
AgentKind parse_agent(const std::string& s);
std::string agent_label(AgentKind k);

enum class SweepAxis { MonitorProb, EavesdropperCount, AgentKind, Ablations, ObserveEavesdroppers };
SweepAxis parse_axis(const std::string& s);
std::string axis_label(SweepAxis a);

struct ExperimentConfig {
  // Scenario: a kv file, or generation parameters.
  std::string scenario_file;
  std::uint64_t scenario_seed = 7;
  std::size_t devices = 6;
  std::size_t eavesdroppers = 2;
  double area_side = 800.0;
  double monitor_prob = 0.8;
  // Model: a kv file, or generation parameters.
  std::string model_file;
  std::size_t layers = 6;
  std::string profile = "pyramid";
  std::uint64_t model_seed = 7;

  EnvConfig env;
  agent::TrainConfig train;
  AgentKind agent = AgentKind::IcmCa;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  SweepAxis sweep_axis = SweepAxis::MonitorProb;
  std::vector<double> sweep_values;  // empty: axis default
  std::vector<AgentKind> sweep_agents{AgentKind::IcmCa, AgentKind::QLearning, AgentKind::Random};

  std::string output_dir = "runs";

  // Parses only; call validate() once file paths are final.
  static ExperimentConfig from_kv(const KvConfig& kv);
  static ExperimentConfig load(const std::string& path);
  KvConfig to_kv() const;
  void validate() const;

  Scenario build_scenario() const;
  ModelSpec build_model() const;
  agent::TrainConfig train_config(AgentKind kind, std::uint64_t seed) const;
};

// Output directory: `dir` below $DECOYSL_OUT when set, else `dir` as given.
std::filesystem::path output_root(const std::string& dir);

// Runs one agent for one seed on an env built from `cfg`.
agent::RunResult run_agent(const ExperimentConfig& cfg, AgentKind kind, std::uint64_t seed, SplitEnv& env,
                           const agent::EpisodeHook& hook = {}, const std::string& checkpoint = {});

nlohmann::json cmd_validate(const validation::SuiteOptions& opts, const std::vector<std::string>& only = {});

struct TrainArtifacts {
  std::vector<std::filesystem::path> files;
  std::vector<agent::RunResult> runs;  // in seed order
};
TrainArtifacts cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct SweepRow {
  std::string axis;
  double value = 0.0;
  std::string agent;
  std::size_t seeds = 0;
  double mean_final_leakage = 0.0;
  double mean_final_reward = 0.0;
};
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg);
std::string sweep_csv(const std::vector<SweepRow>& rows);

// Greedy rollout of a trained checkpoint.
nlohmann::json cmd_show_plan(const ExperimentConfig& cfg, const std::string& checkpoint, std::uint64_t episode_seed);
std::string plan_text(const nlohmann::json& plan);

}  // namespace decoysl::experiment
