#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "decoysl/errors.hpp"
#include "decoysl/experiment.hpp"

using namespace decoysl;
using namespace decoysl::experiment;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  KvConfig kv = KvConfig::parse(
      "episodes = 2\nseeds = [1]\nhidden = 8\nattn_dim = 4\nbatch = 4\nwarmup = 4\nbuffer = 50\n"
      "icm_feature_dim = 4\nexploration_window = 1\n");
  return ExperimentConfig::from_kv(kv);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("config round trip") {
  ExperimentConfig c = tiny_config();
  c.monitor_prob = 0.55;
  c.agent = AgentKind::NoCa;
  c.sweep_axis = SweepAxis::EavesdropperCount;
  c.sweep_agents = {AgentKind::QLearning, AgentKind::Random};
  c.train.entropy = agent::EntropyTerm::Bonus;
  c.train.q_epsilon = 0.25;
  c.train.icm.eta2 = 3e-3;
  const std::string dumped = c.to_kv().dump();
  const ExperimentConfig back = ExperimentConfig::from_kv(KvConfig::parse(dumped));
  CHECK(back.to_kv().dump() == dumped);
  CHECK(back.monitor_prob == 0.55);
  CHECK(back.agent == AgentKind::NoCa);
  CHECK(back.train.episodes == 2);
  CHECK(back.sweep_agents.size() == 2);
  CHECK(back.train.hidden == 8);
  CHECK(back.train.q_epsilon == 0.25);
  CHECK(back.train.icm.eta2 == 3e-3);
  CHECK(back.train.exploration_window == 1);
}

TEST_CASE("config errors are named") {
  CHECK_THROWS_AS(ExperimentConfig::from_kv(KvConfig::parse("no_such_key = 1\n")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_kv(KvConfig::parse("agent = ppo\n")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_kv(KvConfig::parse("seeds = [1.5]\n")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_kv(KvConfig::parse("entropy = maybe\n")), ConfigError);
  ExperimentConfig c = tiny_config();
  c.monitor_prob = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.scenario_file = "/nonexistent/scenario.kv";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(parse_axis("latency"), ConfigError);
}

TEST_CASE("agent and axis labels round trip") {
  for (AgentKind k : {AgentKind::IcmCa, AgentKind::NoIcm, AgentKind::NoCa, AgentKind::QLearning, AgentKind::Random})
    CHECK(parse_agent(agent_label(k)) == k);
  for (SweepAxis a : {SweepAxis::MonitorProb, SweepAxis::EavesdropperCount, SweepAxis::AgentKind,
                      SweepAxis::Ablations, SweepAxis::ObserveEavesdroppers})
    CHECK(parse_axis(axis_label(a)) == a);
}

TEST_CASE("output root honours the environment") {
  ::setenv("DECOYSL_OUT", "/tmp/decoysl_root", 1);
  CHECK(output_root("runs") == fs::path("/tmp/decoysl_root/runs"));
  CHECK(output_root("/abs/runs") == fs::path("/abs/runs"));
  ::unsetenv("DECOYSL_OUT");
  CHECK(output_root("runs") == fs::path("runs"));
}

TEST_CASE("random policy leakage grows with the monitoring probability") {
  ExperimentConfig c = tiny_config();
  c.train.episodes = 10;
  c.seeds = {1, 2};
  c.sweep_axis = SweepAxis::MonitorProb;
  c.sweep_agents = {AgentKind::Random};
  const auto rows = cmd_sweep(c);
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].mean_final_leakage > rows[i - 1].mean_final_leakage);
  // Same actions at every point, so expected leakage is linear in q.
  CHECK(rows[3].mean_final_leakage / rows[0].mean_final_leakage == doctest::Approx(0.9 / 0.3).epsilon(1e-9));
  const std::string csv = sweep_csv(rows);
  CHECK(csv.rfind("axis,value,agent,seeds", 0) == 0);
}

TEST_CASE("eavesdropper-count sweep covers one to four") {
  ExperimentConfig c = tiny_config();
  c.train.episodes = 2;
  c.sweep_axis = SweepAxis::EavesdropperCount;
  c.sweep_agents = {AgentKind::QLearning};
  const auto rows = cmd_sweep(c);
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(rows[i].value == static_cast<double>(i + 1));
}

TEST_CASE("training writes identical artifacts for identical configs") {
  const ExperimentConfig c = tiny_config();
  const fs::path a = fresh_dir("decoysl_train_a"), b = fresh_dir("decoysl_train_b");
  const auto ra = cmd_train(c, a);
  const auto rb = cmd_train(c, b);
  REQUIRE(ra.files.size() == 4);
  for (std::size_t i = 0; i < ra.files.size(); ++i) {
    CHECK(ra.files[i].filename() == rb.files[i].filename());
    CHECK(slurp(ra.files[i]) == slurp(rb.files[i]));
  }
  CHECK(fs::exists(a / "icm_ca_seed1.reward.csv"));

  const auto plan = cmd_show_plan(c, (a / "icm_ca_seed1.ckpt").string(), 3);
  CHECK(plan["plan_valid"].get<bool>());
  CHECK(plan["actions_within_mask"].get<bool>());
  CHECK(plan["steps"].size() == 7);
  CHECK(plan["cuts"].size() == 3);
  CHECK(plan_text(plan).find("chain: dev") == 0);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("show-plan refuses tabular agents") {
  ExperimentConfig c = tiny_config();
  c.agent = AgentKind::QLearning;
  CHECK_THROWS_AS(cmd_show_plan(c, "x.ckpt", 1), ConfigError);
}

TEST_CASE("a corrupted closed form is reported by name") {
  validation::SuiteOptions opts = validation::SuiteOptions::quick();
  opts.corrupt = true;
  const auto report = cmd_validate(opts, {"powers_one_deceiver"});
  CHECK_FALSE(report["pass"].get<bool>());
  REQUIRE(report["checks"].size() == 1);
  CHECK(report["checks"][0]["name"] == "powers_one_deceiver");
  CHECK_FALSE(report["checks"][0]["pass"].get<bool>());

  opts.corrupt = false;
  CHECK(cmd_validate(opts, {"powers_one_deceiver", "powers_zero_energy"})["pass"].get<bool>());
}
