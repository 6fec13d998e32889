#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "decoysl/icm.hpp"
#include "decoysl/slenv.hpp"

namespace decoysl::agent {

enum class EntropyTerm {
  AsWritten,  // L_A = −E[log π·Y − α·H]: descent lowers entropy
  Bonus,      // L_A = −E[log π·Y + α·H]
};

struct TrainConfig {
  double gamma = 0.99;
  double alpha = 0.05;
  double zeta = 0.3;
  std::size_t history = 4;  // I
  double eta_actor = 1e-4;
  double eta_critic = 3e-4;
  std::size_t batch = 64;
  std::size_t buffer = 10000;
  std::size_t warmup = 64;
  std::size_t episodes = 200;
  std::uint64_t seed = 1;
  bool no_icm = false;
  bool no_ca = false;
  EntropyTerm entropy = EntropyTerm::AsWritten;
  std::size_t hidden = 64;
  std::size_t attn_dim = 32;
  nn::OptimizerConfig::Kind optimizer = nn::OptimizerConfig::Kind::Adam;
  icm::IcmConfig icm;
  // Q-learning baseline
  double q_lr = 0.1;
  double q_epsilon = 0.1;
  std::size_t q_levels = 8;
  // Episodes counted for the distinct-state metric.
  std::size_t exploration_window = 20;

  void validate() const;
};

double total_reward(double extrinsic, double curiosity, double zeta);
double advantage(double r, double v_s, double v_next, double gamma, bool done);

// The I most recent (state, action) pairs; slots are oldest first and
// invalid until filled.
struct HistoryWindow {
  std::vector<std::vector<double>> states;
  std::vector<std::size_t> actions;
  std::vector<char> valid;

  static HistoryWindow empty(std::size_t slots, std::size_t state_dim);
  void push(const std::vector<double>& s, std::size_t a);
};

struct Experience {
  std::vector<double> state;
  std::size_t action = 0;
  double total_reward = 0.0;
  double extrinsic_reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
  std::vector<std::size_t> valid;
  HistoryWindow history;
  std::vector<double> hidden_forward;
  std::vector<double> hidden_inverse;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(Experience e);
  std::size_t size() const { return items_.size(); }
  const Experience& at(std::size_t i) const;  // 0 = oldest
  // Uniform with replacement.
  std::vector<const Experience*> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Experience> items_;
};

class Actor {
 public:
  Actor(std::size_t state_dim, std::size_t action_count, const TrainConfig& cfg, std::uint64_t seed);

  // Log-probabilities over each sample's valid list, flattened.
  nn::Var log_policy(nn::Tape& t, const std::vector<const std::vector<double>*>& states,
                     const std::vector<const HistoryWindow*>& histories, const nn::Ragged& layout,
                     const std::vector<std::size_t>& rows) const;
  nn::Var combined_state(nn::Tape& t, const std::vector<const std::vector<double>*>& states,
                         const std::vector<const HistoryWindow*>& histories) const;
  // Probabilities aligned with `valid`.
  std::vector<double> policy(const std::vector<double>& state, const HistoryWindow& h,
                             const std::vector<std::size_t>& valid) const;

  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }
  std::vector<std::size_t> all_ids() const;

 private:
  std::size_t state_dim_, actions_, slots_;
  bool no_ca_;
  mutable nn::ParamStore ps_;
  std::size_t ws_w_, ws_b_, action_embed_, wq_, wk_, wv_, head_w_, head_b_;
  nn::Net body_;
};

class Critic {
 public:
  Critic(std::size_t state_dim, const TrainConfig& cfg, std::uint64_t seed);
  nn::Var values(nn::Tape& t, const std::vector<const std::vector<double>*>& states) const;
  double value(const std::vector<double>& state) const;
  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }
  std::vector<std::size_t> all_ids() const;

 private:
  mutable nn::ParamStore ps_;
  nn::Net net_;
};

struct UpdateLosses {
  double critic = 0.0;
  double actor = 0.0;
  icm::Losses icm;
};

struct EpisodeMetrics {
  std::size_t episode = 0;
  double reward = 0.0;  // accumulated extrinsic reward
  double total_reward = 0.0;
  double leakage_bits = 0.0;
  double leakage_norm = 0.0;
  double expected_leakage_bits = 0.0;
  std::size_t violations = 0;
  std::size_t distinct_states = 0;
  double time_spent = 0.0;
  double energy_spent = 0.0;
  double loss_critic = 0.0;
  double loss_actor = 0.0;
  double loss_inverse = 0.0;
  double loss_forward = 0.0;
  double loss_extractor = 0.0;
  std::size_t updates = 0;

  nlohmann::json to_json() const;
};

struct RunResult {
  std::vector<EpisodeMetrics> episodes;
  std::size_t distinct_states_window = 0;  // within the first `exploration_window` episodes
  std::size_t invalid_actions = 0;

  double final_mean_reward(std::size_t last = 10) const;
  double final_mean_leakage(std::size_t last = 10) const;
};

using EpisodeHook = std::function<void(const EpisodeMetrics&)>;

// ICM-CA learner: cross-attention actor, value critic, curiosity module.
class IcmCaAgent {
 public:
  IcmCaAgent(std::size_t state_dim, std::size_t action_count, TrainConfig cfg);

  RunResult train(SplitEnv& env, const EpisodeHook& hook = {});
  UpdateLosses update(const std::vector<const Experience*>& batch);

  // Loss graphs, exposed for gradient checks. Y values come from the
  // current critic and enter the actor loss as constants.
  nn::Var critic_loss(nn::Tape& t, const std::vector<const Experience*>& batch) const;
  nn::Var actor_loss(nn::Tape& t, const std::vector<const Experience*>& batch) const;

  // Greedy rollout of one episode; returns the chosen action ids.
  std::vector<std::size_t> greedy_episode(SplitEnv& env, std::uint64_t seed) const;

  Actor& actor() { return actor_; }
  Critic& critic() { return critic_; }
  icm::Icm& curiosity() { return icm_; }
  const Actor& actor() const { return actor_; }
  const Critic& critic() const { return critic_; }
  const icm::Icm& curiosity() const { return icm_; }
  const TrainConfig& config() const { return cfg_; }
  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  TrainConfig cfg_;
  Actor actor_;
  Critic critic_;
  icm::Icm icm_;
  nn::Optimizer opt_actor_, opt_critic_;
};

RunResult q_baseline_train(SplitEnv& env, const TrainConfig& cfg, const EpisodeHook& hook = {});
RunResult random_policy_run(SplitEnv& env, const TrainConfig& cfg, const EpisodeHook& hook = {});

// Tabular Q-learning over quantized states (exposed for unit tests).
class QTable {
 public:
  double get(std::uint64_t s, std::size_t a) const;
  void set(std::uint64_t s, std::size_t a, double v) { table_[s][a] = v; }
  double max_over(std::uint64_t s, const std::vector<std::size_t>& valid) const;
  std::size_t greedy(std::uint64_t s, const std::vector<std::size_t>& valid, Rng& rng) const;
  void update(std::uint64_t s, std::size_t a, double r, double next_max, double lr, double gamma, bool done);

 private:
  std::unordered_map<std::uint64_t, std::unordered_map<std::size_t, double>> table_;
};

}  // namespace decoysl::agent
