#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "decoysl/eavesdrop.hpp"

namespace decoysl {

struct EnvConfig {
  std::size_t segments = 4;  // S
  std::vector<double> power_levels{0.05, 0.1, 0.2, 0.4};
  std::size_t max_deceivers = 2;
  double omega_energy = 1.0;
  double omega_time = 1.0;
  bool observe_eavesdroppers = true;
};

enum class ActionFamily { Select, ForwardHop, ServerHop, BackwardHop };

struct Action {
  ActionFamily family = ActionFamily::Select;
  std::size_t receiver = 0;  // device index (Select: the first trainer)
  std::size_t cut = 0;       // layers given to the receiver (Select: to the first trainer)
  std::size_t tx_level = 0;
  std::vector<std::size_t> deceivers;
  std::size_t deceiver_level = 0;
  std::size_t backward_receiver = 0;  // x(n), chain position 1..S-1; 0 on forward steps

  std::string describe(const std::vector<double>& levels) const;
};

// Flat enumeration of every structurally plausible action. Deceivers in one
// action share a single power level.
class ActionSpace {
 public:
  ActionSpace(std::size_t devices, std::size_t segments, std::size_t max_cut, std::size_t levels,
              std::size_t max_deceivers);

  std::size_t size() const { return actions_.size(); }
  const Action& decode(std::size_t id) const { return actions_.at(id); }
  std::size_t power_options() const { return options_.size() * levels_; }
  std::size_t max_cut() const { return max_cut_; }

  std::size_t select_id(std::size_t u, std::size_t cut) const;
  std::size_t forward_id(std::size_t u, std::size_t cut, std::size_t pa) const;
  std::size_t server_id(std::size_t pa) const;
  std::size_t backward_id(std::size_t x, std::size_t pa) const;
  std::size_t encode(const Action& a) const;

  // Power-assignment indices whose deceiver set avoids the given devices.
  std::vector<std::size_t> power_assignments_avoiding(std::optional<std::size_t> a,
                                                      std::optional<std::size_t> b) const;

 private:
  std::size_t devices_, segments_, max_cut_, levels_;
  // Deceiver options: [0] is "none"; the rest are (subset, level) pairs.
  struct Option {
    std::vector<std::size_t> subset;
    std::size_t level = 0;
  };
  std::vector<Option> options_;
  std::vector<Action> actions_;
  std::size_t forward_base_ = 0, server_base_ = 0, backward_base_ = 0;
};

struct EnvState {
  double remaining_energy = 0.0;
  double remaining_time = 0.0;
  double unassigned_fraction = 1.0;
  std::vector<std::size_t> assignment;  // per device: segment index 1..S, 0 = none
  std::optional<NodeId> transmitter;    // v: node holding the next message
  std::vector<double> eavesdropper_dists;
  std::vector<double> device_dists;
  std::size_t step_idx = 1;
  bool terminal = false;

  // Bookkeeping not exposed through the encoding.
  std::vector<NodeId> chain;           // s_1, s_2, ...
  std::vector<std::size_t> boundaries;  // layer index where each assigned segment ends
};

struct StepOutcome {
  EnvState next_state;
  double extrinsic_reward = 0.0;
  double leakage_bits = 0.0;       // sampled
  double leakage_norm = 0.0;       // sampled, normalized
  double expected_leakage_bits = 0.0;  // closed form for the same hop
  double delta_time = 0.0;
  double delta_energy = 0.0;
  std::size_t penalties = 0;
  bool done = false;
  std::vector<CaptureOutcome> captures;
};

struct RewardBounds {
  double lower = 0.0;
  double upper = 0.0;
};

class SplitEnv {
 public:
  SplitEnv(Scenario scn, ModelSpec model, EnvConfig cfg);

  const EnvState& reset(std::uint64_t seed);
  const EnvState& state() const { return state_; }
  std::vector<std::size_t> valid_actions(const EnvState& s) const;
  std::vector<bool> action_mask(const EnvState& s) const;
  StepOutcome step(std::size_t action_id);

  std::vector<double> encode_state(const EnvState& s) const;
  std::size_t state_dim() const;
  const ActionSpace& actions() const { return actions_; }
  RewardBounds reward_bounds() const;
  double leak_normalizer() const { return normalizer_; }

  const Scenario& scenario() const { return scn_; }
  const ModelSpec& model() const { return model_; }
  const EnvConfig& config() const { return cfg_; }
  const CostLedger& ledger() const { return ledger_; }
  const std::vector<Hop>& hops() const { return hops_; }
  // Plan and assignments are complete once step S has run.
  SplitPlan plan() const;
  std::size_t invalid_action_count() const { return invalid_actions_; }

 private:
  Scenario scn_;
  ModelSpec model_;
  EnvConfig cfg_;
  ActionSpace actions_;
  double normalizer_ = 1.0;
  EnvState state_;
  CostLedger ledger_;
  std::vector<Hop> hops_;
  Rng rng_{0};
  std::size_t invalid_actions_ = 0;

  void refresh_distances(EnvState& s) const;
  TransmissionSpec make_transmission(NodeId tx, NodeId rx, double payload, const Action& a) const;
};

std::uint64_t fnv1a(const std::vector<double>& v);
// Buckets every component into `levels` bins over [0, 1] and hashes the tuple.
std::uint64_t quantize_state(const std::vector<double>& enc, std::size_t levels = 8);

nlohmann::json trace_record(std::size_t step, const std::vector<double>& state_enc, std::size_t action,
                            const StepOutcome& out);

}  // namespace decoysl
