#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "decoysl/neuralnet.hpp"

namespace decoysl::icm {

struct IcmConfig {
  std::size_t feature_dim = 32;
  std::size_t hidden = 64;
  std::size_t gru_hidden = 32;
  double eta1 = 1e-3;  // inverse loss on theta_I and theta_E
  double eta2 = 1e-3;  // forward loss on theta_F
  double eta3 = 1e-3;  // combined loss on theta_E
  double upsilon = 5.0;
  double zeta = 0.3;
  double prob_floor = 1e-12;
  // Skip the theta_E update in the inverse step so only the combined loss
  // trains the extractor.
  bool extractor_combined_only = false;
  nn::OptimizerConfig::Kind optimizer = nn::OptimizerConfig::Kind::Adam;
};

struct Transition {
  std::vector<double> state;
  std::vector<double> next_state;
  std::size_t action = 0;
  std::vector<std::size_t> valid;  // valid action ids at `state`, ascending
  std::vector<double> hidden_forward;
  std::vector<double> hidden_inverse;
};

struct Losses {
  double inverse = 0.0;
  double forward = 0.0;
  double extractor = 0.0;
};

class Icm {
 public:
  Icm(std::size_t state_dim, std::size_t action_count, IcmConfig cfg, std::uint64_t seed);

  std::vector<double> extract(const std::vector<double>& state) const;
  struct Prediction {
    std::vector<double> value;
    std::vector<double> hidden;
  };
  Prediction predict_next_feature(const std::vector<double>& phi, std::size_t action,
                                  const std::vector<double>& hidden) const;
  // Distribution over `valid` (same order); probability 0 elsewhere.
  std::vector<double> predict_action_dist(const std::vector<double>& phi, const std::vector<double>& phi_next,
                                          const std::vector<double>& hidden, const std::vector<std::size_t>& valid,
                                          std::vector<double>* new_hidden = nullptr) const;
  std::vector<double> zero_hidden() const { return std::vector<double>(cfg_.gru_hidden, 0.0); }

  Losses update(const std::vector<Transition>& batch);

  // Loss graphs, exposed for gradient checks.
  nn::Var inverse_loss(nn::Tape& t, const std::vector<Transition>& batch);
  nn::Var forward_loss(nn::Tape& t, const std::vector<Transition>& batch);
  nn::Var combined_loss(nn::Tape& t, const std::vector<Transition>& batch);

  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }
  const std::vector<std::size_t>& extractor_ids() const { return ext_ids_; }
  const std::vector<std::size_t>& forward_ids() const { return fwd_ids_; }
  const std::vector<std::size_t>& inverse_ids() const { return inv_ids_; }
  const IcmConfig& config() const { return cfg_; }

 private:
  IcmConfig cfg_;
  std::size_t state_dim_, actions_;
  mutable nn::ParamStore ps_;
  nn::Net extractor_, forward_body_, inverse_body_;
  std::size_t fwd_in_w_, fwd_in_b_, fwd_action_embed_, inv_head_w_, inv_head_b_;
  std::vector<std::size_t> ext_ids_, fwd_ids_, inv_ids_;
  nn::Optimizer opt_inverse_, opt_forward_, opt_extractor_;

  nn::Var features(nn::Tape& t, const std::vector<const std::vector<double>*>& rows) const;
  nn::Var forward_pred(nn::Tape& t, nn::Var phi, const std::vector<std::size_t>& actions, nn::Var hidden,
                       nn::Var* new_hidden) const;
  nn::Var inverse_logp(nn::Tape& t, nn::Var phi, nn::Var phi_next, nn::Var hidden, const nn::Ragged& layout,
                       const std::vector<std::size_t>& rows, nn::Var* new_hidden) const;
};

double intrinsic_reward(const std::vector<double>& phi, const std::vector<double>& phi_hat);

nn::Tensor stack_rows(const std::vector<const std::vector<double>*>& rows);

}  // namespace decoysl::icm
