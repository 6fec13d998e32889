#include "decoysl/icm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "decoysl/errors.hpp"

namespace decoysl::icm {

using nn::BlockSpec;
using nn::Tape;
using nn::Tensor;
using nn::Var;

nn::Tensor stack_rows(const std::vector<const std::vector<double>*>& rows) {
  if (rows.empty()) throw ShapeMismatch("empty batch");
  Tensor t(rows.size(), rows[0]->size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i]->size() != t.cols) throw ShapeMismatch("ragged batch rows");
    std::copy(rows[i]->begin(), rows[i]->end(), t.row_ptr(i));
  }
  return t;
}

double intrinsic_reward(const std::vector<double>& phi, const std::vector<double>& phi_hat) {
  if (phi.size() != phi_hat.size()) throw ShapeMismatch("feature dims differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    const double d = phi[i] - phi_hat[i];
    acc += d * d;
  }
  return 0.5 * acc;
}

Icm::Icm(std::size_t state_dim, std::size_t action_count, IcmConfig cfg, std::uint64_t seed)
    : cfg_(cfg), state_dim_(state_dim), actions_(action_count), opt_inverse_({}, {}), opt_forward_({}, {}),
      opt_extractor_({}, {}) {
  Rng rng(seed);
  const std::size_t H = cfg_.hidden, F = cfg_.feature_dim, G = cfg_.gru_hidden;
  extractor_ = nn::Net(ps_, "ext", state_dim,
                       {{{BlockSpec::Kind::Dense, H, BlockSpec::Act::Tanh},
                         {BlockSpec::Kind::Residual, 0, BlockSpec::Act::Tanh},
                         {BlockSpec::Kind::Dense, F, BlockSpec::Act::Sigmoid}}},
                       rng);
  ext_ids_ = ps_.ids_with_prefix("ext.");

  fwd_in_w_ = ps_.add("fwd.in.w", nn::init_uniform(H, F, F + 1, rng));
  fwd_in_b_ = ps_.add("fwd.in.b", nn::init_uniform(1, H, F + 1, rng));
  fwd_action_embed_ = ps_.add("fwd.in.action", nn::init_uniform(action_count, H, F + 1, rng));
  forward_body_ = nn::Net(ps_, "fwd.body", H,
                          {{{BlockSpec::Kind::Residual, 0, BlockSpec::Act::Tanh},
                            {BlockSpec::Kind::Gru, G, BlockSpec::Act::Tanh},
                            {BlockSpec::Kind::Dense, F, BlockSpec::Act::Sigmoid}}},
                          rng);
  fwd_ids_ = ps_.ids_with_prefix("fwd.");

  inverse_body_ = nn::Net(ps_, "inv.body", 2 * F,
                          {{{BlockSpec::Kind::Dense, H, BlockSpec::Act::Tanh},
                            {BlockSpec::Kind::Residual, 0, BlockSpec::Act::Tanh},
                            {BlockSpec::Kind::Gru, G, BlockSpec::Act::Tanh}}},
                          rng);
  // Zero head: the initial prediction is uniform over the valid actions.
  inv_head_w_ = ps_.add("inv.head.w", Tensor(action_count, G));
  inv_head_b_ = ps_.add("inv.head.b", Tensor(1, action_count));
  inv_ids_ = ps_.ids_with_prefix("inv.");

  auto opt = [&](double lr) {
    nn::OptimizerConfig oc;
    oc.kind = cfg_.optimizer;
    oc.lr = lr;
    return oc;
  };
  std::vector<std::size_t> inv_and_ext = inv_ids_;
  if (!cfg_.extractor_combined_only) inv_and_ext.insert(inv_and_ext.end(), ext_ids_.begin(), ext_ids_.end());
  opt_inverse_ = nn::Optimizer(inv_and_ext, opt(cfg_.eta1));
  opt_forward_ = nn::Optimizer(fwd_ids_, opt(cfg_.eta2));
  opt_extractor_ = nn::Optimizer(ext_ids_, opt(cfg_.eta3));
}

Var Icm::features(Tape& t, const std::vector<const std::vector<double>*>& rows) const {
  return extractor_.forward(t, ps_, t.constant(stack_rows(rows))).y;
}

Var Icm::forward_pred(Tape& t, Var phi, const std::vector<std::size_t>& actions, Var hidden, Var* new_hidden) const {
  Var x = t.linear(phi, t.param(ps_, fwd_in_w_), t.param(ps_, fwd_in_b_));
  x = t.tanh(t.add(x, t.gather_rows(t.param(ps_, fwd_action_embed_), actions)));
  auto out = forward_body_.forward(t, ps_, x, hidden);
  if (new_hidden) *new_hidden = *out.hidden;
  return out.y;
}

Var Icm::inverse_logp(Tape& t, Var phi, Var phi_next, Var hidden, const nn::Ragged& layout,
                      const std::vector<std::size_t>& rows, Var* new_hidden) const {
  auto out = inverse_body_.forward(t, ps_, t.concat_cols({phi, phi_next}), hidden);
  if (new_hidden) *new_hidden = *out.hidden;
  Var logits = t.row_logits(out.y, t.param(ps_, inv_head_w_), t.param(ps_, inv_head_b_), layout, rows);
  return t.segment_log_softmax(logits, layout);
}

std::vector<double> Icm::extract(const std::vector<double>& state) const {
  Tape t;
  return t.value(features(t, {&state})).values;
}

Icm::Prediction Icm::predict_next_feature(const std::vector<double>& phi, std::size_t action,
                                          const std::vector<double>& hidden) const {
  if (phi.size() != cfg_.feature_dim || hidden.size() != cfg_.gru_hidden) throw ShapeMismatch("forward model input");
  if (action >= actions_) throw ShapeMismatch("action id out of range");
  Tape t;
  Var h;
  Var y = forward_pred(t, t.constant(Tensor::row(phi)), {action}, t.constant(Tensor::row(hidden)), &h);
  return {t.value(y).values, t.value(h).values};
}

std::vector<double> Icm::predict_action_dist(const std::vector<double>& phi, const std::vector<double>& phi_next,
                                             const std::vector<double>& hidden, const std::vector<std::size_t>& valid,
                                             std::vector<double>* new_hidden) const {
  if (valid.empty()) throw std::invalid_argument("no valid actions");
  Tape t;
  nn::Ragged layout;
  layout.offsets.push_back(valid.size());
  Var h;
  Var logp = inverse_logp(t, t.constant(Tensor::row(phi)), t.constant(Tensor::row(phi_next)),
                          t.constant(Tensor::row(hidden)), layout, valid, &h);
  if (new_hidden) *new_hidden = t.value(h).values;
  std::vector<double> p = t.value(logp).values;
  for (double& v : p) v = std::exp(v);
  return p;
}

namespace {

struct BatchViews {
  std::vector<const std::vector<double>*> s, s2, hf, hi;
  std::vector<std::size_t> actions;
  nn::Ragged layout;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> picks;
};

BatchViews views(const std::vector<Transition>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty ICM batch");
  BatchViews v;
  for (const auto& tr : batch) {
    v.s.push_back(&tr.state);
    v.s2.push_back(&tr.next_state);
    v.hf.push_back(&tr.hidden_forward);
    v.hi.push_back(&tr.hidden_inverse);
    v.actions.push_back(tr.action);
    auto it = std::lower_bound(tr.valid.begin(), tr.valid.end(), tr.action);
    if (it == tr.valid.end() || *it != tr.action) throw std::invalid_argument("stored action was not valid");
    v.picks.push_back(v.rows.size() + static_cast<std::size_t>(it - tr.valid.begin()));
    v.rows.insert(v.rows.end(), tr.valid.begin(), tr.valid.end());
    v.layout.offsets.push_back(v.rows.size());
  }
  return v;
}

}  // namespace

Var Icm::inverse_loss(Tape& t, const std::vector<Transition>& batch) {
  const BatchViews v = views(batch);
  Var logp = inverse_logp(t, features(t, v.s), features(t, v.s2), t.constant(stack_rows(v.hi)), v.layout, v.rows,
                          nullptr);
  Var picked = t.clamp_min(t.pick(logp, v.picks), std::log(cfg_.prob_floor));
  return t.scale(t.mean(picked), -1.0);
}

Var Icm::forward_loss(Tape& t, const std::vector<Transition>& batch) {
  const BatchViews v = views(batch);
  Var phi_next = features(t, v.s2);
  Var pred = forward_pred(t, features(t, v.s), v.actions, t.constant(stack_rows(v.hf)), nullptr);
  Var d = t.sub(pred, phi_next);
  return t.scale(t.sum(t.mul(d, d)), 0.5 / static_cast<double>(batch.size()));
}

Var Icm::combined_loss(Tape& t, const std::vector<Transition>& batch) {
  Var lf = forward_loss(t, batch);
  Var li = inverse_loss(t, batch);
  return t.add(lf, t.scale(li, cfg_.upsilon));
}

Losses Icm::update(const std::vector<Transition>& batch) {
  Losses l;
  {
    Tape t;
    Var loss = inverse_loss(t, batch);
    l.inverse = t.value(loss).values[0];
    ps_.zero_grad(opt_inverse_.params());
    t.backward(loss);
    opt_inverse_.step(ps_);
  }
  {
    Tape t;
    Var loss = forward_loss(t, batch);
    l.forward = t.value(loss).values[0];
    ps_.zero_grad(opt_forward_.params());
    t.backward(loss);
    opt_forward_.step(ps_);
  }
  {
    Tape t;
    Var loss = combined_loss(t, batch);
    l.extractor = t.value(loss).values[0];
    ps_.zero_grad(opt_extractor_.params());
    t.backward(loss);
    opt_extractor_.step(ps_);
  }
  return l;
}

}  // namespace decoysl::icm
