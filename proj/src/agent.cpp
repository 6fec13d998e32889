#include "decoysl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "decoysl/errors.hpp"

namespace decoysl::agent {

using nn::BlockSpec;
using nn::Tape;
using nn::Tensor;
using nn::Var;

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be nonnegative");
  if (!(zeta >= 0.0)) throw ConfigError("zeta must be nonnegative");
  if (history == 0) throw ConfigError("history length must be positive");
  if (batch == 0 || buffer == 0) throw ConfigError("batch and buffer sizes must be positive");
  if (!(q_epsilon >= 0.0 && q_epsilon <= 1.0)) throw ConfigError("q_epsilon must lie in [0, 1]");
}

double total_reward(double extrinsic, double curiosity, double zeta) {
  if (!(curiosity >= 0.0)) throw std::invalid_argument("curiosity reward must be nonnegative");
  return extrinsic + zeta * curiosity;
}

double advantage(double r, double v_s, double v_next, double gamma, bool done) {
  return done ? r - v_s : r + gamma * v_next - v_s;
}

HistoryWindow HistoryWindow::empty(std::size_t slots, std::size_t state_dim) {
  HistoryWindow h;
  h.states.assign(slots, std::vector<double>(state_dim, 0.0));
  h.actions.assign(slots, 0);
  h.valid.assign(slots, 0);
  return h;
}

void HistoryWindow::push(const std::vector<double>& s, std::size_t a) {
  std::rotate(states.begin(), states.begin() + 1, states.end());
  std::rotate(actions.begin(), actions.begin() + 1, actions.end());
  std::rotate(valid.begin(), valid.begin() + 1, valid.end());
  states.back() = s;
  actions.back() = a;
  valid.back() = 1;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::push(Experience e) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(e));
  } else {
    items_[head_] = std::move(e);
    head_ = (head_ + 1) % capacity_;
  }
}

const Experience& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw std::out_of_range("replay index");
  return items_[(head_ + i) % items_.size()];
}

std::vector<const Experience*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (items_.empty()) throw std::logic_error("sampling an empty replay buffer");
  std::vector<const Experience*> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(&items_[rng.index(items_.size())]);
  return out;
}

Actor::Actor(std::size_t state_dim, std::size_t action_count, const TrainConfig& cfg, std::uint64_t seed)
    : state_dim_(state_dim), actions_(action_count), slots_(cfg.history), no_ca_(cfg.no_ca) {
  Rng rng(seed);
  const std::size_t C = cfg.attn_dim;
  ws_w_ = ps_.add("attn.state.w", nn::init_uniform(C, state_dim, state_dim, rng));
  ws_b_ = ps_.add("attn.state.b", nn::init_uniform(1, C, state_dim, rng));
  action_embed_ = ps_.add("attn.action", nn::init_uniform(action_count, C, state_dim, rng));
  wq_ = ps_.add("attn.wq", nn::init_uniform(C, C, C, rng));
  wk_ = ps_.add("attn.wk", nn::init_uniform(C, C, C, rng));
  wv_ = ps_.add("attn.wv", nn::init_uniform(C, C, C, rng));
  const std::size_t in = no_ca_ ? state_dim : state_dim + C;
  body_ = nn::Net(ps_, "actor.body", in,
                  {{{BlockSpec::Kind::Dense, cfg.hidden, BlockSpec::Act::Tanh},
                    {BlockSpec::Kind::Residual, 0, BlockSpec::Act::Tanh}}},
                  rng);
  // Zero head: the initial policy is uniform over valid actions.
  head_w_ = ps_.add("actor.head.w", Tensor(action_count, cfg.hidden));
  head_b_ = ps_.add("actor.head.b", Tensor(1, action_count));
}

std::vector<std::size_t> Actor::all_ids() const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < ps_.size(); ++i)
    if (!no_ca_ || ps_.name(i).rfind("attn.", 0) != 0) ids.push_back(i);
  return ids;
}

Var Actor::combined_state(Tape& t, const std::vector<const std::vector<double>*>& states,
                          const std::vector<const HistoryWindow*>& histories) const {
  const std::size_t B = states.size();
  std::vector<const std::vector<double>*> hist_states;
  std::vector<std::size_t> hist_actions;
  std::vector<char> valid;
  for (const auto* h : histories) {
    if (h->states.size() != slots_) throw ShapeMismatch("history window length");
    for (std::size_t s = 0; s < slots_; ++s) {
      hist_states.push_back(&h->states[s]);
      hist_actions.push_back(h->actions[s]);
      valid.push_back(h->valid[s]);
    }
  }
  if (histories.size() != B) throw ShapeMismatch("one history per state");
  Var ws = t.param(ps_, ws_w_);
  Var bs = t.param(ps_, ws_b_);
  Var query_in = t.linear(t.constant(icm::stack_rows(states)), ws, bs);
  Var pairs = t.add(t.linear(t.constant(icm::stack_rows(hist_states)), ws, bs),
                    t.gather_rows(t.param(ps_, action_embed_), hist_actions));
  const std::size_t C = t.value(query_in).cols;
  Var zero = t.constant(Tensor(1, C));
  Var q = t.linear(query_in, t.param(ps_, wq_), zero);
  Var k = t.linear(pairs, t.param(ps_, wk_), zero);
  Var v = t.linear(pairs, t.param(ps_, wv_), zero);
  return t.attention(q, k, v, slots_, valid);
}

Var Actor::log_policy(Tape& t, const std::vector<const std::vector<double>*>& states,
                      const std::vector<const HistoryWindow*>& histories, const nn::Ragged& layout,
                      const std::vector<std::size_t>& rows) const {
  Var s = t.constant(icm::stack_rows(states));
  Var in = no_ca_ ? s : t.concat_cols({s, combined_state(t, states, histories)});
  Var h = body_.forward(t, ps_, in).y;
  Var logits = t.row_logits(h, t.param(ps_, head_w_), t.param(ps_, head_b_), layout, rows);
  return t.segment_log_softmax(logits, layout);
}

std::vector<double> Actor::policy(const std::vector<double>& state, const HistoryWindow& h,
                                  const std::vector<std::size_t>& valid) const {
  if (valid.empty()) throw std::invalid_argument("policy with every action masked");
  Tape t;
  nn::Ragged layout;
  layout.offsets.push_back(valid.size());
  Var logp = log_policy(t, {&state}, {&h}, layout, valid);
  std::vector<double> p = t.value(logp).values;
  for (double& v : p) v = std::exp(v);
  return p;
}

Critic::Critic(std::size_t state_dim, const TrainConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  net_ = nn::Net(ps_, "critic", state_dim,
                 {{{BlockSpec::Kind::Dense, cfg.hidden, BlockSpec::Act::Tanh},
                   {BlockSpec::Kind::Dense, cfg.hidden, BlockSpec::Act::Tanh},
                   {BlockSpec::Kind::Dense, 1, BlockSpec::Act::Identity}}},
                 rng);
}

Var Critic::values(Tape& t, const std::vector<const std::vector<double>*>& states) const {
  return net_.forward(t, ps_, t.constant(icm::stack_rows(states))).y;
}

double Critic::value(const std::vector<double>& state) const {
  Tape t;
  return t.value(values(t, {&state})).values[0];
}

std::vector<std::size_t> Critic::all_ids() const {
  std::vector<std::size_t> ids(ps_.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return ids;
}

nlohmann::json EpisodeMetrics::to_json() const {
  return {{"episode", episode},
          {"reward", reward},
          {"total_reward", total_reward},
          {"leakage_bits", leakage_bits},
          {"leakage_norm", leakage_norm},
          {"expected_leakage_bits", expected_leakage_bits},
          {"violations", violations},
          {"distinct_states", distinct_states},
          {"time_spent", time_spent},
          {"energy_spent", energy_spent},
          {"loss_critic", loss_critic},
          {"loss_actor", loss_actor},
          {"loss_inverse", loss_inverse},
          {"loss_forward", loss_forward},
          {"loss_extractor", loss_extractor},
          {"updates", updates}};
}

double RunResult::final_mean_reward(std::size_t last) const {
  if (episodes.empty()) return 0.0;
  const std::size_t n = std::min(last, episodes.size());
  double s = 0.0;
  for (std::size_t i = episodes.size() - n; i < episodes.size(); ++i) s += episodes[i].reward;
  return s / static_cast<double>(n);
}

double RunResult::final_mean_leakage(std::size_t last) const {
  if (episodes.empty()) return 0.0;
  const std::size_t n = std::min(last, episodes.size());
  double s = 0.0;
  for (std::size_t i = episodes.size() - n; i < episodes.size(); ++i) s += episodes[i].expected_leakage_bits;
  return s / static_cast<double>(n);
}

namespace {

std::uint64_t episode_seed(std::uint64_t seed, std::size_t ep) { return derive_seed(seed, 1000 + ep); }

std::size_t sample_index(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double c = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    c += probs[i];
    if (u < c) return i;
  }
  // Rounding left the cumulative sum just under 1; take the last supported entry.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0) return i;
  return probs.size() - 1;
}

void record_step(EpisodeMetrics& m, const StepOutcome& out) {
  m.reward += out.extrinsic_reward;
  m.leakage_bits += out.leakage_bits;
  m.leakage_norm += out.leakage_norm;
  m.expected_leakage_bits += out.expected_leakage_bits;
  m.violations += out.penalties;
}

void finish_episode(EpisodeMetrics& m, const SplitEnv& env) {
  m.time_spent = env.ledger().time_spent();
  m.energy_spent = env.ledger().energy_spent();
  if (m.updates) {
    const double n = static_cast<double>(m.updates);
    m.loss_critic /= n;
    m.loss_actor /= n;
    m.loss_inverse /= n;
    m.loss_forward /= n;
    m.loss_extractor /= n;
  }
}

// Shared episode loop for agents that pick one action per step.
template <typename Policy, typename Learn>
RunResult run_episodes(SplitEnv& env, const TrainConfig& cfg, const EpisodeHook& hook, Policy policy, Learn learn) {
  RunResult res;
  std::unordered_set<std::uint64_t> seen;
  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    env.reset(episode_seed(cfg.seed, ep));
    EpisodeMetrics m;
    m.episode = ep;
    for (;;) {
      const std::vector<double> s = env.encode_state(env.state());
      const std::vector<std::size_t> valid = env.valid_actions(env.state());
      seen.insert(quantize_state(s, cfg.q_levels));
      const std::size_t a = policy(s, valid);
      const StepOutcome out = env.step(a);
      record_step(m, out);
      learn(s, a, valid, out, m);
      if (out.done) break;
    }
    finish_episode(m, env);
    m.distinct_states = seen.size();
    if (ep + 1 == cfg.exploration_window) res.distinct_states_window = seen.size();
    res.episodes.push_back(m);
    if (hook) hook(m);
  }
  if (cfg.episodes < cfg.exploration_window) res.distinct_states_window = seen.size();
  res.invalid_actions = env.invalid_action_count();
  return res;
}

}  // namespace

IcmCaAgent::IcmCaAgent(std::size_t state_dim, std::size_t action_count, TrainConfig cfg)
    : cfg_(std::move(cfg)),
      actor_(state_dim, action_count, cfg_, derive_seed(cfg_.seed, 10)),
      critic_(state_dim, cfg_, derive_seed(cfg_.seed, 11)),
      icm_(state_dim, action_count, cfg_.icm, derive_seed(cfg_.seed, 12)),
      opt_actor_(actor_.all_ids(), {cfg_.optimizer, cfg_.eta_actor}),
      opt_critic_(critic_.all_ids(), {cfg_.optimizer, cfg_.eta_critic}) {
  cfg_.validate();
}

Var IcmCaAgent::critic_loss(Tape& t, const std::vector<const Experience*>& batch) const {
  std::vector<const std::vector<double>*> s, s2;
  Tensor r(batch.size(), 1), bootstrap(batch.size(), 1);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    s.push_back(&batch[i]->state);
    s2.push_back(&batch[i]->next_state);
    r.values[i] = batch[i]->total_reward;
    bootstrap.values[i] = batch[i]->done ? 0.0 : cfg_.gamma;
  }
  Var td = t.sub(t.add(t.constant(r), t.mul(t.constant(bootstrap), critic_.values(t, s2))), critic_.values(t, s));
  return t.mean(t.mul(td, td));
}

Var IcmCaAgent::actor_loss(Tape& t, const std::vector<const Experience*>& batch) const {
  std::vector<const std::vector<double>*> states;
  std::vector<const HistoryWindow*> histories;
  nn::Ragged layout;
  std::vector<std::size_t> rows, picks;
  Tensor y(batch.size(), 1);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Experience& e = *batch[i];
    states.push_back(&e.state);
    histories.push_back(&e.history);
    auto it = std::lower_bound(e.valid.begin(), e.valid.end(), e.action);
    if (it == e.valid.end() || *it != e.action) throw std::invalid_argument("stored action was not valid");
    picks.push_back(rows.size() + static_cast<std::size_t>(it - e.valid.begin()));
    rows.insert(rows.end(), e.valid.begin(), e.valid.end());
    layout.offsets.push_back(rows.size());
    y.values[i] = advantage(e.total_reward, critic_.value(e.state), critic_.value(e.next_state), cfg_.gamma, e.done);
  }
  Var logp = actor_.log_policy(t, states, histories, layout, rows);
  Var weighted = t.mul(t.pick(logp, picks), t.constant(y));
  Var ent = t.scale(t.segment_entropy(logp, layout), cfg_.alpha);
  Var inner = cfg_.entropy == EntropyTerm::AsWritten ? t.sub(weighted, ent) : t.add(weighted, ent);
  return t.scale(t.mean(inner), -1.0);
}

UpdateLosses IcmCaAgent::update(const std::vector<const Experience*>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty update batch");
  UpdateLosses l;
  if (!cfg_.no_icm) {
    std::vector<icm::Transition> trs;
    trs.reserve(batch.size());
    for (const auto* e : batch)
      trs.push_back({e->state, e->next_state, e->action, e->valid, e->hidden_forward, e->hidden_inverse});
    l.icm = icm_.update(trs);
  }
  {
    Tape t;
    Var loss = critic_loss(t, batch);
    l.critic = t.value(loss).values[0];
    critic_.params().zero_grad();
    t.backward(loss);
    opt_critic_.step(critic_.params());
  }
  {
    Tape t;
    Var loss = actor_loss(t, batch);
    l.actor = t.value(loss).values[0];
    actor_.params().zero_grad();
    t.backward(loss);
    opt_actor_.step(actor_.params());
  }
  if (!std::isfinite(l.critic) || !std::isfinite(l.actor) || !std::isfinite(l.icm.inverse) ||
      !std::isfinite(l.icm.forward) || !std::isfinite(l.icm.extractor))
    throw NonFinite("loss became non-finite during an update");
  return l;
}

RunResult IcmCaAgent::train(SplitEnv& env, const EpisodeHook& hook) {
  const std::size_t ds = env.state_dim();
  Rng act_rng(derive_seed(cfg_.seed, 1));
  Rng buf_rng(derive_seed(cfg_.seed, 2));
  ReplayBuffer buffer(cfg_.buffer);
  HistoryWindow history = HistoryWindow::empty(cfg_.history, ds);
  const double zeta = cfg_.no_icm ? 0.0 : cfg_.zeta;
  const RewardBounds rb = env.reward_bounds();
  const double curiosity_max = 0.5 * static_cast<double>(cfg_.icm.feature_dim);
  std::vector<double> hf = icm_.zero_hidden(), hi = icm_.zero_hidden();

  auto policy = [&](const std::vector<double>& s, const std::vector<std::size_t>& valid) {
    return valid[sample_index(actor_.policy(s, history, valid), act_rng)];
  };
  auto learn = [&](const std::vector<double>& s, std::size_t a, const std::vector<std::size_t>& valid,
                   const StepOutcome& out, EpisodeMetrics& m) {
    const std::vector<double> s2 = env.encode_state(out.next_state);
    double rc = 0.0;
    std::vector<double> hf_next = hf, hi_next = hi;
    if (!cfg_.no_icm) {
      const auto phi = icm_.extract(s);
      const auto phi2 = icm_.extract(s2);
      const auto pred = icm_.predict_next_feature(phi, a, hf);
      rc = icm::intrinsic_reward(phi2, pred.value);
      hf_next = pred.hidden;
      icm_.predict_action_dist(phi, phi2, hi, valid, &hi_next);
    }
    const double r = total_reward(out.extrinsic_reward, rc, zeta);
    if (!(r >= rb.lower - 1e-9 && r <= zeta * curiosity_max + 1e-12))
      throw RewardOutOfBounds("total reward outside the bounded range");
    m.total_reward += r;
    Experience e{s, a, r, out.extrinsic_reward, s2, out.done, valid, history, hf, hi};
    buffer.push(std::move(e));
    history.push(s, a);
    hf = out.done ? icm_.zero_hidden() : hf_next;
    hi = out.done ? icm_.zero_hidden() : hi_next;
    if (buffer.size() >= std::max(cfg_.warmup, std::size_t{1})) {
      const UpdateLosses l = update(buffer.sample(cfg_.batch, buf_rng));
      m.loss_critic += l.critic;
      m.loss_actor += l.actor;
      m.loss_inverse += l.icm.inverse;
      m.loss_forward += l.icm.forward;
      m.loss_extractor += l.icm.extractor;
      ++m.updates;
    }
  };
  return run_episodes(env, cfg_, hook, policy, learn);
}

std::vector<std::size_t> IcmCaAgent::greedy_episode(SplitEnv& env, std::uint64_t seed) const {
  env.reset(seed);
  HistoryWindow history = HistoryWindow::empty(cfg_.history, env.state_dim());
  std::vector<std::size_t> chosen;
  for (;;) {
    const auto s = env.encode_state(env.state());
    const auto valid = env.valid_actions(env.state());
    const auto p = actor_.policy(s, history, valid);
    const std::size_t a = valid[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())];
    chosen.push_back(a);
    history.push(s, a);
    if (env.step(a).done) break;
  }
  return chosen;
}

void IcmCaAgent::save(const std::string& path) const {
  nn::save_checkpoint(path, {&actor_.params(), &critic_.params(), &icm_.params()});
}

void IcmCaAgent::load(const std::string& path) {
  nn::load_checkpoint(path, {&actor_.params(), &critic_.params(), &icm_.params()});
}

double QTable::get(std::uint64_t s, std::size_t a) const {
  auto it = table_.find(s);
  if (it == table_.end()) return 0.0;
  auto jt = it->second.find(a);
  return jt == it->second.end() ? 0.0 : jt->second;
}

double QTable::max_over(std::uint64_t s, const std::vector<std::size_t>& valid) const {
  double best = -INFINITY;
  for (std::size_t a : valid) best = std::max(best, get(s, a));
  return best;
}

std::size_t QTable::greedy(std::uint64_t s, const std::vector<std::size_t>& valid, Rng& rng) const {
  const double best = max_over(s, valid);
  std::vector<std::size_t> ties;
  for (std::size_t a : valid)
    if (get(s, a) == best) ties.push_back(a);
  return ties[rng.index(ties.size())];
}

void QTable::update(std::uint64_t s, std::size_t a, double r, double next_max, double lr, double gamma, bool done) {
  const double target = done ? r : r + gamma * next_max;
  const double q = get(s, a);
  set(s, a, q + lr * (target - q));
}

RunResult q_baseline_train(SplitEnv& env, const TrainConfig& cfg, const EpisodeHook& hook) {
  cfg.validate();
  QTable q;
  Rng rng(derive_seed(cfg.seed, 1));
  auto policy = [&](const std::vector<double>& s, const std::vector<std::size_t>& valid) {
    if (rng.bernoulli(cfg.q_epsilon)) return valid[rng.index(valid.size())];
    return q.greedy(quantize_state(s, cfg.q_levels), valid, rng);
  };
  auto learn = [&](const std::vector<double>& s, std::size_t a, const std::vector<std::size_t>&,
                   const StepOutcome& out, EpisodeMetrics&) {
    double next_max = 0.0;
    if (!out.done)
      next_max = q.max_over(quantize_state(env.encode_state(out.next_state), cfg.q_levels),
                            env.valid_actions(out.next_state));
    q.update(quantize_state(s, cfg.q_levels), a, out.extrinsic_reward, next_max, cfg.q_lr, cfg.gamma, out.done);
  };
  return run_episodes(env, cfg, hook, policy, learn);
}

RunResult random_policy_run(SplitEnv& env, const TrainConfig& cfg, const EpisodeHook& hook) {
  Rng rng(derive_seed(cfg.seed, 1));
  auto policy = [&](const std::vector<double>&, const std::vector<std::size_t>& valid) {
    return valid[rng.index(valid.size())];
  };
  auto learn = [](const std::vector<double>&, std::size_t, const std::vector<std::size_t>&, const StepOutcome&,
                  EpisodeMetrics&) {};
  return run_episodes(env, cfg, hook, policy, learn);
}

}  // namespace decoysl::agent
