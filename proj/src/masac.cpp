#include "tsclab/masac.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "tsclab/errors.hpp"

namespace tsclab {

double policy_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

void MasacConfig::validate() const {
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (episodes < 0) throw ConfigError("episodes must be nonnegative");
  if (episode_len <= 0 || episode_len % kDecisionPeriod != 0) {
    throw ConfigError("episode_len must be a positive multiple of 10 s");
  }
  if (thres_size < batch_size) {
    throw ConfigError("thres_size must be at least the batch size");
  }
  if (lr_actor <= 0 || lr_critic <= 0 || lr_alpha <= 0) {
    throw ConfigError("learning rates must be positive");
  }
  if (gamma < 0 || gamma > 1) throw ConfigError("gamma must lie in [0,1]");
  if (rho < 0 || rho > 1) throw ConfigError("rho must lie in [0,1]");
  if (reward_scale <= 0 || obs_scale <= 0) {
    throw ConfigError("reward and observation scales must be positive");
  }
  hg.validate();
}

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity <= 0) throw ConfigError("replay capacity must be positive");
  data_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
  if (size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[next_] = std::move(t);
    next_ = (next_ + 1) % capacity_;
  }
}

std::vector<const Transition*> ReplayBuffer::sample(int batch, Rng& rng) const {
  if (batch > size()) throw ConfigError("cannot sample more transitions than stored");
  std::vector<int> indices(size());
  for (int i = 0; i < size(); ++i) indices[i] = i;
  std::vector<const Transition*> out;
  out.reserve(batch);
  for (int k = 0; k < batch; ++k) {
    int j = k + rng.uniform_int(size() - k);
    std::swap(indices[k], indices[j]);
    out.push_back(&data_[indices[k]]);
  }
  return out;
}

namespace {

Tensor init_linear(int fan_in, int fan_out, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::uniform(fan_in, fan_out, -bound, bound, rng, true);
}

constexpr int kHidden = 64;

}  // namespace

// Output layers start at zero: the initial policy is exactly uniform and
// initial Q values are zero, so early TD targets are anchored by rewards
// instead of random-network noise.
ActorNet::ActorNet(int obs_dim, Rng& rng)
    : w1(init_linear(obs_dim, kHidden, rng)),
      b1(Tensor::zeros(1, kHidden, true)),
      w2(init_linear(kHidden, kHidden, rng)),
      b2(Tensor::zeros(1, kHidden, true)),
      w3(Tensor::zeros(kHidden, kPhaseCount, true)),
      b3(Tensor::zeros(1, kPhaseCount, true)) {}

Tensor ActorNet::logits(const Tensor& obs_batch) const {
  Tensor h1 = relu(add(matmul(obs_batch, w1), b1));
  Tensor h2 = relu(add(matmul(h1, w2), b2));
  return add(matmul(h2, w3), b3);
}

Tensor ActorNet::probs(const Tensor& obs_batch) const {
  return softmax(logits(obs_batch), 1);
}

NamedTensors ActorNet::parameters(const std::string& prefix) const {
  return {{prefix + "/w1", w1}, {prefix + "/b1", b1}, {prefix + "/w2", w2},
          {prefix + "/b2", b2}, {prefix + "/w3", w3}, {prefix + "/b3", b3}};
}

CriticNet::CriticNet(int in_dim, Rng& rng)
    : w1(init_linear(in_dim, kHidden, rng)),
      b1(Tensor::zeros(1, kHidden, true)),
      w2(Tensor::zeros(kHidden, kPhaseCount, true)),
      b2(Tensor::zeros(1, kPhaseCount, true)) {}

Tensor CriticNet::forward(const Tensor& input_batch) const {
  return add(matmul(relu(add(matmul(input_batch, w1), b1)), w2), b2);
}

NamedTensors CriticNet::parameters(const std::string& prefix) const {
  return {{prefix + "/w1", w1}, {prefix + "/b1", b1}, {prefix + "/w2", w2},
          {prefix + "/b2", b2}};
}

void CriticNet::copy_values_from(const CriticNet& other) {
  w1.mutable_values() = other.w1.values();
  b1.mutable_values() = other.b1.values();
  w2.mutable_values() = other.w2.values();
  b2.mutable_values() = other.b2.values();
}

void soft_update(const Tensor& main, Tensor& target, double rho, bool flipped) {
  if (main.size() != target.size()) throw ShapeMismatch("soft_update: size mismatch");
  auto& t = target.mutable_values();
  const auto& m = main.values();
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = flipped ? rho * m[i] + (1.0 - rho) * t[i] : rho * t[i] + (1.0 - rho) * m[i];
  }
}

MasacTrainer::MasacTrainer(const RoadNetwork& net, const FlowSpec& flow,
                           const MasacConfig& cfg, std::uint64_t seed)
    : net_(&net),
      flow_(&flow),
      cfg_(cfg),
      seed_(seed),
      n_(net.agent_count()),
      critic_in_(2 * cfg.hg.d_embed + kPhaseCount * (net.agent_count() - 1)),
      init_rng_(mix_seed(seed, 1)),
      encoder_(cfg.hg, net.agent_count(), kObsDim, init_rng_),
      buffer_(cfg.thres_size),
      rng_actions_(mix_seed(seed, 2)),
      rng_sample_(mix_seed(seed, 3)) {
  cfg_.validate();
  Rng& init_rng = init_rng_;
  for (int i = 0; i < n_; ++i) {
    actors_.emplace_back(kObsDim, init_rng);
    critics1_.emplace_back(critic_in_, init_rng);
    critics2_.emplace_back(critic_in_, init_rng);
    target1_.emplace_back(critic_in_, init_rng);
    target2_.emplace_back(critic_in_, init_rng);
    target1_[i].copy_values_from(critics1_[i]);
    target2_[i].copy_values_from(critics2_[i]);
    log_alpha_.push_back(Tensor::scalar(0.0, true));  // alpha starts at 1
  }

  std::vector<Tensor> critic_params;
  for (int i = 0; i < n_; ++i) {
    for (auto& [name, t] : critics1_[i].parameters("")) critic_params.push_back(t);
    for (auto& [name, t] : critics2_[i].parameters("")) critic_params.push_back(t);
  }
  for (auto& [name, t] : encoder_.parameters()) critic_params.push_back(t);
  opt_critic_.emplace(std::move(critic_params), cfg_.lr_critic);

  std::vector<Tensor> actor_params;
  for (int i = 0; i < n_; ++i) {
    for (auto& [name, t] : actors_[i].parameters("")) actor_params.push_back(t);
  }
  opt_actor_.emplace(std::move(actor_params), cfg_.lr_actor);

  opt_alpha_.emplace(log_alpha_, cfg_.lr_alpha);
}

ObsMatrix MasacTrainer::scale_obs(const ObsMatrix& raw) const {
  ObsMatrix scaled = raw;
  for (auto& row : scaled) {
    for (int j = kPhaseCount; j < kObsDim; ++j) row[j] /= cfg_.obs_scale;
  }
  return scaled;
}

int MasacTrainer::sample_phase(std::span<const double> probs, Rng& rng) {
  return 1 + rng.categorical(probs);
}

int MasacTrainer::greedy_phase(std::span<const double> probs) {
  int best = 0;
  for (std::size_t a = 1; a < probs.size(); ++a) {
    if (probs[a] > probs[best]) best = static_cast<int>(a);
  }
  return 1 + best;
}

std::vector<double> MasacTrainer::actor_probs(int agent, const ObsRow& scaled_obs) const {
  NoGradGuard guard;
  Tensor obs = Tensor::from(std::vector<double>(scaled_obs.begin(), scaled_obs.end()), 1,
                            kObsDim);
  Tensor p = actors_[agent].probs(obs);
  return p.values();
}

std::vector<int> MasacTrainer::select_actions(const ObsMatrix& raw_obs, ActionMode mode) {
  ObsMatrix scaled = scale_obs(raw_obs);
  std::vector<int> phases(n_);
  for (int i = 0; i < n_; ++i) {
    std::vector<double> p = actor_probs(i, scaled[i]);
    phases[i] = mode == ActionMode::Sample ? sample_phase(p, rng_actions_)
                                           : greedy_phase(p);
  }
  return phases;
}

Tensor MasacTrainer::critic_input(int agent, const std::vector<EncodeResult>& encodes,
                                  const std::vector<std::vector<int>>& joint_actions) const {
  const int B = static_cast<int>(encodes.size());
  std::vector<Tensor> embed_rows, readout_rows;
  embed_rows.reserve(B);
  readout_rows.reserve(B);
  for (const auto& enc : encodes) {
    embed_rows.push_back(enc.node_embeddings[agent]);
    readout_rows.push_back(enc.readout);
  }
  Tensor embeds = concat(embed_rows, 0);
  Tensor readouts = concat(readout_rows, 0);

  const int others_dim = kPhaseCount * (n_ - 1);
  std::vector<double> onehots(static_cast<std::size_t>(B) * others_dim, 0.0);
  for (int b = 0; b < B; ++b) {
    int slot = 0;
    for (int j = 0; j < n_; ++j) {
      if (j == agent) continue;
      onehots[b * others_dim + slot * kPhaseCount + joint_actions[b][j] - 1] = 1.0;
      ++slot;
    }
  }
  Tensor actions = Tensor::from(std::move(onehots), B, others_dim);
  std::vector<Tensor> parts{embeds, actions, readouts};
  return concat(parts, 1);
}

MasacTrainer::TargetPass MasacTrainer::target_pass(
    const std::vector<const Transition*>& batch) const {
  NoGradGuard guard;
  const int B = static_cast<int>(batch.size());

  std::vector<EncodeResult> encodes_next;
  encodes_next.reserve(B);
  for (const Transition* t : batch) {
    encodes_next.push_back(encoder_.encode(t->o_tp1, t->o_t));
  }

  // next-step policies and their argmax joint conditioning
  std::vector<Tensor> probs_next(n_);
  std::vector<std::vector<int>> greedy_next(B, std::vector<int>(n_));
  for (int j = 0; j < n_; ++j) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(B) * kObsDim);
    for (const Transition* t : batch) {
      data.insert(data.end(), t->o_tp1[j].begin(), t->o_tp1[j].end());
    }
    probs_next[j] = actors_[j].probs(Tensor::from(std::move(data), B, kObsDim));
    for (int b = 0; b < B; ++b) {
      int best = 0;
      for (int a = 1; a < kPhaseCount; ++a) {
        if (probs_next[j](b, a) > probs_next[j](b, best)) best = a;
      }
      greedy_next[b][j] = best + 1;
    }
  }

  TargetPass out;
  out.y.assign(n_, std::vector<double>(B, 0.0));
  for (int i = 0; i < n_; ++i) {
    Tensor input = critic_input(i, encodes_next, greedy_next);
    Tensor q1 = target1_[i].forward(input);
    Tensor q2 = target2_[i].forward(input);
    const double alpha = std::exp(log_alpha_[i].values()[0]);
    for (int b = 0; b < B; ++b) {
      double expectation = 0.0;
      for (int a = 0; a < kPhaseCount; ++a) {
        double qmin = std::min(q1(b, a), q2(b, a));
        double p = probs_next[i](b, a);
        expectation += p * (qmin - alpha * std::log(p));
      }
      out.y[i][b] = batch[b]->rewards[i] + cfg_.gamma * expectation;
    }
  }
  return out;
}

MasacTrainer::OnlineForward MasacTrainer::online_forward(
    const std::vector<const Transition*>& batch, const TargetPass& targets,
    double beta) const {
  const int B = static_cast<int>(batch.size());

  std::vector<EncodeResult> encodes;
  encodes.reserve(B);
  for (const Transition* t : batch) {
    encodes.push_back(encoder_.encode(t->o_t, t->o_tm1));
  }
  std::vector<std::vector<int>> taken(B);
  for (int b = 0; b < B; ++b) taken[b] = batch[b]->actions;

  OnlineForward fwd;
  Tensor td_sum;
  for (int i = 0; i < n_; ++i) {
    Tensor input = critic_input(i, encodes, taken);
    Tensor q1 = critics1_[i].forward(input);
    Tensor q2 = critics2_[i].forward(input);

    std::vector<int> own(B);
    for (int b = 0; b < B; ++b) own[b] = batch[b]->actions[i] - 1;
    Tensor y = Tensor::from(std::vector<double>(targets.y[i]), B, 1);
    Tensor td = add(mse(take_per_row(q1, own), y), mse(take_per_row(q2, own), y));
    td_sum = td_sum.defined() ? add(td_sum, td) : td;

    std::vector<double> qmin(static_cast<std::size_t>(B) * kPhaseCount);
    for (int b = 0; b < B; ++b) {
      for (int a = 0; a < kPhaseCount; ++a) {
        qmin[b * kPhaseCount + a] = std::min(q1(b, a), q2(b, a));
      }
    }
    fwd.q_min_detached.push_back(Tensor::from(std::move(qmin), B, kPhaseCount));

    std::vector<double> obs_data;
    obs_data.reserve(static_cast<std::size_t>(B) * kObsDim);
    for (const Transition* t : batch) {
      obs_data.insert(obs_data.end(), t->o_t[i].begin(), t->o_t[i].end());
    }
    fwd.obs_t_batches.push_back(Tensor::from(std::move(obs_data), B, kObsDim));
  }

  Tensor recon_sum;
  for (const auto& enc : encodes) {
    recon_sum = recon_sum.defined() ? add(recon_sum, enc.recon_loss) : enc.recon_loss;
  }

  Tensor td_term = scalar_mul(td_sum, 1.0 / (2.0 * n_));
  Tensor recon_term = scalar_mul(recon_sum, 1.0 / B);
  fwd.critic_loss =
      add(scalar_mul(td_term, 1.0 - beta), scalar_mul(recon_term, beta));
  fwd.parts = {fwd.critic_loss.item(), td_term.item(), recon_term.item()};
  return fwd;
}

std::vector<std::vector<double>> MasacTrainer::td_targets(
    const std::vector<const Transition*>& batch) const {
  return target_pass(batch).y;
}

Tensor MasacTrainer::critic_loss_tensor(const std::vector<const Transition*>& batch,
                                        const std::vector<std::vector<double>>& y,
                                        double beta) const {
  TargetPass targets;
  targets.y = y;
  return online_forward(batch, targets, beta).critic_loss;
}

std::vector<std::array<double, 4>> MasacTrainer::online_q_values(
    const std::vector<const Transition*>& batch, int agent, int which) const {
  NoGradGuard guard;
  const int B = static_cast<int>(batch.size());
  std::vector<EncodeResult> encodes;
  encodes.reserve(B);
  for (const Transition* t : batch) encodes.push_back(encoder_.encode(t->o_t, t->o_tm1));
  std::vector<std::vector<int>> taken(B);
  for (int b = 0; b < B; ++b) taken[b] = batch[b]->actions;
  Tensor input = critic_input(agent, encodes, taken);
  Tensor q = which == 1 ? critics1_[agent].forward(input) : critics2_[agent].forward(input);
  std::vector<std::array<double, 4>> out(B);
  for (int b = 0; b < B; ++b) {
    for (int a = 0; a < kPhaseCount; ++a) out[b][a] = q(b, a);
  }
  return out;
}

std::vector<Tensor> MasacTrainer::critic_parameter_set() const {
  std::vector<Tensor> params;
  for (int i = 0; i < n_; ++i) {
    for (auto& [name, t] : critics1_[i].parameters("")) params.push_back(t);
    for (auto& [name, t] : critics2_[i].parameters("")) params.push_back(t);
  }
  for (auto& [name, t] : encoder_.parameters()) params.push_back(t);
  return params;
}

CriticLossParts MasacTrainer::critic_loss_parts(
    const std::vector<const Transition*>& batch, double beta) const {
  NoGradGuard guard;
  return online_forward(batch, target_pass(batch), beta).parts;
}

std::vector<std::array<double, 4>> MasacTrainer::target_q_min(
    const std::vector<const Transition*>& batch, int agent) const {
  NoGradGuard guard;
  const int B = static_cast<int>(batch.size());
  std::vector<EncodeResult> encodes_next;
  for (const Transition* t : batch) {
    encodes_next.push_back(encoder_.encode(t->o_tp1, t->o_t));
  }
  std::vector<std::vector<int>> greedy_next(B, std::vector<int>(n_));
  for (int j = 0; j < n_; ++j) {
    for (int b = 0; b < B; ++b) {
      std::vector<double> p = actor_probs(j, batch[b]->o_tp1[j]);
      greedy_next[b][j] = greedy_phase(p);
    }
  }
  Tensor input = critic_input(agent, encodes_next, greedy_next);
  Tensor q1 = target1_[agent].forward(input);
  Tensor q2 = target2_[agent].forward(input);
  std::vector<std::array<double, 4>> out(B);
  for (int b = 0; b < B; ++b) {
    for (int a = 0; a < kPhaseCount; ++a) out[b][a] = std::min(q1(b, a), q2(b, a));
  }
  return out;
}

UpdateStats MasacTrainer::update_once(bool with_soft_update) {
  const int B = cfg_.batch_size;
  auto batch = buffer_.sample(B, rng_sample_);

  TargetPass targets = target_pass(batch);
  OnlineForward fwd = online_forward(batch, targets, cfg_.hg.beta);

  fwd.critic_loss.backward();
  opt_critic_->step();

  // actor losses from pre-update Q values
  Tensor actor_sum;
  UpdateStats stats;
  std::vector<double> entropies(n_);
  for (int i = 0; i < n_; ++i) {
    Tensor p = actors_[i].probs(fwd.obs_t_batches[i]);
    Tensor logp = log(p);
    const double alpha = std::exp(log_alpha_[i].values()[0]);
    Tensor inner = sub(scalar_mul(logp, alpha), fwd.q_min_detached[i]);
    Tensor j_i = scalar_mul(sum(mul(p, inner)), 1.0 / B);
    actor_sum = actor_sum.defined() ? add(actor_sum, j_i) : j_i;

    double h = 0.0;
    for (int b = 0; b < B; ++b) {
      h += policy_entropy(std::span(p.values()).subspan(b * kPhaseCount, kPhaseCount));
    }
    entropies[i] = h / B;
  }
  stats.actor_loss = actor_sum.item() / n_;
  actor_sum.backward();
  opt_actor_->step();

  // temperature: L_i = alpha_i * (mean entropy - target entropy)
  Tensor alpha_sum;
  for (int i = 0; i < n_; ++i) {
    Tensor l = mul(exp(log_alpha_[i]),
                   Tensor::scalar(entropies[i] - cfg_.target_entropy));
    alpha_sum = alpha_sum.defined() ? add(alpha_sum, l) : l;
  }
  alpha_sum.backward();
  opt_alpha_->step();

  if (with_soft_update) soft_update_targets();

  ++total_updates_;
  stats.critic_loss = fwd.parts.total;
  stats.recon_loss = fwd.parts.recon_term;
  double mean_h = 0;
  for (double h : entropies) mean_h += h;
  stats.mean_entropy = mean_h / n_;
  return stats;
}

void MasacTrainer::soft_update_targets() {
  for (int i = 0; i < n_; ++i) {
    auto main1 = critics1_[i].parameters("");
    auto targ1 = target1_[i].parameters("");
    auto main2 = critics2_[i].parameters("");
    auto targ2 = target2_[i].parameters("");
    for (std::size_t k = 0; k < main1.size(); ++k) {
      soft_update(main1[k].second, targ1[k].second, cfg_.rho, cfg_.soft_update_flipped);
      soft_update(main2[k].second, targ2[k].second, cfg_.rho, cfg_.soft_update_flipped);
    }
  }
}

std::vector<double> MasacTrainer::alphas() const {
  std::vector<double> out;
  for (const Tensor& la : log_alpha_) out.push_back(std::exp(la.values()[0]));
  return out;
}

std::size_t MasacTrainer::target_param_hash() const {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  auto mix_tensor = [&h](const Tensor& t) {
    for (double v : t.values()) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(v));
      std::memcpy(&bits, &v, sizeof(bits));
      h = mix_seed(h, bits);
    }
  };
  for (int i = 0; i < n_; ++i) {
    for (auto& [name, t] : target1_[i].parameters("")) mix_tensor(t);
    for (auto& [name, t] : target2_[i].parameters("")) mix_tensor(t);
  }
  return static_cast<std::size_t>(h);
}

std::vector<EpisodeLog> MasacTrainer::train(const EpisodeCallback& on_episode) {
  std::vector<EpisodeLog> logs;
  for (int ep = 0; ep < cfg_.episodes; ++ep) {
    std::uint64_t env_seed = mix_seed(seed_, 1000 + ep);
    SimState state = reset(*net_, *flow_, env_seed, cfg_.episode_len);
    ObsMatrix scaled = scale_obs(observe(state));
    ObsMatrix prev = scaled;  // the step before the first repeats it

    EpisodeLog log;
    log.episode = ep;
    UpdateStats acc;
    while (!state.done()) {
      std::vector<int> actions(n_);
      for (int i = 0; i < n_; ++i) {
        std::vector<double> p = actor_probs(i, scaled[i]);
        actions[i] = sample_phase(p, rng_actions_);
      }
      StepResult r = step(state, actions);
      ObsMatrix next = scale_obs(r.obs);
      Transition t;
      t.o_tm1 = prev;
      t.o_t = scaled;
      t.o_tp1 = next;
      t.actions = actions;
      t.rewards.resize(n_);
      for (int i = 0; i < n_; ++i) t.rewards[i] = r.rewards[i] / cfg_.reward_scale;
      buffer_.push(std::move(t));

      if (buffer_.size() >= cfg_.thres_size) {
        UpdateStats s = update_once();
        acc.critic_loss += s.critic_loss;
        acc.actor_loss += s.actor_loss;
        acc.recon_loss += s.recon_loss;
        acc.mean_entropy += s.mean_entropy;
        ++log.updates;
      }
      prev = std::move(scaled);
      scaled = std::move(next);
    }

    MetricsRecord rec = metrics(state);
    log.att = rec.att;
    log.throughput = rec.throughput;
    if (log.updates > 0) {
      log.critic_loss = acc.critic_loss / log.updates;
      log.actor_loss = acc.actor_loss / log.updates;
      log.recon_loss = acc.recon_loss / log.updates;
      log.mean_entropy = acc.mean_entropy / log.updates;
    }
    double alpha_mean = 0;
    for (double a : alphas()) alpha_mean += a;
    log.alpha = alpha_mean / n_;
    if (on_episode) on_episode(log);
    logs.push_back(log);
  }
  return logs;
}

MetricsRecord MasacTrainer::evaluate(std::uint64_t env_seed) {
  PhaseChooser chooser = [this](const SimState&, const ObsMatrix& obs) {
    return select_actions(obs, ActionMode::Greedy);
  };
  SimState state = run_episode(*net_, *flow_, env_seed, chooser, cfg_.episode_len);
  return metrics(state);
}

namespace {

NamedTensors trainer_named_tensors(const HypergraphEncoder& encoder,
                                   const std::vector<ActorNet>& actors,
                                   const std::vector<CriticNet>& critics1,
                                   const std::vector<CriticNet>& critics2,
                                   const std::vector<CriticNet>& target1,
                                   const std::vector<CriticNet>& target2,
                                   const std::vector<Tensor>& log_alpha) {
  NamedTensors all = encoder.parameters();
  for (std::size_t i = 0; i < actors.size(); ++i) {
    std::string id = std::to_string(i);
    for (auto& p : actors[i].parameters("actor_" + id)) all.push_back(p);
    for (auto& p : critics1[i].parameters("critic1_" + id)) all.push_back(p);
    for (auto& p : critics2[i].parameters("critic2_" + id)) all.push_back(p);
    for (auto& p : target1[i].parameters("target1_" + id)) all.push_back(p);
    for (auto& p : target2[i].parameters("target2_" + id)) all.push_back(p);
    all.emplace_back("log_alpha_" + id, log_alpha[i]);
  }
  return all;
}

}  // namespace

void MasacTrainer::save_checkpoint(const std::filesystem::path& path) const {
  NamedTensors all = trainer_named_tensors(encoder_, actors_, critics1_, critics2_,
                                           target1_, target2_, log_alpha_);
  std::map<std::string, std::string> meta{
      {"kind", "masac-checkpoint"},
      {"agents", std::to_string(n_)},
      {"obs_dim", std::to_string(kObsDim)},
      {"d_embed", std::to_string(cfg_.hg.d_embed)},
      {"heads", std::to_string(cfg_.hg.heads)},
  };
  save_tensors(path, all, meta);
}

void MasacTrainer::load_checkpoint(const std::filesystem::path& path) {
  LoadedTensors loaded = load_tensors(path);
  if (loaded.meta["kind"] != "masac-checkpoint") {
    throw CheckpointMismatch("file is not a trainer checkpoint: " + path.string());
  }
  if (loaded.meta["agents"] != std::to_string(n_) ||
      loaded.meta["d_embed"] != std::to_string(cfg_.hg.d_embed) ||
      loaded.meta["heads"] != std::to_string(cfg_.hg.heads)) {
    throw CheckpointMismatch("checkpoint does not match the configured scenario");
  }
  NamedTensors all = trainer_named_tensors(encoder_, actors_, critics1_, critics2_,
                                           target1_, target2_, log_alpha_);
  for (auto& [name, tensor] : all) {
    auto it = loaded.tensors.find(name);
    if (it == loaded.tensors.end()) {
      throw CheckpointMismatch("checkpoint is missing tensor '" + name + "'");
    }
    if (it->second.rows() != tensor.rows() || it->second.cols() != tensor.cols()) {
      throw CheckpointMismatch("checkpoint tensor '" + name + "' has the wrong shape");
    }
    tensor.mutable_values() = it->second.values();
  }
}

}  // namespace tsclab
