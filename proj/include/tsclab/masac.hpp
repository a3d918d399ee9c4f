#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsclab/hypergraph.hpp"
#include "tsclab/simulator.hpp"

namespace tsclab {

// Shannon entropy with natural log; 0*log(0) counts as 0.
double policy_entropy(std::span<const double> probs);

struct MasacConfig {
  int batch_size = 20;
  int episodes = 50;
  int episode_len = kDefaultEpisodeSeconds;
  int thres_size = 1000;  // replay capacity; training starts once it is full
  double target_entropy = -0.5;
  double lr_actor = 0.0001;
  double lr_critic = 0.01;
  double lr_alpha = 0.001;
  double gamma = 0.98;
  double rho = 0.005;
  bool soft_update_flipped = false;  // use the conventional mixing direction
  double reward_scale = 100.0;       // raw rewards divided by this before storage
  double obs_scale = 50.0;           // lane counts divided by this before the nets
  HGConfig hg;

  void validate() const;
};

// Joint record of one environment step; observations and rewards are stored
// already scaled.
struct Transition {
  ObsMatrix o_tm1;
  ObsMatrix o_t;
  ObsMatrix o_tp1;
  std::vector<int> actions;  // phase ids 1..4
  std::vector<double> rewards;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity);
  void push(Transition t);  // FIFO eviction at capacity
  int size() const { return static_cast<int>(data_.size()); }
  int capacity() const { return capacity_; }
  const Transition& operator[](int i) const { return data_[i]; }

  // uniform, without replacement within the batch
  std::vector<const Transition*> sample(int batch, Rng& rng) const;

 private:
  std::vector<Transition> data_;
  int capacity_;
  int next_ = 0;
};

struct ActorNet {  // obs -> 64 -> 64 -> 4 with a softmax head
  Tensor w1, b1, w2, b2, w3, b3;
  ActorNet() = default;
  ActorNet(int obs_dim, Rng& rng);
  Tensor logits(const Tensor& obs_batch) const;
  Tensor probs(const Tensor& obs_batch) const;
  NamedTensors parameters(const std::string& prefix) const;
};

struct CriticNet {  // input -> 64 -> Q over the agent's own 4 actions
  Tensor w1, b1, w2, b2;
  CriticNet() = default;
  CriticNet(int in_dim, Rng& rng);
  Tensor forward(const Tensor& input_batch) const;
  NamedTensors parameters(const std::string& prefix) const;
  void copy_values_from(const CriticNet& other);
};

// target <- rho*target + (1-rho)*main, the update as the training loop
// states it; `flipped` swaps the roles for the conventional direction.
void soft_update(const Tensor& main, Tensor& target, double rho, bool flipped);

struct UpdateStats {
  double critic_loss = 0;
  double actor_loss = 0;
  double recon_loss = 0;
  double mean_entropy = 0;
};

struct EpisodeLog {
  int episode = 0;
  double att = 0;
  long throughput = 0;
  double critic_loss = 0;
  double actor_loss = 0;
  double recon_loss = 0;
  double alpha = 0;
  double mean_entropy = 0;
  long updates = 0;
};

enum class ActionMode { Sample, Greedy };

struct CriticLossParts {
  double total = 0;
  double td_term = 0;
  double recon_term = 0;
};

// Per-intersection soft actor-critic with two hypergraph-enhanced
// centralized critics per agent, their target copies, and one automatically
// tuned temperature per agent. No parameters are shared across agents.
class MasacTrainer {
 public:
  MasacTrainer(const RoadNetwork& net, const FlowSpec& flow, const MasacConfig& cfg,
               std::uint64_t seed);

  std::vector<int> select_actions(const ObsMatrix& raw_obs, ActionMode mode);

  static int sample_phase(std::span<const double> probs, Rng& rng);
  static int greedy_phase(std::span<const double> probs);

  using EpisodeCallback = std::function<void(const EpisodeLog&)>;
  std::vector<EpisodeLog> train(const EpisodeCallback& on_episode = {});
  MetricsRecord evaluate(std::uint64_t env_seed);

  UpdateStats update_once(bool with_soft_update = true);
  void soft_update_targets();

  void save_checkpoint(const std::filesystem::path& path) const;
  void load_checkpoint(const std::filesystem::path& path);  // CheckpointMismatch

  // introspection and test hooks
  int n_agents() const { return n_; }
  const MasacConfig& config() const { return cfg_; }
  ReplayBuffer& buffer() { return buffer_; }
  std::vector<double> alphas() const;
  std::vector<double> actor_probs(int agent, const ObsRow& scaled_obs) const;
  std::vector<std::vector<double>> td_targets(
      const std::vector<const Transition*>& batch) const;
  CriticLossParts critic_loss_parts(const std::vector<const Transition*>& batch,
                                    double beta) const;
  std::vector<std::array<double, 4>> target_q_min(
      const std::vector<const Transition*>& batch, int agent) const;
  std::size_t target_param_hash() const;
  ObsMatrix scale_obs(const ObsMatrix& raw) const;
  HypergraphEncoder& encoder() { return encoder_; }
  long total_updates() const { return total_updates_; }
  Tensor& log_alpha(int agent) { return log_alpha_[agent]; }
  ActorNet& actor(int agent) { return actors_[agent]; }
  CriticNet& target_critic(int agent, int which) {
    return which == 1 ? target1_[agent] : target2_[agent];
  }
  // critic loss graph against externally fixed targets
  Tensor critic_loss_tensor(const std::vector<const Transition*>& batch,
                            const std::vector<std::vector<double>>& y,
                            double beta) const;
  std::vector<Tensor> critic_parameter_set() const;  // both critics plus encoder
  // online Q rows for one agent under the stored joint actions
  std::vector<std::array<double, 4>> online_q_values(
      const std::vector<const Transition*>& batch, int agent, int which) const;

 private:
  struct OnlineForward {
    Tensor critic_loss;
    CriticLossParts parts;
    std::vector<Tensor> q_min_detached;  // per agent, B x 4
    std::vector<Tensor> obs_t_batches;   // per agent, B x obs_dim (constants)
  };

  struct TargetPass {
    std::vector<std::vector<double>> y;  // [agent][b]
  };

  Tensor critic_input(int agent, const std::vector<EncodeResult>& encodes,
                      const std::vector<std::vector<int>>& joint_actions) const;
  TargetPass target_pass(const std::vector<const Transition*>& batch) const;
  OnlineForward online_forward(const std::vector<const Transition*>& batch,
                               const TargetPass& targets, double beta) const;

  const RoadNetwork* net_;
  const FlowSpec* flow_;
  MasacConfig cfg_;
  std::uint64_t seed_;
  int n_;
  int critic_in_;

  Rng init_rng_;
  HypergraphEncoder encoder_;
  std::vector<ActorNet> actors_;
  std::vector<CriticNet> critics1_, critics2_, target1_, target2_;
  std::vector<Tensor> log_alpha_;

  ReplayBuffer buffer_;
  Rng rng_actions_;
  Rng rng_sample_;

  std::optional<Adam> opt_critic_;
  std::optional<Adam> opt_actor_;
  std::optional<Adam> opt_alpha_;
  long total_updates_ = 0;
};

}  // namespace tsclab
