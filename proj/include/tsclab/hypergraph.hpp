#pragma once

#include <span>
#include <utility>
#include <vector>

#include "tsclab/diffcore.hpp"
#include "tsclab/simulator.hpp"

namespace tsclab {

struct HGConfig {
  int d_embed = 32;       // embedding width
  int heads = 1;          // attention heads; must divide d_embed
  double zeta = 0.1;      // hyperedge membership threshold
  double lambda = 0.001;  // reconstruction error weight
  double gamma2 = 0.2;    // l2 regularizer on coefficient vectors
  double beta = 0.001;    // reconstruction share of the critic loss

  void validate() const;
};

Tensor obs_to_tensor(const ObsMatrix& obs);

struct EncodeResult {
  std::vector<Tensor> node_embeddings;  // per agent, 1 x d_embed, after the MLP
  Tensor nodes;                         // N x d_embed
  Tensor readout;                       // 1 x d_embed graph vector
  Tensor recon_loss;                    // scalar
  std::vector<Tensor> pre_mlp;          // per agent, head-concatenated aggregate
  std::vector<std::vector<int>> spatial_members;   // selected agent indices
  std::vector<std::vector<int>> temporal_members;  // selected previous-step indices
};

// Two-timestamp spatio-temporal hypergraph encoder. Every agent anchors one
// spatial hyperedge over the other agents at time t and one temporal
// hyperedge over all agents at time t-1; membership comes from trainable
// reconstruction coefficients gated by zeta, node updates from per-head
// attention over the two hyperedge embeddings.
class HypergraphEncoder {
 public:
  HypergraphEncoder(const HGConfig& cfg, int n_agents, int obs_dim, Rng& rng);

  EncodeResult encode(const Tensor& obs_t, const Tensor& obs_tm1) const;
  EncodeResult encode(const ObsMatrix& obs_t, const ObsMatrix& obs_tm1) const;

  // relu(obs * W_e + b_e), shared across timestamps
  Tensor embed(const Tensor& obs) const;

  // indices with effective coefficient strictly above the threshold
  static std::vector<int> select_candidates(std::span<const double> p_eff, double zeta);

  // || master * theta - p * candidates ||_2
  static Tensor reconstruction_error(const Tensor& master, const Tensor& theta,
                                     const Tensor& p_eff, const Tensor& candidates);

  // dense incidence row: 1 at the master, selected weights, 0 elsewhere
  static std::vector<double> incidence_row(int universe, int master,
                                           const std::vector<int>& members,
                                           std::span<const double> weights);

  // weighted mean of the master and member features
  static Tensor hyperedge_embedding(const Tensor& master,
                                    const std::vector<Tensor>& member_features,
                                    const std::vector<Tensor>& member_weights);

  // softmax over the two attention scores
  static std::pair<Tensor, Tensor> hyperedge_attention(const Tensor& att_spa,
                                                       const Tensor& att_tem);

  // w_spa * key_spa + w_tem * key_tem
  static Tensor head_aggregate(const Tensor& w_spa, const Tensor& w_tem,
                               const Tensor& key_spa, const Tensor& key_tem);

  NamedTensors parameters() const;
  const HGConfig& config() const { return cfg_; }
  int n_agents() const { return n_agents_; }
  int obs_dim() const { return obs_dim_; }

  Tensor& p_spa_raw() { return p_spa_raw_; }
  Tensor& p_tem_raw() { return p_tem_raw_; }
  Tensor& w_embed() { return w_embed_; }
  Tensor& b_embed() { return b_embed_; }
  Tensor& theta_spa() { return theta_spa_; }
  Tensor& theta_tem() { return theta_tem_; }

 private:
  HGConfig cfg_;
  int n_agents_;
  int obs_dim_;

  Tensor w_embed_, b_embed_;
  Tensor theta_spa_, theta_tem_;
  Tensor p_spa_raw_;  // N x (N-1), candidate j of master i sits at slot j<i ? j : j-1
  Tensor p_tem_raw_;  // N x N
  std::vector<Tensor> q_lin_;
  std::vector<Tensor> k_lin_spa_, k_lin_tem_;
  Tensor theta_att_spa_, theta_att_tem_;
  Tensor mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
};

}  // namespace tsclab
