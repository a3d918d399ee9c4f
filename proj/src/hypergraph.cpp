#include "tsclab/hypergraph.hpp"

#include <cmath>

#include "tsclab/errors.hpp"

namespace tsclab {

void HGConfig::validate() const {
  if (d_embed <= 0 || heads <= 0 || d_embed % heads != 0) {
    throw ConfigError("d_embed must be a positive multiple of the head count");
  }
  if (zeta < 0) throw ConfigError("zeta must be nonnegative");
  if (beta < 0 || beta > 1) throw ConfigError("beta must lie in [0,1]");
  if (lambda < 0 || gamma2 < 0) throw ConfigError("loss weights must be nonnegative");
}

Tensor obs_to_tensor(const ObsMatrix& obs) {
  std::vector<double> data;
  data.reserve(obs.size() * kObsDim);
  for (const auto& row : obs) data.insert(data.end(), row.begin(), row.end());
  return Tensor::from(std::move(data), static_cast<int>(obs.size()), kObsDim);
}

namespace {

Tensor init_linear(int fan_in, int fan_out, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::uniform(fan_in, fan_out, -bound, bound, rng, true);
}

}  // namespace

HypergraphEncoder::HypergraphEncoder(const HGConfig& cfg, int n_agents, int obs_dim,
                                     Rng& rng)
    : cfg_(cfg), n_agents_(n_agents), obs_dim_(obs_dim) {
  cfg_.validate();
  if (n_agents < 1) throw ConfigError("encoder needs at least one agent");
  const int d = cfg_.d_embed;
  const int dk = d / cfg_.heads;

  w_embed_ = init_linear(obs_dim, d, rng);
  b_embed_ = Tensor::zeros(1, d, true);
  theta_spa_ = init_linear(d, d, rng);
  theta_tem_ = init_linear(d, d, rng);
  // start above the default threshold so initial hyperedges are fully
  // connected and training prunes downward
  p_spa_raw_ = Tensor::full(n_agents, n_agents - 1, 0.2, true);
  p_tem_raw_ = Tensor::full(n_agents, n_agents, 0.2, true);
  for (int h = 0; h < cfg_.heads; ++h) {
    q_lin_.push_back(init_linear(d, dk, rng));
    k_lin_spa_.push_back(init_linear(d, dk, rng));
    k_lin_tem_.push_back(init_linear(d, dk, rng));
  }
  theta_att_spa_ = init_linear(dk, dk, rng);
  theta_att_tem_ = init_linear(dk, dk, rng);
  mlp_w1_ = init_linear(d, d, rng);
  mlp_b1_ = Tensor::zeros(1, d, true);
  mlp_w2_ = init_linear(d, d, rng);
  mlp_b2_ = Tensor::zeros(1, d, true);
}

Tensor HypergraphEncoder::embed(const Tensor& obs) const {
  return relu(add(matmul(obs, w_embed_), b_embed_));
}

std::vector<int> HypergraphEncoder::select_candidates(std::span<const double> p_eff,
                                                      double zeta) {
  std::vector<int> members;
  for (std::size_t i = 0; i < p_eff.size(); ++i) {
    if (std::max(p_eff[i], 0.0) > zeta) members.push_back(static_cast<int>(i));
  }
  return members;
}

Tensor HypergraphEncoder::reconstruction_error(const Tensor& master, const Tensor& theta,
                                               const Tensor& p_eff,
                                               const Tensor& candidates) {
  return l2_norm(sub(matmul(master, theta), matmul(p_eff, candidates)));
}

std::vector<double> HypergraphEncoder::incidence_row(int universe, int master,
                                                     const std::vector<int>& members,
                                                     std::span<const double> weights) {
  std::vector<double> re(universe, 0.0);
  re.at(master) = 1.0;
  for (std::size_t k = 0; k < members.size(); ++k) re.at(members[k]) = weights[k];
  return re;
}

Tensor HypergraphEncoder::hyperedge_embedding(const Tensor& master,
                                              const std::vector<Tensor>& member_features,
                                              const std::vector<Tensor>& member_weights) {
  Tensor numerator = master;
  Tensor denominator = Tensor::scalar(1.0);
  for (std::size_t k = 0; k < member_features.size(); ++k) {
    numerator = add(numerator, mul(member_features[k], member_weights[k]));
    denominator = add(denominator, member_weights[k]);
  }
  return div_scalar(numerator, denominator);
}

std::pair<Tensor, Tensor> HypergraphEncoder::hyperedge_attention(const Tensor& att_spa,
                                                                 const Tensor& att_tem) {
  std::vector<Tensor> scores{att_spa, att_tem};
  Tensor w = softmax(concat(scores, 1), 1);
  return {at(w, 0, 0), at(w, 0, 1)};
}

Tensor HypergraphEncoder::head_aggregate(const Tensor& w_spa, const Tensor& w_tem,
                                         const Tensor& key_spa, const Tensor& key_tem) {
  return add(mul(key_spa, w_spa), mul(key_tem, w_tem));
}

EncodeResult HypergraphEncoder::encode(const ObsMatrix& obs_t,
                                       const ObsMatrix& obs_tm1) const {
  return encode(obs_to_tensor(obs_t), obs_to_tensor(obs_tm1));
}

EncodeResult HypergraphEncoder::encode(const Tensor& obs_t, const Tensor& obs_tm1) const {
  const int n = n_agents_;
  const int d = cfg_.d_embed;
  if (obs_t.rows() != n || obs_tm1.rows() != n || obs_t.cols() != obs_dim_ ||
      obs_tm1.cols() != obs_dim_) {
    throw ShapeMismatch("encode: observation matrices must be N x obs_dim");
  }
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(d / cfg_.heads));

  Tensor h_t = embed(obs_t);
  Tensor h_tm1 = embed(obs_tm1);
  std::vector<Tensor> rows_t, rows_tm1;
  rows_t.reserve(n);
  rows_tm1.reserve(n);
  for (int i = 0; i < n; ++i) {
    rows_t.push_back(row(h_t, i));
    rows_tm1.push_back(row(h_tm1, i));
  }

  Tensor p_spa_eff = relu(p_spa_raw_);
  Tensor p_tem_eff = relu(p_tem_raw_);

  EncodeResult result;
  result.spatial_members.resize(n);
  result.temporal_members.resize(n);
  Tensor recon;

  for (int i = 0; i < n; ++i) {
    const Tensor& h_i = rows_t[i];

    // spatial hyperedge over the other agents at time t
    Tensor spa_candidates;
    if (n > 1) {
      std::vector<Tensor> others;
      others.reserve(n - 1);
      for (int j = 0; j < n; ++j) {
        if (j != i) others.push_back(rows_t[j]);
      }
      spa_candidates = concat(others, 0);
    } else {
      spa_candidates = Tensor::zeros(0, d);
    }
    Tensor p_spa_row = row(p_spa_eff, i);
    Tensor c_spa = reconstruction_error(h_i, theta_spa_, p_spa_row, spa_candidates);

    // temporal hyperedge over every agent at time t-1
    Tensor p_tem_row = row(p_tem_eff, i);
    Tensor c_tem = reconstruction_error(h_i, theta_tem_, p_tem_row, h_tm1);

    std::vector<int> spa_slots = select_candidates(
        std::span(p_spa_eff.values()).subspan(i * (n - 1), n - 1), cfg_.zeta);
    std::vector<int> tem_slots = select_candidates(
        std::span(p_tem_eff.values()).subspan(i * n, n), cfg_.zeta);
    for (int slot : spa_slots) {
      result.spatial_members[i].push_back(slot < i ? slot : slot + 1);
    }
    result.temporal_members[i] = tem_slots;

    std::vector<Tensor> spa_feats, spa_weights, tem_feats, tem_weights;
    for (std::size_t k = 0; k < spa_slots.size(); ++k) {
      spa_feats.push_back(rows_t[result.spatial_members[i][k]]);
      spa_weights.push_back(at(p_spa_eff, i, spa_slots[k]));
    }
    for (int slot : tem_slots) {
      tem_feats.push_back(rows_tm1[slot]);
      tem_weights.push_back(at(p_tem_eff, i, slot));
    }
    Tensor e_spa = hyperedge_embedding(h_i, spa_feats, spa_weights);
    Tensor e_tem = hyperedge_embedding(h_i, tem_feats, tem_weights);

    // per-head attention between the master and its two hyperedges
    std::vector<Tensor> head_parts;
    head_parts.reserve(cfg_.heads);
    for (int h = 0; h < cfg_.heads; ++h) {
      Tensor q = matmul(h_i, q_lin_[h]);
      Tensor key_spa = matmul(e_spa, k_lin_spa_[h]);
      Tensor key_tem = matmul(e_tem, k_lin_tem_[h]);
      Tensor att_spa = scalar_mul(
          matmul(matmul(q, theta_att_spa_), transpose(key_spa)), att_scale);
      Tensor att_tem = scalar_mul(
          matmul(matmul(q, theta_att_tem_), transpose(key_tem)), att_scale);
      auto [w_spa, w_tem] = hyperedge_attention(att_spa, att_tem);
      head_parts.push_back(head_aggregate(w_spa, w_tem, key_spa, key_tem));
    }
    Tensor pre = cfg_.heads == 1 ? head_parts[0] : concat(head_parts, 1);
    result.pre_mlp.push_back(pre);

    Tensor hidden = relu(add(matmul(pre, mlp_w1_), mlp_b1_));
    result.node_embeddings.push_back(add(matmul(hidden, mlp_w2_), mlp_b2_));

    Tensor term = add(
        scalar_mul(add(c_spa, c_tem), cfg_.lambda),
        add(add(l1_norm(p_spa_row), l1_norm(p_tem_row)),
            scalar_mul(add(l2_norm(p_spa_row), l2_norm(p_tem_row)), cfg_.gamma2)));
    recon = recon.defined() ? add(recon, term) : term;
  }

  result.nodes = concat(result.node_embeddings, 0);
  result.readout = mean_rows(result.nodes);
  result.recon_loss = recon;
  return result;
}

NamedTensors HypergraphEncoder::parameters() const {
  NamedTensors params;
  params.emplace_back("encoder/w_embed", w_embed_);
  params.emplace_back("encoder/b_embed", b_embed_);
  params.emplace_back("encoder/theta_spa", theta_spa_);
  params.emplace_back("encoder/theta_tem", theta_tem_);
  params.emplace_back("encoder/p_spa_raw", p_spa_raw_);
  params.emplace_back("encoder/p_tem_raw", p_tem_raw_);
  for (int h = 0; h < cfg_.heads; ++h) {
    std::string suffix = std::to_string(h);
    params.emplace_back("encoder/q_lin_" + suffix, q_lin_[h]);
    params.emplace_back("encoder/k_lin_spa_" + suffix, k_lin_spa_[h]);
    params.emplace_back("encoder/k_lin_tem_" + suffix, k_lin_tem_[h]);
  }
  params.emplace_back("encoder/theta_att_spa", theta_att_spa_);
  params.emplace_back("encoder/theta_att_tem", theta_att_tem_);
  params.emplace_back("encoder/mlp_w1", mlp_w1_);
  params.emplace_back("encoder/mlp_b1", mlp_b1_);
  params.emplace_back("encoder/mlp_w2", mlp_w2_);
  params.emplace_back("encoder/mlp_b2", mlp_b2_);
  return params;
}

}  // namespace tsclab
