#include "tsclab/runconfig.hpp"

#include "tsclab/errors.hpp"

namespace tsclab {

void RunConfig::validate() const {
  const bool from_files = !roadnet.empty() || !flow.empty();
  if (from_files) {
    if (roadnet.empty() || flow.empty()) {
      throw ConfigError("roadnet and flow files must be given together");
    }
  } else {
    if (rows < 1 || cols < 1) throw ConfigError("grid dimensions must be at least 1");
    if (we_rate < 0 || sn_rate < 0) throw ConfigError("arrival rates must be nonnegative");
    if (mode != "uni" && mode != "bi") throw ConfigError("mode must be 'uni' or 'bi'");
  }
  if (controller != "fixed" && controller != "maxpressure" && controller != "random" &&
      controller != "hgdrl") {
    throw ConfigError("unknown controller '" + controller + "'");
  }
  if (fixed_green <= 0 || fixed_green % kDecisionPeriod != 0) {
    throw ConfigError("fixed_green must be a positive multiple of 10 s");
  }
  masac().validate();
}

MasacConfig RunConfig::masac() const {
  MasacConfig cfg;
  cfg.batch_size = batch_size;
  cfg.episodes = episodes;
  cfg.episode_len = episode_len;
  cfg.thres_size = thres_size;
  cfg.target_entropy = target_entropy;
  cfg.lr_actor = lr_actor;
  cfg.lr_critic = lr_critic;
  cfg.lr_alpha = lr_alpha;
  cfg.gamma = gamma;
  cfg.rho = rho;
  cfg.soft_update_flipped = soft_update_flipped;
  cfg.reward_scale = reward_scale;
  cfg.obs_scale = obs_scale;
  cfg.hg.d_embed = d_embed;
  cfg.hg.heads = heads;
  cfg.hg.zeta = zeta;
  cfg.hg.lambda = lambda;
  cfg.hg.gamma2 = gamma2;
  cfg.hg.beta = beta;
  return cfg;
}

std::pair<RoadNetwork, FlowSpec> RunConfig::scenario() const {
  if (!roadnet.empty()) {
    RoadNetwork net = load_roadnet(roadnet);
    FlowSpec spec = load_flow(flow, net);
    return {std::move(net), std::move(spec)};
  }
  GridSpec spec;
  spec.rows = rows;
  spec.cols = cols;
  spec.mode = mode == "uni" ? GridMode::Unidirectional : GridMode::Bidirectional;
  spec.we_rate = we_rate;
  spec.sn_rate = sn_rate;
  return generate_grid(spec);
}

}  // namespace tsclab
