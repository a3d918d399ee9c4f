#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "tsclab/masac.hpp"

namespace tsclab {

// One flat bag of settings shared by every subcommand. Config files use the
// same key names; command-line flags override file values which override the
// defaults below.
struct RunConfig {
  // scenario: either a generated grid or a roadnet/flow file pair
  int rows = 3;
  int cols = 3;
  std::string mode = "bi";  // "uni" or "bi"
  double we_rate = 300.0;
  double sn_rate = 90.0;
  std::string roadnet;
  std::string flow;

  std::string controller = "hgdrl";  // fixed | maxpressure | random | hgdrl
  std::string checkpoint;
  int fixed_green = 30;
  std::uint64_t seed = 0;
  std::string out = "out";

  int batch_size = 20;
  int episodes = 50;
  int episode_len = kDefaultEpisodeSeconds;
  int thres_size = 1000;
  double target_entropy = -0.5;
  double lr_actor = 0.0001;
  double lr_critic = 0.01;
  double lr_alpha = 0.001;
  double gamma = 0.98;
  double rho = 0.005;
  bool soft_update_flipped = false;
  double reward_scale = 100.0;
  double obs_scale = 50.0;
  int d_embed = 32;
  int heads = 1;
  double zeta = 0.1;
  double lambda = 0.001;
  double gamma2 = 0.2;
  double beta = 0.001;

  void validate() const;  // throws ConfigError
  MasacConfig masac() const;
  std::pair<RoadNetwork, FlowSpec> scenario() const;
};

}  // namespace tsclab
