#include <iostream>
#include <string>
#include <vector>

#include "tsclab/commands.hpp"
#include "tsclab/errors.hpp"

#include <CLI11.hpp>

namespace tsclab {

namespace {

void add_options(CLI::App& app, RunConfig& cfg, std::string& config_path) {
  app.set_config("--config", "", "flat key=value configuration file")
      ->configurable(false);
  (void)config_path;

  app.add_option("--rows", cfg.rows, "grid rows");
  app.add_option("--cols", cfg.cols, "grid columns");
  app.add_option("--mode", cfg.mode, "traffic pattern: uni or bi");
  app.add_option("--we_rate", cfg.we_rate, "west-east vehicles/lane/hour");
  app.add_option("--sn_rate", cfg.sn_rate, "south-north vehicles/lane/hour");
  app.add_option("--roadnet", cfg.roadnet, "roadnet file (instead of a grid)");
  app.add_option("--flow", cfg.flow, "flow file (instead of a grid)");
  app.add_option("--controller", cfg.controller,
                 "fixed | maxpressure | random | hgdrl");
  app.add_option("--checkpoint", cfg.checkpoint, "trained checkpoint for hgdrl");
  app.add_option("--fixed_green", cfg.fixed_green, "fixed-time green per phase [s]");
  app.add_option("--seed", cfg.seed, "run seed");
  app.add_option("--out", cfg.out, "output directory");

  app.add_option("--batch_size", cfg.batch_size);
  app.add_option("--episodes", cfg.episodes);
  app.add_option("--episode_len", cfg.episode_len);
  app.add_option("--thres_size", cfg.thres_size);
  app.add_option("--target_entropy", cfg.target_entropy);
  app.add_option("--lr_actor", cfg.lr_actor);
  app.add_option("--lr_critic", cfg.lr_critic);
  app.add_option("--lr_alpha", cfg.lr_alpha);
  app.add_option("--gamma", cfg.gamma);
  app.add_option("--rho", cfg.rho);
  app.add_flag("--soft_update_flipped", cfg.soft_update_flipped,
               "use the conventional target mixing direction");
  app.add_option("--reward_scale", cfg.reward_scale);
  app.add_option("--obs_scale", cfg.obs_scale);
  app.add_option("--d_embed", cfg.d_embed);
  app.add_option("--heads", cfg.heads);
  app.add_option("--zeta", cfg.zeta);
  app.add_option("--lambda", cfg.lambda);
  app.add_option("--gamma2", cfg.gamma2);
  app.add_option("--beta", cfg.beta);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"tsclab: a desk-scale traffic signal control laboratory"};
  app.set_version_flag("--version", "tsclab 1.0.0");
  app.fallthrough();
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;
  add_options(app, cfg, config_path);

  CLI::App* generate = app.add_subcommand("generate", "write roadnet and flow files");
  CLI::App* train = app.add_subcommand("train", "train the hypergraph MA-SAC controller");
  CLI::App* eval = app.add_subcommand("eval", "run one controller and report metrics");
  CLI::App* compare = app.add_subcommand("compare", "run controllers across seeds");
  CLI::App* selfcheck =
      app.add_subcommand("selfcheck", "gradient and invariant self-diagnosis");

  std::vector<std::string> controllers{"fixed", "maxpressure"};
  std::vector<std::uint64_t> seeds{0};
  compare->add_option("--controllers", controllers, "controllers to compare")
      ->delimiter(',');
  compare->add_option("--seeds", seeds, "seeds to average over")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << app.version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*selfcheck) return cmd_selfcheck(out);
    cfg.validate();
    if (*generate) return cmd_generate(cfg, out);
    if (*train) return cmd_train(cfg, out);
    if (*eval) return cmd_eval(cfg, out);
    if (*compare) return cmd_compare(cfg, controllers, seeds, out);
    err << "no command given\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const CheckpointMismatch& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace tsclab
