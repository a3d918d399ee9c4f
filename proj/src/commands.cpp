#include "tsclab/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "tsclab/baselines.hpp"
#include "tsclab/errors.hpp"

namespace tsclab {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v, int digits = 10) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

PhaseChooser make_controller(const RunConfig& cfg, MasacTrainer* trainer) {
  if (cfg.controller == "fixed") {
    FixedTimePlan plan;
    plan.green_seconds = cfg.fixed_green;
    return fixed_time_controller(plan);
  }
  if (cfg.controller == "maxpressure") return max_pressure_controller();
  if (cfg.controller == "random") {
    auto rng = std::make_shared<Rng>(mix_seed(cfg.seed, 0x7a11));
    return [rng](const SimState& s, const ObsMatrix&) {
      std::vector<int> phases(s.net->agent_count());
      for (int& p : phases) p = 1 + rng->uniform_int(kPhaseCount);
      return phases;
    };
  }
  return [trainer](const SimState&, const ObsMatrix& obs) {
    return trainer->select_actions(obs, ActionMode::Greedy);
  };
}

struct RunOutcome {
  MetricsRecord rec;
  SimState state;
};

RunOutcome run_controller(const RunConfig& cfg, const RoadNetwork& net,
                          const FlowSpec& flow, std::uint64_t seed,
                          MasacTrainer* trainer) {
  PhaseChooser chooser = make_controller(cfg, trainer);
  RunOutcome outcome{MetricsRecord{},
                     run_episode(net, flow, seed, chooser, cfg.episode_len)};
  outcome.rec = metrics(outcome.state);
  return outcome;
}

void write_train_log(const std::vector<EpisodeLog>& logs, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "episode,att,throughput,critic_loss,actor_loss,recon_loss,alpha,mean_entropy\n";
  for (const EpisodeLog& log : logs) {
    out << log.episode << "," << fmt(log.att, 17) << "," << log.throughput << ","
        << fmt(log.critic_loss, 17) << "," << fmt(log.actor_loss, 17) << ","
        << fmt(log.recon_loss, 17) << "," << fmt(log.alpha, 17) << ","
        << fmt(log.mean_entropy, 17) << "\n";
  }
}

}  // namespace

int cmd_generate(const RunConfig& cfg, std::ostream& out) {
  GridSpec spec;
  spec.rows = cfg.rows;
  spec.cols = cfg.cols;
  spec.mode = cfg.mode == "uni" ? GridMode::Unidirectional : GridMode::Bidirectional;
  spec.we_rate = cfg.we_rate;
  spec.sn_rate = cfg.sn_rate;
  auto [net, flow] = generate_grid(spec);

  fs::create_directories(cfg.out);
  fs::path roadnet_path = fs::path(cfg.out) / "roadnet.json";
  fs::path flow_path = fs::path(cfg.out) / "flow.json";
  save_roadnet(net, roadnet_path);
  save_flow(flow, net, flow_path);
  out << "wrote " << roadnet_path.string() << " (" << net.agent_count()
      << " signalized intersections, " << net.links.size() << " roads)\n";
  out << "wrote " << flow_path.string() << " (" << flow.entries.size() << " flows)\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  auto [net, flow] = cfg.scenario();
  fs::create_directories(cfg.out);

  MasacTrainer trainer(net, flow, cfg.masac(), cfg.seed);
  std::vector<EpisodeLog> logs = trainer.train([&](const EpisodeLog& log) {
    out << "episode " << log.episode << " att=" << fmt(log.att)
        << " throughput=" << log.throughput << " alpha=" << fmt(log.alpha) << std::endl;
  });
  write_train_log(logs, fs::path(cfg.out) / "train_log.csv");
  trainer.save_checkpoint(fs::path(cfg.out) / "checkpoint.json");
  MetricsRecord greedy = trainer.evaluate(cfg.seed);
  out << "greedy ATT=" << fmt(greedy.att) << " throughput=" << greedy.throughput << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  auto [net, flow] = cfg.scenario();
  fs::create_directories(cfg.out);

  std::unique_ptr<MasacTrainer> trainer;
  if (cfg.controller == "hgdrl") {
    if (cfg.checkpoint.empty()) {
      throw ConfigError("evaluating the hgdrl controller requires --checkpoint");
    }
    trainer = std::make_unique<MasacTrainer>(net, flow, cfg.masac(), cfg.seed);
    trainer->load_checkpoint(cfg.checkpoint);
  }
  RunOutcome outcome = run_controller(cfg, net, flow, cfg.seed, trainer.get());

  write_metrics_csv(outcome.rec, fs::path(cfg.out) / "metrics.csv");
  write_vehicle_csv(outcome.state, fs::path(cfg.out) / "vehicles.csv");
  out << "ATT=" << fmt(outcome.rec.att) << " throughput=" << outcome.rec.throughput
      << "\n";
  return kExitOk;
}

int cmd_compare(const RunConfig& cfg, const std::vector<std::string>& controllers,
                const std::vector<std::uint64_t>& seeds, std::ostream& out) {
  if (controllers.empty() || seeds.empty()) {
    throw ConfigError("compare needs at least one controller and one seed");
  }
  auto [net, flow] = cfg.scenario();
  fs::create_directories(cfg.out);

  std::ofstream csv(fs::path(cfg.out) / "compare.csv");
  csv << "controller,att_mean,att_std,throughput_mean,throughput_std,seeds\n";
  out << "controller        ATT mean    ATT std     thr mean    thr std\n";

  for (const std::string& name : controllers) {
    RunConfig run_cfg = cfg;
    run_cfg.controller = name;
    run_cfg.validate();
    std::vector<double> atts, thrs;
    for (std::uint64_t seed : seeds) {
      run_cfg.seed = seed;
      std::unique_ptr<MasacTrainer> trainer;
      if (name == "hgdrl") {
        trainer = std::make_unique<MasacTrainer>(net, flow, run_cfg.masac(), seed);
        trainer->train();
      }
      RunOutcome outcome = run_controller(run_cfg, net, flow, seed, trainer.get());
      atts.push_back(outcome.rec.att);
      thrs.push_back(static_cast<double>(outcome.rec.throughput));
    }
    auto mean = [](const std::vector<double>& v) {
      double total = 0;
      for (double x : v) total += x;
      return total / static_cast<double>(v.size());
    };
    auto stddev = [&](const std::vector<double>& v, double m) {
      if (v.size() < 2) return 0.0;
      double total = 0;
      for (double x : v) total += (x - m) * (x - m);
      return std::sqrt(total / static_cast<double>(v.size() - 1));
    };
    double att_m = mean(atts), thr_m = mean(thrs);
    double att_s = stddev(atts, att_m), thr_s = stddev(thrs, thr_m);
    csv << name << "," << fmt(att_m, 17) << "," << fmt(att_s, 17) << ","
        << fmt(thr_m, 17) << "," << fmt(thr_s, 17) << "," << seeds.size() << "\n";
    char row[160];
    std::snprintf(row, sizeof(row), "%-16s %10.2f %10.2f %11.1f %10.1f\n", name.c_str(),
                  att_m, att_s, thr_m, thr_s);
    out << row;
  }
  return kExitOk;
}

namespace {

struct SuiteResult {
  std::string name;
  double max_error = 0;
  int checked = 0;
  int excluded = 0;
  bool pass = false;
};

SuiteResult suite_op_gradients(bool inject_fault) {
  SuiteResult suite{.name = "op gradients"};
  Rng rng(20240917);
  double worst = 0;
  int checked = 0, excluded = 0;
  for (int trial = 0; trial < 60; ++trial) {
    int m = 1 + rng.uniform_int(3), n = 1 + rng.uniform_int(3);
    Tensor x = Tensor::uniform(m, n, -1, 1, rng);
    Tensor other = Tensor::uniform(m, n, -1, 1, rng);
    auto f = [&](const Tensor& t) -> Tensor {
      switch (trial % 6) {
        case 0: return sum(mul(t, other));
        case 1: return l2_norm(add(t, Tensor::scalar(2.0)));
        case 2: return mse(sigmoid(t), other);
        case 3: return sum(mul(softmax(t, 1), other));
        case 4: return mean(exp(t));
        default: return sum(relu(add(t, Tensor::scalar(0.1))));
      }
    };
    auto result = gradcheck(f, x);
    worst = std::max(worst, result.max_rel_error);
    checked += result.checked;
    excluded += static_cast<int>(result.excluded.size());
  }
  if (inject_fault) {
    // corrupt the gradient path on purpose: the detached factor hides half
    // of the analytic derivative, so the check must flag it
    Tensor x = Tensor::uniform(2, 2, 0.5, 1.5, rng);
    auto bad = [](const Tensor& t) { return sum(mul(t, t.detached())); };
    auto result = gradcheck(bad, x);
    worst = std::max(worst, result.max_rel_error);
    checked += result.checked;
  }
  suite.max_error = worst;
  suite.checked = checked;
  suite.excluded = excluded;
  suite.pass = worst < 1e-3;
  return suite;
}

SuiteResult suite_composite(bool) {
  SuiteResult suite{.name = "encoder+critic composite"};
  GridSpec gs;
  gs.rows = 1;
  gs.cols = 2;
  auto [net, flow] = generate_grid(gs);
  MasacConfig cfg;
  cfg.hg.d_embed = 8;
  cfg.thres_size = 20;
  MasacTrainer trainer(net, flow, cfg, 4242);

  Rng rng(11);
  std::vector<Transition> batch;
  for (int k = 0; k < 3; ++k) {
    Transition t;
    auto rand_obs = [&]() {
      ObsMatrix obs(2);
      for (auto& row : obs) {
        row.fill(0);
        row[rng.uniform_int(4)] = 1;
        for (int j = 4; j < kObsDim; ++j) row[j] = rng.uniform(0, 1);
      }
      return obs;
    };
    t.o_tm1 = rand_obs();
    t.o_t = rand_obs();
    t.o_tp1 = rand_obs();
    t.actions = {1 + rng.uniform_int(4), 1 + rng.uniform_int(4)};
    t.rewards = {rng.uniform(-1, 0), rng.uniform(-1, 0)};
    batch.push_back(std::move(t));
  }
  std::vector<const Transition*> batch_ptrs;
  for (const auto& t : batch) batch_ptrs.push_back(&t);
  auto y = trainer.td_targets(batch_ptrs);
  auto params = trainer.critic_parameter_set();
  auto f = [&]() { return trainer.critic_loss_tensor(batch_ptrs, y, 0.3); };
  auto result = gradcheck_params(f, params, 1e-4);
  suite.max_error = result.max_rel_error;
  suite.checked = result.checked;
  suite.excluded = static_cast<int>(result.excluded.size());
  suite.pass = result.max_rel_error < 1e-3;
  return suite;
}

SuiteResult suite_conservation(bool) {
  SuiteResult suite{.name = "conservation"};
  GridSpec gs;
  gs.rows = 2;
  gs.cols = 2;
  auto [net, flow] = generate_grid(gs);
  SimState state = reset(net, flow, 99, 600);
  state.check_conservation = true;
  Rng rng(5);
  ObsMatrix obs = observe(state);
  while (!state.done()) {
    std::vector<int> phases(net.agent_count());
    for (int& p : phases) p = 1 + rng.uniform_int(4);
    StepResult r = step(state, phases);
    obs = std::move(r.obs);
  }
  auto census = state.census();
  suite.checked = static_cast<int>(census.spawned);
  suite.pass = census.spawned == census.queued + census.in_transit + census.completed &&
               census.spawned == state.spawned_total;
  suite.max_error = suite.pass ? 0.0 : 1.0;
  return suite;
}

SuiteResult suite_policy(bool) {
  SuiteResult suite{.name = "policy invariants"};
  Rng rng(7);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Tensor logits = Tensor::uniform(4, 4, -20, 20, rng);
    Tensor p = softmax(logits, 1);
    for (int i = 0; i < 4; ++i) {
      double total = 0;
      for (int j = 0; j < 4; ++j) {
        if (p(i, j) <= 0) worst = std::max(worst, 1.0);
        total += p(i, j);
      }
      worst = std::max(worst, std::abs(total - 1.0));
    }
  }
  suite.max_error = worst;
  suite.checked = 50 * 4;
  suite.pass = worst < 1e-9;
  return suite;
}

}  // namespace

int cmd_selfcheck(std::ostream& out, bool inject_fault) {
  std::vector<SuiteResult> suites;
  suites.push_back(suite_op_gradients(inject_fault));
  suites.push_back(suite_composite(inject_fault));
  suites.push_back(suite_conservation(inject_fault));
  suites.push_back(suite_policy(inject_fault));

  bool all_pass = true;
  for (const SuiteResult& s : suites) {
    out << "[suite] " << s.name << ": max error " << fmt(s.max_error) << " ("
        << s.checked << " checked, " << s.excluded << " excluded) "
        << (s.pass ? "PASS" : "FAIL") << "\n";
    all_pass = all_pass && s.pass;
  }
  out << (all_pass ? "SELFCHECK PASS" : "SELFCHECK FAIL") << "\n";
  return all_pass ? kExitOk : kExitRuntime;
}

}  // namespace tsclab
