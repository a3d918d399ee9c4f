#include "tsclab/baselines.hpp"

#include "tsclab/errors.hpp"

namespace tsclab {

void FixedTimePlan::validate() const {
  if (green_seconds <= 0 || green_seconds % kDecisionPeriod != 0) {
    throw InvalidArgument("fixed-time green must be a positive multiple of 10 s");
  }
}

int fixed_time_action(int clock_seconds, const FixedTimePlan& plan) {
  int within = clock_seconds % plan.cycle_seconds();
  return plan.order[within / plan.green_seconds];
}

double phase_pressure(const SimState& state, int agent, int phase) {
  const RoadNetwork& net = *state.net;
  const Intersection& node = net.node(net.agents.at(agent));
  double pressure = 0.0;
  for (int a = 0; a < kApproachCount; ++a) {
    for (int m = 0; m < 2; ++m) {  // through and left define the phase
      if (!phase_enables(phase, static_cast<Approach>(a), static_cast<Movement>(m))) {
        continue;
      }
      int in_link = node.incoming_by_approach[a];
      long upstream = state.lane_queue(in_link, m);
      int out_link = node.movement_table[a][m];
      long downstream = 0;
      for (int lane = 0; lane < kLanesPerLink; ++lane) {
        downstream += state.lane_queue(out_link, lane);
      }
      pressure += static_cast<double>(upstream - downstream);
    }
  }
  return pressure;
}

int max_pressure_action(const SimState& state, int agent) {
  int best = 1;
  double best_pressure = phase_pressure(state, agent, 1);
  for (int phase = 2; phase <= kPhaseCount; ++phase) {
    double p = phase_pressure(state, agent, phase);
    if (p > best_pressure) {
      best_pressure = p;
      best = phase;
    }
  }
  return best;
}

PhaseChooser fixed_time_controller(const FixedTimePlan& plan) {
  plan.validate();
  return [plan](const SimState& state, const ObsMatrix&) {
    return std::vector<int>(state.net->agent_count(),
                            fixed_time_action(state.clock, plan));
  };
}

PhaseChooser max_pressure_controller() {
  return [](const SimState& state, const ObsMatrix&) {
    std::vector<int> phases(state.net->agent_count());
    for (int i = 0; i < state.net->agent_count(); ++i) {
      phases[i] = max_pressure_action(state, i);
    }
    return phases;
  };
}

}  // namespace tsclab
