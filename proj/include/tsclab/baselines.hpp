#pragma once

#include <array>
#include <vector>

#include "tsclab/simulator.hpp"

namespace tsclab {

struct FixedTimePlan {
  std::array<int, kPhaseCount> order{1, 2, 3, 4};
  int green_seconds = 30;  // positive multiple of the decision period

  int cycle_seconds() const { return green_seconds * kPhaseCount; }
  void validate() const;
};

// Phase scheduled at the given clock; the same plan runs at every
// intersection, independent of traffic.
int fixed_time_action(int clock_seconds, const FixedTimePlan& plan);

// Upstream queue minus total downstream queue, summed over the movements a
// phase enables. The downstream side of a boundary exit counts as zero.
double phase_pressure(const SimState& state, int agent, int phase);

// Phase with the largest pressure; ties resolve to the lowest phase id.
int max_pressure_action(const SimState& state, int agent);

PhaseChooser fixed_time_controller(const FixedTimePlan& plan);
PhaseChooser max_pressure_controller();

}  // namespace tsclab
