#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <vector>

#include "tsclab/datamodel.hpp"

namespace tsclab {

constexpr int kObsDim = 16;  // one-hot phase (4) + 12 incoming-lane counts
constexpr int kDecisionPeriod = 10;    // seconds between phase decisions
constexpr int kYellowSeconds = 3;      // effective green lost on a phase change
constexpr int kSaturationHeadway = 2;  // seconds per discharged vehicle
constexpr int kDefaultEpisodeSeconds = 3600;

using ObsRow = std::array<double, kObsDim>;
using ObsMatrix = std::vector<ObsRow>;

struct MetricsRecord {
  double att = 0.0;       // mean enter-to-exit seconds over all spawned vehicles
  long throughput = 0;    // completed trips
  std::vector<long> step_queue;       // total queued vehicles after each step
  std::vector<long> step_throughput;  // cumulative completions after each step
  int steps = 0;
};

// Queue-based discrete-time traffic state. Owned by a single episode and
// mutated only through step(); the network and flow must outlive it.
struct SimState {
  const RoadNetwork* net = nullptr;
  const FlowSpec* flow = nullptr;

  int clock = 0;
  int episode_length = kDefaultEpisodeSeconds;
  std::uint64_t seed = 0;

  std::vector<int> phase;          // per agent, 1..4
  std::vector<bool> phase_changed; // set when the current step switched phase

  struct TransitVehicle {
    int vehicle;
    int ready_tick;  // first tick the vehicle may leave the link
  };
  std::vector<std::deque<TransitVehicle>> transit;          // per link
  std::vector<std::array<std::deque<int>, kLanesPerLink>> queue;  // per link per lane
  std::vector<std::array<int, kLanesPerLink>> serviced_this_step;  // per link per lane

  std::vector<double> spawn_next;  // per flow entry, next spawn time

  struct VehicleRecord {
    int flow_entry;
    int route_pos;
    double enter_time;
    double exit_time;  // negative while still in the network
  };
  std::vector<VehicleRecord> vehicles;

  // census counters, kept exact at every tick
  long spawned_total = 0;
  long in_transit_total = 0;
  long queued_total = 0;
  long completed_total = 0;
  bool check_conservation = false;

  std::vector<long> step_queue;
  std::vector<long> step_throughput;

  bool done() const { return clock >= episode_length; }
  long lane_queue(int link, int lane) const {
    return static_cast<long>(queue[link][lane].size());
  }
  long total_queue() const;

  // Recounts every container; equals the counters when the state is sound.
  struct Census {
    long spawned, in_transit, queued, completed;
  };
  Census census() const;
};

struct StepResult {
  ObsMatrix obs;
  std::vector<double> rewards;
  bool done = false;
};

SimState reset(const RoadNetwork& net, const FlowSpec& flow, std::uint64_t seed,
               int episode_length = kDefaultEpisodeSeconds);

ObsMatrix observe(const SimState& state);

// Advances one 10 s decision period in 1 s ticks. Lanes whose movement the
// phase enables (plus right turns) discharge one vehicle per 2 s of
// effective green; a phase change costs 3 s of yellow at that intersection.
StepResult step(SimState& state, const std::vector<int>& joint_phases);

// Negated total queue over the agent's 12 incoming lanes.
double reward(const SimState& state, int agent);

MetricsRecord metrics(const SimState& state);  // throws EpisodeNotFinished

void write_metrics_csv(const MetricsRecord& rec, const std::filesystem::path& path);
void write_vehicle_csv(const SimState& state, const std::filesystem::path& path);

using PhaseChooser =
    std::function<std::vector<int>(const SimState&, const ObsMatrix&)>;

// Runs a full episode under the chooser and returns the finished state.
SimState run_episode(const RoadNetwork& net, const FlowSpec& flow,
                     std::uint64_t seed, const PhaseChooser& chooser,
                     int episode_length = kDefaultEpisodeSeconds);

}  // namespace tsclab
