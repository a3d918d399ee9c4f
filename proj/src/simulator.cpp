#include "tsclab/simulator.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "tsclab/errors.hpp"
#include "tsclab/rng.hpp"

namespace tsclab {

namespace {

// Hash of the undirected route geometry. Opposite directions of the same
// corridor share a value, so paired flows draw identical spawn offsets and
// mirrored scenarios stay exactly symmetric.
std::uint64_t route_signature(const RoadNetwork& net, const std::vector<int>& route) {
  std::vector<std::pair<int, int>> fwd;
  fwd.reserve(route.size());
  for (int id : route) {
    const Link& l = net.link(id);
    fwd.emplace_back(std::min(l.from, l.to), std::max(l.from, l.to));
  }
  std::vector<std::pair<int, int>> rev(fwd.rbegin(), fwd.rend());
  const auto& canon = fwd <= rev ? fwd : rev;
  std::uint64_t h = 0x51ab0e57a1c3ULL;
  for (const auto& [a, b] : canon) {
    h = mix_seed(h, static_cast<std::uint64_t>(a) << 20 | static_cast<std::uint64_t>(b));
  }
  return h;
}

int movement_lane(const Intersection& node, int approach, int next_link) {
  for (int m = 0; m < 3; ++m) {
    if (node.movement_table[approach][m] == next_link) return m;
  }
  return -1;
}

}  // namespace

long SimState::total_queue() const {
  long total = 0;
  for (const auto& lanes : queue) {
    for (const auto& q : lanes) total += static_cast<long>(q.size());
  }
  return total;
}

SimState::Census SimState::census() const {
  Census c{0, 0, 0, 0};
  c.spawned = static_cast<long>(vehicles.size());
  for (const auto& v : vehicles) {
    if (v.exit_time >= 0) ++c.completed;
  }
  for (const auto& t : transit) c.in_transit += static_cast<long>(t.size());
  c.queued = total_queue();
  return c;
}

SimState reset(const RoadNetwork& net, const FlowSpec& flow, std::uint64_t seed,
               int episode_length) {
  if (episode_length <= 0 || episode_length % kDecisionPeriod != 0) {
    throw InvalidArgument("episode length must be a positive multiple of 10 s");
  }
  SimState state;
  state.net = &net;
  state.flow = &flow;
  state.seed = seed;
  state.episode_length = episode_length;
  state.phase.assign(net.agent_count(), 1);
  state.phase_changed.assign(net.agent_count(), false);
  state.transit.resize(net.links.size());
  state.queue.resize(net.links.size());
  state.serviced_this_step.assign(net.links.size(), {0, 0, 0});

  // Spawn offsets: uniform in [0, interval), drawn from a stream keyed by the
  // undirected route signature plus the entry's ordinal among identical
  // directed routes. Opposite directions of one corridor therefore pair up
  // lane by lane and draw the same offsets.
  state.spawn_next.reserve(flow.entries.size());
  for (std::size_t f = 0; f < flow.entries.size(); ++f) {
    const FlowEntry& entry = flow.entries[f];
    std::uint64_t sig = route_signature(net, entry.route);
    int ordinal = 0;
    for (std::size_t g = 0; g < f; ++g) {
      if (flow.entries[g].route == entry.route) ++ordinal;
    }
    Rng rng(mix_seed(mix_seed(seed, sig), static_cast<std::uint64_t>(ordinal)));
    state.spawn_next.push_back(entry.start_time + rng.uniform() * entry.interval);
  }

  // A route passing through a signalized node must map onto a movement there.
  for (const FlowEntry& entry : flow.entries) {
    for (std::size_t i = 0; i + 1 < entry.route.size(); ++i) {
      const Link& l = net.link(entry.route[i]);
      const Intersection& node = net.node(l.to);
      if (node.is_virtual) continue;
      int a = static_cast<int>(net.approach_of(node.id, l.id));
      if (movement_lane(node, a, entry.route[i + 1]) < 0) {
        throw ValidationError("flow route requires an unavailable turn at '" +
                              node.name + "'");
      }
    }
  }
  return state;
}

ObsMatrix observe(const SimState& state) {
  const RoadNetwork& net = *state.net;
  ObsMatrix obs(net.agent_count());
  for (int i = 0; i < net.agent_count(); ++i) {
    ObsRow& row = obs[i];
    row.fill(0.0);
    row[state.phase[i] - 1] = 1.0;
    const Intersection& node = net.node(net.agents[i]);
    for (int a = 0; a < kApproachCount; ++a) {
      int link = node.incoming_by_approach[a];
      for (int m = 0; m < kLanesPerLink; ++m) {
        row[4 + a * kLanesPerLink + m] = static_cast<double>(state.lane_queue(link, m));
      }
    }
  }
  return obs;
}

double reward(const SimState& state, int agent) {
  const RoadNetwork& net = *state.net;
  const Intersection& node = net.node(net.agents.at(agent));
  long total = 0;
  for (int a = 0; a < kApproachCount; ++a) {
    int link = node.incoming_by_approach[a];
    for (int m = 0; m < kLanesPerLink; ++m) total += state.lane_queue(link, m);
  }
  return -static_cast<double>(total);
}

namespace {

void complete_vehicle(SimState& state, int vehicle, int tick) {
  state.vehicles[vehicle].exit_time = static_cast<double>(tick);
  --state.in_transit_total;
  ++state.completed_total;
}

void enter_link(SimState& state, int vehicle, int link, int tick) {
  int ready = tick + state.net->link(link).traversal_ticks();
  state.transit[link].push_back({vehicle, ready});
}

void run_tick(SimState& state) {
  const RoadNetwork& net = *state.net;
  const FlowSpec& flow = *state.flow;
  const int s = state.clock;
  const int sub = s % kDecisionPeriod;

  // (a) spawn
  for (std::size_t f = 0; f < flow.entries.size(); ++f) {
    const FlowEntry& entry = flow.entries[f];
    while (state.spawn_next[f] < s + 1 && state.spawn_next[f] < entry.end_time &&
           state.spawn_next[f] < state.episode_length) {
      int vehicle = static_cast<int>(state.vehicles.size());
      state.vehicles.push_back({static_cast<int>(f), 0, state.spawn_next[f], -1.0});
      ++state.spawned_total;
      ++state.in_transit_total;
      enter_link(state, vehicle, entry.route[0], s);
      state.spawn_next[f] += entry.interval;
    }
  }

  // (b) vehicles reaching the end of their link
  for (std::size_t link_id = 0; link_id < state.transit.size(); ++link_id) {
    auto& queue = state.transit[link_id];
    while (!queue.empty() && queue.front().ready_tick <= s) {
      int vehicle = queue.front().vehicle;
      queue.pop_front();
      auto& rec = state.vehicles[vehicle];
      const auto& route = flow.entries[rec.flow_entry].route;
      if (rec.route_pos + 1 == static_cast<int>(route.size())) {
        complete_vehicle(state, vehicle, s);
        continue;
      }
      const Link& l = net.link(static_cast<int>(link_id));
      const Intersection& node = net.node(l.to);
      if (node.is_virtual) {
        // unsignalized pass-through
        ++rec.route_pos;
        enter_link(state, vehicle, route[rec.route_pos], s);
        continue;
      }
      int a = static_cast<int>(net.approach_of(node.id, l.id));
      int lane = movement_lane(node, a, route[rec.route_pos + 1]);
      state.queue[link_id][lane].push_back(vehicle);
      --state.in_transit_total;
      ++state.queued_total;
    }
  }

  // (c) discharge under the current phases
  for (int i = 0; i < net.agent_count(); ++i) {
    const Intersection& node = net.node(net.agents[i]);
    const bool changed = state.phase_changed[i];
    int green_elapsed = sub + 1 - (changed ? kYellowSeconds : 0);
    int target = std::max(0, green_elapsed) / kSaturationHeadway;
    for (int a = 0; a < kApproachCount; ++a) {
      int link = node.incoming_by_approach[a];
      for (int m = 0; m < kLanesPerLink; ++m) {
        if (!phase_enables(state.phase[i], static_cast<Approach>(a),
                           static_cast<Movement>(m))) {
          continue;
        }
        auto& lane_queue = state.queue[link][m];
        int& serviced = state.serviced_this_step[link][m];
        if (serviced >= target || lane_queue.empty()) continue;
        int vehicle = lane_queue.front();
        lane_queue.pop_front();
        ++serviced;
        --state.queued_total;
        ++state.in_transit_total;
        auto& rec = state.vehicles[vehicle];
        ++rec.route_pos;
        enter_link(state, vehicle,
                   flow.entries[rec.flow_entry].route[rec.route_pos], s);
      }
    }
  }

  if (state.check_conservation) {
    if (state.spawned_total !=
        state.in_transit_total + state.queued_total + state.completed_total) {
      throw std::logic_error("vehicle conservation violated");
    }
  }
  ++state.clock;
}

}  // namespace

StepResult step(SimState& state, const std::vector<int>& joint_phases) {
  const RoadNetwork& net = *state.net;
  if (state.done()) throw std::logic_error("step() called on a finished episode");
  if (static_cast<int>(joint_phases.size()) != net.agent_count()) {
    throw InvalidPhase("expected one phase per signalized intersection");
  }
  for (int p : joint_phases) {
    if (p < 1 || p > kPhaseCount) {
      throw InvalidPhase("phase id must be in 1..4, got " + std::to_string(p));
    }
  }
  for (int i = 0; i < net.agent_count(); ++i) {
    state.phase_changed[i] = joint_phases[i] != state.phase[i];
    state.phase[i] = joint_phases[i];
  }
  for (auto& lanes : state.serviced_this_step) lanes = {0, 0, 0};

  for (int t = 0; t < kDecisionPeriod; ++t) run_tick(state);

  state.step_queue.push_back(state.total_queue());
  state.step_throughput.push_back(state.completed_total);

  StepResult result;
  result.obs = observe(state);
  result.rewards.resize(net.agent_count());
  for (int i = 0; i < net.agent_count(); ++i) result.rewards[i] = reward(state, i);
  result.done = state.done();
  return result;
}

MetricsRecord metrics(const SimState& state) {
  if (!state.done()) throw EpisodeNotFinished("episode has not reached its end time");
  MetricsRecord rec;
  rec.steps = static_cast<int>(state.step_queue.size());
  rec.step_queue = state.step_queue;
  rec.step_throughput = state.step_throughput;
  rec.throughput = state.completed_total;
  if (!state.vehicles.empty()) {
    double total = 0.0;
    for (const auto& v : state.vehicles) {
      double exit = v.exit_time >= 0 ? v.exit_time : state.episode_length;
      total += exit - v.enter_time;
    }
    rec.att = total / static_cast<double>(state.vehicles.size());
  }
  return rec;
}

void write_metrics_csv(const MetricsRecord& rec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,total_queue,throughput\n";
  for (std::size_t i = 0; i < rec.step_queue.size(); ++i) {
    out << (i + 1) << "," << rec.step_queue[i] << "," << rec.step_throughput[i] << "\n";
  }
  out << std::setprecision(17) << "ATT," << rec.att << "," << rec.throughput << "\n";
}

void write_vehicle_csv(const SimState& state, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "vehicle,enter_time,exit_time,completed\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < state.vehicles.size(); ++i) {
    const auto& v = state.vehicles[i];
    double exit = v.exit_time >= 0 ? v.exit_time : state.episode_length;
    out << i << "," << v.enter_time << "," << exit << "," << (v.exit_time >= 0 ? 1 : 0)
        << "\n";
  }
}

SimState run_episode(const RoadNetwork& net, const FlowSpec& flow,
                     std::uint64_t seed, const PhaseChooser& chooser,
                     int episode_length) {
  SimState state = reset(net, flow, seed, episode_length);
  ObsMatrix obs = observe(state);
  while (!state.done()) {
    StepResult r = step(state, chooser(state, obs));
    obs = std::move(r.obs);
  }
  return state;
}

}  // namespace tsclab
