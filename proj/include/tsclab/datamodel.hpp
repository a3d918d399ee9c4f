#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace tsclab {

constexpr int kPhaseCount = 4;
constexpr int kLanesPerLink = 3;
constexpr int kApproachCount = 4;
constexpr int kIncomingLaneCount = kApproachCount * kLanesPerLink;

/// Compass side of an intersection an incoming link arrives from.
/// The ordering fixes the lane layout of observations and queues.
enum class Approach : int { East = 0, South = 1, West = 2, North = 3 };

enum class Movement : int { Through = 0, Left = 1, Right = 2 };

const char* approach_name(Approach a);
const char* movement_name(Movement m);

/// Signal plan shared by every intersection: four phases over the
/// through/left movements, right turns permitted under all of them.
///   Phase 1: E-through + W-through      Phase 2: E-left + W-left
///   Phase 3: S-through + N-through      Phase 4: N-left + S-left
bool phase_enables(int phase, Approach approach, Movement movement);

struct Link {
  int id = -1;
  std::string name;
  int from = -1;
  int to = -1;
  double length = 0.0;
  int lane_count = 0;
  double free_flow_speed = 0.0;

  // Whole seconds needed to traverse the link at free flow.
  int traversal_ticks() const {
    return std::max(1, static_cast<int>(std::ceil(length / free_flow_speed - 1e-9)));
  }

  bool operator==(const Link&) const = default;
};

struct LaneId {
  int link = -1;
  int lane = -1;
  bool operator==(const LaneId&) const = default;
};

struct Intersection {
  int id = -1;
  std::string name;
  double x = 0.0;
  double y = 0.0;
  bool is_virtual = false;
  int phase_count = 0;  // 4 when signalized, 0 for virtual boundary nodes

  // Signalized nodes: one incoming and one outgoing link per approach,
  // indexed by Approach. Virtual nodes keep flat lists instead.
  std::array<int, kApproachCount> incoming_by_approach{-1, -1, -1, -1};
  std::array<int, kApproachCount> outgoing_by_approach{-1, -1, -1, -1};
  std::vector<int> incoming_links;
  std::vector<int> outgoing_links;

  // Lane lists ordered E,S,W,N x T,L,R for signalized nodes.
  std::vector<LaneId> incoming_lanes;
  std::vector<LaneId> outgoing_lanes;

  // movement_table[approach][movement] = outgoing link id.
  std::array<std::array<int, 3>, kApproachCount> movement_table{{{-1, -1, -1},
                                                                 {-1, -1, -1},
                                                                 {-1, -1, -1},
                                                                 {-1, -1, -1}}};

  bool operator==(const Intersection&) const = default;
};

struct RoadNetwork {
  std::vector<Intersection> intersections;
  std::vector<Link> links;
  // adjacency[i][j] = 1 iff some link connects nodes i and j (either way).
  std::vector<std::vector<std::uint8_t>> adjacency;
  // Ids of signalized intersections in agent order.
  std::vector<int> agents;

  const Intersection& node(int id) const { return intersections.at(id); }
  const Link& link(int id) const { return links.at(id); }
  int agent_count() const { return static_cast<int>(agents.size()); }

  // Approach the link uses to enter intersection `node_id`.
  Approach approach_of(int node_id, int link_id) const;

  void rebuild_derived();  // adjacency, approaches, lanes, movement tables
  void validate() const;   // throws ValidationError

  bool operator==(const RoadNetwork&) const = default;
};

struct FlowEntry {
  std::vector<int> route;  // contiguous link ids
  double interval = 0.0;   // seconds between spawns
  double start_time = 0.0;
  double end_time = std::numeric_limits<double>::infinity();

  bool operator==(const FlowEntry&) const = default;
};

struct FlowSpec {
  std::vector<FlowEntry> entries;
  bool operator==(const FlowSpec&) const = default;
};

RoadNetwork load_roadnet(const std::filesystem::path& path);
void save_roadnet(const RoadNetwork& net, const std::filesystem::path& path);

FlowSpec load_flow(const std::filesystem::path& path, const RoadNetwork& net);
void save_flow(const FlowSpec& flow, const RoadNetwork& net,
               const std::filesystem::path& path);

enum class GridMode { Unidirectional, Bidirectional };

struct GridSpec {
  int rows = 1;
  int cols = 1;
  GridMode mode = GridMode::Bidirectional;
  double we_rate = 300.0;  // vehicles/lane/hour, W<->E corridors
  double sn_rate = 90.0;   // vehicles/lane/hour, S<->N corridors
  double link_length = 300.0;
  int lane_count = kLanesPerLink;
  double free_flow_speed = 16.67;  // 60 km/h
};

// Grid of rows x cols signalized intersections with virtual boundary nodes
// on all four sides and one flow entry per corridor direction per lane.
std::pair<RoadNetwork, FlowSpec> generate_grid(const GridSpec& spec);

}  // namespace tsclab
