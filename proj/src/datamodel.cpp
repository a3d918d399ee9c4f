#include "tsclab/datamodel.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "tsclab/errors.hpp"

#include <json.hpp>

namespace tsclab {

using ordered_json = nlohmann::ordered_json;

const char* approach_name(Approach a) {
  switch (a) {
    case Approach::East: return "E";
    case Approach::South: return "S";
    case Approach::West: return "W";
    case Approach::North: return "N";
  }
  return "?";
}

const char* movement_name(Movement m) {
  switch (m) {
    case Movement::Through: return "T";
    case Movement::Left: return "L";
    case Movement::Right: return "R";
  }
  return "?";
}

bool phase_enables(int phase, Approach approach, Movement movement) {
  if (movement == Movement::Right) return true;
  switch (phase) {
    case 1:
      return movement == Movement::Through &&
             (approach == Approach::East || approach == Approach::West);
    case 2:
      return movement == Movement::Left &&
             (approach == Approach::East || approach == Approach::West);
    case 3:
      return movement == Movement::Through &&
             (approach == Approach::South || approach == Approach::North);
    case 4:
      return movement == Movement::Left &&
             (approach == Approach::North || approach == Approach::South);
    default:
      return false;
  }
}

namespace {

// Compass direction of (dx, dy), dominant axis wins.
Approach compass(double dx, double dy) {
  if (std::abs(dx) >= std::abs(dy)) {
    return dx > 0 ? Approach::East : Approach::West;
  }
  return dy > 0 ? Approach::North : Approach::South;
}

// Side of the intersection a movement exits to, given the arrival approach.
// With approaches ordered E,S,W,N: through is the opposite side, a left turn
// is the next side clockwise from the driver's view, a right turn the
// previous one.
int exit_side(int approach, Movement m) {
  switch (m) {
    case Movement::Through: return (approach + 2) % 4;
    case Movement::Left: return (approach + 1) % 4;
    case Movement::Right: return (approach + 3) % 4;
  }
  return -1;
}

}  // namespace

Approach RoadNetwork::approach_of(int node_id, int link_id) const {
  const Link& l = link(link_id);
  const Intersection& n = node(node_id);
  const Intersection& from = node(l.from);
  return compass(from.x - n.x, from.y - n.y);
}

void RoadNetwork::rebuild_derived() {
  const int n = static_cast<int>(intersections.size());
  adjacency.assign(n, std::vector<std::uint8_t>(n, 0));
  agents.clear();

  for (auto& node : intersections) {
    node.incoming_links.clear();
    node.outgoing_links.clear();
    node.incoming_lanes.clear();
    node.outgoing_lanes.clear();
    node.incoming_by_approach = {-1, -1, -1, -1};
    node.outgoing_by_approach = {-1, -1, -1, -1};
    for (auto& row : node.movement_table) row = {-1, -1, -1};
  }

  for (const Link& l : links) {
    if (l.from < 0 || l.from >= n || l.to < 0 || l.to >= n) continue;
    adjacency[l.from][l.to] = 1;
    adjacency[l.to][l.from] = 1;
    intersections[l.to].incoming_links.push_back(l.id);
    intersections[l.from].outgoing_links.push_back(l.id);
  }

  for (auto& node : intersections) {
    if (node.is_virtual) continue;
    agents.push_back(node.id);
    for (int link_id : node.incoming_links) {
      int a = static_cast<int>(approach_of(node.id, link_id));
      if (node.incoming_by_approach[a] == -1) node.incoming_by_approach[a] = link_id;
    }
    for (int link_id : node.outgoing_links) {
      const Link& l = links[link_id];
      const Intersection& to = intersections[l.to];
      int side = static_cast<int>(compass(to.x - node.x, to.y - node.y));
      if (node.outgoing_by_approach[side] == -1) node.outgoing_by_approach[side] = link_id;
    }
    for (int a = 0; a < kApproachCount; ++a) {
      for (int m = 0; m < 3; ++m) {
        int side = exit_side(a, static_cast<Movement>(m));
        node.movement_table[a][m] = node.outgoing_by_approach[side];
      }
      int in = node.incoming_by_approach[a];
      int out = node.outgoing_by_approach[a];
      for (int lane = 0; lane < kLanesPerLink; ++lane) {
        node.incoming_lanes.push_back({in, lane});
        node.outgoing_lanes.push_back({out, lane});
      }
    }
  }
}

void RoadNetwork::validate() const {
  const int n = static_cast<int>(intersections.size());
  for (const Link& l : links) {
    if (l.from < 0 || l.from >= n || l.to < 0 || l.to >= n) {
      throw ValidationError("link '" + l.name + "' references an unknown intersection");
    }
    if (!(l.length > 0.0)) throw ValidationError("link '" + l.name + "' has non-positive length");
    if (l.lane_count < 1) throw ValidationError("link '" + l.name + "' has no lanes");
    if (!(l.free_flow_speed > 0.0)) {
      throw ValidationError("link '" + l.name + "' has non-positive speed");
    }
  }
  for (const Intersection& node : intersections) {
    if (node.is_virtual) continue;
    if (node.phase_count != kPhaseCount) {
      throw ValidationError("intersection '" + node.name + "' is signalized but not 4-phase");
    }
    if (node.incoming_links.size() != kApproachCount ||
        node.outgoing_links.size() != kApproachCount) {
      throw ValidationError("intersection '" + node.name +
                            "' must have 4 incoming and 4 outgoing links");
    }
    std::array<int, kApproachCount> seen_in{0, 0, 0, 0};
    for (int link_id : node.incoming_links) {
      seen_in[static_cast<int>(approach_of(node.id, link_id))]++;
      if (links[link_id].lane_count != kLanesPerLink) {
        throw ValidationError("incoming link '" + links[link_id].name +
                              "' of a signalized intersection must have 3 lanes");
      }
    }
    for (int a = 0; a < kApproachCount; ++a) {
      if (seen_in[a] != 1) {
        throw ValidationError("intersection '" + node.name +
                              "' lacks a unique approach on side " +
                              approach_name(static_cast<Approach>(a)));
      }
      if (node.incoming_by_approach[a] < 0 || node.outgoing_by_approach[a] < 0) {
        throw ValidationError("intersection '" + node.name + "' has an unassigned approach");
      }
    }
  }
  // adjacency mirrors the link list
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      bool connected = false;
      for (const Link& l : links) {
        if ((l.from == i && l.to == j) || (l.from == j && l.to == i)) {
          connected = true;
          break;
        }
      }
      if (static_cast<bool>(adjacency[i][j]) != connected) {
        throw ValidationError("adjacency matrix is inconsistent with the link list");
      }
    }
  }
}

namespace {

ordered_json parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path.string());
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed file " + path.string() + ": " + e.what());
  }
}

double road_length(const ordered_json& road) {
  if (road.contains("length")) return road["length"].get<double>();
  if (road.contains("points")) {
    const auto& pts = road["points"];
    double total = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      double dx = pts[i]["x"].get<double>() - pts[i - 1]["x"].get<double>();
      double dy = pts[i]["y"].get<double>() - pts[i - 1]["y"].get<double>();
      total += std::sqrt(dx * dx + dy * dy);
    }
    return total;
  }
  throw ParseError("road '" + road.value("id", std::string("?")) + "' has no length");
}

int road_lane_count(const ordered_json& road) {
  if (!road.contains("lanes")) return kLanesPerLink;
  const auto& lanes = road["lanes"];
  if (lanes.is_number()) return lanes.get<int>();
  if (lanes.is_array()) return static_cast<int>(lanes.size());
  throw ParseError("road '" + road.value("id", std::string("?")) + "' has malformed lanes");
}

double road_speed(const ordered_json& road) {
  if (road.contains("maxSpeed")) return road["maxSpeed"].get<double>();
  if (road.contains("lanes") && road["lanes"].is_array() && !road["lanes"].empty() &&
      road["lanes"][0].contains("maxSpeed")) {
    return road["lanes"][0]["maxSpeed"].get<double>();
  }
  return 16.67;
}

}  // namespace

RoadNetwork load_roadnet(const std::filesystem::path& path) {
  ordered_json doc = parse_file(path);
  RoadNetwork net;
  try {
    if (!doc.contains("intersections") || !doc.contains("roads")) {
      throw ParseError("roadnet file must contain 'intersections' and 'roads'");
    }
    std::map<std::string, int> by_name;
    for (const auto& j : doc["intersections"]) {
      Intersection node;
      node.id = static_cast<int>(net.intersections.size());
      node.name = j.at("id").get<std::string>();
      node.x = j.at("point").at("x").get<double>();
      node.y = j.at("point").at("y").get<double>();
      node.is_virtual = j.value("virtual", false);
      node.phase_count = node.is_virtual ? 0 : j.value("phases", kPhaseCount);
      if (by_name.count(node.name)) {
        throw ValidationError("duplicate intersection id '" + node.name + "'");
      }
      by_name[node.name] = node.id;
      net.intersections.push_back(std::move(node));
    }
    for (const auto& j : doc["roads"]) {
      Link link;
      link.id = static_cast<int>(net.links.size());
      link.name = j.at("id").get<std::string>();
      const std::string from = j.at("startIntersection").get<std::string>();
      const std::string to = j.at("endIntersection").get<std::string>();
      auto fit = by_name.find(from);
      auto tit = by_name.find(to);
      if (fit == by_name.end() || tit == by_name.end()) {
        throw ValidationError("road '" + link.name + "' references an unknown intersection");
      }
      link.from = fit->second;
      link.to = tit->second;
      link.length = road_length(j);
      link.lane_count = road_lane_count(j);
      link.free_flow_speed = road_speed(j);
      net.links.push_back(std::move(link));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed roadnet file: " + std::string(e.what()));
  }
  net.rebuild_derived();
  net.validate();
  return net;
}

void save_roadnet(const RoadNetwork& net, const std::filesystem::path& path) {
  ordered_json doc;
  doc["intersections"] = ordered_json::array();
  for (const Intersection& node : net.intersections) {
    ordered_json j;
    j["id"] = node.name;
    j["point"] = {{"x", node.x}, {"y", node.y}};
    j["virtual"] = node.is_virtual;
    if (!node.is_virtual) j["phases"] = node.phase_count;
    doc["intersections"].push_back(std::move(j));
  }
  doc["roads"] = ordered_json::array();
  for (const Link& link : net.links) {
    ordered_json j;
    j["id"] = link.name;
    j["startIntersection"] = net.node(link.from).name;
    j["endIntersection"] = net.node(link.to).name;
    j["length"] = link.length;
    j["lanes"] = link.lane_count;
    j["maxSpeed"] = link.free_flow_speed;
    doc["roads"].push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write file: " + path.string());
  out << doc.dump(2) << "\n";
}

FlowSpec load_flow(const std::filesystem::path& path, const RoadNetwork& net) {
  ordered_json doc = parse_file(path);
  if (!doc.is_array()) throw ParseError("flow file must be an array of flow entries");
  std::map<std::string, int> link_by_name;
  for (const Link& l : net.links) link_by_name[l.name] = l.id;

  FlowSpec flow;
  try {
    for (const auto& j : doc) {
      FlowEntry entry;
      for (const auto& name : j.at("route")) {
        auto it = link_by_name.find(name.get<std::string>());
        if (it == link_by_name.end()) {
          throw ValidationError("flow route references unknown road '" +
                                name.get<std::string>() + "'");
        }
        entry.route.push_back(it->second);
      }
      entry.interval = j.at("interval").get<double>();
      entry.start_time = j.value("startTime", 0.0);
      double end = j.value("endTime", -1.0);
      entry.end_time = end < 0 ? std::numeric_limits<double>::infinity() : end;

      if (entry.route.empty()) throw ValidationError("flow entry has an empty route");
      if (!(entry.interval > 0.0)) throw ValidationError("flow interval must be positive");
      if (entry.start_time > entry.end_time) {
        throw ValidationError("flow start time is after its end time");
      }
      for (std::size_t i = 1; i < entry.route.size(); ++i) {
        if (net.link(entry.route[i - 1]).to != net.link(entry.route[i]).from) {
          throw ValidationError("flow route is not contiguous at road '" +
                                net.link(entry.route[i]).name + "'");
        }
      }
      flow.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed flow file: " + std::string(e.what()));
  }
  return flow;
}

void save_flow(const FlowSpec& flow, const RoadNetwork& net,
               const std::filesystem::path& path) {
  ordered_json doc = ordered_json::array();
  for (const FlowEntry& entry : flow.entries) {
    ordered_json j;
    j["vehicle"] = ordered_json::object();
    j["route"] = ordered_json::array();
    for (int id : entry.route) j["route"].push_back(net.link(id).name);
    j["interval"] = entry.interval;
    j["startTime"] = entry.start_time;
    j["endTime"] = std::isinf(entry.end_time) ? -1.0 : entry.end_time;
    doc.push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write file: " + path.string());
  out << doc.dump(2) << "\n";
}

namespace {

std::string grid_node_name(int gx, int gy) {
  return "intersection_" + std::to_string(gx) + "_" + std::to_string(gy);
}

std::string grid_road_name(int fx, int fy, int tx, int ty) {
  return "road_" + std::to_string(fx) + "_" + std::to_string(fy) + "_" +
         std::to_string(tx) + "_" + std::to_string(ty);
}

}  // namespace

std::pair<RoadNetwork, FlowSpec> generate_grid(const GridSpec& spec) {
  if (spec.rows < 1 || spec.cols < 1) {
    throw InvalidArgument("grid dimensions must be at least 1x1");
  }
  if (spec.we_rate < 0 || spec.sn_rate < 0) {
    throw InvalidArgument("arrival rates must be nonnegative");
  }

  RoadNetwork net;
  const double L = spec.link_length;

  // Real nodes in row-major order, grid coordinates 1..cols x 1..rows.
  auto add_node = [&](int gx, int gy, bool is_virtual) {
    Intersection node;
    node.id = static_cast<int>(net.intersections.size());
    node.name = grid_node_name(gx, gy);
    node.x = gx * L;
    node.y = gy * L;
    node.is_virtual = is_virtual;
    node.phase_count = is_virtual ? 0 : kPhaseCount;
    net.intersections.push_back(std::move(node));
    return net.intersections.back().id;
  };

  std::vector<std::vector<int>> real(spec.rows, std::vector<int>(spec.cols));
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) real[r][c] = add_node(c + 1, r + 1, false);
  }
  std::vector<int> west(spec.rows), east(spec.rows), south(spec.cols), north(spec.cols);
  for (int r = 0; r < spec.rows; ++r) west[r] = add_node(0, r + 1, true);
  for (int r = 0; r < spec.rows; ++r) east[r] = add_node(spec.cols + 1, r + 1, true);
  for (int c = 0; c < spec.cols; ++c) south[c] = add_node(c + 1, 0, true);
  for (int c = 0; c < spec.cols; ++c) north[c] = add_node(c + 1, spec.rows + 1, true);

  auto grid_pos = [&](int id) {
    const Intersection& n = net.intersections[id];
    return std::pair<int, int>(static_cast<int>(n.x / L), static_cast<int>(n.y / L));
  };
  auto add_link = [&](int from, int to) {
    auto [fx, fy] = grid_pos(from);
    auto [tx, ty] = grid_pos(to);
    Link link;
    link.id = static_cast<int>(net.links.size());
    link.name = grid_road_name(fx, fy, tx, ty);
    link.from = from;
    link.to = to;
    link.length = L;
    link.lane_count = spec.lane_count;
    link.free_flow_speed = spec.free_flow_speed;
    net.links.push_back(std::move(link));
    return net.links.back().id;
  };

  // Eastbound and westbound chains per row, stored west-to-east.
  std::vector<std::vector<int>> eastbound(spec.rows), westbound(spec.rows);
  for (int r = 0; r < spec.rows; ++r) {
    std::vector<int> chain;
    chain.push_back(west[r]);
    for (int c = 0; c < spec.cols; ++c) chain.push_back(real[r][c]);
    chain.push_back(east[r]);
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
      eastbound[r].push_back(add_link(chain[i], chain[i + 1]));
    }
    for (std::size_t i = chain.size() - 1; i >= 1; --i) {
      westbound[r].push_back(add_link(chain[i], chain[i - 1]));
    }
    std::reverse(westbound[r].begin(), westbound[r].end());
  }
  // Southbound and northbound chains per column, stored north-to-south.
  std::vector<std::vector<int>> southbound(spec.cols), northbound(spec.cols);
  for (int c = 0; c < spec.cols; ++c) {
    std::vector<int> chain;
    chain.push_back(north[c]);
    for (int r = spec.rows - 1; r >= 0; --r) chain.push_back(real[r][c]);
    chain.push_back(south[c]);
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
      southbound[c].push_back(add_link(chain[i], chain[i + 1]));
    }
    for (std::size_t i = chain.size() - 1; i >= 1; --i) {
      northbound[c].push_back(add_link(chain[i], chain[i - 1]));
    }
    std::reverse(northbound[c].begin(), northbound[c].end());
  }

  net.rebuild_derived();
  net.validate();

  FlowSpec flow;
  auto add_flows = [&](const std::vector<int>& route, double rate) {
    if (rate <= 0) return;
    FlowEntry entry;
    entry.route = route;
    entry.interval = 3600.0 / rate;
    entry.start_time = 0.0;
    entry.end_time = 3600.0;
    for (int lane = 0; lane < spec.lane_count; ++lane) flow.entries.push_back(entry);
  };
  auto reversed = [](std::vector<int> v) {
    std::reverse(v.begin(), v.end());
    return v;
  };

  for (int r = 0; r < spec.rows; ++r) {
    add_flows(eastbound[r], spec.we_rate);  // W -> E
    if (spec.mode == GridMode::Bidirectional) {
      add_flows(reversed(westbound[r]), spec.we_rate);  // E -> W
    }
  }
  for (int c = 0; c < spec.cols; ++c) {
    add_flows(southbound[c], spec.sn_rate);  // N -> S
    if (spec.mode == GridMode::Bidirectional) {
      add_flows(reversed(northbound[c]), spec.sn_rate);  // S -> N
    }
  }
  return {std::move(net), std::move(flow)};
}

}  // namespace tsclab
