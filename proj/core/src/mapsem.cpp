#include "scenforge/mapsem.hpp"

#include <algorithm>
#include <cmath>

#include "scenforge/errors.hpp"
#include "json.hpp"

namespace scenforge::mapsem {

using geom::Vec2;
using ordered_json = nlohmann::ordered_json;

BoundaryType boundary_from_string(std::string_view s) {
  if (s == "solid_white") return BoundaryType::SOLID_WHITE;
  if (s == "dashed_white") return BoundaryType::DASHED_WHITE;
  if (s == "solid_yellow") return BoundaryType::SOLID_YELLOW;
  if (s == "dashed_yellow") return BoundaryType::DASHED_YELLOW;
  throw ParseError("unknown boundary type '" + std::string(s) + "'");
}

std::string to_string(BoundaryType b) {
  switch (b) {
    case BoundaryType::SOLID_WHITE: return "solid_white";
    case BoundaryType::DASHED_WHITE: return "dashed_white";
    case BoundaryType::SOLID_YELLOW: return "solid_yellow";
    case BoundaryType::DASHED_YELLOW: return "dashed_yellow";
  }
  return "solid_white";
}

std::string to_string(JunctionType t) {
  switch (t) {
    case JunctionType::T_SHAPED: return "T_SHAPED";
    case JunctionType::Y_SHAPED: return "Y_SHAPED";
    case JunctionType::FOUR_WAY: return "FOUR_WAY";
    case JunctionType::OTHER: return "OTHER";
  }
  return "OTHER";
}

std::string to_string(TurnDirection d) {
  switch (d) {
    case TurnDirection::LEFT: return "left";
    case TurnDirection::RIGHT: return "right";
    case TurnDirection::STRAIGHT: return "straight";
    case TurnDirection::U_TURN: return "u-turn";
  }
  return "straight";
}

double Road::total_width() const {
  double w = 0.0;
  for (const Lane& l : lanes) w += l.width;
  return w;
}

std::pair<double, double> Road::lane_interval(int index) const {
  double left_edge = total_width() / 2.0;
  for (int i = 0; i < index; ++i) left_edge -= lanes[static_cast<std::size_t>(i)].width;
  double right_edge = left_edge - lanes[static_cast<std::size_t>(index)].width;
  return {right_edge, left_edge};
}

MapGraph MapGraph::parse(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("map: ") + e.what());
  }
  std::vector<Road> roads;
  for (const auto& jr : j.value("roads", ordered_json::array())) {
    Road r;
    r.id = jr.at("id").get<std::string>();
    std::vector<Vec2> pts;
    for (const auto& p : jr.at("centerline")) {
      pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
    r.centerline = geom::Polyline(std::move(pts));
    r.speed_limit = jr.value("speed_limit", 13.9);
    int idx = 0;
    for (const auto& jl : jr.at("lanes")) {
      Lane l;
      l.road = r.id;
      l.index = idx++;
      l.id = r.id + "." + std::to_string(l.index);
      std::string dir = jl.value("dir", "forward");
      if (dir == "forward") {
        l.dir = LaneDir::FORWARD;
      } else if (dir == "backward") {
        l.dir = LaneDir::BACKWARD;
      } else {
        throw ParseError("road '" + r.id + "': lane dir must be forward|backward");
      }
      l.width = jl.value("width", 3.5);
      l.left_boundary = boundary_from_string(jl.value("left_boundary", "solid_white"));
      l.right_boundary = boundary_from_string(jl.value("right_boundary", "solid_white"));
      l.speed_limit = jl.value("speed_limit", r.speed_limit);
      r.lanes.push_back(std::move(l));
    }
    if (jr.contains("links") && !jr["links"].is_null()) {
      auto parse_link = [&](const ordered_json& lj) -> EndLink {
        if (lj.is_null()) return {};
        if (lj.contains("junction")) return {EndKind::JUNCTION, lj["junction"].get<std::string>()};
        if (lj.contains("road")) return {EndKind::ROAD, lj["road"].get<std::string>()};
        throw ParseError("road '" + r.id + "': link must name a junction or road");
      };
      if (jr["links"].contains("start")) r.start_link = parse_link(jr["links"]["start"]);
      if (jr["links"].contains("end")) r.end_link = parse_link(jr["links"]["end"]);
    }
    roads.push_back(std::move(r));
  }

  std::vector<Junction> junctions;
  for (const auto& jj : j.value("junctions", ordered_json::array())) {
    Junction jn;
    jn.id = jj.at("id").get<std::string>();
    for (const auto& ji : jj.at("incident")) {
      IncidentRoad inc;
      inc.road = ji.at("road").get<std::string>();
      std::string end = ji.at("end").get<std::string>();
      if (end == "start") {
        inc.end = RoadEnd::START;
      } else if (end == "end") {
        inc.end = RoadEnd::END;
      } else {
        throw ParseError("junction '" + jn.id + "': incident end must be start|end");
      }
      jn.incident.push_back(std::move(inc));
    }
    for (const auto& jc : jj.value("connections", ordered_json::array())) {
      jn.connections.push_back({jc.at(0).get<std::string>(), jc.at(1).get<std::string>()});
    }
    jn.signalized = jj.value("signalized", false);
    junctions.push_back(std::move(jn));
  }

  std::vector<CrossWalk> crosswalks;
  for (const auto& jc : j.value("crosswalks", ordered_json::array())) {
    crosswalks.push_back({jc.at("junction").get<std::string>(), jc.at("road").get<std::string>()});
  }
  std::vector<TrafficLight> lights;
  for (const auto& jl : j.value("traffic_lights", ordered_json::array())) {
    lights.push_back({jl.at("junction").get<std::string>(), jl.at("road").get<std::string>()});
  }
  return build(std::move(roads), std::move(junctions), std::move(crosswalks), std::move(lights));
}

MapGraph MapGraph::build(std::vector<Road> roads, std::vector<Junction> junctions,
                         std::vector<CrossWalk> crosswalks, std::vector<TrafficLight> lights) {
  MapGraph m;
  m.roads_ = std::move(roads);
  m.junctions_ = std::move(junctions);
  m.crosswalks_ = std::move(crosswalks);
  m.lights_ = std::move(lights);
  m.validate_and_derive();
  return m;
}

void MapGraph::validate_and_derive() {
  road_idx_.clear();
  junction_idx_.clear();
  for (std::size_t i = 0; i < roads_.size(); ++i) {
    Road& r = roads_[i];
    if (r.centerline.points().size() < 2 || r.centerline.length() < 1e-6) {
      throw ParseError("road '" + r.id + "': degenerate centerline");
    }
    if (r.lanes.empty()) throw ParseError("road '" + r.id + "': needs at least one lane");
    for (const Lane& l : r.lanes) {
      if (l.width <= 0.0) throw ParseError("road '" + r.id + "': lane width must be positive");
    }
    if (!road_idx_.emplace(r.id, i).second) throw ParseError("duplicate road id '" + r.id + "'");
  }
  for (std::size_t i = 0; i < junctions_.size(); ++i) {
    if (!junction_idx_.emplace(junctions_[i].id, i).second) {
      throw ParseError("duplicate junction id '" + junctions_[i].id + "'");
    }
  }

  // lane geometry: offset from the road centerline, oriented along travel
  for (Road& r : roads_) {
    double left_edge = r.total_width() / 2.0;
    for (Lane& l : r.lanes) {
      double off = left_edge - l.width / 2.0;
      l.offset_from_centerline = off;
      geom::Polyline shifted = r.centerline.offset(off);
      l.center = l.dir == LaneDir::FORWARD ? shifted : shifted.reversed();
      left_edge -= l.width;
    }
  }

  // links resolve
  for (const Road& r : roads_) {
    for (const EndLink* link : {&r.start_link, &r.end_link}) {
      if (link->kind == EndKind::JUNCTION && junction_idx_.find(link->id) == junction_idx_.end()) {
        throw ParseError("road '" + r.id + "': link to missing junction '" + link->id + "'");
      }
      if (link->kind == EndKind::ROAD && road_idx_.find(link->id) == road_idx_.end()) {
        throw ParseError("road '" + r.id + "': link to missing road '" + link->id + "'");
      }
    }
  }

  for (Junction& j : junctions_) {
    if (j.incident.empty()) throw ParseError("junction '" + j.id + "': no incident roads");
    Vec2 sum{};
    double max_halfwidth = 0.0;
    for (const IncidentRoad& inc : j.incident) {
      auto it = road_idx_.find(inc.road);
      if (it == road_idx_.end()) {
        throw ParseError("junction '" + j.id + "': incident road '" + inc.road + "' missing");
      }
      const Road& r = roads_[it->second];
      Vec2 p = inc.end == RoadEnd::START ? r.centerline.points().front() : r.centerline.points().back();
      sum = sum + p;
      max_halfwidth = std::max(max_halfwidth, r.total_width() / 2.0);
    }
    j.center = sum * (1.0 / static_cast<double>(j.incident.size()));
    double max_dist = 0.0;
    for (const IncidentRoad& inc : j.incident) {
      max_dist = std::max(max_dist, (touch_point(j, inc) - j.center).norm());
    }
    j.core_radius = max_dist;
    j.radius = max_dist + max_halfwidth + 2.0;

    for (const Connection& c : j.connections) {
      for (const std::string* lane_id : {&c.in_lane, &c.out_lane}) {
        const Lane* l = find_lane(*lane_id);
        if (!l) throw ParseError("junction '" + j.id + "': connection references missing lane '" + *lane_id + "'");
        bool incident = std::any_of(j.incident.begin(), j.incident.end(),
                                    [&](const IncidentRoad& inc) { return inc.road == l->road; });
        if (!incident) {
          throw ParseError("junction '" + j.id + "': connection lane '" + *lane_id +
                           "' is not on an incident road");
        }
      }
    }
  }

  for (const CrossWalk& c : crosswalks_) {
    if (junction_idx_.find(c.junction) == junction_idx_.end()) {
      throw ParseError("crosswalk references missing junction '" + c.junction + "'");
    }
    if (road_idx_.find(c.road) == road_idx_.end()) {
      throw ParseError("crosswalk references missing road '" + c.road + "'");
    }
  }
  for (const TrafficLight& l : lights_) {
    if (junction_idx_.find(l.junction) == junction_idx_.end()) {
      throw ParseError("traffic light references missing junction '" + l.junction + "'");
    }
    if (road_idx_.find(l.road) == road_idx_.end()) {
      throw ParseError("traffic light references missing road '" + l.road + "'");
    }
  }
}

const Road* MapGraph::find_road(std::string_view id) const {
  auto it = road_idx_.find(id);
  return it == road_idx_.end() ? nullptr : &roads_[it->second];
}

const Junction* MapGraph::find_junction(std::string_view id) const {
  auto it = junction_idx_.find(id);
  return it == junction_idx_.end() ? nullptr : &junctions_[it->second];
}

const Road& MapGraph::road(std::string_view id) const {
  const Road* r = find_road(id);
  if (!r) throw ParseError("unknown road '" + std::string(id) + "'");
  return *r;
}

const Junction& MapGraph::junction(std::string_view id) const {
  const Junction* j = find_junction(id);
  if (!j) throw ParseError("unknown junction '" + std::string(id) + "'");
  return *j;
}

const Lane* MapGraph::find_lane(std::string_view lane_id) const {
  auto dot = lane_id.rfind('.');
  if (dot == std::string_view::npos) return nullptr;
  const Road* r = find_road(lane_id.substr(0, dot));
  if (!r) return nullptr;
  int index = -1;
  try {
    index = std::stoi(std::string(lane_id.substr(dot + 1)));
  } catch (...) {
    return nullptr;
  }
  if (index < 0 || index >= static_cast<int>(r->lanes.size())) return nullptr;
  return &r->lanes[static_cast<std::size_t>(index)];
}

const Lane& MapGraph::lane(std::string_view lane_id) const {
  const Lane* l = find_lane(lane_id);
  if (!l) throw ParseError("unknown lane '" + std::string(lane_id) + "'");
  return *l;
}

geom::Vec2 MapGraph::touch_point(const Junction&, const IncidentRoad& inc) const {
  const Road& r = road(inc.road);
  return inc.end == RoadEnd::START ? r.centerline.points().front() : r.centerline.points().back();
}

std::vector<const Lane*> MapGraph::entering_lanes(const Junction& j, std::string_view road_id) const {
  std::vector<const Lane*> out;
  const Road& r = road(road_id);
  for (const IncidentRoad& inc : j.incident) {
    if (inc.road != road_id) continue;
    for (const Lane& l : r.lanes) {
      // travel ends at the junction endpoint
      bool enters = (inc.end == RoadEnd::END && l.dir == LaneDir::FORWARD) ||
                    (inc.end == RoadEnd::START && l.dir == LaneDir::BACKWARD);
      if (enters) out.push_back(&l);
    }
  }
  return out;
}

std::vector<const Lane*> MapGraph::exiting_lanes(const Junction& j, std::string_view road_id) const {
  std::vector<const Lane*> out;
  const Road& r = road(road_id);
  for (const IncidentRoad& inc : j.incident) {
    if (inc.road != road_id) continue;
    for (const Lane& l : r.lanes) {
      bool exits = (inc.end == RoadEnd::END && l.dir == LaneDir::BACKWARD) ||
                   (inc.end == RoadEnd::START && l.dir == LaneDir::FORWARD);
      if (exits) out.push_back(&l);
    }
  }
  return out;
}

const Lane* MapGraph::adjacent_lane(const Lane& lane, bool travel_right) const {
  const Road& r = road(lane.road);
  // lane array is left-to-right in the road frame; travel-right for BACKWARD
  // lanes is the road-frame left.
  int step = lane.dir == LaneDir::FORWARD ? (travel_right ? 1 : -1) : (travel_right ? -1 : 1);
  int n = lane.index + step;
  if (n < 0 || n >= static_cast<int>(r.lanes.size())) return nullptr;
  return &r.lanes[static_cast<std::size_t>(n)];
}

std::vector<const Connection*> MapGraph::connections_from(const Junction& j,
                                                          std::string_view in_lane) const {
  std::vector<const Connection*> out;
  for (const Connection& c : j.connections) {
    if (c.in_lane == in_lane) out.push_back(&c);
  }
  return out;
}

bool MapGraph::has_crosswalk(std::string_view junction, std::string_view road) const {
  for (const CrossWalk& c : crosswalks_) {
    if (c.junction == junction && c.road == road) return true;
  }
  return false;
}

std::vector<const CrossWalk*> MapGraph::crosswalks_at(std::string_view junction) const {
  std::vector<const CrossWalk*> out;
  for (const CrossWalk& c : crosswalks_) {
    if (c.junction == junction) out.push_back(&c);
  }
  return out;
}

std::vector<double> incident_road_headings(const MapGraph& map, const Junction& j) {
  if (j.incident.empty()) throw std::invalid_argument("junction has no incident roads");
  std::vector<double> out;
  out.reserve(j.incident.size());
  for (const IncidentRoad& inc : j.incident) {
    const Road& r = map.road(inc.road);
    const auto& pts = r.centerline.points();
    Vec2 d;
    if (inc.end == RoadEnd::START) {
      d = pts[1] - pts[0];
    } else {
      d = pts[pts.size() - 2] - pts[pts.size() - 1];
    }
    out.push_back(geom::rad_to_deg(std::atan2(d.y, d.x)));
  }
  return out;
}

namespace {

std::vector<double> cyclic_gaps(std::vector<double> headings) {
  for (double& h : headings) {
    h = std::fmod(h, 360.0);
    if (h < 0.0) h += 360.0;
  }
  std::sort(headings.begin(), headings.end());
  std::vector<double> gaps(headings.size());
  for (std::size_t i = 0; i + 1 < headings.size(); ++i) gaps[i] = headings[i + 1] - headings[i];
  gaps.back() = 360.0 - (headings.back() - headings.front());
  return gaps;
}

bool match_cyclic(const std::vector<double>& gaps, const std::vector<double>& tmpl, double tol,
                  std::vector<double>* matched) {
  if (gaps.size() != tmpl.size()) return false;
  std::size_t n = gaps.size();
  for (std::size_t rot = 0; rot < n; ++rot) {
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(gaps[(rot + i) % n] - tmpl[i]) > tol) {
        ok = false;
        break;
      }
    }
    if (ok) {
      matched->clear();
      for (std::size_t i = 0; i < n; ++i) matched->push_back(gaps[(rot + i) % n]);
      return true;
    }
  }
  return false;
}

}  // namespace

JunctionClass classify_junction(const MapGraph& map, const Junction& j, double tolerance_deg) {
  if (j.incident.size() < 3) {
    throw std::invalid_argument("classify_junction requires >=3 incident roads");
  }
  std::vector<double> gaps = cyclic_gaps(incident_road_headings(map, j));
  JunctionClass out;
  out.gaps = gaps;
  // templates grouped by arity; first match in listed order wins
  if (j.incident.size() == 3) {
    std::vector<double> matched;
    if (match_cyclic(gaps, {180.0, 90.0, 90.0}, tolerance_deg, &matched)) {
      return {JunctionType::T_SHAPED, matched};
    }
    if (match_cyclic(gaps, {120.0, 120.0, 120.0}, tolerance_deg, &matched)) {
      return {JunctionType::Y_SHAPED, matched};
    }
  } else if (j.incident.size() == 4) {
    std::vector<double> matched;
    if (match_cyclic(gaps, {90.0, 90.0, 90.0, 90.0}, tolerance_deg, &matched)) {
      return {JunctionType::FOUR_WAY, matched};
    }
  }
  return out;
}

std::map<std::string, TurnDirection> relative_direction(const MapGraph& map, const Junction& j,
                                                        std::string_view approach_road) {
  std::vector<double> headings = incident_road_headings(map, j);
  int approach = -1;
  for (std::size_t i = 0; i < j.incident.size(); ++i) {
    if (j.incident[i].road == approach_road) {
      approach = static_cast<int>(i);
      break;
    }
  }
  if (approach < 0) throw std::invalid_argument("approach road not incident to junction");

  double inward = headings[static_cast<std::size_t>(approach)] + 180.0;
  std::map<std::string, TurnDirection> out;
  for (std::size_t i = 0; i < j.incident.size(); ++i) {
    if (static_cast<int>(i) == approach) continue;
    double off = geom::normalize_deg(headings[i] - inward);
    TurnDirection d;
    if (std::abs(off) <= 45.0) {
      d = TurnDirection::STRAIGHT;
    } else if (off > 45.0 && off <= 135.0) {
      d = TurnDirection::LEFT;
    } else if (off >= -135.0 && off < -45.0) {
      d = TurnDirection::RIGHT;
    } else {
      d = TurnDirection::U_TURN;
    }
    out[j.incident[i].road] = d;
  }
  return out;
}

TurnDirection connection_label(const MapGraph& map, const Junction& j, const Connection& c) {
  const Lane& in = map.lane(c.in_lane);
  const Lane& out = map.lane(c.out_lane);
  if (in.road == out.road) return TurnDirection::U_TURN;
  return relative_direction(map, j, in.road).at(out.road);
}

geom::Polyline connection_curve(const Lane& in, const Lane& out) {
  return geom::hermite_path(in.center.pose_at(in.center.length()), out.center.pose_at(0.0), 48,
                            9.0);
}

std::vector<SubMap> find_submaps(const MapGraph& map, const SubMapQuery& query) {
  std::vector<SubMap> out;
  if (query.kind == SubMapQuery::Kind::JUNCTION) {
    for (const Junction& j : map.junctions()) {
      if (j.incident.size() < 3) continue;
      JunctionClass cls = classify_junction(map, j, query.classify_tolerance_deg);
      if (query.junction_type && cls.type != *query.junction_type) continue;
      SubMap sm;
      sm.id = j.id;
      sm.is_junction = true;
      sm.type = cls.type;
      sm.has_crosswalk = !map.crosswalks_at(j.id).empty();
      sm.signalized = j.signalized;
      if (query.require_crosswalk && !sm.has_crosswalk) continue;
      if (query.require_signal && !sm.signalized) continue;
      int max_par = 1;
      for (const IncidentRoad& inc : j.incident) {
        const Road& r = map.road(inc.road);
        int fwd = 0, bwd = 0;
        for (const Lane& l : r.lanes) (l.dir == LaneDir::FORWARD ? fwd : bwd)++;
        max_par = std::max({max_par, fwd, bwd});
        sm.directions[inc.road] = relative_direction(map, j, inc.road);
      }
      sm.max_parallel_lanes = max_par;
      if (sm.max_parallel_lanes < query.min_parallel_lanes) continue;
      out.push_back(std::move(sm));
    }
  } else {
    for (const Road& r : map.roads()) {
      if (geom::rad_to_deg(r.centerline.total_turn()) > query.max_straight_turn_deg) continue;
      if (r.length() < query.min_length) continue;
      SubMap sm;
      sm.id = r.id;
      sm.is_junction = false;
      int fwd = 0, bwd = 0;
      for (const Lane& l : r.lanes) (l.dir == LaneDir::FORWARD ? fwd : bwd)++;
      sm.max_parallel_lanes = std::max(fwd, bwd);
      if (sm.max_parallel_lanes < query.min_parallel_lanes) continue;
      if (query.require_crosswalk || query.require_signal) continue;
      out.push_back(std::move(sm));
    }
  }
  std::sort(out.begin(), out.end(), [](const SubMap& a, const SubMap& b) { return a.id < b.id; });
  return out;
}

}  // namespace scenforge::mapsem
