#include "scenforge/concretize.hpp"

#include <algorithm>
#include <cmath>

#include "scenforge/errors.hpp"
#include "json.hpp"

namespace scenforge::concretize {

using geom::Obb;
using mapsem::Junction;
using mapsem::Lane;
using mapsem::MapGraph;
using mapsem::Road;
using mapsem::SubMap;
using mapsem::SubMapQuery;
using mapsem::TurnDirection;
using ordered_json = nlohmann::ordered_json;

ParameterMap ParameterMap::parse(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("parameter map: ") + e.what());
  }
  ParameterMap pm;
  for (auto it = j.begin(); it != j.end(); ++it) {
    ElementMapping m;
    for (const auto& entry : it.value()) {
      if (entry.contains("count_range")) {
        m.count_range = {entry["count_range"].at(0).get<int>(), entry["count_range"].at(1).get<int>()};
        if (m.count_range->first > m.count_range->second) {
          throw ParseError("parameter map '" + it.key() + "': count_range lo > hi");
        }
      } else {
        ParamRange r;
        r.param = entry.at("param").get<std::string>();
        r.lo = entry.at("range").at(0).get<double>();
        r.hi = entry.at("range").at(1).get<double>();
        if (r.lo > r.hi) throw ParseError("parameter map '" + it.key() + "': range lo > hi");
        m.params.push_back(std::move(r));
      }
    }
    pm.map_[it.key()] = std::move(m);
  }
  return pm;
}

const ElementMapping* ParameterMap::find(std::string_view category, std::string_view element) const {
  std::string key = std::string(category) + "." + std::string(element);
  auto it = map_.find(key);
  return it == map_.end() ? nullptr : &it->second;
}

double sample_parameter(double lo, double hi, SamplePolicy policy, Rng& rng) {
  if (lo > hi) throw std::invalid_argument("sample_parameter: lo > hi");
  if (hi - lo < 1e-12) return lo;
  switch (policy) {
    case SamplePolicy::RANDOM:
      return rng.uniform(lo, hi);
    case SamplePolicy::MIDPOINT:
      return (lo + hi) / 2.0;
    case SamplePolicy::INTERIOR_RANDOM: {
      double m = 0.1 * (hi - lo);
      return rng.uniform(lo + m, hi - m);
    }
  }
  return lo;
}

namespace {

std::optional<mapsem::JunctionType> junction_type_for_element(const std::string& elem) {
  std::string e = elem;
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  if (e == "t-shaped" || e == "t-junction") return mapsem::JunctionType::T_SHAPED;
  if (e == "y-shaped" || e == "y-junction") return mapsem::JunctionType::Y_SHAPED;
  if (e == "four-way" || e == "4-way" || e == "intersection") return mapsem::JunctionType::FOUR_WAY;
  return std::nullopt;
}

std::optional<TurnDirection> turn_for_action(const std::string& action) {
  if (action == "left-turn") return TurnDirection::LEFT;
  if (action == "right-turn") return TurnDirection::RIGHT;
  if (action == "drive-straight") return TurnDirection::STRAIGHT;
  if (action == "u-turn") return TurnDirection::U_TURN;
  return std::nullopt;  // lane-change and friends have no junction label
}

struct EgoCandidate {
  const Lane* in_lane;
  const mapsem::Connection* conn;
};

// Approach lanes whose connection label matches the abstract action.
std::vector<EgoCandidate> ego_candidates(const MapGraph& map, const Junction& j,
                                         TurnDirection want) {
  std::vector<EgoCandidate> out;
  for (const auto& inc : j.incident) {
    for (const Lane* lane : map.entering_lanes(j, inc.road)) {
      for (const auto* conn : map.connections_from(j, lane->id)) {
        if (mapsem::connection_label(map, j, *conn) == want) out.push_back({lane, conn});
      }
    }
  }
  return out;
}

Obb vehicle_box(const geom::Pose& pose, double length, double width) {
  return Obb{pose.pos, pose.heading, length, width};
}

}  // namespace

ConcreteScenario instantiate(const catalog::AbstractScenario& abstract, const MapGraph& map,
                             const ParameterMap& pmap, std::uint64_t seed,
                             const InstantiateOptions& opts) {
  Rng rng(seed);
  ConcreteScenario s;
  s.seed = seed;
  char idbuf[32];
  std::snprintf(idbuf, sizeof idbuf, "scn-%016llx", static_cast<unsigned long long>(seed));
  s.id = idbuf;
  s.abstract_assignment = abstract.assignment;

  const std::string* road_elem = abstract.element_of(opts.road_category);
  const std::string* action_elem = abstract.element_of(opts.action_category);
  const std::string* ped_elem = abstract.element_of(opts.pedestrian_category);
  std::string road_kind = road_elem ? *road_elem : "straight";
  std::string action = action_elem ? *action_elem : "drive-straight";
  bool want_pedestrians = ped_elem && *ped_elem != "none";

  // Step 1: sub-map matching the abstract road structure.
  SubMapQuery query;
  bool straight_segment = road_kind == "straight";
  if (straight_segment) {
    query.kind = SubMapQuery::Kind::STRAIGHT_SEGMENT;
    query.min_length = 60.0;
    if (action == "lane-change") query.min_parallel_lanes = 2;
    if (want_pedestrians) {
      throw ScenarioUnrealizable("no crosswalk on straight segments for '" + abstract.to_json() + "'");
    }
  } else {
    query.kind = SubMapQuery::Kind::JUNCTION;
    auto jt = junction_type_for_element(road_kind);
    if (!jt) {
      throw ScenarioUnrealizable("no sub-map matches road structure '" + road_kind + "'");
    }
    query.junction_type = jt;
    query.require_crosswalk = want_pedestrians;
  }

  std::vector<SubMap> candidates = find_submaps(map, query);
  std::optional<TurnDirection> want_turn = turn_for_action(action);

  // keep only sub-maps where the action is executable
  std::vector<SubMap> usable;
  for (const SubMap& sm : candidates) {
    if (sm.is_junction) {
      if (!want_turn) continue;  // lane-change is a straight-segment action
      if (!ego_candidates(map, map.junction(sm.id), *want_turn).empty()) usable.push_back(sm);
    } else {
      if (action == "drive-straight") {
        usable.push_back(sm);
      } else if (action == "lane-change") {
        const Road& r = map.road(sm.id);
        for (const Lane& l : r.lanes) {
          const Lane* right = map.adjacent_lane(l, true);
          const Lane* left = map.adjacent_lane(l, false);
          if ((right && right->dir == l.dir) || (left && left->dir == l.dir)) {
            usable.push_back(sm);
            break;
          }
        }
      }
    }
  }
  if (usable.empty()) {
    throw ScenarioUnrealizable("no sub-map supports road '" + road_kind + "' with action '" + action + "'");
  }

  const SubMap chosen = rng.pick(usable);
  s.submap_id = chosen.id;
  s.submap_is_junction = chosen.is_junction;

  // Step 2: ego start and destination.
  s.ego.action = action;
  std::vector<const Road*> region_roads;
  if (chosen.is_junction) {
    const Junction& j = map.junction(chosen.id);
    auto cands = ego_candidates(map, j, *want_turn);
    std::size_t pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(cands.size()) - 1));
    const EgoCandidate& c = cands[pick];
    const Lane& out_lane = map.lane(c.conn->out_lane);
    double lin = c.in_lane->center.length();
    double lout = out_lane.center.length();
    s.ego.start_lane = c.in_lane->id;
    s.ego.start_offset = rng.uniform(0.15 * lin, 0.55 * lin);
    s.ego.dest_lane = out_lane.id;
    s.ego.dest_offset = rng.uniform(0.4 * lout, 0.8 * lout);
    s.ego.via_junction = j.id;
    s.ego.junction_in_lane = c.in_lane->id;
    s.ego.junction_out_lane = out_lane.id;
    for (const auto& inc : j.incident) region_roads.push_back(&map.road(inc.road));
  } else {
    const Road& r = map.road(chosen.id);
    region_roads.push_back(&r);
    std::vector<const Lane*> starts;
    for (const Lane& l : r.lanes) {
      if (action == "lane-change") {
        const Lane* right = map.adjacent_lane(l, true);
        const Lane* left = map.adjacent_lane(l, false);
        if ((right && right->dir == l.dir) || (left && left->dir == l.dir)) starts.push_back(&l);
      } else {
        starts.push_back(&l);
      }
    }
    const Lane* start = starts[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(starts.size()) - 1))];
    double len = start->center.length();
    s.ego.start_lane = start->id;
    s.ego.start_offset = rng.uniform(0.05 * len, 0.25 * len);
    if (action == "lane-change") {
      const Lane* right = map.adjacent_lane(*start, true);
      const Lane* target = (right && right->dir == start->dir) ? right : map.adjacent_lane(*start, false);
      s.ego.dest_lane = target->id;
    } else {
      s.ego.dest_lane = start->id;
    }
    s.ego.dest_offset = rng.uniform(0.7 * len, 0.95 * len);
  }
  {
    const Lane& start_lane = map.lane(s.ego.start_lane);
    s.ego.start_speed = rng.uniform(0.5 * start_lane.speed_limit, 0.8 * start_lane.speed_limit);
  }

  // Signal program for the signalized junction, if any.
  if (chosen.is_junction && map.junction(chosen.id).signalized) {
    const Junction& j = map.junction(chosen.id);
    std::vector<std::string> approaches;
    for (const auto& inc : j.incident) approaches.push_back(inc.road);
    std::sort(approaches.begin(), approaches.end());
    SignalProgram prog;
    prog.junction = j.id;
    for (const std::string& road : approaches) {
      SignalPhase phase;
      phase.green_roads = {road};
      phase.duration = std::round(rng.uniform(8.0, 12.0) * 10.0) / 10.0;
      prog.phases.push_back(std::move(phase));
    }
    s.signals.push_back(std::move(prog));
  }

  // Step 3: NPC count from the density element, then placement.
  int npc_count = 0;
  for (const auto& [cat_name, elem_name] : abstract.assignment) {
    if (cat_name == opts.pedestrian_category) continue;
    const ElementMapping* m = pmap.find(cat_name, elem_name);
    if (m && m->count_range) {
      auto [lo, hi] = *m->count_range;
      // keep off the boundary so the spawn budget stays perturbable
      npc_count = lo + 1 <= hi - 1 ? rng.uniform_int(lo + 1, hi - 1) : rng.uniform_int(lo, hi);
      s.density = DensityInfo{cat_name, elem_name, lo, hi};
      break;
    }
  }

  std::vector<const Lane*> npc_lanes;
  for (const Road* r : region_roads) {
    for (const Lane& l : r->lanes) npc_lanes.push_back(&l);
  }
  std::vector<Obb> placed;
  {
    const Lane& ego_lane = map.lane(s.ego.start_lane);
    placed.push_back(vehicle_box(ego_lane.center.pose_at(s.ego.start_offset), opts.vehicle_length,
                                 opts.vehicle_width));
  }
  for (int i = 0; i < npc_count; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < opts.placement_retries && !ok; ++attempt) {
      const Lane* lane = npc_lanes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(npc_lanes.size()) - 1))];
      double len = lane->center.length();
      double margin = opts.vehicle_length;
      if (len < 3.0 * margin) continue;
      double offset = rng.uniform(margin, len - margin);
      Obb box = vehicle_box(lane->center.pose_at(offset), opts.vehicle_length, opts.vehicle_width);
      bool clear = true;
      for (const Obb& other : placed) {
        if (geom::obb_distance(box, other) < opts.min_spawn_separation) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      NpcSpec npc;
      npc.id = "npc" + std::to_string(i);
      npc.start_lane = lane->id;
      npc.start_offset = offset;
      npc.target_speed = rng.uniform(0.5 * lane->speed_limit, 0.9 * lane->speed_limit);
      npc.route.push_back(lane->id);
      if (chosen.is_junction) {
        const Junction& j = map.junction(chosen.id);
        auto conns = map.connections_from(j, lane->id);
        if (!conns.empty()) {
          const auto* conn = conns[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(conns.size()) - 1))];
          npc.route.push_back(conn->out_lane);
        }
      }
      s.npcs.push_back(std::move(npc));
      placed.push_back(box);
      ok = true;
    }
    if (!ok) {
      throw PlacementExhausted("could not place NPC " + std::to_string(i) + " after " +
                               std::to_string(opts.placement_retries) + " retries");
    }
  }

  // Pedestrians on the junction's crosswalks.
  if (want_pedestrians && chosen.is_junction) {
    const ElementMapping* m = pmap.find(opts.pedestrian_category, *ped_elem);
    int ped_count = 1;
    if (m && m->count_range) {
      auto [lo, hi] = *m->count_range;
      ped_count = lo + 1 <= hi - 1 ? rng.uniform_int(lo + 1, hi - 1) : rng.uniform_int(lo, hi);
    }
    auto walks = map.crosswalks_at(chosen.id);
    for (int i = 0; i < ped_count && !walks.empty(); ++i) {
      const auto* cw = walks[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(walks.size()) - 1))];
      PedestrianSpec ped;
      ped.id = "ped" + std::to_string(i);
      ped.junction = cw->junction;
      ped.road = cw->road;
      ped.trigger_time = std::round(rng.uniform(2.0, 10.0) * 10.0) / 10.0;
      ped.from_left = rng.uniform() < 0.5;
      s.pedestrians.push_back(std::move(ped));
    }
  }

  // Environment parameters, sampled in abstract-assignment order.
  for (const auto& [cat_name, elem_name] : abstract.assignment) {
    const ElementMapping* m = pmap.find(cat_name, elem_name);
    if (!m) continue;
    for (const ParamRange& pr : m->params) {
      s.environment[pr.param] = sample_parameter(pr.lo, pr.hi, SamplePolicy::RANDOM, rng);
    }
  }

  return s;
}

int spawn_headroom(const ConcreteScenario& scenario, std::pair<int, int> density_range) {
  int count = static_cast<int>(scenario.npcs.size());
  if (count < density_range.first || count > density_range.second) {
    throw std::invalid_argument("NPC count outside its density range");
  }
  return density_range.second - count;
}

std::vector<std::string> ego_route_lanes(const ConcreteScenario& s) {
  std::vector<std::string> out;
  out.push_back(s.ego.start_lane);
  if (!s.ego.via_junction.empty()) {
    if (s.ego.junction_in_lane != s.ego.start_lane) out.push_back(s.ego.junction_in_lane);
    out.push_back(s.ego.junction_out_lane);
    if (s.ego.dest_lane != s.ego.junction_out_lane) out.push_back(s.ego.dest_lane);
  } else if (s.ego.dest_lane != s.ego.start_lane) {
    out.push_back(s.ego.dest_lane);
  }
  return out;
}

namespace {

std::string program_kind_name(BehaviorProgram::Kind k) {
  switch (k) {
    case BehaviorProgram::Kind::FOLLOW_LANE: return "follow-lane";
    case BehaviorProgram::Kind::FOLLOW_LANE_BRAKE: return "follow-lane-brake";
    case BehaviorProgram::Kind::STATIONARY: return "stationary";
  }
  return "follow-lane";
}

BehaviorProgram::Kind program_kind_from(const std::string& s) {
  if (s == "follow-lane") return BehaviorProgram::Kind::FOLLOW_LANE;
  if (s == "follow-lane-brake") return BehaviorProgram::Kind::FOLLOW_LANE_BRAKE;
  if (s == "stationary") return BehaviorProgram::Kind::STATIONARY;
  throw ParseError("unknown behavior program '" + s + "'");
}

}  // namespace

std::string ConcreteScenario::to_json() const {
  ordered_json j;
  j["id"] = id;
  j["map"] = map_ref;
  j["submap"] = {{"id", submap_id}, {"junction", submap_is_junction}};
  ordered_json ja = ordered_json::object();
  for (const auto& [c, e] : abstract_assignment) ja[c] = e;
  j["abstract"] = std::move(ja);
  j["ego"] = {{"start_lane", ego.start_lane},       {"start_offset", ego.start_offset},
              {"dest_lane", ego.dest_lane},         {"dest_offset", ego.dest_offset},
              {"via_junction", ego.via_junction},   {"junction_in_lane", ego.junction_in_lane},
              {"junction_out_lane", ego.junction_out_lane},
              {"action", ego.action},               {"start_speed", ego.start_speed}};
  j["npcs"] = ordered_json::array();
  for (const NpcSpec& n : npcs) {
    ordered_json jn;
    jn["id"] = n.id;
    jn["start_lane"] = n.start_lane;
    jn["start_offset"] = n.start_offset;
    jn["target_speed"] = n.target_speed;
    jn["program"] = {{"kind", program_kind_name(n.program.kind)},
                     {"trigger_position", n.program.trigger_position},
                     {"trigger_time", n.program.trigger_time},
                     {"decel", n.program.decel},
                     {"avoid", n.program.avoid_forward_collision}};
    jn["route"] = n.route;
    j["npcs"].push_back(std::move(jn));
  }
  j["pedestrians"] = ordered_json::array();
  for (const PedestrianSpec& p : pedestrians) {
    j["pedestrians"].push_back({{"id", p.id},
                                {"junction", p.junction},
                                {"road", p.road},
                                {"trigger_time", p.trigger_time},
                                {"from_left", p.from_left}});
  }
  j["environment"] = ordered_json::object();
  for (const auto& [k, v] : environment) j["environment"][k] = v;
  j["signals"] = ordered_json::array();
  for (const SignalProgram& sp : signals) {
    ordered_json jp;
    jp["junction"] = sp.junction;
    jp["phases"] = ordered_json::array();
    for (const SignalPhase& ph : sp.phases) {
      jp["phases"].push_back({{"green_roads", ph.green_roads}, {"duration", ph.duration}});
    }
    j["signals"].push_back(std::move(jp));
  }
  if (density) {
    j["density"] = {{"category", density->category},
                    {"element", density->element},
                    {"range", {density->nmin, density->nmax}}};
  }
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

ConcreteScenario ConcreteScenario::from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }
  ConcreteScenario s;
  s.id = j.value("id", "");
  s.map_ref = j.value("map", "");
  if (j.contains("submap")) {
    s.submap_id = j["submap"].value("id", "");
    s.submap_is_junction = j["submap"].value("junction", false);
  }
  if (j.contains("abstract")) {
    for (auto it = j["abstract"].begin(); it != j["abstract"].end(); ++it) {
      s.abstract_assignment.emplace_back(it.key(), it.value().get<std::string>());
    }
  }
  const auto& je = j.at("ego");
  s.ego.start_lane = je.at("start_lane").get<std::string>();
  s.ego.start_offset = je.at("start_offset").get<double>();
  s.ego.dest_lane = je.at("dest_lane").get<std::string>();
  s.ego.dest_offset = je.at("dest_offset").get<double>();
  s.ego.via_junction = je.value("via_junction", "");
  s.ego.junction_in_lane = je.value("junction_in_lane", "");
  s.ego.junction_out_lane = je.value("junction_out_lane", "");
  s.ego.action = je.value("action", "drive-straight");
  s.ego.start_speed = je.value("start_speed", 0.0);
  for (const auto& jn : j.value("npcs", ordered_json::array())) {
    NpcSpec n;
    n.id = jn.at("id").get<std::string>();
    n.start_lane = jn.at("start_lane").get<std::string>();
    n.start_offset = jn.at("start_offset").get<double>();
    n.target_speed = jn.at("target_speed").get<double>();
    if (jn.contains("program")) {
      n.program.kind = program_kind_from(jn["program"].value("kind", "follow-lane"));
      n.program.trigger_position = jn["program"].value("trigger_position", -1.0);
      n.program.trigger_time = jn["program"].value("trigger_time", -1.0);
      n.program.decel = jn["program"].value("decel", 4.0);
      n.program.avoid_forward_collision = jn["program"].value("avoid", true);
    }
    for (const auto& r : jn.value("route", ordered_json::array())) n.route.push_back(r.get<std::string>());
    s.npcs.push_back(std::move(n));
  }
  for (const auto& jp : j.value("pedestrians", ordered_json::array())) {
    PedestrianSpec p;
    p.id = jp.at("id").get<std::string>();
    p.junction = jp.at("junction").get<std::string>();
    p.road = jp.at("road").get<std::string>();
    p.trigger_time = jp.value("trigger_time", 0.0);
    p.from_left = jp.value("from_left", false);
    s.pedestrians.push_back(std::move(p));
  }
  if (j.contains("environment")) {
    for (auto it = j["environment"].begin(); it != j["environment"].end(); ++it) {
      s.environment[it.key()] = it.value().get<double>();
    }
  }
  for (const auto& jp : j.value("signals", ordered_json::array())) {
    SignalProgram sp;
    sp.junction = jp.at("junction").get<std::string>();
    for (const auto& ph : jp.value("phases", ordered_json::array())) {
      SignalPhase phase;
      for (const auto& g : ph.at("green_roads")) phase.green_roads.push_back(g.get<std::string>());
      phase.duration = ph.at("duration").get<double>();
      sp.phases.push_back(std::move(phase));
    }
    s.signals.push_back(std::move(sp));
  }
  if (j.contains("density")) {
    DensityInfo d;
    d.category = j["density"].at("category").get<std::string>();
    d.element = j["density"].at("element").get<std::string>();
    d.nmin = j["density"].at("range").at(0).get<int>();
    d.nmax = j["density"].at("range").at(1).get<int>();
    s.density = d;
  }
  s.seed = j.value("seed", 0ULL);
  return s;
}

}  // namespace scenforge::concretize
