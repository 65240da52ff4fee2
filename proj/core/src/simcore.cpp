#include "scenforge/simcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "scenforge/errors.hpp"

namespace scenforge::sim {

using concretize::BehaviorProgram;
using concretize::ConcreteScenario;
using geom::Polyline;
using geom::Pose;
using geom::Vec2;
using mapsem::Lane;
using mapsem::LaneDir;
using mapsem::MapGraph;
using mapsem::Road;

std::string to_string(SignalColor c) { return c == SignalColor::RED ? "red" : "green"; }

std::string to_string(Termination t) {
  switch (t) {
    case Termination::BUDGET: return "budget";
    case Termination::DESTINATION_REACHED: return "destination-reached";
    case Termination::COLLISION: return "collision";
    case Termination::CONTROLLER_ERROR: return "controller-error";
  }
  return "budget";
}

namespace {

Termination termination_from(const std::string& s) {
  if (s == "budget") return Termination::BUDGET;
  if (s == "destination-reached") return Termination::DESTINATION_REACHED;
  if (s == "collision") return Termination::COLLISION;
  if (s == "controller-error") return Termination::CONTROLLER_ERROR;
  throw ParseError("trace: unknown termination '" + s + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Sub-polyline between arc lengths s0 < s1.
Polyline slice(const Polyline& p, double s0, double s1) {
  s0 = std::clamp(s0, 0.0, p.length());
  s1 = std::clamp(s1, s0, p.length());
  std::vector<Vec2> pts;
  pts.push_back(p.point_at(s0));
  double cum = 0.0;
  const auto& src = p.points();
  for (std::size_t i = 1; i < src.size(); ++i) {
    cum += (src[i] - src[i - 1]).norm();
    if (cum > s0 + 1e-9 && cum < s1 - 1e-9) pts.push_back(src[i]);
  }
  pts.push_back(p.point_at(s1));
  return Polyline(std::move(pts));
}

struct LaneHit {
  const Lane* lane = nullptr;
  double offset = 0.0;
  double score = 1e18;
};

LaneHit annotate(const MapGraph& map, const Vec2& pos) {
  LaneHit best;
  for (const Road& r : map.roads()) {
    auto proj = r.centerline.project(pos);
    if (proj.s < -0.5 || proj.s > r.length() + 0.5) continue;
    if (proj.dist > r.total_width() / 2.0 + 1.0) continue;
    for (std::size_t i = 0; i < r.lanes.size(); ++i) {
      auto [lo, hi] = r.lane_interval(static_cast<int>(i));
      if (proj.lateral < lo - 1e-9 || proj.lateral > hi + 1e-9) continue;
      const Lane& l = r.lanes[i];
      double mid = l.offset_from_centerline;
      double score = std::abs(proj.lateral - mid);
      if (score < best.score) {
        best.lane = &l;
        best.score = score;
        best.offset = l.dir == LaneDir::FORWARD ? proj.s : r.length() - proj.s;
      }
    }
  }
  return best;
}

struct CrosswalkLine {
  Vec2 left, right;  // road-frame left/right endpoints
};

CrosswalkLine crosswalk_line(const MapGraph& map, std::string_view junction, std::string_view road) {
  const Road& r = map.road(road);
  const mapsem::Junction& j = map.junction(junction);
  mapsem::RoadEnd end = mapsem::RoadEnd::END;
  for (const auto& inc : j.incident) {
    if (inc.road == road) end = inc.end;
  }
  double setback = 2.0;
  double s = end == mapsem::RoadEnd::END ? r.length() - setback : setback;
  Vec2 c = r.centerline.point_at(s);
  double h = r.centerline.heading_at(s);
  Vec2 n = Vec2{std::cos(h), std::sin(h)}.perp();
  double half = r.total_width() / 2.0 + 0.7;
  return {c + n * half, c - n * half};
}

struct VehicleRt {
  AgentState st;
  Polyline path;
  double path_s = 0.0;
  double wheelbase = 2.8;
  // npc program state
  const concretize::NpcSpec* spec = nullptr;
  bool brake_latched = false;
};

struct PedestrianRt {
  AgentState st;
  Vec2 from, to;
  double trigger = 0.0;
  bool walking = false;
  bool done = false;
};

double plant_step(VehicleRt& v, double accel_cmd, double dt, const SimOptions& opts) {
  double a = std::clamp(accel_cmd, -opts.decel_limit, opts.accel_limit);
  double new_speed = v.st.speed + a * dt;
  if (new_speed < 0.0) {
    new_speed = 0.0;
    a = -v.st.speed / dt;
  }
  v.st.speed = new_speed;
  auto proj = v.path.project_near(v.st.pos, v.path_s - 5.0, v.path_s + 30.0);
  v.path_s = proj.s;
  if (v.st.speed > 1e-9) {
    double path_h = v.path.heading_smooth_at(proj.s);
    double h_err = geom::normalize_angle(path_h - v.st.heading);
    double desired;  // heading change this step
    if (std::abs(h_err) < 0.35) {
      // aligned tracking: curvature feedforward plus first-order lateral
      // convergence; no ringing, exactly zero steering once centered. The
      // 0.33 feedback response smears curvature kinks instead of stepping
      // through them.
      double s_ahead = std::min(proj.s + 1.0, v.path.length());
      double kappa = s_ahead > proj.s
                         ? geom::normalize_angle(v.path.heading_smooth_at(s_ahead) - path_h) /
                               (s_ahead - proj.s)
                         : 0.0;
      double ff = v.st.speed * kappa * dt;
      double corr = std::clamp(-0.7 * proj.lateral / std::max(v.st.speed, 2.0), -0.25, 0.25);
      desired = ff + 0.33 * geom::normalize_angle(path_h + corr - v.st.heading);
    } else {
      double lookahead = std::clamp(1.5 + 0.6 * v.st.speed, 2.5, 12.0);
      Vec2 target = v.path.point_at(std::min(proj.s + lookahead, v.path.length()));
      Vec2 to_target = target - v.st.pos;
      double alpha = to_target.norm() > 0.2
                         ? geom::normalize_angle(std::atan2(to_target.y, to_target.x) - v.st.heading)
                         : 0.0;
      double delta_pp = std::atan2(2.0 * v.wheelbase * std::sin(alpha), lookahead);
      desired = v.st.speed / v.wheelbase * std::tan(delta_pp) * dt;
    }
    double delta = std::clamp(std::atan(desired * v.wheelbase / std::max(v.st.speed * dt, 1e-6)),
                              -opts.max_steer, opts.max_steer);
    v.st.heading = geom::normalize_angle(v.st.heading + v.st.speed / v.wheelbase * std::tan(delta) * dt);
    v.st.pos = v.st.pos + Vec2{std::cos(v.st.heading), std::sin(v.st.heading)} * (v.st.speed * dt);
    v.path_s = v.path.project_near(v.st.pos, v.path_s - 5.0, v.path_s + 30.0).s;
  }
  v.st.accel = a;
  return a;
}

struct NpcLead {
  bool present = false;
  double gap = 1e9;
  double speed = 0.0;
};

double npc_accel(const VehicleRt& v, double t, const NpcLead& lead) {
  const auto& prog = v.spec->program;
  double d_end = v.path.length() - v.path_s;
  auto stop_within = [&](double dist) { return -(v.st.speed * v.st.speed) / (2.0 * std::max(dist, 0.05)); };
  switch (prog.kind) {
    case BehaviorProgram::Kind::STATIONARY:
      return v.st.speed > 0.0 ? -8.0 : 0.0;
    case BehaviorProgram::Kind::FOLLOW_LANE_BRAKE: {
      bool trig = (prog.trigger_position >= 0.0 && v.path_s >= prog.trigger_position) ||
                  (prog.trigger_time >= 0.0 && t >= prog.trigger_time);
      if (trig || d_end < 2.0) return -prog.decel;
      [[fallthrough]];
    }
    case BehaviorProgram::Kind::FOLLOW_LANE: {
      double a = 1.2 * (v.spec->target_speed - v.st.speed);
      a = std::clamp(a, -4.0, 2.5);
      double d = d_end - 1.5;
      if (d < 1.0 || stop_within(d) < -3.0) a = std::min(a, stop_within(d));
      if (prog.avoid_forward_collision && lead.present) {
        double desired = 2.5 + 1.2 * v.st.speed;
        a = std::min(a, 0.35 * (lead.gap - desired) + 1.2 * (lead.speed - v.st.speed));
      }
      return a;
    }
  }
  return 0.0;
}

}  // namespace

SignalColor signal_color_at(const concretize::SignalProgram& program, std::string_view road,
                            double t) {
  double cycle = 0.0;
  for (const auto& ph : program.phases) cycle += ph.duration;
  if (cycle <= 0.0) return SignalColor::GREEN;
  double tc = std::fmod(t, cycle);
  for (const auto& ph : program.phases) {
    if (tc < ph.duration) {
      for (const auto& g : ph.green_roads) {
        if (g == road) return SignalColor::GREEN;
      }
      return SignalColor::RED;
    }
    tc -= ph.duration;
  }
  return SignalColor::RED;
}

Polyline build_route_path(const MapGraph& map, const ConcreteScenario& s) {
  const Lane& start = map.lane(s.ego.start_lane);
  if (!s.ego.via_junction.empty()) {
    const Lane& in = map.lane(s.ego.junction_in_lane);
    const Lane& out = map.lane(s.ego.junction_out_lane);
    Polyline p = slice(in.center, in.id == start.id ? s.ego.start_offset : 0.0, in.center.length());
    p.append(mapsem::connection_curve(in, out));
    p.append(slice(out.center, 0.0, s.ego.dest_offset));
    return p;
  }
  const Lane& dest = map.lane(s.ego.dest_lane);
  if (dest.id == start.id) return slice(start.center, s.ego.start_offset, s.ego.dest_offset);
  double s0 = dest.center.project(start.center.point_at(s.ego.start_offset)).s;
  return slice(dest.center, s0, s.ego.dest_offset);
}

const AgentState* TimedTrace::agent_in(std::size_t frame, std::string_view id) const {
  if (frame >= frames.size()) return nullptr;
  for (const AgentState& a : frames[frame].agents) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

void TimedTrace::serialize(std::ostream& os) const {
  os << "scenforge-trace v1\n";
  os << "scenario " << scenario_id << "\n";
  os << "dt " << fmt(dt) << "\n";
  for (const Frame& f : frames) {
    for (const AgentState& a : f.agents) {
      os << "a " << fmt(f.t) << ' ' << a.id << ' ' << fmt(a.pos.x) << ' ' << fmt(a.pos.y) << ' '
         << fmt(a.heading) << ' ' << fmt(a.speed) << ' ' << fmt(a.accel) << ' '
         << (a.lane.empty() ? "-" : a.lane) << ' ' << fmt(a.lane_offset) << ' ' << fmt(a.length)
         << ' ' << fmt(a.width) << "\n";
    }
    for (const SignalState& sg : f.signals) {
      os << "s " << fmt(f.t) << ' ' << sg.junction << ' ' << sg.road << ' ' << to_string(sg.color)
         << "\n";
    }
  }
  double t_end = frames.empty() ? 0.0 : frames.back().t;
  os << "end " << to_string(termination) << ' ' << fmt(t_end) << "\n";
}

std::string TimedTrace::serialize() const {
  std::ostringstream os;
  serialize(os);
  return os.str();
}

TimedTrace TimedTrace::parse(std::string_view text) {
  TimedTrace tr;
  std::istringstream is{std::string(text)};
  std::string line;
  if (!std::getline(is, line) || line.rfind("scenforge-trace", 0) != 0) {
    throw ParseError("trace: missing header");
  }
  Frame* cur = nullptr;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "scenario") {
      ls >> tr.scenario_id;
    } else if (tag == "dt") {
      ls >> tr.dt;
    } else if (tag == "a") {
      double t;
      AgentState a;
      ls >> t >> a.id >> a.pos.x >> a.pos.y >> a.heading >> a.speed >> a.accel >> a.lane >>
          a.lane_offset >> a.length >> a.width;
      if (!ls) throw ParseError("trace: bad agent record", lineno, 1);
      if (a.lane == "-") a.lane.clear();
      if (!cur || std::abs(cur->t - t) > 1e-9) {
        tr.frames.push_back(Frame{t, {}, {}});
        cur = &tr.frames.back();
      }
      cur->agents.push_back(std::move(a));
    } else if (tag == "s") {
      double t;
      SignalState sg;
      std::string color;
      ls >> t >> sg.junction >> sg.road >> color;
      if (!ls) throw ParseError("trace: bad signal record", lineno, 1);
      sg.color = color == "red" ? SignalColor::RED : SignalColor::GREEN;
      if (!cur || std::abs(cur->t - t) > 1e-9) {
        tr.frames.push_back(Frame{t, {}, {}});
        cur = &tr.frames.back();
      }
      cur->signals.push_back(std::move(sg));
    } else if (tag == "end") {
      std::string reason;
      ls >> reason;
      tr.termination = termination_from(reason);
    } else {
      throw ParseError("trace: unknown record '" + tag + "'", lineno, 1);
    }
  }
  return tr;
}

namespace {

// Ego path bookkeeping: the tracked lane, the stitched reference path and
// where (in path arc length) the junction connection begins.
struct EgoPath {
  const MapGraph* map = nullptr;
  const ConcreteScenario* scn = nullptr;
  std::string target_lane;
  Polyline path;
  double junction_entry_s = 1e18;

  void rebuild(const Pose& from, double from_speed, bool initial) {
    const Lane& tl = map->lane(target_lane);
    Polyline p;
    double lane_join_s;
    if (initial) {
      lane_join_s = scn->ego.start_offset;
      p = Polyline(std::vector<Vec2>{from.pos});
    } else {
      auto proj = tl.center.project(from.pos);
      // ~3 s worth of blend keeps the lateral jerk of a lane change gentle
      double blend = std::clamp(3.0 * from_speed, 15.0, 40.0);
      lane_join_s = std::min(proj.s + blend, tl.center.length());
      p = geom::hermite_path(from, tl.center.pose_at(lane_join_s));
    }
    bool to_junction = !scn->ego.via_junction.empty() && target_lane == scn->ego.junction_in_lane;
    if (to_junction) {
      p.append(slice(tl.center, lane_join_s, tl.center.length()));
      double entry = p.length();
      const Lane& out = map->lane(scn->ego.junction_out_lane);
      p.append(mapsem::connection_curve(tl, out));
      p.append(slice(out.center, 0.0, std::min(scn->ego.dest_offset + 8.0, out.center.length())));
      junction_entry_s = entry;
    } else if (scn->ego.via_junction.empty() && target_lane == scn->ego.dest_lane) {
      p.append(slice(tl.center, lane_join_s, std::min(scn->ego.dest_offset + 8.0, tl.center.length())));
      junction_entry_s = 1e18;
    } else {
      p.append(slice(tl.center, lane_join_s, tl.center.length()));
      junction_entry_s = 1e18;
    }
    path = std::move(p);
  }
};

struct World {
  const MapGraph& map;
  const ConcreteScenario& scn;
  SimOptions opts;
  VehicleRt ego;
  std::vector<VehicleRt> npcs;
  std::vector<PedestrianRt> peds;
  EgoPath ego_path;
  Vec2 dest_point;

  explicit World(const MapGraph& m, const ConcreteScenario& s, const SimOptions& o)
      : map(m), scn(s), opts(o) {
    const Lane& sl = map.lane(s.ego.start_lane);
    Pose p0 = sl.center.pose_at(s.ego.start_offset);
    ego.st = AgentState{"ego", p0.pos, p0.heading, s.ego.start_speed, 0.0, 4.6, 1.9, "", 0.0};
    ego_path.map = &map;
    ego_path.scn = &s;
    ego_path.target_lane = s.ego.start_lane;
    ego_path.rebuild(p0, s.ego.start_speed, true);
    ego.path = ego_path.path;

    const Lane& dl = map.lane(s.ego.dest_lane);
    dest_point = dl.center.point_at(s.ego.dest_offset);

    for (const auto& spec : s.npcs) {
      VehicleRt v;
      const Lane& l = map.lane(spec.start_lane);
      Pose p = l.center.pose_at(spec.start_offset);
      v.st = AgentState{spec.id, p.pos, p.heading,
                        spec.program.kind == BehaviorProgram::Kind::FOLLOW_LANE ? spec.target_speed : 0.0,
                        0.0, 4.6, 1.9, "", 0.0};
      if (spec.program.kind == BehaviorProgram::Kind::FOLLOW_LANE_BRAKE) v.st.speed = spec.target_speed;
      Polyline path = slice(l.center, spec.start_offset, l.center.length());
      const Lane* prev = &l;
      for (std::size_t i = 1; i < spec.route.size(); ++i) {
        const Lane& next = map.lane(spec.route[i]);
        path.append(mapsem::connection_curve(*prev, next));
        path.append(slice(next.center, 0.0, next.center.length()));
        prev = &next;
      }
      v.path = std::move(path);
      v.spec = &spec;
      npcs.push_back(std::move(v));
    }

    for (const auto& spec : s.pedestrians) {
      PedestrianRt ped;
      CrosswalkLine line = crosswalk_line(map, spec.junction, spec.road);
      ped.from = spec.from_left ? line.left : line.right;
      ped.to = spec.from_left ? line.right : line.left;
      ped.trigger = spec.trigger_time;
      Vec2 d = ped.to - ped.from;
      ped.st = AgentState{spec.id, ped.from, std::atan2(d.y, d.x), 0.0, 0.0, 0.6, 0.6, "", 0.0};
      peds.push_back(std::move(ped));
    }
  }

  void annotate_all() {
    auto tag = [&](AgentState& st) {
      LaneHit hit = annotate(map, st.pos);
      if (hit.lane) {
        st.lane = hit.lane->id;
        st.lane_offset = hit.offset;
      } else {
        st.lane.clear();
        st.lane_offset = 0.0;
      }
    };
    tag(ego.st);
    for (auto& v : npcs) tag(v.st);
    for (auto& p : peds) tag(p.st);
  }

  Frame record(double t) const {
    Frame f;
    f.t = t;
    f.agents.push_back(ego.st);
    for (const auto& v : npcs) f.agents.push_back(v.st);
    for (const auto& p : peds) f.agents.push_back(p.st);
    for (const auto& prog : scn.signals) {
      const mapsem::Junction& j = map.junction(prog.junction);
      std::vector<std::string> roads;
      for (const auto& inc : j.incident) roads.push_back(inc.road);
      std::sort(roads.begin(), roads.end());
      roads.erase(std::unique(roads.begin(), roads.end()), roads.end());
      for (const auto& r : roads) {
        f.signals.push_back({prog.junction, r, signal_color_at(prog, r, t)});
      }
    }
    return f;
  }

  Observation observe(double t) const {
    Observation o;
    o.t = t;
    o.dt = opts.dt;
    o.self = ego.st;
    for (const auto& v : npcs) o.others.push_back(v.st);
    for (const auto& p : peds) o.others.push_back(p.st);
    const Lane& tl = map.lane(ego_path.target_lane);
    o.speed_limit = tl.speed_limit;
    double s_ego = ego.path_s;
    o.dist_to_path_end = ego.path.length() - s_ego;
    o.dist_to_destination = (dest_point - ego.st.pos).norm();

    // comfortable speed given the curvature ahead, with braking headroom
    {
      const double a_lat = 2.5, a_brk = 1.5, step = 2.5;
      double allowed = 1e9;
      double h_prev = ego.path.heading_smooth_at(s_ego);
      for (int k = 1; k <= 30; ++k) {
        double s = s_ego + k * step;
        if (s >= ego.path.length()) break;
        double h = ego.path.heading_smooth_at(s);
        double kappa = std::abs(geom::normalize_angle(h - h_prev)) / step;
        h_prev = h;
        if (kappa < 1e-6) continue;
        double v_curve = std::max(std::sqrt(a_lat / kappa), 2.0);
        double d = (k - 1) * step;
        double braked = std::sqrt(v_curve * v_curve + 2.0 * a_brk * d);
        if (braked < allowed) {
          allowed = braked;
          o.curve_speed_target = v_curve;
          o.curve_dist = d;
        }
      }
      o.curve_speed_limit = allowed;
    }

    if (!scn.ego.via_junction.empty()) {
      if (ego_path.junction_entry_s < 1e17) {
        o.dist_to_junction = ego_path.junction_entry_s - s_ego;
      } else {
        o.dist_to_junction = o.dist_to_path_end;  // wrong lane: road ends at the junction
      }
      if (o.dist_to_junction > 0.0) {
        for (const auto& prog : scn.signals) {
          if (prog.junction != scn.ego.via_junction) continue;
          o.signal.present = true;
          o.signal.color = signal_color_at(prog, tl.road, t);
          o.signal.dist_to_stopline = o.dist_to_junction;
        }
      }
    }

    for (const AgentState& a : o.others) {
      auto proj = ego.path.project(a.pos);
      double ds = proj.s - s_ego;
      if (ds <= 0.0 || ds > 80.0 || proj.dist > 1.7) continue;
      double gap = ds - (ego.st.length + a.length) / 2.0;
      if (!o.lead.present || gap < o.lead.gap) {
        o.lead.present = true;
        o.lead.gap = gap;
        // crossing agents close the gap at their own pace; expose the along-
        // path speed component so following control reacts to what matters
        double along = a.speed * std::cos(a.heading - ego.path.heading_at(proj.s));
        o.lead.speed = std::max(along, 0.0);
      }
    }

    const Lane* required = nullptr;
    if (!scn.ego.via_junction.empty() && ego_path.target_lane != scn.ego.junction_in_lane) {
      const Lane& need = map.lane(scn.ego.junction_in_lane);
      if (need.road == tl.road) required = &need;
    } else if (scn.ego.via_junction.empty() && ego_path.target_lane != scn.ego.dest_lane) {
      const Lane& need = map.lane(scn.ego.dest_lane);
      if (need.road == tl.road) required = &need;
    }
    if (required) {
      bool road_right = required->index > tl.index;
      bool travel_right = tl.dir == LaneDir::FORWARD ? road_right : !road_right;
      o.lane_change_needed = travel_right ? 1 : -1;
      if (!scn.ego.via_junction.empty()) {
        const mapsem::Junction& j = map.junction(scn.ego.via_junction);
        mapsem::TurnDirection lbl = mapsem::connection_label(
            map, j, mapsem::Connection{scn.ego.junction_in_lane, scn.ego.junction_out_lane});
        o.lane_change_reason = lbl == mapsem::TurnDirection::RIGHT
                                   ? LaneChangeReason::TURN_RIGHT_APPROACH
                                   : LaneChangeReason::TURN_OTHER_APPROACH;
      } else {
        o.lane_change_reason = LaneChangeReason::ROUTE_TARGET;
      }
    }

    for (bool right : {false, true}) {
      AdjacentView& side = right ? o.right : o.left;
      const Lane* adj = map.adjacent_lane(tl, right);
      if (!adj) continue;
      side.exists = true;
      side.same_dir = adj->dir == tl.dir;
      side.gap_ok = true;
      double s_self = adj->center.project(ego.st.pos).s;
      for (const AgentState& a : o.others) {
        auto proj = adj->center.project(a.pos);
        if (proj.dist > 1.6) continue;
        double ds = proj.s - s_self;
        if (ds > -10.0 && ds < 8.0) {
          side.gap_ok = false;
          break;
        }
      }
    }

    o.environment = &scn.environment;
    return o;
  }

  NpcLead npc_lead(const VehicleRt& self) const {
    NpcLead lead;
    double s_self = self.path_s;
    auto consider = [&](const AgentState& a) {
      if (a.id == self.st.id) return;
      auto proj = self.path.project(a.pos);
      double ds = proj.s - s_self;
      if (ds <= 0.0 || ds > 60.0 || proj.dist > 1.7) return;
      double gap = ds - (self.st.length + a.length) / 2.0;
      if (!lead.present || gap < lead.gap) {
        lead.present = true;
        lead.gap = gap;
        double along = a.speed * std::cos(a.heading - self.path.heading_at(proj.s));
        lead.speed = std::max(along, 0.0);
      }
    };
    consider(ego.st);
    for (const auto& v : npcs) consider(v.st);
    for (const auto& p : peds) consider(p.st);
    return lead;
  }

  bool ego_settled() const {
    const Lane& tl = map.lane(ego_path.target_lane);
    return tl.center.project(ego.st.pos).dist < 0.8;
  }

  void apply_intent(Control::Intent intent) {
    if (intent == Control::Intent::NONE) return;
    if (!ego_settled()) return;
    const Lane& tl = map.lane(ego_path.target_lane);
    const Lane* adj = map.adjacent_lane(tl, intent == Control::Intent::CHANGE_RIGHT);
    if (!adj) return;
    ego_path.target_lane = adj->id;
    ego_path.rebuild(Pose{ego.st.pos, ego.st.heading}, ego.st.speed, false);
    ego.path = ego_path.path;
    ego.path_s = 0.0;  // the new path starts at the current pose
  }

  bool ego_collision() const {
    geom::Obb eb = ego.st.box();
    for (const auto& v : npcs) {
      if (geom::obb_overlap(eb, v.st.box())) return true;
    }
    for (const auto& p : peds) {
      if (geom::obb_overlap(eb, p.st.box())) return true;
    }
    return false;
  }
};

}  // namespace

TimedTrace run(const ConcreteScenario& scenario, const MapGraph& map, EgoController& controller,
               double budget_s, const SimOptions& opts) {
  TimedTrace trace;
  trace.dt = opts.dt;
  trace.scenario_id = scenario.id;

  World w(map, scenario, opts);
  try {
    controller.reset(scenario, map);
  } catch (const std::exception&) {
    w.annotate_all();
    trace.frames.push_back(w.record(0.0));
    trace.termination = Termination::CONTROLLER_ERROR;
    return trace;
  }

  w.annotate_all();
  trace.frames.push_back(w.record(0.0));
  if (w.ego_collision()) {
    trace.termination = Termination::COLLISION;
    return trace;
  }

  int steps = static_cast<int>(std::llround(budget_s / opts.dt));
  trace.termination = Termination::BUDGET;
  for (int k = 1; k <= steps; ++k) {
    double t_prev = (k - 1) * opts.dt;
    double t = k * opts.dt;

    Control ctl;
    try {
      ctl = controller.step(w.observe(t_prev));
    } catch (const std::exception&) {
      trace.termination = Termination::CONTROLLER_ERROR;
      break;
    }
    w.apply_intent(ctl.intent);
    plant_step(w.ego, ctl.accel, opts.dt, opts);

    for (auto& v : w.npcs) {
      if (v.spec->program.kind == BehaviorProgram::Kind::FOLLOW_LANE_BRAKE) {
        bool trig = (v.spec->program.trigger_position >= 0.0 && v.path_s >= v.spec->program.trigger_position) ||
                    (v.spec->program.trigger_time >= 0.0 && t_prev >= v.spec->program.trigger_time);
        if (trig) v.brake_latched = true;
      }
      double a = v.brake_latched ? -v.spec->program.decel : npc_accel(v, t_prev, w.npc_lead(v));
      plant_step(v, a, opts.dt, opts);
    }

    for (auto& p : w.peds) {
      if (!p.walking && !p.done && t_prev >= p.trigger) p.walking = true;
      if (p.walking) {
        Vec2 d = p.to - p.st.pos;
        double dist = d.norm();
        double step_len = 1.4 * opts.dt;
        if (dist <= step_len) {
          p.st.pos = p.to;
          p.st.speed = 0.0;
          p.walking = false;
          p.done = true;
        } else {
          p.st.pos = p.st.pos + d.normalized() * step_len;
          p.st.speed = 1.4;
        }
      }
    }

    w.annotate_all();
    trace.frames.push_back(w.record(t));

    if (w.ego_collision()) {
      trace.termination = Termination::COLLISION;
      break;
    }
    if ((w.dest_point - w.ego.st.pos).norm() <= opts.arrival_radius) {
      trace.termination = Termination::DESTINATION_REACHED;
      break;
    }
  }
  return trace;
}

}  // namespace scenforge::sim
