#include "scenforge/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "scenforge/errors.hpp"

namespace scenforge::perturb {

using concretize::BehaviorProgram;
using concretize::ConcreteScenario;
using geom::Polyline;
using geom::Vec2;
using mapsem::Lane;
using mapsem::LaneDir;
using mapsem::MapGraph;
using mapsem::Road;
using sim::AgentState;
using sim::TimedTrace;

std::string to_string(Pattern p) {
  switch (p) {
    case Pattern::LANE_FOLLOWING: return "lane-following";
    case Pattern::LANE_CHANGE_LEFT: return "lane-change-left";
    case Pattern::LANE_CHANGE_RIGHT: return "lane-change-right";
    case Pattern::ENCROACH_LEFT: return "encroaching-change-left";
    case Pattern::ENCROACH_RIGHT: return "encroaching-change-right";
    case Pattern::TURN_LEFT: return "turn-left";
    case Pattern::TURN_RIGHT: return "turn-right";
    case Pattern::U_TURN: return "u-turn";
  }
  return "lane-following";
}

int pattern_priority(Pattern p) {
  switch (p) {
    case Pattern::ENCROACH_LEFT:
    case Pattern::ENCROACH_RIGHT: return 5;
    case Pattern::LANE_CHANGE_LEFT:
    case Pattern::LANE_CHANGE_RIGHT: return 4;
    case Pattern::TURN_LEFT:
    case Pattern::TURN_RIGHT: return 3;
    case Pattern::U_TURN: return 2;
    case Pattern::LANE_FOLLOWING: return 1;
  }
  return 1;
}

std::string sequence_signature(const BehavioralSequence& seq) {
  std::string out;
  for (const Segment& s : seq) {
    if (!out.empty()) out += ",";
    out += to_string(s.pattern);
  }
  return out;
}

namespace {

const AgentState* ego_of(const sim::Frame& f) {
  for (const AgentState& a : f.agents) {
    if (a.id == "ego") return &a;
  }
  return nullptr;
}

struct FrameInfo {
  const AgentState* ego = nullptr;
  const Lane* lane = nullptr;   // annotated lane
  const Road* road = nullptr;
  double bb_lo = 0.0, bb_hi = 0.0;  // bbox lateral extent, road frame
  double center_lat = 0.0;
  int junction = -1;  // index into map.junctions() when inside its disk
};

std::vector<FrameInfo> frame_info(const TimedTrace& trace, const MapGraph& map) {
  std::vector<FrameInfo> out(trace.frames.size());
  for (std::size_t i = 0; i < trace.frames.size(); ++i) {
    FrameInfo& fi = out[i];
    fi.ego = ego_of(trace.frames[i]);
    if (!fi.ego) throw std::invalid_argument("trace frame without ego agent");
    if (!fi.ego->lane.empty()) {
      fi.lane = map.find_lane(fi.ego->lane);
      if (fi.lane) {
        fi.road = &map.road(fi.lane->road);
        auto corners = fi.ego->box().corners();
        double lo = 1e18, hi = -1e18;
        for (const Vec2& c : corners) {
          double lat = fi.road->centerline.project(c).lateral;
          lo = std::min(lo, lat);
          hi = std::max(hi, lat);
        }
        fi.bb_lo = lo;
        fi.bb_hi = hi;
        fi.center_lat = fi.road->centerline.project(fi.ego->pos).lateral;
      }
    }
    for (std::size_t j = 0; j < map.junctions().size(); ++j) {
      const auto& jn = map.junctions()[j];
      if ((fi.ego->pos - jn.center).norm() <= jn.radius) {
        fi.junction = static_cast<int>(j);
        break;
      }
    }
  }
  return out;
}

std::string road_before(const std::vector<FrameInfo>& info, std::size_t i) {
  for (std::size_t k = i + 1; k-- > 0;) {
    if (info[k].lane) return info[k].lane->road;
  }
  return {};
}

const Lane* lane_before(const std::vector<FrameInfo>& info, std::size_t i) {
  for (std::size_t k = i + 1; k-- > 0;) {
    if (info[k].lane) return info[k].lane;
  }
  return nullptr;
}

constexpr double kLatEps = 0.02;

}  // namespace

BehavioralSequence extract_behavioral_sequence(const TimedTrace& trace, const MapGraph& map) {
  const std::size_t n = trace.frames.size();
  if (n == 0) return {};
  std::vector<FrameInfo> info = frame_info(trace, map);
  std::vector<Pattern> pat(n, Pattern::LANE_FOLLOWING);
  std::vector<bool> reserved(n, false);  // turn frames, excluded from lane-change scan

  // junction traversals
  std::size_t i = 0;
  while (i < n) {
    if (info[i].junction < 0) {
      ++i;
      continue;
    }
    std::size_t entry = i;
    std::size_t exit = i;
    while (exit < n && info[exit].junction == info[entry].junction) ++exit;
    // settle: first annotated lane after leaving the disk
    std::size_t settle = exit;
    while (settle < n && !info[settle].lane) ++settle;

    const Lane* from = lane_before(info, entry > 0 ? entry - 1 : 0);
    const Lane* to = settle < n ? info[settle].lane : nullptr;
    Pattern turn = Pattern::LANE_FOLLOWING;
    bool mark = false;
    if (from && to) {
      const auto& jn = map.junctions()[static_cast<std::size_t>(info[entry].junction)];
      if (from->road != to->road) {
        bool incident_from = false, incident_to = false;
        for (const auto& inc : jn.incident) {
          incident_from |= inc.road == from->road;
          incident_to |= inc.road == to->road;
        }
        if (incident_from && incident_to) {
          switch (relative_direction(map, jn, from->road).at(to->road)) {
            case mapsem::TurnDirection::LEFT: turn = Pattern::TURN_LEFT, mark = true; break;
            case mapsem::TurnDirection::RIGHT: turn = Pattern::TURN_RIGHT, mark = true; break;
            case mapsem::TurnDirection::U_TURN: turn = Pattern::U_TURN, mark = true; break;
            case mapsem::TurnDirection::STRAIGHT: break;  // stays lane-following
          }
        }
      } else if (from->dir != to->dir) {
        turn = Pattern::U_TURN;
        mark = true;
      }
    }
    std::size_t end = std::min(settle, n - 1);
    if (mark) {
      for (std::size_t k = entry; k <= end; ++k) {
        pat[k] = turn;
        reserved[k] = true;
      }
    }
    i = std::max(exit, entry + 1);
  }

  // lane changes and encroachments
  i = 0;
  while (i < n) {
    const FrameInfo& fi = info[i];
    if (reserved[i] || !fi.lane || !fi.road) {
      ++i;
      continue;
    }
    const Lane& L = *fi.lane;
    auto [lo, hi] = fi.road->lane_interval(L.index);
    int road_side = 0;  // +1: crossing into index+1 (road-frame right)
    if (fi.bb_lo < lo - kLatEps && L.index + 1 < static_cast<int>(fi.road->lanes.size())) {
      road_side = 1;
    } else if (fi.bb_hi > hi + kLatEps && L.index - 1 >= 0) {
      road_side = -1;
    }
    if (road_side == 0) {
      ++i;
      continue;
    }
    const Lane& target = fi.road->lanes[static_cast<std::size_t>(L.index + road_side)];
    auto [tlo, thi] = fi.road->lane_interval(target.index);
    std::size_t j = i;
    bool complete = false, aborted = false;
    for (; j < n; ++j) {
      if (reserved[j] || info[j].road != fi.road) break;
      if (info[j].bb_lo >= tlo - kLatEps && info[j].bb_hi <= thi + kLatEps) {
        complete = true;
        break;
      }
      if (j > i && info[j].bb_lo >= lo - kLatEps && info[j].bb_hi <= hi + kLatEps) {
        aborted = true;
        break;
      }
    }
    if (complete) {
      bool travel_right = (road_side == 1) == (L.dir == LaneDir::FORWARD);
      bool same_dir = target.dir == L.dir;
      Pattern p = same_dir ? (travel_right ? Pattern::LANE_CHANGE_RIGHT : Pattern::LANE_CHANGE_LEFT)
                           : (travel_right ? Pattern::ENCROACH_RIGHT : Pattern::ENCROACH_LEFT);
      for (std::size_t k = i; k <= j; ++k) pat[k] = p;
      i = j + 1;
    } else {
      i = aborted ? j + 1 : std::max(j, i + 1);
    }
  }

  BehavioralSequence seq;
  std::size_t start = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    if (k == n || pat[k] != pat[start]) {
      seq.push_back({pat[start], start, k - 1});
      start = k;
    }
  }
  return seq;
}

std::vector<CollisionPoint> extract_collision_points(const BehavioralSequence& seq,
                                                     const TimedTrace& trace, const MapGraph& map) {
  std::vector<FrameInfo> info = frame_info(trace, map);
  std::vector<CollisionPoint> out;
  auto label = [&out]() { return "P" + std::to_string(out.size()); };
  std::string sig = sequence_signature(seq);

  for (std::size_t si = 0; si < seq.size(); ++si) {
    const Segment& seg = seq[si];
    const std::size_t a = seg.start_frame, b = seg.end_frame;
    switch (seg.pattern) {
      case Pattern::LANE_CHANGE_LEFT:
      case Pattern::LANE_CHANGE_RIGHT:
      case Pattern::ENCROACH_LEFT:
      case Pattern::ENCROACH_RIGHT: {
        // original lane and crossing boundary at span start
        const FrameInfo& f0 = info[a];
        if (!f0.lane || !f0.road) break;
        const Lane& L = *f0.lane;
        bool travel_right = seg.pattern == Pattern::LANE_CHANGE_RIGHT ||
                            seg.pattern == Pattern::ENCROACH_RIGHT;
        int road_side = (travel_right == (L.dir == LaneDir::FORWARD)) ? 1 : -1;
        auto [lo, hi] = f0.road->lane_interval(L.index);
        double boundary = road_side == 1 ? lo : hi;
        std::size_t cross = a;
        for (std::size_t k = a; k <= b; ++k) {
          bool crossed = road_side == 1 ? info[k].center_lat < boundary
                                        : info[k].center_lat > boundary;
          if (crossed) {
            cross = k;
            break;
          }
          cross = k;  // falls back to the last frame (degenerate spans)
        }
        CollisionPoint p;
        p.position = info[cross].ego->pos;
        p.t = trace.frames[cross].t;
        p.source = seg.pattern;
        p.segment_index = si;
        p.lane = L.id;
        p.toward_travel_right = travel_right;
        p.source_signature = sig;
        p.label = label();
        out.push_back(std::move(p));
        break;
      }
      case Pattern::TURN_LEFT:
      case Pattern::TURN_RIGHT:
      case Pattern::U_TURN: {
        CollisionPoint p;
        p.position = info[a].ego->pos;
        p.t = trace.frames[a].t;
        p.source = seg.pattern;
        p.segment_index = si;
        if (info[a].junction >= 0) {
          p.junction = map.junctions()[static_cast<std::size_t>(info[a].junction)].id;
        }
        p.approach_road = road_before(info, a);
        if (const Lane* l = lane_before(info, a)) p.lane = l->id;
        p.source_signature = sig;
        p.label = label();
        out.push_back(std::move(p));
        break;
      }
      case Pattern::LANE_FOLLOWING: {
        // arc length over the segment; points at 1/3 and 2/3
        std::vector<double> cum(b - a + 1, 0.0);
        for (std::size_t k = a + 1; k <= b; ++k) {
          cum[k - a] = cum[k - a - 1] + (info[k].ego->pos - info[k - 1].ego->pos).norm();
        }
        double total = cum.back();
        std::size_t prev_frame = static_cast<std::size_t>(-1);
        for (double frac : {1.0 / 3.0, 2.0 / 3.0}) {
          double want = frac * total;
          std::size_t k = a;
          while (k < b && cum[k - a] < want) ++k;
          if (k == prev_frame) continue;  // degenerate: both fractions hit one frame
          prev_frame = k;
          if (!info[k].lane) continue;    // off-lane frames make no spawn anchor
          CollisionPoint p;
          p.position = info[k].ego->pos;
          p.t = trace.frames[k].t;
          p.source = Pattern::LANE_FOLLOWING;
          p.segment_index = si;
          p.lane = info[k].lane->id;
          p.source_signature = sig;
          p.label = label();
          out.push_back(std::move(p));
        }
        break;
      }
    }
  }
  return out;
}

ConcreteScenario ParameterizedScenario::realize(double d) const {
  ConcreteScenario s = base;
  s.id = base.id + "-spawn";
  concretize::NpcSpec npc;
  npc.id = "spawn";
  npc.start_lane = npc_route.front();
  npc.start_offset = point_path_s - d;
  npc.target_speed = program_kind == BehaviorProgram::Kind::STATIONARY ? 0.0 : npc_speed;
  npc.program.kind = program_kind;
  npc.program.decel = brake_decel;
  npc.program.avoid_forward_collision = false;  // adversarial by design
  if (program_kind == BehaviorProgram::Kind::FOLLOW_LANE_BRAKE) {
    npc.program.trigger_position = std::max(0.0, d - npc_speed * npc_speed / (2.0 * brake_decel));
  }
  npc.route = npc_route;
  s.npcs.push_back(std::move(npc));
  return s;
}

ParameterizedScenario build_parameterized_scenario(const CollisionPoint& point,
                                                   const ConcreteScenario& base,
                                                   const MapGraph& map, int headroom,
                                                   const PerturbOptions& opts) {
  if (headroom < 1) throw std::invalid_argument("build_parameterized_scenario: headroom < 1");
  ParameterizedScenario ps;
  ps.base = base;
  ps.point = point;
  ps.brake_decel = opts.brake_decel;
  ps.expected_signature = point.source_signature;

  auto finish = [&](const std::vector<std::string>& route, double v,
                    BehaviorProgram::Kind kind, double extra_lo, double extra_hi) {
    Polyline ref;
    const Lane* prev = nullptr;
    for (const std::string& lid : route) {
      const Lane& l = map.lane(lid);
      if (!prev) {
        ref = l.center;
      } else {
        ref.append(mapsem::connection_curve(*prev, l));
        ref.append(l.center);
      }
      prev = &l;
    }
    double s_pt = ref.project(point.position).s;
    double vt = v * point.t;
    double lo = std::max({vt - opts.delta, 0.5, extra_lo});
    double hi = std::min({vt + opts.delta, s_pt - 1.0, extra_hi});
    if (lo > hi) {
      throw NoLegalPlacement("no room on '" + route.front() + "' for the distance domain");
    }
    ps.npc_route = route;
    ps.npc_speed = v;
    ps.program_kind = kind;
    ps.point_path_s = s_pt;
    ps.d_lo = lo;
    ps.d_hi = hi;
  };

  switch (point.source) {
    case Pattern::LANE_CHANGE_LEFT:
    case Pattern::LANE_CHANGE_RIGHT:
    case Pattern::ENCROACH_LEFT:
    case Pattern::ENCROACH_RIGHT: {
      const Lane& ego_lane = map.lane(point.lane);
      const Lane* adj = map.adjacent_lane(ego_lane, point.toward_travel_right);
      if (!adj) {
        throw NoLegalPlacement("no adjacent lane on the " +
                               std::string(point.toward_travel_right ? "right" : "left") +
                               " of '" + point.lane + "'");
      }
      double v = opts.npc_speed > 0.0 ? opts.npc_speed : adj->speed_limit;
      finish({adj->id}, v, BehaviorProgram::Kind::FOLLOW_LANE, 0.5, 1e18);
      break;
    }
    case Pattern::TURN_LEFT:
    case Pattern::TURN_RIGHT:
    case Pattern::U_TURN: {
      if (point.junction.empty()) throw NoLegalPlacement("turn point without junction context");
      const mapsem::Junction& jn = map.junction(point.junction);
      std::vector<std::string> roads;
      for (const auto& inc : jn.incident) {
        if (inc.road != point.approach_road) roads.push_back(inc.road);
      }
      std::sort(roads.begin(), roads.end());
      roads.erase(std::unique(roads.begin(), roads.end()), roads.end());
      for (const std::string& rid : roads) {
        auto lanes = map.entering_lanes(jn, rid);
        for (const Lane* l : lanes) {
          auto conns = map.connections_from(jn, l->id);
          if (conns.empty()) continue;
          const mapsem::Connection* conn = conns.front();
          for (const auto* c : conns) {
            if (c->out_lane < conn->out_lane) conn = c;
          }
          double v = opts.npc_speed > 0.0 ? opts.npc_speed : l->speed_limit;
          double lane_len = l->center.length();
          // the NPC must start on its approach lane, not inside the junction
          Polyline probe_ref = l->center;
          double s_on_ref = 0.0;
          {
            Polyline full = l->center;
            const Lane& out = map.lane(conn->out_lane);
            full.append(mapsem::connection_curve(*l, out));
            full.append(out.center);
            s_on_ref = full.project(point.position).s;
          }
          double extra_lo = s_on_ref - (lane_len - 2.0);
          finish({l->id, conn->out_lane}, v, BehaviorProgram::Kind::FOLLOW_LANE, extra_lo, 1e18);
          return ps;
        }
      }
      throw NoLegalPlacement("no crossing approach with connections at '" + point.junction + "'");
    }
    case Pattern::LANE_FOLLOWING: {
      const Lane& lane = map.lane(point.lane);
      double v = opts.npc_speed > 0.0 ? opts.npc_speed : lane.speed_limit;
      double s_pt = lane.center.project(point.position).s;
      if (base.ego.start_lane == lane.id) {
        // keep the spawn ahead of the ego start pose
        double max_d = s_pt - base.ego.start_offset - 7.0;
        double vt = v * point.t;
        if (vt - opts.delta > max_d) {
          // not enough lane behind the point for a moving spawn: park it there
          double lo = 0.5, hi = std::min(2.0 * opts.delta, max_d);
          if (lo > hi) throw NoLegalPlacement("no room ahead of the ego on '" + lane.id + "'");
          ps.npc_route = {lane.id};
          ps.npc_speed = 0.0;
          ps.program_kind = BehaviorProgram::Kind::STATIONARY;
          ps.point_path_s = s_pt;
          ps.d_lo = lo;
          ps.d_hi = hi;
          return ps;
        }
        finish({lane.id}, v, BehaviorProgram::Kind::FOLLOW_LANE_BRAKE, 0.5,
               std::max(0.5, max_d));
        return ps;
      }
      finish({lane.id}, v, BehaviorProgram::Kind::FOLLOW_LANE_BRAKE, 0.5, 1e18);
      break;
    }
  }
  return ps;
}

SimulationProbe::SimulationProbe(const MapGraph& map, sim::EgoController& controller,
                                 const kpi::KpiThresholds& thresholds, const PerturbOptions& opts,
                                 std::string base_signature)
    : map_(map),
      controller_(controller),
      thresholds_(thresholds),
      opts_(opts),
      base_signature_(std::move(base_signature)) {}

ProbeResult SimulationProbe::evaluate(const ParameterizedScenario& ps, double d) {
  ConcreteScenario scn = ps.realize(d);
  auto trace = std::make_shared<TimedTrace>(sim::run(scn, map_, controller_, opts_.sim_budget_s));
  auto report = std::make_shared<kpi::KpiReport>(kpi::evaluate(*trace, scn, map_, thresholds_));

  ProbeResult res;
  res.trace = trace;
  res.report = report;
  res.safety_critical = report->safety_critical;
  res.performance = report->performance;
  for (const auto& f : trace->frames) {
    if (res.t_ego > 1e17) {
      const AgentState* ego = ego_of(f);
      if (ego && (ego->pos - ps.point.position).norm() <= opts_.arrival_tolerance) res.t_ego = f.t;
    }
    if (res.t_npc > 1e17) {
      for (const AgentState& a : f.agents) {
        if (a.id == "spawn" && (a.pos - ps.point.position).norm() <= opts_.arrival_tolerance) {
          res.t_npc = f.t;
          break;
        }
      }
    }
  }
  if (ps.program_kind == BehaviorProgram::Kind::STATIONARY) res.t_npc = 0.0;
  res.sequence = sequence_signature(extract_behavioral_sequence(*trace, map_));
  const std::string& expected =
      ps.expected_signature.empty() ? base_signature_ : ps.expected_signature;
  res.sequence_differs = res.sequence != expected;
  return res;
}

SearchResult search_parameter(const ParameterizedScenario& ps, ScenarioProbe& probe,
                              const PerturbOptions& opts, int max_iters,
                              const std::function<void(const IterationRecord&)>& on_iteration) {
  SearchResult result;
  double d = std::clamp(ps.npc_speed * ps.point.t, ps.d_lo, ps.d_hi);
  double step = opts.step0;
  int last_dir = 0;
  for (int iter = 0; iter < max_iters; ++iter) {
    ProbeResult r = probe.evaluate(ps, d);
    ++result.simulations;
    if (on_iteration) {
      on_iteration({d, r.t_npc, r.t_ego, r.safety_critical, r.performance, r.sequence_differs,
                    r.trace, r.report});
    }
    if (r.safety_critical) {
      return {SearchOutcome::VIOLATION, d, r.trace, r.report, result.simulations};
    }
    if (r.sequence_differs) {
      return {SearchOutcome::NEW_SEQUENCE, d, r.trace, r.report, result.simulations};
    }
    int dir;
    bool halved = false;
    if (r.t_npc < r.t_ego - opts.eps_early) {
      dir = 1;  // NPC crosses too early: start it farther away
    } else if (r.t_npc > r.t_ego + opts.eps_late) {
      dir = -1;  // too late: start it closer
    } else {
      // timed right yet nothing happened; probe the other side, finer
      step *= 0.5;
      halved = true;
      dir = last_dir != 0 ? -last_dir : 1;
    }
    if (!halved && last_dir != 0 && dir != last_dir) step *= 0.5;
    if (step < opts.step_min) {
      result.outcome = SearchOutcome::EXHAUSTED;
      result.d = d;
      return result;
    }
    d = std::clamp(d + dir * step, ps.d_lo, ps.d_hi);
    last_dir = dir;
  }
  result.outcome = SearchOutcome::EXHAUSTED;
  result.d = d;
  return result;
}

SearchResult search_parameter(const ParameterizedScenario& ps, const MapGraph& map,
                              sim::EgoController& controller, const kpi::KpiThresholds& thresholds,
                              int max_iters, const PerturbOptions& opts) {
  SimulationProbe probe(map, controller, thresholds, opts, ps.expected_signature);
  return search_parameter(ps, probe, opts, max_iters);
}

namespace {

// Pops the best queue item: highest pattern rank, then earliest ego arrival,
// then insertion order.
std::size_t best_index(const std::vector<QueueItem>& q) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < q.size(); ++i) {
    const QueueItem& a = q[i];
    const QueueItem& b = q[best];
    if (a.rank > b.rank || (a.rank == b.rank && a.point.t < b.point.t) ||
        (a.rank == b.rank && a.point.t == b.point.t && a.order < b.order)) {
      best = i;
    }
  }
  return best;
}

class EnvProbe : public ScenarioProbe {
 public:
  EnvProbe(MetaEnv& env, int& counter) : env_(env), counter_(counter) {}
  ProbeResult evaluate(const ParameterizedScenario& ps, double d) override {
    ++counter_;
    return env_.probe(ps, d);
  }

 private:
  MetaEnv& env_;
  int& counter_;
};

}  // namespace

SearchState meta_search_core(MetaEnv& env, int budget, const PerturbOptions& opts) {
  SearchState state;
  state.budget_remaining = budget;
  if (budget < 1) return state;

  std::uint64_t order = 0;
  auto enqueue = [&](const std::vector<CollisionPoint>& pts) {
    for (const CollisionPoint& p : pts) {
      state.queue.push_back({p, pattern_priority(p.source), order++});
    }
  };

  auto base_trace = env.simulate_base();
  --state.budget_remaining;
  ++state.simulations_run;
  BehavioralSequence base_seq = env.extract(*base_trace);
  state.visited.insert(sequence_signature(base_seq));
  enqueue(env.points(base_seq, *base_trace));

  while (!state.queue.empty() && state.budget_remaining > 0) {
    std::size_t idx = best_index(state.queue);
    QueueItem item = state.queue[idx];
    state.queue.erase(state.queue.begin() + static_cast<std::ptrdiff_t>(idx));

    ParameterizedScenario ps;
    try {
      ps = env.build(item.point);
    } catch (const NoLegalPlacement&) {
      state.log.push_back({item.point.label, 0.0, 1e18, 1e18, "skip", false, false, nullptr});
      continue;
    }

    int sims_before = state.simulations_run;
    EnvProbe probe(env, state.simulations_run);
    auto log_iter = [&](const IterationRecord& rec) {
      SearchLogEntry e;
      e.point = item.point.label;
      e.d = rec.d;
      e.t_npc = rec.t_npc;
      e.t_ego = rec.t_ego;
      e.safety_critical = rec.safety_critical;
      e.performance = rec.performance;
      e.report = rec.report;
      if (rec.safety_critical) {
        e.outcome = "violation";
      } else if (rec.sequence_differs) {
        e.outcome = "new-sequence";
      } else if (rec.t_npc < rec.t_ego - 1e-12) {
        e.outcome = "early";
      } else if (rec.t_npc > rec.t_ego + 1e-12) {
        e.outcome = "late";
      } else {
        e.outcome = "in-band";
      }
      state.log.push_back(std::move(e));
    };
    int iters = std::min(opts.max_iters, state.budget_remaining);
    SearchResult res = search_parameter(ps, probe, opts, iters, log_iter);
    state.budget_remaining -= res.simulations;

    if (res.outcome == SearchOutcome::VIOLATION) {
      state.violations.push_back({item.point, res.d, ps.realize(res.d), res.trace, res.report});
      break;  // safety-critical findings end the whole search
    }
    if (res.outcome == SearchOutcome::NEW_SEQUENCE && res.trace) {
      BehavioralSequence seq = env.extract(*res.trace);
      std::string sig = sequence_signature(seq);
      if (!state.visited.contains(sig)) {
        state.visited.insert(sig);
        enqueue(env.points(seq, *res.trace));
      }
    }
  }

  std::stable_sort(state.queue.begin(), state.queue.end(), [](const QueueItem& a, const QueueItem& b) {
    if (a.rank != b.rank) return a.rank > b.rank;
    if (a.point.t != b.point.t) return a.point.t < b.point.t;
    return a.order < b.order;
  });
  return state;
}

namespace {

class SimMetaEnv : public MetaEnv {
 public:
  SimMetaEnv(const ConcreteScenario& base, const MapGraph& map, sim::EgoController& controller,
             const kpi::KpiThresholds& thresholds, const PerturbOptions& opts)
      : base_(base), map_(map), controller_(controller), thresholds_(thresholds), opts_(opts) {}

  std::shared_ptr<TimedTrace> simulate_base() override {
    return std::make_shared<TimedTrace>(sim::run(base_, map_, controller_, opts_.sim_budget_s));
  }

  BehavioralSequence extract(const TimedTrace& trace) override {
    return extract_behavioral_sequence(trace, map_);
  }

  std::vector<CollisionPoint> points(const BehavioralSequence& seq,
                                     const TimedTrace& trace) override {
    return extract_collision_points(seq, trace, map_);
  }

  ParameterizedScenario build(const CollisionPoint& point) override {
    int headroom = 1;
    if (base_.density) {
      headroom = concretize::spawn_headroom(base_, {base_.density->nmin, base_.density->nmax});
      if (headroom < 1) throw NoLegalPlacement("density range leaves no spawn headroom");
    }
    return build_parameterized_scenario(point, base_, map_, headroom, opts_);
  }

  ProbeResult probe(const ParameterizedScenario& ps, double d) override {
    SimulationProbe probe(map_, controller_, thresholds_, opts_, ps.expected_signature);
    return probe.evaluate(ps, d);
  }

 private:
  const ConcreteScenario& base_;
  const MapGraph& map_;
  sim::EgoController& controller_;
  kpi::KpiThresholds thresholds_;
  PerturbOptions opts_;
};

}  // namespace

SearchState meta_search(const ConcreteScenario& base, const MapGraph& map,
                        sim::EgoController& controller, int budget,
                        const kpi::KpiThresholds& thresholds, const PerturbOptions& opts) {
  if (budget < 1) throw std::invalid_argument("meta_search: budget must be >= 1");
  SimMetaEnv env(base, map, controller, thresholds, opts);
  return meta_search_core(env, budget, opts);
}

std::string search_log_text(const SearchState& state) {
  std::ostringstream os;
  auto num = [](double v) {
    if (v > 1e17) return std::string("inf");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  for (const SearchLogEntry& e : state.log) {
    os << e.point << " d=" << num(e.d) << " t_npc=" << num(e.t_npc) << " t_ego=" << num(e.t_ego)
       << " outcome=" << e.outcome;
    if (e.safety_critical) os << " safety-critical";
    if (e.performance) os << " performance";
    os << "\n";
  }
  os << "simulations=" << state.simulations_run << " budget_remaining=" << state.budget_remaining
     << " violations=" << state.violations.size() << "\n";
  return os.str();
}

}  // namespace scenforge::perturb
