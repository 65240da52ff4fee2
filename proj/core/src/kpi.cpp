#include "scenforge/kpi.hpp"

#include <algorithm>
#include <cmath>

#include "scenforge/errors.hpp"
#include "json.hpp"

namespace scenforge::kpi {

using ordered_json = nlohmann::ordered_json;
using sim::AgentState;
using sim::Frame;
using sim::TimedTrace;

namespace {

const char* kKpiNames[] = {"collision",      "too_close",      "harsh_brake", "harsh_accel",
                           "lateral_jerk",   "route_deviation", "signal_violation"};

const AgentState* ego_of(const Frame& f) {
  for (const AgentState& a : f.agents) {
    if (a.id == "ego") return &a;
  }
  return nullptr;
}

}  // namespace

std::string KpiThresholds::to_json() const {
  ordered_json j;
  j["too_close"] = too_close;
  j["harsh_brake"] = harsh_brake;
  j["harsh_accel"] = harsh_accel;
  j["lateral_jerk"] = lateral_jerk;
  j["route_progress_min"] = route_progress_min;
  return j.dump(2) + "\n";
}

KpiThresholds KpiThresholds::from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("thresholds: ") + e.what());
  }
  KpiThresholds t;
  t.too_close = j.value("too_close", t.too_close);
  t.harsh_brake = j.value("harsh_brake", t.harsh_brake);
  t.harsh_accel = j.value("harsh_accel", t.harsh_accel);
  t.lateral_jerk = j.value("lateral_jerk", t.lateral_jerk);
  t.route_progress_min = j.value("route_progress_min", t.route_progress_min);
  if (t.harsh_brake >= 0.0 || t.harsh_accel <= 0.0) {
    throw ParseError("thresholds: harsh_brake must be negative, harsh_accel positive");
  }
  return t;
}

const KpiVerdict& KpiReport::verdict(const std::string& name) const {
  auto it = verdicts.find(name);
  if (it == verdicts.end()) throw std::invalid_argument("unknown KPI '" + name + "'");
  return it->second;
}

std::string KpiReport::to_json() const {
  ordered_json j;
  j["verdicts"] = ordered_json::object();
  for (const char* name : kKpiNames) {
    auto it = verdicts.find(name);
    ordered_json jv;
    jv["violated"] = it != verdicts.end() && it->second.violated;
    jv["events"] = ordered_json::array();
    if (it != verdicts.end()) {
      for (const KpiEvent& e : it->second.events) {
        jv["events"].push_back({{"t", e.t}, {"agents", e.agents}, {"value", e.value}});
      }
    }
    j["verdicts"][name] = std::move(jv);
  }
  j["safety_critical"] = safety_critical;
  j["performance"] = performance;
  j["route_progress"] = route_progress;
  return j.dump(2) + "\n";
}

KpiReport KpiReport::from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("kpi report: ") + e.what());
  }
  KpiReport r;
  for (auto it = j.at("verdicts").begin(); it != j.at("verdicts").end(); ++it) {
    KpiVerdict v;
    v.violated = it.value().value("violated", false);
    for (const auto& je : it.value().value("events", ordered_json::array())) {
      KpiEvent e;
      e.t = je.value("t", 0.0);
      for (const auto& a : je.value("agents", ordered_json::array())) e.agents.push_back(a.get<std::string>());
      e.value = je.value("value", 0.0);
      v.events.push_back(std::move(e));
    }
    r.verdicts[it.key()] = std::move(v);
  }
  r.safety_critical = j.value("safety_critical", false);
  r.performance = j.value("performance", false);
  r.route_progress = j.value("route_progress", 0.0);
  return r;
}

namespace {

bool inside_junction(const mapsem::Junction& j, const geom::Vec2& p) {
  return (p - j.center).norm() <= j.radius;
}

// last non-empty lane annotation at or before frame i
std::string approach_road_before(const TimedTrace& trace, std::size_t i, const mapsem::MapGraph& map) {
  for (std::size_t k = i + 1; k-- > 0;) {
    const AgentState* ego = ego_of(trace.frames[k]);
    if (ego && !ego->lane.empty()) {
      const mapsem::Lane* lane = map.find_lane(ego->lane);
      if (lane) return lane->road;
    }
  }
  return {};
}

sim::SignalColor signal_in_frame(const Frame& f, const std::string& junction, const std::string& road,
                                 const concretize::ConcreteScenario& scn, double t) {
  for (const auto& s : f.signals) {
    if (s.junction == junction && s.road == road) return s.color;
  }
  for (const auto& prog : scn.signals) {
    if (prog.junction == junction) return sim::signal_color_at(prog, road, t);
  }
  return sim::SignalColor::GREEN;
}

bool on_drivable(const mapsem::MapGraph& map, const geom::Vec2& p) {
  for (const mapsem::Road& r : map.roads()) {
    auto proj = r.centerline.project(p);
    if (proj.s < -0.5 || proj.s > r.length() + 0.5) continue;
    double half = r.total_width() / 2.0;
    if (std::abs(proj.lateral) <= half + 0.3) return true;
  }
  for (const mapsem::Junction& j : map.junctions()) {
    if (inside_junction(j, p)) return true;
  }
  return false;
}

}  // namespace

KpiReport evaluate(const TimedTrace& trace, const concretize::ConcreteScenario& scenario,
                   const mapsem::MapGraph& map, const KpiThresholds& thr) {
  if (!trace.scenario_id.empty() && !scenario.id.empty() && trace.scenario_id != scenario.id) {
    throw std::invalid_argument("trace/scenario mismatch: trace is for '" + trace.scenario_id + "'");
  }
  for (const Frame& f : trace.frames) {
    if (!ego_of(f)) throw std::invalid_argument("trace frame without ego agent");
  }

  KpiReport report;
  for (const char* name : kKpiNames) report.verdicts[name] = {};
  if (trace.frames.empty()) return report;

  const double dt = trace.dt;
  const std::size_t n = trace.frames.size();

  // collision and too_close
  {
    KpiVerdict& col = report.verdicts["collision"];
    KpiVerdict& close = report.verdicts["too_close"];
    bool col_run = false;
    bool close_run = false;
    KpiEvent close_event;
    double close_min = 1e18;
    for (std::size_t i = 0; i < n; ++i) {
      const Frame& f = trace.frames[i];
      const AgentState* ego = ego_of(f);
      bool any_overlap = false;
      bool any_close = false;
      std::string overlap_agent, close_agent;
      double min_dist = 1e18;
      for (const AgentState& a : f.agents) {
        if (a.id == "ego") continue;
        double d = geom::obb_distance(ego->box(), a.box());
        if (d <= 0.0) {
          any_overlap = true;
          overlap_agent = a.id;
        } else if (d < thr.too_close) {
          any_close = true;
          if (d < min_dist) {
            min_dist = d;
            close_agent = a.id;
          }
        }
      }
      if (any_overlap && !col_run) {
        col.violated = true;
        col.events.push_back({f.t, {"ego", overlap_agent}, 0.0});
      }
      col_run = any_overlap;

      if (any_close) {
        if (!close_run) {
          close_min = 1e18;
          close_event = {};
        }
        if (min_dist < close_min) {
          close_min = min_dist;
          close_event = {f.t, {"ego", close_agent}, min_dist};
        }
        close_run = true;
      } else if (close_run) {
        close.violated = true;
        close.events.push_back(close_event);
        close_run = false;
      }
    }
    if (close_run) {
      close.violated = true;
      close.events.push_back(close_event);
    }
  }

  // harsh brake / acceleration
  {
    KpiVerdict& brake = report.verdicts["harsh_brake"];
    KpiVerdict& accel = report.verdicts["harsh_accel"];
    bool brun = false, arun = false;
    KpiEvent bev, aev;
    for (std::size_t i = 0; i < n; ++i) {
      const AgentState* ego = ego_of(trace.frames[i]);
      double a = ego->accel;
      if (a < thr.harsh_brake) {
        if (!brun || a < bev.value) bev = {trace.frames[i].t, {"ego"}, a};
        brun = true;
      } else if (brun) {
        brake.violated = true;
        brake.events.push_back(bev);
        brun = false;
      }
      if (a > thr.harsh_accel) {
        if (!arun || a > aev.value) aev = {trace.frames[i].t, {"ego"}, a};
        arun = true;
      } else if (arun) {
        accel.violated = true;
        accel.events.push_back(aev);
        arun = false;
      }
    }
    if (brun) {
      brake.violated = true;
      brake.events.push_back(bev);
    }
    if (arun) {
      accel.violated = true;
      accel.events.push_back(aev);
    }
  }

  // lateral jerk: third finite difference of the lane-frame lateral offset,
  // evaluated inside contiguous same-road spans so junction handoffs do not
  // fabricate spikes
  {
    KpiVerdict& jerk = report.verdicts["lateral_jerk"];
    std::vector<std::pair<std::string, double>> lat(n);  // road id, lateral
    for (std::size_t i = 0; i < n; ++i) {
      const AgentState* ego = ego_of(trace.frames[i]);
      const mapsem::Lane* lane = ego->lane.empty() ? nullptr : map.find_lane(ego->lane);
      bool in_junction = std::any_of(map.junctions().begin(), map.junctions().end(),
                                     [&](const mapsem::Junction& j) { return inside_junction(j, ego->pos); });
      if (!lane || in_junction) {
        lat[i] = {"", 0.0};  // junction frames: road frame misreads the curve
        continue;
      }
      const mapsem::Road& r = map.road(lane->road);
      lat[i] = {lane->road, r.centerline.project(ego->pos).lateral};
    }
    bool run = false;
    KpiEvent ev;
    for (std::size_t i = 3; i < n; ++i) {
      bool same_span = !lat[i].first.empty() && lat[i].first == lat[i - 1].first &&
                       lat[i].first == lat[i - 2].first && lat[i].first == lat[i - 3].first;
      double j = 0.0;
      bool violating = false;
      if (same_span) {
        j = (lat[i].second - 3.0 * lat[i - 1].second + 3.0 * lat[i - 2].second - lat[i - 3].second) /
            (dt * dt * dt);
        violating = std::abs(j) > thr.lateral_jerk;
      }
      if (violating) {
        if (!run || std::abs(j) > std::abs(ev.value)) ev = {trace.frames[i].t, {"ego"}, j};
        run = true;
      } else if (run) {
        jerk.violated = true;
        jerk.events.push_back(ev);
        run = false;
      }
    }
    if (run) {
      jerk.violated = true;
      jerk.events.push_back(ev);
    }
  }

  // route deviation: leaving the drivable area, or falling short of the
  // required route progress when the budget ran out
  {
    KpiVerdict& dev = report.verdicts["route_deviation"];
    geom::Polyline route = sim::build_route_path(map, scenario);
    double max_s = 0.0;
    double cur_s = 0.0;  // windowed tracking; U-turn routes self-intersect
    for (std::size_t i = 0; i < n; ++i) {
      const AgentState* ego = ego_of(trace.frames[i]);
      auto proj = route.project_near(ego->pos, cur_s - 2.0, cur_s + 15.0);
      if (proj.dist < 6.0) {
        cur_s = proj.s;
        max_s = std::max(max_s, cur_s);
      }
      if (!on_drivable(map, ego->pos)) {
        if (!dev.violated) dev.events.push_back({trace.frames[i].t, {"ego"}, 0.0});
        dev.violated = true;
      }
    }
    double progress = route.length() < 1e-9 ? 1.0 : std::min(1.0, max_s / route.length());
    if (trace.termination == sim::Termination::DESTINATION_REACHED) progress = 1.0;
    report.route_progress = progress;
    if (trace.termination == sim::Termination::BUDGET && progress < thr.route_progress_min) {
      dev.violated = true;
      dev.events.push_back({trace.frames.back().t, {"ego"}, progress});
    }
  }

  // signal violation: the ego reference point crossing into the junction core
  // while its approach shows red (waiting at the stop line stays outside)
  {
    KpiVerdict& sig = report.verdicts["signal_violation"];
    for (const mapsem::Junction& j : map.junctions()) {
      bool programmed = j.signalized ||
                        std::any_of(scenario.signals.begin(), scenario.signals.end(),
                                    [&](const auto& p) { return p.junction == j.id; });
      if (!programmed) continue;
      auto in_core = [&](const geom::Vec2& p) { return (p - j.center).norm() <= j.core_radius; };
      bool was_inside = in_core(ego_of(trace.frames[0])->pos);
      for (std::size_t i = 1; i < n; ++i) {
        const AgentState* ego = ego_of(trace.frames[i]);
        bool now_inside = in_core(ego->pos);
        if (now_inside && !was_inside) {
          std::string approach = approach_road_before(trace, i - 1, map);
          if (!approach.empty() &&
              signal_in_frame(trace.frames[i], j.id, approach, scenario, trace.frames[i].t) ==
                  sim::SignalColor::RED) {
            sig.violated = true;
            sig.events.push_back({trace.frames[i].t, {"ego"}, 0.0});
          }
        }
        was_inside = now_inside;
      }
    }
  }

  report.safety_critical =
      report.verdicts["collision"].violated || report.verdicts["too_close"].violated;
  report.performance = report.verdicts["harsh_brake"].violated ||
                       report.verdicts["harsh_accel"].violated ||
                       report.verdicts["lateral_jerk"].violated ||
                       report.verdicts["route_deviation"].violated ||
                       report.verdicts["signal_violation"].violated;
  return report;
}

}  // namespace scenforge::kpi
