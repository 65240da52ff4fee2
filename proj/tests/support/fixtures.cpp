#include "fixtures.hpp"

#include <cmath>

namespace scenforge::test {

using geom::Vec2;
using mapsem::BoundaryType;
using mapsem::Lane;
using mapsem::LaneDir;
using mapsem::MapGraph;
using mapsem::Road;

namespace {

Lane make_lane(LaneDir dir, double width = 3.5) {
  Lane l;
  l.dir = dir;
  l.width = width;
  return l;
}

}  // namespace

MapGraph radial_junction(const std::vector<double>& headings_deg, double rotation_deg, Vec2 shift,
                         double road_length) {
  std::vector<Road> roads;
  mapsem::Junction j;
  j.id = "J";
  for (std::size_t i = 0; i < headings_deg.size(); ++i) {
    double h = geom::deg_to_rad(headings_deg[i] + rotation_deg);
    Vec2 dir{std::cos(h), std::sin(h)};
    Road r;
    r.id = "r" + std::to_string(i);
    r.centerline = geom::Polyline({shift + dir * 10.0, shift + dir * (10.0 + road_length)});
    r.lanes = {make_lane(LaneDir::BACKWARD), make_lane(LaneDir::FORWARD)};
    r.start_link = {mapsem::EndKind::JUNCTION, "J"};
    roads.push_back(std::move(r));
    j.incident.push_back({"r" + std::to_string(i), mapsem::RoadEnd::START});
  }
  return MapGraph::build(std::move(roads), {std::move(j)}, {}, {});
}

MapGraph dual_lane_map(double length) {
  Road r;
  r.id = "dual";
  r.centerline = geom::Polyline({{0.0, 0.0}, {length, 0.0}});
  r.lanes = {make_lane(LaneDir::FORWARD), make_lane(LaneDir::FORWARD)};
  r.speed_limit = 13.9;
  return MapGraph::build({std::move(r)}, {}, {}, {});
}

catalog::Catalog random_catalog(Rng& rng) {
  int n_cat = rng.uniform_int(2, 6);
  std::vector<catalog::Category> cats;
  for (int c = 0; c < n_cat; ++c) {
    catalog::Category cat;
    cat.name = "c" + std::to_string(c);
    int n_elem = rng.uniform_int(2, 5);
    for (int e = 0; e < n_elem; ++e) cat.elements.push_back("e" + std::to_string(e));
    cats.push_back(std::move(cat));
  }
  int n_con = rng.uniform_int(0, 5);
  std::vector<std::string> constraints;
  for (int k = 0; k < n_con; ++k) {
    int a = rng.uniform_int(0, n_cat - 1);
    int b = rng.uniform_int(0, n_cat - 1);
    if (a == b) continue;
    const auto& ca = cats[static_cast<std::size_t>(a)];
    const auto& cb = cats[static_cast<std::size_t>(b)];
    std::string lhs = ca.name + "." + ca.elements[static_cast<std::size_t>(
                                          rng.uniform_int(0, static_cast<int>(ca.elements.size()) - 1))];
    std::string rhs = cb.name + "." + cb.elements[static_cast<std::size_t>(
                                          rng.uniform_int(0, static_cast<int>(cb.elements.size()) - 1))];
    bool neg = rng.uniform() < 0.5;
    constraints.push_back(lhs + " -> " + (neg ? "!" : "") + rhs);
  }
  return catalog::Catalog(std::move(cats), std::move(constraints));
}

sim::TimedTrace synthetic_lateral_trace(const MapGraph& map, const std::vector<double>& ys,
                                        double speed, double x0) {
  sim::TimedTrace tr;
  tr.dt = 0.1;
  tr.scenario_id = "synthetic";
  const mapsem::Road& road = map.roads().front();
  for (std::size_t k = 0; k < ys.size(); ++k) {
    sim::Frame f;
    f.t = static_cast<double>(k) * tr.dt;
    sim::AgentState ego;
    ego.id = "ego";
    ego.pos = {x0 + speed * f.t, ys[k]};
    ego.heading = 0.0;
    ego.speed = speed;
    ego.accel = 0.0;
    // annotate by lane containment, as the simulator would
    for (std::size_t i = 0; i < road.lanes.size(); ++i) {
      auto [lo, hi] = road.lane_interval(static_cast<int>(i));
      if (ys[k] >= lo - 1e-9 && ys[k] <= hi + 1e-9) {
        ego.lane = road.lanes[i].id;
        ego.lane_offset = ego.pos.x;
        break;
      }
    }
    f.agents.push_back(std::move(ego));
    tr.frames.push_back(std::move(f));
  }
  tr.termination = sim::Termination::BUDGET;
  return tr;
}

std::vector<double> lane_change_profile(double y0, double y1, int hold0, int ramp, int hold1) {
  std::vector<double> ys;
  for (int i = 0; i < hold0; ++i) ys.push_back(y0);
  for (int i = 1; i <= ramp; ++i) {
    ys.push_back(y0 + (y1 - y0) * static_cast<double>(i) / static_cast<double>(ramp));
  }
  for (int i = 0; i < hold1; ++i) ys.push_back(y1);
  return ys;
}

}  // namespace scenforge::test
