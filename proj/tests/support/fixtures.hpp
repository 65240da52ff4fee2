#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "scenforge/catalog.hpp"
#include "scenforge/geometry.hpp"
#include "scenforge/mapsem.hpp"
#include "scenforge/rng.hpp"
#include "scenforge/simcore.hpp"

namespace scenforge::test {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read fixture '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string asset_path(const std::string& name) {
  return std::string(SCENFORGE_ASSETS_DIR) + "/" + name;
}

inline std::string read_asset(const std::string& name) { return read_file(asset_path(name)); }

inline mapsem::MapGraph load_map(const std::string& name) {
  return mapsem::MapGraph::parse(read_asset(name));
}

inline catalog::Catalog load_catalog(const std::string& name) {
  return catalog::Catalog::parse(read_asset(name));
}

/// Junction fixture with roads radiating at the given outward headings
/// (degrees), rigidly transformed by `rotation_deg` and `shift`.
mapsem::MapGraph radial_junction(const std::vector<double>& headings_deg,
                                 double rotation_deg = 0.0, geom::Vec2 shift = {},
                                 double road_length = 100.0);

/// Two same-direction lanes on one straight road, for lane-change recognizer
/// tests: lane dual.0 on the left (y in [0, 3.5]), dual.1 on the right.
mapsem::MapGraph dual_lane_map(double length = 200.0);

/// Random catalog for property tests: <=6 categories, <=5 elements each,
/// <=5 random implication constraints of the form a.x -> [!]b.y.
catalog::Catalog random_catalog(Rng& rng);

/// Synthetic straight-driving trace on dual_lane_map geometry: the ego moves
/// at `speed` with the given per-frame lateral positions (y values), heading
/// held at zero so boundary-crossing frames follow from the y series alone.
sim::TimedTrace synthetic_lateral_trace(const mapsem::MapGraph& map,
                                        const std::vector<double>& ys, double speed = 10.0,
                                        double x0 = 5.0);

/// y(t) series for a lane change from y0 to y1: hold, linear ramp, hold.
std::vector<double> lane_change_profile(double y0, double y1, int hold0, int ramp, int hold1);

}  // namespace scenforge::test
