#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scenforge/geometry.hpp"

namespace scenforge::mapsem {

enum class LaneDir { FORWARD, BACKWARD };
enum class BoundaryType { SOLID_WHITE, DASHED_WHITE, SOLID_YELLOW, DASHED_YELLOW };

BoundaryType boundary_from_string(std::string_view s);
std::string to_string(BoundaryType b);

/// One lane of a road. Lanes are declared left-to-right as seen along the
/// road centerline direction; FORWARD lanes carry traffic along the
/// centerline, BACKWARD lanes against it. The derived center polyline is
/// oriented along the lane's travel direction.
struct Lane {
  std::string id;  // "<road_id>.<index>"
  std::string road;
  int index = 0;
  LaneDir dir = LaneDir::FORWARD;
  double width = 3.5;
  BoundaryType left_boundary = BoundaryType::SOLID_WHITE;
  BoundaryType right_boundary = BoundaryType::SOLID_WHITE;
  double speed_limit = 13.9;

  geom::Polyline center;            // travel-oriented
  double offset_from_centerline = 0.0;  // road frame, left positive
};

enum class EndKind { NONE, JUNCTION, ROAD };
struct EndLink {
  EndKind kind = EndKind::NONE;
  std::string id;
};

struct Road {
  std::string id;
  geom::Polyline centerline;
  std::vector<Lane> lanes;  // left to right across the centerline direction
  EndLink start_link, end_link;
  double speed_limit = 13.9;

  double total_width() const;
  double length() const { return centerline.length(); }
  /// Lateral interval [right, left] of lane `index` in the road frame.
  std::pair<double, double> lane_interval(int index) const;
};

enum class RoadEnd { START, END };

struct IncidentRoad {
  std::string road;
  RoadEnd end = RoadEnd::START;
};

struct Connection {
  std::string in_lane;
  std::string out_lane;
};

struct Junction {
  std::string id;
  std::vector<IncidentRoad> incident;
  std::vector<Connection> connections;
  bool signalized = false;

  geom::Vec2 center;        // derived: mean of touching road endpoints
  double radius = 0.0;      // derived: drivable disk radius (padded)
  double core_radius = 0.0; // derived: max touching-endpoint distance; inside
                            // this the vehicle is committed to the junction
};

struct CrossWalk {
  std::string junction;
  std::string road;
};

struct TrafficLight {
  std::string junction;
  std::string road;
};

enum class JunctionType { T_SHAPED, Y_SHAPED, FOUR_WAY, OTHER };
std::string to_string(JunctionType t);

struct JunctionClass {
  JunctionType type = JunctionType::OTHER;
  std::vector<double> gaps;  // consecutive angular gaps, degrees, sum 360
};

enum class TurnDirection { LEFT, RIGHT, STRAIGHT, U_TURN };
std::string to_string(TurnDirection d);

/// Validated lane-graph map. Immutable after parse; all queries are pure.
class MapGraph {
 public:
  static MapGraph parse(std::string_view text);
  static MapGraph build(std::vector<Road> roads, std::vector<Junction> junctions,
                        std::vector<CrossWalk> crosswalks, std::vector<TrafficLight> lights);

  const std::vector<Road>& roads() const { return roads_; }
  const std::vector<Junction>& junctions() const { return junctions_; }
  const std::vector<CrossWalk>& crosswalks() const { return crosswalks_; }
  const std::vector<TrafficLight>& traffic_lights() const { return lights_; }

  const Road& road(std::string_view id) const;
  const Junction& junction(std::string_view id) const;
  const Lane& lane(std::string_view lane_id) const;  // "<road>.<index>"
  const Road* find_road(std::string_view id) const;
  const Junction* find_junction(std::string_view id) const;
  const Lane* find_lane(std::string_view lane_id) const;

  /// Lanes of `road` whose travel direction points into the junction.
  std::vector<const Lane*> entering_lanes(const Junction& j, std::string_view road_id) const;
  std::vector<const Lane*> exiting_lanes(const Junction& j, std::string_view road_id) const;

  /// Neighbor lane on the travel-left/right side of the given lane, if any.
  const Lane* adjacent_lane(const Lane& lane, bool travel_right) const;

  std::vector<const Connection*> connections_from(const Junction& j, std::string_view in_lane) const;

  bool has_crosswalk(std::string_view junction, std::string_view road) const;
  std::vector<const CrossWalk*> crosswalks_at(std::string_view junction) const;

  /// The road endpoint touching the junction.
  geom::Vec2 touch_point(const Junction& j, const IncidentRoad& inc) const;

 private:
  std::vector<Road> roads_;
  std::vector<Junction> junctions_;
  std::vector<CrossWalk> crosswalks_;
  std::vector<TrafficLight> lights_;
  std::map<std::string, std::size_t, std::less<>> road_idx_;
  std::map<std::string, std::size_t, std::less<>> junction_idx_;

  void validate_and_derive();
};

/// Outward heading (degrees, CCW from +x) of each incident road, taken from
/// the centerline segment adjacent to the touching endpoint.
std::vector<double> incident_road_headings(const MapGraph& map, const Junction& j);

/// Sorts the headings, forms cyclic gaps and matches them against the
/// templates T {180,90,90}, Y {120,120,120} and FOUR_WAY {90,90,90,90}, each
/// gap within +-tolerance. Templates are grouped by incident-road count.
JunctionClass classify_junction(const MapGraph& map, const Junction& j, double tolerance_deg = 15.0);

/// Labels every other incident road relative to driving into the junction
/// along `approach_road`: straight |off|<=45, left (45,135], right [-135,-45),
/// u-turn otherwise. Offsets are CCW-positive.
std::map<std::string, TurnDirection> relative_direction(const MapGraph& map, const Junction& j,
                                                        std::string_view approach_road);

/// Label of a lane-to-lane connection; connections back onto the same road
/// are u-turns, everything else follows relative_direction.
TurnDirection connection_label(const MapGraph& map, const Junction& j, const Connection& c);

struct SubMapQuery {
  enum class Kind { JUNCTION, STRAIGHT_SEGMENT };
  Kind kind = Kind::JUNCTION;
  std::optional<JunctionType> junction_type;
  bool require_crosswalk = false;
  bool require_signal = false;
  int min_parallel_lanes = 1;   // same-direction lanes on one road
  double min_length = 0.0;      // straight segments only
  double classify_tolerance_deg = 15.0;
  double max_straight_turn_deg = 10.0;
};

struct SubMap {
  std::string id;  // junction id or road id
  bool is_junction = false;
  JunctionType type = JunctionType::OTHER;
  bool has_crosswalk = false;
  bool signalized = false;
  int max_parallel_lanes = 1;
  /// Relative-direction labels per incident road, keyed by approach road.
  std::map<std::string, std::map<std::string, TurnDirection>> directions;
};

/// All sub-maps matching the query, in ascending id order.
std::vector<SubMap> find_submaps(const MapGraph& map, const SubMapQuery& query);

/// Drivable curve from the end of the entering lane to the start of the
/// exiting lane. The tangent floor keeps U-turn loops wide enough for a
/// vehicle's minimum turning radius.
geom::Polyline connection_curve(const Lane& in, const Lane& out);

}  // namespace scenforge::mapsem
