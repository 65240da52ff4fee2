#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scenforge/catalog.hpp"
#include "scenforge/mapsem.hpp"
#include "scenforge/rng.hpp"

namespace scenforge::concretize {

struct ParamRange {
  std::string param;
  double lo = 0.0;
  double hi = 0.0;
};

struct ElementMapping {
  std::vector<ParamRange> params;
  std::optional<std::pair<int, int>> count_range;
};

/// Maps "category.element" keys to simulator parameter ranges and/or agent
/// count ranges.
class ParameterMap {
 public:
  static ParameterMap parse(std::string_view text);

  const ElementMapping* find(std::string_view category, std::string_view element) const;
  void set(const std::string& key, ElementMapping m) { map_[key] = std::move(m); }
  const std::map<std::string, ElementMapping>& entries() const { return map_; }

 private:
  std::map<std::string, ElementMapping> map_;
};

enum class SamplePolicy { RANDOM, MIDPOINT, INTERIOR_RANDOM };

/// random: uniform on [lo,hi]; midpoint: (lo+hi)/2; interior-random: uniform
/// on [lo+m, hi-m] with m = 0.1*(hi-lo). A degenerate range returns lo.
double sample_parameter(double lo, double hi, SamplePolicy policy, Rng& rng);

/// NPC behavior programs are declarative so scenario files round-trip.
/// `avoid_forward_collision` gives ordinary traffic car-following braking;
/// adversarial spawns turn it off and drive their program blindly.
struct BehaviorProgram {
  enum class Kind { FOLLOW_LANE, FOLLOW_LANE_BRAKE, STATIONARY };
  Kind kind = Kind::FOLLOW_LANE;
  double trigger_position = -1.0;  // along the NPC's own path, meters
  double trigger_time = -1.0;      // seconds; <0 means position-triggered
  double decel = 4.0;              // braking strength, m/s^2
  bool avoid_forward_collision = true;
};

struct NpcSpec {
  std::string id;
  std::string start_lane;
  double start_offset = 0.0;  // along the lane's travel direction
  double target_speed = 10.0;
  BehaviorProgram program;
  std::vector<std::string> route;  // lane ids, connection chosen by simulator
};

struct PedestrianSpec {
  std::string id;
  std::string junction;
  std::string road;
  double trigger_time = 0.0;
  bool from_left = false;  // crossing start side, in road frame
};

struct SignalPhase {
  std::vector<std::string> green_roads;
  double duration = 10.0;
};

struct SignalProgram {
  std::string junction;
  std::vector<SignalPhase> phases;  // cycles forever
};

struct EgoPlan {
  std::string start_lane;
  double start_offset = 0.0;
  std::string dest_lane;
  double dest_offset = 0.0;
  std::string via_junction;           // empty when the route stays on one road
  std::string junction_in_lane;       // required approach lane for the turn
  std::string junction_out_lane;
  std::string action;                 // abstract ego action name
  double start_speed = 0.0;
};

struct DensityInfo {
  std::string category;
  std::string element;
  int nmin = 0;
  int nmax = 0;
};

struct ConcreteScenario {
  std::string id;
  std::string map_ref;
  std::string submap_id;
  bool submap_is_junction = false;
  EgoPlan ego;
  std::vector<NpcSpec> npcs;
  std::vector<PedestrianSpec> pedestrians;
  std::map<std::string, double> environment;
  std::vector<SignalProgram> signals;
  std::optional<DensityInfo> density;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> abstract_assignment;

  std::string to_json() const;
  static ConcreteScenario from_json(std::string_view text);
};

struct InstantiateOptions {
  double vehicle_length = 4.6;
  double vehicle_width = 1.9;
  int placement_retries = 100;
  double min_spawn_separation = 1.0;  // surface-to-surface at t=0
  std::string road_category = "road";
  std::string action_category = "ego-action";
  std::string pedestrian_category = "pedestrian";
};

/// Instantiates an abstract scenario on the map: picks a matching sub-map
/// uniformly at random under the seed, places the ego so the abstract action
/// has a junction connection, places NPCs and pedestrians collision-free, and
/// samples environment parameters. Throws ScenarioUnrealizable when no
/// sub-map fits and PlacementExhausted when collision-free placement fails.
ConcreteScenario instantiate(const catalog::AbstractScenario& abstract, const mapsem::MapGraph& map,
                             const ParameterMap& pmap, std::uint64_t seed,
                             const InstantiateOptions& opts = {});

/// How many more agents can be spawned while the scenario stays inside its
/// density equivalence class.
int spawn_headroom(const ConcreteScenario& scenario, std::pair<int, int> density_range);

/// Lane ids making up the ego route, in driving order.
std::vector<std::string> ego_route_lanes(const ConcreteScenario& s);

}  // namespace scenforge::concretize
