#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scenforge/concretize.hpp"
#include "scenforge/geometry.hpp"
#include "scenforge/mapsem.hpp"

namespace scenforge::sim {

struct AgentState {
  std::string id;
  geom::Vec2 pos;
  double heading = 0.0;
  double speed = 0.0;
  double accel = 0.0;
  double length = 4.6;
  double width = 1.9;
  std::string lane;           // "-" when not on a lane (e.g. inside a junction)
  double lane_offset = 0.0;   // arc length along the lane's travel direction

  geom::Obb box() const { return {pos, heading, length, width}; }
};

enum class SignalColor { RED, GREEN };
std::string to_string(SignalColor c);

struct SignalState {
  std::string junction;
  std::string road;
  SignalColor color = SignalColor::RED;
};

struct Frame {
  double t = 0.0;
  std::vector<AgentState> agents;   // ego first, stable order
  std::vector<SignalState> signals;
};

enum class Termination { BUDGET, DESTINATION_REACHED, COLLISION, CONTROLLER_ERROR };
std::string to_string(Termination t);

/// Full per-timestep record of one simulated episode. Timestamps are exact
/// multiples of dt, strictly increasing and gap-free; the agent set is
/// constant across frames.
struct TimedTrace {
  double dt = 0.1;
  std::string scenario_id;
  std::vector<Frame> frames;
  Termination termination = Termination::BUDGET;

  const AgentState* agent_in(std::size_t frame, std::string_view id) const;

  void serialize(std::ostream& os) const;
  std::string serialize() const;
  static TimedTrace parse(std::string_view text);
};

struct LeadInfo {
  bool present = false;
  double gap = 1e9;   // bumper-to-bumper along the path
  double speed = 0.0;
};

struct SignalView {
  bool present = false;
  SignalColor color = SignalColor::GREEN;
  double dist_to_stopline = 1e9;
};

struct AdjacentView {
  bool exists = false;
  bool same_dir = false;
  bool gap_ok = false;
};

enum class LaneChangeReason { NONE, TURN_RIGHT_APPROACH, TURN_OTHER_APPROACH, ROUTE_TARGET };

struct Observation {
  double t = 0.0;
  double dt = 0.1;
  AgentState self;
  std::vector<AgentState> others;
  double speed_limit = 13.9;
  double curve_speed_limit = 1e9;  // comfortable speed for the path curvature ahead
  double curve_speed_target = 1e9; // speed the tightest upcoming curve allows
  double curve_dist = 1e9;         // distance to that curve along the path
  double dist_to_path_end = 1e9;
  double dist_to_junction = 1e9;   // along the path; 1e9 when none ahead
  double dist_to_destination = 1e9;
  SignalView signal;
  LeadInfo lead;
  int lane_change_needed = 0;      // -1 left, +1 right (travel frame)
  LaneChangeReason lane_change_reason = LaneChangeReason::NONE;
  AdjacentView left, right;
  const std::map<std::string, double>* environment = nullptr;
};

struct Control {
  double accel = 0.0;  // longitudinal command, clamped by the plant
  enum class Intent { NONE, CHANGE_LEFT, CHANGE_RIGHT };
  Intent intent = Intent::NONE;
};

/// Planner under test. Implementations must be deterministic given the
/// observation sequence and must reset any internal state per scenario.
class EgoController {
 public:
  virtual ~EgoController() = default;
  virtual void reset(const concretize::ConcreteScenario& scenario, const mapsem::MapGraph& map) {
    (void)scenario;
    (void)map;
  }
  virtual Control step(const Observation& obs) = 0;
  virtual std::string name() const = 0;
};

struct SimOptions {
  double dt = 0.1;
  double accel_limit = 4.0;    // m/s^2
  double decel_limit = 8.0;    // m/s^2, magnitude
  double max_steer = 0.7;      // rad
  double arrival_radius = 2.0; // m
};

/// Fixed-step deterministic episode. Terminates on budget, ego destination
/// arrival or the first collision involving the ego; a controller exception
/// truncates the trace with CONTROLLER_ERROR.
TimedTrace run(const concretize::ConcreteScenario& scenario, const mapsem::MapGraph& map,
               EgoController& controller, double budget_s, const SimOptions& opts = {});

/// Ego route geometry from start pose to destination, used for progress
/// measurements. Junction routes include the connection curve.
geom::Polyline build_route_path(const mapsem::MapGraph& map,
                                const concretize::ConcreteScenario& scenario);

/// Signal color of an approach road under the scenario's phase schedule.
SignalColor signal_color_at(const concretize::SignalProgram& program, std::string_view road,
                            double t);

/// Rule-based baseline planner: speed tracking with proportional gap keeping,
/// stop-line behavior at red signals and route-driven lane changes. Fault
/// flags inject the defect classes the KPI and perturbation layers look for.
struct BaselineOptions {
  bool fault_no_right_turn_lane_change = false;
  bool fault_late_braking = false;
  bool fault_red_light_rolling = false;

  double cruise_gain = 0.8;          // 1/s
  double comfort_accel = 2.0;        // m/s^2
  double comfort_decel = 2.5;        // m/s^2
  double gap_gain = 0.25;            // 1/s^2; with closure_gain^2 = 4*gap_gain
  double closure_gain = 1.0;         // 1/s; the following loop is critically damped
  double min_gap = 2.0;              // m, standstill spacing
  double time_headway = 1.5;         // s
  double signal_standoff = 0.5;      // m before the stop line
  double lane_change_horizon = 80.0; // m before the junction

  /// Parses "late-braking,no-right-turn-lane-change,red-light-rolling".
  static BaselineOptions with_faults(const std::vector<std::string>& faults);
};

std::unique_ptr<EgoController> baseline_controller(const BaselineOptions& opts = {});

/// "baseline" or "baseline:fault1,fault2" -> configured controller.
std::unique_ptr<EgoController> make_controller(std::string_view spec);

}  // namespace scenforge::sim
