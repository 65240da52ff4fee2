#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scenforge/concretize.hpp"
#include "scenforge/kpi.hpp"
#include "scenforge/mapsem.hpp"
#include "scenforge/simcore.hpp"

namespace scenforge::perturb {

enum class Pattern {
  LANE_FOLLOWING,
  LANE_CHANGE_LEFT,
  LANE_CHANGE_RIGHT,
  ENCROACH_LEFT,
  ENCROACH_RIGHT,
  TURN_LEFT,
  TURN_RIGHT,
  U_TURN,
};

std::string to_string(Pattern p);

/// Exploration priority: encroaching > lane-change > turn > u-turn >
/// lane-following. Higher rank pops first.
int pattern_priority(Pattern p);

/// One maneuver over an inclusive frame range [start_frame, end_frame].
struct Segment {
  Pattern pattern = Pattern::LANE_FOLLOWING;
  std::size_t start_frame = 0;
  std::size_t end_frame = 0;
};

using BehavioralSequence = std::vector<Segment>;

/// Segments the ego trace into maneuver patterns. Lane changes start when the
/// ego bounding box intersects the lane separator and end when it is fully
/// contained in the adjacent lane; moves into an opposite-direction lane are
/// encroachments; junction traversals take their connection's turn label;
/// everything else is lane-following. Segments cover the trace and adjacent
/// segments have distinct patterns.
BehavioralSequence extract_behavioral_sequence(const sim::TimedTrace& trace,
                                               const mapsem::MapGraph& map);

std::string sequence_signature(const BehavioralSequence& seq);

struct CollisionPoint {
  geom::Vec2 position;
  double t = 0.0;  // ego arrival time in the source trace
  Pattern source = Pattern::LANE_FOLLOWING;
  std::size_t segment_index = 0;
  std::string label;

  // placement context captured at extraction time
  std::string lane;          // ego lane at the point (pre-change lane for changes)
  std::string junction;      // turns only
  std::string approach_road; // turns only
  bool toward_travel_right = false;  // lane changes / encroachments
  std::string source_signature;      // sequence the point was extracted from
};

/// Targeted collision points: lane changes and encroachments yield the first
/// center-crossing of the boundary, turns the junction entry, lane-following
/// the 1/3 and 2/3 arc-length positions.
std::vector<CollisionPoint> extract_collision_points(const BehavioralSequence& seq,
                                                     const sim::TimedTrace& trace,
                                                     const mapsem::MapGraph& map);

struct PerturbOptions {
  double delta = 10.0;      // m, half-width of the distance domain
  double step0 = 4.0;       // m, initial search step
  double step_min = 0.25;   // m, interval-collapse threshold
  double eps_early = 0.5;   // s
  double eps_late = 0.5;    // s
  int max_iters = 12;       // per targeted point
  double npc_speed = -1.0;  // m/s; <0 means the spawn lane's speed limit
  double brake_decel = 4.0; // m/s^2 for abrupt-brake spawns
  double sim_budget_s = 40.0;
  double arrival_tolerance = 1.5;  // m, for t_npc / t_ego measurements
};

/// A base scenario plus one spawned-NPC template whose free parameter is the
/// initial path distance d between the NPC and the targeted collision point,
/// with domain [d_lo, d_hi] around v*t.
struct ParameterizedScenario {
  concretize::ConcreteScenario base;
  CollisionPoint point;
  std::vector<std::string> npc_route;  // spawn lane, plus the junction exit for turns
  concretize::BehaviorProgram::Kind program_kind = concretize::BehaviorProgram::Kind::FOLLOW_LANE;
  double npc_speed = 10.0;
  double point_path_s = 0.0;  // arc length of the point along the NPC route
  double brake_decel = 4.0;
  double d_lo = 0.0;
  double d_hi = 0.0;
  std::string expected_signature;  // sequence expected when nothing changes

  /// Concrete scenario with the NPC placed d meters (along its path) before
  /// the targeted point.
  concretize::ConcreteScenario realize(double d) const;
};

/// Builds the spawn template for a point using the pattern's strategy table.
/// Throws NoLegalPlacement when the required lane does not exist and
/// std::invalid_argument when headroom < 1.
ParameterizedScenario build_parameterized_scenario(const CollisionPoint& point,
                                                   const concretize::ConcreteScenario& base,
                                                   const mapsem::MapGraph& map, int headroom,
                                                   const PerturbOptions& opts = {});

/// One simulation of a parameterized scenario at a given distance.
struct ProbeResult {
  double t_npc = 1e18;  // time the NPC first reaches the point
  double t_ego = 1e18;  // time the ego first reaches the point
  bool safety_critical = false;
  bool performance = false;
  bool sequence_differs = false;  // vs. the base scenario's sequence
  std::string sequence;
  std::shared_ptr<sim::TimedTrace> trace;
  std::shared_ptr<kpi::KpiReport> report;
};

class ScenarioProbe {
 public:
  virtual ~ScenarioProbe() = default;
  virtual ProbeResult evaluate(const ParameterizedScenario& ps, double d) = 0;
};

/// Real probe: simulate, score, extract the behavioral sequence.
class SimulationProbe : public ScenarioProbe {
 public:
  SimulationProbe(const mapsem::MapGraph& map, sim::EgoController& controller,
                  const kpi::KpiThresholds& thresholds, const PerturbOptions& opts,
                  std::string base_signature);
  ProbeResult evaluate(const ParameterizedScenario& ps, double d) override;

 private:
  const mapsem::MapGraph& map_;
  sim::EgoController& controller_;
  kpi::KpiThresholds thresholds_;
  PerturbOptions opts_;
  std::string base_signature_;
};

enum class SearchOutcome { VIOLATION, NEW_SEQUENCE, EXHAUSTED };

struct IterationRecord {
  double d = 0.0;
  double t_npc = 1e18;
  double t_ego = 1e18;
  bool safety_critical = false;
  bool performance = false;
  bool sequence_differs = false;
  std::shared_ptr<sim::TimedTrace> trace;
  std::shared_ptr<kpi::KpiReport> report;
};

struct SearchResult {
  SearchOutcome outcome = SearchOutcome::EXHAUSTED;
  double d = 0.0;
  std::shared_ptr<sim::TimedTrace> trace;
  std::shared_ptr<kpi::KpiReport> report;
  int simulations = 0;
};

/// Timing-guided search over d: starts at v*t, moves the start point earlier
/// or later depending on whether the NPC crosses the targeted point too early
/// or too late, halving the step on direction reversals and clamping to the
/// domain. Stops on a safety-critical violation, a changed behavioral
/// sequence, interval collapse, or max_iters.
SearchResult search_parameter(const ParameterizedScenario& ps, ScenarioProbe& probe,
                              const PerturbOptions& opts, int max_iters,
                              const std::function<void(const IterationRecord&)>& on_iteration = {});

/// Convenience overload running the real simulator.
SearchResult search_parameter(const ParameterizedScenario& ps, const mapsem::MapGraph& map,
                              sim::EgoController& controller, const kpi::KpiThresholds& thresholds,
                              int max_iters, const PerturbOptions& opts = {});

struct QueueItem {
  CollisionPoint point;
  int rank = 0;
  std::uint64_t order = 0;  // insertion tiebreak
};

struct FoundViolation {
  CollisionPoint point;
  double d = 0.0;
  concretize::ConcreteScenario scenario;
  std::shared_ptr<sim::TimedTrace> trace;
  std::shared_ptr<kpi::KpiReport> report;
};

struct SearchLogEntry {
  std::string point;
  double d = 0.0;
  double t_npc = 1e18;
  double t_ego = 1e18;
  std::string outcome;  // violation | new-sequence | early | late | in-band | skip
  bool safety_critical = false;
  bool performance = false;
  std::shared_ptr<kpi::KpiReport> report;  // null for skip entries
};

struct SearchState {
  std::vector<QueueItem> queue;          // remaining, best-first
  std::set<std::string> visited;         // behavioral sequence signatures
  int budget_remaining = 0;
  std::vector<FoundViolation> violations;
  std::vector<SearchLogEntry> log;
  int simulations_run = 0;
};

/// Environment seam for the meta search; production code wraps the real
/// simulator, tests drive the loop with doubles.
class MetaEnv {
 public:
  virtual ~MetaEnv() = default;
  virtual std::shared_ptr<sim::TimedTrace> simulate_base() = 0;  // one simulation
  virtual BehavioralSequence extract(const sim::TimedTrace& trace) = 0;
  virtual std::vector<CollisionPoint> points(const BehavioralSequence& seq,
                                             const sim::TimedTrace& trace) = 0;
  virtual ParameterizedScenario build(const CollisionPoint& point) = 0;  // may throw NoLegalPlacement
  virtual ProbeResult probe(const ParameterizedScenario& ps, double d) = 0;  // one simulation
};

/// Priority-queue exploration over targeted collision points with a hard
/// simulation budget. Safety-critical findings stop the search; new
/// behavioral sequences enqueue their own points once; revisited sequences
/// are not explored again.
SearchState meta_search_core(MetaEnv& env, int budget, const PerturbOptions& opts = {});

SearchState meta_search(const concretize::ConcreteScenario& base, const mapsem::MapGraph& map,
                        sim::EgoController& controller, int budget,
                        const kpi::KpiThresholds& thresholds = {}, const PerturbOptions& opts = {});

std::string search_log_text(const SearchState& state);

}  // namespace scenforge::perturb
