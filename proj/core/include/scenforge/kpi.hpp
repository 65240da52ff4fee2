#pragma once

#include <map>
#include <string>
#include <vector>

#include "scenforge/concretize.hpp"
#include "scenforge/mapsem.hpp"
#include "scenforge/simcore.hpp"

namespace scenforge::kpi {

struct KpiThresholds {
  double too_close = 0.5;          // m, surface-to-surface
  double harsh_brake = -3.0;       // m/s^2
  double harsh_accel = 3.0;        // m/s^2
  double lateral_jerk = 2.5;       // m/s^3
  double route_progress_min = 0.95;

  std::string to_json() const;
  static KpiThresholds from_json(std::string_view text);
};

struct KpiEvent {
  double t = 0.0;
  std::vector<std::string> agents;
  double value = 0.0;
};

struct KpiVerdict {
  bool violated = false;
  std::vector<KpiEvent> events;
};

/// KPI names, in report order: collision, too_close, harsh_brake,
/// harsh_accel, lateral_jerk, route_deviation, signal_violation.
struct KpiReport {
  std::map<std::string, KpiVerdict> verdicts;
  bool safety_critical = false;  // collision or too_close
  bool performance = false;      // any other violation
  double route_progress = 0.0;

  bool problematic() const { return safety_critical || performance; }
  const KpiVerdict& verdict(const std::string& name) const;

  std::string to_json() const;
  static KpiReport from_json(std::string_view text);
};

/// Scores one trace. Pure; the map must be the one the scenario references.
KpiReport evaluate(const sim::TimedTrace& trace, const concretize::ConcreteScenario& scenario,
                   const mapsem::MapGraph& map, const KpiThresholds& thresholds = {});

}  // namespace scenforge::kpi
