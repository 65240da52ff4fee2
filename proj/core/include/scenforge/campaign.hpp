#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scenforge/kpi.hpp"
#include "scenforge/perturb.hpp"

namespace scenforge::campaign {

struct CampaignConfig {
  std::string catalog_file;
  std::string map_file;
  std::string parameter_map_file;
  std::string thresholds_file;  // optional; defaults apply when empty
  int k = 2;
  int num_abstract = 15;
  int instantiations = 3;
  std::uint64_t seed = 1;
  double sim_budget_s = 60.0;
  int perturb_budget = 30;
  bool perturb_all = true;  // false: skip base scenarios that already violate
  std::string controller = "baseline";
  std::string out_dir;
  int jobs = 1;

  static CampaignConfig from_json(std::string_view text, const std::string& base_dir = "");
  std::string to_json() const;
};

struct CampaignRow {
  int total = 0;
  int problematic = 0;
  int safety_critical = 0;
  int performance = 0;
};

struct ScenarioRecord {
  std::string id;
  std::string kind;  // "base" or "perturbed"
  std::string abstract_id;
  std::string scenario_path;
  std::string trace_path;
  std::string report_path;
  bool safety_critical = false;
  bool performance = false;
};

struct CampaignReport {
  CampaignRow base;
  CampaignRow perturbed;
  std::vector<ScenarioRecord> index;
  std::vector<std::string> failures;  // itemized instantiation failures

  std::string to_json() const;
  std::string to_text() const;  // aligned summary table
};

/// Full pipeline: generate the abstract suite (blocking unrealizable
/// assignments and regenerating), instantiate each abstract scenario
/// `instantiations` times, simulate, score, perturb, and persist every
/// artifact under deterministic names in out_dir.
CampaignReport run_campaign(const CampaignConfig& config);

}  // namespace scenforge::campaign
