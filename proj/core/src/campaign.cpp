#include "scenforge/campaign.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

#include "scenforge/covgen.hpp"
#include "scenforge/errors.hpp"
#include "scenforge/rng.hpp"
#include "json.hpp"

namespace scenforge::campaign {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty() || base_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).string();
}

}  // namespace

CampaignConfig CampaignConfig::from_json(std::string_view text, const std::string& base_dir) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("campaign config: ") + e.what());
  }
  CampaignConfig c;
  c.catalog_file = resolve(base_dir, j.at("catalog").get<std::string>());
  c.map_file = resolve(base_dir, j.at("map").get<std::string>());
  c.parameter_map_file = resolve(base_dir, j.at("parameter_map").get<std::string>());
  if (j.contains("thresholds")) c.thresholds_file = resolve(base_dir, j["thresholds"].get<std::string>());
  c.k = j.value("k", 2);
  c.num_abstract = j.value("num_abstract", 15);
  c.instantiations = j.value("instantiations", 3);
  c.seed = j.value("seed", 1ULL);
  c.sim_budget_s = j.value("sim_budget_s", 60.0);
  c.perturb_budget = j.value("perturb_budget", 30);
  c.perturb_all = j.value("perturb_all", true);
  c.controller = j.value("controller", std::string("baseline"));
  if (j.contains("out_dir")) c.out_dir = resolve(base_dir, j["out_dir"].get<std::string>());
  c.jobs = j.value("jobs", 1);
  if (c.k < 1 || c.num_abstract < 1 || c.instantiations < 1 || c.perturb_budget < 1 || c.jobs < 1) {
    throw ParseError("campaign config: counts must be >= 1");
  }
  return c;
}

std::string CampaignConfig::to_json() const {
  ordered_json j;
  j["catalog"] = catalog_file;
  j["map"] = map_file;
  j["parameter_map"] = parameter_map_file;
  if (!thresholds_file.empty()) j["thresholds"] = thresholds_file;
  j["k"] = k;
  j["num_abstract"] = num_abstract;
  j["instantiations"] = instantiations;
  j["seed"] = seed;
  j["sim_budget_s"] = sim_budget_s;
  j["perturb_budget"] = perturb_budget;
  j["perturb_all"] = perturb_all;
  j["controller"] = controller;
  j["out_dir"] = out_dir;
  j["jobs"] = jobs;
  return j.dump(2) + "\n";
}

std::string CampaignReport::to_json() const {
  ordered_json j;
  auto row = [](const CampaignRow& r) {
    return ordered_json{{"total", r.total},
                        {"problematic", r.problematic},
                        {"safety_critical", r.safety_critical},
                        {"performance", r.performance}};
  };
  j["base"] = row(base);
  j["perturbed"] = row(perturbed);
  j["index"] = ordered_json::array();
  for (const ScenarioRecord& r : index) {
    j["index"].push_back({{"id", r.id},
                          {"kind", r.kind},
                          {"abstract", r.abstract_id},
                          {"scenario", r.scenario_path},
                          {"trace", r.trace_path},
                          {"report", r.report_path},
                          {"safety_critical", r.safety_critical},
                          {"performance", r.performance}});
  }
  j["failures"] = failures;
  return j.dump(2) + "\n";
}

std::string CampaignReport::to_text() const {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-10s %8s %12s %16s %12s\n", "types", "total", "problematic",
                "safety-critical", "performance");
  os << buf;
  auto line = [&](const char* name, const CampaignRow& r) {
    std::snprintf(buf, sizeof buf, "%-10s %8d %12d %16d %12d\n", name, r.total, r.problematic,
                  r.safety_critical, r.performance);
    os << buf;
  };
  line("base", base);
  line("perturbed", perturbed);
  if (!failures.empty()) os << failures.size() << " instantiation failure(s); see report.json\n";
  return os.str();
}

namespace {

struct PipelineResult {
  std::vector<ScenarioRecord> records;
  std::vector<std::string> failures;
};

struct PipelineTask {
  const CampaignConfig* config;
  const mapsem::MapGraph* map;
  const concretize::ParameterMap* pmap;
  const kpi::KpiThresholds* thresholds;
  catalog::AbstractScenario abstract;
  std::string abstract_id;
  int instantiation = 0;
  std::uint64_t seed = 0;
  fs::path out;
};

std::string fmt_sim_index(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%03d", i);
  return buf;
}

PipelineResult run_pipeline(const PipelineTask& task) {
  PipelineResult result;
  const std::string tag = task.abstract_id + "-" + std::to_string(task.instantiation);
  const std::string base_id = "base-" + tag;

  concretize::ConcreteScenario scenario;
  try {
    scenario = concretize::instantiate(task.abstract, *task.map, *task.pmap, task.seed);
  } catch (const std::exception& e) {
    result.failures.push_back(base_id + ": " + e.what());
    return result;
  }
  scenario.id = base_id;
  scenario.map_ref = task.config->map_file;

  fs::path scn_path = task.out / "base" / (tag + ".scenario.json");
  write_file(scn_path, scenario.to_json());

  auto controller = sim::make_controller(task.config->controller);
  sim::TimedTrace trace = sim::run(scenario, *task.map, *controller, task.config->sim_budget_s);
  fs::path trace_path = task.out / "base" / (tag + ".trace");
  write_file(trace_path, trace.serialize());

  kpi::KpiReport report = kpi::evaluate(trace, scenario, *task.map, *task.thresholds);
  fs::path report_path = task.out / "base" / (tag + ".report.json");
  write_file(report_path, report.to_json());

  ScenarioRecord rec;
  rec.id = base_id;
  rec.kind = "base";
  rec.abstract_id = task.abstract_id;
  rec.scenario_path = scn_path.string();
  rec.trace_path = trace_path.string();
  rec.report_path = report_path.string();
  rec.safety_critical = report.safety_critical;
  rec.performance = report.performance;
  result.records.push_back(rec);

  if (!task.config->perturb_all && report.problematic()) return result;

  perturb::PerturbOptions popts;
  popts.sim_budget_s = task.config->sim_budget_s;
  perturb::SearchState state =
      perturb::meta_search(scenario, *task.map, *controller, task.config->perturb_budget,
                           *task.thresholds, popts);
  write_file(task.out / "perturbed" / (tag + ".log"), perturb::search_log_text(state));

  int sim_idx = 0;
  std::size_t last_entry_with_sim = 0;
  for (std::size_t i = 0; i < state.log.size(); ++i) {
    if (state.log[i].outcome != "skip") last_entry_with_sim = i;
  }
  for (std::size_t i = 0; i < state.log.size(); ++i) {
    const perturb::SearchLogEntry& e = state.log[i];
    if (e.outcome == "skip" || !e.report) continue;
    ++sim_idx;
    const std::string pid = "perturbed-" + tag + "-" + fmt_sim_index(sim_idx);
    fs::path rp = task.out / "perturbed" / (tag + "-" + fmt_sim_index(sim_idx) + ".report.json");
    write_file(rp, e.report->to_json());
    ScenarioRecord pr;
    pr.id = pid;
    pr.kind = "perturbed";
    pr.abstract_id = task.abstract_id;
    pr.report_path = rp.string();
    pr.safety_critical = e.safety_critical;
    pr.performance = e.performance;
    if (e.outcome == "violation" && i == last_entry_with_sim && !state.violations.empty()) {
      const perturb::FoundViolation& v = state.violations.front();
      fs::path vs = task.out / "perturbed" / (tag + "-" + fmt_sim_index(sim_idx) + ".scenario.json");
      write_file(vs, v.scenario.to_json());
      pr.scenario_path = vs.string();
      if (v.trace) {
        fs::path vt = task.out / "perturbed" / (tag + "-" + fmt_sim_index(sim_idx) + ".trace");
        write_file(vt, v.trace->serialize());
        pr.trace_path = vt.string();
      }
    }
    result.records.push_back(std::move(pr));
  }
  return result;
}

}  // namespace

CampaignReport run_campaign(const CampaignConfig& config) {
  CampaignReport report;
  fs::path out(config.out_dir.empty() ? "campaign-out" : config.out_dir);
  try {
    fs::create_directories(out / "abstract");
    fs::create_directories(out / "base");
    fs::create_directories(out / "perturbed");

    catalog::Catalog cat = catalog::Catalog::parse(read_file(config.catalog_file));
    mapsem::MapGraph map = mapsem::MapGraph::parse(read_file(config.map_file));
    concretize::ParameterMap pmap = concretize::ParameterMap::parse(read_file(config.parameter_map_file));
    kpi::KpiThresholds thresholds;
    if (!config.thresholds_file.empty()) {
      thresholds = kpi::KpiThresholds::from_json(read_file(config.thresholds_file));
    }

    // abstract suite, blocking unrealizable assignments and regenerating
    covgen::GenerationState gen(cat, config.k);
    std::vector<catalog::AbstractScenario> abstracts;
    while (static_cast<int>(abstracts.size()) < config.num_abstract) {
      auto em = gen.next_scenario();
      if (!em) break;
      try {
        concretize::instantiate(em->scenario, map, pmap,
                                Rng::derive(config.seed, 0x5afe0000ULL + abstracts.size()));
      } catch (const ScenarioUnrealizable&) {
        gen.add_blocking_constraint(em->scenario);
        continue;
      } catch (const PlacementExhausted&) {
        // structural fit is fine; the real seed may still place agents
      }
      abstracts.push_back(em->scenario);
    }

    std::vector<std::string> abstract_ids;
    for (std::size_t i = 0; i < abstracts.size(); ++i) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "A%02d", static_cast<int>(i) + 1);
      abstract_ids.emplace_back(buf);
      write_file(out / "abstract" / (abstract_ids.back() + ".json"), abstracts[i].to_json());
    }
    write_file(out / "coverage.json", covgen::coverage_report_json(gen.current_catalog(), abstracts, config.k));

    std::vector<PipelineTask> tasks;
    for (std::size_t i = 0; i < abstracts.size(); ++i) {
      for (int j = 0; j < config.instantiations; ++j) {
        PipelineTask t;
        t.config = &config;
        t.map = &map;
        t.pmap = &pmap;
        t.thresholds = &thresholds;
        t.abstract = abstracts[i];
        t.abstract_id = abstract_ids[i];
        t.instantiation = j;
        t.seed = Rng::derive(Rng::derive(config.seed, i + 1), static_cast<std::uint64_t>(j));
        t.out = out;
        tasks.push_back(std::move(t));
      }
    }

    std::vector<PipelineResult> results(tasks.size());
    if (config.jobs <= 1) {
      for (std::size_t i = 0; i < tasks.size(); ++i) results[i] = run_pipeline(tasks[i]);
    } else {
      std::size_t next = 0;
      while (next < tasks.size()) {
        std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(config.jobs), tasks.size() - next);
        std::vector<std::future<PipelineResult>> futs;
        for (std::size_t b = 0; b < batch; ++b) {
          futs.push_back(std::async(std::launch::async, run_pipeline, std::cref(tasks[next + b])));
        }
        for (std::size_t b = 0; b < batch; ++b) results[next + b] = futs[b].get();
        next += batch;
      }
    }

    for (const PipelineResult& r : results) {
      for (const ScenarioRecord& rec : r.records) report.index.push_back(rec);
      for (const std::string& f : r.failures) report.failures.push_back(f);
    }
    std::sort(report.index.begin(), report.index.end(),
              [](const ScenarioRecord& a, const ScenarioRecord& b) { return a.id < b.id; });
    std::sort(report.failures.begin(), report.failures.end());

    for (const ScenarioRecord& rec : report.index) {
      CampaignRow& row = rec.kind == "base" ? report.base : report.perturbed;
      ++row.total;
      if (rec.safety_critical || rec.performance) ++row.problematic;
      if (rec.safety_critical) ++row.safety_critical;
      if (rec.performance) ++row.performance;
    }

    write_file(out / "report.json", report.to_json());
    write_file(out / "report.txt", report.to_text());
  } catch (const std::exception& e) {
    ordered_json manifest;
    manifest["error"] = e.what();
    manifest["completed"] = ordered_json::array();
    for (const ScenarioRecord& rec : report.index) manifest["completed"].push_back(rec.id);
    std::error_code ec;
    fs::create_directories(out, ec);
    std::ofstream mf(out / "manifest.json", std::ios::binary);
    if (mf) mf << manifest.dump(2) << "\n";
    throw;
  }
  return report;
}

}  // namespace scenforge::campaign
