#include "scenforge/covgen.hpp"

#include <algorithm>

#include "json.hpp"

namespace scenforge::covgen {

using catalog::Assignment;
using catalog::CoverageModel;
using catalog::Formula;

GenerationState::GenerationState(catalog::Catalog cat, int k)
    : cat_(std::move(cat)), k_(k), model_(CoverageModel::build(cat_, k)) {}

namespace {

// Exact maximizer. DFS in declaration order so the first assignment reaching
// the best gain is also the lexicographically smallest one; the prune uses an
// admissible bound (exact contribution of fully-assigned subsets plus one per
// still-open subset with uncovered tuples), so optimality is preserved.
struct BranchAndBound {
  const catalog::Catalog& cat;
  const CoverageModel& model;
  Assignment current;
  Assignment best;
  int best_gain = 0;
  bool found = false;

  BranchAndBound(const catalog::Catalog& c, const CoverageModel& m)
      : cat(c), model(m), current(c.category_count(), -1) {}

  int bound() const {
    int b = 0;
    for (const auto& t : model.tables()) {
      bool determined = true;
      for (int ci : t.categories) {
        if (current[static_cast<std::size_t>(ci)] < 0) {
          determined = false;
          break;
        }
      }
      if (determined) {
        std::size_t idx = t.index_of(current);
        if (t.feasible[idx] && !t.covered[idx]) ++b;
      } else if (t.uncovered_feasible > 0) {
        ++b;
      }
    }
    return b;
  }

  void search(std::size_t depth) {
    for (const auto& c : cat.constraints()) {
      if (c.formula.eval(current) == Formula::Truth::FALSE) return;
    }
    if (found && bound() <= best_gain) return;
    if (depth == current.size()) {
      int g = model.gain(current);
      if (!found || g > best_gain) {
        found = true;
        best_gain = g;
        best = current;
      }
      return;
    }
    std::size_t n = cat.categories()[depth].elements.size();
    for (std::size_t e = 0; e < n; ++e) {
      current[depth] = static_cast<int>(e);
      search(depth + 1);
    }
    current[depth] = -1;
  }
};

}  // namespace

std::optional<Assignment> GenerationState::best_assignment(int* out_gain) const {
  BranchAndBound bb(cat_, model_);
  bb.search(0);
  if (!bb.found || bb.best_gain <= 0) return std::nullopt;
  *out_gain = bb.best_gain;
  return bb.best;
}

std::optional<Assignment> GenerationState::greedy_assignment(int* out_gain) const {
  // Category-by-category: at each depth pick the element maximizing the bound
  // of the resulting partial assignment. Fast, not optimal.
  Assignment a(cat_.category_count(), -1);
  for (std::size_t depth = 0; depth < a.size(); ++depth) {
    int best_elem = -1;
    int best_score = -1;
    std::size_t n = cat_.categories()[depth].elements.size();
    for (std::size_t e = 0; e < n; ++e) {
      a[depth] = static_cast<int>(e);
      bool contradict = false;
      for (const auto& c : cat_.constraints()) {
        if (c.formula.eval(a) == Formula::Truth::FALSE) {
          contradict = true;
          break;
        }
      }
      if (contradict) continue;
      if (!catalog::is_feasible(cat_, a)) continue;
      int score = 0;
      for (const auto& t : model_.tables()) {
        bool determined = true;
        for (int ci : t.categories) {
          if (a[static_cast<std::size_t>(ci)] < 0) {
            determined = false;
            break;
          }
        }
        if (determined) {
          std::size_t idx = t.index_of(a);
          if (t.feasible[idx] && !t.covered[idx]) ++score;
        } else if (t.uncovered_feasible > 0) {
          ++score;
        }
      }
      if (score > best_score) {
        best_score = score;
        best_elem = static_cast<int>(e);
      }
    }
    if (best_elem < 0) return std::nullopt;
    a[depth] = best_elem;
  }
  int g = model_.gain(a);
  if (g <= 0) return std::nullopt;
  *out_gain = g;
  return a;
}

std::optional<Emission> GenerationState::next_scenario() {
  if (model_.covered_count() == model_.feasible_count()) {
    exhausted_ = true;
    return std::nullopt;
  }
  int gain = 0;
  std::optional<Assignment> a = greedy_ ? greedy_assignment(&gain) : best_assignment(&gain);
  if (!a) {
    exhausted_ = true;
    return std::nullopt;
  }
  model_.mark_covered(*a);
  Emission em{cat_.to_scenario(*a), gain};
  emitted_.push_back(em.scenario);
  if (model_.covered_count() == model_.feasible_count()) exhausted_ = true;
  return em;
}

void GenerationState::mark_covered(const catalog::AbstractScenario& scenario) {
  model_.mark_covered(cat_.to_indices(scenario));
  exhausted_ = model_.covered_count() == model_.feasible_count();
}

void GenerationState::add_blocking_constraint(const catalog::AbstractScenario& scenario) {
  Assignment total = cat_.to_indices(scenario);
  cat_ = cat_.with_blocked_assignment(total);
  // Re-derive feasibility, keeping covered marks for tuples that survive.
  catalog::CoverageModel fresh = CoverageModel::build(cat_, k_);
  for (const auto& s : emitted_) {
    Assignment a = cat_.to_indices(s);
    fresh.mark_covered(a);
  }
  model_ = std::move(fresh);
  exhausted_ = model_.covered_count() == model_.feasible_count();
}

std::vector<catalog::AbstractScenario> generate_suite(const catalog::Catalog& cat, int k,
                                                      std::optional<int> limit, bool greedy) {
  GenerationState state(cat, k);
  state.set_greedy(greedy);
  std::vector<catalog::AbstractScenario> out;
  while (!limit || static_cast<int>(out.size()) < *limit) {
    auto em = state.next_scenario();
    if (!em) break;
    out.push_back(em->scenario);
  }
  return out;
}

std::string coverage_report_json(const catalog::Catalog& cat,
                                 const std::vector<catalog::AbstractScenario>& suite, int k) {
  catalog::CoverageModel model = catalog::CoverageModel::build(cat, k);
  for (const auto& s : suite) model.mark_covered(cat.to_indices(s));

  nlohmann::ordered_json j;
  j["k"] = k;
  j["scenarios"] = suite.size();
  j["feasible_tuples"] = model.feasible_count();
  j["covered_tuples"] = model.covered_count();
  j["coverage"] = model.feasible_count() == 0
                      ? 0.0
                      : static_cast<double>(model.covered_count()) / static_cast<double>(model.feasible_count());
  j["subsets"] = nlohmann::ordered_json::array();
  for (const auto& s : model.subset_stats()) {
    nlohmann::ordered_json js;
    js["categories"] = nlohmann::ordered_json::array();
    for (int ci : s.categories) js["categories"].push_back(cat.categories()[static_cast<std::size_t>(ci)].name);
    js["feasible"] = s.feasible;
    js["covered"] = s.covered;
    j["subsets"].push_back(std::move(js));
  }
  return j.dump(2) + "\n";
}

}  // namespace scenforge::covgen
