#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scenforge/catalog.hpp"

namespace scenforge::covgen {

struct Emission {
  catalog::AbstractScenario scenario;
  int gain = 0;
};

/// Iteratively emits feasible abstract scenarios that maximize the number of
/// newly covered k-tuples. The maximizer is an exact branch-and-bound over
/// category assignments; ties go to the lexicographically first assignment in
/// declaration order. A greedy category-by-category mode is available for
/// large catalogs and is not optimal.
class GenerationState {
 public:
  GenerationState(catalog::Catalog cat, int k);

  const catalog::Catalog& current_catalog() const { return cat_; }
  const catalog::CoverageModel& model() const { return model_; }
  const std::vector<catalog::AbstractScenario>& emitted() const { return emitted_; }
  bool exhausted() const { return exhausted_; }

  /// Returns the next scenario with its gain, or nullopt when every feasible
  /// tuple is covered (the completion signal).
  std::optional<Emission> next_scenario();

  /// Blocks the exact assignment from ever being emitted again and re-derives
  /// the feasible tuple set.
  void add_blocking_constraint(const catalog::AbstractScenario& scenario);

  /// Marks a scenario covered without emitting it (seeding from externally
  /// executed scenarios).
  void mark_covered(const catalog::AbstractScenario& scenario);

  void set_greedy(bool greedy) { greedy_ = greedy; }

 private:
  catalog::Catalog cat_;
  int k_;
  catalog::CoverageModel model_;
  std::vector<catalog::AbstractScenario> emitted_;
  bool exhausted_ = false;
  bool greedy_ = false;

  std::optional<catalog::Assignment> best_assignment(int* out_gain) const;
  std::optional<catalog::Assignment> greedy_assignment(int* out_gain) const;
};

/// Runs next_scenario until `limit` scenarios were produced or coverage is
/// complete; nullopt limit means run to full coverage.
std::vector<catalog::AbstractScenario> generate_suite(const catalog::Catalog& cat, int k,
                                                      std::optional<int> limit,
                                                      bool greedy = false);

/// Coverage report after a suite: per category-subset covered/feasible plus
/// the overall ratio.
std::string coverage_report_json(const catalog::Catalog& cat,
                                 const std::vector<catalog::AbstractScenario>& suite, int k);

}  // namespace scenforge::covgen
