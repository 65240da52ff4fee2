#pragma once

#include <functional>
#include <set>
#include <vector>

#include "scenforge/catalog.hpp"

namespace scenforge::test {

/// Plain enumeration over all total assignments. Independent of the
/// three-valued pruning used by the implementation.
inline void for_each_total(const catalog::Catalog& cat,
                           const std::function<void(const catalog::Assignment&)>& fn) {
  catalog::Assignment a(cat.category_count(), 0);
  while (true) {
    fn(a);
    std::size_t i = 0;
    while (i < a.size()) {
      a[i] += 1;
      if (a[i] < static_cast<int>(cat.categories()[i].elements.size())) break;
      a[i] = 0;
      ++i;
    }
    if (i == a.size()) break;
  }
}

inline bool oracle_total_feasible(const catalog::Catalog& cat, const catalog::Assignment& total) {
  for (const auto& c : cat.constraints()) {
    if (c.formula.eval(total) != catalog::Formula::Truth::TRUE) return false;
  }
  return true;
}

/// Brute-force partial feasibility: some total extension satisfies all
/// constraints.
inline bool oracle_partial_feasible(const catalog::Catalog& cat, const catalog::Assignment& partial) {
  bool found = false;
  for_each_total(cat, [&](const catalog::Assignment& total) {
    if (found) return;
    for (std::size_t i = 0; i < partial.size(); ++i) {
      if (partial[i] >= 0 && partial[i] != total[i]) return;
    }
    if (oracle_total_feasible(cat, total)) found = true;
  });
  return found;
}

/// Brute-force feasible k-tuple enumeration.
inline std::set<catalog::TupleKey> oracle_feasible_tuples(const catalog::Catalog& cat, int k) {
  std::set<catalog::TupleKey> out;
  int n = static_cast<int>(cat.category_count());
  std::vector<int> combo;
  std::function<void(int)> rec = [&](int start) {
    if (static_cast<int>(combo.size()) == k) {
      std::vector<int> elems(combo.size(), 0);
      std::function<void(std::size_t)> fill = [&](std::size_t depth) {
        if (depth == combo.size()) {
          catalog::Assignment partial(cat.category_count(), -1);
          for (std::size_t i = 0; i < combo.size(); ++i) {
            partial[static_cast<std::size_t>(combo[i])] = elems[i];
          }
          if (oracle_partial_feasible(cat, partial)) {
            out.insert({combo, elems});
          }
          return;
        }
        std::size_t sz = cat.categories()[static_cast<std::size_t>(combo[depth])].elements.size();
        for (std::size_t e = 0; e < sz; ++e) {
          elems[depth] = static_cast<int>(e);
          fill(depth + 1);
        }
      };
      fill(0);
      return;
    }
    for (int c = start; c < n; ++c) {
      combo.push_back(c);
      rec(c + 1);
      combo.pop_back();
    }
  };
  rec(0);
  return out;
}

/// Brute-force maximum gain over all feasible total assignments.
inline int oracle_max_gain(const catalog::Catalog& cat, const catalog::CoverageModel& model) {
  int best = -1;
  for_each_total(cat, [&](const catalog::Assignment& total) {
    if (!oracle_total_feasible(cat, total)) return;
    best = std::max(best, model.gain(total));
  });
  return best;
}

}  // namespace scenforge::test
