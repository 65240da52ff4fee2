#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace scenforge::catalog {

struct Category {
  std::string name;
  std::vector<std::string> elements;
};

struct Atom {
  int category = -1;
  int element = -1;
};

/// Propositional formula over category.element atoms with !, &, | and ->.
/// Evaluation against a partial assignment is three-valued; UNKNOWN means the
/// truth value still depends on unassigned categories.
class Formula {
 public:
  enum class Kind { ATOM, NOT, AND, OR, IMPLIES };
  enum class Truth { FALSE, TRUE, UNKNOWN };

  static Formula make_atom(Atom a);
  static Formula make_not(Formula f);
  static Formula make_and(Formula l, Formula r);
  static Formula make_or(Formula l, Formula r);
  static Formula make_implies(Formula l, Formula r);

  Kind kind() const { return kind_; }
  const Atom& atom() const { return atom_; }
  const std::vector<Formula>& children() const { return kids_; }

  /// assignment[i] is the chosen element index of category i, or -1.
  Truth eval(std::span<const int> assignment) const;

 private:
  Kind kind_ = Kind::ATOM;
  Atom atom_;
  std::vector<Formula> kids_;
};

struct Constraint {
  std::string text;  // source form, kept for round-tripping and reports
  Formula formula;
};

/// Partial or total assignment: element index per category, -1 = unassigned.
using Assignment = std::vector<int>;

/// A total, constraint-satisfying assignment in name form. Kept in catalog
/// category order so serialization is stable.
struct AbstractScenario {
  std::vector<std::pair<std::string, std::string>> assignment;

  const std::string* element_of(std::string_view category) const;
  std::string to_json() const;
  static AbstractScenario from_json(std::string_view text);
};

/// Parses the constraint grammar `atom := name '.' name` with operators
/// `!`, `&`, `|`, `->` and parentheses, resolving atoms against the catalog.
/// Errors carry a column within the constraint string.
class Catalog {
 public:
  Catalog() = default;
  Catalog(std::vector<Category> categories, std::vector<std::string> constraint_texts);

  /// Parses catalog file contents (JSON: categories + constraint strings).
  static Catalog parse(std::string_view text);

  const std::vector<Category>& categories() const { return categories_; }
  const std::vector<Constraint>& constraints() const { return constraints_; }
  std::size_t category_count() const { return categories_.size(); }

  int category_index(std::string_view name) const;  // -1 when missing
  int element_index(int category, std::string_view name) const;

  /// Returns a copy with one extra constraint appended (catalogs themselves
  /// are immutable once built).
  Catalog with_constraint(const std::string& text) const;
  Catalog with_blocked_assignment(const Assignment& total) const;

  Assignment to_indices(const AbstractScenario& s) const;
  AbstractScenario to_scenario(const Assignment& total) const;

  std::string to_json() const;

 private:
  std::vector<Category> categories_;
  std::vector<Constraint> constraints_;
  std::map<std::string, int, std::less<>> category_index_;

  Formula parse_constraint(std::string_view text, int constraint_index) const;
  void finish_init();
};

/// True for a total assignment iff all constraints hold; true for a partial
/// assignment iff some constraint-satisfying total extension exists (decided
/// by exhaustive extension search).
bool is_feasible(const Catalog& cat, const Assignment& assignment);

bool satisfies_all(const Catalog& cat, const Assignment& total);

/// One k-way element tuple: categories are sorted ascending, elements are the
/// chosen element index per listed category.
struct TupleKey {
  std::vector<int> categories;
  std::vector<int> elements;
  auto operator<=>(const TupleKey&) const = default;
};

std::vector<TupleKey> enumerate_feasible_tuples(const Catalog& cat, int k);

/// Feasible k-tuples and which of them have been covered so far.
class CoverageModel {
 public:
  static CoverageModel build(const Catalog& cat, int k);

  int k() const { return k_; }
  std::size_t feasible_count() const { return feasible_total_; }
  std::size_t covered_count() const { return covered_total_; }

  bool is_feasible_tuple(const TupleKey& key) const;
  bool is_covered(const TupleKey& key) const;

  /// Number of feasible-but-uncovered tuples the total assignment would cover.
  int gain(const Assignment& total) const;
  void mark_covered(const Assignment& total);

  std::vector<TupleKey> feasible_tuples() const;

  /// Per category-subset bookkeeping, for coverage reports.
  struct SubsetStat {
    std::vector<int> categories;
    std::size_t feasible = 0;
    std::size_t covered = 0;
  };
  std::vector<SubsetStat> subset_stats() const;

  // Internals shared with the generator's branch-and-bound.
  struct Table {
    std::vector<int> categories;   // ascending
    std::vector<int> radix;        // element counts per listed category
    std::vector<std::uint8_t> feasible;
    std::vector<std::uint8_t> covered;
    std::size_t uncovered_feasible = 0;
    std::size_t index_of(const Assignment& a) const;  // requires all assigned
  };
  const std::vector<Table>& tables() const { return tables_; }

 private:
  int k_ = 2;
  std::vector<Table> tables_;
  std::size_t feasible_total_ = 0;
  std::size_t covered_total_ = 0;
  const Table* find_table(const std::vector<int>& cats) const;
};

struct CoverageRatio {
  std::size_t covered = 0;
  std::size_t feasible = 0;
  double value() const { return feasible == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(feasible); }
};

/// Ratio of feasible tuples covered by the scenario list; duplicates count
/// once. The model argument is taken by value: the caller's copy is untouched.
CoverageRatio coverage_ratio(const Catalog& cat, const std::vector<AbstractScenario>& scenarios, CoverageModel model);

}  // namespace scenforge::catalog
