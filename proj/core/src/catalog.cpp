#include "scenforge/catalog.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

#include "scenforge/errors.hpp"
#include "json.hpp"

namespace scenforge::catalog {

using ordered_json = nlohmann::ordered_json;

Formula Formula::make_atom(Atom a) {
  Formula f;
  f.kind_ = Kind::ATOM;
  f.atom_ = a;
  return f;
}

Formula Formula::make_not(Formula f) {
  Formula r;
  r.kind_ = Kind::NOT;
  r.kids_.push_back(std::move(f));
  return r;
}

Formula Formula::make_and(Formula l, Formula r) {
  Formula f;
  f.kind_ = Kind::AND;
  f.kids_.push_back(std::move(l));
  f.kids_.push_back(std::move(r));
  return f;
}

Formula Formula::make_or(Formula l, Formula r) {
  Formula f;
  f.kind_ = Kind::OR;
  f.kids_.push_back(std::move(l));
  f.kids_.push_back(std::move(r));
  return f;
}

Formula Formula::make_implies(Formula l, Formula r) {
  Formula f;
  f.kind_ = Kind::IMPLIES;
  f.kids_.push_back(std::move(l));
  f.kids_.push_back(std::move(r));
  return f;
}

Formula::Truth Formula::eval(std::span<const int> assignment) const {
  using T = Truth;
  switch (kind_) {
    case Kind::ATOM: {
      int chosen = assignment[static_cast<std::size_t>(atom_.category)];
      if (chosen < 0) return T::UNKNOWN;
      return chosen == atom_.element ? T::TRUE : T::FALSE;
    }
    case Kind::NOT: {
      T v = kids_[0].eval(assignment);
      if (v == T::UNKNOWN) return T::UNKNOWN;
      return v == T::TRUE ? T::FALSE : T::TRUE;
    }
    case Kind::AND: {
      T l = kids_[0].eval(assignment), r = kids_[1].eval(assignment);
      if (l == T::FALSE || r == T::FALSE) return T::FALSE;
      if (l == T::TRUE && r == T::TRUE) return T::TRUE;
      return T::UNKNOWN;
    }
    case Kind::OR: {
      T l = kids_[0].eval(assignment), r = kids_[1].eval(assignment);
      if (l == T::TRUE || r == T::TRUE) return T::TRUE;
      if (l == T::FALSE && r == T::FALSE) return T::FALSE;
      return T::UNKNOWN;
    }
    case Kind::IMPLIES: {
      T l = kids_[0].eval(assignment), r = kids_[1].eval(assignment);
      if (l == T::FALSE || r == T::TRUE) return T::TRUE;
      if (l == T::TRUE && r == T::FALSE) return T::FALSE;
      return T::UNKNOWN;
    }
  }
  return T::UNKNOWN;
}

namespace {

// Recursive-descent parser for the constraint grammar. Identifier characters
// are alnum, '_' and '-'; a '-' immediately followed by '>' terminates the
// identifier so `a.x->b.y` lexes as expected.
class ConstraintParser {
 public:
  ConstraintParser(std::string_view text, const Catalog& cat, int constraint_index)
      : text_(text), cat_(cat), constraint_index_(constraint_index) {}

  Formula parse() {
    Formula f = parse_implication();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return f;
  }

 private:
  Formula parse_implication() {
    Formula lhs = parse_disjunction();
    skip_ws();
    if (match("->")) {
      // right-associative
      return Formula::make_implies(std::move(lhs), parse_implication());
    }
    return lhs;
  }

  Formula parse_disjunction() {
    Formula f = parse_conjunction();
    while (true) {
      skip_ws();
      if (peek() == '|') {
        ++pos_;
        f = Formula::make_or(std::move(f), parse_conjunction());
      } else {
        return f;
      }
    }
  }

  Formula parse_conjunction() {
    Formula f = parse_negation();
    while (true) {
      skip_ws();
      if (peek() == '&') {
        ++pos_;
        f = Formula::make_and(std::move(f), parse_negation());
      } else {
        return f;
      }
    }
  }

  Formula parse_negation() {
    skip_ws();
    if (peek() == '!') {
      ++pos_;
      return Formula::make_not(parse_negation());
    }
    return parse_primary();
  }

  Formula parse_primary() {
    skip_ws();
    if (peek() == '(') {
      ++pos_;
      Formula f = parse_implication();
      skip_ws();
      if (peek() != ')') fail("expected ')'");
      ++pos_;
      return f;
    }
    return parse_atom();
  }

  Formula parse_atom() {
    std::string cat_name = parse_ident();
    if (peek() != '.') fail("expected '.' after category name");
    ++pos_;
    std::string elem_name = parse_ident();
    int ci = cat_.category_index(cat_name);
    if (ci < 0) fail("unknown category '" + cat_name + "'");
    int ei = cat_.element_index(ci, elem_name);
    if (ei < 0) fail("unknown element '" + cat_name + "." + elem_name + "'");
    return Formula::make_atom({ci, ei});
  }

  std::string parse_ident() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      bool ident_char = std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
                        (c == '-' && !(pos_ + 1 < text_.size() && text_[pos_ + 1] == '>'));
      if (!ident_char) break;
      ++pos_;
    }
    if (pos_ == start) fail("expected identifier");
    return std::string(text_.substr(start, pos_ - start));
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  bool match(std::string_view tok) {
    if (text_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("constraint " + std::to_string(constraint_index_) + ": " + msg,
                     constraint_index_ + 1, static_cast<int>(pos_) + 1);
  }

  std::string_view text_;
  const Catalog& cat_;
  int constraint_index_;
  std::size_t pos_ = 0;
};

std::pair<int, int> line_col_of(std::string_view text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

const std::string* AbstractScenario::element_of(std::string_view category) const {
  for (const auto& [cat, elem] : assignment) {
    if (cat == category) return &elem;
  }
  return nullptr;
}

std::string AbstractScenario::to_json() const {
  ordered_json j;
  ordered_json a = ordered_json::object();
  for (const auto& [cat, elem] : assignment) a[cat] = elem;
  j["assignment"] = std::move(a);
  return j.dump(2) + "\n";
}

AbstractScenario AbstractScenario::from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("abstract scenario: ") + e.what());
  }
  AbstractScenario s;
  const ordered_json& a = j.contains("assignment") ? j.at("assignment") : j;
  for (auto it = a.begin(); it != a.end(); ++it) {
    s.assignment.emplace_back(it.key(), it.value().get<std::string>());
  }
  return s;
}

Catalog::Catalog(std::vector<Category> categories, std::vector<std::string> constraint_texts)
    : categories_(std::move(categories)) {
  finish_init();
  for (std::size_t i = 0; i < constraint_texts.size(); ++i) {
    Constraint c;
    c.text = constraint_texts[i];
    c.formula = parse_constraint(c.text, static_cast<int>(i));
    constraints_.push_back(std::move(c));
  }
}

void Catalog::finish_init() {
  category_index_.clear();
  for (std::size_t i = 0; i < categories_.size(); ++i) {
    const Category& c = categories_[i];
    if (c.elements.size() < 2) {
      throw ParseError("category '" + c.name + "' has fewer than 2 elements");
    }
    if (!category_index_.emplace(c.name, static_cast<int>(i)).second) {
      throw ParseError("duplicate category name '" + c.name + "'");
    }
    for (std::size_t a = 0; a < c.elements.size(); ++a) {
      for (std::size_t b = a + 1; b < c.elements.size(); ++b) {
        if (c.elements[a] == c.elements[b]) {
          throw ParseError("duplicate element '" + c.elements[a] + "' in category '" + c.name + "'");
        }
      }
    }
  }
}

Catalog Catalog::parse(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    auto [line, col] = line_col_of(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ParseError(std::string("catalog: ") + e.what(), line, col);
  }
  std::vector<Category> cats;
  if (!j.contains("categories") || !j["categories"].is_array()) {
    throw ParseError("catalog: missing 'categories' array");
  }
  for (const auto& jc : j["categories"]) {
    Category c;
    c.name = jc.at("name").get<std::string>();
    for (const auto& e : jc.at("elements")) c.elements.push_back(e.get<std::string>());
    cats.push_back(std::move(c));
  }
  std::vector<std::string> texts;
  if (j.contains("constraints")) {
    for (const auto& s : j["constraints"]) texts.push_back(s.get<std::string>());
  }
  return Catalog(std::move(cats), std::move(texts));
}

int Catalog::category_index(std::string_view name) const {
  auto it = category_index_.find(name);
  return it == category_index_.end() ? -1 : it->second;
}

int Catalog::element_index(int category, std::string_view name) const {
  if (category < 0 || category >= static_cast<int>(categories_.size())) return -1;
  const auto& elems = categories_[static_cast<std::size_t>(category)].elements;
  for (std::size_t i = 0; i < elems.size(); ++i) {
    if (elems[i] == name) return static_cast<int>(i);
  }
  return -1;
}

Formula Catalog::parse_constraint(std::string_view text, int constraint_index) const {
  return ConstraintParser(text, *this, constraint_index).parse();
}

Catalog Catalog::with_constraint(const std::string& text) const {
  std::vector<std::string> texts;
  texts.reserve(constraints_.size() + 1);
  for (const auto& c : constraints_) texts.push_back(c.text);
  texts.push_back(text);
  return Catalog(categories_, std::move(texts));
}

Catalog Catalog::with_blocked_assignment(const Assignment& total) const {
  std::string text = "!(";
  for (std::size_t i = 0; i < categories_.size(); ++i) {
    if (i) text += " & ";
    text += categories_[i].name + "." + categories_[i].elements[static_cast<std::size_t>(total[i])];
  }
  text += ")";
  return with_constraint(text);
}

Assignment Catalog::to_indices(const AbstractScenario& s) const {
  Assignment a(categories_.size(), -1);
  for (const auto& [cat, elem] : s.assignment) {
    int ci = category_index(cat);
    if (ci < 0) throw ParseError("unknown category '" + cat + "'");
    int ei = element_index(ci, elem);
    if (ei < 0) throw ParseError("unknown element '" + cat + "." + elem + "'");
    a[static_cast<std::size_t>(ci)] = ei;
  }
  return a;
}

AbstractScenario Catalog::to_scenario(const Assignment& total) const {
  AbstractScenario s;
  for (std::size_t i = 0; i < categories_.size(); ++i) {
    s.assignment.emplace_back(categories_[i].name,
                              categories_[i].elements[static_cast<std::size_t>(total[i])]);
  }
  return s;
}

std::string Catalog::to_json() const {
  ordered_json j;
  j["categories"] = ordered_json::array();
  for (const auto& c : categories_) {
    j["categories"].push_back({{"name", c.name}, {"elements", c.elements}});
  }
  j["constraints"] = ordered_json::array();
  for (const auto& c : constraints_) j["constraints"].push_back(c.text);
  return j.dump(2) + "\n";
}

bool satisfies_all(const Catalog& cat, const Assignment& total) {
  for (const auto& c : cat.constraints()) {
    if (c.formula.eval(total) != Formula::Truth::TRUE) return false;
  }
  return true;
}

namespace {

// DFS over unassigned categories; three-valued pruning keeps this exact while
// skipping subtrees already contradicting some constraint.
bool extension_exists(const Catalog& cat, Assignment& a, std::size_t next) {
  for (const auto& c : cat.constraints()) {
    if (c.formula.eval(a) == Formula::Truth::FALSE) return false;
  }
  while (next < a.size() && a[next] >= 0) ++next;
  if (next == a.size()) {
    return satisfies_all(cat, a);
  }
  const auto& elems = cat.categories()[next].elements;
  for (std::size_t e = 0; e < elems.size(); ++e) {
    a[next] = static_cast<int>(e);
    if (extension_exists(cat, a, next + 1)) {
      a[next] = -1;
      return true;
    }
  }
  a[next] = -1;
  return false;
}

}  // namespace

bool is_feasible(const Catalog& cat, const Assignment& assignment) {
  if (assignment.size() != cat.category_count()) {
    throw std::invalid_argument("assignment size does not match catalog");
  }
  Assignment work = assignment;
  return extension_exists(cat, work, 0);
}

std::size_t CoverageModel::Table::index_of(const Assignment& a) const {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    idx = idx * static_cast<std::size_t>(radix[i]) +
          static_cast<std::size_t>(a[static_cast<std::size_t>(categories[i])]);
  }
  return idx;
}

CoverageModel CoverageModel::build(const Catalog& cat, int k) {
  int n = static_cast<int>(cat.category_count());
  if (k < 1 || k > n) throw std::invalid_argument("coverage strength k out of range");
  CoverageModel m;
  m.k_ = k;

  std::vector<int> combo(static_cast<std::size_t>(k));
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == k) {
      Table t;
      t.categories.assign(combo.begin(), combo.end());
      std::size_t cells = 1;
      for (int ci : t.categories) {
        int sz = static_cast<int>(cat.categories()[static_cast<std::size_t>(ci)].elements.size());
        t.radix.push_back(sz);
        cells *= static_cast<std::size_t>(sz);
      }
      t.feasible.assign(cells, 0);
      t.covered.assign(cells, 0);
      // feasibility per cell via extension search on the projected assignment
      Assignment partial(cat.category_count(), -1);
      std::vector<int> elem(static_cast<std::size_t>(k), 0);
      for (std::size_t cell = 0; cell < cells; ++cell) {
        std::size_t rem = cell;
        for (int i = k - 1; i >= 0; --i) {
          elem[static_cast<std::size_t>(i)] = static_cast<int>(rem % static_cast<std::size_t>(t.radix[static_cast<std::size_t>(i)]));
          rem /= static_cast<std::size_t>(t.radix[static_cast<std::size_t>(i)]);
        }
        for (int i = 0; i < k; ++i) {
          partial[static_cast<std::size_t>(t.categories[static_cast<std::size_t>(i)])] = elem[static_cast<std::size_t>(i)];
        }
        if (is_feasible(cat, partial)) {
          t.feasible[cell] = 1;
          ++t.uncovered_feasible;
        }
        for (int i = 0; i < k; ++i) partial[static_cast<std::size_t>(t.categories[static_cast<std::size_t>(i)])] = -1;
      }
      m.feasible_total_ += t.uncovered_feasible;
      m.tables_.push_back(std::move(t));
      return;
    }
    for (int c = start; c < n; ++c) {
      combo[static_cast<std::size_t>(depth)] = c;
      rec(c + 1, depth + 1);
    }
  };
  rec(0, 0);
  return m;
}

const CoverageModel::Table* CoverageModel::find_table(const std::vector<int>& cats) const {
  for (const auto& t : tables_) {
    if (t.categories == cats) return &t;
  }
  return nullptr;
}

bool CoverageModel::is_feasible_tuple(const TupleKey& key) const {
  const Table* t = find_table(key.categories);
  if (!t) return false;
  std::size_t idx = 0;
  for (std::size_t i = 0; i < key.elements.size(); ++i) {
    idx = idx * static_cast<std::size_t>(t->radix[i]) + static_cast<std::size_t>(key.elements[i]);
  }
  return idx < t->feasible.size() && t->feasible[idx] != 0;
}

bool CoverageModel::is_covered(const TupleKey& key) const {
  const Table* t = find_table(key.categories);
  if (!t) return false;
  std::size_t idx = 0;
  for (std::size_t i = 0; i < key.elements.size(); ++i) {
    idx = idx * static_cast<std::size_t>(t->radix[i]) + static_cast<std::size_t>(key.elements[i]);
  }
  return idx < t->covered.size() && t->covered[idx] != 0;
}

int CoverageModel::gain(const Assignment& total) const {
  int g = 0;
  for (const auto& t : tables_) {
    std::size_t idx = t.index_of(total);
    if (t.feasible[idx] && !t.covered[idx]) ++g;
  }
  return g;
}

void CoverageModel::mark_covered(const Assignment& total) {
  for (auto& t : tables_) {
    std::size_t idx = t.index_of(total);
    if (t.feasible[idx] && !t.covered[idx]) {
      t.covered[idx] = 1;
      --t.uncovered_feasible;
      ++covered_total_;
    }
  }
}

std::vector<TupleKey> CoverageModel::feasible_tuples() const {
  std::vector<TupleKey> out;
  for (const auto& t : tables_) {
    for (std::size_t cell = 0; cell < t.feasible.size(); ++cell) {
      if (!t.feasible[cell]) continue;
      TupleKey key;
      key.categories = t.categories;
      key.elements.assign(t.categories.size(), 0);
      std::size_t rem = cell;
      for (int i = static_cast<int>(t.categories.size()) - 1; i >= 0; --i) {
        key.elements[static_cast<std::size_t>(i)] = static_cast<int>(rem % static_cast<std::size_t>(t.radix[static_cast<std::size_t>(i)]));
        rem /= static_cast<std::size_t>(t.radix[static_cast<std::size_t>(i)]);
      }
      out.push_back(std::move(key));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<CoverageModel::SubsetStat> CoverageModel::subset_stats() const {
  std::vector<SubsetStat> out;
  for (const auto& t : tables_) {
    SubsetStat s;
    s.categories = t.categories;
    for (std::size_t cell = 0; cell < t.feasible.size(); ++cell) {
      if (t.feasible[cell]) {
        ++s.feasible;
        if (t.covered[cell]) ++s.covered;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<TupleKey> enumerate_feasible_tuples(const Catalog& cat, int k) {
  return CoverageModel::build(cat, k).feasible_tuples();
}

CoverageRatio coverage_ratio(const Catalog& cat, const std::vector<AbstractScenario>& scenarios,
                             CoverageModel model) {
  for (const auto& s : scenarios) {
    Assignment a = cat.to_indices(s);
    model.mark_covered(a);
  }
  return {model.covered_count(), model.feasible_count()};
}

}  // namespace scenforge::catalog
