// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "cpg/error.hpp"
#include "cpg/io.hpp"

namespace cpg {

inline constexpr int kMinGrade = 1;
inline constexpr int kMaxGrade = 5;

inline bool valid_grade(long long g) noexcept {
  return g >= kMinGrade && g <= kMaxGrade;
}

struct Domain {
  std::string code;  // PS, LS, ESS, ETS ...
  std::string name;
  bool operator==(const Domain&) const = default;
};

struct ScienceConcept {
  std::string id;
  std::string domain_code;
  std::string name;
  bool operator==(const ScienceConcept&) const = default;
};

struct CoreIdea {
  std::string id;
  std::string concept_id;
  std::string text;
  bool operator==(const CoreIdea&) const = default;
};

struct LearningOutcome {
  std::string id;
  std::string core_idea_id;
  std::string text;
  int grade = kMinGrade;
  bool operator==(const LearningOutcome&) const = default;
};

// One {concept, core idea, learning outcome} tuple at a grade.
struct CurriculumItem {
  ScienceConcept science_concept;
  CoreIdea core_idea;
  LearningOutcome outcome;
  int grade = kMinGrade;
  bool operator==(const CurriculumItem&) const = default;
};

// Stable identifiers for an item, used in persisted records.
struct ItemRef {
  std::string concept_id;
  std::string core_idea_id;
  std::string outcome_id;
  bool operator==(const ItemRef&) const = default;
  auto operator<=>(const ItemRef&) const = default;
};

inline ItemRef ref_of(const CurriculumItem& item) {
  return {item.science_concept.id, item.core_idea.id, item.outcome.id};
}

inline json to_json(const ItemRef& r) {
  return json{{"concept_id", r.concept_id},
              {"core_idea_id", r.core_idea_id},
              {"outcome_id", r.outcome_id}};
}

// Immutable after load. Core ideas and outcomes are kept flat, each pointing at
// its parent by id, in file order.
struct CurriculumCatalog {
  std::string standard_name;
  std::vector<Domain> domains;
  std::vector<ScienceConcept> concepts;
  std::vector<CoreIdea> core_ideas;
  std::vector<LearningOutcome> outcomes;

  std::size_t concept_count() const noexcept { return concepts.size(); }
  std::size_t core_idea_count() const noexcept { return core_ideas.size(); }
  std::size_t outcome_count() const noexcept { return outcomes.size(); }

  const ScienceConcept* find_concept(std::string_view id) const {
    auto it = std::find_if(concepts.begin(), concepts.end(),
                           [&](const auto& c) { return c.id == id; });
    return it == concepts.end() ? nullptr : &*it;
  }
  const CoreIdea* find_core_idea(std::string_view id) const {
    auto it = std::find_if(core_ideas.begin(), core_ideas.end(),
                           [&](const auto& c) { return c.id == id; });
    return it == core_ideas.end() ? nullptr : &*it;
  }
  const LearningOutcome* find_outcome(std::string_view id) const {
    auto it = std::find_if(outcomes.begin(), outcomes.end(),
                           [&](const auto& o) { return o.id == id; });
    return it == outcomes.end() ? nullptr : &*it;
  }

  bool operator==(const CurriculumCatalog&) const = default;
};

namespace detail {

inline const json& require_field(const json& obj, const char* key,
                                 const std::string& path) {
  if (!obj.is_object()) throw SchemaError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "." + key, "missing field");
  return *it;
}

inline std::string require_string(const json& obj, const char* key,
                                  const std::string& path, bool nonempty) {
  const json& v = require_field(obj, key, path);
  if (!v.is_string()) throw SchemaError(path + "." + key, "expected a string");
  std::string s = v.get<std::string>();
  if (nonempty && s.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw SchemaError(path + "." + key, "must be nonempty");
  }
  return s;
}

inline const json& require_array(const json& obj, const char* key,
                                 const std::string& path) {
  const json& v = require_field(obj, key, path);
  if (!v.is_array()) throw SchemaError(path + "." + key, "expected an array");
  return v;
}

}  // namespace detail

// Validates referential integrity and field constraints. Throws on the first
// violation found.
inline void validate(const CurriculumCatalog& catalog) {
  std::set<std::string> domain_codes;
  for (const auto& d : catalog.domains) {
    if (d.code.empty()) throw SchemaError("domains.code", "must be nonempty");
    if (!domain_codes.insert(d.code).second) {
      throw SchemaError("domains.code", "duplicate domain code '" + d.code + "'");
    }
  }
  std::set<std::string> ids;
  auto claim = [&](const std::string& id, const char* what) {
    if (id.empty()) throw SchemaError(std::string(what) + ".id", "must be nonempty");
    if (!ids.insert(id).second) {
      throw SchemaError(std::string(what) + ".id", "duplicate identifier '" + id + "'");
    }
  };
  std::set<std::string> concept_ids, core_ids;
  for (const auto& c : catalog.concepts) {
    claim(c.id, "concepts");
    concept_ids.insert(c.id);
    if (!domain_codes.count(c.domain_code)) {
      throw ReferenceError(c.domain_code, "concept '" + c.id + "' domain");
    }
  }
  for (const auto& ci : catalog.core_ideas) {
    claim(ci.id, "core_ideas");
    core_ids.insert(ci.id);
    if (!concept_ids.count(ci.concept_id)) {
      throw ReferenceError(ci.concept_id, "core idea '" + ci.id + "' concept");
    }
    if (ci.text.empty()) throw SchemaError("core_ideas." + ci.id + ".text", "must be nonempty");
  }
  for (const auto& o : catalog.outcomes) {
    claim(o.id, "outcomes");
    if (!core_ids.count(o.core_idea_id)) {
      throw ReferenceError(o.core_idea_id, "outcome '" + o.id + "' core idea");
    }
    if (!valid_grade(o.grade)) throw GradeRangeError(o.id, o.grade);
    if (o.text.empty()) throw SchemaError("outcomes." + o.id + ".text", "must be nonempty");
  }
}

// Parses the nested catalog document:
//   { standard, domains[] {code,name},
//     concepts[] {id, domain, name, core_ideas[] {id, text, outcomes[] {id, text, grade}}} }
inline CurriculumCatalog parse_catalog(const json& doc) {
  if (!doc.is_object()) throw SchemaError("$", "expected an object");
  CurriculumCatalog cat;
  cat.standard_name = detail::require_string(doc, "standard", "$", false);

  const json& domains = detail::require_array(doc, "domains", "$");
  for (std::size_t i = 0; i < domains.size(); ++i) {
    const std::string p = "$.domains[" + std::to_string(i) + "]";
    cat.domains.push_back({detail::require_string(domains[i], "code", p, true),
                           detail::require_string(domains[i], "name", p, false)});
  }

  const json& concepts = detail::require_array(doc, "concepts", "$");
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    const std::string p = "$.concepts[" + std::to_string(i) + "]";
    const json& c = concepts[i];
    ScienceConcept science_concept{detail::require_string(c, "id", p, true),
                           detail::require_string(c, "domain", p, true),
                           detail::require_string(c, "name", p, true)};
    const json& ideas = detail::require_array(c, "core_ideas", p);
    for (std::size_t j = 0; j < ideas.size(); ++j) {
      const std::string pj = p + ".core_ideas[" + std::to_string(j) + "]";
      const json& ci = ideas[j];
      CoreIdea idea{detail::require_string(ci, "id", pj, true), science_concept.id,
                    detail::require_string(ci, "text", pj, true)};
      const json& outs = detail::require_array(ci, "outcomes", pj);
      for (std::size_t k = 0; k < outs.size(); ++k) {
        const std::string pk = pj + ".outcomes[" + std::to_string(k) + "]";
        const json& o = outs[k];
        LearningOutcome outcome{detail::require_string(o, "id", pk, true), idea.id,
                                detail::require_string(o, "text", pk, true), 0};
        const json& g = detail::require_field(o, "grade", pk);
        if (!g.is_number_integer()) throw SchemaError(pk + ".grade", "expected an integer");
        const long long grade = g.get<long long>();
        if (!valid_grade(grade)) throw GradeRangeError(outcome.id, grade);
        outcome.grade = static_cast<int>(grade);
        cat.outcomes.push_back(std::move(outcome));
      }
      cat.core_ideas.push_back(std::move(idea));
    }
    cat.concepts.push_back(std::move(science_concept));
  }
  validate(cat);
  return cat;
}

inline CurriculumCatalog load_catalog(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw SchemaError("$", "'" + path.string() + "' is not valid JSON");
  return parse_catalog(doc);
}

// Inverse of parse_catalog.
inline json to_json(const CurriculumCatalog& cat) {
  json doc;
  doc["standard"] = cat.standard_name;
  doc["domains"] = json::array();
  for (const auto& d : cat.domains) doc["domains"].push_back({{"code", d.code}, {"name", d.name}});
  doc["concepts"] = json::array();
  for (const auto& c : cat.concepts) {
    json jc{{"id", c.id}, {"domain", c.domain_code}, {"name", c.name},
            {"core_ideas", json::array()}};
    for (const auto& ci : cat.core_ideas) {
      if (ci.concept_id != c.id) continue;
      json jci{{"id", ci.id}, {"text", ci.text}, {"outcomes", json::array()}};
      for (const auto& o : cat.outcomes) {
        if (o.core_idea_id != ci.id) continue;
        jci["outcomes"].push_back({{"id", o.id}, {"text", o.text}, {"grade", o.grade}});
      }
      jc["core_ideas"].push_back(std::move(jci));
    }
    doc["concepts"].push_back(std::move(jc));
  }
  return doc;
}

// Non-fatal checks against the NGSS elementary decomposition (29 concepts,
// 79 core ideas). Other frameworks load cleanly and only see these warnings.
inline std::vector<std::string> ngss_shape_warnings(const CurriculumCatalog& cat) {
  std::vector<std::string> w;
  if (cat.concept_count() != 29) {
    w.push_back("catalog has " + std::to_string(cat.concept_count()) +
                " concepts; the NGSS elementary decomposition has 29");
  }
  if (cat.core_idea_count() != 79) {
    w.push_back("catalog has " + std::to_string(cat.core_idea_count()) +
                " core ideas; the NGSS elementary decomposition has 79");
  }
  return w;
}

// One item per learning outcome, ordered by (concept id, core idea id, outcome id).
inline std::vector<CurriculumItem> enumerate_items(const CurriculumCatalog& cat) {
  std::map<std::string, const ScienceConcept*> concepts;
  for (const auto& c : cat.concepts) concepts[c.id] = &c;
  std::map<std::string, const CoreIdea*> ideas;
  for (const auto& ci : cat.core_ideas) ideas[ci.id] = &ci;

  std::vector<CurriculumItem> items;
  items.reserve(cat.outcomes.size());
  for (const auto& o : cat.outcomes) {
    const CoreIdea& idea = *ideas.at(o.core_idea_id);
    const ScienceConcept& science_concept = *concepts.at(idea.concept_id);
    items.push_back({science_concept, idea, o, o.grade});
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return std::tie(a.science_concept.id, a.core_idea.id, a.outcome.id) <
           std::tie(b.science_concept.id, b.core_idea.id, b.outcome.id);
  });
  return items;
}

// 0 -> "A", 25 -> "Z", 26 -> "AA", ...
inline std::string type_label(std::size_t index) {
  std::string label;
  std::size_t n = index + 1;
  while (n > 0) {
    --n;
    label.insert(label.begin(), static_cast<char>('A' + n % 26));
    n /= 26;
  }
  return label;
}

struct LabeledItem {
  std::string label;
  CurriculumItem item;
};

// Candidate set for categorization: every item under the concept, labeled in
// enumeration order.
inline std::vector<LabeledItem> items_for_concept(const CurriculumCatalog& cat,
                                                  std::string_view concept_id) {
  if (!cat.find_concept(concept_id)) throw UnknownIdError(std::string(concept_id));
  std::vector<LabeledItem> out;
  for (auto& item : enumerate_items(cat)) {
    if (item.science_concept.id != concept_id) continue;
    out.push_back({type_label(out.size()), std::move(item)});
  }
  return out;
}

// Looks up an item by its reference triple.
inline CurriculumItem resolve_item(const CurriculumCatalog& cat, const ItemRef& ref) {
  const auto* science_concept = cat.find_concept(ref.concept_id);
  if (!science_concept) throw ReferenceError(ref.concept_id, "item concept");
  const auto* idea = cat.find_core_idea(ref.core_idea_id);
  if (!idea || idea->concept_id != science_concept->id) throw ReferenceError(ref.core_idea_id, "item core idea");
  const auto* outcome = cat.find_outcome(ref.outcome_id);
  if (!outcome || outcome->core_idea_id != idea->id) throw ReferenceError(ref.outcome_id, "item outcome");
  return {*science_concept, *idea, *outcome, outcome->grade};
}

inline ItemRef parse_item_ref(const json& j, const std::string& path) {
  return {detail::require_string(j, "concept_id", path, true),
          detail::require_string(j, "core_idea_id", path, true),
          detail::require_string(j, "outcome_id", path, true)};
}

}  // namespace cpg
