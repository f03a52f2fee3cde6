// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0
//
// LLM-as-judge harness: judge prompt rendering, verdict parsing, and the
// arithmetic applied to verdicts.
//
// Parsers are marker based: markers match case-insensitively, whitespace runs
// are collapsed, and the last occurrence of a marker wins.

#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpg/curriculum.hpp"
#include "cpg/error.hpp"
#include "cpg/gateway.hpp"
#include "cpg/promptkit.hpp"
#include "cpg/records.hpp"

namespace cpg {

// ---------------------------------------------------------------------------
// Prompt rendering
// ---------------------------------------------------------------------------

inline RenderedPrompt render_alignment_prompt(const TemplateSet& templates,
                                              const PassageRecord& passage,
                                              const CurriculumItem& item) {
  if (passage.text.empty()) throw InvalidArgumentError("alignment prompt: passage is empty");
  return templates.render(PromptKind::kJudgeAlignment,
                          {{"grade", std::to_string(item.grade)},
                           {"concept", item.science_concept.name},
                           {"core_ideas", item.core_idea.text},
                           {"learning_outcomes", item.outcome.text},
                           {"passage", passage.text}});
}

// One quoted key/value block per candidate, in label order.
inline std::string render_category_blocks(std::span<const LabeledItem> candidates) {
  auto quoted = [](const std::string& s) { return json(s).dump(); };
  std::string out;
  for (const auto& c : candidates) {
    if (!out.empty()) out += '\n';
    out += "\"Type\": " + quoted(c.label) + ",\n";
    out += "\"Concept\": " + quoted(c.item.science_concept.name) + ",\n";
    out += "\"Core Ideas\": " + quoted(c.item.core_idea.text) + ",\n";
    out += "\"Learning Outcomes\": " + quoted(c.item.outcome.text) + ",";
  }
  return out;
}

inline RenderedPrompt render_categorization_prompt(const TemplateSet& templates,
                                                   const PassageRecord& passage,
                                                   std::span<const LabeledItem> candidates) {
  if (candidates.size() < 2) {
    throw InvalidArgumentError("categorization needs at least 2 candidates, got " +
                               std::to_string(candidates.size()));
  }
  return templates.render(PromptKind::kJudgeCategorize,
                          {{"categories", render_category_blocks(candidates)},
                           {"passage", passage.text}});
}

inline RenderedPrompt render_comprehensibility_prompt(const TemplateSet& templates,
                                                      const PassageRecord& passage, int grade) {
  if (!valid_grade(grade)) throw GradeRangeError(passage.passage_id, grade);
  return templates.render(PromptKind::kJudgeComprehensibility,
                          {{"grade", std::to_string(grade)},
                           {"topic", passage.topic},
                           {"passage", passage.text}});
}

// ---------------------------------------------------------------------------
// Verdict parsing
// ---------------------------------------------------------------------------

namespace verdict_detail {

// ASCII-lowercases and collapses whitespace runs to one space.
inline std::string normalize(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool space = false;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

// Value token after the last "<marker>:" occurrence, or nullopt when no such
// occurrence exists. `marker` must already be normalized.
inline std::optional<std::string> last_value(const std::string& norm, std::string_view marker) {
  std::optional<std::string> found;
  std::size_t pos = 0;
  while ((pos = norm.find(marker, pos)) != std::string::npos) {
    const std::size_t at = pos;
    pos = at + 1;
    // Reject matches inside a longer word ("unreadability:").
    if (at > 0 && std::isalpha(static_cast<unsigned char>(norm[at - 1]))) continue;
    std::size_t i = at + marker.size();
    while (i < norm.size() && (norm[i] == ' ' || norm[i] == '*')) ++i;
    if (i >= norm.size() || norm[i] != ':') continue;
    ++i;
    while (i < norm.size() && (norm[i] == ' ' || norm[i] == '*')) ++i;
    std::size_t e = i;
    while (e < norm.size() && norm[e] != ' ' && norm[e] != ',' && norm[e] != ';') ++e;
    std::string token = norm.substr(i, e - i);
    while (!token.empty() && (token.back() == '*' || token.back() == '.' || token.back() == '"' ||
                              token.back() == '\'')) {
      token.pop_back();
    }
    while (!token.empty() && (token.front() == '"' || token.front() == '\'')) token.erase(token.begin());
    found = std::move(token);
  }
  return found;
}

inline std::optional<int> likert(const std::string& token) {
  if (token.size() != 1 || token[0] < '1' || token[0] > '5') return std::nullopt;
  return token[0] - '0';
}

}  // namespace verdict_detail

inline int parse_alignment(std::string_view response) {
  const std::string norm = verdict_detail::normalize(response);
  auto value = verdict_detail::last_value(norm, "alignment score");
  if (!value) throw MalformedVerdictError("alignment: 'Alignment Score:' marker absent", std::string(response));
  auto score = verdict_detail::likert(*value);
  if (!score) {
    throw MalformedVerdictError("alignment: '" + *value + "' is not an integer in [1,5]",
                                std::string(response));
  }
  return *score;
}

inline std::string parse_category(std::string_view response, const std::set<std::string>& valid_labels) {
  const std::string norm = verdict_detail::normalize(response);
  auto value = verdict_detail::last_value(norm, "predicted type");
  if (!value) throw MalformedVerdictError("category: 'Predicted Type:' marker absent", std::string(response));
  std::string label = *value;
  for (auto& c : label) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (!valid_labels.count(label)) {
    throw MalformedVerdictError("category: label '" + label + "' not among candidates", std::string(response));
  }
  return label;
}

struct ComprehensibilityScores {
  int readability = 0;
  int correctness = 0;
  int coherence = 0;
  int engagement = 0;
  double mean() const noexcept { return (readability + correctness + coherence + engagement) / 4.0; }
  bool operator==(const ComprehensibilityScores&) const = default;
};

inline ComprehensibilityScores parse_comprehensibility(std::string_view response) {
  const std::string norm = verdict_detail::normalize(response);
  auto field = [&](std::string_view name) {
    auto value = verdict_detail::last_value(norm, name);
    if (!value) {
      throw MalformedVerdictError("comprehensibility: '" + std::string(name) + "' score missing",
                                  std::string(response));
    }
    auto score = verdict_detail::likert(*value);
    if (!score) {
      throw MalformedVerdictError("comprehensibility: " + std::string(name) + " '" + *value +
                                      "' is not an integer in [1,5]",
                                  std::string(response));
    }
    return *score;
  };
  return {field("readability"), field("correctness"), field("coherence"), field("engagement")};
}

// ---------------------------------------------------------------------------
// Verdicts and arithmetic
// ---------------------------------------------------------------------------

struct AlignmentVerdict {
  int score = 0;
  std::string passage_id;
  ItemRef item;
  std::string judge_backend;
};

struct CategoryVerdict {
  std::string predicted_label;
  std::string passage_id;
  std::string concept_id;
  std::string gold_label;
};

struct ComprehensibilityVerdict {
  ComprehensibilityScores scores;
  std::string passage_id;
};

struct Accuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
  double value() const noexcept { return static_cast<double>(correct) / static_cast<double>(total); }
};

inline Accuracy categorization_accuracy(std::span<const CategoryVerdict> verdicts) {
  if (verdicts.empty()) throw InvalidArgumentError("categorization_accuracy: no verdicts");
  Accuracy a{0, verdicts.size()};
  for (const auto& v : verdicts) a.correct += v.predicted_label == v.gold_label ? 1 : 0;
  return a;
}

// Means of consecutive groups of `group_size`.
inline std::vector<double> group_average(std::span<const double> scores, std::size_t group_size) {
  if (group_size == 0) throw InvalidArgumentError("group_average: group size must be positive");
  if (scores.size() % group_size != 0) {
    throw InvalidArgumentError("group_average: " + std::to_string(scores.size()) +
                               " scores do not divide into groups of " + std::to_string(group_size));
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < scores.size(); i += group_size) {
    double sum = 0;
    for (std::size_t k = 0; k < group_size; ++k) sum += scores[i + k];
    out.push_back(sum / static_cast<double>(group_size));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

template <class Verdict>
struct JudgeOutcome {
  std::optional<Verdict> verdict;
  std::string error;         // set when verdict is empty
  std::string raw_response;  // last response seen
  unsigned asks = 0;         // judge calls made, including re-asks
};

// Asks the judge and re-asks with the identical prompt when the verdict is
// malformed, up to `max_reasks` times. Backend failures end the attempt;
// replay misses and credential errors propagate.
class Judge {
 public:
  Judge(Gateway& gateway, const TemplateSet& templates, unsigned max_reasks = 2)
      : gateway_(gateway), templates_(templates), max_reasks_(max_reasks) {}

  const std::string& backend_id() const noexcept { return gateway_.config().backend_id; }

  JudgeOutcome<AlignmentVerdict> alignment(const PassageRecord& passage, const CurriculumItem& item,
                                           std::uint32_t repetition = 0) {
    const auto prompt = render_alignment_prompt(templates_, passage, item);
    return ask<AlignmentVerdict>(prompt.text, repetition, [&](const std::string& raw) {
      return AlignmentVerdict{parse_alignment(raw), passage.passage_id, ref_of(item), backend_id()};
    });
  }

  JudgeOutcome<CategoryVerdict> categorize(const PassageRecord& passage,
                                           std::span<const LabeledItem> candidates,
                                           const std::string& gold_label, std::uint32_t repetition = 0) {
    const auto prompt = render_categorization_prompt(templates_, passage, candidates);
    std::set<std::string> labels;
    for (const auto& c : candidates) labels.insert(c.label);
    const std::string concept_id = candidates.front().item.science_concept.id;
    return ask<CategoryVerdict>(prompt.text, repetition, [&](const std::string& raw) {
      return CategoryVerdict{parse_category(raw, labels), passage.passage_id, concept_id, gold_label};
    });
  }

  JudgeOutcome<ComprehensibilityVerdict> comprehensibility(const PassageRecord& passage,
                                                           std::uint32_t repetition = 0) {
    const auto prompt = render_comprehensibility_prompt(templates_, passage, passage.grade);
    return ask<ComprehensibilityVerdict>(prompt.text, repetition, [&](const std::string& raw) {
      return ComprehensibilityVerdict{parse_comprehensibility(raw), passage.passage_id};
    });
  }

 private:
  template <class Verdict, class Parse>
  JudgeOutcome<Verdict> ask(const std::string& prompt, std::uint32_t repetition, Parse parse) {
    JudgeOutcome<Verdict> out;
    const std::uint32_t base = repetition * (max_reasks_ + 1);
    for (unsigned k = 0; k <= max_reasks_; ++k) {
      ++out.asks;
      try {
        auto result = gateway_.complete(gateway_.request(prompt, base + k));
        out.raw_response = result.text;
        out.verdict = parse(result.text);
        out.error.clear();
        return out;
      } catch (const MalformedVerdictError& e) {
        out.error = e.what();
      } catch (const ReplayMissError&) {
        throw;  // an incomplete cassette is a setup problem, not a verdict
      } catch (const AuthError&) {
        throw;
      } catch (const BackendError& e) {
        out.error = e.what();
        return out;
      }
    }
    return out;
  }

  Gateway& gateway_;
  const TemplateSet& templates_;
  unsigned max_reasks_;
};

}  // namespace cpg
