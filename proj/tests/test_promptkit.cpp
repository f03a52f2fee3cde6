// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "cpg/promptkit.hpp"
#include "fixtures.hpp"

using namespace cpg;

namespace {

const TemplateSet& repo_templates() {
  static const TemplateSet t = TemplateSet::load(cpg::testing::templates_dir());
  return t;
}

CurriculumItem item_at(int grade) {
  return {{"LS1", "LS", "Living things and their parts"},
          {"LS1.A", "LS1", "Animals use body parts to move, eat, and stay safe."},
          {"O1", "LS1.A", "Describe how a body part helps an animal survive.", grade},
          grade};
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

}  // namespace

TEST(WordTarget, GradeTimesHundred) {
  for (int g = 1; g <= 5; ++g) EXPECT_EQ(word_target(g), static_cast<std::size_t>(g * 100));
  EXPECT_THROW(word_target(0), GradeRangeError);
  EXPECT_THROW(word_target(6), GradeRangeError);
}

TEST(Templates, LoadedVerbatimFromFiles) {
  const auto& t = repo_templates();
  for (PromptKind k : kAllPromptKinds) {
    std::string file = read_file(cpg::testing::templates_dir() / (std::string(template_name(k)) + ".txt"));
    if (!file.empty() && file.back() == '\n') file.pop_back();
    EXPECT_EQ(t.text(k), file) << template_name(k);
    EXPECT_EQ(t.digests().at(std::string(template_name(k))), sha256_hex(file));
  }
}

TEST(Templates, MissingFileIsAnError) {
  cpg::testing::TempDir dir;
  EXPECT_THROW(TemplateSet::load(dir.path()), Error);
}

TEST(RenderTemplate, Substitution) {
  EXPECT_EQ(render_template("a {{x}} b {{x}}", {{"x", "1"}}), "a 1 b 1");
  EXPECT_EQ(render_template("no markers", {}), "no markers");
  EXPECT_THROW(render_template("{{missing}}", {}), TemplateError);
  EXPECT_THROW(render_template("{{open", {{"open", "x"}}), TemplateError);
  // Values are not re-scanned.
  EXPECT_EQ(render_template("{{x}}", {{"x", "{{y}}"}}), "{{y}}");
}

TEST(WonderPrompt, Grade1FiveTopics) {
  const auto p = render_wonder_topics_prompt(repo_templates(), item_at(1), 5);
  EXPECT_EQ(p.kind, PromptKind::kWonderTopics);
  EXPECT_TRUE(contains(p.text, "You are a science teacher (elementary school grade 1)."));
  EXPECT_TRUE(contains(p.text, "generate 5 different topics"));
  EXPECT_TRUE(contains(p.text, "=== Science Concept ===\nLiving things and their parts\n"));
  EXPECT_TRUE(contains(p.text, "=== Core Ideas ===\nAnimals use body parts"));
  EXPECT_TRUE(contains(p.text, "Flesch Kincaid Grade Level for elementary grade 1 students"));
  EXPECT_FALSE(contains(p.text, "{{"));
  EXPECT_THROW(render_wonder_topics_prompt(repo_templates(), item_at(1), 0), InvalidArgumentError);
}

TEST(PassagePrompt, BaseHasNoCurriculumFields) {
  const auto spec = make_generation_spec(item_at(1), GenerationMode::kBase, "Why do turtles hide?");
  const auto p = render_passage_prompt(repo_templates(), spec);
  EXPECT_EQ(p.kind, PromptKind::kBase);
  EXPECT_TRUE(contains(p.text, "Generate a 100-word reading passage"));
  EXPECT_TRUE(contains(p.text, "=== Wonder Topic ===\nWhy do turtles hide?"));
  for (const char* absent : {"Science Concept ===", "Core Ideas", "Learning Outcomes", "Living things",
                             "Flesch Kincaid"}) {
    EXPECT_FALSE(contains(p.text, absent)) << absent;
  }
}

TEST(PassagePrompt, CogentHasEveryCurriculumField) {
  const auto item = item_at(3);
  const auto spec = make_generation_spec(item, GenerationMode::kCogent, "How do fish breathe?");
  const auto p = render_passage_prompt(repo_templates(), spec);
  EXPECT_EQ(p.kind, PromptKind::kCogent);
  EXPECT_TRUE(contains(p.text, "Generate a 300-word reading passage"));
  EXPECT_TRUE(contains(p.text, "meet the Flesch Kincaid Grade Level for elementary grade 3 students"));
  EXPECT_TRUE(contains(p.text, item.science_concept.name));
  EXPECT_TRUE(contains(p.text, "What the student needs to learn:\n" + item.core_idea.text));
  EXPECT_TRUE(contains(p.text, item.outcome.text));
  EXPECT_TRUE(contains(p.text, "=== Wonder Topic ===\nHow do fish breathe?\n=== Science Concept ==="));
}

TEST(PassagePrompt, TopicOnlyDifferenceBetweenModes) {
  // BASE prompts for two items at the same grade are identical given a topic.
  auto a = item_at(2), b = item_at(2);
  b.science_concept.name = "Something unrelated";
  const auto pa = render_passage_prompt(repo_templates(), make_generation_spec(a, GenerationMode::kBase, "T?"));
  const auto pb = render_passage_prompt(repo_templates(), make_generation_spec(b, GenerationMode::kBase, "T?"));
  EXPECT_EQ(pa.text, pb.text);
  const auto ca = render_passage_prompt(repo_templates(), make_generation_spec(a, GenerationMode::kCogent, "T?"));
  const auto cb = render_passage_prompt(repo_templates(), make_generation_spec(b, GenerationMode::kCogent, "T?"));
  EXPECT_NE(ca.text, cb.text);
}

TEST(PassagePrompt, WordTargetForEveryGrade) {
  for (int g = 1; g <= 5; ++g) {
    for (auto mode : {GenerationMode::kBase, GenerationMode::kCogent}) {
      const auto spec = make_generation_spec(item_at(g), mode, "Topic?");
      EXPECT_EQ(spec.word_target, static_cast<std::size_t>(g) * 100);
      EXPECT_TRUE(contains(render_passage_prompt(repo_templates(), spec).text,
                           "Generate a " + std::to_string(g * 100) + "-word"));
    }
  }
}

TEST(PassagePrompt, Preconditions) {
  auto spec = make_generation_spec(item_at(1), GenerationMode::kBase, "   ");
  EXPECT_THROW(render_passage_prompt(repo_templates(), spec), InvalidArgumentError);
  spec.topic = "ok?";
  spec.word_target = 0;
  EXPECT_THROW(render_passage_prompt(repo_templates(), spec), InvalidArgumentError);
  spec.word_target = 100;
  EXPECT_THROW(render_cogent_prompt(repo_templates(), spec), ModeMismatchError);
  spec.mode = GenerationMode::kCogent;
  EXPECT_THROW(render_base_prompt(repo_templates(), spec), ModeMismatchError);
}

TEST(PassagePrompt, Deterministic) {
  const auto spec = make_generation_spec(item_at(4), GenerationMode::kCogent, "Why?");
  EXPECT_EQ(render_passage_prompt(repo_templates(), spec).text, render_passage_prompt(repo_templates(), spec).text);
}

TEST(Modes, ParseAndPrint) {
  EXPECT_EQ(parse_generation_mode("cogent"), GenerationMode::kCogent);
  EXPECT_EQ(parse_generation_mode("BASE"), GenerationMode::kBase);
  EXPECT_EQ(to_string(GenerationMode::kCogent), "COGENT");
  EXPECT_THROW(parse_generation_mode("human"), InvalidArgumentError);
}

TEST(ParseTopics, NumberedListWithTrailingSpace) {
  const std::string response =
      "1. How do rabbits use their ears?  \n"
      "2. What do roots do for a tree?\n"
      "3. How does a duck use its feet to swim?  \n"
      "4. Why do snails carry shells?\n"
      "5. How do seeds help plants spread?\n";
  const auto topics = parse_topics(response, 5);
  ASSERT_EQ(topics.size(), 5u);
  EXPECT_EQ(topics[0], "How do rabbits use their ears?");
  EXPECT_EQ(topics[2], "How does a duck use its feet to swim?");
  EXPECT_EQ(topics[4], "How do seeds help plants spread?");
}

TEST(ParseTopics, PreambleParenAndBold) {
  const auto topics = parse_topics("Sure! Here you go:\n\n1) **Why is the sky blue?**\n 2. Where does rain go?\r\n", 2);
  ASSERT_EQ(topics.size(), 2u);
  EXPECT_EQ(topics[0], "Why is the sky blue?");
  EXPECT_EQ(topics[1], "Where does rain go?");
}

TEST(ParseTopics, TooFewIsMalformed) {
  try {
    parse_topics("1. Only one?\nnot numbered\n", 3);
    FAIL();
  } catch (const MalformedResponseError& e) {
    EXPECT_TRUE(contains(e.raw(), "Only one?"));
  }
  EXPECT_THROW(parse_topics("", 1), MalformedResponseError);
  EXPECT_THROW(parse_topics("1.\n2.   \n", 1), MalformedResponseError);
}
