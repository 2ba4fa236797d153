// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "tcb/assertion.hpp"
#include "toy.hpp"

namespace tcb::assertion {
namespace {

using corpus::Category;
using testing::TempDir;

TEST(AssertionParse, ExemplarsParseAndValidate) {
  const std::pair<const char*, Category> cases[] = {{"attribute", Category::kAttribute},
                                                    {"object_relation", Category::kObjectRelation},
                                                    {"background", Category::kBackground}};
  for (const auto& [file, category] : cases) {
    const auto set = parse_assertion_text(testing::read_exemplar(file));
    EXPECT_NO_THROW(validate_assertion_set(set, category)) << file;
    EXPECT_EQ(set.assertions.front().id, "a1");
  }
}

TEST(AssertionParse, QuestionsAreKeptVerbatim) {
  const auto set = parse_assertion_text(testing::read_exemplar("attribute"));
  ASSERT_EQ(set.assertions.size(), 6U);
  EXPECT_EQ(set.assertions[2].question,
            "Is there a chameleon with its color in between brown and bright green?");
  EXPECT_EQ(set.assertions[4].question,
            "Aside from color difference, do Frame 1 and Frame 6 show the same chameleon?");
}

TEST(AssertionParse, BackgroundConsistencySectionIsEmpty) {
  const auto set = parse_assertion_text(testing::read_exemplar("background"));
  EXPECT_EQ(set.count(Dimension::kConsistency), 0U);
  // The exemption only applies to background prompts.
  EXPECT_THROW(validate_assertion_set(set, Category::kAttribute), ValidationError);
}

TEST(AssertionParse, ErrorsCarryLineAndRawText) {
  const std::string raw = "- Check \"Transition Completion\"\nInput: Frame 1\nInput: Frame 2\nQ: x?\n";
  try {
    parse_assertion_text(raw);
    FAIL() << "expected AssertionParseError";
  } catch (const AssertionParseError& e) {
    EXPECT_EQ(e.line(), 2U);
    EXPECT_EQ(e.raw_text(), raw);
  }
  EXPECT_THROW(parse_assertion_text("Q: orphan?"), AssertionParseError);
  EXPECT_THROW(parse_assertion_text("no headers at all"), AssertionParseError);
  EXPECT_THROW(parse_assertion_text("- Check \"Motion\"\n"), AssertionParseError);
  EXPECT_THROW(parse_assertion_text("- Check \"Other objects\"\nInput: Frame one\nQ: x?\n"),
               AssertionParseError);
  EXPECT_THROW(parse_assertion_text("- Check \"Other objects\"\nbanana\n"), AssertionParseError);
}

TEST(AssertionParse, IndexListsAreSortedAndDeduplicated) {
  const auto set = parse_assertion_text(
      "- Check \"Transition Completion\"\nInput: Frames 9, 1 and 9\nQ: Did it change?\n");
  EXPECT_EQ(set.assertions[0].frame_indices, (std::vector<int>{1, 9}));
}

TEST(AssertionParse, RenderRoundTripsHandBuiltSets) {
  AssertionSet set;
  set.assertions = {{"a1", Dimension::kCompletion, {1}, "Is it red?"},
                    {"a2", Dimension::kCompletion, {16}, "Is it blue?"},
                    {"a3", Dimension::kConsistency, {1, 11}, "Same cup?"},
                    {"a4", Dimension::kOther, {1, 6, 11}, "Same table?"}};
  EXPECT_EQ(parse_assertion_text(render_assertion_text(set)), set);
}

AssertionSet valid_set() { return parse_assertion_text(testing::read_exemplar("attribute")); }

TEST(AssertionValidate, Invariants) {
  auto s = valid_set();
  s.assertions[4].frame_indices = {1, 6, 11};
  EXPECT_THROW(validate_assertion_set(s, Category::kAttribute), ValidationError);

  s = valid_set();
  s.assertions[0].frame_indices = {0};
  EXPECT_THROW(validate_assertion_set(s, Category::kAttribute), ValidationError);

  s = valid_set();
  s.assertions[3].frame_indices = {1, 2, 3, 4, 5, 6};
  EXPECT_THROW(validate_assertion_set(s, Category::kAttribute), ValidationError);

  s = valid_set();
  s.assertions[0].question = "Is there a brown chameleon";
  EXPECT_THROW(validate_assertion_set(s, Category::kAttribute), ValidationError);

  s = valid_set();
  s.assertions[1].id = "a1";
  EXPECT_THROW(validate_assertion_set(s, Category::kAttribute), ValidationError);
}

TEST(AssertionJson, RoundTrip) {
  auto s = valid_set();
  s.prompt_id = "p";
  s.generator_fingerprint = "m/assertions-v1";
  EXPECT_EQ(assertion_set_from_json(to_json(s)), s);
}

TEST(AssertionPrompts, TemplateCarriesInstructionAndExemplars) {
  const auto system = assertion_system_prompt();
  EXPECT_NE(system.find("Given a video description, generate assertion questions"), std::string::npos);
  EXPECT_NE(system.find("A chameleon changing from brown to bright green."), std::string::npos);
  EXPECT_NE(system.find("A man passing a ball"), std::string::npos);
  EXPECT_NE(system.find("A bench by a lake"), std::string::npos);
  const auto p = testing::toy_corpus().prompts[0];
  EXPECT_EQ(assertion_user_prompt(p), p.text);
}

TEST(AssertionGenerate, ScriptedGeneratorAndCache) {
  TempDir dir;
  const auto corpus = testing::toy_corpus();
  ScriptedTextGenerator llm(testing::toy_llm_responses());
  AssertionCache cache(dir / "cache");
  const GenerationOptions options{{1, {}}, &cache};

  const auto first = generate_assertions(corpus.prompts[1], llm, options);
  EXPECT_FALSE(first.cache_hit);
  EXPECT_EQ(first.set.prompt_id, "rel-ball");
  EXPECT_EQ(first.set.assertions.size(), 8U);
  EXPECT_EQ(first.set.generator_fingerprint, "scripted-llm/assertions-v1");

  const auto second = generate_assertions(corpus.prompts[1], llm, options);
  EXPECT_TRUE(second.cache_hit);
  EXPECT_EQ(second.set, first.set);
  EXPECT_EQ(second.raw_text, first.raw_text);
  EXPECT_EQ(llm.calls(), 1U);
}

TEST(AssertionGenerate, UnknownPromptIsAProviderError) {
  ScriptedTextGenerator llm({});
  EXPECT_THROW(generate_assertions(testing::toy_corpus().prompts[0], llm, {{2, {}}, nullptr}),
               ProviderError);
  EXPECT_EQ(llm.calls(), 2U);
}

TEST(AssertionGenerate, InvalidOutputKeepsRawText) {
  const auto p = testing::toy_corpus().prompts[0];
  const std::string raw = "- Check \"Transition Completion\"\nInput: Frame 1\nQ: Is it brown?\n";
  ScriptedTextGenerator llm(std::map<std::string, std::string>{{p.text, raw}});
  try {
    generate_assertions(p, llm, {{1, {}}, nullptr});
    FAIL() << "expected AssertionParseError";
  } catch (const AssertionParseError& e) {
    EXPECT_EQ(e.raw_text(), raw);
  }
}

TEST(AssertionStore, SaveLoadRoundTrip) {
  TempDir dir;
  ScriptedTextGenerator llm(testing::toy_llm_responses());
  std::vector<GeneratedAssertions> generated;
  for (const auto& p : testing::toy_corpus().prompts) {
    generated.push_back(generate_assertions(p, llm, {{1, {}}, nullptr}));
  }
  save_assertion_store(generated, dir / "a.jsonl");
  const auto loaded = load_assertion_store(dir / "a.jsonl");
  ASSERT_EQ(loaded.size(), 3U);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(loaded[i], generated[i].set);
  EXPECT_THROW(load_assertion_store(dir / "missing.jsonl"), ValidationError);
}

}  // namespace
}  // namespace tcb::assertion
