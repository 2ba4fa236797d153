// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <atomic>
#include <mutex>

#include "tcb/verifier.hpp"
#include "toy.hpp"

namespace tcb::verifier {
namespace {

using assertion::Assertion;
using assertion::AssertionSet;
using assertion::Dimension;
using corpus::Category;
using testing::TempDir;

// Records every prompt and the composite width; answers from a queue, then
// with `fallback`.
class RecordingJudge final : public VisionJudge {
 public:
  explicit RecordingJudge(std::vector<std::string> answers = {}, std::string fallback = "Yes")
      : answers_(std::move(answers)), fallback_(std::move(fallback)) {}
  std::string ask(std::span<const std::uint8_t> png, const std::string& prompt) override {
    std::lock_guard lock(mutex_);
    prompts.push_back(prompt);
    widths.push_back(video::decode_png(png).width);
    if (next_ < answers_.size()) return answers_[next_++];
    return fallback_;
  }
  std::string model_name() const override { return "recording"; }
  std::vector<std::string> prompts;
  std::vector<int> widths;

 private:
  std::vector<std::string> answers_;
  std::string fallback_;
  std::size_t next_ = 0;
  std::mutex mutex_;
};

class FailingJudge final : public VisionJudge {
 public:
  std::string ask(std::span<const std::uint8_t>, const std::string&) override {
    ++calls;
    throw std::runtime_error("503 service unavailable");
  }
  std::string model_name() const override { return "failing"; }
  std::atomic<int> calls{0};
};

video::FrameSequence frames(int k, int width = 4) {
  video::FrameSequence seq;
  for (int i = 0; i < k; ++i) {
    seq.frames.push_back(video::solid_image(width, 2, static_cast<std::uint8_t>(i * 9), 0, 0));
  }
  return seq;
}

TEST(ParseAnswer, FirstTokenDecides) {
  EXPECT_EQ(parse_answer("Yes"), Answer::kYes);
  EXPECT_EQ(parse_answer("  no."), Answer::kNo);
  EXPECT_EQ(parse_answer("YES, the chameleon is green."), Answer::kYes);
  EXPECT_EQ(parse_answer("**No**"), Answer::kNo);
  EXPECT_EQ(parse_answer("\"Yes\""), Answer::kYes);
  EXPECT_EQ(parse_answer("Yesterday"), std::nullopt);
  EXPECT_EQ(parse_answer("Maybe"), std::nullopt);
  EXPECT_EQ(parse_answer(""), std::nullopt);
  EXPECT_EQ(parse_answer("..."), std::nullopt);
}

TEST(JudgePrompt, RendersFrameCount) {
  const JudgePromptConfig config;
  EXPECT_EQ(config.render(3, "Is it red?"),
            "The image shows 3 video frames in temporal order, left to right. Is it red? Answer "
            "with Yes or No only.");
  EXPECT_EQ(config.render(1, "Is it red?").rfind("The image shows 1 video frame in", 0), 0U);
  JudgePromptConfig other;
  other.suffix = "Yes or No?";
  EXPECT_NE(other.fingerprint(), config.fingerprint());
}

TEST(Verify, CompositeOfSelectedFrames) {
  RecordingJudge judge;
  const Assertion a{"a1", Dimension::kCompletion, {1, 5, 9}, "Did it change?"};
  const auto v = verify_assertion(a, frames(16), judge);
  EXPECT_EQ(v.answer, Answer::kYes);
  EXPECT_FALSE(v.degraded);
  ASSERT_EQ(judge.widths.size(), 1U);
  EXPECT_EQ(judge.widths[0], 12);
  EXPECT_NE(judge.prompts[0].find("3 video frames"), std::string::npos);
}

TEST(Verify, UnparsableAnswerIsRepromptedOnce) {
  RecordingJudge judge({"I think so", "No"});
  const Assertion a{"a1", Dimension::kCompletion, {1}, "Is it red?"};
  const auto v = verify_assertion(a, frames(16), judge);
  EXPECT_EQ(v.answer, Answer::kNo);
  EXPECT_FALSE(v.degraded);
  ASSERT_EQ(judge.prompts.size(), 2U);
  EXPECT_NE(judge.prompts[1].find("Reply with exactly one word: Yes or No."), std::string::npos);
}

TEST(Verify, StillUnparsableFailsClosed) {
  RecordingJudge judge({}, "Hard to say");
  JudgeCache cache;
  const Assertion a{"a1", Dimension::kCompletion, {1}, "Is it red?"};
  const auto v = verify_assertion(a, frames(16), judge, {{}, {1, {}}, &cache});
  EXPECT_EQ(v.answer, Answer::kNo);
  EXPECT_TRUE(v.degraded);
  EXPECT_EQ(v.raw_response, "Hard to say");
  EXPECT_EQ(cache.size(), 0U);
}

TEST(Verify, ProviderFailureIsDegradedNo) {
  FailingJudge judge;
  const Assertion a{"a1", Dimension::kCompletion, {1}, "Is it red?"};
  const auto v = verify_assertion(a, frames(16), judge, {{}, {3, {}}, nullptr});
  EXPECT_EQ(v.answer, Answer::kNo);
  EXPECT_TRUE(v.degraded);
  EXPECT_NE(v.raw_response.find("503"), std::string::npos);
  EXPECT_EQ(judge.calls, 3);
}

TEST(Verify, CacheAvoidsRepeatCallsAndPersists) {
  TempDir dir;
  const Assertion a{"a1", Dimension::kCompletion, {1, 16}, "Is it red?"};
  {
    RecordingJudge judge({"No"});
    JudgeCache cache(dir / "judge.jsonl");
    EXPECT_EQ(verify_assertion(a, frames(16), judge, {{}, {}, &cache}).answer, Answer::kNo);
    EXPECT_EQ(verify_assertion(a, frames(16), judge, {{}, {}, &cache}).answer, Answer::kNo);
    EXPECT_EQ(judge.prompts.size(), 1U);
  }
  RecordingJudge judge({"Yes"});
  JudgeCache reloaded(dir / "judge.jsonl");
  EXPECT_EQ(reloaded.size(), 1U);
  EXPECT_EQ(verify_assertion(a, frames(16), judge, {{}, {}, &reloaded}).answer, Answer::kNo);
  EXPECT_TRUE(judge.prompts.empty());
  // Different frames are a different key.
  EXPECT_EQ(verify_assertion(a, frames(16, 6), judge, {{}, {}, &reloaded}).answer, Answer::kYes);
}

AssertionSet small_set() {
  AssertionSet set;
  set.prompt_id = "p";
  set.assertions = {{"a1", Dimension::kCompletion, {1}, "Start?"},
                    {"a2", Dimension::kCompletion, {16}, "End?"},
                    {"a3", Dimension::kConsistency, {1, 11}, "Same?"},
                    {"a4", Dimension::kOther, {1, 6, 11}, "Others?"}};
  return set;
}

std::vector<Verdict> answers(std::initializer_list<Answer> a) {
  std::vector<Verdict> out;
  int i = 1;
  for (const auto x : a) out.push_back({"a" + std::to_string(i++), x, "", false});
  return out;
}

TEST(Metrics, OtherObjectsDoNotAffectTc) {
  const auto set = small_set();
  constexpr auto Y = Answer::kYes;
  constexpr auto N = Answer::kNo;
  EXPECT_EQ(compute_tc(answers({Y, Y, Y, N}), set), 1);
  EXPECT_EQ(compute_tc(answers({Y, Y, N, Y}), set), 0);
  EXPECT_DOUBLE_EQ(compute_tc_score_t2v(answers({Y, Y, Y, N}), set), 0.75);
}

TEST(Metrics, MissingOrDuplicateVerdictsAreErrors) {
  const auto set = small_set();
  // TC only needs the in-scope verdicts; TC-Score needs every one.
  auto v = answers({Answer::kYes, Answer::kYes, Answer::kYes});
  EXPECT_EQ(compute_tc(v, set), 1);
  EXPECT_THROW(compute_tc_score_t2v(v, set), ValidationError);
  EXPECT_THROW(compute_tc(answers({Answer::kYes, Answer::kYes}), set), ValidationError);
  v = answers({Answer::kYes, Answer::kYes, Answer::kYes, Answer::kYes});
  v.push_back(v[0]);
  EXPECT_THROW(compute_tc(v, set), ValidationError);
}

TEST(Metrics, TcrBounds) {
  const std::vector<int> tcs{1, 0, 1, 1};
  EXPECT_DOUBLE_EQ(compute_tcr(tcs), 75.0);
  EXPECT_THROW(compute_tcr(std::vector<int>{}), ValidationError);
  EXPECT_THROW(compute_tcr(std::vector<int>{2}), ValidationError);
}

TEST(EvaluateVideo, RemapsIndicesForShorterVideos) {
  RecordingJudge judge;
  VideoVerifyOptions options;
  options.max_in_flight = 1;
  const auto eval = evaluate_video(small_set(), Category::kAttribute, frames(8), "p__1", judge, options);
  EXPECT_EQ(eval.tc, 1);
  EXPECT_DOUBLE_EQ(eval.tc_score, 1.0);
  // a3 (1, 11) lands on frames 1, 6 and a4 (1, 6, 11) on 1, 3, 6 of 8.
  EXPECT_EQ(judge.widths, (std::vector<int>{4, 4, 8, 12}));
}

TEST(EvaluateVideo, ResampleFirstUsesCanonicalIndices) {
  RecordingJudge judge;
  VideoVerifyOptions options;
  options.mode = IndexMode::kResampleFirst;
  const auto eval = evaluate_video(small_set(), Category::kAttribute, frames(31), "p__1", judge, options);
  EXPECT_EQ(eval.verdicts.size(), 4U);
  EXPECT_EQ(judge.prompts.size(), 4U);
}

TEST(EvaluateVideo, ParallelResultsKeepAssertionOrder) {
  RecordingJudge judge;
  VideoVerifyOptions options;
  options.max_in_flight = 4;
  const auto eval = evaluate_video(small_set(), Category::kAttribute, frames(16), "p__1", judge, options);
  for (std::size_t i = 0; i < eval.verdicts.size(); ++i) {
    EXPECT_EQ(eval.verdicts[i].assertion_id, "a" + std::to_string(i + 1));
  }
}

VideoEvaluation eval_of(std::string prompt, std::string video, int tc, double score) {
  VideoEvaluation e;
  e.prompt_id = std::move(prompt);
  e.video_id = std::move(video);
  e.tc = tc;
  e.tc_score = score;
  return e;
}

TEST(Aggregate, OverallIsAFlatMeanOverVideos) {
  const std::vector<VideoEvaluation> evals = {eval_of("a", "a__1", 1, 1.0), eval_of("a", "a__2", 0, 0.5),
                                              eval_of("a", "a__3", 1, 0.9), eval_of("b", "b__1", 0, 0.2)};
  const std::map<std::string, Category> categories{{"a", Category::kAttribute},
                                                   {"b", Category::kBackground}};
  const auto r = aggregate_report(evals, categories, "m");
  EXPECT_DOUBLE_EQ(r.overall.tcr, 50.0);
  EXPECT_DOUBLE_EQ(r.overall.mean_tc_score, (1.0 + 0.5 + 0.9 + 0.2) / 4);
  EXPECT_EQ(r.overall.videos, 4U);
  EXPECT_NEAR(r.per_category.at(Category::kAttribute).tcr, 200.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.per_category.at(Category::kBackground).tcr, 0.0);
  EXPECT_EQ(r.per_category.count(Category::kObjectRelation), 0U);
}

TEST(Aggregate, PerPromptBestTieBreaks) {
  const std::vector<VideoEvaluation> evals = {eval_of("a", "a__2", 1, 0.8), eval_of("a", "a__1", 1, 0.8),
                                              eval_of("a", "a__3", 0, 1.0), eval_of("b", "b__1", 0, 0.2),
                                              eval_of("b", "b__2", 0, 0.4)};
  const std::map<std::string, Category> categories{{"a", Category::kAttribute},
                                                   {"b", Category::kAttribute}};
  const auto r = aggregate_report(evals, categories, "m", ReplicatePolicy::kPerPromptBest);
  EXPECT_EQ(r.overall.videos, 2U);
  EXPECT_DOUBLE_EQ(r.overall.tcr, 50.0);
  EXPECT_DOUBLE_EQ(r.overall.mean_tc_score, (0.8 + 0.4) / 2);
}

TEST(Aggregate, UnknownPromptIsAnError) {
  const std::vector<VideoEvaluation> evals = {eval_of("x", "x__1", 1, 1.0)};
  EXPECT_THROW(aggregate_report(evals, {}, "m"), ValidationError);
  EXPECT_THROW(aggregate_report(std::vector<VideoEvaluation>{}, {}, "m"), ValidationError);
}

TEST(Report, CsvLayout) {
  const std::vector<VideoEvaluation> evals = {eval_of("a", "a__1", 1, 1.0), eval_of("a", "a__2", 0, 0.5)};
  const std::vector<ModelReport> reports{aggregate_report(evals, {{"a", Category::kAttribute}}, "m")};
  EXPECT_EQ(report_csv(reports),
            "model,attribute_tcr,attribute_tc_score,object_relation_tcr,object_relation_tc_score,"
            "background_tcr,background_tc_score,overall_tcr,overall_tc_score,videos\n"
            "m,50.00,0.7500,,,,,50.00,0.7500,2\n");
}

TEST(VerdictStore, RecordsRoundTripAndRescore) {
  TempDir dir;
  RecordingJudge judge({"Yes", "No", "Yes", "Yes"});
  VideoVerifyOptions options;
  options.max_in_flight = 1;
  const auto set = small_set();
  const auto eval = evaluate_video(set, Category::kAttribute, frames(16), "p__1", judge, options);
  const auto records = records_of(eval, set);
  std::vector<Json> lines;
  for (const auto& r : records) lines.push_back(to_json(r));
  write_file_atomic(dir / "v.jsonl", to_jsonl(lines));

  const auto loaded = load_verdicts(dir / "v.jsonl");
  ASSERT_EQ(loaded.size(), 4U);
  EXPECT_EQ(loaded[1].verdict.answer, Answer::kNo);
  EXPECT_EQ(loaded[3].assertion.frame_indices, (std::vector<int>{1, 6, 11}));
  const auto again = evaluations_from_records(loaded);
  ASSERT_EQ(again.size(), 1U);
  EXPECT_EQ(again[0].tc, eval.tc);
  EXPECT_DOUBLE_EQ(again[0].tc_score, eval.tc_score);
  EXPECT_THROW(load_verdicts(dir / "none.jsonl"), ValidationError);
}

TEST(VerdictStore, BadAnswerReportsLine) {
  TempDir dir;
  write_file_atomic(dir / "v.jsonl",
                    "{\"prompt_id\":\"p\",\"video_id\":\"v\",\"category\":\"attribute\","
                    "\"assertion_id\":\"a1\",\"dimension\":\"completion\",\"answer\":\"Maybe\"}\n");
  try {
    load_verdicts(dir / "v.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1U);
  }
}

}  // namespace
}  // namespace tcb::verifier
