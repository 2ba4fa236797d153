// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "tcb/analysis.hpp"
#include "tcb/error.hpp"
#include "toy.hpp"

namespace tcb::analysis {
namespace {

TEST(Ratings, CsvParsesAndRoundTrips) {
  const auto r = parse_ratings_csv("\xEF\xBB\xBFvideo_id,annotator_id,q1,q2\nv2,b,4,5\n\nv1,a,1,2\n");
  ASSERT_EQ(r.size(), 2U);
  EXPECT_EQ(r[0], (HumanRating{"v2", "b", 4, 5}));
  EXPECT_EQ(ratings_csv(r), "video_id,annotator_id,q1,q2\nv1,a,1,2\nv2,b,4,5\n");
  EXPECT_EQ(parse_ratings_csv(ratings_csv(r)).size(), 2U);
}

TEST(Ratings, CsvErrorsCarryLineNumbers) {
  const auto line_of = [](const char* text) -> std::size_t {
    try {
      parse_ratings_csv(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("video,annotator,q1,q2\n"), 1U);
  EXPECT_EQ(line_of("video_id,annotator_id,q1,q2\nv,a,6,1\n"), 2U);
  EXPECT_EQ(line_of("video_id,annotator_id,q1,q2\nv,a,1,1\nv,a,2,2\n"), 3U);
  EXPECT_EQ(line_of("video_id,annotator_id,q1,q2\nv,a,x,1\n"), 2U);
  EXPECT_EQ(line_of("video_id,annotator_id,q1,q2\nv,a,1\n"), 2U);
}

TEST(Aggregate, ThresholdsAndDiscards) {
  const std::vector<HumanRating> r{
      {"a", "x", 4, 4}, {"a", "y", 4, 4}, {"a", "z", 3, 4},   // mean 3.67 -> completed
      {"b", "x", 1, 3}, {"b", "y", 5, 3}, {"b", "z", 3, 3},   // q1 spread 4 -> discarded
      {"c", "x", 4, 2}, {"c", "y", 4, 2}, {"c", "z", 3, 5},   // q2 spread 3 -> discarded
      {"d", "x", 4, 4}, {"d", "y", 3, 4}, {"d", "z", 4, 3},   // 3.67
      {"e", "x", 4, 1}, {"e", "y", 4, 1}, {"e", "z", 3, 1},
      {"f", "x", 3, 1}, {"f", "y", 4, 1}, {"f", "z", 4, 1}, {"f", "w", 3, 1}};  // 3.5
  const auto agg = aggregate_ratings(r);
  ASSERT_EQ(agg.discarded.size(), 2U);
  EXPECT_EQ(agg.discarded[0].video_id, "b");
  EXPECT_EQ(agg.discarded[1].video_id, "c");
  const auto* a = agg.find("a");
  ASSERT_NE(a, nullptr);
  EXPECT_NEAR(a->mean_q1, 11.0 / 3.0, 1e-12);
  EXPECT_TRUE(a->completed);
  EXPECT_TRUE(a->consistency_eligible);
  const auto* f = agg.find("f");
  ASSERT_NE(f, nullptr);
  EXPECT_EQ(f->annotators, 4U);
  EXPECT_FALSE(f->completed);
  EXPECT_FALSE(f->consistency_eligible);
  EXPECT_EQ(agg.find("b"), nullptr);

  AggregationRule loose;
  loose.consistency_floor = 3.5;
  EXPECT_TRUE(aggregate_ratings(r, loose).find("f")->consistency_eligible);
}

TEST(Aggregate, DuplicateAndInvalidRatingsFail) {
  const std::vector<HumanRating> dup{{"a", "x", 4, 4}, {"a", "x", 3, 3}};
  EXPECT_THROW(aggregate_ratings(dup), ValidationError);
  const std::vector<HumanRating> bad{{"a", "x", 0, 4}};
  EXPECT_THROW(aggregate_ratings(bad), ValidationError);
}

TEST(Ranks, AverageRanksForTies) {
  const std::vector<double> v{10, 20, 10, 30, 20};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{1.5, 3.5, 1.5, 5, 3.5}));
}

TEST(Ranks, KnownCorrelations) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{2, 1, 4, 3, 5};
  const auto r = rank_correlation(x, y);
  // d^2 = 1 + 1 + 1 + 1 = 4, rho = 1 - 6 * 4 / 120; 8 concordant, 2 discordant.
  EXPECT_NEAR(r.spearman_rho, 0.8, 1e-12);
  EXPECT_NEAR(r.kendall_tau, 0.6, 1e-12);
  EXPECT_EQ(r.n, 5U);
  const std::vector<double> c{1, 1, 1, 1, 1};
  EXPECT_THROW(rank_correlation(x, c), ValidationError);
  EXPECT_THROW(rank_correlation(std::span(x).first(1), std::span(y).first(1)), ValidationError);
  EXPECT_THROW(rank_correlation(x, std::span(y).first(4)), ValidationError);
}

TEST(Ranks, InterAnnotatorAveragesPairs) {
  const std::vector<HumanRating> r{{"v1", "a", 1, 1}, {"v2", "a", 2, 1}, {"v3", "a", 3, 1},
                                   {"v1", "b", 1, 1}, {"v2", "b", 2, 1}, {"v3", "b", 3, 1},
                                   {"v1", "c", 3, 1}, {"v2", "c", 2, 1}, {"v3", "c", 1, 1}};
  const auto q1 = inter_annotator_correlation(r);
  EXPECT_EQ(q1.pairs, 3U);
  EXPECT_NEAR(q1.mean.spearman_rho, (1.0 - 1.0 - 1.0) / 3.0, 1e-12);
  EXPECT_THROW(inter_annotator_correlation(r, Question::kQ2), ValidationError);
}

TEST(Ranks, CorrelationReportMatchesByVideo) {
  const std::vector<HumanRating> r{{"v1", "a", 1, 5}, {"v2", "a", 3, 3}, {"v3", "a", 5, 1}};
  const auto agg = aggregate_ratings(r);
  const auto report = correlation_report({{"v1", 0.1}, {"v2", 0.2}, {"v3", 0.3}, {"zz", 1.0}}, agg, "m");
  EXPECT_EQ(report["videos_matched"], 3);
  EXPECT_NEAR(report["q1"]["spearman"].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(report["q2"]["kendall"].get<double>(), -1.0, 1e-12);
  const auto partial = correlation_report({{"v1", 0.1}}, agg, "m");
  EXPECT_TRUE(partial["q1"]["spearman"].is_null());
  EXPECT_TRUE(partial["q1"].contains("error"));
}

TEST(Curves, AttributeCaptionsTrackTheTransition) {
  const auto prompt = testing::toy_corpus().prompts[0];
  EXPECT_EQ(attribute_captions(prompt).first, "a brown chameleon");
  EXPECT_EQ(attribute_captions(prompt).second, "a bright green chameleon");

  HistogramEmbedder embedder(4);
  video::FrameSequence seq;
  seq.frames = {video::solid_image(4, 4, 130, 80, 30), video::solid_image(4, 4, 30, 200, 30)};
  const auto embeds = consistency::embed_frames(seq, embedder);
  const auto [start, end] = attribute_curves(prompt, embeds, embedder);
  EXPECT_NEAR(start.values[0], 1.0, 1e-9);
  EXPECT_NEAR(end.values[1], 1.0, 1e-9);
  EXPECT_EQ(trend_sign(start), -1);
  EXPECT_EQ(trend_sign(end), 1);
  EXPECT_THROW(attribute_curves(testing::toy_corpus().prompts[1], embeds, embedder),
               ValidationError);
}

TEST(Curves, MeanAndCsv) {
  const std::vector<CurveSeries> c{{"a", {1, 2}}, {"b", {3, 4}}};
  EXPECT_EQ(mean_curve(c, "m").values, (std::vector<double>{2, 3}));
  EXPECT_EQ(curves_csv(c), "index,a,b\n1,1,3\n2,2,4\n");
  const std::vector<CurveSeries> ragged{{"a", {1, 2}}, {"b", {3}}};
  EXPECT_THROW(mean_curve(ragged, "m"), ValidationError);
  EXPECT_EQ(curves_csv(ragged), "index,a,b\n1,1,3\n2,2,\n");
  EXPECT_EQ(trend_sign({"flat", {1, 5, 1}}), 0);
}

TEST(Dynamics, MasksStaticPixels) {
  consistency::FlowField moving(2, 1);
  moving.u = {3.0F, 0.5F};
  moving.v = {4.0F, 0.0F};
  consistency::FlowField still(2, 1);
  const std::vector<consistency::FlowField> flows{moving, still};
  const auto d = dynamics_degree(flows);
  EXPECT_DOUBLE_EQ(d.degree, 5.0 / 2.0);
  EXPECT_EQ(d.all_masked_frames, (std::vector<std::size_t>{2}));
  EXPECT_DOUBLE_EQ(dynamics_degree(flows, 0.1).degree, (5.0 + 0.5) / 2.0 / 2.0);
  EXPECT_THROW(dynamics_degree({}), ValidationError);
}

}  // namespace
}  // namespace tcb::analysis
