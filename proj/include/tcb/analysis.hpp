// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

// Human-rating aggregation, rank correlations, caption curves and dynamics
// degree.

#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tcb/consistency.hpp"
#include "tcb/corpus.hpp"
#include "tcb/io.hpp"
#include "tcb/providers.hpp"

namespace tcb::analysis {

struct HumanRating {
  std::string video_id;
  std::string annotator_id;
  int q1 = 0;  // transition completion, 1..5
  int q2 = 0;  // overall text-video alignment, 1..5

  bool operator==(const HumanRating&) const = default;
};

void validate_rating(const HumanRating& rating);

// Header video_id,annotator_id,q1,q2. Throws ParseError with the line number
// on malformed rows and ValidationError on duplicate (video, annotator).
std::vector<HumanRating> parse_ratings_csv(std::string_view text);
std::vector<HumanRating> read_ratings_csv(const std::filesystem::path& path);
// Rows sorted by video_id, then annotator_id.
std::string ratings_csv(std::vector<HumanRating> ratings);

struct AggregationRule {
  int divisive_spread = 3;             // discard when max - min >= spread on either question
  double completion_threshold = 3.66;  // completed when mean q1 > threshold
  double consistency_floor = 3.6;      // consistency-eligible when mean q1 >= floor
};

struct VideoRatings {
  std::string video_id;
  std::size_t annotators = 0;
  double mean_q1 = 0.0;
  double mean_q2 = 0.0;
  bool completed = false;
  bool consistency_eligible = false;
};

struct Discard {
  std::string video_id;
  std::string reason;
};

struct AggregatedRatings {
  std::vector<VideoRatings> videos;  // sorted by video_id
  std::vector<Discard> discarded;

  const VideoRatings* find(std::string_view video_id) const;
};

AggregatedRatings aggregate_ratings(std::span<const HumanRating> ratings,
                                    const AggregationRule& rule = {});

struct CorrelationResult {
  double spearman_rho = 0.0;
  double kendall_tau = 0.0;
  std::size_t n = 0;
};

// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

// Spearman rho (Pearson on average ranks) and Kendall tau-b. Throws
// ValidationError on length mismatch, n < 2, or zero variance.
CorrelationResult rank_correlation(std::span<const double> metric, std::span<const double> human);

// Mean of rho and tau over `results`; n is the summed sample count.
CorrelationResult mean_correlation(std::span<const CorrelationResult> results);

enum class Question { kQ1, kQ2 };

struct InterAnnotatorResult {
  CorrelationResult mean;
  std::size_t pairs = 0;
  std::size_t skipped_pairs = 0;  // overlap < 2 or constant ratings
};

// Mean pairwise correlation over annotator pairs, each restricted to the
// videos both rated. Throws ValidationError when no pair is usable.
InterAnnotatorResult inter_annotator_correlation(std::span<const HumanRating> ratings,
                                                 Question question = Question::kQ1);

// Correlates per-video metric scores with mean human ratings for both
// questions, on the videos present in both. Returns the two-question by
// two-statistic grid as JSON.
Json correlation_report(const std::map<std::string, double>& metric_scores,
                        const AggregatedRatings& human, std::string_view metric_name);

struct CurveSeries {
  std::string name;
  std::vector<double> values;  // index 0 is frame 1
};

// "a {start} {object}" and "a {end} {object}".
std::pair<std::string, std::string> attribute_captions(const corpus::TransitionPrompt& prompt);

// Per-frame similarity to the start and end captions. Throws ValidationError
// for non-attribute prompts.
std::pair<CurveSeries, CurveSeries> attribute_curves(
    const corpus::TransitionPrompt& prompt, std::span<const consistency::EmbeddingVector> embeds,
    EmbeddingProvider& provider);

// Similarity of each frame to the next (K - 1 values).
CurveSeries consecutive_curve(std::span<const consistency::EmbeddingVector> embeds,
                              std::string name = "consecutive");

// Element-wise mean of equal-length curves.
CurveSeries mean_curve(std::span<const CurveSeries> curves, std::string name);

// Sign of (last - first): -1, 0 or 1.
int trend_sign(const CurveSeries& curve);

// CSV with an index column (1-based) and one column per series; shorter
// series leave trailing cells empty.
std::string curves_csv(std::span<const CurveSeries> curves);

struct DynamicsResult {
  double degree = 0.0;
  std::vector<std::size_t> all_masked_frames;  // 1-based
};

// Per frame: mean magnitude over pixels with magnitude > threshold (0 when
// every pixel is masked); then the mean over frames.
DynamicsResult dynamics_degree(std::span<const consistency::FlowField> flows,
                               double static_threshold = 1.0);

}  // namespace tcb::analysis
