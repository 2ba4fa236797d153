// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

// Judge-based verification of assertions and the transition-completion
// metrics computed from the resulting verdicts.

#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tcb/assertion.hpp"
#include "tcb/corpus.hpp"
#include "tcb/io.hpp"
#include "tcb/providers.hpp"
#include "tcb/video_io.hpp"

namespace tcb::verifier {

enum class Answer { kYes, kNo };

std::string_view to_string(Answer answer);

struct Verdict {
  std::string assertion_id;
  Answer answer = Answer::kNo;
  std::string raw_response;
  bool degraded = false;  // fail-closed No after judge failure

  bool operator==(const Verdict&) const = default;
};

// First token of the response, case-insensitive, punctuation stripped.
std::optional<Answer> parse_answer(std::string_view response);

struct JudgePromptConfig {
  // `{n}` is replaced by the number of frames in the composite.
  std::string preamble = "The image shows {n} video frames in temporal order, left to right.";
  std::string suffix = "Answer with Yes or No only.";

  std::string render(std::size_t frame_count, std::string_view question) const;
  std::string fingerprint() const;
};

// Raw judge responses keyed by (image hash, question hash, model). Backed by
// an append-only JSON-lines file when a path is given.
class JudgeCache {
 public:
  JudgeCache() = default;
  explicit JudgeCache(std::filesystem::path path);

  static std::string key(std::string_view image_hash, std::string_view prompt,
                         std::string_view model);
  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& response);
  std::size_t size() const;

 private:
  std::map<std::string, std::string> entries_;
  std::optional<JsonlAppender> journal_;
  mutable std::mutex mutex_;
};

struct VerifyOptions {
  JudgePromptConfig prompt{};
  RetryPolicy retry{};
  JudgeCache* cache = nullptr;
};

// `assertion` indices must already refer to `seq` (remapped or resampled).
Verdict verify_assertion(const assertion::Assertion& assertion, const video::FrameSequence& seq,
                         VisionJudge& vlm, const VerifyOptions& options = {});

// 1 iff every completion and consistency verdict is Yes. Other-object
// verdicts are ignored. Throws ValidationError when an in-scope assertion has
// no verdict or more than one.
int compute_tc(std::span<const Verdict> verdicts, const assertion::AssertionSet& assertions);

// Mean TC over videos, as a percentage. Throws on an empty list.
double compute_tcr(std::span<const int> tcs);

// Pass rate over all assertions (all three dimensions).
double compute_tc_score_t2v(std::span<const Verdict> verdicts,
                            const assertion::AssertionSet& assertions);

struct VideoEvaluation {
  std::string prompt_id;
  std::string video_id;
  corpus::Category category = corpus::Category::kAttribute;
  std::vector<Verdict> verdicts;
  int tc = 0;
  double tc_score = 0.0;
  // I2V only: the assertion pass rate before weighting with consistency.
  std::optional<double> pass_rate;
  std::optional<double> consistency;

  std::size_t degraded_count() const;
};

enum class IndexMode { kRemap, kResampleFirst };

struct VideoVerifyOptions {
  VerifyOptions verify{};
  IndexMode mode = IndexMode::kRemap;
  std::size_t max_in_flight = 4;
  RateLimiter* limiter = nullptr;
};

// Verifies every assertion of `set` against `seq` and scores the video
// (T2V TC-Score).
VideoEvaluation evaluate_video(const assertion::AssertionSet& set, corpus::Category category,
                               const video::FrameSequence& seq, std::string video_id,
                               VisionJudge& vlm, const VideoVerifyOptions& options = {});

struct CategoryStats {
  double tcr = 0.0;
  double mean_tc_score = 0.0;
  std::size_t videos = 0;
};

struct ModelReport {
  std::string model;
  std::map<corpus::Category, CategoryStats> per_category;
  CategoryStats overall;
  std::size_t degraded_verdicts = 0;
  std::size_t total_verdicts = 0;
};

enum class ReplicatePolicy { kAllVideos, kPerPromptBest };

// Overall values are flat means over all videos, never means of category
// means. Throws ValidationError for an empty list or unknown prompt id.
ModelReport aggregate_report(std::span<const VideoEvaluation> evals,
                             const std::map<std::string, corpus::Category>& categories,
                             std::string model = {},
                             ReplicatePolicy policy = ReplicatePolicy::kAllVideos);

Json to_json(const ModelReport& report);
// Table-shaped CSV: one row per report with per-category and overall
// TCR / TC-Score columns.
std::string report_csv(std::span<const ModelReport> reports);

// Verdict store: one record per (video, assertion), self-describing so that
// scoring needs no other input.
struct VerdictRecord {
  std::string prompt_id;
  std::string video_id;
  corpus::Category category = corpus::Category::kAttribute;
  assertion::Assertion assertion;
  Verdict verdict;
};

Json to_json(const VerdictRecord& record);
VerdictRecord verdict_record_from_json(const Json& json);
std::vector<VerdictRecord> records_of(const VideoEvaluation& eval,
                                      const assertion::AssertionSet& set);
std::vector<VerdictRecord> load_verdicts(const std::filesystem::path& path);

// Groups records by video and recomputes TC / TC-Score (T2V form).
std::vector<VideoEvaluation> evaluations_from_records(std::span<const VerdictRecord> records);

}  // namespace tcb::verifier
