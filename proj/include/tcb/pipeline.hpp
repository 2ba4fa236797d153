// Copyright 2026 The tcb Authors
// SPDX-License-Identifier: Apache-2.0

// Stage drivers shared by the command-line tool and the Python module:
// frame directories in, verdict stores and score reports out.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tcb/assertion.hpp"
#include "tcb/consistency.hpp"
#include "tcb/corpus.hpp"
#include "tcb/verifier.hpp"

namespace tcb::pipeline {

// Generated videos are named `<prompt_id>__<replicate>`; a name without the
// separator is its own prompt id.
std::string prompt_id_of(std::string_view video_id);

// Subdirectories of `root` holding frame_0001.png, sorted by name. `root`
// itself is returned when it is a frame directory.
std::vector<std::filesystem::path> frame_dirs(const std::filesystem::path& root);

// Video files (.mp4 .avi .mov .mkv .webm .gif) directly under `dir`, sorted.
std::vector<std::filesystem::path> video_files(const std::filesystem::path& dir);

struct ExtractResult {
  std::size_t extracted = 0;
  std::size_t reused = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // (file, reason)
};

// Writes `<out>/<stem>/frame_NNNN.png` per video. A directory whose recorded
// content key matches is reused as is.
ExtractResult extract_stage(const std::filesystem::path& videos, const std::filesystem::path& out,
                            double fps, int count);

struct VerifyStageOptions {
  verifier::VideoVerifyOptions video{};
  double fps = 8.0;
};

struct VerifyStageResult {
  std::vector<verifier::VideoEvaluation> evaluations;
  std::vector<verifier::VerdictRecord> records;
  std::vector<std::string> skipped;  // videos without an assertion set
};

// Verifies every video under `frames_root` against the assertion set of its
// prompt. Videos are processed in name order.
VerifyStageResult verify_stage(const std::vector<assertion::AssertionSet>& sets,
                               const corpus::CorpusManifest& corpus,
                               const std::filesystem::path& frames_root, VisionJudge& vlm,
                               const VerifyStageOptions& options);

void write_verdicts(const std::vector<verifier::VerdictRecord>& records,
                    const std::filesystem::path& path);

// Per-video frame embeddings on disk: `<dir>/<video_id>.json` with
// {"fingerprint", "vectors"}.
void save_embeddings(const std::vector<consistency::EmbeddingVector>& vectors,
                     const std::filesystem::path& path);
std::vector<consistency::EmbeddingVector> load_embeddings(const std::filesystem::path& path);

enum class ScoreMode { kT2V, kI2V };
enum class ReferenceMode { kConsecutive, kGroundTruth };

struct ScoreOptions {
  ScoreMode mode = ScoreMode::kT2V;
  verifier::ReplicatePolicy policy = verifier::ReplicatePolicy::kAllVideos;
  std::string model;
  // I2V only.
  std::optional<std::filesystem::path> embeddings_dir;
  ReferenceMode reference = ReferenceMode::kConsecutive;
  std::optional<std::filesystem::path> ground_truth_dir;  // looked up by prompt id
  consistency::SimilarityRange range{};
  consistency::Weights weights{};
  int frames = 16;
};

// Scores a verdict store. Throws ValidationError with an actionable message
// when I2V inputs are missing.
Json score_stage(const std::vector<verifier::VerdictRecord>& records, const ScoreOptions& options);

}  // namespace tcb::pipeline
